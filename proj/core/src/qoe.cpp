#include "gels/qoe.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gels {

const char* to_string(QoeLabel label) {
  switch (label) {
    case QoeLabel::Bad: return "bad";
    case QoeLabel::Poor: return "poor";
    case QoeLabel::Fair: return "fair";
    case QoeLabel::Good: return "good";
    case QoeLabel::Excellent: return "excellent";
  }
  return "?";
}

const char* to_string(ConnectionLevel level) {
  switch (level) {
    case ConnectionLevel::Low: return "low";
    case ConnectionLevel::Medium: return "medium";
    case ConnectionLevel::High: return "high";
  }
  return "?";
}

double label_center(QoeLabel label) {
  return 0.1 + 0.2 * static_cast<int>(label);
}

int count_rebuffers(std::span<const double> segment_megabits,
                    double bandwidth_mbps, double buffer_seconds) {
  if (bandwidth_mbps <= 0.0) {
    // Limit convention: zero bandwidth stalls every segment.
    return static_cast<int>(segment_megabits.size());
  }
  int stalls = 0;
  for (double megabits : segment_megabits) {
    if (megabits / bandwidth_mbps > buffer_seconds) ++stalls;
  }
  return stalls;
}

int count_rebuffers(const SegmentTrace& trace) {
  std::vector<double> sizes;
  sizes.reserve(trace.segments.size());
  for (const Segment& s : trace.segments) sizes.push_back(s.megabits);
  return count_rebuffers(sizes, trace.bandwidth_mbps, trace.buffer_seconds);
}

double avg_quality(const SegmentTrace& trace) {
  if (trace.segments.empty()) {
    throw std::domain_error("avg_quality: empty segment trace");
  }
  double sum = 0.0;
  for (const Segment& s : trace.segments) sum += s.quality;
  return sum / static_cast<double>(trace.segments.size());
}

double avg_variation(const SegmentTrace& trace) {
  const std::size_t k = trace.segments.size();
  if (k < 2) {
    throw std::domain_error("avg_variation: need at least two segments");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i + 1 < k; ++i) {
    sum += std::abs(static_cast<double>(trace.segments[i + 1].quality) -
                    static_cast<double>(trace.segments[i].quality));
  }
  return sum / static_cast<double>(k - 1);
}

double qoe(const SegmentTrace& trace, const QoeConfig& cfg) {
  return avg_quality(trace) - cfg.lambda * avg_variation(trace) -
         cfg.mu * count_rebuffers(trace);
}

double normalize_qoe(double value, const QoeConfig& cfg) {
  return std::clamp(value / cfg.q_max, 0.0, 1.0);
}

std::optional<double> viewer_qoe(const Neighborhood& neigh) {
  if (neigh.providers.empty()) return std::nullopt;
  double sum = 0.0;
  for (const ProviderLink& p : neigh.providers) sum += p.qoe;
  return sum / static_cast<double>(neigh.providers.size());
}

QoeLabel label_of(double normalized) {
  const double x = std::clamp(normalized, 0.0, 1.0);
  if (x < 0.2) return QoeLabel::Bad;
  if (x < 0.4) return QoeLabel::Poor;
  if (x < 0.6) return QoeLabel::Fair;
  if (x < 0.8) return QoeLabel::Good;
  return QoeLabel::Excellent;
}

ConnectionLevel connection_level(double throughput_mbps) {
  if (throughput_mbps < 5.0) return ConnectionLevel::Low;
  if (throughput_mbps <= 10.0) return ConnectionLevel::Medium;
  return ConnectionLevel::High;
}

KlDivergence kl_divergence(const std::map<ViewerId, double>& qoe_prev,
                           const std::map<ViewerId, double>& qoe_next) {
  KlDivergence out;
  bool any_common = false;
  for (const auto& [provider, next_raw] : qoe_next) {
    const auto it = qoe_prev.find(provider);
    if (it == qoe_prev.end()) continue;
    any_common = true;
    const double next = std::max(next_raw, kKlFloor);
    const double prev = std::max(it->second, kKlFloor);
    out.value += next * std::log(next / prev);
  }
  if (!any_common) {
    out.value = 0.0;
    out.disjoint_support = true;
  }
  return out;
}

}  // namespace gels
