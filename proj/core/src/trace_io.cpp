#include <algorithm>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "gels/sim.hpp"

namespace gels {

namespace {

using ordered_json = nlohmann::ordered_json;

ordered_json record_to_json(const EdgeRecord& rec) {
  ordered_json j;
  j["minute"] = rec.edge.minute;
  j["src"] = rec.edge.src;
  if (is_cdn(rec.edge.dst)) {
    j["dst"] = "CDN";
  } else {
    j["dst"] = rec.edge.dst;
  }
  j["throughput_mbps"] = rec.edge.throughput_mbps;
  ordered_json segments = ordered_json::array();
  for (const Segment& s : rec.segments.segments) {
    ordered_json seg;
    seg["q"] = s.quality;
    seg["bits_mb"] = s.megabits;
    segments.push_back(std::move(seg));
  }
  j["segments"] = std::move(segments);
  j["rebuffers"] = rec.rebuffers;
  return j;
}

double median(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const std::size_t k = values.size();
  if (k == 0) return 0.0;
  if (k % 2 == 1) return values[k / 2];
  return 0.5 * (values[k / 2 - 1] + values[k / 2]);
}

}  // namespace

void save_event_trace(const EventTrace& trace, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("save_event_trace: cannot open " + path.string());
  }
  ordered_json header;
  header["n"] = trace.n;
  header["T"] = trace.minutes;
  header["offices"] = trace.office_of;
  out << header.dump() << '\n';
  for (const auto& recs : trace.records) {
    for (const EdgeRecord& rec : recs) {
      out << record_to_json(rec).dump() << '\n';
    }
  }
  if (!out) {
    throw std::runtime_error("save_event_trace: write failed for " + path.string());
  }
}

EventTrace load_event_trace(const std::filesystem::path& path,
                            const SimParams& sim, int max_degree) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("load_event_trace: cannot open " + path.string());
  }

  int line_no = 0;
  std::string line;
  auto next_line = [&]() -> bool {
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty()) return true;
    }
    return false;
  };
  auto fail = [&](const std::string& what) -> void {
    throw TraceParseError(what, line_no);
  };

  if (!next_line()) fail("missing header line");
  ordered_json header = ordered_json::parse(line, nullptr, false);
  if (header.is_discarded() || !header.is_object()) fail("header is not valid JSON");
  if (!header.contains("n") || !header.contains("T") || !header.contains("offices")) {
    fail("header must carry n, T and offices");
  }

  EventTrace trace;
  trace.max_degree = max_degree;
  trace.n = header["n"].get<std::uint32_t>();
  trace.minutes = header["T"].get<int>();
  trace.office_of = header["offices"].get<std::vector<std::uint32_t>>();
  if (trace.n == 0) fail("header: n must be positive");
  if (trace.minutes < 1) fail("header: T must be positive");
  if (trace.office_of.size() != trace.n) fail("header: offices must list n entries");
  trace.records.resize(static_cast<std::size_t>(trace.minutes));

  double max_cdn_throughput = 0.0;
  std::map<std::pair<ViewerId, ViewerId>, double> observed;

  while (next_line()) {
    ordered_json j = ordered_json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) fail("record is not valid JSON");
    for (const char* key :
         {"minute", "src", "dst", "throughput_mbps", "segments", "rebuffers"}) {
      if (!j.contains(key)) fail(std::string("record missing field '") + key + "'");
    }

    EdgeRecord rec;
    rec.edge.minute = j["minute"].get<int>();
    if (rec.edge.minute < 1 || rec.edge.minute > trace.minutes) {
      fail("record minute outside [1, T]");
    }
    rec.edge.src = j["src"].get<ViewerId>();
    if (rec.edge.src >= trace.n) fail("record src out of range");
    if (j["dst"].is_string()) {
      if (j["dst"].get<std::string>() != "CDN") fail("record dst must be an id or \"CDN\"");
      rec.edge.dst = kCdnId;
    } else {
      rec.edge.dst = j["dst"].get<ViewerId>();
      if (rec.edge.dst >= trace.n) fail("record dst out of range");
      if (rec.edge.dst == rec.edge.src) fail("record is a self loop");
    }
    rec.edge.throughput_mbps = j["throughput_mbps"].get<double>();
    if (!(rec.edge.throughput_mbps >= 0.0) ||
        !std::isfinite(rec.edge.throughput_mbps)) {
      fail("record throughput must be finite and nonnegative");
    }
    if (!j["segments"].is_array() || j["segments"].empty()) {
      fail("record needs a nonempty segments array");
    }
    for (const auto& seg : j["segments"]) {
      if (!seg.contains("q") || !seg.contains("bits_mb")) {
        fail("segment missing q or bits_mb");
      }
      Segment s;
      s.quality = seg["q"].get<int>();
      s.megabits = seg["bits_mb"].get<double>();
      if (s.quality < 1) fail("segment quality below ladder");
      if (!(s.megabits >= 0.0)) fail("segment size must be nonnegative");
      rec.segments.segments.push_back(s);
    }
    rec.segments.bandwidth_mbps = rec.edge.throughput_mbps;
    rec.segments.buffer_seconds = sim.buffer_seconds;
    rec.rebuffers = j["rebuffers"].get<int>();
    if (rec.rebuffers < 0 ||
        rec.rebuffers > static_cast<int>(rec.segments.segments.size())) {
      fail("record rebuffers outside [0, K]");
    }

    if (is_cdn(rec.edge.dst)) {
      max_cdn_throughput = std::max(max_cdn_throughput, rec.edge.throughput_mbps);
    } else {
      const auto key = std::minmax(rec.edge.src, rec.edge.dst);
      auto [it, inserted] = observed.try_emplace({key.first, key.second},
                                                 rec.edge.throughput_mbps);
      if (!inserted) it->second = std::max(it->second, rec.edge.throughput_mbps);
    }
    trace.records[static_cast<std::size_t>(rec.edge.minute) - 1].push_back(
        std::move(rec));
  }

  for (auto& recs : trace.records) {
    std::sort(recs.begin(), recs.end(), [](const EdgeRecord& a, const EdgeRecord& b) {
      return a.edge.src < b.edge.src ||
             (a.edge.src == b.edge.src && a.edge.dst < b.edge.dst);
    });
  }

  // Rebuild the pair-capacity matrix: observed pairs carry their maximum
  // observed throughput; unobserved pairs are imputed from the median
  // observed intra-office / inter-office throughput.
  trace.cdn_capacity = max_cdn_throughput;
  trace.bandwidth.assign(static_cast<std::size_t>(trace.n) * trace.n, 0.0);
  std::vector<double> intra_obs;
  std::vector<double> inter_obs;
  std::vector<double> all_obs;
  for (const auto& [pair, mbps] : observed) {
    const bool same_office = trace.office_of[pair.first] == trace.office_of[pair.second];
    (same_office ? intra_obs : inter_obs).push_back(mbps);
    all_obs.push_back(mbps);
  }
  const double global_med = all_obs.empty() ? 1.0 : median(all_obs);
  const double intra_med = intra_obs.empty() ? global_med : median(intra_obs);
  const double inter_med = inter_obs.empty() ? global_med : median(inter_obs);
  for (ViewerId u = 0; u < trace.n; ++u) {
    for (ViewerId v = u + 1; v < trace.n; ++v) {
      const bool same_office = trace.office_of[u] == trace.office_of[v];
      trace.set_bandwidth(u, v, same_office ? intra_med : inter_med);
    }
  }
  for (const auto& [pair, mbps] : observed) {
    trace.set_bandwidth(pair.first, pair.second, mbps);
  }

  try {
    validate_trace(trace);
  } catch (const std::invalid_argument& e) {
    throw TraceParseError(e.what(), line_no);
  }
  return trace;
}

}  // namespace gels
