#pragma once

#include <cstdint>
#include <limits>
#include <vector>

namespace gels {

// Dense viewer index, stable within one event.
using ViewerId = std::uint32_t;

// Sentinel provider id for edges served directly by the CDN.
inline constexpr ViewerId kCdnId = std::numeric_limits<ViewerId>::max();

// Provider links a viewer may hold per minute.
inline constexpr int kDefaultMaxDegree = 2;

inline bool is_cdn(ViewerId id) { return id == kCdnId; }

// One provider connection: src is the receiving viewer, dst the provider
// (a viewer or the CDN sentinel).
struct ConnectionEdge {
  ViewerId src = 0;
  ViewerId dst = 0;
  double throughput_mbps = 0.0;
  int minute = 0;

  friend bool operator==(const ConnectionEdge&, const ConnectionEdge&) = default;
};

struct ProviderLink {
  ViewerId provider = 0;
  double throughput_mbps = 0.0;
  double qoe = 0.0;

  friend bool operator==(const ProviderLink&, const ProviderLink&) = default;
};

// The provider edges of one viewer at one minute, ordered by ascending
// provider id so downstream consumers see a reproducible input order.
struct Neighborhood {
  ViewerId viewer = 0;
  int minute = 0;
  std::vector<ProviderLink> providers;

  bool empty() const { return providers.empty(); }
};

}  // namespace gels
