#pragma once

#include <string>

#include "dpcn/hierarchy.hpp"

namespace dpcn {

inline constexpr const char* kModelVersion = "dpcn-1";

// JSON model file: version tag, topology, per-layer sizes, hyper
// parameters and parameter matrices (row-major nested arrays). Doubles
// round-trip exactly. Loading rebuilds block wiring from the topology
// and returns a network with fresh context.
void save_model(const Network& net, const std::string& path);
Network load_model(const std::string& path);

}  // namespace dpcn
