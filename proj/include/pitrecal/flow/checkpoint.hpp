#pragma once

#include <filesystem>

#include "pitrecal/flow/coupling.hpp"

namespace pitrecal::flow {

// Checkpoint layout: the 8 bytes "PITFLOW\n", the header length as a
// little-endian uint64, a JSON header (architecture, masks, conditioning
// columns and standardization, provenance, parameter count and digest), then
// the parameters as little-endian float64.
void save_flow(const std::filesystem::path& path, const CouplingFlow& flow);
CouplingFlow load_flow(const std::filesystem::path& path);

}  // namespace pitrecal::flow
