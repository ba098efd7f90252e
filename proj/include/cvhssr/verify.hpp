#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace cvh {

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

// Analytic invariants of the kernels, blocks, network, losses and weight
// format, evaluated on seeded random instances. Used by `cvhssr verify`.
std::vector<CheckResult> run_invariant_suite(std::uint64_t seed);

} // namespace cvh
