#pragma once

#include <string>
#include <vector>

#include "sparta/config.hpp"

namespace sparta {

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
    double seconds = 0.0;
};

// Fast invariant suite: closed-form membrane oracle, homogeneous reduction,
// heterogeneous statistics, top-K oracles, gate identities, attention-bias
// shift invariance, the K^2 scaling fit, the finite-difference gradient
// check, and hard-sparsity isolation. Only checks whose name starts with
// `filter` run when a filter is given.
std::vector<CheckResult> run_selftests(const std::string& filter = "");

// The sub-200-parameter configuration used by the gradient check.
PipelineConfig micro_config();

} // namespace sparta
