#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace clcsca {

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
    double seconds = 0.0;
};

// Central finite differences against the analytic gradients: every
// differentiable operation, every attention block, and miniature end-to-end
// networks (64-point clouds, both tasks).
std::vector<CheckResult> check_gradients(std::uint64_t seed);

// Point-order invariance of classification logits, equivariance of
// segmentation logits, and equivariance of the attention blocks.
std::vector<CheckResult> check_invariance(std::uint64_t seed);

// Production geometry and metric implementations against brute-force oracles.
std::vector<CheckResult> check_oracles(std::uint64_t seed);

bool all_passed(const std::vector<CheckResult>& results);

}  // namespace clcsca
