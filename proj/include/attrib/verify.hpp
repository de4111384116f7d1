#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "attrib/integrated_gradients.hpp"
#include "attrib/nn.hpp"

namespace attrib::verify {

struct SuiteResult {
  std::string name;
  bool passed = false;
  std::string detail;  // one line
};

std::vector<std::string> suite_names();  // gradients, completeness, surrogate

// Analytic input gradients against central differences (h = 1e-4) for one
// small model per layer kind and both mini architectures; passes when the
// max relative error is <= 1e-4 for every seed. Probes that cross a ReLU or
// max-pool switch use the one-sided quotient that stays on x's linear piece.
SuiteResult gradient_check(std::size_t seeds = 10, std::uint64_t seed = 0);

// IG at `steps` on each image: the relative completeness gap must be
// <= tolerance wherever |F(x) - F(x')| > min_delta, with a zero baseline.
SuiteResult completeness(const nn::ModelGraph<double>& model,
                         const std::vector<Tensor<double>>& images,
                         std::size_t steps = 50, double tolerance = 0.01,
                         double min_delta = 0.1, RiemannRule rule = RiemannRule::kMidpoint);

// Weighted ridge on a black box linear in the mask vector (K = 4, N = 200,
// lambda = 1e-6) must recover the coefficients within 1e-3 with weighted
// R^2 >= 0.999.
SuiteResult surrogate_fidelity(std::uint64_t seed = 0);

}  // namespace attrib::verify
