#include "attrib/verify.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "attrib/integrated_gradients.hpp"
#include "attrib/lime.hpp"

namespace attrib::verify {

std::vector<std::string> suite_names() { return {"gradients", "completeness", "surrogate"}; }

namespace {

Tensor<double> random_input(const Shape& shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  Tensor<double> t(shape);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

// ReLU signs and max-pool winners along the forward pass.
std::vector<std::uint8_t> activation_pattern(const nn::ModelGraph<double>& model,
                                             const nn::ForwardTrace<double>& trace) {
  std::vector<std::uint8_t> out;
  for (std::size_t i = 0; i < model.layer_count(); ++i) {
    const auto& in = trace.output_of(static_cast<int>(i) - 1);
    if (model.layer(i).kind == nn::LayerKind::kRelu) {
      for (double v : in.data()) out.push_back(v > 0);
    } else if (model.layer(i).kind == nn::LayerKind::kMaxPool2x2) {
      for (std::size_t c = 0; c < in.dim(0); ++c) {
        for (std::size_t y = 0; y + 1 < in.dim(1); y += 2) {
          for (std::size_t x = 0; x + 1 < in.dim(2); x += 2) {
            const double v[4] = {in.at(c, y, x), in.at(c, y, x + 1), in.at(c, y + 1, x),
                                 in.at(c, y + 1, x + 1)};
            out.push_back(static_cast<std::uint8_t>(std::max_element(v, v + 4) - v));
          }
        }
      }
    }
  }
  return out;
}

// Central differences at h = 1e-4. The logit is piecewise linear, so where a
// probe changes the activation pattern the quotient from the side that keeps
// it is used instead; if both sides change, h shrinks.
double finite_difference_error(const nn::ModelGraph<double>& model, const Tensor<double>& x) {
  const auto trace = nn::forward(model, x);
  const auto base = activation_pattern(model, trace);
  const std::size_t target = trace.predicted;
  const auto analytic = nn::gradient_wrt_input(model, trace, target);
  Tensor<double> probe = x;
  double worst = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double numeric = 0;
    for (double h = 1e-4;; h /= 10) {
      probe[i] = x[i] + h;
      const auto up = nn::forward(model, probe);
      probe[i] = x[i] - h;
      const auto down = nn::forward(model, probe);
      probe[i] = x[i];
      const bool up_ok = activation_pattern(model, up) == base;
      const bool down_ok = activation_pattern(model, down) == base;
      if (up_ok && down_ok) {
        numeric = (up.logits[target] - down.logits[target]) / (2 * h);
      } else if (up_ok) {
        numeric = (up.logits[target] - trace.logits[target]) / h;
      } else if (down_ok || h < 1e-7) {
        numeric = (trace.logits[target] - down.logits[target]) / h;
      } else {
        continue;
      }
      break;
    }
    const double a = analytic[i];
    if (std::abs(a) < 1e-8 && std::abs(numeric) < 1e-8) continue;
    worst = std::max(worst, std::abs(a - numeric) / std::max(std::abs(a), std::abs(numeric)));
  }
  return worst;
}

struct CheckModel {
  std::string name;
  std::vector<nn::LayerSpec> layers;
  Shape input;
};

std::vector<CheckModel> check_models() {
  using namespace nn;
  return {
      {"conv2d", {conv2d("c", 2, 3), conv2d("s", 3, 3, 3, 2), global_avg_pool("g"), dense("fc", 3, 2)}, {2, 7, 7}},
      {"relu", {conv2d("c", 2, 3), relu("r"), global_avg_pool("g"), dense("fc", 3, 2)}, {2, 6, 6}},
      {"maxpool2x2", {conv2d("c", 2, 3), maxpool2x2("p"), global_avg_pool("g"), dense("fc", 3, 2)}, {2, 6, 6}},
      {"dense", {dense("fc1", 18, 5), relu("r"), dense("fc2", 5, 2), softmax("sm")}, {2, 3, 3}},
      {"residual_add", {conv2d("c1", 2, 2), relu("r"), conv2d("c2", 2, 2), residual_add("a", 0),
                        global_avg_pool("g"), dense("fc", 2, 2)}, {2, 5, 5}},
  };
}

}  // namespace

SuiteResult gradient_check(std::size_t seeds, std::uint64_t seed) {
  if (seeds == 0) throw Error("gradient check needs at least one seed");
  double worst = 0;
  std::string worst_case;
  auto record = [&](const std::string& name, double err) {
    if (err >= worst) {
      worst = err;
      worst_case = name;
    }
  };
  for (std::uint64_t s = seed; s < seed + seeds; ++s) {
    for (const auto& c : check_models()) {
      const auto model = nn::initialize<double>(c.layers, {c.name, c.input, 2, {}}, s);
      record(c.name, finite_difference_error(model, random_input(c.input, 1000 + s)));
    }
    for (const auto& arch : nn::architecture_names()) {
      const auto model = nn::make_model<double>(arch, 12, 3, s);
      record(arch, finite_difference_error(model, random_input({3, 12, 12}, 2000 + s)));
    }
  }
  std::ostringstream detail;
  detail << "max relative error " << worst << " (" << worst_case << ") over " << seeds
         << " seeds, limit 1e-4";
  return {"gradients", worst <= 1e-4, detail.str()};
}

SuiteResult completeness(const nn::ModelGraph<double>& model, const std::vector<Tensor<double>>& images,
                         std::size_t steps, double tolerance, double min_delta, RiemannRule rule) {
  if (images.empty()) throw Error("completeness check needs at least one image");
  std::size_t checked = 0, failed = 0;
  double worst = 0;
  for (const auto& image : images) {
    IgParams<double> p;
    p.steps = steps;
    p.rule = rule;
    const auto r = integrated_gradients(model, image, p);
    if (std::abs(r.logit_input - r.logit_baseline) <= min_delta) continue;
    ++checked;
    worst = std::max(worst, r.relative_gap());
    if (r.relative_gap() > tolerance) ++failed;
  }
  std::ostringstream detail;
  detail << failed << " of " << checked << " images above " << tolerance
         << " relative gap at m=" << steps << ", worst " << worst;
  return {"completeness", failed == 0 && checked > 0, detail.str()};
}

SuiteResult surrogate_fidelity(std::uint64_t seed) {
  const std::vector<double> truth = {0.8, -0.3, 0.05, 0.4};
  const double intercept = 0.1;
  lime::PerturbationBatch batch;
  batch.masks = lime::sample_masks(truth.size(), 200, seed);
  batch.seed = seed;
  for (const auto& m : batch.masks) {
    double y = intercept;
    for (std::size_t k = 0; k < truth.size(); ++k) y += truth[k] * m[k];
    batch.outputs.push_back(y);
    batch.weights.push_back(lime::kernel_weight(m, 0.25));
  }
  const auto fit = lime::fit_surrogate(batch, 1e-6);
  double worst = 0;
  for (std::size_t k = 0; k < truth.size(); ++k) {
    worst = std::max(worst, std::abs(fit.coefficients[k] - truth[k]));
  }
  std::ostringstream detail;
  detail << "max coefficient error " << worst << ", weighted R^2 " << fit.weighted_r2;
  return {"surrogate", worst <= 1e-3 && fit.weighted_r2 >= 0.999, detail.str()};
}

}  // namespace attrib::verify
