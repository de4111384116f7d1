#include "attrib/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "attrib/gradcam.hpp"

namespace attrib::bench {

std::vector<std::string> method_names() { return {"gradcam", "ig", "lime"}; }

namespace {

std::string join(const std::vector<std::string>& names) {
  std::string out;
  for (const auto& n : names) out += (out.empty() ? "" : ", ") + n;
  return out;
}

void require_known(const std::string& kind, const std::string& name,
                   const std::vector<std::string>& valid) {
  if (std::find(valid.begin(), valid.end(), name) == valid.end()) {
    throw Error("unknown " + kind + " '" + name + "'; valid: " + join(valid));
  }
}

// Runs one explanation and returns a value derived from it, so the call
// cannot be dropped.
template <typename T>
double run_method(const std::string& method, const nn::ModelGraph<T>& model,
                  const Tensor<T>& image, const BenchOptions& options) {
  if (method == "gradcam") {
    return static_cast<double>(grad_cam(model, image).heatmap[0]);
  }
  if (method == "ig") {
    IgParams<T> p;
    p.steps = options.ig_steps;
    p.baseline_kind = options.ig_baseline;
    p.rule = options.ig_rule;
    p.threads = 1;
    return integrated_gradients(model, image, p).completeness_gap;
  }
  auto p = options.lime;
  p.threads = 1;
  return lime::explain(model, image, p).front().intercept;
}

std::string params_echo(const std::string& method, const BenchOptions& options) {
  std::ostringstream s;
  if (method == "gradcam") {
    s << "layer=default";
  } else if (method == "ig") {
    s << "steps=" << options.ig_steps << " baseline=" << to_string(options.ig_baseline)
      << " rule=" << to_string(options.ig_rule);
  } else {
    s << "num_samples=" << options.lime.num_samples << " top_labels=" << options.lime.top_labels
      << " grid_k=" << options.lime.segmentation.grid_k;
  }
  return s.str();
}

std::string format_seconds(double s) {
  std::ostringstream out;
  out << std::setprecision(9) << s;
  return out.str();
}

}  // namespace

double BenchReport::mean(const std::string& model, const std::string& method) const {
  for (const auto& c : cells) {
    if (c.model == model && c.method == method) return c.mean_seconds;
  }
  throw Error("bench report has no entry for " + model + "/" + method);
}

template <typename T>
BenchReport run_bench(const std::vector<BenchModel<T>>& models,
                      const std::vector<std::string>& methods,
                      const std::vector<Tensor<T>>& images, const BenchOptions& options) {
  if (models.empty()) throw Error("bench: no models requested");
  if (methods.empty()) throw Error("bench: no methods requested");
  if (images.empty()) throw Error("bench: no images");
  for (const auto& m : models) require_known("model", m.name, nn::architecture_names());
  for (const auto& m : methods) require_known("method", m, method_names());

  BenchReport report;
  report.note = "single-threaded; timer covers explanation computation only";
  volatile double sink = 0;
  for (const auto& model : models) {
    report.models.push_back(model.name);
    for (const auto& method : methods) {
      for (std::size_t w = 0; w < options.warmup; ++w) {
        sink = sink + run_method(method, model.graph, images[w % images.size()], options);
      }
      const auto echo = params_echo(method, options);
      double total = 0;
      for (std::size_t i = 0; i < images.size(); ++i) {
        const auto start = std::chrono::steady_clock::now();
        const double v = run_method(method, model.graph, images[i], options);
        const auto stop = std::chrono::steady_clock::now();
        sink = sink + v;
        const double seconds = std::chrono::duration<double>(stop - start).count();
        if (!(seconds > 0) || !std::isfinite(seconds)) {
          throw Error("bench: clock returned a non-positive duration");
        }
        report.records.push_back({model.name, method, i, seconds, echo});
        total += seconds;
      }
      report.cells.push_back({model.name, method, total / static_cast<double>(images.size()),
                              images.size()});
    }
  }
  report.methods = methods;
  return report;
}

void write_records_csv(const BenchReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << "model,method,image_id,seconds\n";
  for (const auto& r : report.records) {
    out << r.model << ',' << r.method << ',' << r.image_id << ',' << format_seconds(r.seconds) << '\n';
  }
}

void write_summary_csv(const BenchReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << "model,gradcam_mean_s,ig_mean_s,lime_mean_s\n";
  for (const auto& model : report.models) {
    out << model;
    for (const auto& method : method_names()) {
      out << ',';
      for (const auto& c : report.cells) {
        if (c.model == model && c.method == method) out << format_seconds(c.mean_seconds);
      }
    }
    out << '\n';
  }
}

template BenchReport run_bench(const std::vector<BenchModel<float>>&, const std::vector<std::string>&,
                               const std::vector<Tensor<float>>&, const BenchOptions&);
template BenchReport run_bench(const std::vector<BenchModel<double>>&, const std::vector<std::string>&,
                               const std::vector<Tensor<double>>&, const BenchOptions&);

}  // namespace attrib::bench
