#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "attrib/integrated_gradients.hpp"
#include "attrib/lime.hpp"
#include "attrib/nn.hpp"

namespace attrib::bench {

std::vector<std::string> method_names();  // gradcam, ig, lime

struct BenchOptions {
  std::size_t warmup = 1;  // untimed runs per (model, method) before timing
  std::size_t ig_steps = 50;
  BaselineKind ig_baseline = BaselineKind::kZeros;
  RiemannRule ig_rule = RiemannRule::kMidpoint;
  lime::LimeParams lime;  // threads forced to 1
};

template <typename T>
struct BenchModel {
  std::string name;  // must be one of nn::architecture_names()
  nn::ModelGraph<T> graph;
};

struct BenchRecord {
  std::string model;
  std::string method;
  std::size_t image_id = 0;
  double seconds = 0;
  std::string params;  // e.g. "steps=50 baseline=zeros"
};

struct BenchCell {
  std::string model;
  std::string method;
  double mean_seconds = 0;
  std::size_t count = 0;
};

struct BenchReport {
  std::vector<BenchRecord> records;
  std::vector<BenchCell> cells;  // models x methods, in request order
  std::vector<std::string> models;
  std::vector<std::string> methods;
  std::string note;

  // Throws for a pair that was not benchmarked.
  double mean(const std::string& model, const std::string& method) const;
};

// Times each (model, method, image) with a monotonic clock around the
// explanation call only. Every method runs single-threaded.
template <typename T>
BenchReport run_bench(const std::vector<BenchModel<T>>& models,
                      const std::vector<std::string>& methods,
                      const std::vector<Tensor<T>>& images,
                      const BenchOptions& options = {});

// `model,method,image_id,seconds`, one row per record.
void write_records_csv(const BenchReport& report, const std::filesystem::path& path);
// `model,gradcam_mean_s,ig_mean_s,lime_mean_s`, one row per model; a method
// that was not run is left empty.
void write_summary_csv(const BenchReport& report, const std::filesystem::path& path);

}  // namespace attrib::bench
