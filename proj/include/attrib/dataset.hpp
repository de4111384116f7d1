#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "attrib/nn.hpp"

namespace attrib::data {

// Ground-truth location of the planted patch, in pixels.
struct PatchBox {
  std::size_t y = 0;
  std::size_t x = 0;
  std::size_t size = 0;

  bool contains(std::size_t py, std::size_t px) const noexcept {
    return py >= y && py < y + size && px >= x && px < x + size;
  }
  bool operator==(const PatchBox&) const = default;
};

inline constexpr std::size_t kPatchSize = 12;
inline constexpr std::size_t kMaxSynthClasses = 5;

// Class k puts its patch in region k: 0 upper-left, 1 upper-right,
// 2 lower-left, 3 lower-right, 4 center. The patch is also tinted toward a
// class color, since the models pool away absolute position.
struct SynthOptions {
  std::size_t n_per_class = 200;
  std::size_t classes = 3;
  std::size_t size = 64;
  std::uint64_t seed = 0;
};

template <typename T>
struct SynthDataset {
  nn::Dataset<T> data;
  std::vector<PatchBox> patches;  // one per image
  std::vector<std::string> class_names;
};

template <typename T>
SynthDataset<T> synth_dataset(const SynthOptions& options);

// root/<class_name>/img_NNNN.ppm plus root/patches.csv
// (`file,label,y,x,size`).
template <typename T>
void write_dataset(const SynthDataset<T>& dataset, const std::filesystem::path& root);

struct DatasetManifest {
  std::filesystem::path root;
  std::vector<std::string> class_names;                      // sorted
  std::vector<std::vector<std::filesystem::path>> files;     // per class, sorted
  std::size_t target_size = 64;
  double split = 0.8;
  std::uint64_t seed = 0;
  std::vector<std::filesystem::path> train_files;
  std::vector<std::filesystem::path> test_files;
};

template <typename T>
struct LoadedDataset {
  DatasetManifest manifest;
  nn::Dataset<T> train;
  nn::Dataset<T> test;
};

// Lists root/<class>/*.{ppm,png} and splits each class separately: the
// class's files are shuffled with the seed and the first
// round(split * n) go to training.
DatasetManifest scan_dataset(const std::filesystem::path& root, std::size_t target_size,
                             double split, std::uint64_t seed);

// Decodes, resizes bilinearly to target_size x target_size and scales to
// [0, 1].
template <typename T>
Tensor<T> load_image(const std::filesystem::path& path, std::size_t target_size);

template <typename T>
LoadedDataset<T> load_dataset(const std::filesystem::path& root, std::size_t target_size,
                              double split = 0.8, std::uint64_t seed = 0);

// Deterministic per-class split of an in-memory dataset.
template <typename T>
void split_dataset(const nn::Dataset<T>& all, double split, std::uint64_t seed,
                   nn::Dataset<T>& train, nn::Dataset<T>& test,
                   std::vector<std::size_t>* test_indices = nullptr);

}  // namespace attrib::data
