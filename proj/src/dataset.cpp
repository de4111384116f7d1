#include "attrib/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "attrib/viz.hpp"

namespace attrib::data {

namespace {

constexpr std::array<std::array<double, 3>, kMaxSynthClasses> kPatchColors = {{
    {0.95, 0.10, 0.10},
    {0.10, 0.95, 0.10},
    {0.10, 0.10, 0.95},
    {0.95, 0.95, 0.10},
    {0.10, 0.95, 0.95},
}};

constexpr std::size_t kMargin = 2;
constexpr std::size_t kMinSize = 32;

bool is_image_file(const std::filesystem::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".ppm" || ext == ".png";
}

}  // namespace

template <typename T>
SynthDataset<T> synth_dataset(const SynthOptions& options) {
  if (options.n_per_class == 0) throw Error("synth: n_per_class must be >= 1");
  if (options.classes == 0 || options.classes > kMaxSynthClasses) {
    throw Error("synth: classes must be in [1, " + std::to_string(kMaxSynthClasses) + "]");
  }
  if (options.size < kMinSize) {
    throw Error("synth: image size must be >= " + std::to_string(kMinSize));
  }
  const std::size_t n = options.size, half = n / 2;
  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  auto pick = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };

  SynthDataset<T> out;
  out.class_names = nn::default_class_names(options.classes);
  for (std::size_t i = 0; i < options.n_per_class; ++i) {
    for (std::size_t label = 0; label < options.classes; ++label) {
      Tensor<T> img(Shape{3, n, n});
      // Background: a gray random plane wave plus per-pixel color noise.
      const double fy = uniform(0.1, 0.6), fx = uniform(0.1, 0.6);
      const double phase = uniform(0.0, 2 * std::numbers::pi);
      const double level = uniform(0.04, 0.08);
      for (std::size_t y = 0; y < n; ++y) {
        for (std::size_t x = 0; x < n; ++x) {
          const double wave = 0.03 * std::sin(fy * static_cast<double>(y) +
                                              fx * static_cast<double>(x) + phase);
          for (std::size_t c = 0; c < 3; ++c) {
            img.at(c, y, x) = static_cast<T>(std::clamp(level + wave + uniform(-0.03, 0.03), 0.0, 1.0));
          }
        }
      }
      PatchBox box{0, 0, kPatchSize};
      if (label < 4) {
        const std::size_t oy = (label / 2) * half, ox = (label % 2) * half;
        box.y = oy + pick(kMargin, half - kPatchSize - kMargin);
        box.x = ox + pick(kMargin, half - kPatchSize - kMargin);
      } else {
        const std::size_t centered = half - kPatchSize / 2;
        box.y = centered - 4 + pick(0, 8);
        box.x = centered - 4 + pick(0, 8);
      }
      const auto& color = kPatchColors[label];
      for (std::size_t y = box.y; y < box.y + box.size; ++y) {
        for (std::size_t x = box.x; x < box.x + box.size; ++x) {
          for (std::size_t c = 0; c < 3; ++c) {
            img.at(c, y, x) = static_cast<T>(std::clamp(color[c] + uniform(-0.04, 0.04), 0.0, 1.0));
          }
        }
      }
      out.data.images.push_back(std::move(img));
      out.data.labels.push_back(label);
      out.patches.push_back(box);
    }
  }
  return out;
}

template <typename T>
void write_dataset(const SynthDataset<T>& dataset, const std::filesystem::path& root) {
  std::filesystem::create_directories(root);
  for (const auto& name : dataset.class_names) std::filesystem::create_directories(root / name);
  std::ofstream csv(root / "patches.csv", std::ios::trunc);
  if (!csv) throw Error("cannot write '" + (root / "patches.csv").string() + "'");
  csv << "file,label,y,x,size\n";
  for (std::size_t i = 0; i < dataset.data.size(); ++i) {
    const std::size_t label = dataset.data.labels[i];
    char name[32];
    std::snprintf(name, sizeof name, "img_%04zu.ppm", i);
    const auto rel = std::filesystem::path(dataset.class_names[label]) / name;
    viz::write_image(viz::to_rgb(dataset.data.images[i]), root / rel);
    const auto& b = dataset.patches[i];
    csv << rel.generic_string() << ',' << label << ',' << b.y << ',' << b.x << ',' << b.size << '\n';
  }
}

namespace {

// Per class: shuffle the member positions, then the first round(split * n)
// go to training. Returns (train, test) index lists in class order.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(
    const std::vector<std::vector<std::size_t>>& members, double split, std::uint64_t seed) {
  if (!(split >= 0.0 && split <= 1.0)) throw Error("split fraction must be in [0, 1]");
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> train, test;
  for (auto idx : members) {
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n_train = static_cast<std::size_t>(std::llround(split * static_cast<double>(idx.size())));
    train.insert(train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    test.insert(test.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  }
  return {train, test};
}

}  // namespace

DatasetManifest scan_dataset(const std::filesystem::path& root, std::size_t target_size,
                             double split, std::uint64_t seed) {
  if (!std::filesystem::is_directory(root)) {
    throw Error("dataset root '" + root.string() + "' is not a directory");
  }
  if (target_size == 0) throw Error("dataset: target size must be >= 1");
  DatasetManifest m;
  m.root = root;
  m.target_size = target_size;
  m.split = split;
  m.seed = seed;
  for (const auto& entry : std::filesystem::directory_iterator(root)) {
    if (entry.is_directory()) m.class_names.push_back(entry.path().filename().string());
  }
  std::sort(m.class_names.begin(), m.class_names.end());
  if (m.class_names.empty()) throw Error("dataset root '" + root.string() + "' has no class directories");

  std::vector<std::vector<std::size_t>> members;
  std::vector<std::filesystem::path> flat;
  for (const auto& name : m.class_names) {
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(root / name)) {
      if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw Error("dataset class directory '" + (root / name).string() + "' is empty");
    std::vector<std::size_t> idx;
    for (const auto& f : files) {
      idx.push_back(flat.size());
      flat.push_back(f);
    }
    members.push_back(std::move(idx));
    m.files.push_back(std::move(files));
  }
  const auto [train, test] = split_indices(members, split, seed);
  for (auto i : train) m.train_files.push_back(flat[i]);
  for (auto i : test) m.test_files.push_back(flat[i]);
  return m;
}

template <typename T>
Tensor<T> load_image(const std::filesystem::path& path, std::size_t target_size) {
  const auto rgb = viz::read_image(path);
  const auto t = viz::to_tensor<T>(rgb);
  if (rgb.width == target_size && rgb.height == target_size) return t;
  return bilinear_resize(t, target_size, target_size);
}

template <typename T>
LoadedDataset<T> load_dataset(const std::filesystem::path& root, std::size_t target_size,
                              double split, std::uint64_t seed) {
  LoadedDataset<T> out;
  out.manifest = scan_dataset(root, target_size, split, seed);
  auto label_of = [&](const std::filesystem::path& p) {
    const auto cls = p.parent_path().filename().string();
    return static_cast<std::size_t>(
        std::find(out.manifest.class_names.begin(), out.manifest.class_names.end(), cls) -
        out.manifest.class_names.begin());
  };
  for (const auto& f : out.manifest.train_files) {
    out.train.images.push_back(load_image<T>(f, target_size));
    out.train.labels.push_back(label_of(f));
  }
  for (const auto& f : out.manifest.test_files) {
    out.test.images.push_back(load_image<T>(f, target_size));
    out.test.labels.push_back(label_of(f));
  }
  return out;
}

template <typename T>
void split_dataset(const nn::Dataset<T>& all, double split, std::uint64_t seed,
                   nn::Dataset<T>& train, nn::Dataset<T>& test,
                   std::vector<std::size_t>* test_indices) {
  std::size_t classes = 0;
  for (auto l : all.labels) classes = std::max(classes, l + 1);
  std::vector<std::vector<std::size_t>> members(classes);
  for (std::size_t i = 0; i < all.size(); ++i) members[all.labels[i]].push_back(i);
  const auto [tr, te] = split_indices(members, split, seed);
  train = {};
  test = {};
  for (auto i : tr) {
    train.images.push_back(all.images[i]);
    train.labels.push_back(all.labels[i]);
  }
  for (auto i : te) {
    test.images.push_back(all.images[i]);
    test.labels.push_back(all.labels[i]);
  }
  if (test_indices) *test_indices = te;
}

#define ATTRIB_INSTANTIATE(T)                                                          \
  template SynthDataset<T> synth_dataset(const SynthOptions&);                         \
  template void write_dataset(const SynthDataset<T>&, const std::filesystem::path&);   \
  template Tensor<T> load_image(const std::filesystem::path&, std::size_t);            \
  template LoadedDataset<T> load_dataset(const std::filesystem::path&, std::size_t,    \
                                         double, std::uint64_t);                       \
  template void split_dataset(const nn::Dataset<T>&, double, std::uint64_t,            \
                              nn::Dataset<T>&, nn::Dataset<T>&, std::vector<std::size_t>*);

ATTRIB_INSTANTIATE(float)
ATTRIB_INSTANTIATE(double)

#undef ATTRIB_INSTANTIATE

}  // namespace attrib::data
