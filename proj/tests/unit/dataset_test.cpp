#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "attrib/dataset.hpp"
#include "attrib/viz.hpp"

namespace attrib::data {
namespace {

namespace fs = std::filesystem;

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("attrib_dataset_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// root/<a,b,c>/img_i.ppm, 10 per class, 8x8.
fs::path three_by_ten(const std::string& name) {
  const auto root = fresh_dir(name);
  for (const std::string cls : {"a", "b", "c"}) {
    fs::create_directories(root / cls);
    for (int i = 0; i < 10; ++i) {
      viz::write_image(viz::RgbImage(8, 8, {static_cast<std::uint8_t>(i), 0, 0}),
                       root / cls / ("img_" + std::to_string(i) + ".ppm"));
    }
  }
  return root;
}

TEST(Manifest, SplitIsProportionalPerClass) {
  const auto root = three_by_ten("split");
  const auto m = scan_dataset(root, 8, 0.8, 3);
  EXPECT_EQ(m.class_names, (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_EQ(m.train_files.size(), 24u);
  EXPECT_EQ(m.test_files.size(), 6u);
  for (const std::string cls : {"a", "b", "c"}) {
    const auto n = std::count_if(m.test_files.begin(), m.test_files.end(),
                                 [&](const fs::path& p) { return p.parent_path().filename() == cls; });
    EXPECT_EQ(n, 2) << cls;
  }
  std::set<fs::path> all(m.train_files.begin(), m.train_files.end());
  for (const auto& f : m.test_files) EXPECT_TRUE(all.insert(f).second) << "overlap " << f;
  EXPECT_EQ(all.size(), 30u);
  fs::remove_all(root);
}

TEST(Manifest, SameSeedSameSplit) {
  const auto root = three_by_ten("seed");
  const auto a = scan_dataset(root, 8, 0.8, 5);
  const auto b = scan_dataset(root, 8, 0.8, 5);
  EXPECT_EQ(a.train_files, b.train_files);
  EXPECT_EQ(a.test_files, b.test_files);
  const auto c = scan_dataset(root, 8, 0.8, 6);
  EXPECT_NE(a.test_files, c.test_files);
  fs::remove_all(root);
}

TEST(Manifest, Errors) {
  const auto root = fresh_dir("errors");
  EXPECT_THROW(scan_dataset(root / "missing", 8, 0.8, 0), Error);
  EXPECT_THROW(scan_dataset(root, 8, 0.8, 0), Error);  // no classes
  fs::create_directories(root / "empty");
  try {
    scan_dataset(root, 8, 0.8, 0);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("empty"), std::string::npos) << e.what();
  }
  fs::remove_all(root);
}

TEST(Manifest, BadSplitRejected) {
  const auto root = three_by_ten("badsplit");
  EXPECT_THROW(scan_dataset(root, 8, 1.5, 0), Error);
  fs::remove_all(root);
}

TEST(LoadDataset, UndecodableFileIsNamed) {
  const auto root = three_by_ten("bad");
  { std::ofstream(root / "b" / "img_zz.ppm") << "garbage"; }
  try {
    load_dataset<float>(root, 8, 0.5, 0);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("img_zz.ppm"), std::string::npos) << e.what();
  }
  fs::remove_all(root);
}

TEST(LoadDataset, LabelsFollowDirectories) {
  const auto root = three_by_ten("labels");
  const auto d = load_dataset<double>(root, 8, 0.8, 0);
  ASSERT_EQ(d.train.size(), 24u);
  for (std::size_t i = 0; i < d.train.size(); ++i) {
    const auto cls = d.manifest.train_files[i].parent_path().filename().string();
    EXPECT_EQ(d.manifest.class_names[d.train.labels[i]], cls);
    EXPECT_EQ(d.train.images[i].shape(), (Shape{3, 8, 8}));
  }
  fs::remove_all(root);
}

TEST(LoadImage, LargeImageResizedToInputSize) {
  const auto root = fresh_dir("large");
  viz::RgbImage big(768, 768, {255, 0, 51});
  viz::write_image(big, root / "big.ppm");
  const auto t = load_image<float>(root / "big.ppm", 64);
  EXPECT_EQ(t.shape(), (Shape{3, 64, 64}));
  EXPECT_FLOAT_EQ(t.at(0, 10, 10), 1.0f);
  EXPECT_FLOAT_EQ(t.at(2, 63, 0), 0.2f);
  fs::remove_all(root);
}

TEST(Synth, PatchQuadrantEncodesClass) {
  const auto ds = synth_dataset<float>({50, 5, 64, 1});
  ASSERT_EQ(ds.data.size(), 250u);
  for (std::size_t i = 0; i < ds.data.size(); ++i) {
    const auto& b = ds.patches[i];
    const std::size_t cy = b.y + b.size / 2, cx = b.x + b.size / 2;
    EXPECT_EQ(b.size, kPatchSize);
    switch (ds.data.labels[i]) {
      case 0: EXPECT_TRUE(b.y + b.size <= 32 && b.x + b.size <= 32); break;
      case 1: EXPECT_TRUE(b.y + b.size <= 32 && b.x >= 32); break;
      case 2: EXPECT_TRUE(b.y >= 32 && b.x + b.size <= 32); break;
      case 3: EXPECT_TRUE(b.y >= 32 && b.x >= 32); break;
      default: EXPECT_TRUE(cy >= 28 && cy <= 36 && cx >= 28 && cx <= 36); break;
    }
  }
}

TEST(Synth, SameSeedBitIdentical) {
  const auto a = synth_dataset<double>({4, 3, 32, 9});
  const auto b = synth_dataset<double>({4, 3, 32, 9});
  EXPECT_EQ(a.data.images, b.data.images);
  EXPECT_EQ(a.data.labels, b.data.labels);
  EXPECT_EQ(a.patches, b.patches);
  EXPECT_NE(a.data.images, synth_dataset<double>({4, 3, 32, 10}).data.images);
}

// Classify by the patch: nearest class centroid of the per-channel mean over
// the brightest 12x12 window.
TEST(Synth, CentroidClassifierOnPatchSeparatesClasses) {
  auto features = [](const Tensor<double>& img) {
    const std::size_t n = img.dim(1);
    double best = -1;
    std::array<double, 3> out{};
    for (std::size_t y = 0; y + kPatchSize <= n; y += 2) {
      for (std::size_t x = 0; x + kPatchSize <= n; x += 2) {
        std::array<double, 3> m{};
        for (std::size_t c = 0; c < 3; ++c) {
          for (std::size_t i = 0; i < kPatchSize; ++i) {
            for (std::size_t j = 0; j < kPatchSize; ++j) m[c] += img.at(c, y + i, x + j);
          }
        }
        const double total = m[0] + m[1] + m[2];
        if (total > best) {
          best = total;
          out = m;
        }
      }
    }
    return out;
  };
  const auto train = synth_dataset<double>({60, 3, 64, 2});
  const auto test = synth_dataset<double>({100, 3, 64, 3});
  std::vector<std::array<double, 3>> centroid(3);
  std::vector<double> counts(3);
  for (std::size_t i = 0; i < train.data.size(); ++i) {
    const auto f = features(train.data.images[i]);
    for (std::size_t c = 0; c < 3; ++c) centroid[train.data.labels[i]][c] += f[c];
    counts[train.data.labels[i]] += 1;
  }
  for (std::size_t k = 0; k < 3; ++k) {
    for (auto& v : centroid[k]) v /= counts[k];
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test.data.size(); ++i) {
    const auto f = features(test.data.images[i]);
    std::size_t best = 0;
    double best_d = 1e300;
    for (std::size_t k = 0; k < 3; ++k) {
      double d = 0;
      for (std::size_t c = 0; c < 3; ++c) d += (f[c] - centroid[k][c]) * (f[c] - centroid[k][c]);
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    correct += best == test.data.labels[i];
  }
  EXPECT_GE(static_cast<double>(correct) / static_cast<double>(test.data.size()), 0.99);
}

TEST(Synth, Errors) {
  EXPECT_THROW(synth_dataset<float>({0, 3, 64, 0}), Error);
  EXPECT_THROW(synth_dataset<float>({1, 6, 64, 0}), Error);
  EXPECT_THROW(synth_dataset<float>({1, 3, 16, 0}), Error);
}

TEST(Synth, WrittenDatasetLoadsBack) {
  const auto root = fresh_dir("written");
  const auto ds = synth_dataset<float>({4, 3, 32, 4});
  write_dataset(ds, root);
  const auto loaded = load_dataset<float>(root, 32, 1.0, 0);
  EXPECT_EQ(loaded.manifest.class_names, ds.class_names);
  EXPECT_EQ(loaded.train.size(), 12u);
  std::ifstream csv(root / "patches.csv");
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header, "file,label,y,x,size");
  std::size_t rows = 0;
  for (std::string line; std::getline(csv, line);) ++rows;
  EXPECT_EQ(rows, 12u);
  fs::remove_all(root);
}

TEST(SplitDataset, InMemoryMatchesPerClassProportions) {
  const auto ds = synth_dataset<float>({10, 3, 32, 0});
  nn::Dataset<float> train, test;
  std::vector<std::size_t> idx;
  split_dataset(ds.data, 0.8, 1, train, test, &idx);
  EXPECT_EQ(train.size(), 24u);
  EXPECT_EQ(test.size(), 6u);
  for (std::size_t i = 0; i < idx.size(); ++i) EXPECT_EQ(test.images[i], ds.data.images[idx[i]]);
}

}  // namespace
}  // namespace attrib::data
