#include <algorithm>
#include <filesystem>
#include <functional>
#include <fstream>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "camkd/data.hpp"
#include "camkd/errors.hpp"

namespace camkd {
namespace {

namespace fs = std::filesystem;

fs::path temp_path(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "camkd_test_data";
  fs::create_directories(dir);
  return dir / name;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

DatasetSpec small_spec() {
  DatasetSpec s;
  s.samples = 300;
  s.input_width = 4;
  s.classes = 3;
  s.seed = 5;
  return s;
}

TEST(MakeBlobs, SizesAndDeterminism) {
  const DatasetSpec spec = small_spec();
  const Split a = make_blobs(spec);
  EXPECT_EQ(a.train.size() + a.test.size(), 300u);
  EXPECT_EQ(a.train.size(), 240u);
  EXPECT_EQ(a.train.input_width(), 4u);
  EXPECT_EQ(a.train.classes, 3u);
  const Split b = make_blobs(spec);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test, b.test);
  DatasetSpec other = spec;
  other.seed = 6;
  EXPECT_NE(make_blobs(other).train.inputs, a.train.inputs);
}

TEST(MakeBlobs, TrainClassHistogramIsBalanced) {
  DatasetSpec spec = small_spec();
  spec.samples = 1003;
  spec.classes = 7;
  const Split s = make_blobs(spec);
  std::vector<std::size_t> counts(spec.classes, 0);
  for (const int l : s.train.labels) ++counts[static_cast<std::size_t>(l)];
  const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
  EXPECT_LE(*hi - *lo, 1u);
}

TEST(MakeBlobs, TinySpreadIsSolvedByNearestCentre) {
  DatasetSpec spec = small_spec();
  spec.blob_std = 1e-9;
  spec.clusters_per_class = 1;
  const Split s = make_blobs(spec);
  // With one cluster per class every training point of class c sits on centre c.
  std::vector<std::vector<double>> centre(spec.classes);
  for (std::size_t i = 0; i < s.train.size(); ++i) {
    auto& c = centre[static_cast<std::size_t>(s.train.labels[i])];
    if (c.empty()) c.assign(s.train.inputs.row(i).begin(), s.train.inputs.row(i).end());
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < s.test.size(); ++i) {
    double best = 1e300;
    int arg = -1;
    for (std::size_t k = 0; k < spec.classes; ++k) {
      double d = 0.0;
      for (std::size_t j = 0; j < spec.input_width; ++j) {
        d += (s.test.inputs(i, j) - centre[k][j]) * (s.test.inputs(i, j) - centre[k][j]);
      }
      if (d < best) {
        best = d;
        arg = static_cast<int>(k);
      }
    }
    correct += arg == s.test.labels[i];
  }
  EXPECT_EQ(correct, s.test.size());
}

TEST(MakeBlobs, TrainAndTestAreDisjoint) {
  const Split s = make_blobs(small_spec());
  std::set<std::vector<double>> rows;
  for (std::size_t i = 0; i < s.train.size(); ++i) {
    rows.insert({s.train.inputs.row(i).begin(), s.train.inputs.row(i).end()});
  }
  for (std::size_t i = 0; i < s.test.size(); ++i) {
    EXPECT_EQ(rows.count({s.test.inputs.row(i).begin(), s.test.inputs.row(i).end()}), 0u);
  }
}

TEST(MakeBlobs, InvalidSpec) {
  for (auto mutate : std::vector<std::function<void(DatasetSpec&)>>{
           [](DatasetSpec& s) { s.samples = 2; }, [](DatasetSpec& s) { s.blob_std = 0; },
           [](DatasetSpec& s) { s.classes = 1; }, [](DatasetSpec& s) { s.train_fraction = 1.0; },
           [](DatasetSpec& s) { s.input_width = 0; }}) {
    DatasetSpec spec = small_spec();
    mutate(spec);
    EXPECT_THROW(make_blobs(spec), ParameterError);
  }
}

Dataset hundred() {
  Dataset d;
  d.classes = 5;
  d.inputs = Tensor(100, 1);
  for (int i = 0; i < 100; ++i) d.labels.push_back(i % 5);
  return d;
}

TEST(CorruptLabels, ExactCountsAndExcludedRedraw) {
  const Dataset d = hundred();
  EXPECT_EQ(corrupt_labels(d, 0.0, 1), d);
  auto changed = [&](const Dataset& c) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < d.size(); ++i) n += c.labels[i] != d.labels[i];
    return n;
  };
  EXPECT_EQ(changed(corrupt_labels(d, 0.4, 1)), 40u);
  EXPECT_EQ(changed(corrupt_labels(d, 1.0, 1)), 100u);
  EXPECT_EQ(corrupt_labels(d, 0.4, 9), corrupt_labels(d, 0.4, 9));
  EXPECT_NE(corrupt_labels(d, 0.4, 9), corrupt_labels(d, 0.4, 10));
  EXPECT_THROW(corrupt_labels(d, 1.5, 1), ParameterError);
  EXPECT_THROW(corrupt_labels(d, -0.1, 1), ParameterError);
}

TEST(Csv, SaveLoadSaveIsByteIdentical) {
  const Split s = make_blobs(small_spec());
  const fs::path a = temp_path("a.csv"), b = temp_path("b.csv");
  save_csv(s.train, a);
  const Dataset back = load_csv(a, 3);
  EXPECT_EQ(back, s.train);
  save_csv(back, b);
  EXPECT_EQ(read_file(a), read_file(b));
  EXPECT_EQ(read_file(a).substr(0, 18), "x0,x1,x2,x3,label\n");
}

TEST(Csv, HandWrittenFixture) {
  const fs::path p = temp_path("fixture.csv");
  std::ofstream(p) << "x0,x1,label\n1.5,-2,0\n0,0.25,2\n3,4,1\n";
  const Dataset d = load_csv(p);
  EXPECT_EQ(d.inputs, Tensor::from_rows({{1.5, -2}, {0, 0.25}, {3, 4}}));
  EXPECT_EQ(d.labels, (std::vector<int>{0, 2, 1}));
  EXPECT_EQ(d.classes, 3u);
  EXPECT_EQ(load_csv(p, 6).classes, 6u);
}

TEST(Csv, ErrorsNameTheLine) {
  const fs::path empty = temp_path("empty.csv");
  std::ofstream(empty).close();
  try {
    load_csv(empty);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("empty dataset"), std::string::npos);
  }
  const fs::path bad = temp_path("bad.csv");
  std::ofstream(bad) << "x0,label\n1,0\nnope,1\n";
  try {
    load_csv(bad);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find(":3:"), std::string::npos) << e.what();
  }
  const fs::path short_row = temp_path("short.csv");
  std::ofstream(short_row) << "x0,x1,label\n1,0\n";
  EXPECT_THROW(load_csv(short_row), ParseError);
  const fs::path header_only = temp_path("header.csv");
  std::ofstream(header_only) << "x0,label\n";
  EXPECT_THROW(load_csv(header_only), ParseError);
  const fs::path negative = temp_path("negative.csv");
  std::ofstream(negative) << "x0,label\n1,-1\n";
  EXPECT_THROW(load_csv(negative), ParseError);
}

}  // namespace
}  // namespace camkd
