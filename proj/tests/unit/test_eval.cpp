#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "lussl/data/synthetic.hpp"
#include "lussl/eval/features.hpp"
#include "lussl/eval/metrics.hpp"
#include "lussl/eval/projection.hpp"
#include "lussl/eval/report.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace lussl;
using namespace lussl::eval;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Auc, KnownValues) {
  EXPECT_EQ(auc({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1}), 0.75);
  EXPECT_EQ(auc({0.5, 0.5, 0.5, 0.5}, {0, 1, 0, 1}), 0.5);
  EXPECT_EQ(auc({0.2, 0.9}, {0, 1}), 1.0);
  EXPECT_EQ(auc({0.9, 0.2}, {0, 1}), 0.0);
}

TEST(Auc, ErrorsOnDegenerateInput) {
  EXPECT_THROW(auc({0.1, 0.2}, {1, 1}), DataError);
  EXPECT_THROW(auc(std::vector<double>{}, std::vector<int>{}), DataError);
  EXPECT_THROW(auc({0.1}, {0, 1}), ShapeError);
  EXPECT_THROW(auc({0.1, 0.3}, {0, 2}), DataError);
}

TEST(Auc, MatchesPairCountingOracle) {
  Rng rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + static_cast<int>(uniform_index(rng, 60));
    std::vector<double> s;
    std::vector<int> y;
    for (int i = 0; i < n; ++i) {
      s.push_back(std::round(uniform01(rng) * 10) / 10);  // coarse grid forces ties
      y.push_back(i < 2 ? i : (bernoulli(rng, 0.4) ? 1 : 0));
    }
    EXPECT_NEAR(auc(s, y), oracle::auc(s, y), 1e-12);
  }
}

TEST(Auc, InvariantUnderMonotoneTransformAndComplement) {
  Rng rng(13);
  std::vector<double> s, t, neg;
  std::vector<int> y, flipped;
  for (int i = 0; i < 100; ++i) {
    s.push_back(uniform01(rng));
    t.push_back(std::exp(3 * s.back()) + 1);
    neg.push_back(-s.back());
    y.push_back(i % 3 == 0 ? 1 : 0);
    flipped.push_back(1 - y.back());
  }
  const double a = auc(s, y);
  EXPECT_NEAR(auc(t, y), a, 1e-12);
  EXPECT_NEAR(auc(neg, y), 1.0 - a, 1e-12);
  EXPECT_NEAR(auc(s, flipped), 1.0 - a, 1e-12);
}

TEST(ThresholdMetrics, KnownValuesAtHalf) {
  const auto m = threshold_metrics({0.9, 0.8, 0.3, 0.6, 0.2, 0.1, 0.4, 0.05}, {1, 1, 1, 0, 0, 0, 0, 1});
  EXPECT_NEAR(*m.precision, 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(*m.recall, 0.5, 1e-12);
  EXPECT_NEAR(*m.specificity, 0.75, 1e-12);
  EXPECT_EQ(m.confusion.tp, 2u);
  EXPECT_EQ(m.confusion.fp, 1u);
  const auto edge = threshold_metrics({0.5}, {0});
  EXPECT_EQ(edge.confusion.fp, 1u);
}

TEST(ThresholdMetrics, UndefinedRatiosAreNotZero) {
  const auto m = threshold_metrics({0.1, 0.2}, {0, 0});
  EXPECT_FALSE(m.precision.has_value());
  EXPECT_FALSE(m.recall.has_value());
  EXPECT_EQ(*m.specificity, 1.0);
  EXPECT_EQ(format_metric(m.precision), "n/a");
  EXPECT_EQ(format_metric(0.8333333), "0.833");
}

TEST(GeometricMean, Examples) {
  EXPECT_NEAR(geometric_mean({0.9, 0.9, 0.9}), 0.9, 1e-12);
  EXPECT_NEAR(geometric_mean({1.0, 0.25}), 0.5, 1e-12);
  EXPECT_NEAR(geometric_mean({0.81, 0.64, 0.95}), oracle::geometric_mean({0.81, 0.64, 0.95}), 1e-12);
  EXPECT_THROW(geometric_mean({0.5, 0.0}), DataError);
  EXPECT_THROW(geometric_mean(std::vector<double>{}), DataError);
  const double g = geometric_mean({0.6, 0.7, 0.9});
  EXPECT_LE(g, 0.9);
  EXPECT_GE(g, 0.6);
}

TEST(Projection, PcaRecoversDominantAxis) {
  nn::Matrix<double> x(5, 3);
  x << -2, 0, 0, -1, 0, 0, 0, 0, 0, 1, 0, 0, 2, 0, 0;
  const auto y = pca_2d(x);
  ASSERT_EQ(y.rows(), 5);
  ASSERT_EQ(y.cols(), 2);
  for (int i = 0; i < 5; ++i) {
    EXPECT_NEAR(y(i, 0), x(i, 0), 1e-12);
    EXPECT_NEAR(y(i, 1), 0.0, 1e-12);
  }
  EXPECT_THROW(pca_2d(x.topRows(2)), DataError);
}

TEST(Projection, TsneDeterministicPerSeed) {
  Rng rng(3);
  nn::Matrix<double> x(30, 5);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = normal(rng) + (i % 30 < 15 ? 4.0 : 0.0);
  TsneOptions opt;
  opt.iterations = 200;
  opt.seed = 9;
  const auto a = project_2d(x, ProjectionMethod::tsne, opt);
  const auto b = project_2d(x, ProjectionMethod::tsne, opt);
  EXPECT_EQ(a, b);
  EXPECT_TRUE(a.allFinite());
  EXPECT_EQ(parse_projection("pca"), ProjectionMethod::pca);
  EXPECT_THROW(parse_projection("umap"), ConfigError);
}

TEST(Features, CsvShapeAndDeterminism) {
  nn::ExtractorConfig cfg;
  cfg.widths = {4, 6};
  nn::FeatureExtractor<float> f(cfg);
  Rng rng(1);
  f.init(rng);
  const auto data = testutil::patients_dataset(2, 2, 2);
  testutil::TempDir dir;
  export_features(f, data, dir.path / "a.csv");
  export_features(f, data, dir.path / "b.csv");
  const auto text = slurp(dir.path / "a.csv");
  EXPECT_EQ(text, slurp(dir.path / "b.csv"));
  std::istringstream lines(text);
  std::string header, line;
  std::getline(lines, header);
  EXPECT_EQ(header, "image_id,view_label,ab_label,pe_label,f0,f1,f2,f3,f4,f5");
  std::size_t rows = 0;
  while (std::getline(lines, line)) {
    ++rows;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 9);
  }
  EXPECT_EQ(rows, data.size());

  export_features(f, Dataset("empty", {}), dir.path / "empty.csv");
  EXPECT_EQ(slurp(dir.path / "empty.csv"), header + "\n");
}

namespace {

std::map<CellKey, CellMetrics> full_cells(const std::vector<std::string>& pres) {
  std::map<CellKey, CellMetrics> cells;
  double v = 0.6;
  for (const auto& pre : pres)
    for (const char* proto : {"LC", "FT", "NC"})
      for (Task t : kAllTasks) {
        CellMetrics m;
        m.auc = v;
        v = v >= 0.95 ? 0.6 : v + 0.01;
        cells[{t, pre, proto, "local"}] = m;
      }
  return cells;
}

}  // namespace

TEST(Report, MeansAreGeometric) {
  ReportLayout layout;
  layout.pretrainings = {"simclr"};
  const auto cells = full_cells(layout.pretrainings);
  const auto r = build_report(cells, layout);
  EXPECT_EQ(r.means.size(), 3u);
  const MeanKey k{"simclr", "LC", "local"};
  EXPECT_NEAR(r.means.at(k), oracle::geometric_mean({cells.at({Task::view, "simclr", "LC", "local"}).auc,
                                                      cells.at({Task::ab, "simclr", "LC", "local"}).auc,
                                                      cells.at({Task::pe, "simclr", "LC", "local"}).auc}),
              1e-12);
}

TEST(Report, MissingCellNamed) {
  ReportLayout layout;
  layout.pretrainings = {"simclr"};
  auto cells = full_cells(layout.pretrainings);
  cells.erase({Task::ab, "simclr", "FT", "local"});
  try {
    build_report(cells, layout);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("ab/simclr/FT/local"), std::string::npos);
  }
}

TEST(Report, RenderingAndJsonDeterministic) {
  ReportLayout layout;
  layout.pretrainings = {"simclr", "none"};
  const auto cells = full_cells(layout.pretrainings);
  const auto a = build_report(cells, layout), b = build_report(cells, layout);
  EXPECT_EQ(render_table(a), render_table(b));
  EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
  const auto back = cells_from_json(to_json(a));
  EXPECT_EQ(back.size(), cells.size());
  for (const auto& [k, m] : cells) EXPECT_EQ(back.at(k).auc, m.auc);
}

TEST(Report, FixtureTableMeansReproduce) {
  std::ifstream in(testutil::fixture("reference_auc.json"));
  const auto j = nlohmann::json::parse(in);
  const auto cells = cells_from_json(j);
  const auto layout = layout_from_json(j);
  const auto r = build_report(cells, layout);
  ASSERT_EQ(j.at("reference_means").size(), r.means.size());
  for (const auto& m : j.at("reference_means")) {
    const MeanKey k{m.at("pretraining"), m.at("protocol"), m.at("dataset")};
    EXPECT_NEAR(r.means.at(k), m.at("mean").get<double>(), 5e-4);
  }
}
