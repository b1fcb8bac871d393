#include <random>

#include <gtest/gtest.h>

#include "lwsep/primitives.hpp"

namespace lwsep {
namespace {

using namespace primitives;

double two_partition_optimum(const RowMatrixXd& x) {
  const auto n = static_cast<std::size_t>(x.rows());
  double best = std::numeric_limits<double>::infinity();
  for (std::uint64_t mask = 1; mask < (std::uint64_t{1} << (n - 1)); ++mask) {
    double obj = 0;
    for (int side = 0; side < 2; ++side) {
      Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(x.cols());
      int cnt = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (((mask >> i) & 1) == static_cast<std::uint64_t>(side)) {
          mean += x.row(static_cast<Eigen::Index>(i));
          ++cnt;
        }
      }
      mean /= cnt;
      for (std::size_t i = 0; i < n; ++i) {
        if (((mask >> i) & 1) == static_cast<std::uint64_t>(side)) {
          obj += (x.row(static_cast<Eigen::Index>(i)) - mean).squaredNorm();
        }
      }
    }
    best = std::min(best, obj);
  }
  return best;
}

TEST(KMeans, TwoBlobsReachExhaustiveOptimum) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0, 0.3);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 4 + trial % 9;
    RowMatrixXd x(n, 2);
    for (int i = 0; i < n; ++i) x.row(i) << g(rng) + (i % 2 ? 5.0 : 0.0), g(rng);
    auto km_rng = make_rng(trial);
    const auto r = kmeans(x, 2, km_rng);
    EXPECT_NEAR(r.objective, two_partition_optimum(x), 1e-9);
  }
}

TEST(KMeans, TrivialCases) {
  RowMatrixXd x(4, 3);
  x << 1, 2, 3, 4, 5, 6, 7, 8, 9, 0, 0, 1;
  auto rng = make_rng(2);
  const auto all = kmeans(x, 4, rng);
  EXPECT_NEAR(all.objective, 0.0, 1e-12);
  const auto one = kmeans(x, 1, rng);
  EXPECT_TRUE(one.centroids.row(0).isApprox(x.colwise().mean(), 1e-12));
  EXPECT_THROW(kmeans(x, 5, rng), Error);
}

TEST(KMeans, MonotoneNearestAndDeterministic) {
  std::mt19937_64 gen(3);
  std::normal_distribution<double> g(0, 1);
  RowMatrixXd x(400, 6);
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = g(gen) + 3.0 * static_cast<double>(i % 7 == j);
  auto r1 = make_rng(9);
  auto r2 = make_rng(9);
  const auto a = kmeans(x, 12, r1);
  const auto b = kmeans(x, 12, r2);
  EXPECT_EQ(a.assignment, b.assignment);
  EXPECT_EQ(a.centroids, b.centroids);
  for (std::size_t k = 1; k < a.objective_history.size(); ++k) {
    EXPECT_LE(a.objective_history[k], a.objective_history[k - 1] * (1 + 1e-12));
  }
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double own = (x.row(i) - a.centroids.row(a.assignment[static_cast<std::size_t>(i)])).squaredNorm();
    for (Eigen::Index c = 0; c < a.centroids.rows(); ++c) {
      EXPECT_LE(own, (x.row(i) - a.centroids.row(c)).squaredNorm() + 1e-9);
    }
  }
}

TEST(KMeans, DuplicateRowsStillGiveKCentroids) {
  RowMatrixXd x = RowMatrixXd::Zero(10, 2);
  x(9, 0) = 1.0;
  auto rng = make_rng(4);
  const auto r = kmeans(x, 3, rng);
  EXPECT_EQ(r.centroids.rows(), 3);
  EXPECT_NEAR(r.objective, 0.0, 1e-12);
}

TEST(Pooling, MeansPerSuperpoint) {
  std::vector<Point3> pts(4, Point3::Zero());
  const std::vector<std::uint32_t> ids{0, 1, 0, 1};
  const auto p = SuperpointPartition::from_labels(ids, pts);
  RowMatrixXd f(4, 2);
  f << 0, 0, 5, 5, 2, 4, 5, 5;
  const auto pooled = pool_features(f, p);
  EXPECT_EQ(pooled.row(0), Eigen::RowVector2d(1, 2));
  EXPECT_EQ(pooled.row(1), Eigen::RowVector2d(5, 5));
}

TEST(Pooling, RandomMatchesGroupBy) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1, 1);
  const std::size_t n = 300;
  std::vector<Point3> pts(n, Point3::Zero());
  std::vector<std::uint32_t> ids(n);
  RowMatrixXf f(n, 7);
  for (std::size_t i = 0; i < n; ++i) {
    ids[i] = static_cast<std::uint32_t>(rng() % 13);
    for (int c = 0; c < 7; ++c) f(static_cast<Eigen::Index>(i), c) = static_cast<float>(u(rng));
  }
  const auto p = SuperpointPartition::from_labels(ids, pts);
  const auto pooled = pool_features(f, p);
  for (std::size_t s = 0; s < p.count(); ++s) {
    Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(7);
    int cnt = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (p.id(i) == s) {
        sum += f.row(static_cast<Eigen::Index>(i)).cast<double>();
        ++cnt;
      }
    }
    EXPECT_TRUE(pooled.row(static_cast<Eigen::Index>(s)).isApprox(sum / cnt, 1e-12));
  }
}

TEST(Decay, Values) {
  EXPECT_DOUBLE_EQ(decay_coefficient(0, 100, 0.2), 1.0);
  EXPECT_DOUBLE_EQ(decay_coefficient(50, 100, 0.2), 0.5);
  EXPECT_DOUBLE_EQ(decay_coefficient(100, 100, 0.2), 0.2);
  EXPECT_DOUBLE_EQ(decay_coefficient(200, 100, 0.2), 0.2);
  double prev = 2.0;
  for (int e = 0; e < 300; ++e) {
    const double w = decay_coefficient(e, 100, 0.2);
    EXPECT_LE(w, prev);
    EXPECT_GE(w, 0.2);
    prev = w;
  }
}

TEST(Augment, BlocksScaleAndSlice) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-1, 1);
  RowMatrixXd f(5, 4), g(5, 5), r(5, 3);
  for (auto* m : {&f, &g, &r})
    for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = u(rng);
  AugmentWeights w;
  const auto out = augment_features(f, g, r, 150, w);
  ASSERT_EQ(out.cols(), 12);
  EXPECT_EQ(out.leftCols(4), f);
  EXPECT_TRUE(out.middleCols(4, 5).isApprox(0.4 * g, 1e-15));
  EXPECT_TRUE(out.rightCols(3).isApprox(0.2 * r, 1e-15));
  const auto zero = augment_features(RowMatrixXd::Zero(5, 4), g, r, 0, w);
  EXPECT_TRUE(zero.leftCols(4).isZero());
  EXPECT_TRUE(zero.middleCols(4, 5).isApprox(2.0 * g));
  EXPECT_THROW(augment_features(f, RowMatrixXd::Zero(5, 4), r, 0, w), Error);
}

TEST(FitPrimitives, BijectionReducedKAndDeterminism) {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<RowMatrixXd> tiles;
  for (int t = 0; t < 3; ++t) {
    RowMatrixXd m(100, 4 + kHandcraftedDim);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(gen);
    tiles.push_back(m);
  }
  auto rng = make_rng(1);
  const auto fit = fit_primitives(tiles, 300, 4, rng, {}, 1.0);
  std::vector<int> used(300, 0);
  for (const auto& t : fit.superpoint_labels)
    for (auto l : t) ++used[l];
  for (int c : used) EXPECT_EQ(c, 1);
  EXPECT_TRUE(fit.warnings.empty());

  auto rng2 = make_rng(1);
  const auto small = fit_primitives(tiles, 500, 4, rng2, {}, 1.0);
  EXPECT_EQ(small.model.count(), 300u);
  EXPECT_FALSE(small.warnings.empty());

  auto ra = make_rng(3), rb = make_rng(3);
  const auto a = fit_primitives(tiles, 20, 4, ra, {}, 1.0);
  const auto b = fit_primitives(tiles, 20, 4, rb, {}, 1.0);
  EXPECT_EQ(a.superpoint_labels, b.superpoint_labels);

  std::vector<Point3> pts(3, Point3::Zero());
  const std::vector<std::uint32_t> ids{1, 0, 1};
  const auto p = SuperpointPartition::from_labels(ids, pts);
  const std::vector<std::uint32_t> sp_labels{7, 9};
  EXPECT_EQ(point_labels(p, sp_labels), (std::vector<std::uint32_t>{7, 9, 7}));
}

TEST(Logits, CosineSimilarity) {
  PrimitiveModel m;
  m.neural_dim = 3;
  m.centroids.resize(2, 3 + kHandcraftedDim);
  m.centroids.setZero();
  m.centroids.row(0).head(3) << 2, 0, 0;
  m.centroids.row(1).head(3) << 0, 1, 1;
  m.centroids.rightCols(kHandcraftedDim).setConstant(9.0);  // ignored
  RowMatrixXf f(3, 3);
  f << 5, 0, 0, 0, 0, 0, 0, 0, 0;
  f.row(2) << 0, 1, -1;
  const auto l = classify_logits(f, m);
  EXPECT_FLOAT_EQ(l(0, 0), 1.0f);
  EXPECT_FLOAT_EQ(l(0, 1), 0.0f);
  EXPECT_TRUE(l.row(1).isZero());
  EXPECT_NEAR(l(2, 0), 0.0f, 1e-7);
  EXPECT_NEAR(l(2, 1), 0.0f, 1e-7);
}

TEST(Logits, ArgmaxMatchesBruteForceCosine) {
  std::mt19937_64 gen(8);
  std::normal_distribution<double> g(0, 1);
  PrimitiveModel m;
  m.neural_dim = 16;
  m.centroids.resize(40, 16 + kHandcraftedDim);
  for (Eigen::Index i = 0; i < m.centroids.size(); ++i) m.centroids.data()[i] = g(gen);
  RowMatrixXd f(200, 16);
  for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = g(gen);
  const auto l = classify_logits(f, m);
  for (Eigen::Index i = 0; i < f.rows(); ++i) {
    Eigen::Index best = 0;
    double best_cos = -2;
    for (Eigen::Index s = 0; s < 40; ++s) {
      const Eigen::RowVectorXd c = m.centroids.row(s).head(16);
      const double cs = f.row(i).dot(c) / (f.row(i).norm() * c.norm());
      if (cs > best_cos) {
        best_cos = cs;
        best = s;
      }
    }
    Eigen::Index arg;
    l.row(i).maxCoeff(&arg);
    EXPECT_EQ(arg, best);
  }
}

TEST(Model, CheckpointRoundTrip) {
  PrimitiveModel m;
  m.neural_dim = 2;
  m.centroids = RowMatrixXd::Random(5, 2 + kHandcraftedDim);
  m.fit_coefficient = 0.7;
  io::ByteWriter w;
  write_model(w, m);
  io::ByteReader r(w.bytes());
  const auto back = read_model(r);
  EXPECT_EQ(back.centroids, m.centroids);
  EXPECT_EQ(back.neural_dim, 2u);
  EXPECT_DOUBLE_EQ(back.fit_coefficient, 0.7);
  auto truncated = w.bytes();
  truncated.resize(truncated.size() - 3);
  io::ByteReader rt(truncated);
  EXPECT_THROW(read_model(rt), io::ParseError);
}

}  // namespace
}  // namespace lwsep
