#include <gtest/gtest.h>

#include <random>
#include <vector>

#include "lineup/knn.hpp"

using namespace lineup;

namespace {

struct Training {
  std::vector<double> coords;
  std::vector<Genotype> labels;
  std::vector<std::string> ids;

  void add(std::vector<double> c, Genotype g) {
    coords.insert(coords.end(), c.begin(), c.end());
    labels.push_back(g);
    ids.push_back("s" + std::to_string(1000 + ids.size()));
  }
  std::optional<KnnClassifier> fit(std::size_t dims, std::size_t k = 40) const {
    return fit_knn(dims, coords, labels, ids, k);
  }
};

// Exactly 40 training points, `bb` of them BB and the rest BR.
Genotype vote_with(std::size_t bb) {
  Training t;
  for (std::size_t i = 0; i < 40; ++i) t.add({static_cast<double>(i)}, i < bb ? Genotype::BB : Genotype::BR);
  const std::vector<double> q{3.0};
  return t.fit(1)->infer(q);
}

}  // namespace

TEST(Knn, VoteBoundaryIsStrict) {
  EXPECT_EQ(vote_with(36), Genotype::BB);
  EXPECT_EQ(vote_with(33), Genotype::BB);
  EXPECT_EQ(vote_with(32), Genotype::Missing);
  EXPECT_EQ(vote_with(8), Genotype::Missing);  // 32 BR is exactly 80%
  EXPECT_EQ(vote_with(7), Genotype::BR);
}

TEST(Knn, TooFewLabeledRowsGivesNoClassifier) {
  Training t;
  for (int i = 0; i < 45; ++i) t.add({static_cast<double>(i)}, i < 6 ? Genotype::Missing : Genotype::RR);
  EXPECT_FALSE(t.fit(1));
  EXPECT_TRUE(t.fit(1, 39));
  EXPECT_EQ(t.fit(1, 39)->size(), 39u);
}

TEST(Knn, MissingCoordinatesSkippedInTrainingAndQuery) {
  Training t;
  for (int i = 0; i < 41; ++i) t.add({static_cast<double>(i), i == 0 ? kNaN : 0.0}, Genotype::RR);
  const auto clf = t.fit(2);
  ASSERT_TRUE(clf);
  EXPECT_EQ(clf->size(), 40u);
  EXPECT_EQ(clf->infer(std::vector<double>{1.0, 0.0}), Genotype::RR);
  EXPECT_EQ(clf->infer(std::vector<double>{kNaN, 0.0}), Genotype::Missing);
  EXPECT_THROW(clf->infer(std::vector<double>{1.0}), std::invalid_argument);
}

TEST(Knn, DistanceTiesBreakOnSmallerId) {
  // 32 BB at the query, 7 RR nearby, then an RR and a BB point tied for the
  // 40th slot.
  Training u;
  for (int i = 0; i < 32; ++i) u.add({0.0}, Genotype::BB);
  for (int i = 0; i < 7; ++i) u.add({0.5}, Genotype::RR);
  u.add({-2.0}, Genotype::RR);  // id s1039
  u.add({2.0}, Genotype::BB);   // id s1040
  // The 40th neighbor is s1039 (RR), so BB has 32/40 and the call is Missing.
  EXPECT_EQ(u.fit(1)->infer(std::vector<double>{0.0}), Genotype::Missing);
  u.ids[39] = "zz";
  // Now the BB point s1040 wins the tie: 33/40.
  EXPECT_EQ(u.fit(1)->infer(std::vector<double>{0.0}), Genotype::BB);
}

TEST(Knn, FortyPointsUseWholeSet) {
  Training t;
  for (int i = 0; i < 40; ++i) t.add({static_cast<double>(i * i)}, i < 34 ? Genotype::RR : Genotype::BB);
  const auto clf = t.fit(1);
  for (double q : {-100.0, 0.0, 500.0, 1e6}) EXPECT_EQ(clf->infer(std::vector<double>{q}), Genotype::RR);
}

TEST(Knn, ThreeClustersHeldOut) {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> z(0.0, 0.1);
  std::uniform_int_distribution<int> g(0, 2);
  Training t;
  std::vector<std::pair<double, Genotype>> held;
  for (int i = 0; i < 700; ++i) {
    const int k = g(rng);
    const double x = static_cast<double>(k) + z(rng);
    if (i < 500)
      t.add({x}, static_cast<Genotype>(k));
    else
      held.emplace_back(x, static_cast<Genotype>(k));
  }
  const auto clf = t.fit(1);
  std::size_t right = 0;
  for (const auto& [x, truth] : held) right += clf->infer(std::vector<double>{x}) == truth;
  EXPECT_GE(static_cast<double>(right) / held.size(), 0.99);
}

TEST(Knn, AffineRescalingInvariant) {
  std::mt19937_64 rng(23);
  std::normal_distribution<double> z(0.0, 0.4);
  std::uniform_int_distribution<int> g(0, 2);
  Training t, scaled;
  for (int i = 0; i < 200; ++i) {
    const int k = g(rng);
    const double a = k + z(rng), b = -0.5 * k + z(rng);
    t.add({a, b}, static_cast<Genotype>(k));
    scaled.add({3.7 * a - 2.0, 3.7 * b + 11.0}, static_cast<Genotype>(k));
  }
  const auto c1 = t.fit(2), c2 = scaled.fit(2);
  std::uniform_real_distribution<double> u(-1.0, 3.0);
  for (int q = 0; q < 300; ++q) {
    const double a = u(rng), b = u(rng) - 1.5;
    EXPECT_EQ(c1->infer(std::vector<double>{a, b}), c2->infer(std::vector<double>{3.7 * a - 2.0, 3.7 * b + 11.0}));
  }
}

TEST(Knn, MisalignedInputsThrow) {
  const std::vector<double> c{1.0, 2.0};
  const std::vector<Genotype> l{Genotype::BB};
  const std::vector<std::string> ids{"a"};
  EXPECT_THROW(fit_knn(1, c, l, ids), std::invalid_argument);
}
