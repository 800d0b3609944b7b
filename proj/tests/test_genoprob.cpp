#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <random>
#include <vector>

#include "lineup/genoprob.hpp"

using namespace lineup;

namespace {

GeneticMap one_chromosome(const std::vector<double>& pos) {
  Chromosome c{"1", ChromosomeKind::Autosome, {}};
  for (std::size_t i = 0; i < pos.size(); ++i) c.markers.push_back({"m" + std::to_string(i + 1), pos[i]});
  return GeneticMap{{c}};
}

GenotypeMatrix single_sample(const std::vector<Genotype>& calls) {
  std::vector<std::string> markers;
  for (std::size_t i = 0; i < calls.size(); ++i) markers.push_back("m" + std::to_string(i + 1));
  return GenotypeMatrix({"s1"}, markers, calls, {Sex::Female});
}

// Posterior by summing the joint probability over all 3^L genotype paths.
std::vector<std::array<double, 3>> enumerate_posterior(const std::vector<Genotype>& obs, const std::vector<double>& pos,
                                                       double e) {
  const std::size_t L = obs.size();
  std::vector<Transition> trans;
  for (std::size_t l = 1; l < L; ++l) trans.push_back(f2_transition(cf_rec_fraction((pos[l] - pos[l - 1]) / 100.0)));
  const std::array<double, 3> prior{0.25, 0.5, 0.25};
  auto emit = [&](Genotype o, int g) {
    if (o == Genotype::Missing) return 1.0;
    return static_cast<int>(o) == g ? 1.0 - e : e / 2.0;
  };
  std::vector<std::array<double, 3>> post(L, {0.0, 0.0, 0.0});
  std::size_t paths = 1;
  for (std::size_t l = 0; l < L; ++l) paths *= 3;
  std::vector<int> g(L);
  double total = 0.0;
  for (std::size_t code = 0; code < paths; ++code) {
    std::size_t c = code;
    for (std::size_t l = 0; l < L; ++l) {
      g[l] = static_cast<int>(c % 3);
      c /= 3;
    }
    double p = prior[g[0]] * emit(obs[0], g[0]);
    for (std::size_t l = 1; l < L; ++l) p *= trans[l - 1][g[l - 1]][g[l]] * emit(obs[l], g[l]);
    total += p;
    for (std::size_t l = 0; l < L; ++l) post[l][g[l]] += p;
  }
  for (auto& a : post)
    for (double& x : a) x /= total;
  return post;
}

}  // namespace

TEST(Pseudomarkers, ShortIntervalGetsNone) {
  const auto grid = insert_pseudomarkers(one_chromosome({0.0, 0.4}));
  ASSERT_EQ(grid.chromosomes[0].loci.size(), 2u);
}

TEST(Pseudomarkers, OneCentimorganGetsOneAtMidpoint) {
  const auto grid = insert_pseudomarkers(one_chromosome({0.0, 1.0}));
  const auto& loci = grid.chromosomes[0].loci;
  ASSERT_EQ(loci.size(), 3u);
  EXPECT_TRUE(loci[1].pseudomarker);
  EXPECT_DOUBLE_EQ(loci[1].pos_cM, 0.5);
}

TEST(Pseudomarkers, TwoCentimorgansGetsThree) {
  const auto grid = insert_pseudomarkers(one_chromosome({0.0, 2.0}));
  const auto& loci = grid.chromosomes[0].loci;
  ASSERT_EQ(loci.size(), 5u);
  EXPECT_DOUBLE_EQ(loci[1].pos_cM, 0.5);
  EXPECT_DOUBLE_EQ(loci[2].pos_cM, 1.0);
  EXPECT_DOUBLE_EQ(loci[3].pos_cM, 1.5);
}

TEST(Pseudomarkers, SpacingBoundAndMarkersKept) {
  const std::vector<double> pos{0.0, 0.3, 3.7, 10.0, 10.0, 17.25};
  const auto grid = insert_pseudomarkers(one_chromosome(pos));
  const auto& loci = grid.chromosomes[0].loci;
  std::size_t markers = 0;
  for (std::size_t i = 0; i < loci.size(); ++i) {
    if (!loci[i].pseudomarker) {
      EXPECT_DOUBLE_EQ(loci[i].pos_cM, pos[markers++]);
    }
    if (i > 0) {
      EXPECT_LE(loci[i].pos_cM - loci[i - 1].pos_cM, 0.5 + 1e-12);
    }
  }
  EXPECT_EQ(markers, pos.size());
}

TEST(Genoprob, SingleMarkerBayes) {
  const double e = 0.002;
  const auto grid = insert_pseudomarkers(one_chromosome({0.0}));
  const auto probs = calc_genoprob(single_sample({Genotype::BB}), grid, e);
  const auto p = probs.chromosomes[0].at(0, 0);
  const double a = 0.25 * (1 - e), b = 0.5 * e / 2, c = 0.25 * e / 2;
  EXPECT_NEAR(p[0], a / (a + b + c), 1e-12);
  EXPECT_NEAR(p[1], b / (a + b + c), 1e-12);
  EXPECT_NEAR(p[2], c / (a + b + c), 1e-12);
  // 0.2495 / 0.25025, 0.0005 / 0.25025, 0.00025 / 0.25025
  EXPECT_NEAR(p[0], 0.997003, 1e-6);
  EXPECT_NEAR(p[1], 0.001998, 1e-6);
  EXPECT_NEAR(p[2], 0.000999, 1e-6);
}

TEST(Genoprob, AllMissingReturnsPrior) {
  const auto grid = insert_pseudomarkers(one_chromosome({0.0, 3.0, 7.5}));
  const auto probs = calc_genoprob(single_sample({Genotype::Missing, Genotype::Missing, Genotype::Missing}), grid);
  const auto& cp = probs.chromosomes[0];
  for (std::size_t l = 0; l < cp.n_loci; ++l) {
    const auto p = cp.at(0, l);
    EXPECT_NEAR(p[0], 0.25, 1e-12);
    EXPECT_NEAR(p[1], 0.5, 1e-12);
    EXPECT_NEAR(p[2], 0.25, 1e-12);
  }
}

TEST(Genoprob, ThreeMarkersMatchEnumerationForEveryPattern) {
  const std::vector<double> pos{0.0, 4.0, 11.0};
  const auto grid = insert_pseudomarkers(one_chromosome(pos), 100.0);
  for (int code = 0; code < 64; ++code) {
    std::vector<Genotype> obs(3);
    int c = code;
    for (auto& o : obs) {
      o = static_cast<Genotype>(c % 4);
      c /= 4;
    }
    const auto probs = calc_genoprob(single_sample(obs), grid, 0.002);
    const auto oracle = enumerate_posterior(obs, pos, 0.002);
    for (std::size_t l = 0; l < 3; ++l)
      for (std::size_t g = 0; g < 3; ++g) EXPECT_NEAR(probs.chromosomes[0].at(0, l, g), oracle[l][g], 1e-10);
  }
}

TEST(Genoprob, RandomShortChromosomesMatchEnumeration) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> gap(0.0, 30.0);
  std::uniform_int_distribution<int> tok(0, 3);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t L = 1 + rep % 5;
    std::vector<double> pos{0.0};
    for (std::size_t l = 1; l < L; ++l) pos.push_back(pos.back() + gap(rng));
    std::vector<Genotype> obs(L);
    for (auto& o : obs) o = static_cast<Genotype>(tok(rng));
    const double e = rep % 2 ? 0.002 : 0.05;
    const auto probs = calc_genoprob(single_sample(obs), insert_pseudomarkers(one_chromosome(pos), 1000.0), e);
    const auto oracle = enumerate_posterior(obs, pos, e);
    for (std::size_t l = 0; l < L; ++l) {
      for (std::size_t g = 0; g < 3; ++g) EXPECT_NEAR(probs.chromosomes[0].at(0, l, g), oracle[l][g], 1e-10);
    }
  }
}

TEST(Genoprob, ConcentratesWhenNeighboursAgree) {
  const auto grid = insert_pseudomarkers(one_chromosome({0.0, 1.0, 2.0}));
  for (Genotype g : {Genotype::BB, Genotype::BR, Genotype::RR}) {
    const auto probs = calc_genoprob(single_sample({g, g, g}), grid, 0.002);
    const auto& cp = probs.chromosomes[0];
    std::size_t middle = 0;
    for (std::size_t l = 0; l < grid.chromosomes[0].loci.size(); ++l)
      if (grid.chromosomes[0].loci[l].id == "m2") middle = l;
    EXPECT_GT(cp.at(0, middle, static_cast<std::size_t>(g)), 0.99);
  }
}

TEST(Genoprob, ZeroGapIsIdentityTransition) {
  const auto t = f2_transition(0.0);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) EXPECT_EQ(t[i][j], i == j ? 1.0 : 0.0);
}

TEST(Genoprob, TransitionRowsSumToOne) {
  for (double r : {0.0, 0.01, 0.2, 0.49}) {
    const auto t = f2_transition(r);
    for (const auto& row : t) EXPECT_NEAR(row[0] + row[1] + row[2], 1.0, 1e-15);
  }
}

TEST(Genoprob, SumsToOneAndSampleOrderEquivariant) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> tok(0, 3);
  const std::vector<double> pos{0.0, 2.0, 2.0, 9.5, 20.0, 21.0, 40.0};
  std::vector<std::string> markers;
  for (std::size_t i = 0; i < pos.size(); ++i) markers.push_back("m" + std::to_string(i + 1));
  const std::size_t n = 12;
  std::vector<Genotype> calls(n * pos.size());
  for (auto& c : calls) c = static_cast<Genotype>(tok(rng));
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back("s" + std::to_string(i));
  const GenotypeMatrix g(ids, markers, calls, std::vector<Sex>(n, Sex::Male));

  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = (i * 5 + 3) % n;
  std::vector<Genotype> pcalls;
  std::vector<std::string> pids;
  for (std::size_t i : perm) {
    pids.push_back(ids[i]);
    for (std::size_t m = 0; m < pos.size(); ++m) pcalls.push_back(g.at(i, m));
  }
  const GenotypeMatrix gp(pids, markers, pcalls, std::vector<Sex>(n, Sex::Male));

  const auto grid = insert_pseudomarkers(one_chromosome(pos));
  const auto a = calc_genoprob(g, grid, 0.002, 3);
  const auto b = calc_genoprob(gp, grid, 0.002, 1);
  const auto& ca = a.chromosomes[0];
  const auto& cb = b.chromosomes[0];
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t l = 0; l < ca.n_loci; ++l) {
      const auto p = ca.at(perm[k], l);
      EXPECT_NEAR(p[0] + p[1] + p[2], 1.0, 1e-9);
      for (double x : p) {
        EXPECT_GE(x, 0.0);
        EXPECT_LE(x, 1.0);
      }
      const auto q = cb.at(k, l);
      for (std::size_t gg = 0; gg < 3; ++gg) EXPECT_EQ(p[gg], q[gg]);
    }
  }
}

TEST(Genoprob, XChromosomeSkipped) {
  GeneticMap map = one_chromosome({0.0, 5.0});
  map.chromosomes.push_back({"X", ChromosomeKind::X, {{"x1", 0.0}}});
  const GenotypeMatrix g({"s1"}, {"m1", "m2", "x1"}, {Genotype::BB, Genotype::BB, Genotype::RR}, {Sex::Male});
  const auto probs = calc_genoprob(g, insert_pseudomarkers(map));
  ASSERT_EQ(probs.chromosomes.size(), 1u);
  EXPECT_EQ(probs.chromosomes[0].name, "1");
}

TEST(Genoprob, LongChromosomeStaysFinite) {
  std::vector<double> pos;
  std::vector<Genotype> obs;
  for (int i = 0; i < 3000; ++i) {
    pos.push_back(i * 0.05);
    obs.push_back(static_cast<Genotype>(i % 3));
  }
  const auto probs = calc_genoprob(single_sample(obs), insert_pseudomarkers(one_chromosome(pos)));
  const auto& cp = probs.chromosomes[0];
  for (std::size_t l = 0; l < cp.n_loci; ++l) {
    const auto p = cp.at(0, l);
    EXPECT_TRUE(std::isfinite(p[0]) && std::isfinite(p[1]) && std::isfinite(p[2]));
    EXPECT_NEAR(p[0] + p[1] + p[2], 1.0, 1e-9);
  }
}
