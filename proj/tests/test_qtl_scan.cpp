#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <map>
#include <random>
#include <vector>

#include "lineup/qtl_scan.hpp"

using namespace lineup;

namespace {

using Probs = std::vector<std::array<double, 3>>;

std::array<double, 3> certain(int g) {
  std::array<double, 3> p{0.0, 0.0, 0.0};
  p[g] = 1.0;
  return p;
}

Probs random_probs(std::mt19937_64& rng, std::size_t n) {
  std::gamma_distribution<double> gam(0.7, 1.0);
  Probs p(n);
  for (auto& row : p) {
    double s = 0.0;
    for (double& v : row) s += (v = gam(rng) + 1e-3);
    for (double& v : row) v /= s;
  }
  return p;
}

// LOD from group means: the residual sums of squares of a one-way layout.
double anova_lod(const std::vector<double>& y, const std::vector<int>& alt_group, const std::vector<int>& null_group) {
  auto rss = [&](const std::vector<int>& grp) {
    std::map<int, std::pair<double, double>> acc;
    for (std::size_t i = 0; i < y.size(); ++i) {
      acc[grp[i]].first += y[i];
      acc[grp[i]].second += 1.0;
    }
    double r = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      const auto& [sum, cnt] = acc[grp[i]];
      r += (y[i] - sum / cnt) * (y[i] - sum / cnt);
    }
    return r;
  };
  return 0.5 * static_cast<double>(y.size()) * std::log10(rss(null_group) / rss(alt_group));
}

GeneticMap small_map(std::size_t n_chr, std::size_t markers, double spacing) {
  GeneticMap map;
  for (std::size_t c = 0; c < n_chr; ++c) {
    Chromosome chr{std::to_string(c + 1), ChromosomeKind::Autosome, {}};
    for (std::size_t m = 0; m < markers; ++m)
      chr.markers.push_back({"c" + std::to_string(c + 1) + "m" + std::to_string(m + 1), m * spacing});
    map.chromosomes.push_back(chr);
  }
  return map;
}

// F2 genotypes along each chromosome from the Markov chain at the marker spacing.
GenotypeMatrix simulate_f2(std::mt19937_64& rng, const GeneticMap& map, std::size_t n) {
  std::vector<std::string> ids, markers;
  for (std::size_t i = 0; i < n; ++i) ids.push_back("s" + std::to_string(i));
  for (const auto& c : map.chromosomes)
    for (const auto& m : c.markers) markers.push_back(m.id);
  std::vector<Genotype> calls;
  std::vector<Sex> sex;
  std::uniform_real_distribution<double> u;
  for (std::size_t i = 0; i < n; ++i) {
    sex.push_back(i % 2 ? Sex::Male : Sex::Female);
    for (const auto& c : map.chromosomes) {
      int g = 0;
      for (std::size_t m = 0; m < c.markers.size(); ++m) {
        const double x = u(rng);
        if (m == 0) {
          g = x < 0.25 ? 0 : (x < 0.75 ? 1 : 2);
        } else {
          const auto t = f2_transition(cf_rec_fraction((c.markers[m].pos_cM - c.markers[m - 1].pos_cM) / 100.0));
          g = x < t[g][0] ? 0 : (x < t[g][0] + t[g][1] ? 1 : 2);
        }
        calls.push_back(static_cast<Genotype>(g));
      }
    }
  }
  // calls were appended sample-major in marker order
  return GenotypeMatrix(ids, markers, calls, sex);
}

}  // namespace

TEST(HkLod, WorkedExample) {
  const std::vector<double> y{1, 2, 3, 4};
  const Probs p{certain(0), certain(0), certain(2), certain(2)};
  const auto fit = hk_lod_at(y, p);
  EXPECT_NEAR(fit.lod, 2.0 * std::log10(5.0), 1e-12);
  EXPECT_NEAR(fit.lod, 1.3979, 1e-4);
  EXPECT_EQ(fit.n_used, 4u);
  EXPECT_TRUE(fit.rank_deficient);  // no BR sample, so the P(BR) column is all zero
}

TEST(HkLod, ConstantPhenotypeIsZero) {
  std::mt19937_64 rng(1);
  const auto p = random_probs(rng, 10);
  EXPECT_EQ(hk_lod_at(std::vector<double>(10, 3.5), p).lod, 0.0);
}

TEST(HkLod, MissingPhenotypeDropped) {
  const std::vector<double> y{1, 2, kNaN, 3, 4};
  const Probs p{certain(0), certain(0), certain(1), certain(2), certain(2)};
  const auto fit = hk_lod_at(y, p);
  EXPECT_EQ(fit.n_used, 4u);
  EXPECT_NEAR(fit.lod, 2.0 * std::log10(5.0), 1e-12);
}

TEST(HkLod, MisalignedInputsThrow) {
  EXPECT_THROW(hk_lod_at(std::vector<double>{1, 2}, Probs{certain(0)}), std::invalid_argument);
}

TEST(HkLod, AffineInvarianceAndDuplicationDoubling) {
  std::mt19937_64 rng(42);
  std::normal_distribution<double> z;
  std::uniform_real_distribution<double> scale(0.1, 10.0);
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t n = 8 + rep % 13;
    const auto p = random_probs(rng, n);
    std::vector<Sex> sex(n);
    std::vector<double> y(n), ya(n);
    const double a = (rep % 2 ? -1.0 : 1.0) * scale(rng), b = 5.0 * z(rng);
    for (std::size_t i = 0; i < n; ++i) {
      sex[i] = i % 3 ? Sex::Female : Sex::Male;
      y[i] = p[i][1] - 2.0 * p[i][2] + z(rng);
      ya[i] = a * y[i] + b;
    }
    for (bool with_sex : {false, true}) {
      const std::span<const Sex> s = with_sex ? std::span<const Sex>(sex) : std::span<const Sex>();
      const double lod = hk_lod_at(y, p, s).lod;
      EXPECT_NEAR(hk_lod_at(ya, p, s).lod, lod, 1e-9 * std::max(1.0, lod));

      std::vector<double> y2(y);
      y2.insert(y2.end(), y.begin(), y.end());
      Probs p2(p);
      p2.insert(p2.end(), p.begin(), p.end());
      std::vector<Sex> s2(sex);
      s2.insert(s2.end(), sex.begin(), sex.end());
      const std::span<const Sex> ss = with_sex ? std::span<const Sex>(s2) : std::span<const Sex>();
      EXPECT_NEAR(hk_lod_at(y2, p2, ss).lod, 2.0 * lod, 1e-9 * std::max(1.0, lod));
    }
  }
}

TEST(HkLod, FullyInformativeMatchesAnova) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> z;
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t n = 30;
    Probs p(n);
    std::vector<Sex> sex(n);
    std::vector<double> y(n);
    std::vector<int> geno(n), sex_group(n), both(n), none(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
      geno[i] = static_cast<int>(i % 3);
      p[i] = certain(geno[i]);
      sex[i] = (i / 3) % 2 ? Sex::Male : Sex::Female;
      sex_group[i] = sex[i] == Sex::Male;
      both[i] = 3 * sex_group[i] + geno[i];
      y[i] = 0.5 * geno[i] + 0.3 * sex_group[i] * geno[i] + z(rng);
    }
    EXPECT_NEAR(hk_lod_at(y, p).lod, anova_lod(y, geno, none), 1e-9);
    EXPECT_NEAR(hk_lod_at(y, p, sex, true).lod, anova_lod(y, both, sex_group), 1e-9);
  }
}

TEST(HkLod, UnknownSexDroppedWithCovariate) {
  const std::vector<double> y{1, 2, 3, 4, 9};
  const Probs p{certain(0), certain(1), certain(2), certain(1), certain(0)};
  const std::vector<Sex> sex{Sex::Female, Sex::Male, Sex::Female, Sex::Male, Sex::Unknown};
  EXPECT_EQ(hk_lod_at(y, p, sex).n_used, 4u);
}

TEST(SupportInterval, MonotonePeak) {
  ChromosomeScan cs;
  for (int cm = 0; cm <= 80; cm += 5) {
    cs.positions_cM.push_back(cm);
    // peak 12 at 40, at least 10 on [30, 55], below 10 outside
    double lod;
    if (cm <= 40)
      lod = 12.0 - 0.2 * (40 - cm);
    else
      lod = 12.0 - 0.13 * (cm - 40);
    cs.lod.push_back(lod);
  }
  summarize_curve(cs);
  EXPECT_DOUBLE_EQ(cs.peak_lod, 12.0);
  EXPECT_DOUBLE_EQ(cs.positions_cM[cs.peak_index], 40.0);
  EXPECT_DOUBLE_EQ(cs.interval_lo_cM, 30.0);
  EXPECT_DOUBLE_EQ(cs.interval_hi_cM, 55.0);
}

TEST(SupportInterval, StopsAtFirstDip) {
  ChromosomeScan cs;
  cs.positions_cM = {0, 10, 20, 30, 40};
  cs.lod = {11.5, 5.0, 11.0, 12.0, 10.5};
  summarize_curve(cs);
  EXPECT_DOUBLE_EQ(cs.interval_lo_cM, 20.0);
  EXPECT_DOUBLE_EQ(cs.interval_hi_cM, 40.0);
}

TEST(Classify, Rules) {
  ScanResult scan;
  ChromosomeScan a, b, c;
  a.chromosome = "1";
  a.peak_lod = 50.0;
  a.interval_lo_cM = 30.0;
  a.interval_hi_cM = 55.0;
  b.chromosome = "2";
  b.peak_lod = 8.0;
  c.chromosome = "3";
  c.peak_lod = 4.9;
  scan.chromosomes = {a, b, c};
  const ProbeLocation probe{"p", "1", 40.0, true};
  const auto cls = classify_local_trans(scan, &probe);
  EXPECT_EQ(cls[0], EqtlClass::Local);
  EXPECT_EQ(cls[1], EqtlClass::Trans);
  EXPECT_EQ(cls[2], EqtlClass::None);

  const ProbeLocation outside{"q", "1", 60.0, true};
  EXPECT_EQ(classify_local_trans(scan, &outside)[0], EqtlClass::Trans);
  const ProbeLocation unlocated{"u", "", 0.0, false};
  for (auto v : classify_local_trans(scan, &unlocated)) EXPECT_EQ(v, EqtlClass::None);
  for (auto v : classify_local_trans(scan, nullptr)) EXPECT_EQ(v, EqtlClass::None);
}

TEST(GenomeScan, EachLocusReproducesSingleFit) {
  std::mt19937_64 rng(3);
  const auto map = small_map(2, 6, 8.0);
  const auto geno = simulate_f2(rng, map, 60);
  const auto grid = insert_pseudomarkers(map, 2.0);
  const auto probs = calc_genoprob(geno, grid);
  std::normal_distribution<double> z;
  std::vector<double> y(geno.n_samples());
  for (auto& v : y) v = z(rng);
  y[5] = kNaN;
  const auto scan = genome_scan(y, probs, grid, geno.sex());
  ASSERT_EQ(scan.chromosomes.size(), 2u);
  for (std::size_t c = 0; c < 2; ++c) {
    const auto& cp = probs.chromosomes[c];
    const auto& cs = scan.chromosomes[c];
    ASSERT_EQ(cs.lod.size(), cp.n_loci);
    for (std::size_t l = 0; l < cp.n_loci; ++l) {
      Probs p(geno.n_samples());
      for (std::size_t s = 0; s < p.size(); ++s) p[s] = cp.at(s, l);
      EXPECT_DOUBLE_EQ(cs.lod[l], hk_lod_at(y, p, geno.sex()).lod);
      EXPECT_GE(cs.lod[l], 0.0);
    }
    EXPECT_LE(cs.interval_lo_cM, cs.positions_cM[cs.peak_index]);
    EXPECT_GE(cs.interval_hi_cM, cs.positions_cM[cs.peak_index]);
  }
}

TEST(GenomeScan, ManyMatchesOneAtATimeAndThreads) {
  std::mt19937_64 rng(4);
  const auto map = small_map(3, 5, 10.0);
  const auto geno = simulate_f2(rng, map, 80);
  const auto grid = insert_pseudomarkers(map, 2.5);
  const auto probs = calc_genoprob(geno, grid);
  std::normal_distribution<double> z;
  std::vector<std::vector<double>> ys(4, std::vector<double>(80));
  for (auto& y : ys)
    for (auto& v : y) v = z(rng);
  ys[2][7] = kNaN;
  const auto many = genome_scan_many(ys, {"a", "b", "c", "d"}, probs, grid, geno.sex(), true, 3);
  for (std::size_t t = 0; t < ys.size(); ++t) {
    const auto one = genome_scan(ys[t], probs, grid, geno.sex());
    for (std::size_t c = 0; c < one.chromosomes.size(); ++c)
      EXPECT_EQ(many[t].chromosomes[c].lod, one.chromosomes[c].lod);
  }
  EXPECT_EQ(many[1].trait, "b");
}

TEST(GenomeScan, NullTraitsStayBelowFive) {
  std::mt19937_64 rng(12);
  const auto map = small_map(5, 11, 10.0);
  const auto geno = simulate_f2(rng, map, 200);
  const auto grid = insert_pseudomarkers(map, 2.0);
  const auto probs = calc_genoprob(geno, grid);
  std::normal_distribution<double> z;
  int below = 0;
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> y(200);
    for (auto& v : y) v = z(rng);
    if (genome_scan(y, probs, grid, geno.sex()).max_lod() < 5.0) ++below;
  }
  EXPECT_GE(below, 18);
}

TEST(GenomeScan, StrongQtlFoundAtItsLocus) {
  std::mt19937_64 rng(13);
  const auto map = small_map(2, 11, 10.0);
  const auto geno = simulate_f2(rng, map, 200);
  const auto grid = insert_pseudomarkers(map, 1.0);
  const auto probs = calc_genoprob(geno, grid);
  std::normal_distribution<double> z;
  const std::size_t m = *geno.marker_index("c2m4");  // 30 cM on chromosome 2
  std::vector<double> y(200);
  for (std::size_t i = 0; i < 200; ++i) y[i] = static_cast<double>(geno.at(i, m)) + 0.5 * z(rng);
  const auto scan = genome_scan(normal_quantile_transform(y), probs, grid, geno.sex());
  const auto& c2 = scan.chromosomes[1];
  EXPECT_GT(c2.peak_lod, 20.0);
  EXPECT_LE(c2.interval_lo_cM, 30.0);
  EXPECT_GE(c2.interval_hi_cM, 30.0);
  const ProbeLocation probe{"p", "2", 30.0, true};
  EXPECT_EQ(classify_local_trans(scan, &probe)[1], EqtlClass::Local);
}

TEST(LocalEqtl, SelectsStrongProbeAndGroupsByLocus) {
  std::mt19937_64 rng(21);
  const auto map = small_map(2, 11, 10.0);
  const std::size_t n = 500;
  const auto geno = simulate_f2(rng, map, n);
  const auto grid = insert_pseudomarkers(map);
  const auto probs = calc_genoprob(geno, grid);
  std::normal_distribution<double> z;
  const std::size_t m = *geno.marker_index("c1m5");  // 40 cM
  const std::vector<std::string> probes{"strong", "strong2", "noise", "unlocated", "weak"};
  std::vector<double> v(n * probes.size());
  for (std::size_t i = 0; i < n; ++i) {
    const double g = static_cast<double>(geno.at(i, m));
    v[i * 5 + 0] = 2.0 * g + 0.25 * z(rng);
    v[i * 5 + 1] = -1.5 * g + 0.25 * z(rng);
    v[i * 5 + 2] = z(rng);
    v[i * 5 + 3] = 2.0 * g + 0.25 * z(rng);
    v[i * 5 + 4] = 0.1 * g + z(rng);
  }
  const ExpressionSet expr("liver", geno.sample_ids(), probes, v);
  const ProbeAnnotation annot({{"strong", "1", 40.1, true},
                               {"strong2", "1", 39.9, true},
                               {"noise", "1", 40.0, true},
                               {"unlocated", "", 0.0, false},
                               {"weak", "2", 10.0, true}});
  const auto sel = select_local_eqtl(expr, annot, probs, grid);
  ASSERT_EQ(sel.size(), 1u);
  EXPECT_EQ(sel[0].chromosome, "1");
  EXPECT_DOUBLE_EQ(sel[0].pos_cM, 40.0);
  EXPECT_EQ(sel[0].probe_ids, (std::vector<std::string>{"strong", "strong2"}));
  for (double lod : sel[0].lods) EXPECT_GT(lod, 100.0);

  // Oracle: the strong probe's LOD at the marker from a direct fit.
  const auto& cp = probs.chromosomes[0];
  std::size_t locus = nearest_locus(grid.chromosomes[0], 40.1);
  Probs p(n);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    p[i] = cp.at(i, locus);
    y[i] = v[i * 5];
  }
  EXPECT_DOUBLE_EQ(sel[0].lods[0], hk_lod_at(y, p).lod);

  EXPECT_TRUE(select_local_eqtl(expr, annot, probs, grid, 1e9).empty());
}

TEST(LocalEqtl, NearestLocusTieGoesLow) {
  GridChromosome chr{"1", ChromosomeKind::Autosome, {{"a", 0.0, false}, {"b", 1.0, false}, {"c", 2.0, false}}};
  EXPECT_EQ(nearest_locus(chr, 0.5), 0u);
  EXPECT_EQ(nearest_locus(chr, 1.5), 1u);
  EXPECT_EQ(nearest_locus(chr, 1.6), 2u);
  EXPECT_EQ(nearest_locus(chr, -4.0), 0u);
}
