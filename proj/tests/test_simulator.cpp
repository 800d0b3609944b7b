#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <set>

#include "lineup/io.hpp"
#include "lineup/manifest.hpp"
#include "lineup/map_function.hpp"
#include "lineup/plate.hpp"
#include "lineup/qtl_scan.hpp"
#include "lineup/relabel.hpp"
#include "lineup/simulator.hpp"
#include "lineup/stats.hpp"

using namespace lineup;

namespace {

SimConfig small_config(std::uint64_t seed = 3) {
  SimConfig c;
  c.seed = seed;
  c.n_samples = 120;
  c.n_chromosomes = 2;
  c.markers_per_chr = 15;
  c.x_markers = 8;
  c.tissues = {"liver", "kidney"};
  c.eqtl_probes = 20;
  c.cross_probes = 20;
  c.noise_probes = 30;
  c.phenotype = true;
  return c;
}

// Mean and standard error of per-sample values.
std::pair<double, double> mean_se(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  const double sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  return {m, sd / std::sqrt(static_cast<double>(v.size()))};
}

std::string fingerprint(const Dataset& ds) {
  std::string s = format_genotypes(ds.geno) + format_map(ds.map) + format_plate(ds.plate) +
                  format_probe_annotation(ds.annotation);
  for (const auto& e : ds.expression) s += format_expression(e);
  if (ds.phenotypes) s += format_phenotypes(*ds.phenotypes);
  return s;
}

// Decisions a perfect DNA checker would produce for the given truth.
std::vector<RelabelDecision> oracle_decisions(const GridTruth& g) {
  std::vector<RelabelDecision> out;
  for (const auto& [label, content] : g.content) {
    RelabelDecision d;
    d.sample_id = label;
    if (content == label) {
      d.verdict = Verdict::Correct;
    } else if (content.empty()) {
      d.verdict = Verdict::Unfixable;
      d.evidence.max_similarity = 0.5;
    } else {
      d.verdict = g.clean(content) ? Verdict::Duplicate : Verdict::Fixable;
      d.new_label = content;
      d.evidence.max_similarity = 0.97;
      d.evidence.argmax_id = content;
    }
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace

TEST(Cross, GenotypeFrequenciesAreMendelian) {
  SimConfig c;
  c.genotype_error_rate = 0.0;
  const auto map = make_sim_map(c);
  const auto ct = simulate_cross(c, map);
  const std::size_t M = map.n_markers();
  std::vector<std::size_t> auto_cols;
  std::size_t k = 0;
  for (const auto& chr : map.chromosomes)
    for (std::size_t j = 0; j < chr.markers.size(); ++j, ++k)
      if (chr.kind == ChromosomeKind::Autosome) auto_cols.push_back(k);
  std::array<std::vector<double>, 3> freq;
  for (std::size_t i = 0; i < c.n_samples; ++i) {
    std::array<double, 3> n{};
    for (auto col : auto_cols) n[static_cast<std::size_t>(ct.true_calls[i * M + col])] += 1.0;
    for (int g = 0; g < 3; ++g) freq[g].push_back(n[g] / static_cast<double>(auto_cols.size()));
  }
  const std::array<double, 3> expect{0.25, 0.5, 0.25};
  for (int g = 0; g < 3; ++g) {
    const auto [m, se] = mean_se(freq[g]);
    EXPECT_LT(std::abs(m - expect[g]), 3.0 * se) << g;
  }
}

TEST(Cross, AdjacentChangesMatchTransitionMatrix) {
  SimConfig c;
  c.genotype_error_rate = 0.0;
  c.n_samples = 1000;
  c.include_x = false;
  c.chr_length_cM = 90.0;
  c.markers_per_chr = 10;
  const auto map = make_sim_map(c);
  const auto ct = simulate_cross(c, map);
  const double r = cf_rec_fraction(0.1);
  const double p_change = 2.0 * r - 1.5 * r * r;
  const std::size_t M = map.n_markers();
  std::vector<double> per_sample;
  for (std::size_t i = 0; i < c.n_samples; ++i) {
    double changes = 0.0, pairs = 0.0;
    std::size_t k = 0;
    for (const auto& chr : map.chromosomes) {
      for (std::size_t j = 0; j + 1 < chr.markers.size(); ++j) {
        changes += ct.true_calls[i * M + k + j] != ct.true_calls[i * M + k + j + 1];
        pairs += 1.0;
      }
      k += chr.markers.size();
    }
    per_sample.push_back(changes / pairs);
  }
  const auto [m, se] = mean_se(per_sample);
  EXPECT_LT(std::abs(m - p_change), 3.0 * se) << m << " vs " << p_change;
}

TEST(Cross, ZeroSpacingGivesConstantChromosomes) {
  SimConfig c;
  c.n_samples = 50;
  c.chr_length_cM = 0.0;
  c.genotype_error_rate = 0.0;
  const auto map = make_sim_map(c);
  const auto ct = simulate_cross(c, map);
  const std::size_t M = map.n_markers();
  for (std::size_t i = 0; i < c.n_samples; ++i) {
    std::size_t k = 0;
    for (const auto& chr : map.chromosomes) {
      for (std::size_t j = 1; j < chr.markers.size(); ++j) EXPECT_EQ(ct.true_calls[i * M + k + j], ct.true_calls[i * M + k]);
      k += chr.markers.size();
    }
  }
}

TEST(Cross, NoXInconsistenciesBeforePerturbation) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto sim = simulate_dataset(small_config(seed));
    for (auto f : check_x_sex(sim.clean.geno, sim.clean.map))
      EXPECT_NE(f, XSexFinding::SwapSuspect);
  }
}

TEST(Simulation, DeterministicAcrossRunsAndThreads) {
  auto c = small_config();
  c.scenario = Scenario::Headline;
  c.n_samples = 200;
  const auto a = simulate_dataset(c, 1), b = simulate_dataset(c, 3);
  EXPECT_EQ(fingerprint(a.dataset), fingerprint(b.dataset));
  EXPECT_EQ(dump_json(to_json(a.truth)), dump_json(to_json(b.truth)));
  c.seed = 4;
  EXPECT_NE(fingerprint(simulate_dataset(c).dataset), fingerprint(a.dataset));
}

TEST(Expression, NoiselessEqtlTakesThreeValues) {
  auto c = small_config();
  c.eqtl_noise_sd = 0.0;
  const auto sim = simulate_dataset(c);
  const auto& e = sim.clean.expression[0];
  for (std::size_t p = 0; p < c.eqtl_probes; ++p) {
    std::set<double> values;
    for (std::size_t i = 0; i < e.n_samples(); ++i) values.insert(e.at(i, p));
    EXPECT_LE(values.size(), 3u);
    for (double v : values) EXPECT_TRUE(v == -2.0 || v == 0.0 || v == 2.0) << v;
  }
}

TEST(Expression, EqtlProbesAreStrong) {
  // Single-position LOD at the causal marker, with fully informative genotypes.
  std::size_t strong = 0, total = 0;
  for (std::uint64_t seed : {11u, 12u}) {
    SimConfig c;
    c.seed = seed;
    c.genotype_error_rate = 0.0;
    const auto map = make_sim_map(c);
    const auto ct = simulate_cross(c, map);
    const auto expr = simulate_expression(c, map, ct);
    const std::size_t M = map.n_markers();
    std::map<std::pair<std::string, double>, std::size_t> column;
    std::size_t k = 0;
    for (const auto& chr : map.chromosomes)
      for (const auto& mk : chr.markers) column[{chr.name, mk.pos_cM}] = k++;
    for (const auto& e : expr.tissues) {
      for (std::size_t p = 0; p < c.eqtl_probes; ++p) {
        const auto& loc = *expr.annotation.find(e.probe_ids()[p]);
        const std::size_t col = column.at({loc.chromosome, loc.pos_cM});
        std::vector<double> y;
        std::vector<std::array<double, 3>> probs;
        for (std::size_t i = 0; i < e.n_samples(); ++i) {
          y.push_back(e.at(i, p));
          std::array<double, 3> pr{};
          pr[static_cast<std::size_t>(ct.true_calls[i * M + col])] = 1.0;
          probs.push_back(pr);
        }
        strong += hk_lod_at(y, probs).lod > 100.0;
        ++total;
      }
    }
  }
  EXPECT_GE(static_cast<double>(strong), 0.95 * static_cast<double>(total));
}

TEST(Expression, CrossTissueProbesCorrelate) {
  const auto sim = simulate_dataset(small_config());
  const auto& a = sim.clean.expression[0];
  const auto& b = sim.clean.expression[1];
  for (std::size_t k = 0; k < 20; ++k) {
    const std::string probe = "xt_" + std::to_string(k + 1);
    const auto pa = *a.probe_index(probe), pb = *b.probe_index(probe);
    std::vector<double> x, y;
    for (std::size_t i = 0; i < a.n_samples(); ++i) {
      x.push_back(a.at(i, pa));
      y.push_back(b.at(i, pb));
    }
    EXPECT_GT(pearson(x, y), 0.75) << probe;
  }
}

TEST(Inject, EmptyListIsIdentity) {
  const auto sim = simulate_dataset(small_config());
  const auto [out, truth] = inject_mixups(sim.clean, {}, 1);
  EXPECT_EQ(fingerprint(out), fingerprint(sim.clean));
  for (const auto& [label, content] : truth.dna.content) EXPECT_EQ(label, content);
  for (const auto& t : truth.tissues)
    for (const auto& [label, content] : t.content) EXPECT_EQ(label, content);
}

TEST(Inject, SwapIsAnInvolution) {
  const auto sim = simulate_dataset(small_config());
  const Perturbation dna_swap{"dna", PerturbKind::Swap, {"Mouse0003", "Mouse0040"}, {}, {}, 0, 0};
  const Perturbation liver_swap{"liver", PerturbKind::Swap, {"Mouse0007", "Mouse0008"}, {}, {}, 0, 0};
  const auto once = inject_mixups(sim.clean, {dna_swap, liver_swap}, 1).first;
  EXPECT_NE(fingerprint(once), fingerprint(sim.clean));
  EXPECT_EQ(once.geno.at(2, 0), sim.clean.geno.at(39, 0));
  const auto twice = inject_mixups(once, {dna_swap, liver_swap}, 1).first;
  EXPECT_EQ(fingerprint(twice), fingerprint(sim.clean));
}

TEST(Inject, UndoRestoresPermutations) {
  const auto sim = simulate_dataset(small_config());
  const std::vector<Perturbation> ps{
      {"dna", PerturbKind::Swap, {"Mouse0001", "Mouse0002"}, {}, {}, 0, 0},
      {"dna", PerturbKind::Cycle, {"Mouse0010", "Mouse0020", "Mouse0030"}, {}, {}, 0, 0},
      {"kidney", PerturbKind::Cycle, {"Mouse0050", "Mouse0051", "Mouse0052", "Mouse0053"}, {}, {}, 0, 0},
      {"liver", PerturbKind::Swap, {"Mouse0001", "Mouse0099"}, {}, {}, 0, 0}};
  const auto [out, truth] = inject_mixups(sim.clean, ps, 1);
  EXPECT_EQ(truth.dna.content.at("Mouse0020"), "Mouse0010");
  EXPECT_EQ(truth.dna.content.at("Mouse0010"), "Mouse0030");
  EXPECT_EQ(fingerprint(undo_permutation(out, truth)), fingerprint(sim.clean));
}

TEST(Inject, ConflictsAndBadReferencesThrow) {
  const auto sim = simulate_dataset(small_config());
  const Perturbation a{"dna", PerturbKind::Swap, {"Mouse0001", "Mouse0002"}, {}, {}, 0, 0};
  const Perturbation b{"dna", PerturbKind::Duplicate, {"Mouse0002", "Mouse0005"}, {}, {}, 0, 0};
  EXPECT_THROW(inject_mixups(sim.clean, {a, b}, 1), InputError);
  const Perturbation other_grid{"liver", PerturbKind::Swap, {"Mouse0001", "Mouse0002"}, {}, {}, 0, 0};
  EXPECT_NO_THROW(inject_mixups(sim.clean, {a, other_grid}, 1));
  const Perturbation unknown{"dna", PerturbKind::Omit, {"nobody"}, {}, {}, 0, 0};
  EXPECT_THROW(inject_mixups(sim.clean, {unknown}, 1), InputError);
  const Perturbation bad_grid{"brain", PerturbKind::Omit, {"Mouse0001"}, {}, {}, 0, 0};
  EXPECT_THROW(inject_mixups(sim.clean, {bad_grid}, 1), InputError);
  const auto off_plate = parse_perturbation("dna shift P2 F03 +1 3");  // P2 holds 24 wells, ending at H03
  EXPECT_THROW(inject_mixups(sim.clean, {off_plate}, 1), InputError);
}

TEST(Inject, DuplicateAndOmit) {
  const auto sim = simulate_dataset(small_config());
  const std::vector<Perturbation> ps{{"liver", PerturbKind::Duplicate, {"Mouse0004", "Mouse0009"}, {}, {}, 0, 0},
                                     {"kidney", PerturbKind::Omit, {"Mouse0011"}, {}, {}, 0, 0}};
  const auto [out, truth] = inject_mixups(sim.clean, ps, 1);
  const auto& liver = out.expression[0];
  for (std::size_t p = 0; p < liver.n_probes(); ++p)
    EXPECT_EQ(liver.at(*liver.sample_index("Mouse0009"), p), liver.at(*liver.sample_index("Mouse0004"), p));
  EXPECT_FALSE(out.expression[1].sample_index("Mouse0011"));
  EXPECT_EQ(out.expression[1].n_samples(), sim.clean.expression[1].n_samples() - 1);
  EXPECT_EQ(truth.tissues[1].omitted, (std::vector<std::string>{"Mouse0011"}));
}

TEST(Inject, ShiftRoundTripsThroughForensics) {
  const auto sim = simulate_dataset(small_config());
  const auto shift = parse_perturbation("dna shift P1 B03 +1 3");
  EXPECT_EQ(shift.describe(), "dna shift P1 B03 +1 3");
  const auto [out, truth] = inject_mixups(sim.clean, {shift}, 1);
  const auto res = detect_patterns(oracle_decisions(truth.dna), out.plate);
  ASSERT_EQ(res.findings.size(), 2u);
  std::map<FindingKind, const PlateFinding*> by_kind;
  for (const auto& f : res.findings) by_kind[f.kind] = &f;
  ASSERT_TRUE(by_kind.count(FindingKind::ShiftRun));
  ASSERT_TRUE(by_kind.count(FindingKind::Orphan));
  EXPECT_EQ(by_kind[FindingKind::ShiftRun]->offset, 1);
  EXPECT_EQ(by_kind[FindingKind::ShiftRun]->length, 3u);
  EXPECT_EQ(by_kind[FindingKind::Orphan]->wells.front().well.name(), "B03");
  // The vacated well holds an animal from outside the study.
  for (const auto& e : out.plate.entries)
    if (e.plate_id == "P1" && e.well.name() == "B03") {
      EXPECT_EQ(truth.dna.content.at(e.sample_id), "");
    }
}

TEST(Score, IdentityAndCounting) {
  const auto sim = simulate_dataset(small_config());
  const std::vector<Perturbation> ps{{"dna", PerturbKind::Swap, {"Mouse0001", "Mouse0002"}, {}, {}, 0, 0},
                                     {"dna", PerturbKind::Duplicate, {"Mouse0003", "Mouse0004"}, {}, {}, 0, 0},
                                     {"liver", PerturbKind::Swap, {"Mouse0005", "Mouse0006"}, {}, {}, 0, 0}};
  const auto [out, truth] = inject_mixups(sim.clean, ps, 1);
  std::vector<std::pair<std::string, std::vector<RelabelDecision>>> expr;
  for (const auto& t : truth.tissues) expr.emplace_back(t.grid, oracle_decisions(t));
  const auto perfect = score_recovery(expr, oracle_decisions(truth.dna), truth);
  EXPECT_EQ(perfect.mislabels, 4u);
  EXPECT_EQ(perfect.recovered, 4u);
  EXPECT_EQ(perfect.dna_duplicates, 1u);
  EXPECT_EQ(perfect.dna_duplicates_detected, 1u);
  EXPECT_EQ(perfect.false_relabels, 0u);

  // A checker that relabels a clean row and misses a swap.
  auto dna = oracle_decisions(truth.dna);
  for (auto& d : dna) {
    if (d.sample_id == "Mouse0001") {
      d.verdict = Verdict::Unfixable;
      d.new_label.reset();
    }
    if (d.sample_id == "Mouse0100") {
      d.verdict = Verdict::Fixable;
      d.new_label = "Mouse0101";
    }
  }
  const auto flawed = score_recovery(expr, dna, truth);
  EXPECT_EQ(flawed.recovered, 3u);
  EXPECT_EQ(flawed.false_relabels, 1u);
  EXPECT_EQ(flawed.misses, (std::vector<std::string>{"dna:Mouse0001"}));
  EXPECT_EQ(flawed.false_relabel_rows, (std::vector<std::string>{"dna:Mouse0100"}));
}

TEST(Scenario, HeadlineInventory) {
  auto c = small_config();
  c.n_samples = 300;
  c.scenario = Scenario::Headline;
  const auto sim = simulate_dataset(c);
  std::map<PerturbKind, std::size_t> dna_kinds;
  std::size_t expr_count = 0;
  for (const auto& p : sim.truth.perturbations) {
    if (p.grid == "dna") ++dna_kinds[p.kind];
    else ++expr_count;
  }
  EXPECT_EQ(dna_kinds[PerturbKind::ShiftRun], 1u);
  EXPECT_EQ(dna_kinds[PerturbKind::Swap], 10u);
  EXPECT_EQ(dna_kinds[PerturbKind::Cycle], 1u);
  EXPECT_EQ(dna_kinds[PerturbKind::Duplicate], 2u);
  EXPECT_EQ(expr_count, 2u * c.tissues.size() + 1u);
}

TEST(Scenario, DnaMislabelFraction) {
  auto c = small_config();
  c.n_samples = 200;
  c.scenario = Scenario::DnaMislabel;
  const auto sim = simulate_dataset(c);
  std::size_t moved = 0;
  for (const auto& [label, content] : sim.truth.dna.content) moved += label != content;
  EXPECT_EQ(moved, 20u);
}
