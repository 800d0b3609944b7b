#pragma once

// Aligning DNA samples to mRNA samples: observed eQTL genotypes come from the
// genotype probabilities, inferred eQTL genotypes from kNN classifiers on the
// expression of the eQTL's probes. Their agreement is the similarity.

#include <string>
#include <unordered_map>
#include <vector>

#include "lineup/decide.hpp"
#include "lineup/genoprob.hpp"
#include "lineup/knn.hpp"
#include "lineup/parallel.hpp"
#include "lineup/qtl_scan.hpp"
#include "lineup/types.hpp"

namespace lineup {

// Argmax genotype when its probability exceeds p_min, else Missing.
inline Genotype call_from_probs(const std::array<double, 3>& p, double p_min = 0.99) {
  const auto g = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
  return p[g] > p_min ? static_cast<Genotype>(g) : Genotype::Missing;
}

// eQTL x DNA-sample grid of observed genotypes.
struct ObservedGenotypes {
  std::vector<std::string> dna_ids;
  std::vector<std::vector<Genotype>> calls;  // [eqtl][dna sample]
};

inline ObservedGenotypes observe_eqtl_genotypes(const GenoProbTensor& probs, const std::vector<LocalEqtl>& eqtl,
                                                double p_min = 0.99) {
  ObservedGenotypes out{probs.sample_ids, {}};
  for (const auto& e : eqtl) {
    const ChromosomeProbs* cp = probs.find(e.chromosome);
    if (!cp || e.locus_index >= cp->n_loci) throw InputError("no genotype probabilities at eQTL " + e.locus_id);
    std::vector<Genotype> col(probs.sample_ids.size());
    for (std::size_t s = 0; s < col.size(); ++s) col[s] = call_from_probs(cp->at(s, e.locus_index), p_min);
    out.calls.push_back(std::move(col));
  }
  return out;
}

struct MatchCount {
  std::size_t matches = 0;
  std::size_t compared = 0;

  double proportion() const {
    return compared == 0 ? kNaN : static_cast<double>(matches) / static_cast<double>(compared);
  }
  MatchCount& operator+=(const MatchCount& o) {
    matches += o.matches;
    compared += o.compared;
    return *this;
  }
};

inline MatchCount count_matches(std::span<const Genotype> observed, std::span<const Genotype> inferred) {
  if (observed.size() != inferred.size()) throw std::invalid_argument("match_proportion: length mismatch");
  MatchCount m;
  for (std::size_t e = 0; e < observed.size(); ++e) {
    if (observed[e] == Genotype::Missing || inferred[e] == Genotype::Missing) continue;
    ++m.compared;
    if (observed[e] == inferred[e]) ++m.matches;
  }
  return m;
}

// Matches over eQTL where both entries are called; NaN when nothing compares.
inline double match_proportion(std::span<const Genotype> observed, std::span<const Genotype> inferred) {
  return count_matches(observed, inferred).proportion();
}

struct KnnSettings {
  std::size_t k = 40;
  double vote_min = 0.8;
  double filter_min = 0.7;
};

// Observed and inferred eQTL genotypes for one tissue.
struct EqtlGenotypeTable {
  std::string tissue;
  std::vector<LocalEqtl> eqtl;               // eQTL with a usable classifier
  std::vector<std::string> dna_ids;
  std::vector<std::string> mrna_ids;
  std::vector<std::vector<Genotype>> observed;  // [eqtl][dna]
  std::vector<std::vector<Genotype>> inferred;  // [eqtl][mrna]
  std::vector<std::string> excluded;         // dropped from second-pass training
  std::vector<std::string> dropped_eqtl;     // too few labeled samples for k
  bool second_pass_changed = false;

  // observed genotypes of DNA sample d across this tissue's eQTL
  std::vector<Genotype> observed_of(std::size_t d) const {
    std::vector<Genotype> v(eqtl.size());
    for (std::size_t e = 0; e < eqtl.size(); ++e) v[e] = observed[e][d];
    return v;
  }
  std::vector<Genotype> inferred_of(std::size_t m) const {
    std::vector<Genotype> v(eqtl.size());
    for (std::size_t e = 0; e < eqtl.size(); ++e) v[e] = inferred[e][m];
    return v;
  }
};

namespace detail {

struct EqtlCoords {
  std::size_t dims = 0;
  std::vector<double> coords;  // mrna x dims
};

inline EqtlCoords eqtl_coords(const ExpressionSet& expr, const LocalEqtl& e) {
  EqtlCoords c;
  c.dims = e.probe_ids.size();
  c.coords.assign(expr.n_samples() * c.dims, kNaN);
  for (std::size_t d = 0; d < c.dims; ++d) {
    auto p = expr.probe_index(e.probe_ids[d]);
    if (!p) continue;
    for (std::size_t i = 0; i < expr.n_samples(); ++i) c.coords[i * c.dims + d] = expr.at(i, *p);
  }
  return c;
}

}  // namespace detail

// Fits one classifier per eQTL on samples with both a DNA call and an array,
// scores each sample's self agreement, drops samples below filter_min from
// training, refits, and infers genotypes for every array.
inline EqtlGenotypeTable two_pass_classifiers(const ExpressionSet& expr, const std::vector<LocalEqtl>& eqtl,
                                              const ObservedGenotypes& observed, const KnnSettings& knn = {},
                                              std::size_t threads = 1) {
  EqtlGenotypeTable tab;
  tab.tissue = expr.tissue();
  tab.dna_ids = observed.dna_ids;
  tab.mrna_ids = expr.sample_ids();
  const std::size_t M = expr.n_samples();

  // mRNA row -> DNA row for samples carrying both.
  std::vector<std::optional<std::size_t>> dna_of(M);
  {
    std::unordered_map<std::string, std::size_t> di;
    for (std::size_t d = 0; d < observed.dna_ids.size(); ++d) di.emplace(observed.dna_ids[d], d);
    for (std::size_t m = 0; m < M; ++m)
      if (auto it = di.find(expr.sample_ids()[m]); it != di.end()) dna_of[m] = it->second;
  }

  std::vector<detail::EqtlCoords> coords(eqtl.size());
  for (std::size_t e = 0; e < eqtl.size(); ++e) coords[e] = detail::eqtl_coords(expr, eqtl[e]);

  auto run_pass = [&](const std::vector<char>& allowed, std::vector<std::optional<std::vector<Genotype>>>& inferred) {
    inferred.assign(eqtl.size(), std::nullopt);
    parallel_for(eqtl.size(), threads, [&](std::size_t e) {
      const auto& c = coords[e];
      std::vector<double> tc;
      std::vector<Genotype> tl;
      std::vector<std::string> ti;
      for (std::size_t m = 0; m < M; ++m) {
        if (!dna_of[m] || !allowed[m]) continue;
        tc.insert(tc.end(), c.coords.begin() + static_cast<std::ptrdiff_t>(m * c.dims),
                  c.coords.begin() + static_cast<std::ptrdiff_t>((m + 1) * c.dims));
        tl.push_back(observed.calls[e][*dna_of[m]]);
        ti.push_back(expr.sample_ids()[m]);
      }
      auto clf = fit_knn(c.dims, tc, tl, ti, knn.k, knn.vote_min);
      if (!clf) return;
      std::vector<Genotype> inf(M);
      for (std::size_t m = 0; m < M; ++m)
        inf[m] = clf->infer(std::span<const double>(&c.coords[m * c.dims], c.dims));
      inferred[e] = std::move(inf);
    });
  };

  std::vector<char> allowed(M, 1);
  std::vector<std::optional<std::vector<Genotype>>> first;
  run_pass(allowed, first);

  // Self agreement per sample across the eQTL that produced a classifier.
  for (std::size_t m = 0; m < M; ++m) {
    if (!dna_of[m]) continue;
    MatchCount mc;
    for (std::size_t e = 0; e < eqtl.size(); ++e) {
      if (!first[e]) continue;
      const Genotype o = observed.calls[e][*dna_of[m]];
      const Genotype i = (*first[e])[m];
      if (o == Genotype::Missing || i == Genotype::Missing) continue;
      ++mc.compared;
      if (o == i) ++mc.matches;
    }
    if (mc.compared > 0 && mc.proportion() < knn.filter_min) {
      allowed[m] = 0;
      tab.excluded.push_back(expr.sample_ids()[m]);
    }
  }

  std::vector<std::optional<std::vector<Genotype>>> final_pass;
  if (tab.excluded.empty()) {
    final_pass = std::move(first);
  } else {
    run_pass(allowed, final_pass);
    tab.second_pass_changed = true;
  }

  for (std::size_t e = 0; e < eqtl.size(); ++e) {
    if (!final_pass[e]) {
      tab.dropped_eqtl.push_back(eqtl[e].locus_id + "@" + expr.tissue());
      continue;
    }
    tab.eqtl.push_back(eqtl[e]);
    tab.observed.push_back(observed.calls[e]);
    tab.inferred.push_back(std::move(*final_pass[e]));
  }
  return tab;
}

// Pooled match counts, DNA rows x mRNA columns, summed over tables.
// Columns are the union of mRNA ids in table order.
inline SimilarityMatrix combine_tissues(const std::vector<EqtlGenotypeTable>& tables) {
  std::vector<std::string> rows;
  std::vector<std::string> cols;
  std::unordered_map<std::string, std::size_t> row_pos, col_pos;
  for (const auto& t : tables) {
    for (const auto& d : t.dna_ids)
      if (row_pos.emplace(d, rows.size()).second) rows.push_back(d);
    for (const auto& m : t.mrna_ids)
      if (col_pos.emplace(m, cols.size()).second) cols.push_back(m);
  }
  std::vector<MatchCount> counts(rows.size() * cols.size());
  for (const auto& t : tables) {
    std::vector<std::size_t> rmap(t.dna_ids.size()), cmap(t.mrna_ids.size());
    for (std::size_t d = 0; d < t.dna_ids.size(); ++d) rmap[d] = row_pos.at(t.dna_ids[d]);
    for (std::size_t m = 0; m < t.mrna_ids.size(); ++m) cmap[m] = col_pos.at(t.mrna_ids[m]);
    std::vector<std::vector<Genotype>> inf(t.mrna_ids.size());
    for (std::size_t m = 0; m < t.mrna_ids.size(); ++m) inf[m] = t.inferred_of(m);
    for (std::size_t d = 0; d < t.dna_ids.size(); ++d) {
      const auto obs = t.observed_of(d);
      for (std::size_t m = 0; m < t.mrna_ids.size(); ++m)
        counts[rmap[d] * cols.size() + cmap[m]] += count_matches(obs, inf[m]);
    }
  }
  SimilarityMatrix sim(rows, cols, ScoreRange::Proportion);
  for (std::size_t k = 0; k < counts.size(); ++k) sim.scores[k] = counts[k].proportion();
  return sim;
}

inline SimilarityMatrix tissue_similarity(const EqtlGenotypeTable& table) { return combine_tissues({table}); }

inline std::vector<RelabelDecision> decide_dna_labels(const SimilarityMatrix& sim,
                                                      DecisionThresholds th = {0.8, 0.8, 0.2}) {
  return decide_labels(sim, th);
}

}  // namespace lineup
