#pragma once

// Aligning expression arrays across tissues: probes that track each other
// between two tissues give a sample-by-sample similarity, combined per tissue
// by the median over the other tissues.

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "lineup/decide.hpp"
#include "lineup/parallel.hpp"
#include "lineup/stats.hpp"
#include "lineup/types.hpp"

namespace lineup {

struct TissuePairProbes {
  std::string tissue_s;
  std::string tissue_t;
  std::vector<std::string> probe_ids;
  std::vector<double> correlations;
};

// Probes whose correlation across shared samples (pairwise complete) between
// tissues s and t exceeds the threshold. Probes keep tissue-s order.
inline TissuePairProbes select_correlated_probes(const ExpressionSet& s, const ExpressionSet& t,
                                                 double threshold = 0.75) {
  TissuePairProbes out{s.tissue(), t.tissue(), {}, {}};
  std::vector<std::size_t> rows_s, rows_t;
  for (std::size_t i = 0; i < s.n_samples(); ++i) {
    if (auto j = t.sample_index(s.sample_ids()[i])) {
      rows_s.push_back(i);
      rows_t.push_back(*j);
    }
  }
  std::vector<double> x(rows_s.size()), y(rows_s.size());
  for (std::size_t p = 0; p < s.n_probes(); ++p) {
    auto q = t.probe_index(s.probe_ids()[p]);
    if (!q) continue;
    for (std::size_t k = 0; k < rows_s.size(); ++k) {
      x[k] = s.at(rows_s[k], p);
      y[k] = t.at(rows_t[k], *q);
    }
    const double r = pearson(x, y);
    if (!is_missing(r) && r > threshold) {
      out.probe_ids.push_back(s.probe_ids()[p]);
      out.correlations.push_back(r);
    }
  }
  return out;
}

namespace detail {

// Rows of `e` restricted to `probes`, each standardized when complete.
struct ProbeRows {
  std::size_t n_probes = 0;
  std::vector<double> raw;       // rows x probes
  std::vector<double> z;         // standardized rows (complete, nonconstant rows only)
  std::vector<char> complete;
};

inline ProbeRows probe_rows(const ExpressionSet& e, const std::vector<std::string>& probes) {
  ProbeRows pr;
  pr.n_probes = probes.size();
  std::vector<std::optional<std::size_t>> cols;
  for (const auto& id : probes) cols.push_back(e.probe_index(id));
  pr.raw.assign(e.n_samples() * probes.size(), kNaN);
  pr.z.assign(pr.raw.size(), 0.0);
  pr.complete.assign(e.n_samples(), 0);
  const double P = static_cast<double>(probes.size());
  for (std::size_t i = 0; i < e.n_samples(); ++i) {
    double* row = &pr.raw[i * probes.size()];
    bool full = true;
    for (std::size_t k = 0; k < probes.size(); ++k) {
      row[k] = cols[k] ? e.at(i, *cols[k]) : kNaN;
      full = full && !is_missing(row[k]);
    }
    if (!full || probes.size() < 3) continue;
    double mean = 0.0;
    for (std::size_t k = 0; k < probes.size(); ++k) mean += row[k];
    mean /= P;
    double ss = 0.0;
    for (std::size_t k = 0; k < probes.size(); ++k) ss += (row[k] - mean) * (row[k] - mean);
    if (ss <= 0.0) continue;
    const double inv = 1.0 / std::sqrt(ss);
    double* zr = &pr.z[i * probes.size()];
    for (std::size_t k = 0; k < probes.size(); ++k) zr[k] = (row[k] - mean) * inv;
    pr.complete[i] = 1;
  }
  return pr;
}

inline double row_correlation(const ProbeRows& a, std::size_t i, const ProbeRows& b, std::size_t j) {
  const std::size_t P = a.n_probes;
  if (a.complete[i] && b.complete[j]) {
    const double* x = &a.z[i * P];
    const double* y = &b.z[j * P];
    double s = 0.0;
    for (std::size_t k = 0; k < P; ++k) s += x[k] * y[k];
    return std::clamp(s, -1.0, 1.0);
  }
  return pearson(std::span<const double>(&a.raw[i * P], P), std::span<const double>(&b.raw[j * P], P));
}

}  // namespace detail

// r^{st}_{ij}: correlation, across the selected probes, between sample i in
// tissue s (rows) and sample j in tissue t (columns).
inline SimilarityMatrix cross_tissue_similarity(const ExpressionSet& s, const ExpressionSet& t,
                                                const TissuePairProbes& probes, std::size_t threads = 1) {
  SimilarityMatrix sim(s.sample_ids(), t.sample_ids(), ScoreRange::Correlation);
  if (probes.probe_ids.empty()) return sim;
  const auto a = detail::probe_rows(s, probes.probe_ids);
  const auto b = detail::probe_rows(t, probes.probe_ids);
  parallel_for(s.n_samples(), threads, [&](std::size_t i) {
    for (std::size_t j = 0; j < t.n_samples(); ++j) sim.at(i, j) = detail::row_correlation(a, i, b, j);
  });
  return sim;
}

// r^s_{ij} = median over t of r^{st}_{ij}, using only the pairs where both
// samples were assayed. Columns are the union of the input column ids in
// order of first appearance.
inline SimilarityMatrix combine_median(const std::vector<std::string>& row_ids,
                                       const std::vector<SimilarityMatrix>& per_pair) {
  std::vector<std::string> cols;
  std::unordered_map<std::string, std::size_t> col_pos;
  for (const auto& m : per_pair)
    for (const auto& c : m.col_ids)
      if (col_pos.emplace(c, cols.size()).second) cols.push_back(c);

  SimilarityMatrix out(row_ids, cols, ScoreRange::Correlation);
  // For each input matrix: row map and column map into the output.
  std::vector<std::vector<std::optional<std::size_t>>> row_maps;
  std::vector<std::vector<std::size_t>> col_maps;
  for (const auto& m : per_pair) {
    std::unordered_map<std::string, std::size_t> ri;
    for (std::size_t i = 0; i < m.n_rows(); ++i) ri.emplace(m.row_ids[i], i);
    std::vector<std::optional<std::size_t>> rm(row_ids.size());
    for (std::size_t i = 0; i < row_ids.size(); ++i)
      if (auto it = ri.find(row_ids[i]); it != ri.end()) rm[i] = it->second;
    row_maps.push_back(std::move(rm));
    std::vector<std::size_t> cm(m.n_cols());
    for (std::size_t j = 0; j < m.n_cols(); ++j) cm[j] = col_pos.at(m.col_ids[j]);
    col_maps.push_back(std::move(cm));
  }

  std::vector<std::vector<double>> cell(cols.size());
  for (std::size_t i = 0; i < row_ids.size(); ++i) {
    for (auto& c : cell) c.clear();
    for (std::size_t k = 0; k < per_pair.size(); ++k) {
      if (!row_maps[k][i]) continue;
      const auto& m = per_pair[k];
      for (std::size_t j = 0; j < m.n_cols(); ++j) {
        const double v = m.at(*row_maps[k][i], j);
        if (!is_missing(v)) cell[col_maps[k][j]].push_back(v);
      }
    }
    for (std::size_t j = 0; j < cols.size(); ++j) out.at(i, j) = median(cell[j]);
  }
  return out;
}

inline std::vector<RelabelDecision> decide_expression_labels(const SimilarityMatrix& sim,
                                                             DecisionThresholds th = {0.8, 0.8, 0.1}) {
  return decide_labels(sim, th);
}

struct DuplicatePair {
  std::string a;
  std::string b;
  double score = 0.0;
};

// Within-tissue pairs of arrays whose correlation across `probes` is at least dup_min.
inline std::vector<DuplicatePair> detect_within_tissue_duplicates(const ExpressionSet& e,
                                                                  const std::vector<std::string>& probes,
                                                                  double dup_min = 0.95) {
  std::vector<DuplicatePair> out;
  if (e.n_samples() < 2 || probes.empty()) return out;
  const auto rows = detail::probe_rows(e, probes);
  for (std::size_t i = 0; i < e.n_samples(); ++i) {
    for (std::size_t j = i + 1; j < e.n_samples(); ++j) {
      const double r = detail::row_correlation(rows, i, rows, j);
      if (!is_missing(r) && r >= dup_min) {
        const auto& x = e.sample_ids()[i];
        const auto& y = e.sample_ids()[j];
        out.push_back(x < y ? DuplicatePair{x, y, r} : DuplicatePair{y, x, r});
      }
    }
  }
  std::sort(out.begin(), out.end(), [](const auto& p, const auto& q) {
    return std::tie(p.a, p.b) < std::tie(q.a, q.b);
  });
  return out;
}

// Result of aligning every tissue against the others.
struct ExpressionAlignment {
  std::vector<TissuePairProbes> pair_probes;                    // s < t in tissue order
  std::vector<SimilarityMatrix> combined;                       // one per tissue, r^s
  std::vector<std::vector<RelabelDecision>> decisions;          // one per tissue
  std::vector<std::vector<DuplicatePair>> within_duplicates;    // one per tissue
};

inline ExpressionAlignment align_expression(const std::vector<ExpressionSet>& tissues, double probe_corr_min,
                                            const DecisionThresholds& th, double dup_min,
                                            std::size_t threads = 1) {
  ExpressionAlignment out;
  const std::size_t T = tissues.size();
  std::vector<std::vector<const TissuePairProbes*>> probes_for(T, std::vector<const TissuePairProbes*>(T));
  out.pair_probes.reserve(T * (T - 1) / 2);
  for (std::size_t s = 0; s < T; ++s)
    for (std::size_t t = s + 1; t < T; ++t)
      out.pair_probes.push_back(select_correlated_probes(tissues[s], tissues[t], probe_corr_min));
  {
    std::size_t k = 0;
    for (std::size_t s = 0; s < T; ++s)
      for (std::size_t t = s + 1; t < T; ++t, ++k) probes_for[s][t] = probes_for[t][s] = &out.pair_probes[k];
  }

  for (std::size_t s = 0; s < T; ++s) {
    std::vector<SimilarityMatrix> mats;
    std::vector<std::string> union_probes;
    for (std::size_t t = 0; t < T; ++t) {
      if (t == s) continue;
      mats.push_back(cross_tissue_similarity(tissues[s], tissues[t], *probes_for[s][t], threads));
      for (const auto& p : probes_for[s][t]->probe_ids)
        if (std::find(union_probes.begin(), union_probes.end(), p) == union_probes.end()) union_probes.push_back(p);
    }
    auto combined = combine_median(tissues[s].sample_ids(), mats);
    out.decisions.push_back(decide_expression_labels(combined, th));
    out.combined.push_back(std::move(combined));
    out.within_duplicates.push_back(detect_within_tissue_duplicates(tissues[s], union_probes, dup_min));
  }
  return out;
}

}  // namespace lineup
