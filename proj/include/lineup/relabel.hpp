#pragma once

// Applying relabel decisions, plus the independent consistency checks:
// duplicate DNA, X-chromosome genotype vs recorded sex, expression sex.

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "lineup/dataset.hpp"
#include "lineup/types.hpp"

namespace lineup {

struct GenotypeDuplicate {
  std::string a;
  std::string b;
  std::size_t matches = 0;
  std::size_t typed = 0;  // markers called in both
  double identity() const { return typed == 0 ? 0.0 : static_cast<double>(matches) / static_cast<double>(typed); }
};

// Pairs whose identity over markers typed in both is at least identity_min.
inline std::vector<GenotypeDuplicate> find_genotype_duplicates(const GenotypeMatrix& geno, double identity_min = 0.98) {
  std::vector<GenotypeDuplicate> out;
  const std::size_t m = geno.n_markers();
  const auto& calls = geno.calls();
  for (std::size_t i = 0; i < geno.n_samples(); ++i) {
    const Genotype* a = calls.data() + i * m;
    for (std::size_t j = i + 1; j < geno.n_samples(); ++j) {
      const Genotype* b = calls.data() + j * m;
      std::size_t typed = 0, same = 0;
      for (std::size_t k = 0; k < m; ++k) {
        if (a[k] == Genotype::Missing || b[k] == Genotype::Missing) continue;
        ++typed;
        same += a[k] == b[k];
      }
      GenotypeDuplicate d{geno.sample_ids()[i], geno.sample_ids()[j], same, typed};
      if (typed > 0 && d.identity() >= identity_min) {
        if (d.b < d.a) std::swap(d.a, d.b);
        out.push_back(std::move(d));
      }
    }
  }
  std::sort(out.begin(), out.end(), [](const auto& p, const auto& q) { return std::tie(p.a, p.b) < std::tie(q.a, q.b); });
  return out;
}

// Turns a DNA decision into duplicate-of when its genotypes match a sample
// judged correct and that sample is also its best expression match. Catches
// duplicates whose second-best match is too close for the gap rule.
inline std::size_t mark_genotype_duplicates(std::vector<RelabelDecision>& decisions,
                                            const std::vector<GenotypeDuplicate>& dups) {
  std::unordered_map<std::string, std::size_t> row_of;
  for (std::size_t i = 0; i < decisions.size(); ++i) row_of.emplace(decisions[i].sample_id, i);
  std::size_t changed = 0;
  for (const auto& p : dups) {
    auto ia = row_of.find(p.a), ib = row_of.find(p.b);
    if (ia == row_of.end() || ib == row_of.end()) continue;
    for (auto [keep, dup] : {std::pair{ia->second, ib->second}, std::pair{ib->second, ia->second}}) {
      const RelabelDecision& k = decisions[keep];
      RelabelDecision& d = decisions[dup];
      if (k.verdict != Verdict::Correct || d.verdict == Verdict::Correct || d.verdict == Verdict::Duplicate) continue;
      if (d.evidence.argmax_id != k.sample_id) continue;
      d.verdict = Verdict::Duplicate;
      d.new_label = k.sample_id;
      d.possible_mixture = false;
      ++changed;
    }
  }
  return changed;
}

enum class XSexFinding : std::uint8_t { Consistent, SwapSuspect, SingleError, Uninformative };

inline const char* to_string(XSexFinding f) {
  switch (f) {
    case XSexFinding::Consistent: return "consistent";
    case XSexFinding::SwapSuspect: return "swap_suspect";
    case XSexFinding::SingleError: return "single_error";
    case XSexFinding::Uninformative: return "uninformative";
  }
  return "uninformative";
}

// F2 females (BTBR grandmother) carry RR or BR on the X; males are
// hemizygous, recorded as BB or RR. BB in a female or BR in a male is
// incompatible. `min_calls` incompatible calls flag a swap; fewer (but some)
// look like a genotyping error. Unknown sex and all-RR rows are uninformative.
inline std::vector<XSexFinding> check_x_sex(const GenotypeMatrix& geno, const GeneticMap& map,
                                            std::size_t min_calls = 2) {
  std::vector<std::size_t> xcols;
  for (const auto& chr : map.chromosomes) {
    if (chr.kind != ChromosomeKind::X) continue;
    for (const auto& mk : chr.markers)
      if (auto c = geno.marker_index(mk.id)) xcols.push_back(*c);
  }
  std::vector<XSexFinding> out(geno.n_samples(), XSexFinding::Uninformative);
  if (xcols.empty()) return out;
  for (std::size_t i = 0; i < geno.n_samples(); ++i) {
    const Sex sex = geno.sex()[i];
    if (sex == Sex::Unknown) continue;
    const Genotype bad = sex == Sex::Female ? Genotype::BB : Genotype::BR;
    std::size_t incompatible = 0, typed = 0, rr = 0;
    for (std::size_t c : xcols) {
      const Genotype g = geno.at(i, c);
      if (g == Genotype::Missing) continue;
      ++typed;
      incompatible += g == bad;
      rr += g == Genotype::RR;
    }
    if (incompatible >= min_calls)
      out[i] = XSexFinding::SwapSuspect;
    else if (incompatible > 0)
      out[i] = XSexFinding::SingleError;
    else if (typed == 0 || rr == typed)
      out[i] = XSexFinding::Uninformative;
    else
      out[i] = XSexFinding::Consistent;
  }
  return out;
}

enum class ExprSex : std::uint8_t { Female, Male, Ambiguous };

inline const char* to_string(ExprSex s) {
  switch (s) {
    case ExprSex::Female: return "female";
    case ExprSex::Male: return "male";
    case ExprSex::Ambiguous: return "ambiguous";
  }
  return "ambiguous";
}

// Two-means clustering of (Xist, mean Y-gene expression). The cluster with the
// larger Xist - Y center is female. Points whose distances to the two centers
// differ by less than `boundary` times the center separation are ambiguous.
inline std::vector<ExprSex> infer_expression_sex(const ExpressionSet& expr, const std::string& xist_probe,
                                                 const std::vector<std::string>& y_probes, double boundary = 0.1) {
  const std::size_t n = expr.n_samples();
  std::vector<ExprSex> out(n, ExprSex::Ambiguous);
  const auto xcol = expr.probe_index(xist_probe);
  std::vector<std::size_t> ycols;
  for (const auto& y : y_probes)
    if (auto c = expr.probe_index(y)) ycols.push_back(*c);
  if (!xcol || ycols.empty()) return out;

  std::vector<std::array<double, 2>> pts;
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = expr.at(i, *xcol);
    double ysum = 0.0;
    std::size_t ny = 0;
    for (std::size_t c : ycols)
      if (expr.present(i, c)) {
        ysum += expr.at(i, c);
        ++ny;
      }
    if (is_missing(x) || ny == 0) continue;
    pts.push_back({x, ysum / static_cast<double>(ny)});
    rows.push_back(i);
  }
  if (pts.size() < 2) return out;

  auto score = [](const std::array<double, 2>& p) { return p[0] - p[1]; };
  std::size_t hi = 0, lo = 0;
  for (std::size_t k = 1; k < pts.size(); ++k) {
    if (score(pts[k]) > score(pts[hi])) hi = k;
    if (score(pts[k]) < score(pts[lo])) lo = k;
  }
  std::array<std::array<double, 2>, 2> center{pts[hi], pts[lo]};
  auto dist = [](const std::array<double, 2>& a, const std::array<double, 2>& b) {
    return std::hypot(a[0] - b[0], a[1] - b[1]);
  };
  std::vector<int> assign(pts.size(), -1);
  for (int iter = 0; iter < 100; ++iter) {
    bool changed = false;
    for (std::size_t k = 0; k < pts.size(); ++k) {
      const int a = dist(pts[k], center[0]) <= dist(pts[k], center[1]) ? 0 : 1;
      changed = changed || a != assign[k];
      assign[k] = a;
    }
    std::array<std::array<double, 2>, 2> sum{};
    std::array<std::size_t, 2> cnt{};
    for (std::size_t k = 0; k < pts.size(); ++k) {
      sum[assign[k]][0] += pts[k][0];
      sum[assign[k]][1] += pts[k][1];
      ++cnt[assign[k]];
    }
    if (cnt[0] == 0 || cnt[1] == 0) return out;
    for (int c = 0; c < 2; ++c) center[c] = {sum[c][0] / cnt[c], sum[c][1] / cnt[c]};
    if (!changed) break;
  }
  const double sep = dist(center[0], center[1]);
  if (!(sep > 0.0)) return out;
  const int female = score(center[0]) >= score(center[1]) ? 0 : 1;
  for (std::size_t k = 0; k < pts.size(); ++k) {
    const double d0 = dist(pts[k], center[0]), d1 = dist(pts[k], center[1]);
    if (std::fabs(d0 - d1) < boundary * sep) continue;
    const int c = d0 < d1 ? 0 : 1;
    out[rows[k]] = c == female ? ExprSex::Female : ExprSex::Male;
  }
  return out;
}

// Labels whose inferred expression sex contradicts the recorded sex.
inline std::vector<std::string> expression_sex_mismatches(const ExpressionSet& expr, const Dataset& ds,
                                                          const std::string& xist_probe,
                                                          const std::vector<std::string>& y_probes) {
  std::vector<std::string> out;
  const auto inferred = infer_expression_sex(expr, xist_probe, y_probes);
  for (std::size_t i = 0; i < expr.n_samples(); ++i) {
    const Sex recorded = ds.sex_of(expr.sample_ids()[i]);
    if (recorded == Sex::Unknown || inferred[i] == ExprSex::Ambiguous) continue;
    const bool female = inferred[i] == ExprSex::Female;
    if (female != (recorded == Sex::Female)) out.push_back(expr.sample_ids()[i]);
  }
  return out;
}

struct VerdictCounts {
  std::size_t correct = 0, fixable = 0, unfixable = 0, unverifiable = 0, duplicate = 0, mixture = 0;

  void add(const RelabelDecision& d) {
    switch (d.verdict) {
      case Verdict::Correct: ++correct; break;
      case Verdict::Fixable: ++fixable; break;
      case Verdict::Unfixable: ++unfixable; break;
      case Verdict::Unverifiable: ++unverifiable; break;
      case Verdict::Duplicate: ++duplicate; break;
    }
    mixture += d.possible_mixture;
  }
};

struct CorrectionSummary {
  std::size_t genotyped = 0;
  std::size_t omitted = 0;  // exclusion list
  VerdictCounts dna;
  std::vector<VerdictCounts> expression;            // per tissue
  std::vector<std::string> multi_tissue_relabels;   // labels changed in more than one tissue
  std::size_t dna_rows_out = 0;
  std::vector<std::size_t> expression_rows_out;

  // Share of genotyped samples involved in a DNA mix-up.
  double dna_mixup_fraction() const {
    return genotyped == 0 ? 0.0
                          : static_cast<double>(dna.fixable + dna.unfixable + dna.duplicate) /
                                static_cast<double>(genotyped);
  }
};

struct CorrectionResult {
  Dataset dataset;
  CorrectionSummary summary;
};

namespace detail {

inline std::unordered_map<std::string, const RelabelDecision*> decisions_by_id(const std::vector<RelabelDecision>& ds) {
  std::unordered_map<std::string, const RelabelDecision*> m;
  for (const auto& d : ds) m.emplace(d.sample_id, &d);
  return m;
}

inline void collision(const std::string& label, const std::string& src_a, const std::string& src_b, const std::string& where) {
  throw InputError("relabel collision in " + where + ": rows originally labeled " + src_a + " and " + src_b +
                   " both map to " + label);
}

}  // namespace detail

// Applies expression decisions per tissue (matched to dataset.expression by
// position) and DNA decisions. Decisions are keyed by each row's original
// label, so applying the same decisions again changes nothing.
//   expression: fixable -> relabel; duplicate -> entrywise mean with the retained
//               row; possible mixtures -> dropped; other unfixable rows kept
//               under their label
//   DNA: fixable -> relabel; duplicate, unfixable, unverifiable and excluded -> dropped
inline CorrectionResult apply_corrections(const Dataset& in, const std::vector<std::vector<RelabelDecision>>& expr_decisions,
                                          const std::vector<RelabelDecision>& dna_decisions) {
  CorrectionResult res;
  Dataset& out = res.dataset;
  out.map = in.map;
  out.annotation = in.annotation;
  out.plate = in.plate;
  out.phenotypes = in.phenotypes;
  out.exclusions = in.exclusions;
  out.label_sex = in.label_sex;
  for (std::size_t i = 0; i < in.geno.n_samples(); ++i) out.label_sex.emplace(in.geno.sample_ids()[i], in.geno.sex()[i]);

  const std::set<std::string> excluded(in.exclusions.begin(), in.exclusions.end());
  auto& sum = res.summary;
  std::map<std::string, std::size_t> relabel_tissues;

  // Expression.
  for (std::size_t t = 0; t < in.expression.size(); ++t) {
    const ExpressionSet& e = in.expression[t];
    static const std::vector<RelabelDecision> none;
    const auto dec = detail::decisions_by_id(t < expr_decisions.size() ? expr_decisions[t] : none);
    VerdictCounts counts;
    if (t < expr_decisions.size())
      for (const auto& d : expr_decisions[t]) counts.add(d);
    sum.expression.push_back(counts);

    const std::size_t P = e.n_probes();
    std::vector<std::string> labels, sources;
    std::vector<std::vector<double>> rows;
    std::vector<std::vector<std::size_t>> merged_counts;  // per entry present count for merges
    std::unordered_map<std::string, std::size_t> pos;
    std::vector<std::pair<std::size_t, std::string>> pending_merges;  // (row, target label)

    for (std::size_t r = 0; r < e.n_samples(); ++r) {
      const std::string& src = in.expr_source_of(t, r);
      std::string label = src;
      auto it = dec.find(src);
      if (it != dec.end()) {
        const RelabelDecision& d = *it->second;
        if (d.possible_mixture) continue;
        if (d.verdict == Verdict::Duplicate) {
          pending_merges.emplace_back(r, *d.new_label);
          continue;
        }
        if (d.verdict == Verdict::Fixable) {
          label = *d.new_label;
          ++relabel_tissues[src];
        }
      }
      if (auto [p, fresh] = pos.emplace(label, labels.size()); !fresh) detail::collision(label, sources[p->second], src, e.tissue());
      labels.push_back(label);
      sources.push_back(src);
      rows.emplace_back(e.values().begin() + static_cast<std::ptrdiff_t>(r * P),
                        e.values().begin() + static_cast<std::ptrdiff_t>((r + 1) * P));
      merged_counts.emplace_back(P);
      for (std::size_t k = 0; k < P; ++k) merged_counts.back()[k] = is_missing(rows.back()[k]) ? 0 : 1;
    }
    for (const auto& [r, target] : pending_merges) {
      auto p = pos.find(target);
      if (p == pos.end()) continue;  // retained row absent: nothing to merge into
      auto& row = rows[p->second];
      auto& cnt = merged_counts[p->second];
      for (std::size_t k = 0; k < P; ++k) {
        const double v = e.at(r, k);
        if (is_missing(v)) continue;
        if (cnt[k] == 0) {
          row[k] = v;
        } else {
          row[k] = (row[k] * static_cast<double>(cnt[k]) + v) / static_cast<double>(cnt[k] + 1);
        }
        ++cnt[k];
      }
    }
    std::vector<double> values;
    values.reserve(rows.size() * P);
    for (const auto& r : rows) values.insert(values.end(), r.begin(), r.end());
    sum.expression_rows_out.push_back(labels.size());
    out.expression.emplace_back(e.tissue(), labels, e.probe_ids(), std::move(values));
    out.expr_source.push_back(sources);
  }
  for (const auto& [label, n] : relabel_tissues)
    if (n > 1) sum.multi_tissue_relabels.push_back(label);

  // DNA.
  const auto dec = detail::decisions_by_id(dna_decisions);
  for (const auto& d : dna_decisions) sum.dna.add(d);
  sum.genotyped = in.geno.n_samples();
  const std::size_t M = in.geno.n_markers();
  std::vector<std::string> labels, sources;
  std::vector<Genotype> calls;
  std::vector<Sex> sex;
  std::unordered_map<std::string, std::size_t> pos;
  for (std::size_t r = 0; r < in.geno.n_samples(); ++r) {
    const std::string& src = in.dna_source_of(r);
    if (excluded.count(src)) {
      ++sum.omitted;
      continue;
    }
    std::string label = src;
    if (auto it = dec.find(src); it != dec.end()) {
      const Verdict v = it->second->verdict;
      if (v == Verdict::Unfixable || v == Verdict::Unverifiable || v == Verdict::Duplicate) continue;
      if (v == Verdict::Fixable) label = *it->second->new_label;
    }
    if (auto [p, fresh] = pos.emplace(label, labels.size()); !fresh) detail::collision(label, sources[p->second], src, "genotypes");
    labels.push_back(label);
    sources.push_back(src);
    calls.insert(calls.end(), in.geno.calls().begin() + static_cast<std::ptrdiff_t>(r * M),
                 in.geno.calls().begin() + static_cast<std::ptrdiff_t>((r + 1) * M));
    sex.push_back(out.sex_of(label));
  }
  sum.dna_rows_out = labels.size();
  out.geno = GenotypeMatrix(labels, in.geno.marker_ids(), std::move(calls), std::move(sex));
  out.dna_source = sources;
  return res;
}

struct SexSettings {
  std::string xist_probe = "Xist";
  std::vector<std::string> y_probes;
  std::size_t x_min_calls = 2;
};

struct AuditReport {
  std::vector<std::string> x_swap_suspects;
  std::vector<std::string> x_single_errors;
  std::vector<std::pair<std::string, std::vector<std::string>>> expression_mismatches;  // per tissue

  std::size_t inconsistencies() const {
    std::size_t n = x_swap_suspects.size();
    for (const auto& [t, ids] : expression_mismatches) n += ids.size();
    return n;
  }
};

// X-genotype and expression sex checks against recorded sex.
inline AuditReport post_correction_audit(const Dataset& ds, const SexSettings& sex) {
  AuditReport rep;
  const auto x = check_x_sex(ds.geno, ds.map, sex.x_min_calls);
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] == XSexFinding::SwapSuspect) rep.x_swap_suspects.push_back(ds.geno.sample_ids()[i]);
    if (x[i] == XSexFinding::SingleError) rep.x_single_errors.push_back(ds.geno.sample_ids()[i]);
  }
  for (const auto& e : ds.expression)
    rep.expression_mismatches.emplace_back(e.tissue(), expression_sex_mismatches(e, ds, sex.xist_probe, sex.y_probes));
  return rep;
}

}  // namespace lineup
