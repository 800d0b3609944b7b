#pragma once

// Haley-Knott regression: single-locus LOD for local-eQTL selection and
// genome scans with sex as an interactive covariate.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lineup/genoprob.hpp"
#include "lineup/linalg.hpp"
#include "lineup/parallel.hpp"
#include "lineup/stats.hpp"
#include "lineup/types.hpp"

namespace lineup {

struct LodFit {
  double lod = 0.0;
  std::size_t n_used = 0;
  bool rank_deficient = false;
};

namespace detail {

inline double lod_from_rss(std::size_t n, double rss0, double rss1) {
  if (!(rss0 > 0.0)) return 0.0;
  // A perfect fit is floored at 16 decimal digits of improvement.
  rss1 = std::max(rss1, rss0 * 1e-16);
  return std::max(0.0, 0.5 * static_cast<double>(n) * std::log10(rss0 / rss1));
}

inline double sex_code(Sex s) { return s == Sex::Male ? 1.0 : 0.0; }

// Design columns for the null and alternative models over the kept samples.
struct Designs {
  std::vector<std::vector<double>> null_cols;
  std::vector<std::vector<double>> alt_cols;
};

inline Designs build_designs(std::span<const std::size_t> keep,
                             std::span<const std::array<double, 3>> probs,
                             std::span<const Sex> sex, bool interactive) {
  const std::size_t n = keep.size();
  Designs d;
  std::vector<double> one(n, 1.0), pbr(n), prr(n), sx;
  for (std::size_t k = 0; k < n; ++k) {
    pbr[k] = probs[keep[k]][1];
    prr[k] = probs[keep[k]][2];
  }
  d.null_cols.push_back(one);
  if (!sex.empty()) {
    sx.resize(n);
    for (std::size_t k = 0; k < n; ++k) sx[k] = sex_code(sex[keep[k]]);
    d.null_cols.push_back(sx);
  }
  d.alt_cols = d.null_cols;
  d.alt_cols.push_back(pbr);
  d.alt_cols.push_back(prr);
  if (!sex.empty() && interactive) {
    std::vector<double> a(n), b(n);
    for (std::size_t k = 0; k < n; ++k) {
      a[k] = sx[k] * pbr[k];
      b[k] = sx[k] * prr[k];
    }
    d.alt_cols.push_back(std::move(a));
    d.alt_cols.push_back(std::move(b));
  }
  return d;
}

inline std::vector<std::size_t> usable_samples(std::span<const double> pheno, std::span<const Sex> sex) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < pheno.size(); ++i) {
    if (is_missing(pheno[i])) continue;
    if (!sex.empty() && sex[i] == Sex::Unknown) continue;
    keep.push_back(i);
  }
  return keep;
}

}  // namespace detail

// LOD = (n/2) log10(RSS0 / RSS1) for the regression of pheno on genotype
// probabilities [1, P(BR), P(RR)], optionally with sex as an additive or
// interactive covariate. Samples with missing phenotype (or unknown sex when a
// covariate is given) are dropped. Pass an empty `sex` span for no covariate.
inline LodFit hk_lod_at(std::span<const double> pheno, std::span<const std::array<double, 3>> probs,
                        std::span<const Sex> sex = {}, bool interactive = true) {
  if (pheno.size() != probs.size() || (!sex.empty() && sex.size() != pheno.size())) {
    throw std::invalid_argument("hk_lod_at: phenotype, probabilities, and covariate must align");
  }
  const auto keep = detail::usable_samples(pheno, sex);
  LodFit fit;
  fit.n_used = keep.size();
  if (keep.empty()) return fit;

  std::vector<double> y(keep.size());
  for (std::size_t k = 0; k < keep.size(); ++k) y[k] = pheno[keep[k]];
  const auto d = detail::build_designs(keep, probs, sex, interactive);
  const OrthoBasis null_basis(keep.size(), d.null_cols);
  const OrthoBasis alt_basis(keep.size(), d.alt_cols);
  fit.rank_deficient = null_basis.dropped() > 0 || alt_basis.dropped() > 0;
  fit.lod = detail::lod_from_rss(keep.size(), null_basis.rss(y), alt_basis.rss(y));
  return fit;
}

struct ChromosomeScan {
  std::string chromosome;
  std::vector<double> positions_cM;
  std::vector<std::string> locus_ids;
  std::vector<double> lod;
  std::size_t peak_index = 0;
  double peak_lod = 0.0;
  double interval_lo_cM = 0.0;  // 2-LOD support interval on grid loci
  double interval_hi_cM = 0.0;
};

struct ScanResult {
  std::string trait;
  std::vector<ChromosomeScan> chromosomes;

  double max_lod() const {
    double m = 0.0;
    for (const auto& c : chromosomes) m = std::max(m, c.peak_lod);
    return m;
  }
  std::size_t chromosomes_at_or_above(double threshold) const {
    return static_cast<std::size_t>(std::count_if(chromosomes.begin(), chromosomes.end(),
                                                  [&](const auto& c) { return c.peak_lod >= threshold; }));
  }
};

// Peak and drop-interval for a LOD curve: the interval runs out from the peak
// to the outermost contiguous loci whose LOD is at least peak - drop.
inline void summarize_curve(ChromosomeScan& cs, double drop = 2.0) {
  if (cs.lod.empty()) return;
  cs.peak_index = static_cast<std::size_t>(std::max_element(cs.lod.begin(), cs.lod.end()) - cs.lod.begin());
  cs.peak_lod = cs.lod[cs.peak_index];
  const double cut = cs.peak_lod - drop;
  std::size_t lo = cs.peak_index, hi = cs.peak_index;
  while (lo > 0 && cs.lod[lo - 1] >= cut) --lo;
  while (hi + 1 < cs.lod.size() && cs.lod[hi + 1] >= cut) ++hi;
  cs.interval_lo_cM = cs.positions_cM[lo];
  cs.interval_hi_cM = cs.positions_cM[hi];
}

// Genome scans for several phenotypes at once. Each phenotype vector is
// aligned with probs.sample_ids; `sex` likewise (empty for no covariate).
// Phenotypes sharing a missing-data pattern share one regression basis per locus.
inline std::vector<ScanResult> genome_scan_many(const std::vector<std::vector<double>>& phenos,
                                                const std::vector<std::string>& trait_names,
                                                const GenoProbTensor& probs, const PositionGrid& grid,
                                                std::span<const Sex> sex, bool interactive = true,
                                                std::size_t threads = 1, double drop = 2.0) {
  const std::size_t n = probs.sample_ids.size();
  for (const auto& p : phenos)
    if (p.size() != n) throw std::invalid_argument("genome_scan: phenotype length mismatch");
  if (!sex.empty() && sex.size() != n) throw std::invalid_argument("genome_scan: sex length mismatch");

  // Group phenotypes by usable-sample pattern.
  std::map<std::vector<std::size_t>, std::vector<std::size_t>> groups;
  for (std::size_t t = 0; t < phenos.size(); ++t)
    groups[detail::usable_samples(phenos[t], sex)].push_back(t);

  std::vector<ScanResult> results(phenos.size());
  for (std::size_t t = 0; t < phenos.size(); ++t)
    results[t].trait = t < trait_names.size() ? trait_names[t] : std::to_string(t);

  for (const auto& chr : probs.chromosomes) {
    const GridChromosome* gc = grid.find(chr.name);
    if (!gc || gc->loci.size() != chr.n_loci) throw InputError("genome_scan: grid does not match probabilities on " + chr.name);
    ChromosomeScan blank;
    blank.chromosome = chr.name;
    blank.lod.assign(chr.n_loci, 0.0);
    for (const auto& l : gc->loci) {
      blank.positions_cM.push_back(l.pos_cM);
      blank.locus_ids.push_back(l.id);
    }
    std::vector<ChromosomeScan> scans(phenos.size(), blank);

    for (const auto& [keep, members] : groups) {
      if (keep.empty()) continue;
      std::vector<std::vector<double>> ys;
      for (std::size_t t : members) {
        std::vector<double> y(keep.size());
        for (std::size_t k = 0; k < keep.size(); ++k) y[k] = phenos[t][keep[k]];
        ys.push_back(std::move(y));
      }
      // The null model does not depend on the locus.
      const std::vector<std::array<double, 3>> flat(n, {1.0, 0.0, 0.0});
      const OrthoBasis null_basis(keep.size(), detail::build_designs(keep, flat, sex, interactive).null_cols);
      std::vector<double> rss0(members.size());
      for (std::size_t m = 0; m < members.size(); ++m) rss0[m] = null_basis.rss(ys[m]);

      parallel_for(chr.n_loci, threads, [&](std::size_t l) {
        std::vector<std::array<double, 3>> p(n);
        for (std::size_t s = 0; s < n; ++s) p[s] = chr.at(s, l);
        const OrthoBasis alt(keep.size(), detail::build_designs(keep, p, sex, interactive).alt_cols);
        for (std::size_t m = 0; m < members.size(); ++m)
          scans[members[m]].lod[l] = detail::lod_from_rss(keep.size(), rss0[m], alt.rss(ys[m]));
      });
    }
    for (std::size_t t = 0; t < phenos.size(); ++t) {
      summarize_curve(scans[t], drop);
      results[t].chromosomes.push_back(std::move(scans[t]));
    }
  }
  return results;
}

inline ScanResult genome_scan(std::span<const double> pheno, const GenoProbTensor& probs,
                              const PositionGrid& grid, std::span<const Sex> sex,
                              bool interactive = true, std::string trait = "trait") {
  std::vector<std::vector<double>> ph{std::vector<double>(pheno.begin(), pheno.end())};
  return genome_scan_many(ph, {std::move(trait)}, probs, grid, sex, interactive).front();
}

// Probes whose expression strongly associates with genotype at their own
// location. Up to three probes share one entry when they map to one locus.
struct LocalEqtl {
  std::string tissue;
  std::string chromosome;
  std::size_t locus_index = 0;
  std::string locus_id;
  double pos_cM = 0.0;
  std::vector<std::string> probe_ids;
  std::vector<double> lods;
};

// Nearest grid locus to a position; ties go to the lower cM locus.
inline std::size_t nearest_locus(const GridChromosome& chr, double pos_cM) {
  std::size_t best = 0;
  double best_d = INFINITY;
  for (std::size_t l = 0; l < chr.loci.size(); ++l) {
    const double d = std::fabs(chr.loci[l].pos_cM - pos_cM);
    if (d < best_d) {
      best_d = d;
      best = l;
    }
  }
  return best;
}

inline std::vector<LocalEqtl> select_local_eqtl(const ExpressionSet& expr, const ProbeAnnotation& annot,
                                                const GenoProbTensor& probs, const PositionGrid& grid,
                                                double lod_select = 100.0, std::size_t threads = 1) {
  // Samples with both genotype probabilities and an array in this tissue.
  std::vector<std::size_t> expr_rows, prob_rows;
  for (std::size_t i = 0; i < probs.sample_ids.size(); ++i) {
    if (auto r = expr.sample_index(probs.sample_ids[i])) {
      prob_rows.push_back(i);
      expr_rows.push_back(*r);
    }
  }

  struct Candidate {
    std::size_t chr_order;
    std::size_t locus;
    std::size_t probe_col;
    double lod;
  };
  std::vector<std::optional<Candidate>> found(expr.n_probes());

  parallel_for(expr.n_probes(), threads, [&](std::size_t p) {
    const ProbeLocation* loc = annot.find(expr.probe_ids()[p]);
    if (!loc || !loc->located) return;
    const GridChromosome* gc = grid.find(loc->chromosome);
    if (!gc || gc->kind != ChromosomeKind::Autosome) return;
    const ChromosomeProbs* cp = probs.find(loc->chromosome);
    if (!cp) return;
    const std::size_t l = nearest_locus(*gc, loc->pos_cM);
    std::vector<double> y(expr_rows.size());
    std::vector<std::array<double, 3>> pr(expr_rows.size());
    for (std::size_t k = 0; k < expr_rows.size(); ++k) {
      y[k] = expr.at(expr_rows[k], p);
      pr[k] = cp->at(prob_rows[k], l);
    }
    const double lod = hk_lod_at(y, pr).lod;
    if (lod > lod_select) {
      const std::size_t order = static_cast<std::size_t>(gc - grid.chromosomes.data());
      found[p] = Candidate{order, l, p, lod};
    }
  });

  std::map<std::pair<std::size_t, std::size_t>, std::vector<Candidate>> by_locus;
  for (const auto& c : found)
    if (c) by_locus[{c->chr_order, c->locus}].push_back(*c);

  std::vector<LocalEqtl> out;
  for (auto& [key, cands] : by_locus) {
    // Keep at most three probes per locus, strongest first, then in probe order.
    std::stable_sort(cands.begin(), cands.end(),
                     [](const Candidate& a, const Candidate& b) { return a.lod > b.lod; });
    if (cands.size() > 3) cands.resize(3);
    std::sort(cands.begin(), cands.end(),
              [](const Candidate& a, const Candidate& b) { return a.probe_col < b.probe_col; });
    const auto& gc = grid.chromosomes[key.first];
    LocalEqtl e{expr.tissue(), gc.name, key.second, gc.loci[key.second].id, gc.loci[key.second].pos_cM, {}, {}};
    for (const auto& c : cands) {
      e.probe_ids.push_back(expr.probe_ids()[c.probe_col]);
      e.lods.push_back(c.lod);
    }
    out.push_back(std::move(e));
  }
  return out;
}

enum class EqtlClass : std::uint8_t { None, Local, Trans };

inline const char* to_string(EqtlClass c) {
  switch (c) {
    case EqtlClass::None: return "none";
    case EqtlClass::Local: return "local";
    case EqtlClass::Trans: return "trans";
  }
  return "none";
}

// Per-chromosome call for one probe's scan: a peak at or above lod_peak is
// local when it sits on the probe's chromosome with the probe inside the
// support interval, trans otherwise. Unlocated probes get None everywhere.
inline std::vector<EqtlClass> classify_local_trans(const ScanResult& scan, const ProbeLocation* probe,
                                                   double lod_peak = 5.0) {
  std::vector<EqtlClass> out(scan.chromosomes.size(), EqtlClass::None);
  if (!probe || !probe->located) return out;
  for (std::size_t c = 0; c < scan.chromosomes.size(); ++c) {
    const auto& cs = scan.chromosomes[c];
    if (cs.peak_lod < lod_peak) continue;
    const bool local = cs.chromosome == probe->chromosome && probe->pos_cM >= cs.interval_lo_cM &&
                       probe->pos_cM <= cs.interval_hi_cM;
    out[c] = local ? EqtlClass::Local : EqtlClass::Trans;
  }
  return out;
}

}  // namespace lineup
