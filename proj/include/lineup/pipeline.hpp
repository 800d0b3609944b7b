#pragma once

// End-to-end run: expression alignment, expression-corrected DNA alignment,
// corrections, sex audit, plate forensics and before/after genome scans.

#include <filesystem>
#include <string>
#include <vector>

#include "lineup/dataset.hpp"
#include "lineup/expr_align.hpp"
#include "lineup/geno_align.hpp"
#include "lineup/genoprob.hpp"
#include "lineup/io.hpp"
#include "lineup/manifest.hpp"
#include "lineup/plate.hpp"
#include "lineup/qtl_scan.hpp"
#include "lineup/relabel.hpp"
#include "lineup/stats.hpp"

namespace lineup {

struct DnaAlignment {
  std::vector<std::vector<LocalEqtl>> eqtl;  // per tissue
  std::vector<EqtlGenotypeTable> tables;     // per tissue
  std::vector<SimilarityMatrix> per_tissue;
  SimilarityMatrix combined;
  std::vector<RelabelDecision> decisions;
};

// Genotype probabilities on the pseudomarker grid for the genotype rows of ds.
struct ProbGrid {
  PositionGrid grid;
  GenoProbTensor probs;
};

inline ProbGrid compute_probs(const Dataset& ds, const Settings& s, std::size_t threads) {
  ProbGrid pg;
  pg.grid = insert_pseudomarkers(ds.map, s.pseudomarker_step_cM);
  pg.probs = calc_genoprob(ds.geno, pg.grid, s.genotype_error_rate, threads);
  return pg;
}

// DNA-to-mRNA alignment on a dataset whose expression has already been corrected.
inline DnaAlignment align_dna(const Dataset& ds, const ProbGrid& pg, const Settings& s, std::size_t threads) {
  DnaAlignment out;
  for (const auto& e : ds.expression) {
    auto eqtl = select_local_eqtl(e, ds.annotation, pg.probs, pg.grid, s.eqtl_lod_min, threads);
    const auto observed = observe_eqtl_genotypes(pg.probs, eqtl, s.call_prob_min);
    out.tables.push_back(two_pass_classifiers(e, eqtl, observed, s.knn, threads));
    out.per_tissue.push_back(tissue_similarity(out.tables.back()));
    out.eqtl.push_back(std::move(eqtl));
  }
  out.combined = combine_tissues(out.tables);
  out.decisions = decide_dna_labels(out.combined, s.dna);
  return out;
}

struct TraitScan {
  std::string trait;
  ScanResult before;
  ScanResult after;
};

struct ExpressionScanSummary {
  std::string tissue;
  std::size_t local_before = 0, local_after = 0;
  std::size_t trans_before = 0, trans_after = 0;
};

struct PipelineResult {
  Settings settings;
  ValidationReport validation;
  ExpressionAlignment expression;
  CorrectionResult expression_corrected;
  DnaAlignment dna;
  std::vector<GenotypeDuplicate> genotype_duplicates;
  CorrectionResult corrected;
  AuditReport audit_before;
  AuditReport audit_after;
  std::optional<ForensicsResult> forensics;
  std::vector<TraitScan> scans;
  std::vector<ExpressionScanSummary> expression_scans;
  std::vector<std::string> tissue_names;

  std::vector<std::pair<std::string, std::vector<RelabelDecision>>> expression_decisions() const {
    std::vector<std::pair<std::string, std::vector<RelabelDecision>>> out;
    for (std::size_t t = 0; t < expression.decisions.size(); ++t) out.emplace_back(tissue_names[t], expression.decisions[t]);
    return out;
  }
};

namespace detail {

// Phenotype column aligned with the genotype rows of `geno`; NaN when absent.
inline std::vector<double> trait_for_rows(const PhenotypeTable& ph, std::size_t trait, const std::vector<std::string>& rows) {
  std::unordered_map<std::string, std::size_t> idx;
  for (std::size_t i = 0; i < ph.sample_ids.size(); ++i) idx.emplace(ph.sample_ids[i], i);
  std::vector<double> y(rows.size(), kNaN);
  for (std::size_t r = 0; r < rows.size(); ++r)
    if (auto it = idx.find(rows[r]); it != idx.end()) y[r] = ph.at(it->second, trait);
  return y;
}

inline std::vector<double> nqt_or_missing(const std::vector<double>& y) {
  for (double v : y)
    if (!is_missing(v)) return normal_quantile_transform(y);
  return y;
}

// Probabilities for a corrected genotype matrix whose rows are a subset of the
// original rows (by source label), reusing the original posterior.
inline GenoProbTensor reindex_probs(const GenoProbTensor& orig, const Dataset& corrected) {
  GenoProbTensor out;
  out.sample_ids = corrected.geno.sample_ids();
  std::vector<std::size_t> from(out.sample_ids.size());
  for (std::size_t r = 0; r < from.size(); ++r) {
    auto i = orig.sample_index(corrected.dna_source_of(r));
    if (!i) throw std::logic_error("corrected genotype row without an original row");
    from[r] = *i;
  }
  for (const auto& c : orig.chromosomes) {
    ChromosomeProbs nc{c.name, from.size(), c.n_loci, std::vector<double>(from.size() * c.n_loci * 3)};
    for (std::size_t r = 0; r < from.size(); ++r)
      std::copy(c.probs.begin() + static_cast<std::ptrdiff_t>(from[r] * c.n_loci * 3),
                c.probs.begin() + static_cast<std::ptrdiff_t>((from[r] + 1) * c.n_loci * 3),
                nc.probs.begin() + static_cast<std::ptrdiff_t>(r * c.n_loci * 3));
    out.chromosomes.push_back(std::move(nc));
  }
  return out;
}

inline std::vector<ScanResult> scan_traits(const Dataset& ds, const GenoProbTensor& probs, const PositionGrid& grid,
                                           const std::vector<std::string>& traits, const Settings& s, std::size_t threads) {
  std::vector<std::vector<double>> ys;
  for (const auto& t : traits) ys.push_back(nqt_or_missing(trait_for_rows(*ds.phenotypes, *ds.phenotypes->trait_index(t), probs.sample_ids)));
  std::vector<Sex> sex(probs.sample_ids.size());
  for (std::size_t r = 0; r < sex.size(); ++r) sex[r] = ds.sex_of(probs.sample_ids[r]);
  return genome_scan_many(ys, traits, probs, grid, sex, s.interactive_sex, threads, s.lod_drop);
}

inline std::pair<std::size_t, std::size_t> count_local_trans(const Dataset& ds, const ExpressionSet& e,
                                                             const GenoProbTensor& probs, const PositionGrid& grid,
                                                             const Settings& s, std::size_t threads) {
  std::vector<std::vector<double>> ys;
  std::vector<std::string> names;
  for (std::size_t p = 0; p < e.n_probes(); ++p) {
    std::vector<double> y(probs.sample_ids.size(), kNaN);
    for (std::size_t r = 0; r < y.size(); ++r)
      if (auto i = e.sample_index(probs.sample_ids[r])) y[r] = e.at(*i, p);
    ys.push_back(nqt_or_missing(y));
    names.push_back(e.probe_ids()[p]);
  }
  std::vector<Sex> sex(probs.sample_ids.size());
  for (std::size_t r = 0; r < sex.size(); ++r) sex[r] = ds.sex_of(probs.sample_ids[r]);
  const auto scans = genome_scan_many(ys, names, probs, grid, sex, s.interactive_sex, threads, s.lod_drop);
  std::size_t local = 0, trans = 0;
  for (std::size_t p = 0; p < scans.size(); ++p)
    for (auto c : classify_local_trans(scans[p], ds.annotation.find(names[p]), s.lod_peak)) {
      local += c == EqtlClass::Local;
      trans += c == EqtlClass::Trans;
    }
  return {local, trans};
}

}  // namespace detail

inline std::vector<std::string> traits_to_scan(const Dataset& ds, const Settings& s) {
  if (!ds.phenotypes) {
    if (!s.scan_traits.empty()) throw InputError("traits requested for scanning but no phenotype file was given");
    return {};
  }
  if (s.scan_traits.empty()) return ds.phenotypes->trait_names;
  for (const auto& t : s.scan_traits)
    if (!ds.phenotypes->trait_index(t)) throw InputError("unknown trait '" + t + "' requested for scanning");
  return s.scan_traits;
}

struct PipelineOptions {
  std::size_t threads = 1;
  bool expression_fix = true;  // correct expression before aligning DNA
  bool scans = true;
};

inline PipelineResult run_pipeline(const Dataset& input, const Settings& s, const PipelineOptions& opt = {}) {
  PipelineResult res;
  res.settings = s;
  Dataset ds = input;
  record_label_sex(ds);
  for (const auto& e : ds.expression) res.tissue_names.push_back(e.tissue());
  res.validation = validate_dataset(ds);
  if (res.validation.count(Severity::Error) > 0) {
    for (const auto& e : res.validation.entries)
      if (e.severity == Severity::Error) throw InputError(e.message);
  }

  res.expression = align_expression(ds.expression, s.probe_corr_min, s.expr, s.expr_duplicate_min, opt.threads);
  res.expression_corrected =
      apply_corrections(ds, opt.expression_fix ? res.expression.decisions : std::vector<std::vector<RelabelDecision>>{}, {});

  const ProbGrid pg = compute_probs(ds, s, opt.threads);
  Dataset for_dna = res.expression_corrected.dataset;
  for_dna.geno = ds.geno;
  for_dna.dna_source.clear();
  res.dna = align_dna(for_dna, pg, s, opt.threads);

  res.genotype_duplicates = find_genotype_duplicates(ds.geno, s.duplicate_identity_min);
  mark_genotype_duplicates(res.dna.decisions, res.genotype_duplicates);
  res.corrected = apply_corrections(ds, opt.expression_fix ? res.expression.decisions : std::vector<std::vector<RelabelDecision>>{},
                                    res.dna.decisions);
  res.audit_before = post_correction_audit(ds, s.sex);
  res.audit_after = post_correction_audit(res.corrected.dataset, s.sex);
  if (!ds.plate.entries.empty()) res.forensics = detect_patterns(res.dna.decisions, ds.plate, s.fill_order, s.dna.other_min);

  if (opt.scans) {
    const auto traits = traits_to_scan(ds, s);
    const GenoProbTensor after_probs = detail::reindex_probs(pg.probs, res.corrected.dataset);
    if (!traits.empty()) {
      auto before = detail::scan_traits(ds, pg.probs, pg.grid, traits, s, opt.threads);
      auto after = detail::scan_traits(res.corrected.dataset, after_probs, pg.grid, traits, s, opt.threads);
      for (std::size_t t = 0; t < traits.size(); ++t) res.scans.push_back({traits[t], std::move(before[t]), std::move(after[t])});
    }
    if (s.scan_expression) {
      for (std::size_t t = 0; t < ds.expression.size(); ++t) {
        ExpressionScanSummary sum{ds.expression[t].tissue()};
        std::tie(sum.local_before, sum.trans_before) =
            detail::count_local_trans(ds, ds.expression[t], pg.probs, pg.grid, s, opt.threads);
        std::tie(sum.local_after, sum.trans_after) = detail::count_local_trans(
            res.corrected.dataset, res.corrected.dataset.expression[t], after_probs, pg.grid, s, opt.threads);
        res.expression_scans.push_back(sum);
      }
    }
  }
  return res;
}

// ---- reports --------------------------------------------------------------

inline DecisionReport decision_report(const PipelineResult& r) {
  DecisionReport rep;
  rep.settings = to_json(r.settings);
  for (std::size_t t = 0; t < r.tissue_names.size(); ++t) rep.expression.emplace_back(r.tissue_names[t], r.expression.decisions[t]);
  rep.dna = r.dna.decisions;
  return rep;
}

inline Json to_json(const VerdictCounts& c) {
  Json j;
  j["correct"] = c.correct;
  j["fixable"] = c.fixable;
  j["unfixable"] = c.unfixable;
  j["unverifiable"] = c.unverifiable;
  j["duplicate"] = c.duplicate;
  j["possible_mixture"] = c.mixture;
  return j;
}

inline Json to_json(const AuditReport& a) {
  Json j;
  j["x_swap_suspects"] = a.x_swap_suspects;
  j["x_single_errors"] = a.x_single_errors;
  j["expression_sex_mismatches"] = Json::object();
  for (const auto& [t, ids] : a.expression_mismatches) j["expression_sex_mismatches"][t] = ids;
  j["inconsistencies"] = a.inconsistencies();
  return j;
}

inline Json to_json(const CorrectionSummary& sum, const std::vector<std::string>& tissues) {
  Json s;
  s["genotyped"] = sum.genotyped;
  s["omitted"] = sum.omitted;
  s["dna"] = to_json(sum.dna);
  s["dna_mixup_fraction"] = sum.dna_mixup_fraction();
  s["expression"] = Json::object();
  for (std::size_t t = 0; t < tissues.size() && t < sum.expression.size(); ++t) s["expression"][tissues[t]] = to_json(sum.expression[t]);
  s["multi_tissue_relabels"] = sum.multi_tissue_relabels;
  s["dna_rows_out"] = sum.dna_rows_out;
  s["expression_rows_out"] = Json::object();
  for (std::size_t t = 0; t < tissues.size() && t < sum.expression_rows_out.size(); ++t)
    s["expression_rows_out"][tissues[t]] = sum.expression_rows_out[t];
  return s;
}

inline Json audit_json(const PipelineResult& r) {
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["settings"] = to_json(r.settings);
  Json v = Json::array();
  for (const auto& e : r.validation.entries)
    v.push_back({{"severity", to_string(e.severity)}, {"kind", e.kind}, {"subject", e.subject}, {"message", e.message}});
  j["validation"] = v;

  j["summary"] = to_json(r.corrected.summary, r.tissue_names);

  Json probes = Json::array();
  {
    std::size_t k = 0;
    for (std::size_t a = 0; a < r.tissue_names.size(); ++a)
      for (std::size_t b = a + 1; b < r.tissue_names.size(); ++b, ++k)
        probes.push_back({{"tissues", {r.tissue_names[a], r.tissue_names[b]}},
                          {"selected_probes", r.expression.pair_probes[k].probe_ids.size()}});
  }
  j["probe_selection"] = probes;

  Json dups = Json::array();
  for (const auto& d : r.genotype_duplicates)
    dups.push_back({{"a", d.a}, {"b", d.b}, {"matches", d.matches}, {"typed", d.typed}, {"identity", d.identity()}});
  j["genotype_duplicates"] = dups;
  Json wd = Json::object();
  for (std::size_t t = 0; t < r.tissue_names.size(); ++t) {
    Json arr = Json::array();
    for (const auto& d : r.expression.within_duplicates[t]) arr.push_back({{"a", d.a}, {"b", d.b}, {"correlation", d.score}});
    wd[r.tissue_names[t]] = arr;
  }
  j["expression_duplicates"] = wd;

  Json eq = Json::object();
  for (std::size_t t = 0; t < r.dna.tables.size(); ++t) {
    const auto& tab = r.dna.tables[t];
    Json o;
    o["selected_eqtl"] = r.dna.eqtl[t].size();
    o["classifiers"] = tab.eqtl.size();
    o["dropped_eqtl"] = tab.dropped_eqtl;
    o["excluded_from_training"] = tab.excluded;
    Json loci = Json::array();
    for (const auto& e : r.dna.eqtl[t]) loci.push_back({{"locus", e.locus_id}, {"chr", e.chromosome}, {"pos_cM", e.pos_cM}, {"probes", e.probe_ids}});
    o["eqtl"] = loci;
    eq[tab.tissue] = o;
  }
  j["eqtl"] = eq;

  j["audit_before"] = to_json(r.audit_before);
  j["audit_after"] = to_json(r.audit_after);

  Json sc = Json::array();
  for (const auto& t : r.scans)
    sc.push_back({{"trait", t.trait},
                  {"max_lod_before", t.before.max_lod()},
                  {"max_lod_after", t.after.max_lod()},
                  {"chromosomes_at_or_above_lod_peak_before", t.before.chromosomes_at_or_above(r.settings.lod_peak)},
                  {"chromosomes_at_or_above_lod_peak_after", t.after.chromosomes_at_or_above(r.settings.lod_peak)}});
  j["scans"] = sc;
  Json es = Json::array();
  for (const auto& e : r.expression_scans)
    es.push_back({{"tissue", e.tissue},
                  {"local_before", e.local_before},
                  {"local_after", e.local_after},
                  {"trans_before", e.trans_before},
                  {"trans_after", e.trans_after}});
  j["expression_scans"] = es;
  return j;
}

inline void write_decisions(const std::filesystem::path& out, const PipelineResult& r) {
  write_json(out / "decisions.json", to_json(decision_report(r)));
}

inline void write_similarities(const std::filesystem::path& out, const PipelineResult& r, bool dna) {
  for (std::size_t t = 0; t < r.tissue_names.size(); ++t)
    io::write_file(out / "similarity" / ("expr_" + r.tissue_names[t] + ".csv"), format_similarity(r.expression.combined[t]));
  if (!dna) return;
  for (std::size_t t = 0; t < r.dna.per_tissue.size(); ++t)
    io::write_file(out / "similarity" / ("dna_" + r.dna.tables[t].tissue + ".csv"), format_similarity(r.dna.per_tissue[t]));
  io::write_file(out / "similarity" / "dna_combined.csv", format_similarity(r.dna.combined));
}

inline void write_corrected(const std::filesystem::path& out, const Dataset& corrected) {
  write_genotypes(out / "corrected" / "genotypes.csv", corrected.geno);
  for (const auto& e : corrected.expression) write_expression(out / "corrected" / ("expr_" + e.tissue() + ".csv"), e);
}

inline void write_forensics(const std::filesystem::path& out, const Dataset& input, const std::vector<RelabelDecision>& dna,
                            const ForensicsResult& f, FillOrder order) {
  write_json(out / "plate_findings.json", to_json(f, order));
  emit_plate_diagrams(out / "plates", input.plate, dna, f, input.exclusions);
}

inline void write_scans(const std::filesystem::path& out, const PipelineResult& r) {
  for (const auto& t : r.scans) {
    io::write_file(out / "scans" / (t.trait + "_before.csv"), format_scan(t.before));
    io::write_file(out / "scans" / (t.trait + "_after.csv"), format_scan(t.after));
  }
}

// Every output of a full run under `out`.
inline void write_pipeline_outputs(const std::filesystem::path& out, const Dataset& input, const PipelineResult& r) {
  write_decisions(out, r);
  write_similarities(out, r, true);
  if (r.forensics) write_forensics(out, input, r.dna.decisions, *r.forensics, r.settings.fill_order);
  write_corrected(out, r.corrected.dataset);
  write_scans(out, r);
  write_json(out / "audit.json", audit_json(r));
}

}  // namespace lineup
