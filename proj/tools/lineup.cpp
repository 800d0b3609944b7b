// lineup: detect and correct sample mix-ups in eQTL data.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "lineup/lineup.hpp"

namespace fs = std::filesystem;
using namespace lineup;

namespace {

void log(const std::string& msg) { std::cerr << "lineup: " << msg << '\n'; }

std::string fixed(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

struct Common {
  std::string manifest;
  std::string out;
  std::size_t threads = 0;

  std::size_t thread_count() const {
    if (threads > 0) return threads;
    return std::max(1u, std::thread::hardware_concurrency());
  }
};

// Dataset named by a manifest: read from [data], or simulated from [simulate].
struct Input {
  Dataset dataset;
  Settings settings;
  std::optional<Simulation> sim;
};

Input load_input(const Common& c) {
  const Manifest m = load_manifest(c.manifest);
  Input in;
  in.settings = m.settings;
  if (has_data(m)) {
    in.dataset = load_dataset(m);
    log("loaded " + std::to_string(in.dataset.geno.n_samples()) + " genotyped samples and " +
        std::to_string(in.dataset.expression.size()) + " tissues from " + c.manifest);
    return in;
  }
  const SimConfig& cfg = *m.simulate;
  log("simulating " + std::to_string(cfg.n_samples) + " samples, seed " + std::to_string(cfg.seed));
  in.sim = simulate_dataset(cfg, c.thread_count());
  in.dataset = in.sim->dataset;
  if (in.settings.sex.y_probes.empty()) in.settings.sex.y_probes = sim_y_probe_ids(cfg);
  return in;
}

std::vector<std::string> tissue_names(const Dataset& ds) {
  std::vector<std::string> out;
  for (const auto& e : ds.expression) out.push_back(e.tissue());
  return out;
}

// Expression decisions from a report, in dataset tissue order.
std::vector<std::vector<RelabelDecision>> expression_in_order(const DecisionReport& rep, const Dataset& ds,
                                                              const std::string& source) {
  std::vector<std::vector<RelabelDecision>> out(ds.expression.size());
  for (const auto& [tissue, decisions] : rep.expression) {
    const auto names = tissue_names(ds);
    auto it = std::find(names.begin(), names.end(), tissue);
    if (it == names.end()) throw InputError(source + ": tissue '" + tissue + "' is not in the manifest");
    out[static_cast<std::size_t>(it - names.begin())] = decisions;
  }
  return out;
}

void write_truth(const fs::path& out, const Simulation& sim, const PipelineResult* r) {
  write_json(out / "truth.json", to_json(sim.truth));
  if (!r) return;
  const auto m = score_recovery(r->expression_decisions(), r->dna.decisions, sim.truth);
  write_json(out / "recovery.json", to_json(m));
  log("recovered " + std::to_string(m.recovered) + " of " + std::to_string(m.mislabels) + " injected mislabels, " +
      std::to_string(m.false_relabels) + " false relabels");
}

void log_result(const PipelineResult& r) {
  const auto& d = r.corrected.summary.dna;
  log("DNA: " + std::to_string(d.correct) + " correct, " + std::to_string(d.fixable) + " fixable, " +
      std::to_string(d.unfixable) + " unfixable, " + std::to_string(d.duplicate) + " duplicate, " +
      std::to_string(d.unverifiable) + " unverifiable");
  for (std::size_t t = 0; t < r.tissue_names.size(); ++t) {
    const auto& e = r.corrected.summary.expression[t];
    log(r.tissue_names[t] + ": " + std::to_string(e.fixable) + " fixable, " + std::to_string(e.duplicate) +
        " duplicate, " + std::to_string(e.unfixable) + " unfixable");
  }
  log("sex inconsistencies: " + std::to_string(r.audit_before.inconsistencies()) + " before, " +
      std::to_string(r.audit_after.inconsistencies()) + " after");
}

// ---- subcommands --------------------------------------------------------

struct SimulateArgs {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> samples;
  std::string scenario;
  std::vector<std::string> perturb;
};

int cmd_simulate(const Common& c, const SimulateArgs& a) {
  SimConfig cfg;
  Settings settings;
  if (!c.manifest.empty()) {
    const Manifest m = load_manifest(c.manifest);
    if (!m.simulate) throw InputError(c.manifest + ": no [simulate] section");
    cfg = *m.simulate;
    settings = m.settings;
  } else if (auto s = seed_from_env()) {
    cfg.seed = *s;
  }
  if (a.seed) cfg.seed = *a.seed;
  if (a.samples) cfg.n_samples = *a.samples;
  if (!a.scenario.empty()) cfg.scenario = detail::scenario_from(a.scenario, "--scenario");
  for (const auto& p : a.perturb) cfg.perturbations.push_back(parse_perturbation(p));

  log("simulating " + std::to_string(cfg.n_samples) + " samples, seed " + std::to_string(cfg.seed));
  const Simulation sim = simulate_dataset(cfg, c.thread_count());
  if (settings.sex.y_probes.empty()) settings.sex.y_probes = sim_y_probe_ids(cfg);
  if (settings.scan_traits.empty() && sim.dataset.phenotypes) settings.scan_traits = sim.dataset.phenotypes->trait_names;
  const fs::path out(c.out);
  write_dataset(out, sim.dataset, settings);
  write_truth(out, sim, nullptr);
  log("wrote dataset and truth.json to " + c.out + " (" + std::to_string(sim.truth.perturbations.size()) +
      " perturbations)");
  return 0;
}

int cmd_validate(const Common& c) {
  const Input in = load_input(c);
  const ValidationReport rep = validate_dataset(in.dataset);
  for (const auto& e : rep.entries) std::cout << to_string(e.severity) << ' ' << e.kind << ' ' << e.subject << ": " << e.message << '\n';
  const std::size_t errors = rep.count(Severity::Error);
  log(std::to_string(rep.entries.size()) + " findings, " + std::to_string(errors) + " errors");
  return errors > 0 ? 1 : 0;
}

int cmd_align_expr(const Common& c) {
  const Input in = load_input(c);
  const auto& s = in.settings;
  const auto ea = align_expression(in.dataset.expression, s.probe_corr_min, s.expr, s.expr_duplicate_min, c.thread_count());
  DecisionReport rep;
  rep.settings = to_json(s);
  const auto names = tissue_names(in.dataset);
  const fs::path out(c.out);
  for (std::size_t t = 0; t < names.size(); ++t) {
    rep.expression.emplace_back(names[t], ea.decisions[t]);
    io::write_file(out / "similarity" / ("expr_" + names[t] + ".csv"), format_similarity(ea.combined[t]));
  }
  write_json(out / "decisions.json", to_json(rep));
  for (std::size_t t = 0; t < names.size(); ++t) {
    VerdictCounts v;
    for (const auto& d : ea.decisions[t]) v.add(d);
    log(names[t] + ": " + std::to_string(v.fixable) + " fixable, " + std::to_string(v.duplicate) + " duplicate, " +
        std::to_string(v.unfixable) + " unfixable");
  }
  return 0;
}

int cmd_align_dna(const Common& c, bool no_expr_fix) {
  const Input in = load_input(c);
  const PipelineResult r = run_pipeline(in.dataset, in.settings, {c.thread_count(), !no_expr_fix, false});
  const fs::path out(c.out);
  write_decisions(out, r);
  write_similarities(out, r, true);
  log_result(r);
  return 0;
}

int cmd_correct(const Common& c, const std::string& decisions) {
  const Input in = load_input(c);
  const DecisionReport rep = parse_decision_report_text(io::read_file(decisions), decisions);
  const auto expr = expression_in_order(rep, in.dataset, decisions);
  const CorrectionResult res = apply_corrections(in.dataset, expr, rep.dna);
  const fs::path out(c.out);
  write_corrected(out, res.dataset);
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["summary"] = to_json(res.summary, tissue_names(in.dataset));
  write_json(out / "correction_summary.json", j);
  log("wrote corrected data for " + std::to_string(res.summary.dna_rows_out) + " genotyped samples");
  return 0;
}

int cmd_forensics(const Common& c, const std::string& decisions) {
  const Input in = load_input(c);
  if (in.dataset.plate.entries.empty()) throw InputError(c.manifest + ": forensics needs a plate layout");
  std::vector<RelabelDecision> dna;
  if (!decisions.empty()) {
    dna = parse_decision_report_text(io::read_file(decisions), decisions).dna;
  } else {
    dna = run_pipeline(in.dataset, in.settings, {c.thread_count(), true, false}).dna.decisions;
  }
  const auto f = detect_patterns(dna, in.dataset.plate, in.settings.fill_order, in.settings.dna.other_min);
  write_forensics(fs::path(c.out), in.dataset, dna, f, in.settings.fill_order);
  for (const auto& finding : f.findings)
    if (finding.kind != FindingKind::Orphan) log(std::string(to_string(finding.kind)) + " of length " + std::to_string(finding.length));
  for (const auto& a : f.anomalies) log("anomaly: " + a);
  return 0;
}

int cmd_scan(const Common& c, const std::vector<std::string>& traits) {
  Input in = load_input(c);
  if (!traits.empty()) in.settings.scan_traits = traits;
  const PipelineResult r = run_pipeline(in.dataset, in.settings, {c.thread_count(), true, true});
  write_scans(fs::path(c.out), r);
  for (const auto& t : r.scans)
    log(t.trait + ": max LOD " + fixed(t.before.max_lod()) + " before, " + fixed(t.after.max_lod()) +
        " after");
  return 0;
}

int cmd_run_all(const Common& c) {
  const auto t0 = std::chrono::steady_clock::now();
  const Input in = load_input(c);
  const PipelineResult r = run_pipeline(in.dataset, in.settings, {c.thread_count(), true, true});
  const fs::path out(c.out);
  write_pipeline_outputs(out, in.dataset, r);
  if (in.sim) write_truth(out, *in.sim, &r);
  log_result(r);
  log("done in " + fixed(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 1) + " s");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Detect and correct sample mix-ups in eQTL data"};
  app.require_subcommand(1);
  Common c;

  auto add_common = [&](CLI::App* sub, bool needs_manifest, bool needs_out) {
    auto* m = sub->add_option("--manifest", c.manifest, "Manifest (TOML) naming data files and thresholds");
    if (needs_manifest) m->required();
    auto* o = sub->add_option("--out", c.out, "Output directory");
    if (needs_out) o->required();
    sub->add_option("--threads", c.threads, "Worker threads (default: all cores)")->check(CLI::PositiveNumber);
  };

  SimulateArgs sim_args;
  auto* simulate = app.add_subcommand("simulate", "Write a synthetic dataset with injected mix-ups");
  add_common(simulate, false, true);
  simulate->add_option("--seed", sim_args.seed, "Random seed (overrides manifest and LINEUP_FORGE_SEED)");
  simulate->add_option("--samples", sim_args.samples, "Number of samples");
  simulate->add_option("--scenario", sim_args.scenario, "none, headline or dna_mislabel");
  simulate->add_option("--perturb", sim_args.perturb, "Extra perturbation, e.g. \"dna swap Mouse0001 Mouse0002\"");

  auto* validate = app.add_subcommand("validate", "Check a dataset for consistency");
  add_common(validate, true, false);

  auto* align_expr = app.add_subcommand("align-expr", "Expression-vs-expression decisions");
  add_common(align_expr, true, true);

  bool no_expr_fix = false;
  auto* align_dna = app.add_subcommand("align-dna", "DNA-vs-expression decisions");
  add_common(align_dna, true, true);
  align_dna->add_flag("--no-expr-fix", no_expr_fix, "Use expression data as labeled, without expression corrections");

  std::string decisions;
  auto* correct = app.add_subcommand("correct", "Apply a decisions file and write corrected data");
  add_common(correct, true, true);
  correct->add_option("--decisions", decisions, "decisions.json from align-dna or run-all")->required()->check(CLI::ExistingFile);

  auto* forensics = app.add_subcommand("forensics", "Classify DNA plate errors and draw plate diagrams");
  add_common(forensics, true, true);
  forensics->add_option("--decisions", decisions, "decisions.json (computed when omitted)")->check(CLI::ExistingFile);

  std::vector<std::string> traits;
  auto* scan = app.add_subcommand("scan", "Genome scans before and after correction");
  add_common(scan, true, true);
  scan->add_option("--trait", traits, "Trait to scan (repeatable; default: manifest or all)");

  auto* run_all = app.add_subcommand("run-all", "Run the whole pipeline");
  add_common(run_all, true, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*simulate) return cmd_simulate(c, sim_args);
    if (*validate) return cmd_validate(c);
    if (*align_expr) return cmd_align_expr(c);
    if (*align_dna) return cmd_align_dna(c, no_expr_fix);
    if (*correct) return cmd_correct(c, decisions);
    if (*forensics) return cmd_forensics(c, decisions);
    if (*scan) return cmd_scan(c, traits);
    if (*run_all) return cmd_run_all(c);
  } catch (const InputError& e) {
    log(std::string("error: ") + e.what());
    return 1;
  } catch (const std::exception& e) {
    log(std::string("internal error: ") + e.what());
    return 2;
  }
  return 2;
}
