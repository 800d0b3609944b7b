#pragma once

// Manifest files: a small TOML subset with [section] headers and key = value
// lines, where a value is a quoted string, a number, true/false, or a
// one-line array of those. Every threshold has the published default and can
// be overridden here.

#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "lineup/dataset.hpp"
#include "lineup/decide.hpp"
#include "lineup/geno_align.hpp"
#include "lineup/io.hpp"
#include "lineup/plate.hpp"
#include "lineup/relabel.hpp"
#include "lineup/simulator.hpp"

namespace lineup {

struct Settings {
  double probe_corr_min = 0.75;
  DecisionThresholds expr{0.8, 0.8, 0.1};
  double expr_duplicate_min = 0.95;
  DecisionThresholds dna{0.8, 0.8, 0.2};
  double pseudomarker_step_cM = 0.5;
  double genotype_error_rate = 0.002;
  double eqtl_lod_min = 100.0;
  double call_prob_min = 0.99;
  KnnSettings knn;  // k 40, vote 0.8, filter 0.7
  double duplicate_identity_min = 0.98;
  double lod_peak = 5.0;
  double lod_drop = 2.0;
  FillOrder fill_order = FillOrder::ColumnMajor;
  SexSettings sex{"Xist", {}, 2};
  std::vector<std::string> scan_traits;  // empty: every phenotype column
  bool scan_expression = false;
  bool interactive_sex = true;
};

inline Json to_json(const Settings& s) {
  Json j;
  j["probe_corr_min"] = s.probe_corr_min;
  j["expr_self_min"] = s.expr.self_min;
  j["expr_other_min"] = s.expr.other_min;
  j["expr_gap_min"] = s.expr.gap_min;
  j["expr_duplicate_min"] = s.expr_duplicate_min;
  j["dna_self_min"] = s.dna.self_min;
  j["dna_other_min"] = s.dna.other_min;
  j["dna_gap_min"] = s.dna.gap_min;
  j["pseudomarker_step_cM"] = s.pseudomarker_step_cM;
  j["genotype_error_rate"] = s.genotype_error_rate;
  j["eqtl_lod_min"] = s.eqtl_lod_min;
  j["call_prob_min"] = s.call_prob_min;
  j["knn_k"] = s.knn.k;
  j["knn_vote_min"] = s.knn.vote_min;
  j["knn_filter_min"] = s.knn.filter_min;
  j["duplicate_identity_min"] = s.duplicate_identity_min;
  j["lod_peak"] = s.lod_peak;
  j["lod_drop"] = s.lod_drop;
  j["fill_order"] = s.fill_order == FillOrder::ColumnMajor ? "column_major" : "row_major";
  j["xist_probe"] = s.sex.xist_probe;
  j["y_probes"] = s.sex.y_probes;
  j["x_min_calls"] = s.sex.x_min_calls;
  j["scan_traits"] = s.scan_traits;
  j["scan_expression"] = s.scan_expression;
  j["interactive_sex"] = s.interactive_sex;
  return j;
}

namespace toml {

using Array = std::vector<std::variant<std::string, double, bool>>;
using Value = std::variant<std::string, double, bool, Array>;

struct Entry {
  std::size_t line = 0;
  Value value;
};

// section -> key -> entry; sections and keys keep file order.
struct Document {
  std::vector<std::pair<std::string, std::vector<std::pair<std::string, Entry>>>> sections;

  const std::vector<std::pair<std::string, Entry>>* section(const std::string& name) const {
    for (const auto& [n, e] : sections)
      if (n == name) return &e;
    return nullptr;
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

// Drops a trailing comment that is not inside a string.
inline std::string_view strip_comment(std::string_view s) {
  bool in_str = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"') in_str = !in_str;
    if (s[i] == '#' && !in_str) return s.substr(0, i);
  }
  return s;
}

inline std::variant<std::string, double, bool> scalar(std::string_view v, const std::string& where) {
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') {
    std::string_view inner = v.substr(1, v.size() - 2);
    if (inner.find('"') != std::string_view::npos || inner.find('\\') != std::string_view::npos)
      throw InputError(where + ": escapes and embedded quotes are not supported");
    return std::string(inner);
  }
  if (v == "true") return true;
  if (v == "false") return false;
  std::string digits;
  for (char c : v)
    if (c != '_') digits += c;
  if (auto d = io::parse_double(digits); d && std::isfinite(*d)) return *d;
  throw InputError(where + ": cannot parse value '" + std::string(v) + "'");
}

}  // namespace detail

inline Document parse(std::string_view text, const std::string& source) {
  Document doc;
  doc.sections.emplace_back("", std::vector<std::pair<std::string, Entry>>{});
  std::size_t line = 0, pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    ++line;
    const std::string where = source + ": line " + std::to_string(line);
    std::string_view l = detail::trim(detail::strip_comment(text.substr(pos, end - pos)));
    pos = end + 1;
    if (l.empty()) {
      if (end == text.size()) break;
      continue;
    }
    if (l.front() == '[') {
      if (l.back() != ']' || l.size() < 3) throw InputError(where + ": malformed section header");
      std::string name(detail::trim(l.substr(1, l.size() - 2)));
      if (doc.section(name)) throw InputError(where + ": section [" + name + "] appears twice");
      doc.sections.emplace_back(name, std::vector<std::pair<std::string, Entry>>{});
    } else {
      const auto eq = l.find('=');
      if (eq == std::string_view::npos) throw InputError(where + ": expected key = value");
      std::string key(detail::trim(l.substr(0, eq)));
      if (key.size() >= 2 && key.front() == '"' && key.back() == '"') key = key.substr(1, key.size() - 2);
      if (key.empty()) throw InputError(where + ": empty key");
      std::string_view v = detail::trim(l.substr(eq + 1));
      Entry e{line, {}};
      if (!v.empty() && v.front() == '[') {
        if (v.back() != ']') throw InputError(where + ": arrays must close on the same line");
        Array arr;
        std::string_view inner = detail::trim(v.substr(1, v.size() - 2));
        while (!inner.empty()) {
          std::size_t cut = 0;
          bool in_str = false;
          while (cut < inner.size() && (in_str || inner[cut] != ',')) {
            if (inner[cut] == '"') in_str = !in_str;
            ++cut;
          }
          auto item = detail::trim(inner.substr(0, cut));
          if (!item.empty()) arr.push_back(detail::scalar(item, where));
          inner = cut < inner.size() ? detail::trim(inner.substr(cut + 1)) : std::string_view{};
        }
        e.value = std::move(arr);
      } else {
        auto s = detail::scalar(v, where);
        std::visit([&](auto&& x) { e.value = x; }, s);
      }
      auto& entries = doc.sections.back().second;
      for (const auto& [k, _] : entries)
        if (k == key) throw InputError(where + ": key '" + key + "' repeated");
      entries.emplace_back(std::move(key), std::move(e));
    }
    if (end == text.size()) break;
  }
  return doc;
}

}  // namespace toml

struct Manifest {
  std::filesystem::path source;
  std::filesystem::path genotypes, map, plate, annotation;
  std::optional<std::filesystem::path> phenotypes;
  std::vector<std::pair<std::string, std::filesystem::path>> tissues;
  std::vector<std::string> exclusions;
  Settings settings;
  std::optional<SimConfig> simulate;
};

namespace detail {

struct ManifestReader {
  const std::string& source;

  std::string where(const toml::Entry& e) const { return source + ": line " + std::to_string(e.line); }

  double number(const std::string& key, const toml::Entry& e) const {
    if (auto d = std::get_if<double>(&e.value)) return *d;
    throw InputError(where(e) + ": " + key + " must be a number");
  }
  double fraction(const std::string& key, const toml::Entry& e, double lo, double hi) const {
    const double v = number(key, e);
    if (v < lo || v > hi)
      throw InputError(where(e) + ": " + key + " must lie in [" + io::format_double(lo) + ", " + io::format_double(hi) + "]");
    return v;
  }
  std::size_t count(const std::string& key, const toml::Entry& e) const {
    const double v = number(key, e);
    if (v < 0 || v != std::floor(v)) throw InputError(where(e) + ": " + key + " must be a non-negative integer");
    return static_cast<std::size_t>(v);
  }
  bool boolean(const std::string& key, const toml::Entry& e) const {
    if (auto b = std::get_if<bool>(&e.value)) return *b;
    throw InputError(where(e) + ": " + key + " must be true or false");
  }
  std::string string(const std::string& key, const toml::Entry& e) const {
    if (auto s = std::get_if<std::string>(&e.value)) return *s;
    throw InputError(where(e) + ": " + key + " must be a quoted string");
  }
  std::vector<std::string> strings(const std::string& key, const toml::Entry& e) const {
    auto a = std::get_if<toml::Array>(&e.value);
    if (!a) throw InputError(where(e) + ": " + key + " must be an array of strings");
    std::vector<std::string> out;
    for (const auto& x : *a) {
      auto s = std::get_if<std::string>(&x);
      if (!s) throw InputError(where(e) + ": " + key + " must be an array of strings");
      out.push_back(*s);
    }
    return out;
  }
  [[noreturn]] void unknown(const std::string& section, const std::string& key, const toml::Entry& e) const {
    throw InputError(where(e) + ": unknown key '" + key + "' in [" + section + "]");
  }
};

inline FillOrder fill_order_from(const std::string& s, const std::string& where) {
  if (s == "column_major") return FillOrder::ColumnMajor;
  if (s == "row_major") return FillOrder::RowMajor;
  throw InputError(where + ": fill_order must be \"column_major\" or \"row_major\"");
}

inline void read_thresholds(const ManifestReader& r, const std::vector<std::pair<std::string, toml::Entry>>& kv, Settings& s) {
  for (const auto& [k, e] : kv) {
    if (k == "probe_corr_min") s.probe_corr_min = r.fraction(k, e, -1, 1);
    else if (k == "expr_self_min") s.expr.self_min = r.fraction(k, e, -1, 1);
    else if (k == "expr_other_min") s.expr.other_min = r.fraction(k, e, -1, 1);
    else if (k == "expr_gap_min") s.expr.gap_min = r.fraction(k, e, 0, 2);
    else if (k == "expr_duplicate_min") s.expr_duplicate_min = r.fraction(k, e, -1, 1);
    else if (k == "dna_self_min") s.dna.self_min = r.fraction(k, e, 0, 1);
    else if (k == "dna_other_min") s.dna.other_min = r.fraction(k, e, 0, 1);
    else if (k == "dna_gap_min") s.dna.gap_min = r.fraction(k, e, 0, 1);
    else if (k == "pseudomarker_step_cM") {
      s.pseudomarker_step_cM = r.number(k, e);
      if (!(s.pseudomarker_step_cM > 0)) throw InputError(r.where(e) + ": pseudomarker_step_cM must be positive");
    } else if (k == "genotype_error_rate") s.genotype_error_rate = r.fraction(k, e, 0, 0.5);
    else if (k == "eqtl_lod_min") s.eqtl_lod_min = r.number(k, e);
    else if (k == "call_prob_min") s.call_prob_min = r.fraction(k, e, 0, 1);
    else if (k == "knn_k") {
      s.knn.k = r.count(k, e);
      if (s.knn.k == 0) throw InputError(r.where(e) + ": knn_k must be positive");
    } else if (k == "knn_vote_min") s.knn.vote_min = r.fraction(k, e, 0, 1);
    else if (k == "knn_filter_min") s.knn.filter_min = r.fraction(k, e, 0, 1);
    else if (k == "duplicate_identity_min") s.duplicate_identity_min = r.fraction(k, e, 0, 1);
    else if (k == "lod_peak") s.lod_peak = r.number(k, e);
    else if (k == "lod_drop") s.lod_drop = r.number(k, e);
    else r.unknown("thresholds", k, e);
  }
}

inline Scenario scenario_from(const std::string& s, const std::string& where) {
  if (s == "none") return Scenario::None;
  if (s == "headline") return Scenario::Headline;
  if (s == "dna_mislabel") return Scenario::DnaMislabel;
  throw InputError(where + ": scenario must be \"none\", \"headline\" or \"dna_mislabel\"");
}

inline SimConfig read_simulate(const ManifestReader& r, const std::vector<std::pair<std::string, toml::Entry>>& kv) {
  SimConfig c;
  for (const auto& [k, e] : kv) {
    if (k == "seed") c.seed = r.count(k, e);
    else if (k == "n_samples") c.n_samples = r.count(k, e);
    else if (k == "n_chromosomes") c.n_chromosomes = r.count(k, e);
    else if (k == "chr_length_cM") c.chr_length_cM = r.number(k, e);
    else if (k == "markers_per_chr") c.markers_per_chr = r.count(k, e);
    else if (k == "include_x") c.include_x = r.boolean(k, e);
    else if (k == "x_markers") c.x_markers = r.count(k, e);
    else if (k == "tissues") c.tissues = r.strings(k, e);
    else if (k == "eqtl_probes") c.eqtl_probes = r.count(k, e);
    else if (k == "eqtl_shared_marker") c.eqtl_shared_marker = r.fraction(k, e, 0, 1);
    else if (k == "eqtl_additive") c.eqtl_additive = r.number(k, e);
    else if (k == "eqtl_dominance") c.eqtl_dominance = r.number(k, e);
    else if (k == "eqtl_noise_sd") c.eqtl_noise_sd = r.number(k, e);
    else if (k == "cross_probes") c.cross_probes = r.count(k, e);
    else if (k == "cross_latent_sd") c.cross_latent_sd = r.number(k, e);
    else if (k == "cross_noise_sd") c.cross_noise_sd = r.number(k, e);
    else if (k == "noise_probes") c.noise_probes = r.count(k, e);
    else if (k == "noise_sd") c.noise_sd = r.number(k, e);
    else if (k == "y_probes") c.y_probes = r.count(k, e);
    else if (k == "genotype_error_rate") c.genotype_error_rate = r.fraction(k, e, 0, 1);
    else if (k == "missing_rate") c.missing_rate = r.fraction(k, e, 0, 1);
    else if (k == "dna_only_samples") c.dna_only_samples = r.count(k, e);
    else if (k == "phenotype") c.phenotype = r.boolean(k, e);
    else if (k == "trait_qtl") c.trait_qtl = r.count(k, e);
    else if (k == "trait_qtl_effect") c.trait_qtl_effect = r.number(k, e);
    else if (k == "plate_size") c.plate_size = r.count(k, e);
    else if (k == "fill_order") c.fill_order = fill_order_from(r.string(k, e), r.where(e));
    else if (k == "scenario") c.scenario = scenario_from(r.string(k, e), r.where(e));
    else if (k == "mislabel_fraction") c.mislabel_fraction = r.fraction(k, e, 0, 1);
    else if (k == "perturbations") {
      for (const auto& p : r.strings(k, e)) {
        try {
          c.perturbations.push_back(parse_perturbation(p));
        } catch (const InputError& err) {
          throw InputError(r.where(e) + ": " + err.what());
        }
      }
    } else r.unknown("simulate", k, e);
  }
  return c;
}

}  // namespace detail

// Seed override for simulations, read from LINEUP_FORGE_SEED when set.
inline std::optional<std::uint64_t> seed_from_env() {
  const char* v = std::getenv("LINEUP_FORGE_SEED");
  if (!v || !*v) return std::nullopt;
  char* end = nullptr;
  const unsigned long long s = std::strtoull(v, &end, 10);
  if (*end != '\0') throw InputError("LINEUP_FORGE_SEED must be a non-negative integer, got '" + std::string(v) + "'");
  return static_cast<std::uint64_t>(s);
}

// Relative paths resolve against base_dir.
inline Manifest parse_manifest_text(std::string_view text, const std::filesystem::path& base_dir,
                                    const std::string& source = "manifest") {
  const auto doc = toml::parse(text, source);
  const detail::ManifestReader r{source};
  Manifest m;
  m.source = source;
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  };
  bool have_data = false;
  for (const auto& [section, kv] : doc.sections) {
    if (section.empty()) {
      if (!kv.empty()) throw InputError(r.where(kv.front().second) + ": keys must sit inside a [section]");
    } else if (section == "data") {
      have_data = true;
      for (const auto& [k, e] : kv) {
        if (k == "genotypes") m.genotypes = resolve(r.string(k, e));
        else if (k == "map") m.map = resolve(r.string(k, e));
        else if (k == "plate") m.plate = resolve(r.string(k, e));
        else if (k == "annotation") m.annotation = resolve(r.string(k, e));
        else if (k == "phenotypes") m.phenotypes = resolve(r.string(k, e));
        else if (k == "exclusions") m.exclusions = r.strings(k, e);
        else r.unknown(section, k, e);
      }
    } else if (section == "expression") {
      for (const auto& [k, e] : kv) m.tissues.emplace_back(k, resolve(r.string(k, e)));
    } else if (section == "thresholds") {
      detail::read_thresholds(r, kv, m.settings);
    } else if (section == "sex") {
      for (const auto& [k, e] : kv) {
        if (k == "xist_probe") m.settings.sex.xist_probe = r.string(k, e);
        else if (k == "y_probes") m.settings.sex.y_probes = r.strings(k, e);
        else if (k == "x_min_calls") m.settings.sex.x_min_calls = r.count(k, e);
        else r.unknown(section, k, e);
      }
    } else if (section == "scan") {
      for (const auto& [k, e] : kv) {
        if (k == "traits") m.settings.scan_traits = r.strings(k, e);
        else if (k == "expression") m.settings.scan_expression = r.boolean(k, e);
        else if (k == "interactive_sex") m.settings.interactive_sex = r.boolean(k, e);
        else r.unknown(section, k, e);
      }
    } else if (section == "plate") {
      for (const auto& [k, e] : kv) {
        if (k == "fill_order") m.settings.fill_order = detail::fill_order_from(r.string(k, e), r.where(e));
        else r.unknown(section, k, e);
      }
    } else if (section == "simulate") {
      m.simulate = detail::read_simulate(r, kv);
    } else {
      throw InputError(source + ": unknown section [" + section + "]");
    }
  }
  if (m.simulate) {
    if (auto s = seed_from_env()) m.simulate->seed = *s;
  }
  if (have_data) {
    if (m.genotypes.empty() || m.map.empty())
      throw InputError(source + ": [data] needs at least genotypes and map");
    if (m.tissues.empty()) throw InputError(source + ": [expression] must list at least one tissue");
  } else if (!m.simulate) {
    throw InputError(source + ": needs a [data] section or a [simulate] section");
  }
  return m;
}

inline Manifest load_manifest(const std::filesystem::path& path) {
  return parse_manifest_text(io::read_file(path), path.parent_path(), path.string());
}

inline bool has_data(const Manifest& m) { return !m.genotypes.empty(); }

// Parses every file the manifest names.
inline Dataset load_dataset(const Manifest& m) {
  if (!has_data(m)) throw InputError(m.source.string() + ": no [data] section to load");
  Dataset ds;
  ds.geno = parse_genotypes(m.genotypes);
  ds.map = parse_map(m.map);
  if (!m.plate.empty()) ds.plate = parse_plate(m.plate);
  if (!m.annotation.empty()) ds.annotation = parse_probe_annotation(m.annotation);
  if (m.phenotypes) ds.phenotypes = parse_phenotypes(*m.phenotypes);
  for (const auto& [t, p] : m.tissues) ds.expression.push_back(parse_expression(p, t));
  ds.exclusions = m.exclusions;
  record_label_sex(ds);
  return ds;
}

inline std::string quoted(const std::string& s) { return "\"" + s + "\""; }

inline std::string quoted_list(const std::vector<std::string>& v) {
  std::string out = "[";
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + quoted(v[i]);
  return out + "]";
}

// Manifest text for a dataset directory written by write_dataset.
inline std::string format_manifest(const std::vector<std::string>& tissues, bool with_phenotypes,
                                   const std::vector<std::string>& exclusions, const Settings& s) {
  std::string out = "[data]\n";
  out += "genotypes = \"genotypes.csv\"\nmap = \"map.csv\"\nplate = \"plate.csv\"\nannotation = \"annotation.csv\"\n";
  if (with_phenotypes) out += "phenotypes = \"phenotypes.csv\"\n";
  if (!exclusions.empty()) out += "exclusions = " + quoted_list(exclusions) + "\n";
  out += "\n[expression]\n";
  for (const auto& t : tissues) out += t + " = \"expr_" + t + ".csv\"\n";
  out += "\n[sex]\nxist_probe = " + quoted(s.sex.xist_probe) + "\ny_probes = " + quoted_list(s.sex.y_probes) + "\n";
  if (!s.scan_traits.empty()) out += "\n[scan]\ntraits = " + quoted_list(s.scan_traits) + "\n";
  return out;
}

// Writes the dataset files plus a manifest.toml naming them.
inline void write_dataset(const std::filesystem::path& dir, const Dataset& ds, const Settings& s) {
  write_genotypes(dir / "genotypes.csv", ds.geno);
  write_map(dir / "map.csv", ds.map);
  write_plate(dir / "plate.csv", ds.plate);
  write_probe_annotation(dir / "annotation.csv", ds.annotation);
  if (ds.phenotypes) write_phenotypes(dir / "phenotypes.csv", *ds.phenotypes);
  std::vector<std::string> tissues;
  for (const auto& e : ds.expression) {
    tissues.push_back(e.tissue());
    write_expression(dir / ("expr_" + e.tissue() + ".csv"), e);
  }
  io::write_file(dir / "manifest.toml", format_manifest(tissues, ds.phenotypes.has_value(), ds.exclusions, s));
}

inline Json to_json(const GroundTruth& t) {
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["perturbations"] = Json::array();
  for (const auto& p : t.perturbations) j["perturbations"].push_back(p.describe());
  auto grid = [](const GridTruth& g) {
    Json o;
    o["moved"] = Json::object();
    for (const auto& [label, content] : g.content)
      if (content != label) o["moved"][label] = content.empty() ? Json(nullptr) : Json(content);
    o["omitted"] = g.omitted;
    return o;
  };
  j["dna"] = grid(t.dna);
  j["expression"] = Json::object();
  for (const auto& g : t.tissues) j["expression"][g.grid] = grid(g);
  return j;
}

inline Json to_json(const RecoveryMetrics& m) {
  Json j;
  j["mislabels"] = m.mislabels;
  j["recovered"] = m.recovered;
  j["recovery_rate"] = m.recovery_rate();
  j["clean_rows"] = m.clean_rows;
  j["false_relabels"] = m.false_relabels;
  j["duplicates"] = m.duplicates;
  j["duplicates_detected"] = m.duplicates_detected;
  j["dna_duplicates"] = m.dna_duplicates;
  j["dna_duplicates_detected"] = m.dna_duplicates_detected;
  j["foreign"] = m.foreign;
  j["foreign_unfixable"] = m.foreign_unfixable;
  j["misses"] = m.misses;
  j["false_relabel_rows"] = m.false_relabel_rows;
  return j;
}

}  // namespace lineup
