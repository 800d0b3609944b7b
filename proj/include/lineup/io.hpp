#pragma once

// CSV readers and writers for every dataset file, plus the JSON and CSV
// result files. Numbers are written in shortest round-trip form.

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <iterator>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "lineup/plate.hpp"
#include "lineup/qtl_scan.hpp"
#include "lineup/types.hpp"

namespace lineup {

using Json = nlohmann::ordered_json;

namespace io {

struct CsvRow {
  std::size_t line = 0;  // 1-based line number in the file
  std::vector<std::string_view> cells;
};

// Splits text into comma-separated rows, skipping blank lines and stripping
// a trailing carriage return. Views point into `text`.
inline std::vector<CsvRow> split_csv(std::string_view text) {
  std::vector<CsvRow> rows;
  std::size_t line = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view l = text.substr(pos, end - pos);
    ++line;
    if (!l.empty() && l.back() == '\r') l.remove_suffix(1);
    if (!l.empty()) {
      CsvRow row{line, {}};
      std::size_t a = 0;
      while (true) {
        std::size_t b = l.find(',', a);
        if (b == std::string_view::npos) {
          row.cells.push_back(l.substr(a));
          break;
        }
        row.cells.push_back(l.substr(a, b - a));
        a = b + 1;
      }
      rows.push_back(std::move(row));
    }
    if (end == text.size()) break;
    pos = end + 1;
  }
  return rows;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError(path.string() + ": cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path.string() + ": cannot write file");
  out << content;
  if (!out) throw std::runtime_error(path.string() + ": write failed");
}

inline std::optional<double> parse_double(std::string_view s) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
  if (is_missing(v)) return "NA";
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

inline std::string context(const std::string& source, std::size_t line) {
  return source + ": line " + std::to_string(line);
}

inline void expect_header(const std::vector<CsvRow>& rows, const std::string& source,
                          std::initializer_list<std::string_view> names, bool prefix_only) {
  if (rows.empty()) throw InputError(source + ": empty file, expected a header row");
  const auto& h = rows.front().cells;
  std::size_t i = 0;
  for (auto n : names) {
    if (i >= h.size() || h[i] != n) {
      std::string want;
      for (auto m : names) want += (want.empty() ? "" : ",") + std::string(m);
      throw InputError(source + ": header must start with \"" + want + "\"");
    }
    ++i;
  }
  if (!prefix_only && h.size() != names.size())
    throw InputError(source + ": header has " + std::to_string(h.size()) + " columns, expected " +
                     std::to_string(names.size()));
}

inline void expect_width(const CsvRow& row, std::size_t width, const std::string& source) {
  if (row.cells.size() != width)
    throw InputError(context(source, row.line) + ": ragged row with " + std::to_string(row.cells.size()) +
                     " cells, expected " + std::to_string(width));
}

}  // namespace io

// ---- genotypes ------------------------------------------------------------

inline GenotypeMatrix parse_genotypes_text(std::string_view text, const std::string& source = "genotypes") {
  const auto rows = io::split_csv(text);
  io::expect_header(rows, source, {"id", "sex"}, true);
  const auto& h = rows.front().cells;
  std::vector<std::string> markers(h.begin() + 2, h.end());
  std::vector<std::string> ids;
  std::vector<Sex> sex;
  std::vector<Genotype> calls;
  std::unordered_map<std::string, std::size_t> seen;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    io::expect_width(row, h.size(), source);
    std::string id(row.cells[0]);
    if (auto [it, fresh] = seen.emplace(id, row.line); !fresh)
      throw InputError(io::context(source, row.line) + ": duplicate sample id '" + id + "' (first on line " +
                       std::to_string(it->second) + ")");
    auto s = sex_from_token(row.cells[1]);
    if (!s) throw InputError(io::context(source, row.line) + ": unknown sex '" + std::string(row.cells[1]) + "'");
    for (std::size_t c = 2; c < row.cells.size(); ++c) {
      auto g = genotype_from_token(row.cells[c]);
      if (!g)
        throw InputError(source + ": unknown genotype token '" + std::string(row.cells[c]) + "' at row " +
                         std::to_string(row.line) + ", marker " + markers[c - 2]);
      calls.push_back(*g);
    }
    ids.push_back(std::move(id));
    sex.push_back(*s);
  }
  try {
    return GenotypeMatrix(std::move(ids), std::move(markers), std::move(calls), std::move(sex));
  } catch (const InputError& e) {
    throw InputError(source + ": " + e.what());
  }
}

inline GenotypeMatrix parse_genotypes(const std::filesystem::path& path) {
  return parse_genotypes_text(io::read_file(path), path.string());
}

inline std::string format_genotypes(const GenotypeMatrix& g) {
  std::string out = "id,sex";
  for (const auto& m : g.marker_ids()) out += "," + m;
  out += '\n';
  for (std::size_t i = 0; i < g.n_samples(); ++i) {
    out += g.sample_ids()[i];
    out += ',';
    out += to_string(g.sex()[i]);
    for (std::size_t j = 0; j < g.n_markers(); ++j) {
      out += ',';
      out += to_string(g.at(i, j));
    }
    out += '\n';
  }
  return out;
}

inline void write_genotypes(const std::filesystem::path& path, const GenotypeMatrix& g) {
  io::write_file(path, format_genotypes(g));
}

// ---- expression -----------------------------------------------------------

inline ExpressionSet parse_expression_text(std::string_view text, const std::string& tissue,
                                           const std::string& source = "expression") {
  const auto rows = io::split_csv(text);
  io::expect_header(rows, source, {"id"}, true);
  const auto& h = rows.front().cells;
  std::vector<std::string> probes(h.begin() + 1, h.end());
  std::vector<std::string> ids;
  std::vector<double> values;
  std::unordered_map<std::string, std::size_t> seen;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    io::expect_width(row, h.size(), source);
    std::string id(row.cells[0]);
    if (auto [it, fresh] = seen.emplace(id, row.line); !fresh)
      throw InputError(io::context(source, row.line) + ": duplicate sample id '" + id + "' (first on line " +
                       std::to_string(it->second) + ")");
    for (std::size_t c = 1; c < row.cells.size(); ++c) {
      if (row.cells[c] == "NA") {
        values.push_back(kNaN);
        continue;
      }
      auto v = io::parse_double(row.cells[c]);
      if (!v || !std::isfinite(*v))
        throw InputError(io::context(source, row.line) + ": non-numeric value '" + std::string(row.cells[c]) +
                         "' for probe " + probes[c - 1]);
      values.push_back(*v);
    }
    ids.push_back(std::move(id));
  }
  try {
    return ExpressionSet(tissue, std::move(ids), std::move(probes), std::move(values));
  } catch (const InputError& e) {
    throw InputError(source + ": " + e.what());
  }
}

inline ExpressionSet parse_expression(const std::filesystem::path& path, const std::string& tissue) {
  return parse_expression_text(io::read_file(path), tissue, path.string());
}

inline std::string format_expression(const ExpressionSet& e) {
  std::string out = "id";
  for (const auto& p : e.probe_ids()) out += "," + p;
  out += '\n';
  for (std::size_t i = 0; i < e.n_samples(); ++i) {
    out += e.sample_ids()[i];
    for (std::size_t j = 0; j < e.n_probes(); ++j) {
      out += ',';
      out += io::format_double(e.at(i, j));
    }
    out += '\n';
  }
  return out;
}

inline void write_expression(const std::filesystem::path& path, const ExpressionSet& e) {
  io::write_file(path, format_expression(e));
}

// ---- map, plate, annotation, phenotypes -----------------------------------

inline GeneticMap parse_map_text(std::string_view text, const std::string& source = "map") {
  const auto rows = io::split_csv(text);
  io::expect_header(rows, source, {"marker", "chr", "pos_cM"}, false);
  GeneticMap map;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    io::expect_width(row, 3, source);
    auto pos = io::parse_double(row.cells[2]);
    if (!pos || !std::isfinite(*pos))
      throw InputError(io::context(source, row.line) + ": invalid position '" + std::string(row.cells[2]) + "'");
    std::string chr(row.cells[1]);
    if (chr.empty()) throw InputError(io::context(source, row.line) + ": empty chromosome");
    auto it = std::find_if(map.chromosomes.begin(), map.chromosomes.end(), [&](const auto& c) { return c.name == chr; });
    if (it == map.chromosomes.end()) {
      map.chromosomes.push_back({chr, chromosome_kind(chr), {}});
      it = std::prev(map.chromosomes.end());
    }
    if (!it->markers.empty() && *pos < it->markers.back().pos_cM)
      throw InputError(io::context(source, row.line) + ": decreasing marker positions on chromosome " + chr + " (" +
                       io::format_double(it->markers.back().pos_cM) + " then " + io::format_double(*pos) + ")");
    it->markers.push_back({std::string(row.cells[0]), *pos});
  }
  try {
    check_map(map);
  } catch (const InputError& e) {
    throw InputError(source + ": " + e.what());
  }
  return map;
}

inline GeneticMap parse_map(const std::filesystem::path& path) { return parse_map_text(io::read_file(path), path.string()); }

inline std::string format_map(const GeneticMap& map) {
  std::string out = "marker,chr,pos_cM\n";
  for (const auto& c : map.chromosomes)
    for (const auto& m : c.markers) out += m.id + "," + c.name + "," + io::format_double(m.pos_cM) + "\n";
  return out;
}

inline void write_map(const std::filesystem::path& path, const GeneticMap& map) { io::write_file(path, format_map(map)); }

inline PlateLayout parse_plate_text(std::string_view text, const std::string& source = "plate") {
  const auto rows = io::split_csv(text);
  io::expect_header(rows, source, {"id", "plate", "well"}, false);
  PlateLayout layout;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    io::expect_width(row, 3, source);
    auto w = parse_well(row.cells[2]);
    if (!w) throw InputError(io::context(source, row.line) + ": invalid well '" + std::string(row.cells[2]) + "'");
    layout.entries.push_back({std::string(row.cells[0]), std::string(row.cells[1]), *w});
  }
  try {
    check_plate_layout(layout);
  } catch (const InputError& e) {
    throw InputError(source + ": " + e.what());
  }
  return layout;
}

inline PlateLayout parse_plate(const std::filesystem::path& path) {
  return parse_plate_text(io::read_file(path), path.string());
}

inline std::string format_plate(const PlateLayout& layout) {
  std::string out = "id,plate,well\n";
  for (const auto& e : layout.entries) out += e.sample_id + "," + e.plate_id + "," + e.well.name() + "\n";
  return out;
}

inline void write_plate(const std::filesystem::path& path, const PlateLayout& layout) {
  io::write_file(path, format_plate(layout));
}

inline ProbeAnnotation parse_probe_annotation_text(std::string_view text, const std::string& source = "annotation") {
  const auto rows = io::split_csv(text);
  io::expect_header(rows, source, {"probe", "chr", "pos_cM"}, false);
  std::vector<ProbeLocation> probes;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    io::expect_width(row, 3, source);
    ProbeLocation p;
    p.probe_id = std::string(row.cells[0]);
    if (!row.cells[1].empty()) {
      auto pos = io::parse_double(row.cells[2]);
      if (!pos || !std::isfinite(*pos))
        throw InputError(io::context(source, row.line) + ": invalid position '" + std::string(row.cells[2]) + "'");
      p.chromosome = std::string(row.cells[1]);
      p.pos_cM = *pos;
      p.located = true;
    }
    probes.push_back(std::move(p));
  }
  try {
    return ProbeAnnotation(std::move(probes));
  } catch (const InputError& e) {
    throw InputError(source + ": " + e.what());
  }
}

inline ProbeAnnotation parse_probe_annotation(const std::filesystem::path& path) {
  return parse_probe_annotation_text(io::read_file(path), path.string());
}

inline std::string format_probe_annotation(const ProbeAnnotation& a) {
  std::string out = "probe,chr,pos_cM\n";
  for (const auto& p : a.probes())
    out += p.probe_id + "," + (p.located ? p.chromosome + "," + io::format_double(p.pos_cM) : std::string(",")) + "\n";
  return out;
}

inline void write_probe_annotation(const std::filesystem::path& path, const ProbeAnnotation& a) {
  io::write_file(path, format_probe_annotation(a));
}

inline PhenotypeTable parse_phenotypes_text(std::string_view text, const std::string& source = "phenotypes") {
  const auto rows = io::split_csv(text);
  io::expect_header(rows, source, {"id"}, true);
  const auto& h = rows.front().cells;
  PhenotypeTable t;
  t.trait_names.assign(h.begin() + 1, h.end());
  std::unordered_map<std::string, std::size_t> seen;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    io::expect_width(row, h.size(), source);
    std::string id(row.cells[0]);
    if (!seen.emplace(id, row.line).second)
      throw InputError(io::context(source, row.line) + ": duplicate sample id '" + id + "'");
    for (std::size_t c = 1; c < row.cells.size(); ++c) {
      if (row.cells[c] == "NA") {
        t.values.push_back(kNaN);
        continue;
      }
      auto v = io::parse_double(row.cells[c]);
      if (!v || !std::isfinite(*v))
        throw InputError(io::context(source, row.line) + ": non-numeric value '" + std::string(row.cells[c]) +
                         "' for trait " + t.trait_names[c - 1]);
      t.values.push_back(*v);
    }
    t.sample_ids.push_back(std::move(id));
  }
  return t;
}

inline PhenotypeTable parse_phenotypes(const std::filesystem::path& path) {
  return parse_phenotypes_text(io::read_file(path), path.string());
}

inline std::string format_phenotypes(const PhenotypeTable& t) {
  std::string out = "id";
  for (const auto& n : t.trait_names) out += "," + n;
  out += '\n';
  for (std::size_t i = 0; i < t.sample_ids.size(); ++i) {
    out += t.sample_ids[i];
    for (std::size_t j = 0; j < t.trait_names.size(); ++j) out += "," + io::format_double(t.at(i, j));
    out += '\n';
  }
  return out;
}

inline void write_phenotypes(const std::filesystem::path& path, const PhenotypeTable& t) {
  io::write_file(path, format_phenotypes(t));
}

// ---- result files ---------------------------------------------------------

inline std::string format_similarity(const SimilarityMatrix& s) {
  std::string out = "id";
  for (const auto& c : s.col_ids) out += "," + c;
  out += '\n';
  for (std::size_t i = 0; i < s.n_rows(); ++i) {
    out += s.row_ids[i];
    for (std::size_t j = 0; j < s.n_cols(); ++j) out += "," + io::format_double(s.at(i, j));
    out += '\n';
  }
  return out;
}

inline SimilarityMatrix parse_similarity_text(std::string_view text, ScoreRange range,
                                              const std::string& source = "similarity") {
  auto e = parse_expression_text(text, "", source);
  SimilarityMatrix s(e.sample_ids(), e.probe_ids(), range);
  s.scores = e.values();
  return s;
}

inline std::string format_scan(const ScanResult& r) {
  std::string out = "locus,chr,pos_cM,lod\n";
  for (const auto& c : r.chromosomes)
    for (std::size_t l = 0; l < c.lod.size(); ++l)
      out += c.locus_ids[l] + "," + c.chromosome + "," + io::format_double(c.positions_cM[l]) + "," +
             io::format_double(c.lod[l]) + "\n";
  return out;
}

inline Json number_or_null(double v) { return is_missing(v) ? Json(nullptr) : Json(v); }

inline Json to_json(const RelabelDecision& d) {
  Json j;
  j["sample"] = d.sample_id;
  j["verdict"] = to_string(d.verdict);
  j["new_label"] = d.new_label ? Json(*d.new_label) : Json(nullptr);
  j["self_similarity"] = number_or_null(d.evidence.self_similarity);
  j["max_similarity"] = number_or_null(d.evidence.max_similarity);
  j["second_similarity"] = number_or_null(d.evidence.second_similarity);
  j["argmax"] = d.evidence.argmax_id.empty() ? Json(nullptr) : Json(d.evidence.argmax_id);
  j["possible_mixture"] = d.possible_mixture;
  return j;
}

inline std::optional<Verdict> verdict_from_string(std::string_view s) {
  for (Verdict v : {Verdict::Correct, Verdict::Fixable, Verdict::Unfixable, Verdict::Unverifiable, Verdict::Duplicate})
    if (s == to_string(v)) return v;
  return std::nullopt;
}

inline RelabelDecision decision_from_json(const Json& j, const std::string& source) {
  try {
    RelabelDecision d;
    d.sample_id = j.at("sample").get<std::string>();
    auto v = verdict_from_string(j.at("verdict").get<std::string>());
    if (!v) throw InputError(source + ": unknown verdict '" + j.at("verdict").get<std::string>() + "'");
    d.verdict = *v;
    if (j.contains("new_label") && !j["new_label"].is_null()) d.new_label = j["new_label"].get<std::string>();
    auto num = [&](const char* k) {
      return j.contains(k) && !j[k].is_null() ? j[k].get<double>() : kNaN;
    };
    d.evidence.self_similarity = num("self_similarity");
    d.evidence.max_similarity = num("max_similarity");
    d.evidence.second_similarity = num("second_similarity");
    if (j.contains("argmax") && !j["argmax"].is_null()) d.evidence.argmax_id = j["argmax"].get<std::string>();
    d.possible_mixture = j.value("possible_mixture", false);
    check_decision(d);
    return d;
  } catch (const Json::exception& e) {
    throw InputError(source + ": malformed decision entry: " + e.what());
  } catch (const std::logic_error& e) {
    throw InputError(source + ": " + e.what());
  }
}

inline Json decision_list_json(const std::vector<RelabelDecision>& ds) {
  Json j;
  std::map<std::string, std::size_t> counts;
  for (const auto& d : ds) ++counts[to_string(d.verdict)];
  Json c = Json::object();
  for (Verdict v : {Verdict::Correct, Verdict::Fixable, Verdict::Unfixable, Verdict::Unverifiable, Verdict::Duplicate})
    c[to_string(v)] = counts[to_string(v)];
  j["counts"] = c;
  j["decisions"] = Json::array();
  for (const auto& d : ds) j["decisions"].push_back(to_json(d));
  return j;
}

inline constexpr int kSchemaVersion = 1;

struct DecisionReport {
  Json settings = Json::object();
  std::vector<std::pair<std::string, std::vector<RelabelDecision>>> expression;  // per tissue, manifest order
  std::vector<RelabelDecision> dna;
};

inline Json to_json(const DecisionReport& r) {
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["settings"] = r.settings;
  j["expression_decisions"] = Json::object();
  for (const auto& [t, ds] : r.expression) j["expression_decisions"][t] = decision_list_json(ds);
  j["dna_decisions"] = decision_list_json(r.dna);
  return j;
}

inline DecisionReport parse_decision_report_text(const std::string& text, const std::string& source = "decisions") {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::exception& e) {
    throw InputError(source + ": invalid JSON: " + e.what());
  }
  if (!j.is_object() || j.value("schema_version", 0) != kSchemaVersion)
    throw InputError(source + ": missing or unsupported schema_version");
  DecisionReport r;
  if (j.contains("settings")) r.settings = j["settings"];
  auto list = [&](const Json& block) {
    std::vector<RelabelDecision> out;
    if (!block.contains("decisions") || !block["decisions"].is_array())
      throw InputError(source + ": decision block lacks a \"decisions\" array");
    for (const auto& e : block["decisions"]) out.push_back(decision_from_json(e, source));
    return out;
  };
  if (j.contains("expression_decisions"))
    for (const auto& [t, block] : j["expression_decisions"].items()) r.expression.emplace_back(t, list(block));
  if (j.contains("dna_decisions")) r.dna = list(j["dna_decisions"]);
  return r;
}

inline Json to_json(const PlateFinding& f) {
  Json j;
  j["kind"] = to_string(f.kind);
  if (f.kind == FindingKind::ShiftRun) j["offset"] = f.offset;
  j["length"] = f.length;
  if (f.kind == FindingKind::Cycle) j["closed"] = f.closed;
  j["moves"] = Json::array();
  for (const auto& m : f.moves) {
    Json mv;
    mv["sample"] = m.sample.empty() ? Json(nullptr) : Json(m.sample);
    mv["found_as"] = m.found_as;
    mv["from"] = m.from ? Json(m.from->name()) : Json(nullptr);
    mv["to"] = m.to.name();
    if (m.tentative) mv["tentative"] = true;
    j["moves"].push_back(mv);
  }
  j["wells"] = Json::array();
  for (const auto& w : f.wells) j["wells"].push_back(w.name());
  return j;
}

inline Json to_json(const ForensicsResult& r, FillOrder order) {
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["fill_order"] = order == FillOrder::ColumnMajor ? "column_major" : "row_major";
  std::map<std::string, std::size_t> counts;
  for (const auto& f : r.findings) ++counts[to_string(f.kind)];
  j["counts"] = Json::object();
  for (const auto& [k, n] : counts) j["counts"][k] = n;
  j["findings"] = Json::array();
  for (const auto& f : r.findings) j["findings"].push_back(to_json(f));
  j["anomalies"] = r.anomalies;
  return j;
}

inline std::string dump_json(const Json& j) { return j.dump(2) + "\n"; }

inline void write_json(const std::filesystem::path& path, const Json& j) { io::write_file(path, dump_json(j)); }

}  // namespace lineup
