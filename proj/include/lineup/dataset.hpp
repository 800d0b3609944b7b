#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "lineup/types.hpp"

namespace lineup {

// A complete matched dataset. The *_source vectors record, for every row, the
// label it carried in the original input (empty vector = identity), so that
// corrections keyed by original label can be re-applied idempotently.
struct Dataset {
  GenotypeMatrix geno;
  GeneticMap map;
  std::vector<ExpressionSet> expression;
  ProbeAnnotation annotation;
  PlateLayout plate;
  std::optional<PhenotypeTable> phenotypes;
  std::vector<std::string> exclusions;

  std::vector<std::string> dna_source;
  std::vector<std::vector<std::string>> expr_source;

  // Recorded sex per sample label; survives relabeling of genotype rows.
  std::map<std::string, Sex> label_sex;

  const std::string& dna_source_of(std::size_t row) const {
    return dna_source.empty() ? geno.sample_ids()[row] : dna_source[row];
  }
  const std::string& expr_source_of(std::size_t tissue, std::size_t row) const {
    return (tissue >= expr_source.size() || expr_source[tissue].empty()) ? expression[tissue].sample_ids()[row]
                                                                        : expr_source[tissue][row];
  }
  const ExpressionSet* tissue(const std::string& name) const {
    for (const auto& e : expression)
      if (e.tissue() == name) return &e;
    return nullptr;
  }
  Sex sex_of(const std::string& label) const {
    auto it = label_sex.find(label);
    return it == label_sex.end() ? Sex::Unknown : it->second;
  }
};

// Fills label_sex from the genotype matrix for labels not yet recorded.
inline void record_label_sex(Dataset& ds) {
  for (std::size_t i = 0; i < ds.geno.n_samples(); ++i) ds.label_sex.emplace(ds.geno.sample_ids()[i], ds.geno.sex()[i]);
}

enum class Severity : std::uint8_t { Info, Warning, Error };

inline const char* to_string(Severity s) {
  switch (s) {
    case Severity::Info: return "info";
    case Severity::Warning: return "warning";
    case Severity::Error: return "error";
  }
  return "info";
}

struct ValidationEntry {
  Severity severity = Severity::Info;
  std::string kind;
  std::string subject;
  std::string message;
};

struct ValidationReport {
  std::vector<ValidationEntry> entries;

  bool empty() const { return entries.empty(); }
  std::size_t count(Severity s) const {
    std::size_t n = 0;
    for (const auto& e : entries) n += e.severity == s;
    return n;
  }
  std::size_t count(const std::string& kind) const {
    std::size_t n = 0;
    for (const auto& e : entries) n += e.kind == kind;
    return n;
  }
};

// Cross-reference checks between the parsed inputs. Never throws for data
// problems and never modifies the inputs.
inline ValidationReport validate_dataset(const Dataset& ds) {
  ValidationReport rep;
  auto add = [&](Severity sev, std::string kind, std::string subject, std::string msg) {
    rep.entries.push_back({sev, std::move(kind), std::move(subject), std::move(msg)});
  };

  std::set<std::string> mapped;
  for (const auto& chr : ds.map.chromosomes)
    for (const auto& m : chr.markers) mapped.insert(m.id);
  for (const auto& m : ds.geno.marker_ids())
    if (!mapped.count(m)) add(Severity::Error, "unmapped_marker", m, "genotype marker " + m + " is absent from the genetic map");

  for (std::size_t i = 0; i < ds.geno.n_samples(); ++i) {
    bool any = false;
    for (std::size_t j = 0; j < ds.geno.n_markers() && !any; ++j) any = ds.geno.at(i, j) != Genotype::Missing;
    if (!any && ds.geno.n_markers() > 0)
      add(Severity::Warning, "no_call_sample", ds.geno.sample_ids()[i],
          "sample " + ds.geno.sample_ids()[i] + " has no genotype calls");
  }

  std::set<std::string> tissues;
  for (const auto& e : ds.expression)
    if (!tissues.insert(e.tissue()).second)
      add(Severity::Error, "duplicate_tissue", e.tissue(), "tissue " + e.tissue() + " appears more than once");

  std::set<std::string> unannotated;
  std::map<std::string, std::vector<std::string>> expr_only;
  for (const auto& e : ds.expression) {
    for (const auto& p : e.probe_ids())
      if (!ds.annotation.find(p)) unannotated.insert(p);
    for (const auto& s : e.sample_ids())
      if (!ds.geno.sample_index(s)) expr_only[s].push_back(e.tissue());
  }
  for (const auto& p : unannotated)
    add(Severity::Warning, "unannotated_probe", p, "probe " + p + " has no annotation entry");
  for (const auto& [s, tissues] : expr_only) {
    std::string t;
    for (const auto& x : tissues) t += (t.empty() ? "" : ",") + x;
    add(Severity::Info, "expression_only_sample", s, "sample " + s + " has expression (" + t + ") but no genotypes");
  }

  for (const auto& p : ds.annotation.probes()) {
    if (p.located && !ds.map.find(p.chromosome))
      add(Severity::Warning, "probe_chromosome_not_in_map", p.probe_id,
          "probe " + p.probe_id + " is located on chromosome " + p.chromosome + " which the map lacks");
  }

  if (!ds.plate.entries.empty()) {
    std::set<std::string> placed;
    for (const auto& e : ds.plate.entries) {
      placed.insert(e.sample_id);
      if (!ds.geno.sample_index(e.sample_id))
        add(Severity::Warning, "plate_unknown_sample", e.sample_id,
            "plate " + e.plate_id + " well " + e.well.name() + " holds " + e.sample_id + " which was not genotyped");
    }
    for (const auto& s : ds.geno.sample_ids())
      if (!placed.count(s)) add(Severity::Warning, "unplaced_sample", s, "genotyped sample " + s + " has no plate position");
  }

  for (const auto& x : ds.exclusions)
    if (!ds.geno.sample_index(x)) add(Severity::Warning, "unknown_exclusion", x, "excluded sample " + x + " was not genotyped");

  return rep;
}

}  // namespace lineup
