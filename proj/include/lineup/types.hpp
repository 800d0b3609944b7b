#pragma once

// Core domain types shared by every stage of the mix-up pipeline.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace lineup {

// Raised for malformed or inconsistent input. The CLI maps it to exit code 1.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

inline bool is_missing(double v) { return std::isnan(v); }

// F2 genotype call. B = B6 allele, R = BTBR allele. On the X chromosome
// hemizygous males are recorded as the matching homozygote.
enum class Genotype : std::uint8_t { BB = 0, BR = 1, RR = 2, Missing = 3 };

inline constexpr std::size_t kNumGenotypes = 3;

inline const char* to_string(Genotype g) {
  switch (g) {
    case Genotype::BB: return "BB";
    case Genotype::BR: return "BR";
    case Genotype::RR: return "RR";
    case Genotype::Missing: return "-";
  }
  return "-";
}

inline std::optional<Genotype> genotype_from_token(std::string_view tok) {
  if (tok == "BB") return Genotype::BB;
  if (tok == "BR") return Genotype::BR;
  if (tok == "RR") return Genotype::RR;
  if (tok == "-") return Genotype::Missing;
  return std::nullopt;
}

enum class Sex : std::uint8_t { Female, Male, Unknown };

inline const char* to_string(Sex s) {
  switch (s) {
    case Sex::Female: return "female";
    case Sex::Male: return "male";
    case Sex::Unknown: return "unknown";
  }
  return "unknown";
}

inline std::optional<Sex> sex_from_token(std::string_view tok) {
  if (tok == "female" || tok == "F" || tok == "f") return Sex::Female;
  if (tok == "male" || tok == "M" || tok == "m") return Sex::Male;
  if (tok == "unknown" || tok == "NA" || tok == "-" || tok.empty()) return Sex::Unknown;
  return std::nullopt;
}

// Index of ids -> position; throws on duplicates.
inline std::unordered_map<std::string, std::size_t> index_ids(const std::vector<std::string>& ids,
                                                              const char* what) {
  std::unordered_map<std::string, std::size_t> idx;
  idx.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!idx.emplace(ids[i], i).second) {
      throw InputError(std::string("duplicate ") + what + " '" + ids[i] + "'");
    }
  }
  return idx;
}

// Samples x markers grid of genotype calls, with the recorded sex of each label.
class GenotypeMatrix {
 public:
  GenotypeMatrix() = default;

  GenotypeMatrix(std::vector<std::string> sample_ids, std::vector<std::string> marker_ids,
                 std::vector<Genotype> calls, std::vector<Sex> sex)
      : sample_ids_(std::move(sample_ids)),
        marker_ids_(std::move(marker_ids)),
        calls_(std::move(calls)),
        sex_(std::move(sex)) {
    if (calls_.size() != sample_ids_.size() * marker_ids_.size()) {
      throw InputError("genotype matrix: calls do not match samples x markers");
    }
    if (sex_.size() != sample_ids_.size()) {
      throw InputError("genotype matrix: sex vector does not match sample count");
    }
    sample_index_ = index_ids(sample_ids_, "sample id");
    marker_index_ = index_ids(marker_ids_, "marker id");
  }

  std::size_t n_samples() const { return sample_ids_.size(); }
  std::size_t n_markers() const { return marker_ids_.size(); }

  const std::vector<std::string>& sample_ids() const { return sample_ids_; }
  const std::vector<std::string>& marker_ids() const { return marker_ids_; }
  const std::vector<Sex>& sex() const { return sex_; }
  const std::vector<Genotype>& calls() const { return calls_; }

  Genotype at(std::size_t sample, std::size_t marker) const {
    return calls_[sample * marker_ids_.size() + marker];
  }

  std::optional<std::size_t> sample_index(const std::string& id) const {
    auto it = sample_index_.find(id);
    if (it == sample_index_.end()) return std::nullopt;
    return it->second;
  }
  std::optional<std::size_t> marker_index(const std::string& id) const {
    auto it = marker_index_.find(id);
    if (it == marker_index_.end()) return std::nullopt;
    return it->second;
  }

  bool operator==(const GenotypeMatrix& o) const {
    return sample_ids_ == o.sample_ids_ && marker_ids_ == o.marker_ids_ && calls_ == o.calls_ &&
           sex_ == o.sex_;
  }

 private:
  std::vector<std::string> sample_ids_;
  std::vector<std::string> marker_ids_;
  std::vector<Genotype> calls_;
  std::vector<Sex> sex_;
  std::unordered_map<std::string, std::size_t> sample_index_;
  std::unordered_map<std::string, std::size_t> marker_index_;
};

enum class ChromosomeKind : std::uint8_t { Autosome, X };

struct MapMarker {
  std::string id;
  double pos_cM = 0.0;
  bool operator==(const MapMarker&) const = default;
};

struct Chromosome {
  std::string name;
  ChromosomeKind kind = ChromosomeKind::Autosome;
  std::vector<MapMarker> markers;
  bool operator==(const Chromosome&) const = default;
};

inline ChromosomeKind chromosome_kind(std::string_view name) {
  return (name == "X" || name == "x" || name == "chrX") ? ChromosomeKind::X
                                                        : ChromosomeKind::Autosome;
}

// Chromosomes in input order; markers in nondecreasing cM order.
struct GeneticMap {
  std::vector<Chromosome> chromosomes;

  const Chromosome* find(std::string_view name) const {
    for (const auto& c : chromosomes)
      if (c.name == name) return &c;
    return nullptr;
  }

  std::size_t n_markers() const {
    std::size_t n = 0;
    for (const auto& c : chromosomes) n += c.markers.size();
    return n;
  }

  bool operator==(const GeneticMap&) const = default;
};

// Throws if any chromosome has decreasing positions or a marker appears twice.
inline void check_map(const GeneticMap& map) {
  std::unordered_map<std::string, std::string> seen;
  for (const auto& chr : map.chromosomes) {
    for (std::size_t i = 0; i < chr.markers.size(); ++i) {
      if (i > 0 && chr.markers[i].pos_cM < chr.markers[i - 1].pos_cM) {
        throw InputError("decreasing marker positions on chromosome " + chr.name + " at marker " +
                         chr.markers[i].id);
      }
      if (!std::isfinite(chr.markers[i].pos_cM)) {
        throw InputError("non-finite position for marker " + chr.markers[i].id);
      }
      auto [it, fresh] = seen.emplace(chr.markers[i].id, chr.name);
      if (!fresh) {
        throw InputError("marker " + chr.markers[i].id + " appears on chromosomes " + it->second +
                         " and " + chr.name);
      }
    }
  }
}

// One tissue: samples x probes. Missing entries hold NaN.
class ExpressionSet {
 public:
  ExpressionSet() = default;

  ExpressionSet(std::string tissue, std::vector<std::string> sample_ids,
                std::vector<std::string> probe_ids, std::vector<double> values)
      : tissue_(std::move(tissue)),
        sample_ids_(std::move(sample_ids)),
        probe_ids_(std::move(probe_ids)),
        values_(std::move(values)) {
    if (values_.size() != sample_ids_.size() * probe_ids_.size()) {
      throw InputError("expression set " + tissue_ + ": values do not match samples x probes");
    }
    for (double v : values_) {
      if (!is_missing(v) && !std::isfinite(v)) {
        throw InputError("expression set " + tissue_ + ": non-finite value");
      }
    }
    sample_index_ = index_ids(sample_ids_, "sample id");
    probe_index_ = index_ids(probe_ids_, "probe id");
  }

  const std::string& tissue() const { return tissue_; }
  std::size_t n_samples() const { return sample_ids_.size(); }
  std::size_t n_probes() const { return probe_ids_.size(); }
  const std::vector<std::string>& sample_ids() const { return sample_ids_; }
  const std::vector<std::string>& probe_ids() const { return probe_ids_; }
  const std::vector<double>& values() const { return values_; }

  double at(std::size_t sample, std::size_t probe) const {
    return values_[sample * probe_ids_.size() + probe];
  }
  bool present(std::size_t sample, std::size_t probe) const { return !is_missing(at(sample, probe)); }

  std::optional<std::size_t> sample_index(const std::string& id) const {
    auto it = sample_index_.find(id);
    if (it == sample_index_.end()) return std::nullopt;
    return it->second;
  }
  std::optional<std::size_t> probe_index(const std::string& id) const {
    auto it = probe_index_.find(id);
    if (it == probe_index_.end()) return std::nullopt;
    return it->second;
  }

  bool operator==(const ExpressionSet& o) const {
    if (tissue_ != o.tissue_ || sample_ids_ != o.sample_ids_ || probe_ids_ != o.probe_ids_)
      return false;
    for (std::size_t i = 0; i < values_.size(); ++i) {
      const double a = values_[i], b = o.values_[i];
      if (is_missing(a) != is_missing(b)) return false;
      if (!is_missing(a) && a != b) return false;
    }
    return true;
  }

 private:
  std::string tissue_;
  std::vector<std::string> sample_ids_;
  std::vector<std::string> probe_ids_;
  std::vector<double> values_;
  std::unordered_map<std::string, std::size_t> sample_index_;
  std::unordered_map<std::string, std::size_t> probe_index_;
};

struct ProbeLocation {
  std::string probe_id;
  std::string chromosome;  // empty when unlocated
  double pos_cM = 0.0;
  bool located = false;
  bool operator==(const ProbeLocation&) const = default;
};

// Probe annotations, in input order.
class ProbeAnnotation {
 public:
  ProbeAnnotation() = default;
  explicit ProbeAnnotation(std::vector<ProbeLocation> probes) : probes_(std::move(probes)) {
    for (std::size_t i = 0; i < probes_.size(); ++i) {
      if (!index_.emplace(probes_[i].probe_id, i).second) {
        throw InputError("probe annotation: duplicate probe '" + probes_[i].probe_id + "'");
      }
    }
  }

  const std::vector<ProbeLocation>& probes() const { return probes_; }

  const ProbeLocation* find(const std::string& id) const {
    auto it = index_.find(id);
    return it == index_.end() ? nullptr : &probes_[it->second];
  }

  bool operator==(const ProbeAnnotation& o) const { return probes_ == o.probes_; }

 private:
  std::vector<ProbeLocation> probes_;
  std::unordered_map<std::string, std::size_t> index_;
};

// 96-well plate coordinate: row A-H (0-7), column 01-12 (0-11).
struct Well {
  int row = 0;
  int col = 0;
  auto operator<=>(const Well&) const = default;

  std::string name() const {
    std::string s(1, static_cast<char>('A' + row));
    const int c = col + 1;
    s += static_cast<char>('0' + c / 10);
    s += static_cast<char>('0' + c % 10);
    return s;
  }
};

// Parses a well like "D07". Returns nullopt unless it matches [A-H](0[1-9]|1[0-2]).
inline std::optional<Well> parse_well(std::string_view s) {
  if (s.size() != 3) return std::nullopt;
  if (s[0] < 'A' || s[0] > 'H') return std::nullopt;
  if (s[1] < '0' || s[1] > '1' || s[2] < '0' || s[2] > '9') return std::nullopt;
  const int c = (s[1] - '0') * 10 + (s[2] - '0');
  if (c < 1 || c > 12) return std::nullopt;
  return Well{s[0] - 'A', c - 1};
}

struct PlatePosition {
  std::string sample_id;
  std::string plate_id;
  Well well;
  bool operator==(const PlatePosition&) const = default;
};

struct PlateLayout {
  std::vector<PlatePosition> entries;

  const PlatePosition* find(const std::string& sample_id) const {
    for (const auto& e : entries)
      if (e.sample_id == sample_id) return &e;
    return nullptr;
  }

  bool operator==(const PlateLayout&) const = default;
};

// Throws if (plate, well) pairs or sample ids repeat.
inline void check_plate_layout(const PlateLayout& layout) {
  std::map<std::pair<std::string, Well>, std::string> used;
  std::unordered_map<std::string, int> ids;
  for (const auto& e : layout.entries) {
    if (++ids[e.sample_id] > 1) throw InputError("plate layout: duplicate sample id '" + e.sample_id + "'");
    auto [it, fresh] = used.emplace(std::make_pair(e.plate_id, e.well), e.sample_id);
    if (!fresh) {
      throw InputError("plate layout: well " + e.plate_id + ":" + e.well.name() +
                       " assigned to both " + it->second + " and " + e.sample_id);
    }
  }
}

enum class ScoreRange : std::uint8_t { Correlation, Proportion };

// Row-labeled x column-labeled scores; NaN marks a missing cell.
struct SimilarityMatrix {
  std::vector<std::string> row_ids;
  std::vector<std::string> col_ids;
  std::vector<double> scores;
  ScoreRange range = ScoreRange::Correlation;

  SimilarityMatrix() = default;
  SimilarityMatrix(std::vector<std::string> rows, std::vector<std::string> cols, ScoreRange r)
      : row_ids(std::move(rows)), col_ids(std::move(cols)),
        scores(row_ids.size() * col_ids.size(), kNaN), range(r) {}

  std::size_t n_rows() const { return row_ids.size(); }
  std::size_t n_cols() const { return col_ids.size(); }
  double& at(std::size_t i, std::size_t j) { return scores[i * col_ids.size() + j]; }
  double at(std::size_t i, std::size_t j) const { return scores[i * col_ids.size() + j]; }

  std::optional<std::size_t> col_index(const std::string& id) const {
    auto it = std::find(col_ids.begin(), col_ids.end(), id);
    if (it == col_ids.end()) return std::nullopt;
    return static_cast<std::size_t>(it - col_ids.begin());
  }
  std::optional<std::size_t> row_index(const std::string& id) const {
    auto it = std::find(row_ids.begin(), row_ids.end(), id);
    if (it == row_ids.end()) return std::nullopt;
    return static_cast<std::size_t>(it - row_ids.begin());
  }

  // True when every present score lies in the declared range.
  bool in_range() const {
    const double lo = range == ScoreRange::Correlation ? -1.0 : 0.0;
    for (double v : scores)
      if (!is_missing(v) && (v < lo - 1e-12 || v > 1.0 + 1e-12)) return false;
    return true;
  }
};

// Clinical phenotypes keyed by sample label: samples x traits, NaN for missing.
struct PhenotypeTable {
  std::vector<std::string> sample_ids;
  std::vector<std::string> trait_names;
  std::vector<double> values;

  double at(std::size_t sample, std::size_t trait) const { return values[sample * trait_names.size() + trait]; }

  std::optional<std::size_t> trait_index(const std::string& name) const {
    for (std::size_t t = 0; t < trait_names.size(); ++t)
      if (trait_names[t] == name) return t;
    return std::nullopt;
  }
  std::optional<std::size_t> sample_index(const std::string& id) const {
    for (std::size_t i = 0; i < sample_ids.size(); ++i)
      if (sample_ids[i] == id) return i;
    return std::nullopt;
  }
  bool operator==(const PhenotypeTable& o) const {
    if (sample_ids != o.sample_ids || trait_names != o.trait_names) return false;
    for (std::size_t i = 0; i < values.size(); ++i)
      if (is_missing(values[i]) != is_missing(o.values[i]) || (!is_missing(values[i]) && values[i] != o.values[i]))
        return false;
    return true;
  }
};

enum class Verdict : std::uint8_t { Correct, Fixable, Unfixable, Unverifiable, Duplicate };

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::Correct: return "correct";
    case Verdict::Fixable: return "fixable";
    case Verdict::Unfixable: return "unfixable";
    case Verdict::Unverifiable: return "unverifiable";
    case Verdict::Duplicate: return "duplicate";
  }
  return "correct";
}

struct Evidence {
  double self_similarity = kNaN;
  double max_similarity = kNaN;
  double second_similarity = kNaN;
  std::string argmax_id;
};

struct RelabelDecision {
  std::string sample_id;
  Verdict verdict = Verdict::Correct;
  std::optional<std::string> new_label;  // fixable: the true label; duplicate: the retained sample
  Evidence evidence;
  bool possible_mixture = false;  // top two matches both strong and close together

  bool changes_label() const {
    return verdict == Verdict::Fixable || verdict == Verdict::Duplicate;
  }
};

// Checks the decision invariants; throws std::logic_error on violation.
inline void check_decision(const RelabelDecision& d) {
  if (d.verdict == Verdict::Fixable && (!d.new_label || *d.new_label == d.sample_id)) {
    throw std::logic_error("fixable decision for " + d.sample_id + " lacks a distinct new label");
  }
  if (d.verdict == Verdict::Duplicate && !d.new_label) {
    throw std::logic_error("duplicate decision for " + d.sample_id + " lacks the retained sample");
  }
}

}  // namespace lineup
