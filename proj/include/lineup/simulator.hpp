#pragma once

// Synthetic F2 intercross with eQTL-bearing expression in several tissues, and
// injection of labelled mix-ups with a record of what went where.

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "lineup/dataset.hpp"
#include "lineup/map_function.hpp"
#include "lineup/parallel.hpp"
#include "lineup/plate.hpp"
#include "lineup/rng.hpp"
#include "lineup/types.hpp"

namespace lineup {

enum class PerturbKind : std::uint8_t { Swap, Cycle, Duplicate, ShiftRun, Omit };

inline const char* to_string(PerturbKind k) {
  switch (k) {
    case PerturbKind::Swap: return "swap";
    case PerturbKind::Cycle: return "cycle";
    case PerturbKind::Duplicate: return "duplicate";
    case PerturbKind::ShiftRun: return "shift";
    case PerturbKind::Omit: return "omit";
  }
  return "swap";
}

// One injected error on one data grid ("dna" or a tissue name).
//   swap a b          rows a and b exchange contents
//   cycle a1 .. ak    the content of a_i moves to a_(i+1), a_k's to a_1
//   duplicate s d     row d is overwritten by a copy of row s
//   shift P W off n   on plate P the samples meant for the n wells from W
//                     (fill order) land off wells later; vacated wells get
//                     DNA from outside the study
//   omit a            row a is removed
struct Perturbation {
  std::string grid = "dna";
  PerturbKind kind = PerturbKind::Swap;
  std::vector<std::string> samples;
  std::string plate;
  Well start;
  int offset = 0;
  std::size_t length = 0;

  std::string describe() const {
    std::string s = grid + " " + to_string(kind);
    if (kind == PerturbKind::ShiftRun) {
      s += " " + plate + " " + start.name() + " " + (offset > 0 ? "+" : "") + std::to_string(offset) + " " +
           std::to_string(length);
    } else {
      for (const auto& x : samples) s += " " + x;
    }
    return s;
  }
};

// Parses the describe() form, e.g. "dna shift P1 B03 +1 6".
inline Perturbation parse_perturbation(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> tok;
  for (std::string t; in >> t;) tok.push_back(t);
  if (tok.size() < 2) throw InputError("perturbation '" + text + "': expected '<grid> <kind> ...'");
  Perturbation p;
  p.grid = tok[0];
  const std::string& k = tok[1];
  std::vector<std::string> args(tok.begin() + 2, tok.end());
  auto need = [&](bool ok) {
    if (!ok) throw InputError("perturbation '" + text + "': wrong number of arguments for " + k);
  };
  if (k == "swap") {
    p.kind = PerturbKind::Swap;
    need(args.size() == 2);
  } else if (k == "cycle") {
    p.kind = PerturbKind::Cycle;
    need(args.size() >= 2);
  } else if (k == "duplicate") {
    p.kind = PerturbKind::Duplicate;
    need(args.size() == 2);
  } else if (k == "omit") {
    p.kind = PerturbKind::Omit;
    need(args.size() == 1);
  } else if (k == "shift") {
    p.kind = PerturbKind::ShiftRun;
    need(args.size() == 4);
    p.plate = args[0];
    auto w = parse_well(args[1]);
    if (!w) throw InputError("perturbation '" + text + "': invalid well '" + args[1] + "'");
    p.start = *w;
    try {
      p.offset = std::stoi(args[2]);
      p.length = static_cast<std::size_t>(std::stoul(args[3]));
    } catch (const std::exception&) {
      throw InputError("perturbation '" + text + "': offset and length must be integers");
    }
    if (p.offset == 0 || p.length == 0) throw InputError("perturbation '" + text + "': offset and length must be nonzero");
    return p;
  } else {
    throw InputError("perturbation '" + text + "': unknown kind '" + k + "'");
  }
  p.samples = std::move(args);
  return p;
}

enum class Scenario : std::uint8_t { None, Headline, DnaMislabel };

struct SimConfig {
  std::uint64_t seed = 1;
  std::size_t n_samples = 500;
  std::size_t n_chromosomes = 5;
  double chr_length_cM = 100.0;
  std::size_t markers_per_chr = 50;
  bool include_x = true;
  std::size_t x_markers = 20;
  std::vector<std::string> tissues{"liver", "kidney", "adipose"};

  std::size_t eqtl_probes = 60;        // per tissue
  double eqtl_shared_marker = 0.1;     // share of eQTL probes sitting on another probe's marker
  double eqtl_additive = 2.0;
  double eqtl_dominance = 0.0;
  double eqtl_noise_sd = 0.25;
  std::size_t cross_probes = 100;      // shared by all tissues
  double cross_latent_sd = 1.0;
  double cross_noise_sd = 0.3;
  std::size_t noise_probes = 840;
  double noise_sd = 1.0;
  double sex_probe_shift = 2.0;
  std::size_t y_probes = 4;

  double genotype_error_rate = 0.002;  // autosomal call errors
  double missing_rate = 0.0;
  std::size_t dna_only_samples = 0;    // genotyped but never arrayed

  bool phenotype = true;               // polygenic "insulin"
  std::size_t trait_qtl = 3;
  double trait_qtl_effect = 0.5;

  std::size_t plate_size = 96;
  FillOrder fill_order = FillOrder::ColumnMajor;

  Scenario scenario = Scenario::None;
  double mislabel_fraction = 0.1;      // DnaMislabel scenario
  std::vector<Perturbation> perturbations;
};

inline std::string sample_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "Mouse%04zu", i + 1);
  return buf;
}

inline std::vector<std::string> sim_y_probe_ids(const SimConfig& cfg) {
  std::vector<std::string> ids;
  for (std::size_t k = 1; k <= cfg.y_probes; ++k) ids.push_back("Ychr_" + std::to_string(k));
  return ids;
}

// Evenly spaced markers on n autosomes plus an optional X.
inline GeneticMap make_sim_map(const SimConfig& cfg) {
  GeneticMap map;
  auto add = [&](const std::string& name, std::size_t n) {
    Chromosome c{name, chromosome_kind(name), {}};
    for (std::size_t m = 0; m < n; ++m) {
      const double pos = n == 1 ? 0.0 : cfg.chr_length_cM * static_cast<double>(m) / static_cast<double>(n - 1);
      char id[32];
      std::snprintf(id, sizeof id, "c%sm%03zu", name.c_str(), m + 1);
      c.markers.push_back({id, pos});
    }
    map.chromosomes.push_back(std::move(c));
  };
  for (std::size_t c = 1; c <= cfg.n_chromosomes; ++c) add(std::to_string(c), cfg.markers_per_chr);
  if (cfg.include_x && cfg.x_markers > 0) add("X", cfg.x_markers);
  return map;
}

namespace detail {

// Gamete along one chromosome: 0 = B, 1 = R, switching origin with the
// adjacent recombination fraction.
inline void gamete(Rng& rng, const Chromosome& chr, std::vector<int>& out) {
  out.resize(chr.markers.size());
  int h = rng.bernoulli(0.5) ? 1 : 0;
  for (std::size_t m = 0; m < chr.markers.size(); ++m) {
    if (m > 0) {
      const double d = (chr.markers[m].pos_cM - chr.markers[m - 1].pos_cM) / 100.0;
      if (d > 0.0 && rng.bernoulli(cf_rec_fraction(d))) h ^= 1;
    }
    out[m] = h;
  }
}

// True genotypes of one animal in marker order across the map.
inline std::vector<Genotype> simulate_animal(Rng& rng, const GeneticMap& map, Sex sex) {
  std::vector<Genotype> g;
  g.reserve(map.n_markers());
  std::vector<int> a, b;
  for (const auto& chr : map.chromosomes) {
    gamete(rng, chr, a);
    if (chr.kind == ChromosomeKind::X) {
      // Females carry the paternal R allele plus a maternal recombinant;
      // males are hemizygous for the maternal X and are coded as homozygotes.
      for (int h : a)
        g.push_back(sex == Sex::Female ? (h ? Genotype::RR : Genotype::BR) : (h ? Genotype::RR : Genotype::BB));
    } else {
      gamete(rng, chr, b);
      for (std::size_t m = 0; m < a.size(); ++m) g.push_back(static_cast<Genotype>(a[m] + b[m]));
    }
  }
  return g;
}

// Observed calls: autosomal errors to a uniformly chosen other genotype, then missingness.
inline void observe_calls(Rng& rng, const GeneticMap& map, std::vector<Genotype>& g, double error_rate,
                          double missing_rate) {
  std::size_t k = 0;
  for (const auto& chr : map.chromosomes) {
    for (std::size_t m = 0; m < chr.markers.size(); ++m, ++k) {
      if (chr.kind == ChromosomeKind::Autosome && error_rate > 0.0 && rng.bernoulli(error_rate)) {
        const auto shift = 1 + rng.below(2);
        g[k] = static_cast<Genotype>((static_cast<std::size_t>(g[k]) + shift) % 3);
      }
      if (missing_rate > 0.0 && rng.bernoulli(missing_rate)) g[k] = Genotype::Missing;
    }
  }
}

}  // namespace detail

// The animals before any mix-up: true and observed genotypes.
struct CrossTruth {
  std::vector<std::string> sample_ids;
  std::vector<Sex> sex;
  std::vector<Genotype> true_calls;  // samples x markers
  GenotypeMatrix observed;
};

inline CrossTruth simulate_cross(const SimConfig& cfg, const GeneticMap& map, std::size_t threads = 1) {
  CrossTruth ct;
  const std::size_t n = cfg.n_samples, m = map.n_markers();
  std::vector<std::string> markers;
  for (const auto& c : map.chromosomes)
    for (const auto& mk : c.markers) markers.push_back(mk.id);
  ct.sample_ids.resize(n);
  ct.sex.resize(n);
  ct.true_calls.resize(n * m);
  std::vector<Genotype> obs(n * m);
  parallel_for(n, threads, [&](std::size_t i) {
    Rng rng = Rng::stream(cfg.seed, "animal", i);
    ct.sample_ids[i] = sample_name(i);
    ct.sex[i] = i % 2 == 0 ? Sex::Female : Sex::Male;
    auto g = detail::simulate_animal(rng, map, ct.sex[i]);
    std::copy(g.begin(), g.end(), ct.true_calls.begin() + static_cast<std::ptrdiff_t>(i * m));
    detail::observe_calls(rng, map, g, cfg.genotype_error_rate, cfg.missing_rate);
    std::copy(g.begin(), g.end(), obs.begin() + static_cast<std::ptrdiff_t>(i * m));
  });
  ct.observed = GenotypeMatrix(ct.sample_ids, std::move(markers), std::move(obs), ct.sex);
  return ct;
}

struct SimulatedExpression {
  std::vector<ExpressionSet> tissues;
  ProbeAnnotation annotation;
};

// eQTL probes are placed on markers so the nearest grid locus is the causal one.
inline SimulatedExpression simulate_expression(const SimConfig& cfg, const GeneticMap& map, const CrossTruth& ct,
                                               std::size_t threads = 1) {
  const std::size_t n_expr = cfg.n_samples - std::min(cfg.dna_only_samples, cfg.n_samples);
  const std::size_t m = map.n_markers();

  struct MarkerRef {
    std::size_t chr;
    std::size_t index;   // within chromosome
    std::size_t global;  // column in the genotype grid
  };
  std::vector<MarkerRef> autosomal;
  std::optional<MarkerRef> xist_marker;
  {
    std::size_t g = 0;
    for (std::size_t c = 0; c < map.chromosomes.size(); ++c)
      for (std::size_t k = 0; k < map.chromosomes[c].markers.size(); ++k, ++g) {
        if (map.chromosomes[c].kind == ChromosomeKind::Autosome)
          autosomal.push_back({c, k, g});
        else if (!xist_marker && k >= map.chromosomes[c].markers.size() / 2)
          xist_marker = MarkerRef{c, k, g};
      }
  }
  if (autosomal.empty()) throw InputError("simulation needs at least one autosome");

  std::vector<ProbeLocation> annot;
  std::vector<std::string> cross_ids, noise_ids;
  {
    Rng rng = Rng::stream(cfg.seed, "cross-layout");
    for (std::size_t k = 0; k < cfg.cross_probes; ++k) {
      const auto& mk = autosomal[rng.below(autosomal.size())];
      cross_ids.push_back("xt_" + std::to_string(k + 1));
      annot.push_back({cross_ids.back(), map.chromosomes[mk.chr].name, map.chromosomes[mk.chr].markers[mk.index].pos_cM, true});
    }
    for (std::size_t k = 0; k < cfg.noise_probes; ++k) {
      const auto& mk = autosomal[rng.below(autosomal.size())];
      noise_ids.push_back("noise_" + std::to_string(k + 1));
      annot.push_back({noise_ids.back(), map.chromosomes[mk.chr].name, map.chromosomes[mk.chr].markers[mk.index].pos_cM, true});
    }
    const Chromosome* x = xist_marker ? &map.chromosomes[xist_marker->chr] : nullptr;
    annot.push_back({"Xist", x ? x->name : "", x ? x->markers[xist_marker->index].pos_cM : 0.0, x != nullptr});
    for (const auto& y : sim_y_probe_ids(cfg)) annot.push_back({y, "", 0.0, false});
  }

  // Per-sample latent values shared across tissues.
  std::vector<double> latent(n_expr * cfg.cross_probes);
  for (std::size_t i = 0; i < n_expr; ++i) {
    Rng rng = Rng::stream(cfg.seed, "latent", i);
    for (std::size_t k = 0; k < cfg.cross_probes; ++k) latent[i * cfg.cross_probes + k] = cfg.cross_latent_sd * rng.normal();
  }

  SimulatedExpression out;
  for (std::size_t t = 0; t < cfg.tissues.size(); ++t) {
    const std::string& tissue = cfg.tissues[t];
    std::vector<MarkerRef> eqtl_at;
    {
      Rng rng = Rng::stream(cfg.seed, "eqtl-layout:" + tissue);
      for (std::size_t k = 0; k < cfg.eqtl_probes; ++k) {
        if (k > 0 && rng.bernoulli(cfg.eqtl_shared_marker))
          eqtl_at.push_back(eqtl_at[rng.below(eqtl_at.size())]);
        else
          eqtl_at.push_back(autosomal[rng.below(autosomal.size())]);
      }
    }
    std::vector<std::string> probes;
    for (std::size_t k = 0; k < cfg.eqtl_probes; ++k) {
      probes.push_back(tissue + "_eqtl_" + std::to_string(k + 1));
      const auto& mk = eqtl_at[k];
      annot.push_back({probes.back(), map.chromosomes[mk.chr].name, map.chromosomes[mk.chr].markers[mk.index].pos_cM, true});
    }
    probes.insert(probes.end(), cross_ids.begin(), cross_ids.end());
    probes.insert(probes.end(), noise_ids.begin(), noise_ids.end());
    probes.push_back("Xist");
    for (const auto& y : sim_y_probe_ids(cfg)) probes.push_back(y);

    const std::size_t P = probes.size();
    std::vector<double> values(n_expr * P);
    parallel_for(n_expr, threads, [&](std::size_t i) {
      Rng rng = Rng::stream(cfg.seed, "expr:" + tissue, i);
      double* row = &values[i * P];
      std::size_t c = 0;
      for (std::size_t k = 0; k < cfg.eqtl_probes; ++k, ++c) {
        const Genotype g = ct.true_calls[i * m + eqtl_at[k].global];
        const double code = static_cast<double>(static_cast<int>(g)) - 1.0;
        row[c] = cfg.eqtl_additive * code + (g == Genotype::BR ? cfg.eqtl_dominance : 0.0) + cfg.eqtl_noise_sd * rng.normal();
      }
      for (std::size_t k = 0; k < cfg.cross_probes; ++k, ++c)
        row[c] = latent[i * cfg.cross_probes + k] + cfg.cross_noise_sd * rng.normal();
      for (std::size_t k = 0; k < cfg.noise_probes; ++k, ++c) row[c] = cfg.noise_sd * rng.normal();
      const double female = ct.sex[i] == Sex::Female ? 1.0 : -1.0;
      row[c++] = cfg.sex_probe_shift * female + 0.3 * rng.normal();
      for (std::size_t k = 0; k < cfg.y_probes; ++k, ++c) row[c] = -cfg.sex_probe_shift * female + 0.3 * rng.normal();
    });
    std::vector<std::string> ids(ct.sample_ids.begin(), ct.sample_ids.begin() + static_cast<std::ptrdiff_t>(n_expr));
    out.tissues.emplace_back(tissue, std::move(ids), std::move(probes), std::move(values));
  }
  out.annotation = ProbeAnnotation(std::move(annot));
  return out;
}

// Skewed polygenic trait with a sex effect, keyed by sample label.
inline PhenotypeTable simulate_phenotype(const SimConfig& cfg, const GeneticMap& map, const CrossTruth& ct) {
  std::vector<std::size_t> autosomal;
  {
    std::size_t g = 0;
    for (const auto& c : map.chromosomes)
      for (std::size_t k = 0; k < c.markers.size(); ++k, ++g)
        if (c.kind == ChromosomeKind::Autosome) autosomal.push_back(g);
  }
  Rng layout = Rng::stream(cfg.seed, "trait-layout");
  std::vector<std::size_t> qtl;
  for (std::size_t q = 0; q < cfg.trait_qtl && !autosomal.empty(); ++q) qtl.push_back(autosomal[layout.below(autosomal.size())]);
  const std::size_t m = map.n_markers();
  PhenotypeTable t;
  t.trait_names = {"insulin"};
  t.sample_ids = ct.sample_ids;
  t.values.resize(ct.sample_ids.size());
  for (std::size_t i = 0; i < ct.sample_ids.size(); ++i) {
    Rng rng = Rng::stream(cfg.seed, "trait", i);
    double y = ct.sex[i] == Sex::Male ? 0.5 : 0.0;
    for (std::size_t q = 0; q < qtl.size(); ++q)
      y += cfg.trait_qtl_effect * (static_cast<double>(static_cast<int>(ct.true_calls[i * m + qtl[q]])) - 1.0);
    y += rng.normal();
    t.values[i] = std::exp(0.5 * y);
  }
  return t;
}

inline PlateLayout make_plate_layout(const std::vector<std::string>& ids, std::size_t plate_size = 96,
                                     FillOrder order = FillOrder::ColumnMajor) {
  if (plate_size == 0 || plate_size > 96) throw InputError("plate size must be between 1 and 96");
  PlateLayout layout;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const int k = static_cast<int>(i % plate_size);
    const Well w = order == FillOrder::ColumnMajor ? Well{k % 8, k / 8} : Well{k / 12, k % 12};
    layout.entries.push_back({ids[i], "P" + std::to_string(i / plate_size + 1), w});
  }
  return layout;
}

// What each row of one grid holds after injection: label -> true sample, or
// an empty string for material from outside the study.
struct GridTruth {
  std::string grid;
  std::map<std::string, std::string> content;
  std::vector<std::string> omitted;

  bool clean(const std::string& label) const {
    auto it = content.find(label);
    return it != content.end() && it->second == label;
  }
};

struct GroundTruth {
  std::vector<Perturbation> perturbations;
  GridTruth dna;
  std::vector<GridTruth> tissues;  // dataset tissue order

  const GridTruth* grid(const std::string& name) const {
    if (name == "dna") return &dna;
    for (const auto& t : tissues)
      if (t.grid == name) return &t;
    return nullptr;
  }
};

namespace detail {

inline void touch(std::set<std::string>& touched, const std::string& label, const std::map<std::string, std::string>& content,
                  const Perturbation& p) {
  if (!content.count(label))
    throw InputError("perturbation '" + p.describe() + "': no row '" + label + "' in grid " + p.grid);
  if (!touched.insert(label).second)
    throw InputError("perturbation '" + p.describe() + "': conflicting perturbations on row " + label + " of grid " + p.grid);
}

inline void apply_to_content(const Perturbation& p, std::map<std::string, std::string>& content,
                             std::vector<std::string>& omitted, std::set<std::string>& touched,
                             const PlateLayout& plate, FillOrder order, std::size_t& external_count) {
  switch (p.kind) {
    case PerturbKind::Swap: {
      for (const auto& s : p.samples) touch(touched, s, content, p);
      std::swap(content[p.samples[0]], content[p.samples[1]]);
      break;
    }
    case PerturbKind::Cycle: {
      for (const auto& s : p.samples) touch(touched, s, content, p);
      std::vector<std::string> old;
      for (const auto& s : p.samples) old.push_back(content[s]);
      for (std::size_t i = 0; i < p.samples.size(); ++i) content[p.samples[(i + 1) % p.samples.size()]] = old[i];
      break;
    }
    case PerturbKind::Duplicate: {
      for (const auto& s : p.samples) touch(touched, s, content, p);
      content[p.samples[1]] = content[p.samples[0]];
      break;
    }
    case PerturbKind::Omit: {
      touch(touched, p.samples[0], content, p);
      content.erase(p.samples[0]);
      omitted.push_back(p.samples[0]);
      break;
    }
    case PerturbKind::ShiftRun: {
      if (p.grid != "dna") throw InputError("perturbation '" + p.describe() + "': shifts apply to the DNA grid only");
      std::vector<PlatePosition> wells;
      for (const auto& pw : wells_in_order(plate, order))
        if (pw.plate_id == p.plate) wells = pw.wells;
      auto at = std::find_if(wells.begin(), wells.end(), [&](const auto& e) { return e.well == p.start; });
      if (at == wells.end())
        throw InputError("perturbation '" + p.describe() + "': no sample in well " + p.plate + ":" + p.start.name());
      const auto first = static_cast<long>(at - wells.begin());
      const long L = static_cast<long>(p.length);
      const long lo = std::min(first, first + p.offset);
      const long hi = std::max(first + L - 1, first + L - 1 + p.offset);
      if (lo < 0 || hi >= static_cast<long>(wells.size()))
        throw InputError("perturbation '" + p.describe() + "': shift runs off the occupied wells of plate " + p.plate);
      for (long k = lo; k <= hi; ++k) {
        if (well_order(wells[static_cast<std::size_t>(k)].well, order) - well_order(wells[static_cast<std::size_t>(lo)].well, order) != k - lo)
          throw InputError("perturbation '" + p.describe() + "': wells in the shift are not contiguous");
        touch(touched, wells[static_cast<std::size_t>(k)].sample_id, content, p);
      }
      std::map<long, std::string> old;
      for (long k = lo; k <= hi; ++k) old[k] = content[wells[static_cast<std::size_t>(k)].sample_id];
      std::set<long> receivers;
      for (long k = first; k < first + L; ++k) {
        content[wells[static_cast<std::size_t>(k + p.offset)].sample_id] = old[k];
        receivers.insert(k + p.offset);
      }
      for (long k = first; k < first + L; ++k)
        if (!receivers.count(k)) {
          content[wells[static_cast<std::size_t>(k)].sample_id] = "";
          ++external_count;
        }
      break;
    }
  }
}

}  // namespace detail

// Applies perturbations in order. Row labels, recorded sex and phenotypes stay
// with their positions; only row contents move. Vacated DNA wells receive
// freshly simulated animals that are not part of the study.
inline std::pair<Dataset, GroundTruth> inject_mixups(const Dataset& clean, const std::vector<Perturbation>& perturbations,
                                                     std::uint64_t seed, FillOrder order = FillOrder::ColumnMajor) {
  GroundTruth truth;
  truth.perturbations = perturbations;
  auto identity = [](const std::vector<std::string>& ids, const std::string& grid) {
    GridTruth g{grid, {}, {}};
    for (const auto& s : ids) g.content.emplace(s, s);
    return g;
  };
  truth.dna = identity(clean.geno.sample_ids(), "dna");
  for (const auto& e : clean.expression) truth.tissues.push_back(identity(e.sample_ids(), e.tissue()));

  std::map<std::string, std::set<std::string>> touched;
  std::size_t external = 0;
  for (const auto& p : perturbations) {
    GridTruth* g = p.grid == "dna" ? &truth.dna : nullptr;
    for (auto& t : truth.tissues)
      if (t.grid == p.grid) g = &t;
    if (!g) throw InputError("perturbation '" + p.describe() + "': unknown grid '" + p.grid + "'");
    detail::apply_to_content(p, g->content, g->omitted, touched[p.grid], clean.plate, order, external);
  }

  Dataset out = clean;
  record_label_sex(out);

  {
    const auto& geno = clean.geno;
    const std::size_t M = geno.n_markers();
    std::vector<std::string> ids;
    std::vector<Sex> sex;
    std::vector<Genotype> calls;
    std::size_t ext = 0;
    for (std::size_t i = 0; i < geno.n_samples(); ++i) {
      const std::string& label = geno.sample_ids()[i];
      auto it = truth.dna.content.find(label);
      if (it == truth.dna.content.end()) continue;
      ids.push_back(label);
      sex.push_back(geno.sex()[i]);
      if (it->second.empty()) {
        Rng rng = Rng::stream(seed, "external", ext++);
        const Sex s = rng.bernoulli(0.5) ? Sex::Female : Sex::Male;
        auto g = detail::simulate_animal(rng, clean.map, s);
        std::map<std::string, Genotype> by_marker;
        std::size_t k = 0;
        for (const auto& c : clean.map.chromosomes)
          for (const auto& mk : c.markers) by_marker[mk.id] = g[k++];
        for (const auto& mid : geno.marker_ids()) {
          auto bm = by_marker.find(mid);
          calls.push_back(bm == by_marker.end() ? Genotype::Missing : bm->second);
        }
      } else {
        const std::size_t src = *geno.sample_index(it->second);
        for (std::size_t j = 0; j < M; ++j) calls.push_back(geno.at(src, j));
      }
    }
    out.geno = GenotypeMatrix(std::move(ids), geno.marker_ids(), std::move(calls), std::move(sex));
  }

  for (std::size_t t = 0; t < clean.expression.size(); ++t) {
    const auto& e = clean.expression[t];
    const auto& content = truth.tissues[t].content;
    std::vector<std::string> ids;
    std::vector<double> vals;
    for (std::size_t i = 0; i < e.n_samples(); ++i) {
      auto it = content.find(e.sample_ids()[i]);
      if (it == content.end()) continue;
      ids.push_back(e.sample_ids()[i]);
      const std::size_t src = *e.sample_index(it->second);
      for (std::size_t p = 0; p < e.n_probes(); ++p) vals.push_back(e.at(src, p));
    }
    out.expression[t] = ExpressionSet(e.tissue(), std::move(ids), e.probe_ids(), std::move(vals));
  }
  out.dna_source.clear();
  out.expr_source.clear();
  return {std::move(out), std::move(truth)};
}

// Moves every row of a permuted grid back under its true label. Only
// meaningful for swaps and cycles, where no content is lost.
inline Dataset undo_permutation(const Dataset& perturbed, const GroundTruth& truth) {
  Dataset out = perturbed;
  {
    const auto& g = perturbed.geno;
    std::map<std::string, std::size_t> row_of_content;
    for (std::size_t i = 0; i < g.n_samples(); ++i) row_of_content[truth.dna.content.at(g.sample_ids()[i])] = i;
    std::vector<Genotype> calls;
    for (std::size_t i = 0; i < g.n_samples(); ++i) {
      auto it = row_of_content.find(g.sample_ids()[i]);
      const std::size_t src = it == row_of_content.end() ? i : it->second;
      for (std::size_t j = 0; j < g.n_markers(); ++j) calls.push_back(g.at(src, j));
    }
    out.geno = GenotypeMatrix(g.sample_ids(), g.marker_ids(), std::move(calls), g.sex());
  }
  for (std::size_t t = 0; t < perturbed.expression.size(); ++t) {
    const auto& e = perturbed.expression[t];
    const auto& content = truth.tissues[t].content;
    std::map<std::string, std::size_t> row_of_content;
    for (std::size_t i = 0; i < e.n_samples(); ++i) row_of_content[content.at(e.sample_ids()[i])] = i;
    std::vector<double> vals;
    for (std::size_t i = 0; i < e.n_samples(); ++i) {
      auto it = row_of_content.find(e.sample_ids()[i]);
      const std::size_t src = it == row_of_content.end() ? i : it->second;
      for (std::size_t p = 0; p < e.n_probes(); ++p) vals.push_back(e.at(src, p));
    }
    out.expression[t] = ExpressionSet(e.tissue(), e.sample_ids(), e.probe_ids(), std::move(vals));
  }
  return out;
}

// Random perturbations for the built-in scenarios. Every sample takes part in
// at most one perturbation.
inline std::vector<Perturbation> plan_scenario(const SimConfig& cfg, const Dataset& clean) {
  std::vector<Perturbation> out;
  if (cfg.scenario == Scenario::None) return out;
  Rng rng = Rng::stream(cfg.seed, "plan");

  // Samples arrayed in every tissue are eligible.
  std::vector<std::string> pool;
  for (const auto& s : clean.geno.sample_ids()) {
    bool all = true;
    for (const auto& e : clean.expression) all = all && e.sample_index(s).has_value();
    if (all) pool.push_back(s);
  }
  std::set<std::string> used;

  if (cfg.scenario == Scenario::Headline) {
    // Shift first so its contiguous block is still free.
    const auto plates = wells_in_order(clean.plate, cfg.fill_order);
    const std::size_t run = 6;
    std::vector<std::size_t> candidates;
    for (std::size_t p = 0; p < plates.size(); ++p)
      if (plates[p].wells.size() >= run + 1) candidates.push_back(p);
    if (!candidates.empty()) {
      const auto& pw = plates[candidates[rng.below(candidates.size())]];
      const std::size_t first = rng.below(pw.wells.size() - run);
      for (std::size_t k = first; k <= first + run; ++k) used.insert(pw.wells[k].sample_id);
      Perturbation p;
      p.grid = "dna";
      p.kind = PerturbKind::ShiftRun;
      p.plate = pw.plate_id;
      p.start = pw.wells[first].well;
      p.offset = 1;
      p.length = run;
      out.push_back(p);
    }
  }

  std::vector<std::string> free;
  for (const auto& s : pool)
    if (!used.count(s)) free.push_back(s);
  rng.shuffle(free);
  std::size_t next = 0;
  auto take = [&](std::size_t k) {
    if (next + k > free.size()) throw InputError("too few samples for the requested perturbations");
    std::vector<std::string> v(free.begin() + static_cast<std::ptrdiff_t>(next),
                               free.begin() + static_cast<std::ptrdiff_t>(next + k));
    next += k;
    return v;
  };

  if (cfg.scenario == Scenario::Headline) {
    for (int i = 0; i < 10; ++i) out.push_back({"dna", PerturbKind::Swap, take(2), {}, {}, 0, 0});
    out.push_back({"dna", PerturbKind::Cycle, take(3), {}, {}, 0, 0});
    for (int i = 0; i < 2; ++i) out.push_back({"dna", PerturbKind::Duplicate, take(2), {}, {}, 0, 0});
    for (const auto& e : clean.expression)
      for (int i = 0; i < 2; ++i) out.push_back({e.tissue(), PerturbKind::Swap, take(2), {}, {}, 0, 0});
    if (!clean.expression.empty()) {
      const auto& e = clean.expression[rng.below(clean.expression.size())];
      out.push_back({e.tissue(), PerturbKind::Duplicate, take(2), {}, {}, 0, 0});
    }
  } else if (cfg.scenario == Scenario::DnaMislabel) {
    const auto n_swaps = static_cast<std::size_t>(
        std::llround(cfg.mislabel_fraction * static_cast<double>(clean.geno.n_samples()) / 2.0));
    for (std::size_t i = 0; i < n_swaps; ++i) out.push_back({"dna", PerturbKind::Swap, take(2), {}, {}, 0, 0});
  }
  return out;
}

struct Simulation {
  Dataset clean;
  Dataset dataset;  // after injection
  GroundTruth truth;
};

// Full synthetic dataset: cross, expression, trait, plates, then the
// scenario's perturbations followed by any listed explicitly.
inline Simulation simulate_dataset(const SimConfig& cfg, std::size_t threads = 1) {
  if (cfg.n_samples == 0) throw InputError("simulation needs at least one sample");
  if (cfg.tissues.empty()) throw InputError("simulation needs at least one tissue");
  Simulation sim;
  Dataset& ds = sim.clean;
  ds.map = make_sim_map(cfg);
  const CrossTruth ct = simulate_cross(cfg, ds.map, threads);
  auto expr = simulate_expression(cfg, ds.map, ct, threads);
  ds.geno = ct.observed;
  ds.expression = std::move(expr.tissues);
  ds.annotation = std::move(expr.annotation);
  ds.plate = make_plate_layout(ct.sample_ids, cfg.plate_size, cfg.fill_order);
  if (cfg.phenotype) ds.phenotypes = simulate_phenotype(cfg, ds.map, ct);
  record_label_sex(ds);

  auto perturbations = plan_scenario(cfg, ds);
  perturbations.insert(perturbations.end(), cfg.perturbations.begin(), cfg.perturbations.end());
  auto [perturbed, truth] = inject_mixups(ds, perturbations, cfg.seed, cfg.fill_order);
  sim.dataset = std::move(perturbed);
  sim.truth = std::move(truth);
  return sim;
}

struct RecoveryMetrics {
  std::size_t mislabels = 0;           // rows holding another study sample's material
  std::size_t recovered = 0;           // ... relabelled to that sample
  std::size_t duplicates = 0;          // rows holding a copy of a sample that also has its own row
  std::size_t duplicates_detected = 0;
  std::size_t dna_duplicates = 0;
  std::size_t dna_duplicates_detected = 0;
  std::size_t foreign = 0;             // rows holding material from outside the study
  std::size_t foreign_unfixable = 0;
  std::size_t clean_rows = 0;
  std::size_t false_relabels = 0;      // clean rows that were given a new label
  std::vector<std::string> misses;     // "<grid>:<label>" for mislabels not recovered
  std::vector<std::string> false_relabel_rows;

  double recovery_rate() const {
    return mislabels == 0 ? 1.0 : static_cast<double>(recovered) / static_cast<double>(mislabels);
  }
  RecoveryMetrics& operator+=(const RecoveryMetrics& o) {
    mislabels += o.mislabels;
    recovered += o.recovered;
    duplicates += o.duplicates;
    duplicates_detected += o.duplicates_detected;
    dna_duplicates += o.dna_duplicates;
    dna_duplicates_detected += o.dna_duplicates_detected;
    foreign += o.foreign;
    foreign_unfixable += o.foreign_unfixable;
    clean_rows += o.clean_rows;
    false_relabels += o.false_relabels;
    misses.insert(misses.end(), o.misses.begin(), o.misses.end());
    false_relabel_rows.insert(false_relabel_rows.end(), o.false_relabel_rows.begin(), o.false_relabel_rows.end());
    return *this;
  }
};

namespace detail {

inline void score_grid(const GridTruth& g, const std::vector<RelabelDecision>& decisions, RecoveryMetrics& m) {
  std::map<std::string, const RelabelDecision*> by_id;
  for (const auto& d : decisions) by_id[d.sample_id] = &d;
  std::map<std::string, std::size_t> holders;
  for (const auto& [label, content] : g.content)
    if (!content.empty()) ++holders[content];
  for (const auto& [label, content] : g.content) {
    auto it = by_id.find(label);
    const RelabelDecision* d = it == by_id.end() ? nullptr : it->second;
    if (content == label) {
      ++m.clean_rows;
      if (d && d->changes_label()) {
        ++m.false_relabels;
        m.false_relabel_rows.push_back(g.grid + ":" + label);
      }
    } else if (content.empty()) {
      ++m.foreign;
      if (d && d->verdict == Verdict::Unfixable) ++m.foreign_unfixable;
    } else if (g.clean(content)) {
      ++m.duplicates;
      if (g.grid == "dna") ++m.dna_duplicates;
      const bool hit = d && d->verdict == Verdict::Duplicate && d->new_label == content;
      m.duplicates_detected += hit;
      if (g.grid == "dna") m.dna_duplicates_detected += hit;
    } else {
      ++m.mislabels;
      if (d && d->verdict == Verdict::Fixable && d->new_label == content)
        ++m.recovered;
      else
        m.misses.push_back(g.grid + ":" + label);
    }
  }
}

}  // namespace detail

// Compares decisions with the injected truth. Expression decisions are matched
// to truth tissues by name.
inline RecoveryMetrics score_recovery(const std::vector<std::pair<std::string, std::vector<RelabelDecision>>>& expr,
                                      const std::vector<RelabelDecision>& dna, const GroundTruth& truth) {
  RecoveryMetrics m;
  for (const auto& [tissue, ds] : expr)
    if (const GridTruth* g = truth.grid(tissue)) detail::score_grid(*g, ds, m);
  detail::score_grid(truth.dna, dna, m);
  return m;
}

}  // namespace lineup
