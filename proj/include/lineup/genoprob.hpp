#pragma once

// Pseudomarker grids and multipoint F2 genotype probabilities via a
// forward-backward pass along each autosome.

#include <array>
#include <charconv>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "lineup/map_function.hpp"
#include "lineup/parallel.hpp"
#include "lineup/types.hpp"

namespace lineup {

struct GridLocus {
  std::string id;
  double pos_cM = 0.0;
  bool pseudomarker = false;
};

struct GridChromosome {
  std::string name;
  ChromosomeKind kind = ChromosomeKind::Autosome;
  std::vector<GridLocus> loci;
};

struct PositionGrid {
  std::vector<GridChromosome> chromosomes;

  const GridChromosome* find(std::string_view name) const {
    for (const auto& c : chromosomes)
      if (c.name == name) return &c;
    return nullptr;
  }
};

namespace detail {
inline std::string format_position(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}
}  // namespace detail

// Inserts ceil(L/step) - 1 evenly spaced pseudomarkers in every marker interval
// of length L > step. Markers keep their positions.
inline PositionGrid insert_pseudomarkers(const GeneticMap& map, double step_cM = 0.5) {
  if (!(step_cM > 0.0)) throw std::invalid_argument("pseudomarker step must be positive");
  PositionGrid grid;
  for (const auto& chr : map.chromosomes) {
    GridChromosome gc{chr.name, chr.kind, {}};
    for (std::size_t m = 0; m < chr.markers.size(); ++m) {
      const auto& mk = chr.markers[m];
      gc.loci.push_back({mk.id, mk.pos_cM, false});
      if (m + 1 == chr.markers.size()) break;
      const double start = mk.pos_cM;
      const double len = chr.markers[m + 1].pos_cM - start;
      if (len <= step_cM) continue;
      // The small slack keeps L = 1.0, step = 0.5 at exactly one insert.
      const auto k = static_cast<int>(std::ceil(len / step_cM - 1e-9)) - 1;
      for (int j = 1; j <= k; ++j) {
        const double pos = start + len * j / (k + 1);
        gc.loci.push_back({"c" + chr.name + ".loc" + detail::format_position(pos), pos, true});
      }
    }
    grid.chromosomes.push_back(std::move(gc));
  }
  return grid;
}

// Posterior genotype probabilities for one chromosome: samples x loci x {BB, BR, RR}.
struct ChromosomeProbs {
  std::string name;
  std::size_t n_samples = 0;
  std::size_t n_loci = 0;
  std::vector<double> probs;

  std::array<double, 3> at(std::size_t sample, std::size_t locus) const {
    const double* p = &probs[(sample * n_loci + locus) * 3];
    return {p[0], p[1], p[2]};
  }
  double at(std::size_t sample, std::size_t locus, std::size_t g) const {
    return probs[(sample * n_loci + locus) * 3 + g];
  }
};

struct GenoProbTensor {
  std::vector<std::string> sample_ids;
  std::vector<ChromosomeProbs> chromosomes;  // autosomes only, grid order

  const ChromosomeProbs* find(std::string_view name) const {
    for (const auto& c : chromosomes)
      if (c.name == name) return &c;
    return nullptr;
  }
  std::optional<std::size_t> sample_index(const std::string& id) const {
    for (std::size_t i = 0; i < sample_ids.size(); ++i)
      if (sample_ids[i] == id) return i;
    return std::nullopt;
  }
};

using Transition = std::array<std::array<double, 3>, 3>;

// Two-meiosis F2 transition matrix for recombination fraction r.
inline Transition f2_transition(double r) {
  const double s = 1.0 - r;
  Transition t{};
  t[0] = {s * s, 2.0 * r * s, r * r};
  t[1] = {r * s, s * s + r * r, r * s};
  t[2] = {r * r, 2.0 * r * s, s * s};
  return t;
}

inline std::array<double, 3> f2_emission(Genotype obs, double error_rate) {
  if (obs == Genotype::Missing) return {1.0, 1.0, 1.0};
  std::array<double, 3> e;
  e.fill(error_rate / 2.0);
  e[static_cast<std::size_t>(obs)] = 1.0 - error_rate;
  return e;
}

inline constexpr std::array<double, 3> kF2Prior{0.25, 0.5, 0.25};

// Forward-backward on one sample along one chromosome. `obs` holds one entry
// per locus (Missing at pseudomarkers); `trans` holds loci-1 matrices.
// Writes loci x 3 posteriors into out.
inline void forward_backward(const std::vector<Genotype>& obs, const std::vector<Transition>& trans,
                             double error_rate, double* out) {
  const std::size_t L = obs.size();
  std::vector<std::array<double, 3>> alpha(L), beta(L);

  auto normalize = [](std::array<double, 3>& v) {
    const double s = v[0] + v[1] + v[2];
    for (double& x : v) x /= s;
  };

  {
    const auto e = f2_emission(obs[0], error_rate);
    for (int g = 0; g < 3; ++g) alpha[0][g] = kF2Prior[g] * e[g];
    normalize(alpha[0]);
  }
  for (std::size_t l = 1; l < L; ++l) {
    const auto e = f2_emission(obs[l], error_rate);
    const auto& t = trans[l - 1];
    for (int g = 0; g < 3; ++g) {
      double s = 0.0;
      for (int h = 0; h < 3; ++h) s += alpha[l - 1][h] * t[h][g];
      alpha[l][g] = s * e[g];
    }
    normalize(alpha[l]);
  }

  beta[L - 1] = {1.0, 1.0, 1.0};
  for (std::size_t l = L - 1; l-- > 0;) {
    const auto e = f2_emission(obs[l + 1], error_rate);
    const auto& t = trans[l];
    for (int g = 0; g < 3; ++g) {
      double s = 0.0;
      for (int h = 0; h < 3; ++h) s += t[g][h] * e[h] * beta[l + 1][h];
      beta[l][g] = s;
    }
    normalize(beta[l]);
  }

  for (std::size_t l = 0; l < L; ++l) {
    std::array<double, 3> p;
    for (int g = 0; g < 3; ++g) p[g] = alpha[l][g] * beta[l][g];
    normalize(p);
    for (int g = 0; g < 3; ++g) out[l * 3 + g] = p[g];
  }
}

// Adjacent-locus transition matrices for a grid chromosome.
inline std::vector<Transition> grid_transitions(const GridChromosome& chr) {
  std::vector<Transition> trans;
  trans.reserve(chr.loci.empty() ? 0 : chr.loci.size() - 1);
  for (std::size_t l = 1; l < chr.loci.size(); ++l) {
    const double gap = chr.loci[l].pos_cM - chr.loci[l - 1].pos_cM;
    const double r = gap <= 0.0 ? 0.0 : cf_rec_fraction(gap / 100.0);
    trans.push_back(f2_transition(r));
  }
  return trans;
}

// Multipoint genotype probabilities at every grid locus of every autosome.
// X chromosomes are skipped.
inline GenoProbTensor calc_genoprob(const GenotypeMatrix& geno, const PositionGrid& grid,
                                    double error_rate = 0.002, std::size_t threads = 1) {
  if (!(error_rate >= 0.0 && error_rate < 1.0)) {
    throw std::invalid_argument("genotyping error rate must lie in [0, 1)");
  }
  GenoProbTensor out;
  out.sample_ids = geno.sample_ids();
  const std::size_t n = geno.n_samples();

  for (const auto& chr : grid.chromosomes) {
    if (chr.kind != ChromosomeKind::Autosome) continue;
    if (chr.loci.empty()) throw InputError("chromosome " + chr.name + " has no loci");

    const std::size_t L = chr.loci.size();
    std::vector<std::optional<std::size_t>> col(L);
    for (std::size_t l = 0; l < L; ++l)
      if (!chr.loci[l].pseudomarker) col[l] = geno.marker_index(chr.loci[l].id);
    const auto trans = grid_transitions(chr);

    ChromosomeProbs cp{chr.name, n, L, std::vector<double>(n * L * 3)};
    parallel_for(n, threads, [&](std::size_t s) {
      std::vector<Genotype> obs(L, Genotype::Missing);
      for (std::size_t l = 0; l < L; ++l)
        if (col[l]) obs[l] = geno.at(s, *col[l]);
      forward_backward(obs, trans, error_rate, &cp.probs[s * L * 3]);
    });
    out.chromosomes.push_back(std::move(cp));
  }
  return out;
}

}  // namespace lineup
