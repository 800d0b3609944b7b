#pragma once

#include <algorithm>
#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lineup/types.hpp"

namespace lineup {

// k-nearest-neighbor vote over Euclidean distance in 1-3 expression
// dimensions. Distance ties break on the lexicographically smaller sample id.
class KnnClassifier {
 public:
  KnnClassifier(std::size_t dims, std::vector<double> coords, std::vector<Genotype> labels,
                std::vector<std::string> ids, std::size_t k, double vote_min)
      : dims_(dims), coords_(std::move(coords)), labels_(std::move(labels)), ids_(std::move(ids)),
        k_(k), vote_min_(vote_min) {}

  std::size_t dims() const { return dims_; }
  std::size_t size() const { return labels_.size(); }
  std::size_t k() const { return k_; }

  // Majority genotype among the k nearest training points when its share
  // strictly exceeds vote_min; Missing otherwise or for incomplete queries.
  Genotype infer(std::span<const double> query) const {
    if (query.size() != dims_) throw std::invalid_argument("knn query has wrong dimension");
    for (double q : query)
      if (is_missing(q)) return Genotype::Missing;

    std::vector<std::pair<double, std::size_t>> dist(labels_.size());
    for (std::size_t i = 0; i < labels_.size(); ++i) {
      double d = 0.0;
      for (std::size_t c = 0; c < dims_; ++c) {
        const double diff = coords_[i * dims_ + c] - query[c];
        d += diff * diff;
      }
      dist[i] = {d, i};
    }
    auto closer = [&](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first < b.first;
      return ids_[a.second] < ids_[b.second];
    };
    const std::size_t kk = std::min(k_, dist.size());
    std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(kk - 1), dist.end(), closer);

    std::array<std::size_t, 3> votes{};
    for (std::size_t i = 0; i < kk; ++i) ++votes[static_cast<std::size_t>(labels_[dist[i].second])];
    const auto top = static_cast<std::size_t>(std::max_element(votes.begin(), votes.end()) - votes.begin());
    const double share = static_cast<double>(votes[top]) / static_cast<double>(kk);
    return share > vote_min_ ? static_cast<Genotype>(top) : Genotype::Missing;
  }

 private:
  std::size_t dims_;
  std::vector<double> coords_;
  std::vector<Genotype> labels_;
  std::vector<std::string> ids_;
  std::size_t k_;
  double vote_min_;
};

// Stores the labeled training set. Rows with a Missing label or missing
// coordinates are skipped; returns nullopt when fewer than k rows remain.
inline std::optional<KnnClassifier> fit_knn(std::size_t dims, std::span<const double> coords,
                                            std::span<const Genotype> labels,
                                            std::span<const std::string> ids, std::size_t k = 40,
                                            double vote_min = 0.8) {
  if (coords.size() != labels.size() * dims || ids.size() != labels.size()) {
    throw std::invalid_argument("fit_knn: coordinates, labels and ids must align");
  }
  std::vector<double> c;
  std::vector<Genotype> l;
  std::vector<std::string> id;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == Genotype::Missing) continue;
    bool ok = true;
    for (std::size_t d = 0; d < dims; ++d) ok = ok && !is_missing(coords[i * dims + d]);
    if (!ok) continue;
    c.insert(c.end(), coords.begin() + static_cast<std::ptrdiff_t>(i * dims),
             coords.begin() + static_cast<std::ptrdiff_t>((i + 1) * dims));
    l.push_back(labels[i]);
    id.push_back(ids[i]);
  }
  if (k == 0 || l.size() < k) return std::nullopt;
  return KnnClassifier(dims, std::move(c), std::move(l), std::move(id), k, vote_min);
}

}  // namespace lineup
