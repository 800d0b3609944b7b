#pragma once

// The diagonal/off-diagonal rule shared by expression and DNA alignment: a row
// whose self similarity is small but which has one clearly dominant match
// elsewhere is relabeled to that match.

#include <string>
#include <unordered_map>
#include <vector>

#include "lineup/types.hpp"

namespace lineup {

struct DecisionThresholds {
  double self_min = 0.8;
  double other_min = 0.8;
  double gap_min = 0.1;
};

namespace detail {

// Largest and second-largest off-diagonal scores in row i. Ties on the
// maximum resolve to the lexicographically smallest column id.
inline Evidence row_evidence(const SimilarityMatrix& sim, std::size_t i) {
  Evidence ev;
  const std::string& id = sim.row_ids[i];
  double best = -INFINITY, second = -INFINITY;
  const std::string* best_id = nullptr;
  for (std::size_t j = 0; j < sim.n_cols(); ++j) {
    const double v = sim.at(i, j);
    if (is_missing(v)) continue;
    if (sim.col_ids[j] == id) {
      ev.self_similarity = v;
      continue;
    }
    if (v > best || (v == best && best_id && sim.col_ids[j] < *best_id)) {
      second = best;
      best = v;
      best_id = &sim.col_ids[j];
    } else if (v > second) {
      second = v;
    }
  }
  if (best_id) {
    ev.max_similarity = best;
    ev.argmax_id = *best_id;
    if (second > -INFINITY) ev.second_similarity = second;
  }
  return ev;
}

}  // namespace detail

// Per-row verdicts:
//   self >= max off-diagonal, or self >= self_min        -> correct
//   self < self_min, strong unique off-diagonal match     -> fixable (argmax)
//   top two matches both strong and within gap_min        -> unfixable, possible mixture
//   self < self_min otherwise                             -> unfixable
//   no self entry: strong unique match -> fixable, else unverifiable
// A fixable row whose target keeps its own correct row becomes a duplicate of it.
inline std::vector<RelabelDecision> decide_labels(const SimilarityMatrix& sim,
                                                  const DecisionThresholds& th) {
  std::vector<RelabelDecision> out;
  out.reserve(sim.n_rows());
  for (std::size_t i = 0; i < sim.n_rows(); ++i) {
    RelabelDecision d;
    d.sample_id = sim.row_ids[i];
    d.evidence = detail::row_evidence(sim, i);
    const Evidence& ev = d.evidence;
    const bool has_self = !is_missing(ev.self_similarity);
    const bool has_max = !is_missing(ev.max_similarity);
    // Slack so that e.g. 1.0 - 0.8 still clears a gap of 0.2.
    constexpr double eps = 1e-12;
    const bool strong = has_max && ev.max_similarity >= th.other_min - eps;
    const double gap = !has_max ? 0.0
                       : is_missing(ev.second_similarity) ? INFINITY
                                                          : ev.max_similarity - ev.second_similarity;
    const bool separated = strong && gap >= th.gap_min - eps;
    const bool mixture = strong && !separated && ev.second_similarity >= th.other_min - eps;

    if (has_self && (!has_max || ev.self_similarity >= ev.max_similarity || ev.self_similarity >= th.self_min - eps)) {
      d.verdict = Verdict::Correct;
    } else if (separated) {
      d.verdict = Verdict::Fixable;
      d.new_label = ev.argmax_id;
    } else if (mixture) {
      d.verdict = Verdict::Unfixable;
      d.possible_mixture = true;
    } else {
      d.verdict = has_self ? Verdict::Unfixable : Verdict::Unverifiable;
    }
    out.push_back(std::move(d));
  }

  std::unordered_map<std::string, std::size_t> row_of;
  for (std::size_t i = 0; i < out.size(); ++i) row_of.emplace(out[i].sample_id, i);
  for (auto& d : out) {
    if (d.verdict != Verdict::Fixable) continue;
    auto it = row_of.find(*d.new_label);
    if (it != row_of.end() && out[it->second].verdict == Verdict::Correct) d.verdict = Verdict::Duplicate;
  }
  for (const auto& d : out) check_decision(d);
  return out;
}

}  // namespace lineup
