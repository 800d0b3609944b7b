#pragma once

// Projecting DNA relabel decisions onto 96-well plates: each fixable decision
// is an edge from the well where the sample belonged to the well where it was
// found. Closed loops are swaps or cycles; runs of neighbouring wells moved by
// the same small offset are pipetting shifts.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <cstdlib>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "lineup/types.hpp"

namespace lineup {

enum class FillOrder : std::uint8_t { ColumnMajor, RowMajor };

// Position of a well in the plate fill order, 0..95.
inline int well_order(const Well& w, FillOrder order = FillOrder::ColumnMajor) {
  return order == FillOrder::ColumnMajor ? w.col * 8 + w.row : w.row * 12 + w.col;
}

struct PlateWells {
  std::string plate_id;
  std::vector<PlatePosition> wells;  // fill order
};

// Wells grouped by plate (plates in order of first appearance), each plate
// sorted in fill order.
inline std::vector<PlateWells> wells_in_order(const PlateLayout& layout, FillOrder order = FillOrder::ColumnMajor) {
  std::vector<PlateWells> out;
  std::unordered_map<std::string, std::size_t> idx;
  for (const auto& e : layout.entries) {
    auto [it, fresh] = idx.emplace(e.plate_id, out.size());
    if (fresh) out.push_back({e.plate_id, {}});
    out[it->second].wells.push_back(e);
  }
  for (auto& p : out)
    std::sort(p.wells.begin(), p.wells.end(), [&](const auto& a, const auto& b) {
      return well_order(a.well, order) < well_order(b.well, order);
    });
  return out;
}

enum class FindingKind : std::uint8_t { ExactSwap, Cycle, ShiftRun, DuplicateFill, Orphan };

inline const char* to_string(FindingKind k) {
  switch (k) {
    case FindingKind::ExactSwap: return "exact_swap";
    case FindingKind::Cycle: return "cycle";
    case FindingKind::ShiftRun: return "shift_run";
    case FindingKind::DuplicateFill: return "duplicate_fill";
    case FindingKind::Orphan: return "orphan";
  }
  return "orphan";
}

struct PlateWell {
  std::string plate_id;
  Well well;
  auto operator<=>(const PlateWell&) const = default;
  std::string name() const { return plate_id + ":" + well.name(); }
};

// One displaced sample: it belonged in `from` and was found in `to`.
struct Displacement {
  std::string sample;      // the sample that was displaced (its true label)
  std::string found_as;    // the label of the row where it was found
  std::optional<PlateWell> from;
  PlateWell to;
  bool tentative = false;  // from an unfixable row whose best match is still strong
};

struct PlateFinding {
  FindingKind kind = FindingKind::Orphan;
  int offset = 0;            // shift_run only
  std::size_t length = 0;    // shift_run: number of displaced samples; otherwise edges
  bool closed = true;        // cycle: false for an open displacement chain
  std::vector<Displacement> moves;
  std::vector<PlateWell> wells;  // every well touched, in move order
};

struct ForensicsResult {
  std::vector<PlateFinding> findings;
  std::vector<std::string> anomalies;
};

namespace detail {

inline void collect_wells(PlateFinding& f) {
  for (const auto& m : f.moves) {
    if (m.from && std::find(f.wells.begin(), f.wells.end(), *m.from) == f.wells.end()) f.wells.push_back(*m.from);
    if (std::find(f.wells.begin(), f.wells.end(), m.to) == f.wells.end()) f.wells.push_back(m.to);
  }
}

}  // namespace detail

// Unfixable rows whose best match reaches strong_min still say where their DNA
// came from; they take part in pattern detection as tentative moves.
inline ForensicsResult detect_patterns(const std::vector<RelabelDecision>& dna, const PlateLayout& layout,
                                       FillOrder order = FillOrder::ColumnMajor, double strong_min = 0.8) {
  ForensicsResult res;
  std::unordered_map<std::string, PlateWell> where;
  for (const auto& e : layout.entries) where.emplace(e.sample_id, PlateWell{e.plate_id, e.well});

  std::vector<Displacement> fixable;
  for (const auto& d : dna) {
    if (d.verdict != Verdict::Fixable && d.verdict != Verdict::Duplicate && d.verdict != Verdict::Unfixable) continue;
    auto at = where.find(d.sample_id);
    if (at == where.end()) {
      res.anomalies.push_back("sample " + d.sample_id + " has a " + to_string(d.verdict) + " decision but no plate position");
      continue;
    }
    const bool tentative = d.verdict == Verdict::Unfixable && !is_missing(d.evidence.max_similarity) &&
                           d.evidence.max_similarity >= strong_min && !d.evidence.argmax_id.empty();
    if (d.verdict == Verdict::Unfixable && !tentative) {
      PlateFinding f;
      f.kind = FindingKind::Orphan;
      f.moves.push_back({"", d.sample_id, std::nullopt, at->second});
      f.length = 0;
      detail::collect_wells(f);
      res.findings.push_back(std::move(f));
      continue;
    }
    const std::string& source = tentative ? d.evidence.argmax_id : *d.new_label;
    Displacement m{source, d.sample_id, std::nullopt, at->second, tentative};
    if (auto from = where.find(source); from != where.end()) m.from = from->second;
    if (d.verdict == Verdict::Duplicate) {
      PlateFinding f;
      f.kind = FindingKind::DuplicateFill;
      f.moves.push_back(m);
      f.length = 1;
      detail::collect_wells(f);
      res.findings.push_back(std::move(f));
      continue;
    }
    if (!m.from) {
      // The true sample was never placed on a plate: its origin is unknown here.
      PlateFinding f;
      f.kind = FindingKind::Orphan;
      f.moves.push_back(m);
      detail::collect_wells(f);
      res.findings.push_back(std::move(f));
      continue;
    }
    fixable.push_back(std::move(m));
  }

  // A sample should sit in its own well plus at most one duplicate.
  {
    std::map<std::string, std::size_t> placements;
    for (const auto& d : dna)
      if (d.changes_label()) ++placements[*d.new_label];
    std::set<std::string> self_ok;
    for (const auto& d : dna)
      if (d.verdict == Verdict::Correct) self_ok.insert(d.sample_id);
    for (const auto& [s, n] : placements)
      if (n + self_ok.count(s) > 2)
        res.anomalies.push_back("sample " + s + " was found in " + std::to_string(n + self_ok.count(s)) + " wells");
  }

  // Closed cycles over fixable moves.
  std::map<PlateWell, std::vector<std::size_t>> out_edges;  // from-well -> move indices
  for (std::size_t i = 0; i < fixable.size(); ++i) out_edges[*fixable[i].from].push_back(i);
  std::vector<char> used(fixable.size(), 0);
  std::vector<std::size_t> by_from(fixable.size());
  for (std::size_t i = 0; i < fixable.size(); ++i) by_from[i] = i;
  std::sort(by_from.begin(), by_from.end(), [&](std::size_t a, std::size_t b) { return *fixable[a].from < *fixable[b].from; });
  for (std::size_t start : by_from) {
    if (used[start]) continue;
    std::vector<std::size_t> path{start};
    std::set<std::size_t> on_path{start};
    bool closed = false;
    while (true) {
      const auto& cur = fixable[path.back()];
      if (cur.to == *fixable[start].from) {
        closed = true;
        break;
      }
      auto it = out_edges.find(cur.to);
      if (it == out_edges.end() || it->second.size() != 1) break;
      const std::size_t nxt = it->second.front();
      if (used[nxt] || on_path.count(nxt)) break;
      path.push_back(nxt);
      on_path.insert(nxt);
    }
    if (!closed) continue;
    PlateFinding f;
    f.kind = path.size() == 2 ? FindingKind::ExactSwap : FindingKind::Cycle;
    f.closed = true;
    f.length = path.size();
    for (std::size_t i : path) {
      used[i] = 1;
      f.moves.push_back(fixable[i]);
    }
    detail::collect_wells(f);
    res.findings.push_back(std::move(f));
  }

  // Shift runs among the remaining same-plate moves.
  struct Item {
    int from_order;
    int offset;
    std::size_t idx;
  };
  std::map<std::string, std::vector<Item>> per_plate;
  for (std::size_t i = 0; i < fixable.size(); ++i) {
    if (used[i]) continue;
    const auto& m = fixable[i];
    if (m.from->plate_id != m.to.plate_id) continue;
    const int off = well_order(m.to.well, order) - well_order(m.from->well, order);
    if (off == 0 || std::abs(off) > 2) continue;
    per_plate[m.from->plate_id].push_back({well_order(m.from->well, order), off, i});
  }
  for (auto& [plate, items] : per_plate) {
    std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) {
      return std::tie(a.offset, a.from_order) < std::tie(b.offset, b.from_order);
    });
    for (std::size_t a = 0; a < items.size();) {
      std::size_t b = a;
      while (b + 1 < items.size() && items[b + 1].offset == items[a].offset &&
             items[b + 1].from_order == items[b].from_order + 1)
        ++b;
      if (b > a) {
        PlateFinding f;
        f.kind = FindingKind::ShiftRun;
        f.offset = items[a].offset;
        f.length = b - a + 1;
        for (std::size_t k = a; k <= b; ++k) {
          used[items[k].idx] = 1;
          f.moves.push_back(fixable[items[k].idx]);
        }
        detail::collect_wells(f);
        res.findings.push_back(std::move(f));
      }
      a = b + 1;
    }
  }

  // Leftover moves: open chains, grouped by shared wells.
  std::vector<std::size_t> rest;
  for (std::size_t i = 0; i < fixable.size(); ++i)
    if (!used[i]) rest.push_back(i);
  std::vector<std::size_t> parent(rest.size());
  for (std::size_t i = 0; i < rest.size(); ++i) parent[i] = i;
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  std::map<PlateWell, std::size_t> first_touch;
  for (std::size_t i = 0; i < rest.size(); ++i) {
    for (const PlateWell& w : {*fixable[rest[i]].from, fixable[rest[i]].to}) {
      auto [it, fresh] = first_touch.emplace(w, i);
      if (!fresh) parent[find(i)] = find(it->second);
    }
  }
  std::map<std::size_t, std::vector<std::size_t>> comps;
  for (std::size_t i = 0; i < rest.size(); ++i) comps[find(i)].push_back(rest[i]);
  for (auto& [root, members] : comps) {
    PlateFinding f;
    f.kind = FindingKind::Cycle;
    f.closed = false;
    f.length = members.size();
    for (std::size_t i : members) f.moves.push_back(fixable[i]);
    detail::collect_wells(f);
    res.findings.push_back(std::move(f));
  }

  std::stable_sort(res.findings.begin(), res.findings.end(), [](const PlateFinding& a, const PlateFinding& b) {
    return a.wells.front() < b.wells.front();
  });
  return res;
}

// ---- SVG plate diagrams ---------------------------------------------------

namespace detail {

inline constexpr int kPitch = 44;
inline constexpr int kLeft = 48;
inline constexpr int kTop = 64;

inline std::pair<int, int> well_center(const Well& w) { return {kLeft + w.col * kPitch, kTop + w.row * kPitch}; }

}  // namespace detail

// One plate as a standalone SVG document. Output depends only on the inputs.
inline std::string render_plate_svg(const std::string& plate_id, const PlateLayout& layout,
                                    const std::vector<RelabelDecision>& dna, const ForensicsResult& forensics,
                                    const std::vector<std::string>& omitted = {}) {
  using detail::kLeft;
  using detail::kPitch;
  using detail::kTop;
  std::map<std::string, Verdict> verdict;
  for (const auto& d : dna) verdict[d.sample_id] = d.verdict;
  const std::set<std::string> omit(omitted.begin(), omitted.end());
  std::set<std::string> found_elsewhere;
  for (const auto& d : dna)
    if (d.changes_label()) found_elsewhere.insert(*d.new_label);
  for (const auto& f : forensics.findings)
    for (const auto& m : f.moves)
      if (m.tentative) found_elsewhere.insert(m.sample);

  std::map<Well, std::string> occupant;
  for (const auto& e : layout.entries)
    if (e.plate_id == plate_id) occupant[e.well] = e.sample_id;

  const int width = kLeft + 12 * kPitch;
  const int height = kTop + 8 * kPitch + 96;
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<defs><marker id=\"head\" viewBox=\"0 0 10 10\" refX=\"9\" refY=\"5\" markerWidth=\"7\" markerHeight=\"7\" "
         "orient=\"auto-start-reverse\"><path d=\"M0,0 L10,5 L0,10 z\" fill=\"#1f5fbf\"/></marker></defs>\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << kLeft << "\" y=\"20\" font-size=\"14\" font-weight=\"bold\">Plate " << plate_id << "</text>\n";
  for (int c = 0; c < 12; ++c)
    svg << "<text x=\"" << kLeft + c * kPitch << "\" y=\"" << kTop - 24 << "\" text-anchor=\"middle\">" << c + 1
        << "</text>\n";
  for (int r = 0; r < 8; ++r)
    svg << "<text x=\"" << kLeft - 28 << "\" y=\"" << kTop + r * kPitch + 4 << "\" text-anchor=\"middle\">"
        << static_cast<char>('A' + r) << "</text>\n";

  for (int r = 0; r < 8; ++r) {
    for (int c = 0; c < 12; ++c) {
      const Well w{r, c};
      const auto [x, y] = detail::well_center(w);
      svg << "<circle cx=\"" << x << "\" cy=\"" << y << "\" r=\"15\" fill=\"none\" stroke=\"#bbbbbb\"/>\n";
      auto it = occupant.find(w);
      if (it == occupant.end()) continue;
      const std::string& s = it->second;
      if (omit.count(s)) {
        svg << "<path d=\"M" << x - 7 << ',' << y - 7 << " L" << x + 7 << ',' << y + 7 << " M" << x + 7 << ','
            << y - 7 << " L" << x - 7 << ',' << y + 7 << "\" stroke=\"#d62728\" stroke-width=\"3\"/>\n";
        continue;
      }
      auto v = verdict.find(s);
      if (v == verdict.end()) continue;
      if (v->second == Verdict::Correct) {
        svg << "<circle cx=\"" << x << "\" cy=\"" << y << "\" r=\"5\" fill=\"black\"/>\n";
      } else if (v->second == Verdict::Unverifiable) {
        svg << "<circle cx=\"" << x << "\" cy=\"" << y << "\" r=\"5\" fill=\"#999999\"/>\n";
      }
      if (v->second != Verdict::Correct && !found_elsewhere.count(s)) {
        // This well's own sample turned up nowhere.
        svg << "<path d=\"M" << x - 6 << ',' << y + 12 << " L" << x + 6 << ',' << y + 12 << " L" << x << ',' << y + 4
            << " z\" fill=\"#8c3fbf\"/>\n";
      }
    }
  }

  for (const auto& f : forensics.findings) {
    for (const auto& m : f.moves) {
      if (m.to.plate_id != plate_id && !(m.from && m.from->plate_id == plate_id)) continue;
      const char* dash = m.tentative ? " stroke-dasharray=\"4 3\"" : "";
      if (f.kind == FindingKind::Orphan && !m.from) {
        if (m.to.plate_id != plate_id) continue;
        const auto [x, y] = detail::well_center(m.to.well);
        svg << "<path d=\"M" << x - 7 << ',' << y - 13 << " L" << x + 7 << ',' << y - 13 << " L" << x << ',' << y - 3
            << " z\" fill=\"#ff7f0e\"/>\n";
        continue;
      }
      if (f.kind == FindingKind::DuplicateFill && m.from && m.from->plate_id == plate_id) {
        const auto [x, y] = detail::well_center(m.from->well);
        svg << "<circle cx=\"" << x << "\" cy=\"" << y << "\" r=\"11\" fill=\"none\" stroke=\"#e377c2\" stroke-width=\"3\"/>\n";
      }
      if (m.from && m.from->plate_id == plate_id && m.to.plate_id == plate_id) {
        const auto [x1, y1] = detail::well_center(m.from->well);
        const auto [x2, y2] = detail::well_center(m.to.well);
        svg << "<line x1=\"" << x1 << "\" y1=\"" << y1 << "\" x2=\"" << x2 << "\" y2=\"" << y2
            << "\" stroke=\"#1f5fbf\" stroke-width=\"2\"" << dash << " marker-end=\"url(#head)\"/>\n";
      } else if (m.to.plate_id == plate_id) {
        const auto [x, y] = detail::well_center(m.to.well);
        svg << "<line x1=\"" << x - 20 << "\" y1=\"" << y - 20 << "\" x2=\"" << x - 4 << "\" y2=\"" << y - 4
            << "\" stroke=\"#1f5fbf\" stroke-width=\"2\"" << dash << " marker-end=\"url(#head)\"/>\n";
        svg << "<text x=\"" << x - 20 << "\" y=\"" << y - 22 << "\" font-size=\"8\">"
            << (m.from ? m.from->name() : std::string("?")) << "</text>\n";
      } else {
        const auto [x, y] = detail::well_center(m.from->well);
        svg << "<line x1=\"" << x + 4 << "\" y1=\"" << y + 4 << "\" x2=\"" << x + 20 << "\" y2=\"" << y + 20
            << "\" stroke=\"#1f5fbf\" stroke-width=\"2\"" << dash << " marker-end=\"url(#head)\"/>\n";
        svg << "<text x=\"" << x + 4 << "\" y=\"" << y + 30 << "\" font-size=\"8\">" << m.to.name() << "</text>\n";
      }
    }
  }

  const int ly = kTop + 8 * kPitch;
  svg << "<g font-size=\"10\">\n";
  svg << "<circle cx=\"" << kLeft << "\" cy=\"" << ly << "\" r=\"5\" fill=\"black\"/><text x=\"" << kLeft + 10
      << "\" y=\"" << ly + 4 << "\">correct</text>\n";
  svg << "<circle cx=\"" << kLeft + 90 << "\" cy=\"" << ly << "\" r=\"5\" fill=\"#999999\"/><text x=\"" << kLeft + 100
      << "\" y=\"" << ly + 4 << "\">unverifiable</text>\n";
  svg << "<line x1=\"" << kLeft + 190 << "\" y1=\"" << ly << "\" x2=\"" << kLeft + 215 << "\" y2=\"" << ly
      << "\" stroke=\"#1f5fbf\" stroke-width=\"2\" marker-end=\"url(#head)\"/><text x=\"" << kLeft + 220 << "\" y=\""
      << ly + 4 << "\">belonged -&gt; found</text>\n";
  svg << "<circle cx=\"" << kLeft + 345 << "\" cy=\"" << ly << "\" r=\"7\" fill=\"none\" stroke=\"#e377c2\" stroke-width=\"3\"/><text x=\""
      << kLeft + 357 << "\" y=\"" << ly + 4 << "\">duplicated</text>\n";
  svg << "<path d=\"M" << kLeft - 6 << ',' << ly + 22 << " L" << kLeft + 6 << ',' << ly + 22 << " L" << kLeft << ','
      << ly + 32 << " z\" fill=\"#ff7f0e\"/><text x=\"" << kLeft + 10 << "\" y=\"" << ly + 30
      << "\">unknown origin</text>\n";
  svg << "<path d=\"M" << kLeft + 84 << ',' << ly + 32 << " L" << kLeft + 96 << ',' << ly + 32 << " L" << kLeft + 90
      << ',' << ly + 22 << " z\" fill=\"#8c3fbf\"/><text x=\"" << kLeft + 100 << "\" y=\"" << ly + 30
      << "\">own DNA not found</text>\n";
  svg << "<path d=\"M" << kLeft + 215 << ',' << ly + 20 << " L" << kLeft + 227 << ',' << ly + 32 << " M" << kLeft + 227
      << ',' << ly + 20 << " L" << kLeft + 215 << ',' << ly + 32 << "\" stroke=\"#d62728\" stroke-width=\"3\"/><text x=\""
      << kLeft + 232 << "\" y=\"" << ly + 30 << "\">omitted</text>\n";
  svg << "<line x1=\"" << kLeft + 300 << "\" y1=\"" << ly + 26 << "\" x2=\"" << kLeft + 325 << "\" y2=\"" << ly + 26
      << "\" stroke=\"#1f5fbf\" stroke-width=\"2\" stroke-dasharray=\"4 3\" marker-end=\"url(#head)\"/><text x=\""
      << kLeft + 330 << "\" y=\"" << ly + 30 << "\">tentative</text>\n";
  svg << "</g>\n</svg>\n";
  return svg.str();
}

// Writes <dir>/plate_<id>.svg for every plate; returns the paths written.
inline std::vector<std::filesystem::path> emit_plate_diagrams(const std::filesystem::path& dir, const PlateLayout& layout,
                                                              const std::vector<RelabelDecision>& dna,
                                                              const ForensicsResult& forensics,
                                                              const std::vector<std::string>& omitted = {}) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  std::vector<std::filesystem::path> out;
  for (const auto& plate : wells_in_order(layout)) {
    const auto path = dir / ("plate_" + plate.plate_id + ".svg");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << render_plate_svg(plate.plate_id, layout, dna, forensics, omitted);
    if (!f) throw std::runtime_error("failed writing " + path.string());
    out.push_back(path);
  }
  return out;
}

}  // namespace lineup
