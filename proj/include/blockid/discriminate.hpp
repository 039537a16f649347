#pragma once

// Maps observed (pole class, zero class) pairs to the block-oriented
// structure families that can produce them. The test is necessary only:
// a compatible family is not thereby shown to fit the system.

#include <array>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "blockid/rootlocus.hpp"

namespace blockid {

enum class Family {
  single_branch,
  parallel_ff,
  ff_fb_parallel,
  lfr_g4_zero,
  lfr_g4_nonzero,
  symmetric_fffb,
  cascade_augmented
};

inline constexpr std::array<Family, 7> kAllFamilies{Family::single_branch, Family::parallel_ff,
                                                    Family::ff_fb_parallel, Family::lfr_g4_zero,
                                                    Family::lfr_g4_nonzero, Family::symmetric_fffb,
                                                    Family::cascade_augmented};

inline const char *to_string(Family f) {
  switch (f) {
  case Family::single_branch: return "single_branch";
  case Family::parallel_ff: return "parallel_ff";
  case Family::ff_fb_parallel: return "ff_fb_parallel";
  case Family::lfr_g4_zero: return "lfr_g4_zero";
  case Family::lfr_g4_nonzero: return "lfr_g4_nonzero";
  case Family::symmetric_fffb: return "symmetric_fffb";
  case Family::cascade_augmented: return "cascade_augmented";
  }
  return "?";
}

inline std::optional<Family> family_from_string(const std::string &s) {
  for (auto f : kAllFamilies)
    if (s == to_string(f)) return f;
  return std::nullopt;
}

/// Branch and root counts of a candidate structure.
/// Feed-forward/feedback families: counts per path. LFR: the FF counts cover
/// G1, G2 (and G4), the FB counts cover G3. Symmetric FF-FB: FF counts cover
/// G1, FB counts cover G2. cascade_augmented: the counts describe `base`, and
/// aug_poles / aug_zeros the single-branch filter in cascade.
struct StructureDescriptor {
  Family family = Family::single_branch;
  std::size_t n_FF = 1, n_FB = 0;
  std::size_t n_PFF = 0, n_PFB = 0, n_ZFF = 0, n_ZFB = 0;
  std::size_t n_NL = 1;
  std::optional<Family> base;
  std::size_t aug_poles = 0, aug_zeros = 0;
};

using ClassPair = std::pair<RootClass, RootClass>;  // (poles, zeros)

namespace detail {

struct Prediction {
  ClassPair classes;
  std::string pole_rule;
  std::string zero_rule;
};

inline RootClass augment(RootClass c, std::size_t added_fixed) {
  if (added_fixed == 0 || c != RootClass::all_move) return c;
  return RootClass::mixed;
}

inline Prediction predict(const StructureDescriptor &d) {
  using RC = RootClass;
  auto reject = [](const std::string &why) { return std::invalid_argument("degenerate structure: " + why); };
  if (d.n_NL < 1) throw reject("at least one nonlinearity is required");
  const std::size_t ff_dyn = d.n_PFF + d.n_ZFF;
  const std::size_t fb_dyn = d.n_PFB + d.n_ZFB;
  switch (d.family) {
  case Family::single_branch:
    if (d.n_FF != 1 || d.n_FB != 0) throw reject("a single branch has n_FF = 1 and n_FB = 0");
    return {{RC::all_fixed, RC::all_fixed}, "Theorem 4: poles cannot move in a single-branch cascade",
            "Theorem 4: zeros cannot move in a single-branch cascade"};
  case Family::parallel_ff:
    if (d.n_FB != 0 || d.n_FF < 2) throw reject("a parallel feed-forward structure has n_FF >= 2 and n_FB = 0");
    if (ff_dyn == 0) throw reject("parallel branches without dynamics");
    return {{RC::all_fixed, RC::all_move}, "Theorem 5: the poles of parallel branches do not move",
            "Theorem 5: the zeros move with the branch gains"};
  case Family::ff_fb_parallel: {
    if (d.n_FB < 1 || d.n_FF < 1) throw reject("a feedback structure has n_FF >= 1 and n_FB >= 1");
    if (ff_dyn + fb_dyn == 0) throw reject("no dynamics in the loop");
    Prediction p{{RC::all_move, RC::all_fixed}, "Theorem 6: all the poles move if and only if n_FB >= 1", ""};
    if (d.n_FF == 1) {
      p.zero_rule = "Theorem 6: all the zeros are fixed if and only if n_FF = 1";
    } else if (d.n_PFB == 0) {
      p.classes.second = RC::all_move;
      p.zero_rule = "Theorem 6: all the zeros move if and only if n_PFB = 0 and n_FF > 1";
    } else {
      if (ff_dyn == 0) throw reject("mixed zeros need a dynamic feed-forward branch (n_PFF + n_ZFF >= 1)");
      p.classes.second = RC::mixed;
      p.zero_rule = "Theorem 6: some zeros are fixed, some move if and only if n_FF > 1, n_PFF + n_ZFF >= 1 and "
                    "n_PFB >= 1; the feedback poles appear as fixed zeros";
    }
    return p;
  }
  case Family::lfr_g4_zero:
  case Family::lfr_g4_nonzero: {
    if (fb_dyn == 0) throw reject("the LFR results need a dynamic G3");
    const bool g4 = d.family == Family::lfr_g4_nonzero;
    Prediction p;
    p.classes.first = d.n_PFF >= 1 ? RC::mixed : RC::all_move;
    p.pole_rule = g4 ? "Theorem 7: the poles of G1, G2 and G4 are fixed, the roots of A3 + beta B3 move"
                     : "Theorem 7: the poles of G1 and G2 are fixed, the roots of A3 + beta B3 move";
    p.classes.second = g4 ? RC::all_move : RC::all_fixed;
    p.zero_rule = g4 ? "Theorem 7: with G4 != 0 all zeros move" : "Theorem 7: with G4 = 0 all zeros are fixed";
    return p;
  }
  case Family::symmetric_fffb:
    if (d.n_PFF < 1 || d.n_PFB < 1) throw reject("the symmetric structure needs poles in both G1 and G2");
    return {{RC::mixed, RC::mixed}, "symmetric FF-FB: the poles of G1 are fixed, the roots of A2 + gamma B2 move",
            "symmetric FF-FB: the poles of G2 are fixed zeros, the roots of B1 + gamma A1 move"};
  case Family::cascade_augmented: {
    if (!d.base || *d.base == Family::cascade_augmented || *d.base == Family::single_branch)
      throw reject("cascade_augmented needs a multi-block base family");
    if (d.aug_poles + d.aug_zeros == 0) throw reject("the cascaded single branch adds no poles or zeros");
    StructureDescriptor b = d;
    b.family = *d.base;
    b.base.reset();
    auto p = predict(b);
    p.classes.first = augment(p.classes.first, d.aug_poles);
    p.classes.second = augment(p.classes.second, d.aug_zeros);
    const std::string tail = " (a cascaded single branch adds fixed poles and zeros)";
    p.pole_rule += tail;
    p.zero_rule += tail;
    return p;
  }
  }
  throw std::invalid_argument("family outside the covered set");
}

} // namespace detail

/// Pole and zero classes implied by the structure theorems.
inline ClassPair predict_classes(const StructureDescriptor &d) { return detail::predict(d).classes; }

/// Every descriptor of a small parameter grid for a family (invalid ones skipped).
inline std::vector<StructureDescriptor> enumerate_family(Family f) {
  std::vector<StructureDescriptor> out;
  const std::vector<std::optional<Family>> bases =
      f == Family::cascade_augmented
          // a single branch in cascade with a single branch is again a single branch
          ? std::vector<std::optional<Family>>{Family::parallel_ff, Family::ff_fb_parallel, Family::lfr_g4_zero,
                                               Family::lfr_g4_nonzero, Family::symmetric_fffb}
          : std::vector<std::optional<Family>>{std::nullopt};
  for (const auto &base : bases)
    for (std::size_t nff = 1; nff <= 3; ++nff)
      for (std::size_t nfb = 0; nfb <= 2; ++nfb)
        for (std::size_t pff = 0; pff <= 2; ++pff)
          for (std::size_t pfb = 0; pfb <= 2; ++pfb)
            for (std::size_t zff = 0; zff <= 1; ++zff)
              for (std::size_t zfb = 0; zfb <= 1; ++zfb)
                for (std::size_t ap = 0; ap <= (base ? 1u : 0u); ++ap)
                  for (std::size_t az = 0; az <= (base ? 1u : 0u); ++az) {
                    StructureDescriptor d{f, nff, nfb, pff, pfb, zff, zfb, 1, base, ap, az};
                    try {
                      (void)detail::predict(d);
                      out.push_back(d);
                    } catch (const std::invalid_argument &) {
                    }
                  }
  return out;
}

/// Class pairs a family can produce.
inline const std::set<ClassPair> &realizable(Family f) {
  static const auto table = [] {
    std::array<std::set<ClassPair>, kAllFamilies.size()> t;
    for (std::size_t i = 0; i < kAllFamilies.size(); ++i)
      for (const auto &d : enumerate_family(kAllFamilies[i])) t[i].insert(predict_classes(d));
    return t;
  }();
  return table[static_cast<std::size_t>(f)];
}

/// Cell of the feed-forward/feedback pole-zero table; starred cells cannot
/// be realized by the parallel feed-forward/feedback structure.
inline std::string table_cell(const ClassPair &c) {
  using RC = RootClass;
  const auto [p, z] = c;
  if (z == RC::all_fixed) return p == RC::all_fixed ? "single branch" : p == RC::mixed ? "1*" : "single branch FF, poles in FB";
  if (z == RC::mixed) return p == RC::all_fixed ? "2*" : p == RC::mixed ? "3*" : "multi branch FF, poles in FB";
  return p == RC::all_fixed ? "parallel FF, no poles in FB" : p == RC::mixed ? "4*" : "multi branch FF, no poles in FB";
}

struct Candidate {
  Family family;
  std::string constraints;
};

struct Exclusion {
  Family family;
  std::string rule;
};

struct Verdict {
  ClassPair observed;
  std::string table_cell;
  std::vector<Candidate> compatible;
  std::vector<Exclusion> excluded;
  std::string disclaimer =
      "necessary conditions only: a compatible structure is not guaranteed to model the system";

  bool is_compatible(Family f) const {
    for (const auto &c : compatible)
      if (c.family == f) return true;
    return false;
  }
};

namespace detail {

inline std::string constraints_for(Family f, const ClassPair &obs) {
  using RC = RootClass;
  switch (f) {
  case Family::single_branch: return "n_FF = 1, n_FB = 0";
  case Family::parallel_ff: return "n_FF >= 2, n_FB = 0 (no poles in the feedback)";
  case Family::ff_fb_parallel:
    if (obs.second == RC::all_fixed) return "n_FF = 1, n_FB >= 1";
    if (obs.second == RC::mixed) return "n_FF >= 2, n_FB >= 1, n_PFB >= 1, n_PFF + n_ZFF >= 1";
    return "n_FF >= 2, n_FB >= 1, n_PFB = 0";
  case Family::lfr_g4_zero:
    return obs.first == RC::mixed ? "G4 = 0, dynamic G3, G1/G2 with poles" : "G4 = 0, dynamic G3, static G1/G2 denominators";
  case Family::lfr_g4_nonzero:
    return obs.first == RC::mixed ? "G4 != 0, dynamic G3, G1/G2/G4 with poles" : "G4 != 0, dynamic G3, no fixed poles";
  case Family::symmetric_fffb: return "poles in G1 (fixed poles) and in G2 (fixed zeros)";
  case Family::cascade_augmented: {
    std::string bases;
    for (const auto &d : enumerate_family(Family::cascade_augmented))
      if (predict_classes(d) == obs) {
        const std::string b = to_string(*d.base);
        if (bases.find(b) == std::string::npos) bases += (bases.empty() ? "" : ", ") + b;
      }
    return "single-branch filter in cascade with one of: " + bases;
  }
  }
  return {};
}

inline std::string exclusion_rule(Family f, const ClassPair &obs) {
  // Rule of the first representative whose prediction disagrees on the
  // component that no member of the family can match.
  bool pole_possible = false;
  for (const auto &c : realizable(f)) pole_possible = pole_possible || c.first == obs.first;
  for (const auto &d : enumerate_family(f)) {
    const auto p = predict(d);
    if (!pole_possible && p.classes.first != obs.first) return p.pole_rule;
    if (pole_possible && p.classes.first == obs.first && p.classes.second != obs.second) return p.zero_rule;
  }
  return "no member of this family produces the observed pair";
}

} // namespace detail

/// Complete lookup of the families compatible with an observed class pair.
inline Verdict candidates(const ClassPair &observed) {
  Verdict v;
  v.observed = observed;
  v.table_cell = table_cell(observed);
  for (auto f : kAllFamilies) {
    if (realizable(f).count(observed)) v.compatible.push_back({f, detail::constraints_for(f, observed)});
    else v.excluded.push_back({f, detail::exclusion_rule(f, observed)});
  }
  return v;
}

struct Consistency {
  bool consistent = false;
  std::string explanation;
};

/// Does this structure produce the observed classes? The explanation names
/// the deciding rule.
inline Consistency is_consistent(const StructureDescriptor &d, const ClassPair &observed) {
  const auto p = detail::predict(d);
  if (p.classes.first != observed.first)
    return {false, p.pole_rule + " (predicted poles " + to_string(p.classes.first) + ", observed " +
                       to_string(observed.first) + ")"};
  if (p.classes.second != observed.second)
    return {false, p.zero_rule + " (predicted zeros " + to_string(p.classes.second) + ", observed " +
                       to_string(observed.second) + ")"};
  return {true, p.pole_rule + "; " + p.zero_rule};
}

} // namespace blockid
