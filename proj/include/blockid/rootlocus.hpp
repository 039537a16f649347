#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Dense>

#include "blockid/error.hpp"
#include "blockid/estimate.hpp"
#include "blockid/transfer_function.hpp"

namespace blockid {

struct RootSet {
  double setpoint = 0.0;
  std::vector<Complex> poles;
  std::vector<Complex> zeros;
  double gain = 0.0;
};

/// Poles and zeros of a model; a delay of d samples adds d zeros at z = 0.
inline RootSet roots(const RationalTF &tf, double setpoint = 0.0) {
  RootSet r;
  r.setpoint = setpoint;
  r.poles = tf.poles();
  r.zeros = tf.zeros();
  r.gain = tf.num.front();
  return r;
}

enum class RootKind { pole, zero };
enum class TrackLabel { fixed, moving, ambiguous };
enum class RootClass { all_fixed, mixed, all_move };

inline const char *to_string(RootKind k) { return k == RootKind::pole ? "pole" : "zero"; }
inline const char *to_string(TrackLabel l) {
  switch (l) {
  case TrackLabel::fixed: return "fixed";
  case TrackLabel::moving: return "moving";
  case TrackLabel::ambiguous: return "ambiguous";
  }
  return "ambiguous";
}
inline const char *to_string(RootClass c) {
  switch (c) {
  case RootClass::all_fixed: return "all_fixed";
  case RootClass::mixed: return "mixed";
  case RootClass::all_move: return "all_move";
  }
  return "mixed";
}
inline std::optional<RootClass> root_class_from_string(const std::string &s) {
  for (auto c : {RootClass::all_fixed, RootClass::mixed, RootClass::all_move})
    if (s == to_string(c)) return c;
  return std::nullopt;
}

struct RootTrack {
  RootKind kind = RootKind::pole;
  /// One entry per setpoint; empty where the track has a gap.
  std::vector<std::optional<Complex>> points;
  double dispersion = 0.0;
  TrackLabel label = TrackLabel::ambiguous;

  std::size_t present() const {
    return static_cast<std::size_t>(std::count_if(points.begin(), points.end(), [](const auto &p) { return p.has_value(); }));
  }
};

/// Largest pairwise distance between the present points.
inline double dispersion(const std::vector<std::optional<Complex>> &points) {
  double d = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i)
    for (std::size_t j = i + 1; j < points.size(); ++j)
      if (points[i] && points[j]) d = std::max(d, std::abs(*points[i] - *points[j]));
  return d;
}

/// Roots within this radius of the origin are delays, not locus information.
constexpr double kOriginRadius = 1e-8;

/// Links roots of consecutive setpoints by greedy nearest-neighbour matching.
/// Roots without a partner open a new track; tracks without a partner get a
/// gap and stay available for later setpoints.
inline std::vector<RootTrack> track_roots(std::span<const RootSet> sets, RootKind kind,
                                          double origin_radius = kOriginRadius) {
  if (sets.size() < 2) throw std::invalid_argument("tracking needs at least two setpoints");
  std::vector<RootTrack> tracks;
  std::vector<Complex> last;  // last seen point per track
  for (std::size_t s = 0; s < sets.size(); ++s) {
    std::vector<Complex> pts;
    for (const auto &r : (kind == RootKind::pole ? sets[s].poles : sets[s].zeros))
      if (std::abs(r) >= origin_radius) pts.push_back(r);
    std::vector<std::tuple<double, std::size_t, std::size_t>> pairs;
    for (std::size_t t = 0; t < tracks.size(); ++t)
      for (std::size_t p = 0; p < pts.size(); ++p) pairs.emplace_back(std::abs(last[t] - pts[p]), t, p);
    std::sort(pairs.begin(), pairs.end());
    std::vector<bool> t_used(tracks.size(), false), p_used(pts.size(), false);
    for (auto &tr : tracks) tr.points.emplace_back();
    for (const auto &[d, t, p] : pairs) {
      if (t_used[t] || p_used[p]) continue;
      t_used[t] = p_used[p] = true;
      tracks[t].points[s] = pts[p];
      last[t] = pts[p];
    }
    for (std::size_t p = 0; p < pts.size(); ++p) {
      if (p_used[p]) continue;
      RootTrack tr;
      tr.kind = kind;
      tr.points.assign(s + 1, std::nullopt);
      tr.points[s] = pts[p];
      tracks.push_back(std::move(tr));
      last.push_back(pts[p]);
    }
  }
  for (auto &tr : tracks) tr.dispersion = dispersion(tr.points);
  return tracks;
}

struct LocusClassification {
  RootClass pole_class = RootClass::all_fixed;
  RootClass zero_class = RootClass::all_fixed;
  std::vector<RootTrack> tracks;
  std::size_t ambiguous_count = 0;
};

struct ClassifyThresholds {
  double tol_fixed = 0.01;
  double tol_move = 0.05;
};

inline TrackLabel label_for(const RootTrack &t, const ClassifyThresholds &th) {
  if (t.present() < 2) return TrackLabel::ambiguous;
  if (t.dispersion < th.tol_fixed) return TrackLabel::fixed;
  if (t.dispersion > th.tol_move) return TrackLabel::moving;
  return TrackLabel::ambiguous;
}

/// Labels tracks by dispersion (strict inequalities) and derives the
/// pole/zero classes from the non-ambiguous labels. A kind without any track
/// counts as all_fixed; a kind whose tracks are all ambiguous is indeterminate.
inline LocusClassification classify(std::vector<RootTrack> tracks, const ClassifyThresholds &th = {}) {
  if (!(th.tol_fixed < th.tol_move)) throw std::invalid_argument("tol_fixed must be below tol_move");
  LocusClassification c;
  std::size_t fixed[2] = {0, 0}, moving[2] = {0, 0}, total[2] = {0, 0};
  for (auto &t : tracks) {
    t.label = label_for(t, th);
    const int k = t.kind == RootKind::pole ? 0 : 1;
    ++total[k];
    if (t.label == TrackLabel::fixed) ++fixed[k];
    else if (t.label == TrackLabel::moving) ++moving[k];
    else ++c.ambiguous_count;
  }
  auto decide = [&](int k) {
    if (total[k] == 0) return RootClass::all_fixed;
    if (fixed[k] + moving[k] == 0)
      throw IndeterminateError(std::string("every ") + (k == 0 ? "pole" : "zero") +
                               " track is ambiguous between the fixed and moving thresholds");
    if (moving[k] == 0) return RootClass::all_fixed;
    if (fixed[k] == 0) return RootClass::all_move;
    return RootClass::mixed;
  };
  c.pole_class = decide(0);
  c.zero_class = decide(1);
  c.tracks = std::move(tracks);
  return c;
}

/// Tracks both kinds and classifies them.
inline LocusClassification classify_rootsets(std::span<const RootSet> sets, const ClassifyThresholds &th = {}) {
  auto tracks = track_roots(sets, RootKind::pole);
  auto zt = track_roots(sets, RootKind::zero);
  tracks.insert(tracks.end(), zt.begin(), zt.end());
  return classify(std::move(tracks), th);
}

// ------------------------------------------------------------- rank tests

struct RankResult {
  std::size_t rank = 0;
  std::vector<double> singular_values;
  double threshold = 0.0;
  /// Rank hit min(bins, setpoints); more branches cannot be excluded.
  bool capped = false;
};

constexpr double kAnalyticRankTolerance = 1e-6;

inline RankResult numerical_rank(const Eigen::MatrixXcd &A, double abs_floor = 0.0,
                                 double rel_tol = kAnalyticRankTolerance) {
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(A);
  RankResult r;
  const auto &s = svd.singularValues();
  for (Eigen::Index i = 0; i < s.size(); ++i) r.singular_values.push_back(s(i));
  const double s1 = r.singular_values.empty() ? 0.0 : r.singular_values.front();
  r.threshold = std::max(rel_tol * s1, abs_floor);
  for (double v : r.singular_values)
    if (v > r.threshold) ++r.rank;
  r.capped = r.rank == static_cast<std::size_t>(std::min(A.rows(), A.cols()));
  return r;
}

namespace detail {

inline void check_common_bins(std::span<const FrfEstimate> frfs) {
  if (frfs.size() < 2) throw std::invalid_argument("rank tests need at least two setpoints");
  for (const auto &f : frfs)
    if (f.bins != frfs.front().bins || f.N != frfs.front().N)
      throw std::invalid_argument("rank tests need FRFs on common bins");
}

/// Noise floor for the singular values of a bins x m matrix whose entries
/// carry the estimated per-entry variance (median over bins, variance of the mean).
inline double noise_floor(std::span<const FrfEstimate> frfs, bool inverse) {
  std::vector<double> v;
  for (const auto &f : frfs) {
    if (!f.variance_available) return 0.0;
    for (std::size_t i = 0; i < f.bins.size(); ++i) {
      double var = f.var[i] / static_cast<double>(f.M);
      if (inverse) var /= std::pow(std::norm(f.G[i]), 2);  // first-order propagation through 1/G
      v.push_back(var);
    }
  }
  if (v.empty()) return 0.0;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2), v.end());
  const double sigma = std::sqrt(v[v.size() / 2]);
  const double rows = static_cast<double>(frfs.front().bins.size());
  const double cols = static_cast<double>(frfs.size());
  return 3.0 * sigma * (std::sqrt(rows) + std::sqrt(cols));
}

} // namespace detail

/// Rank of [G_1 ... G_m] (bins x setpoints): the number of parallel branches
/// when m >= n.
inline RankResult rank_branches(std::span<const FrfEstimate> frfs) {
  detail::check_common_bins(frfs);
  const auto rows = static_cast<Eigen::Index>(frfs.front().bins.size());
  Eigen::MatrixXcd A(rows, static_cast<Eigen::Index>(frfs.size()));
  for (std::size_t j = 0; j < frfs.size(); ++j)
    for (Eigen::Index i = 0; i < rows; ++i) A(i, static_cast<Eigen::Index>(j)) = frfs[j].G[static_cast<std::size_t>(i)];
  return numerical_rank(A, detail::noise_floor(frfs, false));
}

/// Rank of the element-wise inverses [1/G_1 ... 1/G_m]: n_FB + 1 for a
/// single feed-forward branch.
inline RankResult rank_feedback(std::span<const FrfEstimate> frfs) {
  detail::check_common_bins(frfs);
  const auto rows = static_cast<Eigen::Index>(frfs.front().bins.size());
  Eigen::MatrixXcd A(rows, static_cast<Eigen::Index>(frfs.size()));
  for (std::size_t j = 0; j < frfs.size(); ++j)
    for (Eigen::Index i = 0; i < rows; ++i) {
      const Complex g = frfs[j].G[static_cast<std::size_t>(i)];
      if (std::abs(g) < 1e-12)
        throw NumericError("FRF magnitude below 1e-12 at bin " + std::to_string(frfs[j].bins[static_cast<std::size_t>(i)]));
      A(i, static_cast<Eigen::Index>(j)) = 1.0 / g;
    }
  return numerical_rank(A, detail::noise_floor(frfs, true));
}

} // namespace blockid
