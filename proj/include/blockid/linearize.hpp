#pragma once

// Analytic small-signal linearization of block graphs around a DC operating
// point. Each static nonlinearity is replaced by its local slope and the
// family's closed-form transfer function is assembled by exact polynomial
// arithmetic. linearized_response() solves the same linear network numerically
// per frequency and serves as an independent cross-check.

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "blockid/block_graph.hpp"
#include "blockid/error.hpp"
#include "blockid/simulate.hpp"

namespace blockid {

/// One-sided slopes of a static nonlinearity at its DC level.
struct LocalSlope {
  double left = 0.0;
  double right = 0.0;
  /// +inf when the value jumps.
  double eps_lin = 0.0;
  /// Exists only where the map is differentiable.
  std::optional<double> delta_lin;
  Regularity regularity = Regularity::smooth;
};

/// Jump: eps-slope infinite. Kink: mean of the one-sided derivatives, no
/// delta-slope. Smooth: both equal the derivative.
inline LocalSlope nl_slope(const StaticNL &nl, double u_dc) {
  LocalSlope s;
  s.regularity = nl.regularity(u_dc);
  s.left = nl.left_derivative(u_dc);
  s.right = nl.right_derivative(u_dc);
  switch (s.regularity) {
  case Regularity::jump:
    s.eps_lin = std::numeric_limits<double>::infinity();
    break;
  case Regularity::kink:
    s.eps_lin = 0.5 * (s.left + s.right);
    break;
  case Regularity::smooth:
    s.eps_lin = s.right;
    s.delta_lin = s.right;
    break;
  }
  return s;
}

struct LinearizedModel {
  RationalTF tf;
  /// Per-branch slope products (family specific order, see linearize_graph).
  std::vector<double> branch_gains;
  OperatingPoint setpoint;
  /// The small-signal (delta) linearization coincides with tf.
  bool delta_exists = true;
};

struct LinearizeOptions {
  /// Cancel numerator/denominator roots closer than cancel_tolerance.
  bool cancel = false;
  double cancel_tolerance = 1e-10;
};

namespace detail {

inline double smooth_slope(const BlockGraph &g, const OperatingPoint &op, std::size_t id) {
  const auto s = nl_slope(g.node(id).nl, op.u_dc(id));
  if (s.regularity != Regularity::smooth)
    throw LinearizationError("nonlinearity '" + g.node(id).name + "' is not differentiable at its setpoint u_dc = " +
                             std::to_string(op.u_dc(id)));
  return s.eps_lin;
}

/// Numerator (delay folded in) and denominator of one term of a sum.
struct Fraction {
  Poly num;
  Poly den;
};

/// Linear part and slope product of a cascade.
inline std::pair<Fraction, double> chain_fraction(const BlockGraph &g, const OperatingPoint &op, const Chain &c) {
  Fraction f{{1.0}, {1.0}};
  double gain = 1.0;
  for (auto id : c) {
    const auto &nd = g.node(id);
    if (nd.kind == NodeKind::linear) {
      f.num = poly::conv(f.num, nd.tf.shifted_num());
      f.den = poly::conv(f.den, nd.tf.den);
    } else {
      gain *= smooth_slope(g, op, id);
    }
  }
  return {f, gain};
}

/// sum_i gain_i * N_i / D_i over the uncancelled product of denominators.
inline Fraction weighted_sum(const std::vector<std::pair<Fraction, double>> &terms) {
  Fraction out{{0.0}, {1.0}};
  for (const auto &[f, k] : terms) {
    out.num = poly::add(poly::conv(out.num, f.den), poly::scale(poly::conv(f.num, out.den), k));
    out.den = poly::conv(out.den, f.den);
  }
  return out;
}

inline Fraction linear_fraction(const BlockGraph &g, std::size_t id) {
  return {g.node(id).tf.shifted_num(), g.node(id).tf.den};
}

inline RationalTF to_tf(const Fraction &f) {
  if (poly::is_zero(f.num)) throw NumericError("linearization vanishes identically at this setpoint");
  return RationalTF::make(f.num, f.den, 0);
}

} // namespace detail

/// Remove numerator/denominator root pairs closer than tol (delay zeros at
/// the origin are kept).
inline RationalTF cancel_common_factors(const RationalTF &g, double tol = 1e-10) {
  auto zeros = poly::roots(g.num);
  auto poles = poly::roots(g.den);
  std::vector<bool> zgone(zeros.size(), false), pgone(poles.size(), false);
  bool any = false;
  for (std::size_t i = 0; i < zeros.size(); ++i)
    for (std::size_t j = 0; j < poles.size(); ++j)
      if (!pgone[j] && std::abs(zeros[i] - poles[j]) < tol) {
        zgone[i] = pgone[j] = true;
        any = true;
        break;
      }
  if (!any) return g;
  std::vector<Complex> zk, pk;
  for (std::size_t i = 0; i < zeros.size(); ++i)
    if (!zgone[i]) zk.push_back(zeros[i]);
  for (std::size_t j = 0; j < poles.size(); ++j)
    if (!pgone[j]) pk.push_back(poles[j]);
  return RationalTF::make(poly::scale(poly::from_roots(zk), g.num[0]), poly::from_roots(pk), g.delay);
}

/// Closed-form linearization of a family graph at an operating point.
/// branch_gains: single branch {beta}; parallel {beta_i}; feed-forward/feedback
/// {gamma_1..gamma_nFF, beta_1..beta_nFB}; LFR {beta}; symmetric {gamma} or
/// {gamma_1, gamma_2}. The result is left uncancelled unless requested.
inline LinearizedModel linearize_graph(const BlockGraph &g, const OperatingPoint &op, const LinearizeOptions &opt = {}) {
  if (!op.converged) throw NumericError("operating point did not converge");
  LinearizedModel m;
  m.setpoint = op;
  detail::Fraction result;

  if (const auto *l = std::get_if<SingleBranchLayout>(&g.layout)) {
    auto [f, gain] = detail::chain_fraction(g, op, l->chain);
    m.branch_gains = {gain};
    result = {poly::scale(f.num, gain), f.den};
  } else if (const auto *l = std::get_if<ParallelLayout>(&g.layout)) {
    std::vector<std::pair<detail::Fraction, double>> terms;
    for (const auto &c : l->branches) {
      terms.push_back(detail::chain_fraction(g, op, c));
      m.branch_gains.push_back(terms.back().second);
    }
    result = detail::weighted_sum(terms);
  } else if (const auto *l = std::get_if<FeedbackLayout>(&g.layout)) {
    std::vector<std::pair<detail::Fraction, double>> ff, fb;
    for (const auto &c : l->ff) {
      ff.push_back(detail::chain_fraction(g, op, c));
      m.branch_gains.push_back(ff.back().second);
    }
    for (const auto &c : l->fb) {
      fb.push_back(detail::chain_fraction(g, op, c));
      m.branch_gains.push_back(fb.back().second);
    }
    const auto F = detail::weighted_sum(ff);
    if (fb.empty()) {
      result = F;
    } else {
      // F / (1 + F H) = N_F D_H / (D_F D_H + N_F N_H)
      const auto H = detail::weighted_sum(fb);
      result = {poly::conv(F.num, H.den), poly::add(poly::conv(F.den, H.den), poly::conv(F.num, H.num))};
    }
  } else if (const auto *l = std::get_if<LfrLayout>(&g.layout)) {
    const double beta = detail::smooth_slope(g, op, l->f);
    m.branch_gains = {beta};
    const auto G1 = detail::linear_fraction(g, l->g1);
    const auto G2 = detail::linear_fraction(g, l->g2);
    const auto G3 = detail::linear_fraction(g, l->g3);
    // beta B1 B2 A3 / (A1 A2 (A3 + beta B3))
    detail::Fraction loop{poly::scale(poly::conv(poly::conv(G1.num, G2.num), G3.den), beta),
                          poly::conv(poly::conv(G1.den, G2.den), poly::add(G3.den, poly::scale(G3.num, beta)))};
    if (l->g4) result = detail::weighted_sum({{detail::linear_fraction(g, *l->g4), 1.0}, {loop, 1.0}});
    else result = loop;
  } else if (const auto *l = std::get_if<SymmetricLayout>(&g.layout)) {
    const auto G1 = detail::linear_fraction(g, l->g1);
    const auto G2 = detail::linear_fraction(g, l->g2);
    if (!l->f2) {
      // (G1 + gamma) / (1 + gamma G2) = A2 (B1 + gamma A1) / (A1 (A2 + gamma B2))
      const double gamma = detail::smooth_slope(g, op, l->f1);
      m.branch_gains = {gamma};
      result = {poly::conv(G2.den, poly::add(G1.num, poly::scale(G1.den, gamma))),
                poly::conv(G1.den, poly::add(G2.den, poly::scale(G2.num, gamma)))};
    } else {
      // (1 + g1 G1) / (1 + g2 G2) = A2 (A1 + g1 B1) / (A1 (A2 + g2 B2))
      const double g1 = detail::smooth_slope(g, op, l->f1);
      const double g2 = detail::smooth_slope(g, op, *l->f2);
      m.branch_gains = {g1, g2};
      result = {poly::conv(G2.den, poly::add(G1.den, poly::scale(G1.num, g1))),
                poly::conv(G1.den, poly::add(G2.den, poly::scale(G2.num, g2)))};
    }
  } else {
    throw LinearizationError(std::string("closed-form linearization needs a family layout (topology '") +
                             to_string(g.topology) + "'); use linearized_response");
  }
  m.tf = detail::to_tf(result);
  if (opt.cancel) m.tf = cancel_common_factors(m.tf, opt.cancel_tolerance);
  return m;
}

/// Frequency response of the linearized network at normalized frequencies,
/// from a dense complex solve of the node equations. Works for any graph.
inline std::vector<Complex> linearized_response(const BlockGraph &g, const OperatingPoint &op,
                                                std::span<const double> freqs) {
  const std::size_t n = g.nodes().size();
  const auto N = static_cast<Eigen::Index>(n);
  std::vector<double> slopes(n, 1.0);
  for (auto id : g.nonlinear_nodes()) slopes[id] = detail::smooth_slope(g, op, id);
  const auto in = static_cast<Eigen::Index>(g.input());
  const auto out = g.output();
  std::vector<Complex> result;
  result.reserve(freqs.size());
  for (double f : freqs) {
    Eigen::MatrixXcd M = Eigen::MatrixXcd::Identity(N, N);
    for (std::size_t v = 0; v < n; ++v) {
      const auto &nd = g.node(v);
      if (nd.kind == NodeKind::input) continue;
      Complex t{1.0, 0.0};
      if (nd.kind == NodeKind::linear) t = nd.tf.at(f);
      else if (nd.kind == NodeKind::nonlinear) t = slopes[v];
      for (auto e : g.in_edges(v))
        M(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(g.edges()[e].from)) -= t * g.edges()[e].sign;
    }
    Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(N);
    rhs(in) = 1.0;
    const Eigen::VectorXcd x = M.partialPivLu().solve(rhs);
    result.push_back(x(static_cast<Eigen::Index>(out)));
  }
  return result;
}

/// Rows: setpoints. Columns: branches. Entry: slope product along the branch.
struct BranchGainMatrix {
  std::vector<double> setpoints;
  Eigen::MatrixXd gains;
};

/// Requires a parallel feed-forward graph.
inline BranchGainMatrix branch_gain_matrix(const BlockGraph &g, std::span<const double> setpoints) {
  if (g.topology != Topology::parallel_ff) throw std::invalid_argument("branch gain matrix needs a parallel_ff graph");
  const auto &layout = std::get<ParallelLayout>(g.layout);
  BranchGainMatrix B;
  B.setpoints.assign(setpoints.begin(), setpoints.end());
  B.gains.resize(static_cast<Eigen::Index>(setpoints.size()), static_cast<Eigen::Index>(layout.branches.size()));
  for (std::size_t k = 0; k < setpoints.size(); ++k) {
    const auto op = solve_setpoint(g, setpoints[k]);
    for (std::size_t i = 0; i < layout.branches.size(); ++i)
      B.gains(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) =
          detail::chain_fraction(g, op, layout.branches[i]).second;
  }
  return B;
}

/// Warm-up long enough for both the open-loop blocks and, when a closed form
/// exists, the linearized closed loop at this operating point.
inline std::size_t warmup_at(const BlockGraph &g, const OperatingPoint &op) {
  std::size_t w = default_warmup(g);
  try {
    const auto m = linearize_graph(g, op);
    w = std::max(w, warmup_for_radius(m.tf.spectral_radius()));
  } catch (const std::exception &) {
    // no closed form or no slope here: open-loop estimate only
  }
  return w;
}

/// Throws NumericError when the closed-form linearization at this operating
/// point has a pole on or outside the unit circle (the equilibrium is not
/// locally stable, so no steady state exists around it).
inline void check_local_stability(const BlockGraph &g, const OperatingPoint &op) {
  LinearizedModel m;
  try {
    m = linearize_graph(g, op);
  } catch (const std::exception &) {
    return;  // no closed form: the simulation guard decides
  }
  const double rho = m.tf.spectral_radius();
  if (rho >= 1.0) {
    std::ostringstream os;
    os << "linearized system is unstable at r_dc = " << op.r_dc << " (spectral radius " << rho << ")";
    throw NumericError(os.str());
  }
}

} // namespace blockid
