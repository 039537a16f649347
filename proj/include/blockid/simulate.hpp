#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "blockid/block_graph.hpp"
#include "blockid/error.hpp"
#include "blockid/signals.hpp"

namespace blockid {

/// DC solution of a block graph for a constant input r_dc.
struct OperatingPoint {
  double r_dc = 0.0;
  std::vector<double> node_in;   // DC value entering each node
  std::vector<double> node_out;  // DC value leaving each node
  double y_dc = 0.0;
  bool converged = false;
  double residual = 0.0;
  std::size_t iterations = 0;
  /// Outputs of the loop-breaking blocks; reusable as a starting guess.
  std::vector<double> tears;

  /// DC level at the input of node n (u_DC of a nonlinearity).
  double u_dc(std::size_t n) const { return node_in.at(n); }
};

struct SetpointOptions {
  std::size_t max_iterations = 200;
  double tolerance = 1e-12;
  std::optional<std::vector<double>> initial_tears;
};

namespace detail {

inline double node_input(const BlockGraph &g, std::size_t n, const std::vector<double> &out,
                         const std::vector<std::vector<std::size_t>> &in_edges) {
  double acc = 0.0;
  for (auto e : in_edges[n]) acc += g.edges()[e].sign * out[g.edges()[e].from];
  return acc;
}

struct DcModel {
  std::vector<std::size_t> tears;
  std::vector<std::size_t> order;  // evaluation order with tear inputs cut
  std::vector<std::vector<std::size_t>> in_edges;
  std::vector<double> gains;       // DC gain per linear node
};

inline DcModel dc_model(const BlockGraph &g) {
  DcModel m;
  const std::size_t n = g.nodes().size();
  const auto cyc = on_cycle(g);
  std::vector<bool> is_tear(n, false);
  for (std::size_t i = 0; i < n; ++i)
    if (cyc[i] && g.is_delaying(i)) {
      is_tear[i] = true;
      m.tears.push_back(i);
    }
  m.order = topo_order(g, [&](const Edge &e) { return !is_tear[e.to]; });
  if (m.order.size() != n) throw NumericError("DC solve: loop without a delaying block");
  m.in_edges.resize(n);
  for (std::size_t i = 0; i < n; ++i) m.in_edges[i] = g.in_edges(i);
  m.gains.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    if (g.node(i).kind == NodeKind::linear) {
      try {
        m.gains[i] = g.node(i).tf.dc_gain();
      } catch (const std::domain_error &) {
        throw NumericError("DC gain of block '" + g.node(i).name + "' is undefined");
      }
    }
  return m;
}

/// Evaluates every node for tear values `tau`; returns residual
/// K_i * in_i - tau_i and (optionally) its Jacobian.
inline Eigen::VectorXd dc_residual(const BlockGraph &g, const DcModel &m, double r, const Eigen::VectorXd &tau,
                                   std::vector<double> &in, std::vector<double> &out, Eigen::MatrixXd *jac) {
  const std::size_t n = g.nodes().size();
  const auto T = static_cast<Eigen::Index>(m.tears.size());
  in.assign(n, 0.0);
  out.assign(n, 0.0);
  std::vector<Eigen::VectorXd> din, dout;
  if (jac) {
    din.assign(n, Eigen::VectorXd::Zero(T));
    dout.assign(n, Eigen::VectorXd::Zero(T));
  }
  std::vector<Eigen::Index> tear_pos(n, -1);
  for (Eigen::Index t = 0; t < T; ++t) tear_pos[m.tears[static_cast<std::size_t>(t)]] = t;
  for (auto v : m.order) {
    const auto &nd = g.node(v);
    if (nd.kind == NodeKind::input) {
      out[v] = r;
      continue;
    }
    if (tear_pos[v] >= 0) {
      out[v] = tau(tear_pos[v]);
      if (jac) dout[v](tear_pos[v]) = 1.0;
      continue;
    }
    in[v] = node_input(g, v, out, m.in_edges);
    if (jac)
      for (auto e : m.in_edges[v]) din[v] += g.edges()[e].sign * dout[g.edges()[e].from];
    switch (nd.kind) {
    case NodeKind::linear:
      out[v] = m.gains[v] * in[v];
      if (jac) dout[v] = m.gains[v] * din[v];
      break;
    case NodeKind::nonlinear:
      out[v] = nd.nl(in[v]);
      if (jac) dout[v] = nd.nl.derivative(in[v]) * din[v];
      break;
    default:
      out[v] = in[v];
      if (jac) dout[v] = din[v];
      break;
    }
  }
  Eigen::VectorXd res(T);
  if (jac) *jac = Eigen::MatrixXd::Zero(T, T);
  for (Eigen::Index t = 0; t < T; ++t) {
    const auto v = m.tears[static_cast<std::size_t>(t)];
    in[v] = node_input(g, v, out, m.in_edges);
    res(t) = m.gains[v] * in[v] - tau(t);
    if (jac) {
      Eigen::VectorXd d = Eigen::VectorXd::Zero(T);
      for (auto e : m.in_edges[v]) d += g.edges()[e].sign * dout[g.edges()[e].from];
      jac->row(t) = m.gains[v] * d.transpose();
      (*jac)(t, t) -= 1.0;
    }
  }
  return res;
}

inline bool finite(const Eigen::VectorXd &v) { return v.allFinite(); }

} // namespace detail

/// DC operating point for input r_dc. Acyclic graphs are evaluated directly
/// (residual exactly 0). Loops are torn at their delaying blocks and solved by
/// Newton's method with analytic slopes and backtracking, falling back to a
/// damped fixed-point iteration.
namespace detail {

inline OperatingPoint newton_setpoint(const BlockGraph &g, const DcModel &m, double r_dc, const SetpointOptions &opt) {
  OperatingPoint op;
  op.r_dc = r_dc;
  const auto T = static_cast<Eigen::Index>(m.tears.size());
  Eigen::VectorXd tau = Eigen::VectorXd::Zero(T);
  if (opt.initial_tears && static_cast<Eigen::Index>(opt.initial_tears->size()) == T)
    for (Eigen::Index i = 0; i < T; ++i) tau(i) = (*opt.initial_tears)[static_cast<std::size_t>(i)];

  std::vector<double> in, out;
  auto tolerance_met = [&](const Eigen::VectorXd &res, const Eigen::VectorXd &t) {
    const double scale = std::max(1.0, t.size() ? t.cwiseAbs().maxCoeff() : 0.0);
    return res.size() == 0 || res.cwiseAbs().maxCoeff() <= opt.tolerance * scale;
  };

  Eigen::MatrixXd jac;
  Eigen::VectorXd res = detail::dc_residual(g, m, r_dc, tau, in, out, &jac);
  std::size_t it = 0;
  bool newton_ok = true;
  while (!tolerance_met(res, tau) && it < opt.max_iterations && newton_ok) {
    ++it;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(jac);
    if (!lu.isInvertible() || !detail::finite(res)) {
      newton_ok = false;
      break;
    }
    const Eigen::VectorXd step = -lu.solve(res);
    double lambda = 1.0;
    bool accepted = false;
    for (int halvings = 0; halvings < 30; ++halvings, lambda *= 0.5) {
      Eigen::VectorXd trial = tau + lambda * step;
      Eigen::MatrixXd tj;
      std::vector<double> ti, to;
      Eigen::VectorXd tr = detail::dc_residual(g, m, r_dc, trial, ti, to, &tj);
      if (detail::finite(tr) && tr.norm() < res.norm()) {
        tau = std::move(trial);
        res = std::move(tr);
        jac = std::move(tj);
        in = std::move(ti);
        out = std::move(to);
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      // no descent left: either converged to round-off or Newton stalled
      const double scale = std::max(1.0, tau.size() ? tau.cwiseAbs().maxCoeff() : 0.0);
      if (res.size() && res.cwiseAbs().maxCoeff() <= 1e3 * opt.tolerance * scale) break;
      newton_ok = false;
    }
  }
  if (!newton_ok) {
    for (; it < opt.max_iterations && !tolerance_met(res, tau); ++it) {
      tau += 0.5 * res;
      res = detail::dc_residual(g, m, r_dc, tau, in, out, nullptr);
      if (!detail::finite(res)) break;
    }
  }
  op.node_in = std::move(in);
  op.node_out = std::move(out);
  op.iterations = it;
  op.residual = res.size() ? res.cwiseAbs().maxCoeff() : 0.0;
  op.converged = detail::finite(res) && (res.size() == 0 || op.residual <= 1e3 * opt.tolerance *
                                             std::max(1.0, tau.cwiseAbs().maxCoeff()));
  op.tears.assign(tau.data(), tau.data() + tau.size());
  op.y_dc = op.node_out[g.output()];
  if (!op.converged)
    throw NumericError("DC operating point did not converge for r_dc = " + std::to_string(r_dc) +
                       " (residual " + std::to_string(op.residual) + ")");
  return op;
}

} // namespace detail

/// DC operating point for setpoint r_dc. Without starting tears, loops are
/// solved by continuation from r_dc = 0 so the result stays on the branch a
/// slowly ramped input reaches, not on whichever equilibrium Newton finds first.
inline OperatingPoint solve_setpoint(const BlockGraph &g, double r_dc, const SetpointOptions &opt = {}) {
  const auto m = detail::dc_model(g);
  if (m.tears.empty() || opt.initial_tears || r_dc == 0.0) return detail::newton_setpoint(g, m, r_dc, opt);
  const double step = 0.05;
  const auto n = static_cast<std::size_t>(std::ceil(std::abs(r_dc) / step));
  SetpointOptions o = opt;
  try {
    for (std::size_t k = 0; k < n; ++k) {
      const double r = r_dc * static_cast<double>(k) / static_cast<double>(n);
      o.initial_tears = detail::newton_setpoint(g, m, r, o).tears;
    }
    return detail::newton_setpoint(g, m, r_dc, o);
  } catch (const NumericError &) {
    // the path lost its equilibrium (fold); try the target directly
    return detail::newton_setpoint(g, m, r_dc, opt);
  }
}

/// ceil(10 / (1 - rho)) for the slowest pole radius rho, capped at 1e5.
inline std::size_t warmup_for_radius(double rho) {
  if (rho >= 1.0) return 100000;
  return static_cast<std::size_t>(std::min(1e5, std::ceil(10.0 / (1.0 - rho) - 1e-9)));
}

/// Warm-up from the slowest pole over the graph's linear blocks.
inline std::size_t default_warmup(const BlockGraph &g) {
  double rho = 0.0;
  for (const auto &nd : g.nodes())
    if (nd.kind == NodeKind::linear) rho = std::max(rho, nd.tf.spectral_radius());
  return warmup_for_radius(rho);
}

namespace detail {

/// Direct-form state of one linear block.
struct LinearState {
  const RationalTF *tf = nullptr;
  std::vector<double> past_in;   // x[t-1], x[t-2], ...
  std::vector<double> past_out;  // y[t-1], y[t-2], ...

  void init(const RationalTF &g, double x_dc, double y_dc) {
    tf = &g;
    past_in.assign(g.delay + g.nb(), x_dc);
    past_out.assign(g.na(), y_dc);
  }

  double output(double current_in) const {
    double y = 0.0;
    const auto &b = tf->num;
    for (std::size_t i = 0; i < b.size(); ++i) {
      const std::size_t lag = tf->delay + i;
      y += b[i] * (lag == 0 ? current_in : past_in[lag - 1]);
    }
    const auto &a = tf->den;
    for (std::size_t j = 1; j < a.size(); ++j) y -= a[j] * past_out[j - 1];
    return y;
  }

  void push(double x, double y) {
    if (!past_in.empty()) {
      std::copy_backward(past_in.begin(), past_in.end() - 1, past_in.end());
      past_in[0] = x;
    }
    if (!past_out.empty()) {
      std::copy_backward(past_out.begin(), past_out.end() - 1, past_out.end());
      past_out[0] = y;
    }
  }
};

} // namespace detail

constexpr double kOverflowGuard = 1e9;

/// Time-domain response. States start at the operating point of input.dc.
/// A periodic input is wrapped: `warmup` samples of its periodic extension
/// precede one returned period. Otherwise the first `warmup` output samples
/// are dropped. Throws NumericError("unstable trajectory ...") once any
/// signal exceeds 1e9 in magnitude.
inline Signal simulate(const BlockGraph &g, const Signal &input, std::size_t warmup,
                       const std::optional<OperatingPoint> &op_in = std::nullopt) {
  const auto violations = validate_graph(g);
  if (!violations.empty()) throw std::invalid_argument("invalid block graph: " + format_violations(violations));
  const std::size_t N = input.samples.size();
  if (N == 0) throw std::invalid_argument("empty input signal");
  if (!input.periodic && warmup >= N) throw std::invalid_argument("warm-up consumes the whole record");

  const OperatingPoint op = op_in ? *op_in : solve_setpoint(g, input.dc);
  const std::size_t n = g.nodes().size();
  const auto order = detail::topo_order(g, detail::instantaneous(g));
  std::vector<std::vector<std::size_t>> in_edges(n);
  for (std::size_t i = 0; i < n; ++i) in_edges[i] = g.in_edges(i);

  std::vector<detail::LinearState> state(n);
  for (std::size_t i = 0; i < n; ++i)
    if (g.node(i).kind == NodeKind::linear) state[i].init(g.node(i).tf, op.node_in[i], op.node_out[i]);

  const std::size_t steps = input.periodic ? warmup + N : N;
  const std::size_t keep_from = warmup;
  Signal y;
  y.samples.reserve(input.periodic ? N : N - warmup);
  y.dc = op.y_dc;
  y.periodic = input.periodic;
  y.cls = input.cls;

  std::vector<double> out(n, 0.0), in(n, 0.0);
  const std::size_t out_node = g.output();
  for (std::size_t t = 0; t < steps; ++t) {
    double r = 0.0;
    if (input.periodic) r = input.samples[(t + N - warmup % N) % N];
    else r = input.samples[t];
    for (std::size_t v = 0; v < n; ++v)
      if (g.is_delaying(v)) out[v] = state[v].output(0.0);
    for (auto v : order) {
      const auto &nd = g.node(v);
      switch (nd.kind) {
      case NodeKind::input: out[v] = r; break;
      case NodeKind::linear:
        in[v] = detail::node_input(g, v, out, in_edges);
        out[v] = state[v].output(in[v]);
        break;
      case NodeKind::nonlinear:
        in[v] = detail::node_input(g, v, out, in_edges);
        out[v] = nd.nl(in[v]);
        break;
      default:
        in[v] = detail::node_input(g, v, out, in_edges);
        out[v] = in[v];
        break;
      }
    }
    for (std::size_t v = 0; v < n; ++v) {
      if (g.node(v).kind != NodeKind::linear) continue;
      if (g.is_delaying(v)) in[v] = detail::node_input(g, v, out, in_edges);
      state[v].push(in[v], out[v]);
    }
    for (std::size_t v = 0; v < n; ++v)
      if (!(std::abs(out[v]) <= kOverflowGuard))
        throw NumericError("unstable trajectory: |signal| exceeded 1e9 at node '" + g.node(v).name +
                           "' (sample " + std::to_string(t) + ", r_dc = " + std::to_string(input.dc) + ")");
    if (t >= keep_from) y.samples.push_back(out[out_node]);
  }
  return y;
}

} // namespace blockid
