#pragma once

// End-to-end experiment runner: setpoints, simulation, FRF estimation, fits,
// root tracks, classification, verdict, plus the analytic oracle. Reports
// are deterministic for a given config and seed.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "blockid/config.hpp"
#include "blockid/discriminate.hpp"
#include "blockid/linearize.hpp"

namespace blockid {

inline constexpr const char *kVersion = "0.1.0";

struct RunOptions {
  std::optional<std::uint64_t> seed;
  std::optional<double> eps;
  std::size_t jobs = 1;
};

inline ExperimentConfig apply_overrides(ExperimentConfig c, const RunOptions &o) {
  if (o.seed) c.seed = *o.seed;
  if (o.eps) {
    if (!(*o.eps > 0.0)) throw ConfigError("--eps-override must be positive");
    c.excitation.eps = *o.eps;
  }
  return c;
}

/// FNV-1a over the canonical JSON text of the config.
inline std::string config_hash(const ExperimentConfig &c) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : config_to_json(c).dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

// ------------------------------------------------------------ serialization

inline json complex_json(Complex z) { return json::array({z.real(), z.imag()}); }

inline json roots_json(const std::vector<Complex> &r) {
  json j = json::array();
  for (auto z : r) j.push_back(complex_json(z));
  return j;
}

inline json tf_json(const RationalTF &tf) {
  return {{"num", tf.num}, {"den", tf.den}, {"delay", tf.delay}, {"poles", roots_json(tf.poles())},
          {"zeros", roots_json(tf.zeros())}};
}

inline json fit_json(const FitResult &f) {
  json j = tf_json(f.model);
  j["residual"] = f.residual;
  j["iterations"] = f.iterations;
  j["converged"] = f.converged;
  return j;
}

inline json linearized_json(const LinearizedModel &m) {
  json j = tf_json(m.tf);
  j["branch_gains"] = m.branch_gains;
  j["delta_linearization"] = m.delta_exists ? "equals the eps-linearization" : "nonexistent";
  return j;
}

inline json operating_point_json(const BlockGraph &g, const OperatingPoint &op) {
  json nl = json::object();
  for (auto id : g.nonlinear_nodes()) {
    const auto s = nl_slope(g.node(id).nl, op.u_dc(id));
    nl[g.node(id).name] = {{"u_dc", op.u_dc(id)},
                           {"slope", std::isfinite(s.eps_lin) ? json(s.eps_lin) : json("infinite")},
                           {"regularity", s.regularity == Regularity::smooth ? "smooth"
                                          : s.regularity == Regularity::kink ? "kink"
                                                                              : "jump"}};
  }
  return {{"r_dc", op.r_dc}, {"y_dc", op.y_dc}, {"residual", op.residual}, {"iterations", op.iterations},
          {"nonlinearities", nl}};
}

inline json tracks_json(const std::vector<RootTrack> &tracks) {
  json j = json::array();
  for (std::size_t i = 0; i < tracks.size(); ++i) {
    json pts = json::array();
    for (const auto &p : tracks[i].points) pts.push_back(p ? complex_json(*p) : json(nullptr));
    j.push_back({{"id", i}, {"kind", to_string(tracks[i].kind)}, {"dispersion", tracks[i].dispersion},
                 {"label", to_string(tracks[i].label)}, {"points", pts}});
  }
  return j;
}

inline json verdict_json(const Verdict &v) {
  json comp = json::array(), excl = json::array();
  for (const auto &c : v.compatible) comp.push_back({{"family", to_string(c.family)}, {"constraints", c.constraints}});
  for (const auto &e : v.excluded) excl.push_back({{"family", to_string(e.family)}, {"rule", e.rule}});
  return {{"observed", {{"poles", to_string(v.observed.first)}, {"zeros", to_string(v.observed.second)}}},
          {"table_cell", v.table_cell},
          {"compatible", comp},
          {"excluded", excl},
          {"disclaimer", v.disclaimer}};
}

inline json rank_json(const RankResult &r) {
  return {{"rank", r.rank}, {"singular_values", r.singular_values}, {"threshold", r.threshold}, {"capped", r.capped}};
}

inline std::string fmt17(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

/// Long-form locus table with a gnuplot header; enough to redraw the plots.
inline std::string loci_csv(const std::vector<RootTrack> &tracks, std::span<const double> setpoints) {
  std::ostringstream os;
  os << "# gnuplot: set datafile separator ','; set size square; set parametric; set trange [0:2*pi]\n"
     << "# gnuplot: plot cos(t),sin(t) title 'unit circle', 'loci.csv' every ::1 using 4:5 with points title 'roots'\n"
     << "setpoint,kind,track,re,im,dispersion,label\n";
  for (std::size_t i = 0; i < tracks.size(); ++i)
    for (std::size_t s = 0; s < tracks[i].points.size(); ++s) {
      const auto &p = tracks[i].points[s];
      if (!p) continue;
      os << fmt17(setpoints[s]) << ',' << to_string(tracks[i].kind) << ',' << i << ',' << fmt17(p->real()) << ','
         << fmt17(p->imag()) << ',' << fmt17(tracks[i].dispersion) << ',' << to_string(tracks[i].label) << '\n';
    }
  return os.str();
}

inline std::string frf_csv(const std::vector<SetpointResult> &res) {
  std::ostringstream os;
  os << "setpoint_index,setpoint,bin,f,re,im,var\n";
  for (std::size_t k = 0; k < res.size(); ++k) {
    const auto &e = res[k].frf;
    for (std::size_t i = 0; i < e.bins.size(); ++i)
      os << k << ',' << fmt17(res[k].op.r_dc) << ',' << e.bins[i] << ',' << fmt17(e.frequency(i)) << ','
         << fmt17(e.G[i].real()) << ',' << fmt17(e.G[i].imag()) << ','
         << (e.variance_available ? fmt17(e.var[i]) : std::string("nan")) << '\n';
  }
  return os.str();
}

// ------------------------------------------------------------------ oracle

struct OracleResult {
  std::vector<OperatingPoint> ops;
  std::vector<LinearizedModel> models;
  std::vector<RootSet> rootsets;
  std::vector<RootTrack> tracks;
  std::optional<LocusClassification> classification;
  std::optional<Verdict> verdict;
  std::string classification_error;
};

inline std::vector<OperatingPoint> solve_setpoints(const BlockGraph &g, std::span<const double> setpoints) {
  std::vector<OperatingPoint> ops;
  for (std::size_t k = 0; k < setpoints.size(); ++k) {
    SetpointOptions so;
    if (k > 0) so.initial_tears = ops.back().tears;
    try {
      ops.push_back(solve_setpoint(g, setpoints[k], so));
    } catch (const NumericError &e) {
      throw NumericError("setpoint " + std::to_string(k) + " (r_dc = " + fmt17(setpoints[k]) + "): " + e.what());
    }
  }
  return ops;
}

/// Analytic linearizations along the setpoints (no simulation).
inline OracleResult run_oracle(const BlockGraph &g, std::span<const double> setpoints,
                               const ClassifyThresholds &th) {
  if (g.topology == Topology::custom)
    throw LinearizationError("the analytic oracle needs a family topology; custom graphs have no closed form");
  OracleResult o;
  o.ops = solve_setpoints(g, setpoints);
  for (std::size_t k = 0; k < o.ops.size(); ++k) {
    try {
      o.models.push_back(linearize_graph(g, o.ops[k]));
    } catch (const LinearizationError &e) {
      throw LinearizationError("setpoint " + std::to_string(k) + ": " + e.what());
    }
    o.rootsets.push_back(roots(o.models.back().tf, setpoints[k]));
  }
  if (o.rootsets.size() >= 2) {
    try {
      o.classification = classify_rootsets(o.rootsets, th);
      o.tracks = o.classification->tracks;
      o.verdict = candidates({o.classification->pole_class, o.classification->zero_class});
    } catch (const IndeterminateError &e) {
      o.classification_error = e.what();
      o.tracks = track_roots(o.rootsets, RootKind::pole);
      auto z = track_roots(o.rootsets, RootKind::zero);
      o.tracks.insert(o.tracks.end(), z.begin(), z.end());
    }
  }
  return o;
}

/// Largest distance from an oracle root to the nearest root of the same kind
/// in the fitted model (roots at the origin skipped).
inline double root_error(const RootSet &oracle, const RootSet &fitted) {
  double worst = 0.0;
  auto side = [&](const std::vector<Complex> &ref, const std::vector<Complex> &est) {
    for (auto r : ref) {
      if (std::abs(r) < kOriginRadius) continue;
      double best = std::numeric_limits<double>::infinity();
      for (auto e : est) best = std::min(best, std::abs(e - r));
      worst = std::max(worst, best);
    }
  };
  side(oracle.poles, fitted.poles);
  side(oracle.zeros, fitted.zeros);
  return worst;
}

inline json oracle_json(const BlockGraph &g, const OracleResult &o) {
  json sp = json::array();
  for (std::size_t k = 0; k < o.models.size(); ++k)
    sp.push_back({{"operating_point", operating_point_json(g, o.ops[k])}, {"model", linearized_json(o.models[k])}});
  json j = {{"setpoints", sp}, {"tracks", tracks_json(o.tracks)}};
  if (o.classification)
    j["classification"] = {{"poles", to_string(o.classification->pole_class)},
                           {"zeros", to_string(o.classification->zero_class)}};
  else if (!o.classification_error.empty())
    j["classification"] = {{"error", o.classification_error}};
  if (o.verdict) j["verdict"] = verdict_json(*o.verdict);
  return j;
}

// --------------------------------------------------------------------- run

struct Report {
  ExperimentConfig config;
  std::vector<SetpointResult> setpoints;
  std::vector<RootSet> rootsets;
  std::vector<RootTrack> tracks;
  std::optional<LocusClassification> classification;
  std::optional<Verdict> verdict;
  std::string classification_error;
  std::optional<OracleResult> oracle;
  std::string oracle_error;
  std::vector<double> oracle_root_errors;
  std::optional<RankResult> rank_branches, rank_feedback;
  std::string rank_feedback_error;
  std::vector<OrderScan> order_scans;
  json document;

  bool indeterminate() const { return !classification; }
};

inline std::vector<FrfEstimate> frfs_of(const std::vector<SetpointResult> &res) {
  std::vector<FrfEstimate> out;
  for (const auto &r : res) out.push_back(r.frf);
  return out;
}

inline json provenance_json(const ExperimentConfig &c) {
  return {{"version", kVersion}, {"config_hash", config_hash(c)}, {"seed", c.seed}};
}

/// Full pipeline. Classification failures do not throw: the report is still
/// assembled and `indeterminate()` tells the caller.
inline Report run_experiment(const ExperimentConfig &cfg, std::size_t jobs = 1) {
  Report rep;
  rep.config = cfg;
  const auto g = build_graph(cfg.system);
  rep.setpoints = bla_at_setpoints(g, cfg.setpoints, cfg.excitation, cfg.fit, cfg.seed, jobs);
  for (const auto &r : rep.setpoints) rep.rootsets.push_back(roots(r.fit.model, r.op.r_dc));

  if (rep.rootsets.size() >= 2) {
    try {
      rep.classification = classify_rootsets(rep.rootsets, cfg.classify);
      rep.tracks = rep.classification->tracks;
      rep.verdict = candidates({rep.classification->pole_class, rep.classification->zero_class});
    } catch (const IndeterminateError &e) {
      rep.classification_error = e.what();
      rep.tracks = track_roots(rep.rootsets, RootKind::pole);
      auto z = track_roots(rep.rootsets, RootKind::zero);
      rep.tracks.insert(rep.tracks.end(), z.begin(), z.end());
    }
    const auto frfs = frfs_of(rep.setpoints);
    rep.rank_branches = rank_branches(frfs);
    try {
      rep.rank_feedback = rank_feedback(frfs);
    } catch (const NumericError &e) {
      rep.rank_feedback_error = e.what();
    }
  } else {
    rep.classification_error = "classification needs at least two setpoints";
  }

  if (cfg.order_scan)
    for (const auto &r : rep.setpoints) rep.order_scans.push_back(order_scan(r.frf, cfg.fit.nb, cfg.fit.na, cfg.fit.delay));

  if (g.topology != Topology::custom) {
    try {
      rep.oracle = run_oracle(g, cfg.setpoints, cfg.classify);
      for (std::size_t k = 0; k < rep.rootsets.size(); ++k)
        rep.oracle_root_errors.push_back(root_error(rep.oracle->rootsets[k], rep.rootsets[k]));
    } catch (const LinearizationError &e) {
      rep.oracle_error = e.what();
    }
  }

  // single-writer assembly, in setpoint order
  json sp = json::array();
  for (std::size_t k = 0; k < rep.setpoints.size(); ++k) {
    const auto &r = rep.setpoints[k];
    json e = {{"index", k},
              {"operating_point", operating_point_json(g, r.op)},
              {"warmup", r.warmup},
              {"frf", {{"bins", r.frf.bins.size()}, {"records", r.frf.M}, {"variance_available", r.frf.variance_available}}},
              {"fit", fit_json(r.fit)}};
    if (cfg.order_scan) {
      json scan = json::array();
      for (const auto &en : rep.order_scans[k].entries)
        scan.push_back({{"nb", en.nb}, {"na", en.na}, {"residual", en.residual}, {"closest_pole_zero", en.closest_pole_zero}});
      e["order_scan"] = {{"entries", scan},
                         {"undermodeled", rep.order_scans[k].undermodeled},
                         {"overmodeled_hint", rep.order_scans[k].overmodeled_hint}};
    }
    if (k < rep.oracle_root_errors.size()) e["oracle_root_error"] = rep.oracle_root_errors[k];
    sp.push_back(e);
  }
  json doc = {{"provenance", provenance_json(cfg)}, {"config", config_to_json(cfg)}, {"setpoints", sp},
              {"tracks", tracks_json(rep.tracks)}};
  if (rep.classification)
    doc["classification"] = {{"poles", to_string(rep.classification->pole_class)},
                             {"zeros", to_string(rep.classification->zero_class)},
                             {"thresholds", {{"tol_fixed", cfg.classify.tol_fixed}, {"tol_move", cfg.classify.tol_move}}},
                             {"ambiguous_tracks", rep.classification->ambiguous_count}};
  else
    doc["classification"] = {{"error", rep.classification_error}};
  if (rep.verdict) doc["verdict"] = verdict_json(*rep.verdict);
  json rank = json::object();
  if (rep.rank_branches) rank["branches"] = rank_json(*rep.rank_branches);
  if (rep.rank_feedback) rank["feedback"] = rank_json(*rep.rank_feedback);
  else if (!rep.rank_feedback_error.empty()) rank["feedback"] = {{"error", rep.rank_feedback_error}};
  doc["rank"] = rank;
  if (rep.oracle) doc["oracle"] = oracle_json(g, *rep.oracle);
  else if (!rep.oracle_error.empty()) doc["oracle"] = {{"error", rep.oracle_error}};
  rep.document = std::move(doc);
  return rep;
}

struct RankReport {
  std::vector<SetpointResult> setpoints;
  RankResult branches;
  std::optional<RankResult> feedback;
  std::string feedback_error;
  json document;
};

inline RankReport run_rank(const ExperimentConfig &cfg, std::size_t jobs = 1) {
  if (cfg.setpoints.size() < 2) throw ConfigError("rank tests need at least two setpoints");
  RankReport rep;
  const auto g = build_graph(cfg.system);
  rep.setpoints = bla_at_setpoints(g, cfg.setpoints, cfg.excitation, cfg.fit, cfg.seed, jobs);
  const auto frfs = frfs_of(rep.setpoints);
  rep.branches = rank_branches(frfs);
  json fb;
  try {
    rep.feedback = rank_feedback(frfs);
    fb = rank_json(*rep.feedback);
  } catch (const NumericError &e) {
    rep.feedback_error = e.what();
    fb = {{"error", rep.feedback_error}};
  }
  rep.document = {{"provenance", provenance_json(cfg)}, {"rank_branches", rank_json(rep.branches)}, {"rank_feedback", fb}};
  return rep;
}

inline void write_text(const std::filesystem::path &p, const std::string &text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + p.string() + "'");
  out << text;
}

inline std::string dump(const json &j) { return j.dump(2) + "\n"; }

} // namespace blockid
