#pragma once

// Experiment description: the true system, the excitation protocol and the
// analysis settings. TOML files are converted to a JSON tree first, so the
// TOML and JSON forms share one reader.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>
#include <toml.hpp>

#include "blockid/block_graph.hpp"
#include "blockid/error.hpp"
#include "blockid/estimate.hpp"
#include "blockid/rootlocus.hpp"

namespace blockid {

using json = nlohmann::json;

struct LinearBlockSpec {
  Poly num{1.0};
  Poly den{1.0};
  std::size_t delay = 0;
  bool stable = true;
  bool operator==(const LinearBlockSpec &) const = default;
};

/// Polynomial when `breakpoints` is empty, otherwise piecewise.
struct NonlinearBlockSpec {
  std::vector<double> breakpoints;
  std::vector<Poly> segments{{0.0, 1.0}};
  bool operator==(const NonlinearBlockSpec &) const = default;
};

using BlockSpec = std::variant<LinearBlockSpec, NonlinearBlockSpec>;

struct EdgeSpec {
  std::string from, to;
  double sign = 1.0;
  bool operator==(const EdgeSpec &) const = default;
};

/// Block graph description. Which fields matter depends on the topology:
///   single_branch:  chain
///   parallel_ff:    branches
///   ff_fb_parallel: ff, fb
///   lfr:            roles g1, g2, g3, f and optionally g4
///   symmetric_fffb: roles g1, g2, f1 and optionally f2
///   custom:         sums, edges ("in" and "out" are the terminals)
struct SystemSpec {
  Topology topology = Topology::single_branch;
  std::map<std::string, BlockSpec> blocks;
  std::vector<std::string> chain;
  std::vector<std::vector<std::string>> branches, ff, fb;
  std::map<std::string, std::string> roles;
  std::vector<std::string> sums;
  std::vector<EdgeSpec> edges;
  bool operator==(const SystemSpec &) const = default;
};

struct ExperimentConfig {
  std::string name;
  SystemSpec system;
  std::vector<double> setpoints;
  ExcitationSpec excitation;
  FitOrders fit;
  bool order_scan = false;
  ClassifyThresholds classify;
  std::uint64_t seed = 0;
};

namespace detail {

inline json toml_to_json(const toml::node &n) {
  if (const auto *t = n.as_table()) {
    json j = json::object();
    for (const auto &[k, v] : *t) j[std::string(k.str())] = toml_to_json(v);
    return j;
  }
  if (const auto *a = n.as_array()) {
    json j = json::array();
    for (const auto &v : *a) j.push_back(toml_to_json(v));
    return j;
  }
  if (const auto *v = n.as_integer()) return json(v->get());
  if (const auto *v = n.as_floating_point()) return json(v->get());
  if (const auto *v = n.as_boolean()) return json(v->get());
  if (const auto *v = n.as_string()) return json(v->get());
  throw ConfigError("unsupported TOML value (dates and times are not used)");
}

/// Reader with a key path for error messages.
class Reader {
public:
  Reader(const json &j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail("expected a table");
  }

  [[noreturn]] void fail(const std::string &msg) const { throw ConfigError(path_ + ": " + msg); }

  bool has(const std::string &key) const {
    used_.insert(key);
    return j_.contains(key);
  }

  Reader table(const std::string &key) const {
    if (!has(key)) fail("missing table '" + key + "'");
    return Reader(j_.at(key), sub(key));
  }

  const json &raw(const std::string &key) const {
    if (!has(key)) fail("missing key '" + key + "'");
    return j_.at(key);
  }

  double number(const std::string &key) const { return as_number(raw(key), sub(key)); }
  double number(const std::string &key, double fallback) const { return has(key) ? number(key) : fallback; }

  std::size_t count(const std::string &key) const { return as_count(raw(key), sub(key)); }
  std::size_t count(const std::string &key, std::size_t fallback) const { return has(key) ? count(key) : fallback; }

  std::string string(const std::string &key) const {
    const auto &v = raw(key);
    if (!v.is_string()) throw ConfigError(sub(key) + ": expected a string");
    return v.get<std::string>();
  }
  std::string string(const std::string &key, const std::string &fallback) const {
    return has(key) ? string(key) : fallback;
  }

  bool boolean(const std::string &key, bool fallback) const {
    if (!has(key)) return fallback;
    const auto &v = raw(key);
    if (!v.is_boolean()) throw ConfigError(sub(key) + ": expected true or false");
    return v.get<bool>();
  }

  std::vector<double> numbers(const std::string &key) const { return as_numbers(raw(key), sub(key)); }

  std::vector<std::string> strings(const std::string &key) const { return as_strings(raw(key), sub(key)); }

  std::vector<std::vector<std::string>> string_lists(const std::string &key) const {
    const auto &v = raw(key);
    if (!v.is_array()) throw ConfigError(sub(key) + ": expected an array of arrays");
    std::vector<std::vector<std::string>> out;
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(as_strings(v[i], sub(key) + "[" + std::to_string(i) + "]"));
    return out;
  }

  /// Rejects keys that were never looked up.
  void finish() const {
    for (const auto &[k, v] : j_.items())
      if (!used_.count(k)) fail("unknown key '" + k + "'");
  }

  std::string sub(const std::string &key) const { return path_.empty() ? key : path_ + "." + key; }

  static double as_number(const json &v, const std::string &where) {
    if (!v.is_number()) throw ConfigError(where + ": expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw ConfigError(where + ": expected a finite number");
    return d;
  }

  static std::size_t as_count(const json &v, const std::string &where) {
    if (!v.is_number_integer()) throw ConfigError(where + ": expected a nonnegative integer");
    if (v.is_number_unsigned()) return v.get<std::size_t>();
    const auto i = v.get<std::int64_t>();
    if (i < 0) throw ConfigError(where + ": expected a nonnegative integer");
    return static_cast<std::size_t>(i);
  }

  static std::vector<double> as_numbers(const json &v, const std::string &where) {
    if (!v.is_array()) throw ConfigError(where + ": expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(as_number(v[i], where + "[" + std::to_string(i) + "]"));
    return out;
  }

  static std::vector<std::string> as_strings(const json &v, const std::string &where) {
    if (!v.is_array()) throw ConfigError(where + ": expected an array of names");
    std::vector<std::string> out;
    for (const auto &s : v) {
      if (!s.is_string()) throw ConfigError(where + ": expected block names");
      out.push_back(s.get<std::string>());
    }
    return out;
  }

private:
  const json &j_;
  std::string path_;
  mutable std::set<std::string> used_;
};

inline BlockSpec read_block(const Reader &r) {
  if (r.has("num") || r.has("den")) {
    LinearBlockSpec b;
    b.num = r.numbers("num");
    b.den = r.has("den") ? r.numbers("den") : Poly{1.0};
    b.delay = r.count("delay", 0);
    b.stable = r.boolean("stable", true);
    r.finish();
    try {
      (void)RationalTF::make(b.num, b.den, b.delay);
    } catch (const std::invalid_argument &e) {
      r.fail(e.what());
    }
    return b;
  }
  NonlinearBlockSpec b;
  if (r.has("poly")) {
    b.segments = {r.numbers("poly")};
  } else if (r.has("breakpoints")) {
    b.breakpoints = r.numbers("breakpoints");
    b.segments.clear();
    const auto &segs = r.raw("segments");
    if (!segs.is_array()) r.fail("segments must be an array of coefficient arrays");
    for (std::size_t i = 0; i < segs.size(); ++i)
      b.segments.push_back(Reader::as_numbers(segs[i], r.sub("segments") + "[" + std::to_string(i) + "]"));
  } else {
    r.fail("a block needs num/den (linear) or poly / breakpoints+segments (nonlinear)");
  }
  r.finish();
  try {
    if (b.breakpoints.empty()) (void)StaticNL::polynomial(b.segments.front());
    else (void)StaticNL::piecewise(b.breakpoints, b.segments);
  } catch (const std::invalid_argument &e) {
    r.fail(e.what());
  }
  return b;
}

inline SystemSpec read_system(const Reader &r) {
  SystemSpec s;
  const auto topo = topology_from_string(r.string("topology"));
  if (!topo) r.fail("unknown topology (single_branch, parallel_ff, ff_fb_parallel, lfr, symmetric_fffb, custom)");
  s.topology = *topo;
  const auto &blocks = r.raw("blocks");
  if (!blocks.is_object() || blocks.empty()) r.fail("blocks must be a nonempty table");
  for (const auto &[name, spec] : blocks.items()) s.blocks[name] = read_block(Reader(spec, r.sub("blocks." + name)));
  auto role = [&](const char *k, bool required) {
    if (required || r.has(k)) s.roles[k] = r.string(k);
  };
  switch (s.topology) {
  case Topology::single_branch: s.chain = r.strings("chain"); break;
  case Topology::parallel_ff: s.branches = r.string_lists("branches"); break;
  case Topology::ff_fb_parallel:
    s.ff = r.string_lists("ff");
    if (r.has("fb")) s.fb = r.string_lists("fb");
    break;
  case Topology::lfr:
    for (const char *k : {"g1", "g2", "g3", "f"}) role(k, true);
    role("g4", false);
    break;
  case Topology::symmetric_fffb:
    for (const char *k : {"g1", "g2", "f1"}) role(k, true);
    role("f2", false);
    break;
  case Topology::custom: {
    if (r.has("sums")) s.sums = r.strings("sums");
    const auto &edges = r.raw("edges");
    if (!edges.is_array()) r.fail("edges must be an array of tables");
    for (std::size_t i = 0; i < edges.size(); ++i) {
      Reader e(edges[i], r.sub("edges[" + std::to_string(i) + "]"));
      s.edges.push_back({e.string("from"), e.string("to"), e.number("sign", 1.0)});
      e.finish();
    }
    break;
  }
  }
  r.finish();
  return s;
}

inline std::vector<double> read_setpoints(const Reader &r) {
  std::vector<double> out;
  if (r.has("values")) {
    out = r.numbers("values");
  } else {
    const double start = r.number("start"), stop = r.number("stop"), step = r.number("step");
    if (!(step > 0.0) || stop < start) r.fail("need step > 0 and stop >= start");
    const auto n = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9));
    // index times step, not accumulation, so 0:0.1:1 hits 1.0 exactly
    for (std::size_t i = 0; i <= n; ++i) out.push_back(start + static_cast<double>(i) * step);
  }
  r.finish();
  if (out.empty()) r.fail("at least one setpoint is required");
  return out;
}

inline ExcitationSpec read_excitation(const Reader &r) {
  ExcitationSpec x;
  const auto kind = r.string("kind", "multisine");
  if (kind == "multisine") x.kind = ExcitationKind::multisine;
  else if (kind == "gaussian") x.kind = ExcitationKind::gaussian;
  else r.fail("kind must be multisine or gaussian");
  x.samples = r.count("samples", 4096);
  x.records = r.count("records", 8);
  x.eps = r.number("eps", 0.01);
  const auto cls = r.string("class", "s_eps");
  if (cls == "s_eps") x.cls = SignalClass::s_eps;
  else if (cls == "s_delta") x.cls = SignalClass::s_delta;
  else r.fail("class must be s_eps or s_delta");
  const auto phase = r.string("phase", "uniform");
  if (phase == "uniform") x.phase_law = PhaseLaw::uniform;
  else if (phase == "binary") x.phase_law = PhaseLaw::binary;
  else r.fail("phase must be uniform or binary");
  try {
    if (r.has("spectrum")) {
      const auto s = r.table("spectrum");
      x.spectrum = PowerSpectrum(s.numbers("edges"), s.numbers("levels"));
      s.finish();
    } else if (r.has("band")) {
      const auto b = r.numbers("band");
      if (b.size() != 2) r.fail("band must be [lo, hi]");
      x.spectrum = PowerSpectrum::band(b[0], b[1]);
    } else {
      x.spectrum = PowerSpectrum::flat();
    }
  } catch (const std::invalid_argument &e) {
    r.fail(e.what());
  }
  if (r.has("bins")) {
    for (double k : r.numbers("bins")) {
      if (k < 1 || k != std::floor(k)) r.fail("bins must be positive integers");
      x.bins.push_back(static_cast<std::size_t>(k));
    }
  }
  if (r.has("warmup")) {
    const auto &w = r.raw("warmup");
    if (w.is_string() && w.get<std::string>() == "auto") x.warmup.reset();
    else x.warmup = Reader::as_count(w, r.sub("warmup"));
  }
  x.noise_std = r.number("noise_std", 0.0);
  const auto grid = r.string("grid", "full");
  if (grid == "odd") x.odd_bins = true;
  else if (grid != "full") r.fail("grid must be full or odd");
  r.finish();
  if (!(x.eps > 0.0)) r.fail("eps must be positive");
  if (x.samples < 4 || x.samples % 2) r.fail("samples must be an even number >= 4");
  if (x.records == 0) r.fail("records must be at least 1");
  if (x.noise_std < 0.0) r.fail("noise_std must be nonnegative");
  for (auto k : x.bins)
    if (k >= x.samples / 2) r.fail("bins must lie below samples / 2");
  if (excited_bins(x).empty()) r.fail("the spectrum excites no bin");
  return x;
}

inline json block_to_json(const BlockSpec &b) {
  if (const auto *l = std::get_if<LinearBlockSpec>(&b))
    return {{"num", l->num}, {"den", l->den}, {"delay", l->delay}, {"stable", l->stable}};
  const auto &n = std::get<NonlinearBlockSpec>(b);
  if (n.breakpoints.empty()) return {{"poly", n.segments.front()}};
  return {{"breakpoints", n.breakpoints}, {"segments", n.segments}};
}

inline Block make_block(const BlockSpec &b) {
  if (const auto *l = std::get_if<LinearBlockSpec>(&b)) return RationalTF::make(l->num, l->den, l->delay);
  const auto &n = std::get<NonlinearBlockSpec>(b);
  if (n.breakpoints.empty()) return StaticNL::polynomial(n.segments.front());
  return StaticNL::piecewise(n.breakpoints, n.segments);
}

} // namespace detail

inline ExperimentConfig config_from_json(const json &j) {
  detail::Reader r(j, "");
  ExperimentConfig c;
  c.name = r.string("name", "");
  c.seed = r.has("seed") ? static_cast<std::uint64_t>(r.count("seed")) : 0;
  c.system = detail::read_system(r.table("system"));
  c.setpoints = detail::read_setpoints(r.table("setpoints"));
  c.excitation = r.has("excitation") ? detail::read_excitation(r.table("excitation"))
                                     : detail::read_excitation(detail::Reader(json::object(), "excitation"));
  if (r.has("fit")) {
    const auto f = r.table("fit");
    c.fit.nb = f.count("nb");
    c.fit.na = f.count("na");
    c.fit.delay = f.count("delay", 0);
    c.order_scan = f.boolean("order_scan", false);
    f.finish();
  } else {
    r.fail("missing table 'fit' (model orders nb, na)");
  }
  if (r.has("classify")) {
    const auto t = r.table("classify");
    c.classify.tol_fixed = t.number("tol_fixed", c.classify.tol_fixed);
    c.classify.tol_move = t.number("tol_move", c.classify.tol_move);
    t.finish();
    if (!(c.classify.tol_fixed > 0.0) || !(c.classify.tol_move >= c.classify.tol_fixed))
      t.fail("need 0 < tol_fixed <= tol_move");
  }
  r.finish();
  return c;
}

/// Canonical JSON form; config_from_json(config_to_json(c)) reproduces c.
inline json config_to_json(const ExperimentConfig &c) {
  json sys = {{"topology", to_string(c.system.topology)}};
  json blocks = json::object();
  for (const auto &[name, b] : c.system.blocks) blocks[name] = detail::block_to_json(b);
  sys["blocks"] = blocks;
  switch (c.system.topology) {
  case Topology::single_branch: sys["chain"] = c.system.chain; break;
  case Topology::parallel_ff: sys["branches"] = c.system.branches; break;
  case Topology::ff_fb_parallel:
    sys["ff"] = c.system.ff;
    sys["fb"] = c.system.fb;
    break;
  case Topology::lfr:
  case Topology::symmetric_fffb:
    for (const auto &[k, v] : c.system.roles) sys[k] = v;
    break;
  case Topology::custom: {
    sys["sums"] = c.system.sums;
    json edges = json::array();
    for (const auto &e : c.system.edges) edges.push_back({{"from", e.from}, {"to", e.to}, {"sign", e.sign}});
    sys["edges"] = edges;
    break;
  }
  }
  const auto &x = c.excitation;
  json exc = {{"kind", x.kind == ExcitationKind::multisine ? "multisine" : "gaussian"},
              {"samples", x.samples},
              {"records", x.records},
              {"eps", x.eps},
              {"class", x.cls == SignalClass::s_delta ? "s_delta" : "s_eps"},
              {"phase", x.phase_law == PhaseLaw::binary ? "binary" : "uniform"},
              {"spectrum", {{"edges", x.spectrum.edges()}, {"levels", x.spectrum.levels()}}},
              {"noise_std", x.noise_std},
              {"grid", x.odd_bins ? "odd" : "full"}};
  if (!x.bins.empty()) exc["bins"] = x.bins;
  exc["warmup"] = x.warmup ? json(*x.warmup) : json("auto");
  json j = {{"system", sys},
            {"setpoints", {{"values", c.setpoints}}},
            {"excitation", exc},
            {"fit", {{"nb", c.fit.nb}, {"na", c.fit.na}, {"delay", c.fit.delay}, {"order_scan", c.order_scan}}},
            {"classify", {{"tol_fixed", c.classify.tol_fixed}, {"tol_move", c.classify.tol_move}}},
            {"seed", c.seed}};
  if (!c.name.empty()) j["name"] = c.name;
  return j;
}

inline json parse_config_text(const std::string &text, bool is_json) {
  if (is_json) {
    try {
      return json::parse(text);
    } catch (const json::parse_error &e) {
      throw ConfigError(std::string("JSON parse error: ") + e.what());
    }
  }
  try {
    const auto tbl = toml::parse(text);
    return detail::toml_to_json(tbl);
  } catch (const toml::parse_error &e) {
    std::ostringstream os;
    os << "TOML parse error at line " << e.source().begin.line << ": " << e.description();
    throw ConfigError(os.str());
  }
}

/// Reads a .toml or .json experiment file.
inline ExperimentConfig load_config(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  const bool is_json = path.extension() == ".json";
  try {
    return config_from_json(parse_config_text(ss.str(), is_json));
  } catch (const ConfigError &e) {
    throw ConfigError(path.filename().string() + ": " + e.what());
  }
}

/// Builds the block graph; node names follow the config block names.
inline BlockGraph build_graph(const SystemSpec &s) {
  auto block = [&](const std::string &name) -> Block {
    const auto it = s.blocks.find(name);
    if (it == s.blocks.end()) throw ConfigError("system refers to undefined block '" + name + "'");
    return detail::make_block(it->second);
  };
  auto blocks_of = [&](const std::vector<std::string> &names) {
    std::vector<Block> out;
    for (const auto &n : names) out.push_back(block(n));
    return out;
  };
  auto linear = [&](const std::string &role) {
    const auto b = block(s.roles.at(role));
    if (!std::holds_alternative<RationalTF>(b)) throw ConfigError("role " + role + " needs a linear block");
    return std::get<RationalTF>(b);
  };
  auto nonlinear = [&](const std::string &role) {
    const auto b = block(s.roles.at(role));
    if (!std::holds_alternative<StaticNL>(b)) throw ConfigError("role " + role + " needs a nonlinear block");
    return std::get<StaticNL>(b);
  };
  auto stable = [&](const std::string &name) {
    const auto *l = std::get_if<LinearBlockSpec>(&s.blocks.at(name));
    return !l || l->stable;
  };

  BlockGraph g;
  try {
    std::vector<std::pair<std::size_t, std::string>> names;
    auto name_chain = [&](const Chain &c, const std::vector<std::string> &n) {
      for (std::size_t i = 0; i < c.size(); ++i) names.emplace_back(c[i], n[i]);
    };
    auto lists = [&](const std::vector<std::vector<std::string>> &l) {
      std::vector<std::vector<Block>> out;
      for (const auto &c : l) out.push_back(blocks_of(c));
      return out;
    };
    switch (s.topology) {
    case Topology::single_branch:
      g = build_single_branch(blocks_of(s.chain));
      name_chain(std::get<SingleBranchLayout>(g.layout).chain, s.chain);
      break;
    case Topology::parallel_ff:
      g = build_parallel(lists(s.branches));
      for (std::size_t b = 0; b < s.branches.size(); ++b)
        name_chain(std::get<ParallelLayout>(g.layout).branches[b], s.branches[b]);
      break;
    case Topology::ff_fb_parallel: {
      g = build_ff_fb_parallel(lists(s.ff), lists(s.fb));
      const auto &l = std::get<FeedbackLayout>(g.layout);
      for (std::size_t b = 0; b < s.ff.size(); ++b) name_chain(l.ff[b], s.ff[b]);
      for (std::size_t b = 0; b < s.fb.size(); ++b) name_chain(l.fb[b], s.fb[b]);
      break;
    }
    case Topology::lfr: {
      const auto has4 = s.roles.count("g4") > 0;
      g = build_lfr(linear("g1"), linear("g2"), linear("g3"),
                    has4 ? std::optional<RationalTF>(linear("g4")) : std::nullopt, nonlinear("f"));
      const auto &l = std::get<LfrLayout>(g.layout);
      names = {{l.g1, s.roles.at("g1")}, {l.g2, s.roles.at("g2")}, {l.g3, s.roles.at("g3")}, {l.f, s.roles.at("f")}};
      if (l.g4) names.emplace_back(*l.g4, s.roles.at("g4"));
      break;
    }
    case Topology::symmetric_fffb: {
      if (s.roles.count("f2")) g = build_symmetric_fffb(linear("g1"), linear("g2"), nonlinear("f1"), nonlinear("f2"));
      else g = build_symmetric_fffb(linear("g1"), linear("g2"), nonlinear("f1"));
      const auto &l = std::get<SymmetricLayout>(g.layout);
      names = {{l.g1, s.roles.at("g1")}, {l.g2, s.roles.at("g2")}, {l.f1, s.roles.at("f1")}};
      if (l.f2) names.emplace_back(*l.f2, s.roles.at("f2"));
      break;
    }
    case Topology::custom: {
      std::map<std::string, std::size_t> ids;
      ids["in"] = g.add_input("in");
      for (const auto &sum : s.sums) {
        if (ids.count(sum)) throw ConfigError("duplicate node name '" + sum + "'");
        ids[sum] = g.add_sum(sum);
      }
      for (const auto &[name, spec] : s.blocks) {
        if (ids.count(name)) throw ConfigError("duplicate node name '" + name + "'");
        const auto b = detail::make_block(spec);
        if (const auto *tf = std::get_if<RationalTF>(&b)) ids[name] = g.add_linear(*tf, name, stable(name));
        else ids[name] = g.add_nonlinear(std::get<StaticNL>(b), name);
      }
      ids["out"] = g.add_output("out");
      for (const auto &e : s.edges) {
        if (!ids.count(e.from)) throw ConfigError("edge from unknown node '" + e.from + "'");
        if (!ids.count(e.to)) throw ConfigError("edge to unknown node '" + e.to + "'");
        g.connect(ids.at(e.from), ids.at(e.to), e.sign);
      }
      g.topology = Topology::custom;
      break;
    }
    }
    for (const auto &[id, name] : names) {
      g.nodes()[id].name = name;
      g.nodes()[id].declared_stable = stable(name);
    }
  } catch (const std::invalid_argument &e) {
    throw ConfigError(e.what());
  } catch (const std::out_of_range &e) {
    throw ConfigError(std::string("incomplete system description: ") + e.what());
  }
  const auto v = validate_graph(g);
  if (!v.empty()) throw ConfigError("invalid system: " + format_violations(v));
  return g;
}

} // namespace blockid
