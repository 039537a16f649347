#pragma once

// Directed interconnection of linear blocks, static nonlinearities and sum
// junctions. Builders record the family layout so the analytic linearizer
// can compose the closed-form transfer function of each family.

#include <algorithm>
#include <cstddef>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "blockid/static_nl.hpp"
#include "blockid/transfer_function.hpp"

namespace blockid {

enum class NodeKind { input, output, linear, nonlinear, sum };

struct Node {
  NodeKind kind = NodeKind::sum;
  std::string name;
  RationalTF tf;  // linear nodes
  StaticNL nl;    // nonlinear nodes
  bool declared_stable = true;
};

/// Signal flows from `from` into `to`, multiplied by `sign` (+1 or -1).
struct Edge {
  std::size_t from = 0;
  std::size_t to = 0;
  double sign = 1.0;
};

enum class Topology { single_branch, parallel_ff, ff_fb_parallel, lfr, symmetric_fffb, custom };

/// Node ids of the linear/nonlinear blocks of one cascade, in signal order.
/// An empty chain is a plain wire.
using Chain = std::vector<std::size_t>;

struct SingleBranchLayout {
  Chain chain;
};
struct ParallelLayout {
  std::vector<Chain> branches;
};
struct FeedbackLayout {
  std::vector<Chain> ff;
  std::vector<Chain> fb;
};
struct LfrLayout {
  std::size_t g1, g2, g3;
  std::optional<std::size_t> g4;
  std::size_t f;
};
/// One nonlinearity: y = G1 e + f(e), e = r - G2 f(e).
/// Two nonlinearities: y = e + G1 f1(e), e = r - G2 f2(e).
struct SymmetricLayout {
  std::size_t g1, g2, f1;
  std::optional<std::size_t> f2;
};

using Layout = std::variant<std::monostate, SingleBranchLayout, ParallelLayout, FeedbackLayout, LfrLayout,
                            SymmetricLayout>;

/// A block of a cascade handed to the builders.
using Block = std::variant<RationalTF, StaticNL>;

inline const char *to_string(Topology t) {
  switch (t) {
  case Topology::single_branch: return "single_branch";
  case Topology::parallel_ff: return "parallel_ff";
  case Topology::ff_fb_parallel: return "ff_fb_parallel";
  case Topology::lfr: return "lfr";
  case Topology::symmetric_fffb: return "symmetric_fffb";
  case Topology::custom: return "custom";
  }
  return "custom";
}

inline std::optional<Topology> topology_from_string(const std::string &s) {
  for (auto t : {Topology::single_branch, Topology::parallel_ff, Topology::ff_fb_parallel, Topology::lfr,
                 Topology::symmetric_fffb, Topology::custom})
    if (s == to_string(t)) return t;
  return std::nullopt;
}

class BlockGraph {
public:
  std::size_t add_node(Node n) {
    if (n.name.empty()) n.name = "n" + std::to_string(nodes_.size());
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
  }
  std::size_t add_input(std::string name = "in") { return add_node({NodeKind::input, std::move(name), {}, {}, true}); }
  std::size_t add_output(std::string name = "out") { return add_node({NodeKind::output, std::move(name), {}, {}, true}); }
  std::size_t add_sum(std::string name = {}) { return add_node({NodeKind::sum, std::move(name), {}, {}, true}); }
  std::size_t add_linear(RationalTF tf, std::string name = {}, bool declared_stable = true) {
    return add_node({NodeKind::linear, std::move(name), std::move(tf), {}, declared_stable});
  }
  std::size_t add_nonlinear(StaticNL nl, std::string name = {}) {
    return add_node({NodeKind::nonlinear, std::move(name), {}, std::move(nl), true});
  }
  void connect(std::size_t from, std::size_t to, double sign = 1.0) { edges_.push_back({from, to, sign}); }

  const std::vector<Node> &nodes() const { return nodes_; }
  std::vector<Node> &nodes() { return nodes_; }
  const std::vector<Edge> &edges() const { return edges_; }
  const Node &node(std::size_t i) const { return nodes_.at(i); }

  Topology topology = Topology::custom;
  Layout layout;

  std::optional<std::size_t> find(NodeKind kind) const {
    for (std::size_t i = 0; i < nodes_.size(); ++i)
      if (nodes_[i].kind == kind) return i;
    return std::nullopt;
  }
  std::optional<std::size_t> find(const std::string &name) const {
    for (std::size_t i = 0; i < nodes_.size(); ++i)
      if (nodes_[i].name == name) return i;
    return std::nullopt;
  }
  std::size_t input() const { return find(NodeKind::input).value(); }
  std::size_t output() const { return find(NodeKind::output).value(); }

  std::vector<std::size_t> in_edges(std::size_t n) const {
    std::vector<std::size_t> out;
    for (std::size_t e = 0; e < edges_.size(); ++e)
      if (edges_[e].to == n) out.push_back(e);
    return out;
  }

  std::vector<std::size_t> nonlinear_nodes() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < nodes_.size(); ++i)
      if (nodes_[i].kind == NodeKind::nonlinear) out.push_back(i);
    return out;
  }

  /// Breaks instantaneous propagation: a linear block without feedthrough.
  bool is_delaying(std::size_t n) const {
    return nodes_[n].kind == NodeKind::linear && !nodes_[n].tf.has_feedthrough();
  }

private:
  std::vector<Node> nodes_;
  std::vector<Edge> edges_;
};

enum class ViolationKind { structure, disconnected, algebraic_loop, unstable_block, topology_mismatch };

struct Violation {
  ViolationKind kind;
  std::string message;
};

namespace detail {

/// Kahn order of the graph restricted to edges accepted by `keep`; nodes on
/// cycles are left out.
template <class Keep>
std::vector<std::size_t> topo_order(const BlockGraph &g, Keep keep) {
  const std::size_t n = g.nodes().size();
  std::vector<std::size_t> indeg(n, 0);
  std::vector<std::vector<std::size_t>> succ(n);
  for (const auto &e : g.edges())
    if (keep(e)) {
      ++indeg[e.to];
      succ[e.from].push_back(e.to);
    }
  std::vector<std::size_t> order, ready;
  for (std::size_t i = n; i-- > 0;)
    if (indeg[i] == 0) ready.push_back(i);
  while (!ready.empty()) {
    const std::size_t v = ready.back();
    ready.pop_back();
    order.push_back(v);
    for (auto it = succ[v].rbegin(); it != succ[v].rend(); ++it)
      if (--indeg[*it] == 0) ready.push_back(*it);
  }
  return order;
}

/// Edges along which a sample propagates within the same time step.
inline auto instantaneous(const BlockGraph &g) {
  return [&g](const Edge &e) { return !g.is_delaying(e.to); };
}

/// Strongly connected component id per node (Tarjan).
inline std::vector<std::size_t> scc_ids(const BlockGraph &g, std::vector<std::size_t> *sizes = nullptr) {
  const std::size_t n = g.nodes().size();
  std::vector<std::vector<std::size_t>> succ(n);
  for (const auto &e : g.edges()) succ[e.from].push_back(e.to);
  constexpr std::size_t unvisited = static_cast<std::size_t>(-1);
  std::vector<std::size_t> index(n, unvisited), low(n, 0), comp(n, unvisited), stack;
  std::vector<bool> on_stack(n, false);
  std::size_t counter = 0, ncomp = 0;
  std::vector<std::size_t> comp_size;
  auto strong = [&](auto &&self, std::size_t v) -> void {
    index[v] = low[v] = counter++;
    stack.push_back(v);
    on_stack[v] = true;
    for (std::size_t w : succ[v]) {
      if (index[w] == unvisited) {
        self(self, w);
        low[v] = std::min(low[v], low[w]);
      } else if (on_stack[w]) {
        low[v] = std::min(low[v], index[w]);
      }
    }
    if (low[v] == index[v]) {
      std::size_t size = 0;
      while (true) {
        const std::size_t w = stack.back();
        stack.pop_back();
        on_stack[w] = false;
        comp[w] = ncomp;
        ++size;
        if (w == v) break;
      }
      comp_size.push_back(size);
      ++ncomp;
    }
  };
  for (std::size_t v = 0; v < n; ++v)
    if (index[v] == unvisited) strong(strong, v);
  if (sizes) *sizes = comp_size;
  return comp;
}

/// Nodes lying on at least one directed cycle.
inline std::vector<bool> on_cycle(const BlockGraph &g) {
  std::vector<std::size_t> sizes;
  const auto comp = scc_ids(g, &sizes);
  std::vector<bool> out(g.nodes().size(), false);
  for (std::size_t v = 0; v < out.size(); ++v) out[v] = sizes[comp[v]] > 1;
  for (const auto &e : g.edges())
    if (e.from == e.to) out[e.from] = true;
  return out;
}

inline std::string describe_cycle(const BlockGraph &g, const std::vector<bool> &left) {
  // Every node Kahn could not order has an instantaneous predecessor that is
  // also unordered, so walking predecessors must close a cycle.
  const std::size_t n = g.nodes().size();
  std::size_t v = n;
  for (std::size_t i = 0; i < n; ++i)
    if (left[i]) {
      v = i;
      break;
    }
  if (v == n) return {};
  std::vector<std::size_t> path;
  std::vector<std::size_t> pos(n, n);
  while (pos[v] == n) {
    pos[v] = path.size();
    path.push_back(v);
    std::size_t prev = n;
    for (const auto &e : g.edges())
      if (e.to == v && left[e.from] && !g.is_delaying(e.to)) {
        prev = e.from;
        break;
      }
    if (prev == n) return g.node(v).name;
    v = prev;
  }
  std::vector<std::size_t> cycle(path.begin() + static_cast<std::ptrdiff_t>(pos[v]), path.end());
  std::reverse(cycle.begin(), cycle.end());
  std::ostringstream os;
  for (auto c : cycle) os << g.node(c).name << " -> ";
  os << g.node(cycle.front()).name;
  return os.str();
}

} // namespace detail

/// Structural diagnostics; an empty list means the graph is usable.
inline std::vector<Violation> validate_graph(const BlockGraph &g) {
  std::vector<Violation> out;
  const auto &nodes = g.nodes();
  const std::size_t n = nodes.size();
  std::size_t inputs = 0, outputs = 0;
  for (const auto &nd : nodes) {
    inputs += nd.kind == NodeKind::input;
    outputs += nd.kind == NodeKind::output;
  }
  if (inputs != 1) out.push_back({ViolationKind::structure, "graph needs exactly one input node, found " + std::to_string(inputs)});
  if (outputs != 1) out.push_back({ViolationKind::structure, "graph needs exactly one output node, found " + std::to_string(outputs)});
  for (const auto &e : g.edges())
    if (e.from >= n || e.to >= n) {
      out.push_back({ViolationKind::structure, "edge refers to a missing node"});
      return out;
    }
  for (std::size_t i = 0; i < n; ++i) {
    const auto deg = g.in_edges(i).size();
    const auto &nd = nodes[i];
    if (nd.kind == NodeKind::input && deg != 0)
      out.push_back({ViolationKind::structure, "input node '" + nd.name + "' has incoming edges"});
    if ((nd.kind == NodeKind::linear || nd.kind == NodeKind::nonlinear || nd.kind == NodeKind::output) && deg != 1)
      out.push_back({ViolationKind::structure, "node '" + nd.name + "' needs exactly one incoming edge, has " + std::to_string(deg)});
    if (nd.kind == NodeKind::sum && deg == 0)
      out.push_back({ViolationKind::structure, "sum node '" + nd.name + "' has no inputs"});
    if (nd.kind == NodeKind::linear && nd.declared_stable && !nd.tf.is_stable())
      out.push_back({ViolationKind::unstable_block, "block '" + nd.name + "' is declared stable but has a pole on or outside the unit circle"});
  }
  if (inputs != 1 || outputs != 1) return out;

  // reachability: forward from input, backward from output
  std::vector<bool> fwd(n, false), bwd(n, false);
  std::vector<std::size_t> work{g.input()};
  fwd[g.input()] = true;
  while (!work.empty()) {
    const auto v = work.back();
    work.pop_back();
    for (const auto &e : g.edges())
      if (e.from == v && !fwd[e.to]) {
        fwd[e.to] = true;
        work.push_back(e.to);
      }
  }
  work = {g.output()};
  bwd[g.output()] = true;
  while (!work.empty()) {
    const auto v = work.back();
    work.pop_back();
    for (const auto &e : g.edges())
      if (e.to == v && !bwd[e.from]) {
        bwd[e.from] = true;
        work.push_back(e.from);
      }
  }
  for (std::size_t i = 0; i < n; ++i)
    if (!fwd[i] || !bwd[i])
      out.push_back({ViolationKind::disconnected, "node '" + nodes[i].name + "' is not on a path from input to output"});

  const auto order = detail::topo_order(g, detail::instantaneous(g));
  if (order.size() != n) {
    std::vector<bool> left(n, true);
    for (auto v : order) left[v] = false;
    out.push_back({ViolationKind::algebraic_loop, "algebraic loop without delay: " + detail::describe_cycle(g, left)});
  }

  // layout consistency
  auto check_kind = [&](std::size_t id, NodeKind k, const char *what) {
    if (id >= n || nodes[id].kind != k)
      out.push_back({ViolationKind::topology_mismatch, std::string("layout entry for ") + what + " does not name a matching node"});
  };
  auto check_chain = [&](const Chain &c) {
    for (auto id : c)
      if (id >= n || (nodes[id].kind != NodeKind::linear && nodes[id].kind != NodeKind::nonlinear))
        out.push_back({ViolationKind::topology_mismatch, "layout chain names a node that is not a block"});
  };
  const bool has_layout = !std::holds_alternative<std::monostate>(g.layout);
  switch (g.topology) {
  case Topology::custom:
    break;
  case Topology::single_branch:
    if (auto *l = std::get_if<SingleBranchLayout>(&g.layout)) check_chain(l->chain);
    else out.push_back({ViolationKind::topology_mismatch, "single_branch tag without a single-branch layout"});
    break;
  case Topology::parallel_ff:
    if (auto *l = std::get_if<ParallelLayout>(&g.layout)) {
      if (l->branches.empty()) out.push_back({ViolationKind::topology_mismatch, "parallel layout without branches"});
      for (const auto &c : l->branches) check_chain(c);
    } else {
      out.push_back({ViolationKind::topology_mismatch, "parallel_ff tag without a parallel layout"});
    }
    break;
  case Topology::ff_fb_parallel:
    if (auto *l = std::get_if<FeedbackLayout>(&g.layout)) {
      if (l->ff.empty()) out.push_back({ViolationKind::topology_mismatch, "feedback layout without feed-forward branches"});
      for (const auto &c : l->ff) check_chain(c);
      for (const auto &c : l->fb) check_chain(c);
    } else {
      out.push_back({ViolationKind::topology_mismatch, "ff_fb_parallel tag without a feedback layout"});
    }
    break;
  case Topology::lfr:
    if (auto *l = std::get_if<LfrLayout>(&g.layout)) {
      check_kind(l->g1, NodeKind::linear, "G1");
      check_kind(l->g2, NodeKind::linear, "G2");
      check_kind(l->g3, NodeKind::linear, "G3");
      if (l->g4) check_kind(*l->g4, NodeKind::linear, "G4");
      check_kind(l->f, NodeKind::nonlinear, "f");
    } else {
      out.push_back({ViolationKind::topology_mismatch, "lfr tag without an LFR layout"});
    }
    break;
  case Topology::symmetric_fffb:
    if (auto *l = std::get_if<SymmetricLayout>(&g.layout)) {
      check_kind(l->g1, NodeKind::linear, "G1");
      check_kind(l->g2, NodeKind::linear, "G2");
      check_kind(l->f1, NodeKind::nonlinear, "f1");
      if (l->f2) check_kind(*l->f2, NodeKind::nonlinear, "f2");
    } else {
      out.push_back({ViolationKind::topology_mismatch, "symmetric_fffb tag without a symmetric layout"});
    }
    break;
  }
  if (g.topology == Topology::custom && has_layout)
    out.push_back({ViolationKind::topology_mismatch, "custom graphs carry no family layout"});
  return out;
}

inline std::string format_violations(const std::vector<Violation> &v) {
  std::string s;
  for (const auto &x : v) s += (s.empty() ? "" : "; ") + x.message;
  return s;
}

// ---------------------------------------------------------------- builders

namespace detail {

inline Chain add_chain(BlockGraph &g, const std::vector<Block> &blocks, const std::string &prefix,
                       std::size_t from, std::size_t &last) {
  Chain chain;
  last = from;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const std::string name = prefix + std::to_string(i + 1);
    std::size_t id = 0;
    if (const auto *tf = std::get_if<RationalTF>(&blocks[i])) id = g.add_linear(*tf, name);
    else id = g.add_nonlinear(std::get<StaticNL>(blocks[i]), name);
    g.connect(last, id);
    chain.push_back(id);
    last = id;
  }
  return chain;
}

inline BlockGraph checked(BlockGraph g) {
  const auto v = validate_graph(g);
  if (!v.empty()) throw std::invalid_argument("invalid block graph: " + format_violations(v));
  return g;
}

} // namespace detail

/// Cascade of blocks in the order given.
inline BlockGraph build_single_branch(const std::vector<Block> &blocks) {
  BlockGraph g;
  const auto in = g.add_input();
  std::size_t last = in;
  SingleBranchLayout layout{detail::add_chain(g, blocks, "b", in, last)};
  const auto out = g.add_output();
  g.connect(last, out);
  g.topology = Topology::single_branch;
  g.layout = layout;
  return detail::checked(std::move(g));
}

/// Linear block followed by a static nonlinearity.
inline BlockGraph build_wiener(const RationalTF &g, const StaticNL &f) { return build_single_branch({g, f}); }

inline BlockGraph build_hammerstein(const StaticNL &f, const RationalTF &g) { return build_single_branch({f, g}); }

inline BlockGraph build_wiener_hammerstein(const RationalTF &g1, const StaticNL &f, const RationalTF &g2) {
  return build_single_branch({g1, f, g2});
}

/// Sum of cascades driven by the same input.
inline BlockGraph build_parallel(const std::vector<std::vector<Block>> &branches) {
  if (branches.empty()) throw std::invalid_argument("parallel structure needs at least one branch");
  BlockGraph g;
  const auto in = g.add_input();
  const auto sum = g.add_sum("sum_y");
  ParallelLayout layout;
  for (std::size_t b = 0; b < branches.size(); ++b) {
    std::size_t last = in;
    layout.branches.push_back(detail::add_chain(g, branches[b], "p" + std::to_string(b + 1) + "_", in, last));
    g.connect(last, sum);
  }
  const auto out = g.add_output();
  g.connect(sum, out);
  g.topology = Topology::parallel_ff;
  g.layout = layout;
  return detail::checked(std::move(g));
}

/// Parallel feed-forward cascades closed by parallel feedback cascades:
/// e = r - sum_j FB_j(y), y = sum_i FF_i(e).
inline BlockGraph build_ff_fb_parallel(const std::vector<std::vector<Block>> &ff,
                                       const std::vector<std::vector<Block>> &fb) {
  if (ff.empty()) throw std::invalid_argument("feed-forward path needs at least one branch");
  BlockGraph g;
  const auto in = g.add_input();
  const auto err = g.add_sum("sum_e");
  const auto ysum = g.add_sum("sum_y");
  g.connect(in, err);
  FeedbackLayout layout;
  for (std::size_t b = 0; b < ff.size(); ++b) {
    std::size_t last = err;
    layout.ff.push_back(detail::add_chain(g, ff[b], "ff" + std::to_string(b + 1) + "_", err, last));
    g.connect(last, ysum);
  }
  if (!fb.empty()) {
    const auto fbsum = g.add_sum("sum_fb");
    for (std::size_t b = 0; b < fb.size(); ++b) {
      std::size_t last = ysum;
      layout.fb.push_back(detail::add_chain(g, fb[b], "fb" + std::to_string(b + 1) + "_", ysum, last));
      g.connect(last, fbsum);
    }
    g.connect(fbsum, err, -1.0);
  }
  const auto out = g.add_output();
  g.connect(ysum, out);
  g.topology = Topology::ff_fb_parallel;
  g.layout = layout;
  return detail::checked(std::move(g));
}

/// Linear fractional representation: v = G1 r - G3 w, w = f(v),
/// y = G2 w + G4 r (G4 omitted when absent).
inline BlockGraph build_lfr(const RationalTF &g1, const RationalTF &g2, const RationalTF &g3,
                            const std::optional<RationalTF> &g4, const StaticNL &f) {
  BlockGraph g;
  const auto in = g.add_input();
  const auto n1 = g.add_linear(g1, "G1");
  const auto vsum = g.add_sum("sum_v");
  const auto nf = g.add_nonlinear(f, "f");
  const auto n2 = g.add_linear(g2, "G2");
  const auto n3 = g.add_linear(g3, "G3");
  const auto ysum = g.add_sum("sum_y");
  g.connect(in, n1);
  g.connect(n1, vsum);
  g.connect(n3, vsum, -1.0);
  g.connect(vsum, nf);
  g.connect(nf, n2);
  g.connect(nf, n3);
  g.connect(n2, ysum);
  LfrLayout layout{n1, n2, n3, std::nullopt, nf};
  if (g4) {
    const auto n4 = g.add_linear(*g4, "G4");
    g.connect(in, n4);
    g.connect(n4, ysum);
    layout.g4 = n4;
  }
  const auto out = g.add_output();
  g.connect(ysum, out);
  g.topology = Topology::lfr;
  g.layout = layout;
  return detail::checked(std::move(g));
}

/// Symmetric FF-FB structure with one nonlinearity:
/// e = r - G2 f(e), y = G1 e + f(e).
inline BlockGraph build_symmetric_fffb(const RationalTF &g1, const RationalTF &g2, const StaticNL &f) {
  BlockGraph g;
  const auto in = g.add_input();
  const auto err = g.add_sum("sum_e");
  const auto nf = g.add_nonlinear(f, "f");
  const auto n1 = g.add_linear(g1, "G1");
  const auto n2 = g.add_linear(g2, "G2");
  const auto ysum = g.add_sum("sum_y");
  g.connect(in, err);
  g.connect(err, nf);
  g.connect(err, n1);
  g.connect(nf, n2);
  g.connect(n2, err, -1.0);
  g.connect(n1, ysum);
  g.connect(nf, ysum);
  const auto out = g.add_output();
  g.connect(ysum, out);
  g.topology = Topology::symmetric_fffb;
  g.layout = SymmetricLayout{n1, n2, nf, std::nullopt};
  return detail::checked(std::move(g));
}

/// Symmetric FF-FB structure with two nonlinearities:
/// e = r - G2 f2(e), y = e + G1 f1(e).
inline BlockGraph build_symmetric_fffb(const RationalTF &g1, const RationalTF &g2, const StaticNL &f1,
                                       const StaticNL &f2) {
  BlockGraph g;
  const auto in = g.add_input();
  const auto err = g.add_sum("sum_e");
  const auto nf1 = g.add_nonlinear(f1, "f1");
  const auto nf2 = g.add_nonlinear(f2, "f2");
  const auto n1 = g.add_linear(g1, "G1");
  const auto n2 = g.add_linear(g2, "G2");
  const auto ysum = g.add_sum("sum_y");
  g.connect(in, err);
  g.connect(err, nf1);
  g.connect(nf1, n1);
  g.connect(err, nf2);
  g.connect(nf2, n2);
  g.connect(n2, err, -1.0);
  g.connect(err, ysum);
  g.connect(n1, ysum);
  const auto out = g.add_output();
  g.connect(ysum, out);
  g.topology = Topology::symmetric_fffb;
  g.layout = SymmetricLayout{n1, n2, nf1, nf2};
  return detail::checked(std::move(g));
}

} // namespace blockid
