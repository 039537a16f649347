#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "blockid/linearize.hpp"
#include "blockid/rootlocus.hpp"
#include "fixtures.hpp"

using namespace blockid;
namespace fx = blockid::fixtures;

namespace {

bool contains(const std::vector<Complex> &roots, Complex v, double tol = 1e-10) {
  for (const auto &r : roots)
    if (std::abs(r - v) < tol) return true;
  return false;
}

std::vector<Complex> nonorigin(std::vector<Complex> r) {
  std::erase_if(r, [](const Complex &z) { return std::abs(z) < kOriginRadius; });
  poly::sort_roots(r);
  return r;
}

LinearizedModel lin(const BlockGraph &g, double r) { return linearize_graph(g, solve_setpoint(g, r)); }

LocusClassification analytic_classes(const BlockGraph &g, const std::vector<double> &setpoints) {
  std::vector<RootSet> sets;
  for (double r : setpoints) sets.push_back(roots(lin(g, r).tf, r));
  return classify_rootsets(sets, {1e-8, 1e-6});
}

void expect_same_response(const BlockGraph &g, double r) {
  const auto op = solve_setpoint(g, r);
  const auto m = linearize_graph(g, op);
  const std::vector<double> f{0.0, 0.013, 0.1, 0.27, 0.49};
  const auto numeric = linearized_response(g, op, f);
  for (std::size_t i = 0; i < f.size(); ++i)
    EXPECT_LT(std::abs(numeric[i] - m.tf.at(f[i])), 1e-10 * (1.0 + std::abs(numeric[i]))) << "f = " << f[i];
}

} // namespace

TEST(NlSlope, SmoothPolynomial) {
  const auto s = nl_slope(fx::f1(), 1.0);
  EXPECT_NEAR(s.eps_lin, 0.1, 1e-15);
  ASSERT_TRUE(s.delta_lin.has_value());
  EXPECT_NEAR(*s.delta_lin, 0.1, 1e-15);
  EXPECT_EQ(s.regularity, Regularity::smooth);
  EXPECT_EQ(s.left, s.right);
}

TEST(NlSlope, KinkAveragesOneSidedSlopes) {
  const auto s = nl_slope(StaticNL::abs(), 0.0);
  EXPECT_EQ(s.regularity, Regularity::kink);
  EXPECT_EQ(s.eps_lin, 0.0);
  EXPECT_FALSE(s.delta_lin.has_value());
  EXPECT_EQ(s.left, -1.0);
  EXPECT_EQ(s.right, 1.0);
  EXPECT_EQ(nl_slope(StaticNL::kink(1.0, 2.0), 0.0).eps_lin, 1.5);
}

TEST(NlSlope, JumpIsInfinite) {
  const auto s = nl_slope(StaticNL::step(), 0.0);
  EXPECT_EQ(s.regularity, Regularity::jump);
  EXPECT_TRUE(std::isinf(s.eps_lin));
  EXPECT_FALSE(s.delta_lin.has_value());
}

TEST(NlSlope, PolynomialSlopeIsTheDerivative) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> x(-2.0, 2.0);
  for (int i = 0; i < 50; ++i) {
    const auto f = fx::random_cubic(rng);
    const double u = x(rng);
    const auto &c = f.segments().front();
    EXPECT_EQ(nl_slope(f, u).eps_lin, poly::eval(poly::derivative(c), u));
  }
}

TEST(LinearizeGraph, TwoByOneHasAFixedZeroAtTheFeedbackPole) {
  const auto g = fx::two_by_one();
  for (double r : fx::range(0.0, 1.0, 0.1)) {
    const auto m = lin(g, r);
    EXPECT_TRUE(contains(m.tf.zeros(), 0.72)) << "r = " << r;
    EXPECT_EQ(m.branch_gains.size(), 3u);
    EXPECT_TRUE(m.delta_exists);
  }
}

TEST(LinearizeGraph, WienerRootsIndependentOfSetpoint) {
  const auto g = build_wiener(fx::G1(), fx::f1());
  // the nonlinearity sees 2.5 r
  const auto a = lin(g, 0.0), b = lin(g, 0.4);
  EXPECT_NEAR(a.branch_gains[0], 1.0, 1e-15);
  EXPECT_NEAR(b.branch_gains[0], 0.1, 1e-12);
  for (const auto &m : {a, b}) {
    ASSERT_EQ(m.tf.poles().size(), 1u);
    EXPECT_TRUE(contains(m.tf.poles(), 0.9));
    ASSERT_EQ(m.tf.zeros().size(), 1u);
    EXPECT_TRUE(contains(m.tf.zeros(), -2.0 / 3.0));
  }
}

TEST(LinearizeGraph, ParallelPolesAreTheBranchPoles) {
  const auto g = build_parallel({{fx::G1(), fx::f1()}, {fx::G2(), fx::f2()}});
  for (double r : {0.0, 0.3, 0.8}) {
    const auto p = nonorigin(lin(g, r).tf.poles());
    ASSERT_EQ(p.size(), 2u);
    EXPECT_NEAR(std::abs(p[0] - 0.77), 0.0, 1e-10);
    EXPECT_NEAR(std::abs(p[1] - 0.9), 0.0, 1e-10);
  }
}

TEST(LinearizeGraph, RejectsNonDifferentiableSetpoints) {
  const auto g = build_wiener(fx::G1(), StaticNL::abs());
  EXPECT_THROW(lin(g, 0.0), LinearizationError);
  EXPECT_NO_THROW(lin(g, 0.3));
  const auto h = build_hammerstein(StaticNL::step(), fx::G1());
  EXPECT_THROW(lin(h, 0.0), LinearizationError);
}

TEST(LinearizeGraph, CustomTopologyHasNoClosedForm) {
  BlockGraph g;
  const auto in = g.add_input();
  const auto a = g.add_linear(fx::G1());
  const auto out = g.add_output();
  g.connect(in, a);
  g.connect(a, out);
  EXPECT_THROW(lin(g, 0.0), LinearizationError);
  const auto op = solve_setpoint(g, 0.0);
  const std::vector<double> f{0.1};
  EXPECT_LT(std::abs(linearized_response(g, op, f)[0] - fx::G1().at(0.1)), 1e-14);
}

TEST(LinearizeGraph, CancellationIsOptIn) {
  const auto g = fx::two_by_one();
  const auto op = solve_setpoint(g, 0.5);
  const auto plain = linearize_graph(g, op);
  LinearizeOptions opt;
  opt.cancel = true;
  opt.cancel_tolerance = 1e-6;
  const auto cancelled = linearize_graph(g, op, opt);
  EXPECT_LE(cancelled.tf.num.size(), plain.tf.num.size());
  EXPECT_LT(std::abs(cancelled.tf.at(0.1) - plain.tf.at(0.1)), 1e-9);
}

TEST(LinearizedResponse, MatchesClosedFormForEveryFamily) {
  const auto G4 = RationalTF::make({0.3, -0.1}, {1.0, -0.5});
  expect_same_response(build_wiener_hammerstein(fx::G1(), fx::f1(), fx::G2()), 0.3);
  expect_same_response(build_parallel({{fx::G1(), fx::f1()}, {fx::G2(), fx::f2()}, {G4, fx::f3()}}), 0.4);
  expect_same_response(fx::two_by_one(), 0.6);
  expect_same_response(build_lfr(fx::G1(), fx::G2(), fx::G3(), std::nullopt, fx::f2()), 0.5);
  expect_same_response(build_lfr(fx::G1(), fx::G2(), fx::G3(), G4, fx::f2()), 0.5);
  expect_same_response(build_symmetric_fffb(fx::G1(), fx::G3(), fx::f1()), 0.2);
  expect_same_response(build_symmetric_fffb(fx::G1(), fx::G3(), fx::f1(), fx::f3()), 0.2);
}

TEST(BranchGainMatrix, TwoBranchWiener) {
  const auto g = build_parallel({{fx::G1(), fx::f1()}, {fx::G2(), fx::f2()}});
  const std::vector<double> sp{0.0, 1.0};
  const auto B = branch_gain_matrix(g, sp);
  ASSERT_EQ(B.gains.rows(), 2);
  ASSERT_EQ(B.gains.cols(), 2);
  EXPECT_NEAR(B.gains(0, 0), 1.0, 1e-15);
  EXPECT_NEAR(B.gains(0, 1), 1.0, 1e-15);
  // branch DC levels 2.5 and 1.0
  EXPECT_NEAR(B.gains(1, 0), 1.0 - 0.9 * 6.25, 1e-12);
  EXPECT_NEAR(B.gains(1, 1), 3.5, 1e-12);
}

TEST(BranchGainMatrix, LinearBranchesAndShape) {
  const auto g = build_parallel({{fx::G1()}, {fx::G2()}, {fx::G3()}});
  const std::vector<double> sp{0.0, 0.5, 1.0};
  const auto B = branch_gain_matrix(g, sp);
  EXPECT_TRUE((B.gains.array() == 1.0).all());
  const std::vector<double> one{0.3};
  EXPECT_EQ(branch_gain_matrix(g, one).gains.rows(), 1);
  EXPECT_EQ(branch_gain_matrix(g, one).gains.cols(), 3);
  EXPECT_THROW(branch_gain_matrix(fx::two_by_one(), one), std::invalid_argument);
}

TEST(StructureRules, SingleBranchRootsAreSetpointIndependent) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const auto g = build_wiener_hammerstein(fx::random_block(rng, 1 + trial % 2), fx::random_cubic(rng),
                                            fx::random_block(rng, 2));
    const auto ref = lin(g, 0.0).tf;
    for (double r : {-0.5, 0.25, 0.75}) {
      const auto m = lin(g, r).tf;
      auto p0 = ref.poles(), p1 = m.poles(), z0 = ref.zeros(), z1 = m.zeros();
      poly::sort_roots(p0), poly::sort_roots(p1), poly::sort_roots(z0), poly::sort_roots(z1);
      ASSERT_EQ(p0.size(), p1.size());
      ASSERT_EQ(z0.size(), z1.size());
      for (std::size_t i = 0; i < p0.size(); ++i) EXPECT_LT(std::abs(p0[i] - p1[i]), 1e-10);
      for (std::size_t i = 0; i < z0.size(); ++i) EXPECT_LT(std::abs(z0[i] - z1[i]), 1e-10);
    }
  }
}

TEST(StructureRules, FeedbackDecidesWhetherPolesMove) {
  const auto sp = fx::range(0.0, 1.0, 0.2);
  const auto open = analytic_classes(build_ff_fb_parallel({{fx::G1(), fx::f1()}, {fx::G2(), fx::f2()}}, {}), sp);
  EXPECT_EQ(open.pole_class, RootClass::all_fixed);
  const auto closed = analytic_classes(fx::two_by_one(), sp);
  EXPECT_EQ(closed.pole_class, RootClass::all_move);
}

TEST(StructureRules, SingleFeedForwardBranchFixesTheZeros) {
  const auto c = analytic_classes(build_ff_fb_parallel({{fx::G1(), fx::f1()}}, {{fx::G3(), fx::f3()}}), fx::range(0.0, 1.0, 0.2));
  EXPECT_EQ(c.pole_class, RootClass::all_move);
  EXPECT_EQ(c.zero_class, RootClass::all_fixed);
}

TEST(StructureRules, FeedbackPolesBecomeFixedZeros) {
  const auto c = analytic_classes(fx::two_by_one(), fx::range(0.0, 1.0, 0.1));
  EXPECT_EQ(c.zero_class, RootClass::mixed);
  bool found = false;
  for (const auto &t : c.tracks)
    if (t.kind == RootKind::zero && t.label == TrackLabel::fixed && std::abs(*t.points.front() - 0.72) < 1e-10)
      found = true;
  EXPECT_TRUE(found);
}

TEST(StructureRules, LfrWithoutG4) {
  const auto g = build_lfr(fx::G1(), fx::G2(), fx::G3(), std::nullopt, fx::f2());
  const auto c = analytic_classes(g, fx::range(0.0, 1.0, 0.2));
  EXPECT_EQ(c.pole_class, RootClass::mixed);
  EXPECT_EQ(c.zero_class, RootClass::all_fixed);
  for (double r : {0.0, 0.6}) {
    const auto m = lin(g, r).tf;
    EXPECT_TRUE(contains(m.zeros(), 0.72));          // pole of G3
    EXPECT_TRUE(contains(m.zeros(), -2.0 / 3.0));    // zero of G1
    EXPECT_TRUE(contains(m.poles(), 0.9));
    EXPECT_TRUE(contains(m.poles(), 0.77));
  }
}

TEST(StructureRules, LfrWithG4) {
  const auto G4 = RationalTF::make({0.3, -0.1}, {1.0, -0.5});
  const auto g = build_lfr(fx::G1(), fx::G2(), fx::G3(), G4, fx::f2());
  const auto c = analytic_classes(g, fx::range(0.0, 1.0, 0.2));
  EXPECT_EQ(c.pole_class, RootClass::mixed);
  EXPECT_EQ(c.zero_class, RootClass::all_move);
  EXPECT_TRUE(contains(lin(g, 0.4).tf.poles(), 0.5));
}

TEST(StructureRules, SymmetricSingleNonlinearity) {
  const auto Gd = RationalTF::make({0.3}, {1.0, -0.5}, 1);
  const auto g = build_symmetric_fffb(fx::G1(), Gd, fx::f3());
  for (double r : {0.0, 0.4, 1.0}) {
    const auto m = lin(g, r).tf;
    EXPECT_TRUE(contains(m.zeros(), 0.5));  // pole of G2
    EXPECT_TRUE(contains(m.poles(), 0.9));  // pole of G1
  }
  const auto c = analytic_classes(g, fx::range(0.0, 1.0, 0.2));
  EXPECT_EQ(c.pole_class, RootClass::mixed);
  EXPECT_EQ(c.zero_class, RootClass::mixed);
}

TEST(LocalStability, RejectsAnUnstableEquilibrium) {
  const auto g = build_ff_fb_parallel({{RationalTF::make({0.5}, {1.0, -0.5}), StaticNL::polynomial({0.0, 1.0, 0.0, 1.0})}},
                                      {{RationalTF::make({1.0}, {1.0}, 1)}});
  EXPECT_NO_THROW(check_local_stability(g, solve_setpoint(g, 0.0)));
  EXPECT_THROW(check_local_stability(g, solve_setpoint(g, 2.5)), NumericError);
}
