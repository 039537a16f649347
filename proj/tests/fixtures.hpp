#pragma once

#include <random>

#include "blockid/block_graph.hpp"

namespace blockid::fixtures {

inline RationalTF G1() { return RationalTF::make({0.15, 0.1}, {1.0, -0.9}); }
inline RationalTF G2() { return RationalTF::make({0.12, 0.11}, {1.0, -0.77}); }
inline RationalTF G3() { return RationalTF::make({0.2, 0.15}, {1.0, -0.72}, 1); }

inline StaticNL f1() { return StaticNL::polynomial({0.0, 1.0, 0.0, -0.3}); }
inline StaticNL f2() { return StaticNL::polynomial({0.0, 1.0, 0.5, 0.5}); }
inline StaticNL f3() { return StaticNL::polynomial({0.0, 1.0, 0.2, 0.8}); }

/// Two Wiener branches forward, one Wiener branch in the feedback.
inline BlockGraph two_by_one() { return build_ff_fb_parallel({{G1(), f1()}, {G2(), f2()}}, {{G3(), f3()}}); }

inline std::vector<double> range(double start, double stop, double step) {
  std::vector<double> v;
  for (std::size_t i = 0; start + static_cast<double>(i) * step <= stop + 1e-12; ++i)
    v.push_back(start + static_cast<double>(i) * step);
  return v;
}

/// Stable first- or second-order block with real poles in (-0.8, 0.8) and a
/// numerator that is not accidentally degenerate.
inline RationalTF random_block(std::mt19937_64 &rng, std::size_t order) {
  std::uniform_real_distribution<double> pole(-0.8, 0.8), coef(0.2, 1.0);
  std::vector<Complex> p;
  for (std::size_t i = 0; i < order; ++i) p.emplace_back(pole(rng), 0.0);
  Poly num;
  for (std::size_t i = 0; i < order; ++i) num.push_back(coef(rng) * (i % 2 ? -0.5 : 1.0));
  return RationalTF::make(num, poly::from_roots(p));
}

/// Cubic with positive slope on [-2, 2].
inline StaticNL random_cubic(std::mt19937_64 &rng) {
  std::uniform_real_distribution<double> c2(-0.3, 0.3), c3(0.05, 0.3);
  return StaticNL::polynomial({0.0, 1.0, c2(rng), c3(rng)});
}

} // namespace blockid::fixtures
