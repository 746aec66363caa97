#include <gtest/gtest.h>

#include <cmath>

#include "ctbuq/inference.hpp"
#include "ctbuq/pipeline.hpp"

using namespace ctbuq;

namespace {

// g = scale * (xi_0, ..., xi_{m-1}) + (c.x, c.y) on the first two outputs.
struct ToyForward {
  std::size_t m = 2;
  double scale = 1.0;
  bool use_center = false;

  std::size_t output_size() const { return m; }
  void predict(std::span<const double> xi, const std::optional<Point2>& c, std::span<double> out) const {
    for (std::size_t k = 0; k < m; ++k) out[k] = k < xi.size() ? scale * xi[k] : 0.0;
    if (use_center && c) {
      out[0] += c->x;
      out[1] += c->y;
    }
  }
};

struct ZeroForward {
  std::size_t output_size() const { return 1; }
  void predict(std::span<const double>, const std::optional<Point2>&, std::span<double> out) const { out[0] = 0.0; }
};

struct NanForward {
  std::size_t output_size() const { return 1; }
  void predict(std::span<const double>, const std::optional<Point2>&, std::span<double> out) const {
    out[0] = std::nan("");
  }
};

}  // namespace

TEST(Misfit, Examples) {
  const ToyForward f{3, 1.0};
  const LikelihoodContext<ToyForward> ctx(f, {1.0, 2.0, 3.0}, {0.5, 3});
  EXPECT_EQ(neg_log_likelihood(ctx, std::vector<double>{1.0, 2.0, 3.0}, std::nullopt), 0.0);
  EXPECT_NEAR(neg_log_likelihood(ctx, std::vector<double>{1.5, 2.0, 3.0}, std::nullopt), 0.5, 1e-15);
}

TEST(Misfit, NonFiniteForwardIsAnError) {
  const NanForward f;
  const LikelihoodContext<NanForward> ctx(f, {1.0}, {1.0, 1});
  EXPECT_THROW(neg_log_likelihood(ctx, std::vector<double>{0.0}, std::nullopt), NumericalError);
}

TEST(Misfit, TriangleBoundOnStarForward) {
  const AttenuationLevels lv{0.1, 1.0};
  const ScanGeometry g{std::numbers::pi, 10, 12, 1.0};
  const MaternParams p{3, 1, 0.3, std::log(0.3)};
  const StarProjector sp(g, lv, BoundaryBasis(p, 10, BoundaryBasis::uniform_angles(128)));
  const StarForward fwd(sp, {});
  Rng rng(2);
  std::vector<double> y(g.size());
  for (double& v : y) v = 3.0 * uniform01(rng);
  const double sigma = 0.05;
  const LikelihoodContext<StarForward> ctx(fwd, y, {sigma, y.size()});
  double yn = 0.0;
  for (double v : y) yn += v * v;
  yn = std::sqrt(yn) / sigma;
  const double gmax = std::sqrt(double(g.size())) * 2.0 * lv.a_plus / sigma;
  for (int d = 0; d < 20; ++d) {
    const auto xi = standard_normal_vector(20, rng);
    const double phi = neg_log_likelihood(ctx, xi, Point2{0.4 * uniform01(rng), -0.2});
    EXPECT_GE(phi, 0.0);
    EXPECT_LE(phi, 0.5 * (yn + gmax) * (yn + gmax));
  }
}

TEST(Acceptance, ExpOfDifferenceCappedAtOne) {
  EXPECT_EQ(acceptance_probability(3.0, 3.0 - std::log(2.0)), 1.0);
  EXPECT_EQ(acceptance_probability(3.0, 3.0), 1.0);
  Rng rng(1);
  for (int k = 0; k < 1000; ++k) {
    const double a = 10 * uniform01(rng), b = 10 * uniform01(rng);
    const double p = acceptance_probability(a, b);
    EXPECT_LE(p, 1.0);
    EXPECT_DOUBLE_EQ(p, std::min(1.0, std::exp(a - b)));
  }
}

TEST(Pcn, ZeroStepKeepsState) {
  const ToyForward f{2, 1.0};
  const LikelihoodContext<ToyForward> ctx(f, {0.3, -0.1}, {0.1, 2});
  ChainState s = make_state(ctx, {0.5, 0.2});
  const ChainState before = s;
  Rng rng(3);
  for (int k = 0; k < 10; ++k) EXPECT_TRUE(pcn_step(s, ctx, 0.0, rng));
  EXPECT_EQ(s, before);
}

TEST(Pcn, FlatTargetUnitStepIsFreshPriorDraw) {
  const ZeroForward f;
  const LikelihoodContext<ZeroForward> ctx(f, {0.0}, {1.0, 1});
  ChainState s = make_state(ctx, std::vector<double>(5, 3.0));
  Rng rng(4);
  const std::size_t n = 100000;
  std::vector<double> sum(5, 0.0), sq(5, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    EXPECT_TRUE(pcn_step(s, ctx, 1.0, rng));
    for (std::size_t q = 0; q < 5; ++q) sum[q] += s.coeffs[q], sq[q] += s.coeffs[q] * s.coeffs[q];
  }
  for (std::size_t q = 0; q < 5; ++q) {
    const double m = sum[q] / n;
    EXPECT_NEAR(m, 0.0, 0.05);
    EXPECT_NEAR(sq[q] / n - m * m, 1.0, 0.05);
  }
}

TEST(Pcn, PriorInvarianceForSeveralSteps) {
  const ZeroForward f;
  const LikelihoodContext<ZeroForward> ctx(f, {0.0}, {1.0, 1});
  for (double b1 : {0.3, 0.7}) {
    Rng rng(derive_seed(11, std::uint64_t(b1 * 10)));
    ChainState s = make_state(ctx, standard_normal_vector(10, rng));
    const std::size_t n = 100000;
    std::vector<double> sum(10, 0.0), sq(10, 0.0);
    for (std::size_t t = 0; t < n; ++t) {
      pcn_step(s, ctx, b1, rng);
      for (std::size_t q = 0; q < 10; ++q) sum[q] += s.coeffs[q], sq[q] += s.coeffs[q] * s.coeffs[q];
    }
    for (std::size_t q = 0; q < 10; ++q) {
      const double m = sum[q] / n;
      EXPECT_NEAR(m, 0.0, 0.05) << b1;
      EXPECT_NEAR(sq[q] / n - m * m, 1.0, 0.05) << b1;
    }
  }
}

TEST(Rwm, Examples) {
  const ToyForward f{2, 1.0, true};
  LikelihoodContext<ToyForward> ctx(f, {0.0, 0.0}, {0.5, 2}, Rect{-1, 1, -1, 1});
  ChainState s = make_state(ctx, {0.0, 0.0}, Point2{0.2, 0.1});
  const ChainState before = s;
  Rng rng(5);
  EXPECT_TRUE(rwm_center_step(s, ctx, 0.0, rng));
  EXPECT_EQ(s, before);

  ctx.box = Rect{0.19, 0.21, 0.09, 0.11};
  for (int k = 0; k < 50; ++k) EXPECT_FALSE(rwm_center_step(s, ctx, 10.0, rng));
  EXPECT_EQ(s, before);
}

TEST(Rwm, FlatInCenterAlwaysAccepts) {
  const ToyForward f{2, 1.0, false};
  const LikelihoodContext<ToyForward> ctx(f, {0.0, 0.0}, {0.5, 2}, Rect{-10, 10, -10, 10});
  ChainState s = make_state(ctx, {0.3, 0.3}, Point2{0, 0});
  Rng rng(6);
  for (int k = 0; k < 100; ++k) EXPECT_TRUE(rwm_center_step(s, ctx, 0.1, rng));
}

TEST(Gibbs, CountsAndDegenerateSteps) {
  const ToyForward f{2, 1.0, true};
  const LikelihoodContext<ToyForward> ctx(f, {0.1, 0.2}, {0.3, 2}, Rect{-1, 1, -1, 1});
  ChainState s = make_state(ctx, {0.0, 0.0}, Point2{0, 0});
  const ChainState before = s;
  Rng rng(7);
  auto st = gibbs_sweep(s, ctx, 0.5, 0.1, 0, 0, rng);
  EXPECT_EQ(st.pcn_proposed + st.mh_proposed, 0u);
  EXPECT_EQ(s, before);
  st = gibbs_sweep(s, ctx, 0.0, 0.0, 7, 5, rng);
  EXPECT_EQ(st.pcn_accepted, 7u);
  EXPECT_EQ(st.mh_accepted, 5u);
  EXPECT_EQ(s, before);
  st = gibbs_sweep(s, ctx, 0.3, 0.05, 20, 20, rng);
  EXPECT_EQ(st.pcn_proposed + st.mh_proposed, 40u);
}

TEST(Gibbs, CacheCoherentAfterEveryStep) {
  const ToyForward f{4, 0.8, true};
  const LikelihoodContext<ToyForward> ctx(f, {0.5, -0.2, 0.1, 0.3}, {0.2, 4}, Rect{-1, 1, -1, 1});
  ChainState s = make_state(ctx, {0.0, 0.0, 0.0, 0.0, 0.0}, Point2{0, 0});
  Rng rng(8);
  for (int k = 0; k < 2000; ++k) {
    if (k % 2) pcn_step(s, ctx, 0.4, rng);
    else rwm_center_step(s, ctx, 0.1, rng);
    const double fresh = neg_log_likelihood(ctx, s);
    EXPECT_NEAR(s.phi, fresh, 1e-10 * std::max(1.0, fresh));
  }
}

TEST(RunChain, EmptyAndDeterministic) {
  const ToyForward f{2, 1.0, true};
  const LikelihoodContext<ToyForward> ctx(f, {0.1, 0.2}, {0.3, 2}, Rect{-1, 1, -1, 1});
  const ChainState init = make_state(ctx, {0.0, 0.0}, Point2{0, 0});
  SamplerConfig cfg{0.3, 0.05, 5, 5, 0, 2, 10, 10, 0.15, 0.25};
  Rng r0(1);
  EXPECT_TRUE(run_chain(init, ctx, cfg, r0).states.empty());
  cfg.n_samples = 200;
  Rng a(9), b(9);
  const Chain ca = run_chain(init, ctx, cfg, a, {3, 10.0, 2});
  const Chain cb = run_chain(init, ctx, cfg, b, {3, 10.0, 2});
  ASSERT_EQ(ca.states.size(), 200u);
  EXPECT_EQ(ca.states, cb.states);
  EXPECT_EQ(ca.b1, cb.b1);
}

TEST(RunChain, FlatStage1ChainKeepsPriorVariance) {
  const ZeroForward f;
  const LikelihoodContext<ZeroForward> ctx(f, {0.0}, {1.0, 1});
  const SamplerConfig cfg{0.5, 0.0, 1, 0, 50000, 0, 0, 0, 0.15, 0.25};
  Rng rng(12);
  const Chain c = run_chain(make_state(ctx, std::vector<double>(4, 0.0)), ctx, cfg, rng);
  for (std::size_t q = 0; q < 4; ++q) {
    double s = 0.0, s2 = 0.0;
    for (std::size_t t = 1000; t < c.states.size(); ++t) s += c.states[t].coeffs[q], s2 += c.states[t].coeffs[q] * c.states[t].coeffs[q];
    const double n = double(c.states.size() - 1000), m = s / n;
    EXPECT_NEAR(s2 / n - m * m, 1.0, 0.1);
  }
}

TEST(Tune, FixedPointAndDirections) {
  EXPECT_EQ(adapt_step(0.2, 0.2, 0.15, 0.25), 0.2);
  EXPECT_EQ(adapt_step(0.2, 0.15, 0.15, 0.25), 0.2);
  EXPECT_EQ(adapt_step(0.2, 0.25, 0.15, 0.25), 0.2);
  EXPECT_DOUBLE_EQ(adapt_step(0.2, 0.5, 0.15, 0.25), 0.3);
  EXPECT_DOUBLE_EQ(adapt_step(0.3, 0.01, 0.15, 0.25), 0.2);

  // Sharp target: tiny sigma rejects nearly every big pCN move.
  const ToyForward f{2, 1.0};
  const LikelihoodContext<ToyForward> sharp(f, {0.0, 0.0}, {1e-4, 2});
  SamplerConfig cfg{0.9, 0.0, 1, 0, 0, 6, 100, 0, 0.15, 0.25};
  Rng rng(13);
  auto t = tune(sharp, make_state(sharp, {0.0, 0.0}), cfg, rng);
  ASSERT_EQ(t.history.size(), 6u);
  EXPECT_LT(t.b1, 0.9 * std::pow(2.0 / 3.0, 5));

  // Easy target: b1 = 1e-6 is accepted nearly always and must grow.
  const LikelihoodContext<ToyForward> easy(f, {0.0, 0.0}, {100.0, 2});
  cfg.b1 = 1e-6;
  t = tune(easy, make_state(easy, {0.0, 0.0}), cfg, rng);
  EXPECT_DOUBLE_EQ(t.b1, 1e-6 * std::pow(1.5, 6));
}

TEST(Tune, B1StaysInUnitInterval) {
  const ZeroForward f;
  const LikelihoodContext<ZeroForward> ctx(f, {0.0}, {1.0, 1});
  SamplerConfig cfg{0.9, 0.0, 1, 0, 0, 10, 20, 0, 0.15, 0.25};
  Rng rng(14);
  EXPECT_EQ(tune(ctx, make_state(ctx, {0.0}), cfg, rng).b1, 1.0);
}

TEST(DetailedBalance, PairwiseFluxesMatch) {
  // 1D target through a lattice-rounded coefficient; flux between each pair
  // of three regions must balance for a reversible kernel.
  struct Lattice {
    std::size_t output_size() const { return 1; }
    void predict(std::span<const double> xi, const std::optional<Point2>&, std::span<double> out) const {
      out[0] = 0.25 * std::round(xi[0] * 4.0);
    }
  } f;
  const LikelihoodContext<Lattice> ctx(f, {0.6}, {0.5, 1});
  ChainState s = make_state(ctx, {0.0});
  Rng rng(15);
  auto region = [](double x) { return x < -0.5 ? 0 : (x < 0.5 ? 1 : 2); };
  long flux[3][3] = {};
  int prev = region(s.coeffs[0]);
  const long n = 400000;
  for (long t = 0; t < n; ++t) {
    pcn_step(s, ctx, 0.8, rng);
    const int cur = region(s.coeffs[0]);
    flux[prev][cur]++;
    prev = cur;
  }
  for (int a = 0; a < 3; ++a)
    for (int b = a + 1; b < 3; ++b) {
      const double fab = double(flux[a][b]), fba = double(flux[b][a]);
      ASSERT_GT(fab + fba, 1000.0);
      EXPECT_NEAR(fab, fba, 4.0 * std::sqrt(fab + fba)) << a << "->" << b;
    }
}

TEST(Anneal, FactorsFallToOne) {
  const AnnealSchedule s{5, 81.0, 1};
  EXPECT_DOUBLE_EQ(s.factor(0), 81.0);
  EXPECT_DOUBLE_EQ(s.factor(4), 1.0);
  EXPECT_NEAR(s.factor(2), 9.0, 1e-12);
  EXPECT_FALSE((AnnealSchedule{0, 10.0, 5}).active());
}
