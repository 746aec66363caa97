#pragma once

// Gaussian likelihood and the MCMC kernels: pCN on standard-normal
// coefficients, box-restricted random-walk Metropolis on the center, their
// Metropolis-within-Gibbs composition and warm-up step-size tuning.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "ctbuq/errors.hpp"
#include "ctbuq/forward.hpp"
#include "ctbuq/geometry.hpp"
#include "ctbuq/rng.hpp"

namespace ctbuq {

/// A forward evaluator maps (coefficients, optional center) to predicted data.
template <class F>
concept ForwardModel = requires(const F& f, std::span<const double> xi, const std::optional<Point2>& c,
                                std::span<double> out) {
  { f.output_size() } -> std::convertible_to<std::size_t>;
  f.predict(xi, c, out);
};

template <ForwardModel Forward>
struct LikelihoodContext {
  const Forward* forward = nullptr;
  std::vector<double> data;
  NoiseModel noise;
  std::optional<Rect> box;  ///< center support (Stage 2)

  LikelihoodContext(const Forward& f, std::vector<double> y, NoiseModel n, std::optional<Rect> b = std::nullopt)
      : forward(&f), data(std::move(y)), noise(n), box(b) {
    require(noise.sigma_noise > 0.0 && std::isfinite(noise.sigma_noise), "LikelihoodContext: sigma_noise must be positive");
    require(data.size() == f.output_size(), "LikelihoodContext: data size does not match the forward model");
    noise.dimension = data.size();
  }
};

struct ChainState {
  std::vector<double> coeffs;
  std::optional<Point2> center;
  double phi = 0.0;

  friend bool operator==(const ChainState&, const ChainState&) = default;
};

struct SamplerConfig {
  double b1 = 0.1;   ///< pCN step
  double b2 = 0.01;  ///< center random-walk step
  std::size_t n_pcn = 20;
  std::size_t n_mh = 20;
  std::size_t n_samples = 1000;
  std::size_t warmup_sweeps = 20;
  std::size_t warmup_n_pcn = 500;
  std::size_t warmup_n_mh = 500;
  double target_lo = 0.15;
  double target_hi = 0.25;

  void validate() const {
    require(b1 >= 0.0 && b1 <= 1.0, "b1 must lie in [0, 1]");
    require(b2 >= 0.0 && std::isfinite(b2), "b2 must be nonnegative");
    require(target_lo > 0.0 && target_lo <= target_hi && target_hi < 1.0, "target acceptance interval must satisfy 0 < lo <= hi < 1");
  }

  friend bool operator==(const SamplerConfig&, const SamplerConfig&) = default;
};

/// Phi = 1/2 sum (y - g)^2 / sigma^2.
inline double misfit(std::span<const double> y, std::span<const double> g, double sigma) {
  double acc = 0.0;
  for (std::size_t k = 0; k < y.size(); ++k) {
    const double r = y[k] - g[k];
    acc += r * r;
  }
  const double phi = 0.5 * acc / (sigma * sigma);
  if (!std::isfinite(phi)) throw NumericalError("non-finite likelihood");
  return phi;
}

template <ForwardModel Forward>
double neg_log_likelihood(const LikelihoodContext<Forward>& ctx, std::span<const double> coeffs,
                          const std::optional<Point2>& center) {
  std::vector<double> g(ctx.data.size());
  ctx.forward->predict(coeffs, center, g);
  for (double v : g) {
    if (!std::isfinite(v)) throw NumericalError("non-finite forward prediction");
  }
  return misfit(ctx.data, g, ctx.noise.sigma_noise);
}

template <ForwardModel Forward>
double neg_log_likelihood(const LikelihoodContext<Forward>& ctx, const ChainState& s) {
  return neg_log_likelihood(ctx, s.coeffs, s.center);
}

template <ForwardModel Forward>
ChainState make_state(const LikelihoodContext<Forward>& ctx, std::vector<double> coeffs,
                      std::optional<Point2> center = std::nullopt) {
  ChainState s{std::move(coeffs), center, 0.0};
  s.phi = neg_log_likelihood(ctx, s);
  return s;
}

/// min(1, exp(phi_current - phi_proposed)).
inline double acceptance_probability(double phi_current, double phi_proposed) {
  const double d = phi_current - phi_proposed;
  if (d >= 0.0) return 1.0;
  return std::exp(d);
}

namespace detail {
inline bool accept(double phi_current, double phi_proposed, Rng& rng) {
  const double a = acceptance_probability(phi_current, phi_proposed);
  const double u = uniform01(rng);
  return u < a;
}
}  // namespace detail

/// zeta = sqrt(1 - b1^2) xi + b1 rho with rho ~ N(0, I); the center is untouched.
template <ForwardModel Forward>
bool pcn_step(ChainState& state, const LikelihoodContext<Forward>& ctx, double b1, Rng& rng) {
  require(b1 >= 0.0 && b1 <= 1.0, "pcn_step: b1 must lie in [0, 1]");
  const double contraction = std::sqrt(1.0 - b1 * b1);
  std::vector<double> prop(state.coeffs.size());
  fill_standard_normal(prop, rng);
  for (std::size_t k = 0; k < prop.size(); ++k) prop[k] = contraction * state.coeffs[k] + b1 * prop[k];
  const double phi_prop = b1 == 0.0 ? state.phi : neg_log_likelihood(ctx, prop, state.center);
  if (detail::accept(state.phi, phi_prop, rng)) {
    state.coeffs = std::move(prop);
    state.phi = phi_prop;
    return true;
  }
  return false;
}

/// o = c + b2 N(0, I); proposals leaving the box are rejected outright.
template <ForwardModel Forward>
bool rwm_center_step(ChainState& state, const LikelihoodContext<Forward>& ctx, double b2, Rng& rng) {
  require(state.center.has_value(), "rwm_center_step: state has no center");
  require(b2 >= 0.0, "rwm_center_step: b2 must be nonnegative");
  std::normal_distribution<double> normal;
  const double dx = normal(rng), dy = normal(rng);
  const Point2 o{state.center->x + b2 * dx, state.center->y + b2 * dy};
  if (ctx.box && !ctx.box->contains(o)) return false;
  const double phi_prop = b2 == 0.0 ? state.phi : neg_log_likelihood(ctx, state.coeffs, o);
  if (detail::accept(state.phi, phi_prop, rng)) {
    state.center = o;
    state.phi = phi_prop;
    return true;
  }
  return false;
}

struct SweepStats {
  std::size_t pcn_proposed = 0;
  std::size_t pcn_accepted = 0;
  std::size_t mh_proposed = 0;
  std::size_t mh_accepted = 0;

  double pcn_rate() const { return pcn_proposed ? double(pcn_accepted) / double(pcn_proposed) : 0.0; }
  double mh_rate() const { return mh_proposed ? double(mh_accepted) / double(mh_proposed) : 0.0; }

  SweepStats& operator+=(const SweepStats& o) {
    pcn_proposed += o.pcn_proposed;
    pcn_accepted += o.pcn_accepted;
    mh_proposed += o.mh_proposed;
    mh_accepted += o.mh_accepted;
    return *this;
  }
};

/// n_pcn pCN steps on the coefficients, then n_mh center steps (when the
/// state has a center).
template <ForwardModel Forward>
SweepStats gibbs_sweep(ChainState& state, const LikelihoodContext<Forward>& ctx, double b1, double b2,
                       std::size_t n_pcn, std::size_t n_mh, Rng& rng) {
  SweepStats st;
  for (std::size_t k = 0; k < n_pcn; ++k) {
    ++st.pcn_proposed;
    st.pcn_accepted += pcn_step(state, ctx, b1, rng) ? 1 : 0;
  }
  if (state.center) {
    for (std::size_t k = 0; k < n_mh; ++k) {
      ++st.mh_proposed;
      st.mh_accepted += rwm_center_step(state, ctx, b2, rng) ? 1 : 0;
    }
  }
  return st;
}

template <ForwardModel Forward>
SweepStats gibbs_sweep(ChainState& state, const LikelihoodContext<Forward>& ctx, const SamplerConfig& cfg, Rng& rng) {
  return gibbs_sweep(state, ctx, cfg.b1, cfg.b2, cfg.n_pcn, cfg.n_mh, rng);
}

struct TuneResult {
  double b1 = 0.0;
  double b2 = 0.0;
  ChainState state;
  std::vector<SweepStats> history;
};

/// Multiplicative adaptation: a step grows by 3/2 when its acceptance rate
/// is above the target interval and shrinks by 2/3 when below.
inline double adapt_step(double step, double rate, double lo, double hi) {
  if (rate > hi) return step * 1.5;
  if (rate < lo) return step * (2.0 / 3.0);
  return step;
}

template <ForwardModel Forward>
TuneResult tune(const LikelihoodContext<Forward>& ctx, ChainState init, const SamplerConfig& cfg, Rng& rng) {
  cfg.validate();
  TuneResult r{cfg.b1, cfg.b2, std::move(init), {}};
  for (std::size_t w = 0; w < cfg.warmup_sweeps; ++w) {
    const SweepStats st = gibbs_sweep(r.state, ctx, r.b1, r.b2, cfg.warmup_n_pcn, cfg.warmup_n_mh, rng);
    if (st.pcn_proposed) r.b1 = std::clamp(adapt_step(r.b1, st.pcn_rate(), cfg.target_lo, cfg.target_hi), 0.0, 1.0);
    if (st.mh_proposed) r.b2 = adapt_step(r.b2, st.mh_rate(), cfg.target_lo, cfg.target_hi);
    r.history.push_back(st);
  }
  return r;
}

/// Tempered warm-up: `levels` stages with sigma inflated by factors falling
/// geometrically from `start` to 1, each running `sweeps` tuning sweeps.
struct AnnealSchedule {
  std::size_t levels = 0;
  double start = 1.0;
  std::size_t sweeps = 0;

  bool active() const { return levels > 0 && sweeps > 0; }
  double factor(std::size_t l) const {
    const double e = levels == 1 ? 1.0 : double(l) / double(levels - 1);
    return std::pow(start, 1.0 - e);
  }
  friend bool operator==(const AnnealSchedule&, const AnnealSchedule&) = default;
};

/// Runs the tempered stages and returns the state re-evaluated at the true
/// noise level together with the step sizes tuned along the way.
template <ForwardModel Forward>
TuneResult anneal(const LikelihoodContext<Forward>& ctx, ChainState init, const SamplerConfig& cfg,
                  const AnnealSchedule& sched, Rng& rng) {
  cfg.validate();
  require(sched.start >= 1.0, "anneal: start factor must be >= 1");
  TuneResult r{cfg.b1, cfg.b2, std::move(init), {}};
  if (!sched.active()) return r;
  SamplerConfig ac = cfg;
  ac.warmup_sweeps = sched.sweeps;
  for (std::size_t l = 0; l < sched.levels; ++l) {
    LikelihoodContext<Forward> hot = ctx;
    hot.noise.sigma_noise *= sched.factor(l);
    r.state.phi = neg_log_likelihood(hot, r.state);
    TuneResult t = tune(hot, std::move(r.state), ac, rng);
    r.state = std::move(t.state);
    ac.b1 = r.b1 = t.b1;
    ac.b2 = r.b2 = t.b2;
    r.history.insert(r.history.end(), t.history.begin(), t.history.end());
  }
  r.state.phi = neg_log_likelihood(ctx, r.state);
  return r;
}

struct Chain {
  std::vector<ChainState> states;
  std::vector<SweepStats> stats;
  double b1 = 0.0;
  double b2 = 0.0;
  std::vector<SweepStats> warmup;

  SweepStats totals() const {
    SweepStats t;
    for (const auto& s : stats) t += s;
    return t;
  }
};

/// Warm-up tuning followed by n_samples recorded sweeps with frozen step
/// sizes. The visitor sees every recorded state as (index, state, stats);
/// nothing is stored here.
template <ForwardModel Forward, class Visitor>
TuneResult run_chain_visit(const ChainState& init, const LikelihoodContext<Forward>& ctx, const SamplerConfig& cfg,
                           Rng& rng, Visitor&& visit, const AnnealSchedule& sched = {}) {
  ChainState start = init;
  SamplerConfig tc = cfg;
  std::vector<SweepStats> hist;
  if (sched.active()) {
    TuneResult a = anneal(ctx, init, cfg, sched, rng);
    start = std::move(a.state);
    tc.b1 = a.b1;
    tc.b2 = a.b2;
    hist = std::move(a.history);
  }
  TuneResult t = tune(ctx, std::move(start), tc, rng);
  hist.insert(hist.end(), t.history.begin(), t.history.end());
  t.history = std::move(hist);
  for (std::size_t n = 0; n < cfg.n_samples; ++n) {
    const SweepStats st = gibbs_sweep(t.state, ctx, t.b1, t.b2, cfg.n_pcn, cfg.n_mh, rng);
    visit(n, static_cast<const ChainState&>(t.state), st);
  }
  return t;
}

template <ForwardModel Forward>
Chain run_chain(const ChainState& init, const LikelihoodContext<Forward>& ctx, const SamplerConfig& cfg, Rng& rng,
                const AnnealSchedule& sched = {}) {
  Chain c;
  c.states.reserve(cfg.n_samples);
  c.stats.reserve(cfg.n_samples);
  TuneResult t = run_chain_visit(init, ctx, cfg, rng, [&](std::size_t, const ChainState& s, const SweepStats& st) {
    c.states.push_back(s);
    c.stats.push_back(st);
  }, sched);
  c.b1 = t.b1;
  c.b2 = t.b2;
  c.warmup = std::move(t.history);
  return c;
}

}  // namespace ctbuq
