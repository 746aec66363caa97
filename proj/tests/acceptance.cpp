// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria (capped at 255).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>

#include "ctbuq/ctbuq.hpp"

using namespace ctbuq;

namespace {

constexpr std::uint64_t kSeed = 1;
constexpr std::uint64_t kPhantomStream = 0, kNoiseStream = 1, kStage1Stream = 2, kStage2Stream = 3;

int failures = 0;

void report(int id, bool pass, double seconds, const std::string& detail) {
  std::printf("criterion %2d: %s  (%.1f s)  %s\n", id, pass ? "PASS" : "FAIL", seconds, detail.c_str());
  std::fflush(stdout);
  failures += !pass;
}

double since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string f(const char* format, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, format, a, b, c, d);
  return buf;
}

struct ZeroForward {
  std::size_t output_size() const { return 1; }
  void predict(std::span<const double>, const std::optional<Point2>&, std::span<double> out) const { out[0] = 0.0; }
};

ExperimentConfig scaled(const std::string& name, std::size_t n_theta, std::size_t n_s) {
  ExperimentConfig c = preset(name);
  c.master_seed = kSeed;
  c.n_theta = n_theta;
  c.n_s = n_s;
  c.sync();
  c.validate();
  return c;
}

struct Scan {
  Phantom phantom;
  Sinogram y;
  NoiseModel noise;
};

Scan simulate(const ExperimentConfig& c, std::uint64_t noise_seed) {
  Rng pr(derive_seed(c.master_seed, kPhantomStream));
  Scan s;
  s.phantom = sample_phantom(c.phantom, pr);
  Rng nr(derive_seed(noise_seed, kNoiseStream));
  const NoisyScan n = add_noise(radon_functional(s.phantom, c.geometry()), c.noise, nr);
  s.y = n.noisy;
  s.noise = n.model;
  return s;
}

std::size_t nearest(const std::vector<Point2>& pts, Point2 p) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < pts.size(); ++k)
    if (norm(pts[k] - p) < norm(pts[best] - p)) best = k;
  return best;
}

// Stage 1, then the Stage-2 chain of the component nearest the true
// inclusion, with its summary.
struct SingleRun {
  Scan scan;
  Stage1Result s1;
  std::size_t index = 0;
  Chain chain;
  PosteriorSummary summary;
};

SingleRun single_inclusion(const ExperimentConfig& c, std::uint64_t seed) {
  SingleRun r;
  r.scan = simulate(c, seed);
  Rng r1(derive_seed(seed, kStage1Stream));
  r.s1 = stage1(r.scan.y, r.scan.noise, c.stage1, r1);
  r.index = nearest(r.s1.centers, center_of_mass(r.scan.phantom.inclusions.at(0)));
  Rng r2(derive_seed(derive_seed(seed, kStage2Stream), r.index));
  r.chain = stage2_chain(r.scan.y, r.scan.noise, r.s1, r.index, c.stage2, r2);
  r.summary = summarize_chain(r.chain, r.s1.boxes[r.index], c.stage2.prior_for(r.index), c.stage2.weights,
                              c.stage2.summary, r.index);
  return r;
}

// ------------------------------------------------------------------ 1

void radon_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  const ScanGeometry g{std::numbers::pi, 45, 64, 1.0};
  const auto grid = GridSpec::unit_box(512);
  Field2D disk(grid, 0.0);
  for (std::size_t j = 0; j < grid.ny; ++j)
    for (std::size_t i = 0; i < grid.nx; ++i) disk.at(i, j) = norm(disk.pixel_center(i, j)) <= 1.0 ? 1.0 : 0.0;
  const Sinogram y = radon_grid(disk, g, 1e-3);
  double worst = 0.0;
  for (std::size_t i = 0; i < g.n_theta; ++i) {
    for (std::size_t j = 0; j < g.n_s; ++j) {
      const double s = g.offset(j);
      if (std::abs(s) > 0.95) continue;
      const double exact = 2.0 * std::sqrt(1.0 - s * s);
      worst = std::max(worst, std::abs(y.at(i, j) - exact) / exact);
    }
  }
  const double t = since(t0);
  report(1, worst < 0.01 && t < 5.0, t, f("max relative error %.2e (< 1e-2)", worst));
}

// ------------------------------------------------------------------ 2

void functional_vs_grid() {
  const auto t0 = std::chrono::steady_clock::now();
  PriorConfig pc;
  pc.n_inc = 2;
  pc.inclusion_params = {MaternParams{3.0, 1.0, 0.2, std::log(0.22)}};
  Rng rng(derive_seed(kSeed, kPhantomStream));
  const Phantom ph = sample_phantom(pc, rng);
  const ScanGeometry g{std::numbers::pi, 45, 64, 1.0};
  const Sinogram ref = radon_functional(ph, g);
  std::vector<double> err;
  // Cell averages of the piecewise-constant phantom (8 x 8 points per pixel).
  for (std::size_t n : {128u, 256u, 512u}) {
    const Sinogram y = radon_grid(rasterize(ph, GridSpec::unit_box(n), 8), g);
    double e = 0.0;
    for (std::size_t q = 0; q < y.values.size(); ++q) e = std::max(e, std::abs(y.values[q] - ref.values[q]));
    err.push_back(e);
  }
  const double rel = err[2] / ref.max_value();
  const double t = since(t0);
  report(2, err[0] > err[1] && err[1] > err[2] && rel < 0.02 && t < 30.0, t,
         f("max |diff| %.4f, %.4f, %.4f at n=128,256,512; %.2f%% of max (< 2%%)", err[0], err[1], err[2], 100 * rel));
}

// ------------------------------------------------------------------ 3

void prior_invariance() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t d = 2 * 50, steps = 100000;
  const ZeroForward zero;
  const LikelihoodContext<ZeroForward> ctx(zero, {0.0}, {1.0, 1});
  Rng rng(derive_seed(kSeed, 10));
  ChainState s = make_state(ctx, standard_normal_vector(d, rng));
  std::vector<double> sum(d, 0.0), sq(d, 0.0);
  for (std::size_t k = 0; k < steps; ++k) {
    pcn_step(s, ctx, 0.3, rng);
    for (std::size_t q = 0; q < d; ++q) {
      sum[q] += s.coeffs[q];
      sq[q] += s.coeffs[q] * s.coeffs[q];
    }
  }
  double worst_mean = 0.0, worst_var = 0.0;
  std::size_t bad = 0;
  for (std::size_t q = 0; q < d; ++q) {
    const double m = sum[q] / double(steps), v = sq[q] / double(steps) - m * m;
    worst_mean = std::max(worst_mean, std::abs(m));
    worst_var = std::max(worst_var, std::abs(v - 1.0));
    bad += std::abs(m) > 0.05 || std::abs(v - 1.0) > 0.05;
  }
  const double t = since(t0);
  report(3, bad == 0 && t < 10.0, t,
         f("max |mean| %.4f (<= 0.05), max |var-1| %.4f (<= 0.05), %g of 100 coefficients outside", worst_mean,
           worst_var, double(bad)));
}

// ------------------------------------------------------------------ 4

void dimension_robustness() {
  const auto t0 = std::chrono::steady_clock::now();
  const ExperimentConfig c = scaled("single-smooth", 45, 64);
  const Scan sc = simulate(c, kSeed);
  const Point2 cm = center_of_mass(sc.phantom.inclusions[0]);
  const Rect box{cm.x - 0.15, cm.x + 0.15, cm.y - 0.15, cm.y + 0.15};
  SamplerConfig sampler = c.stage2.sampler;
  sampler.n_samples = 300;
  std::vector<double> rates;
  std::string detail;
  for (std::size_t n_kl : {25u, 50u, 100u}) {
    const BoundaryBasis basis(c.stage2.prior[0], n_kl, BoundaryBasis::uniform_angles(c.stage2.n_poly));
    const StarProjector proj(sc.y.geometry, c.levels, basis);
    const StarForward fwd(proj, {});
    const LikelihoodContext<StarForward> ctx(fwd, sc.y.values, sc.noise, box);
    Rng rng(derive_seed(kSeed, 20));
    const Chain ch = run_chain(make_state(ctx, std::vector<double>(2 * n_kl, 0.0), cm), ctx, sampler, rng, c.stage2.anneal);
    rates.push_back(ch.totals().pcn_rate());
    detail += f("N_KL=%g: acc %.3f b1 %.2e; ", double(n_kl), rates.back(), ch.b1);
  }
  const double spread = *std::max_element(rates.begin(), rates.end()) - *std::min_element(rates.begin(), rates.end());
  const double t = since(t0);
  report(4, spread < 0.10 && t < 300.0, t, detail + f("spread %.3f (< 0.10)", spread));
}

// ------------------------------------------------------------------ 5

void hpd_correctness() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(derive_seed(kSeed, 30));
  const auto x = standard_normal_vector(100000, rng);
  const auto h = hpd_1d(x, 0.95);
  std::normal_distribution<double> z(0.0, 0.5);
  std::vector<double> mix(100000);
  for (double& v : mix) v = (uniform01(rng) < 0.5 ? -3.0 : 3.0) + z(rng);
  const auto hb = hpd_1d(mix, 0.9);
  const bool one = h.intervals.size() == 1 && std::abs(h.intervals[0].lo + 1.959) <= 0.1 &&
                   std::abs(h.intervals[0].hi - 1.959) <= 0.1;
  const double t = since(t0);
  report(5, one && hb.intervals.size() == 2 && t < 2.0, t,
         f("normal: %g interval(s) [%.3f, %.3f]; bimodal: %g intervals", double(h.intervals.size()),
           h.intervals.front().lo, h.intervals.back().hi, double(hb.intervals.size())));
}

// ------------------------------------------------------------------ 6

std::string stage1_centers(std::string& json_out) {
  const ExperimentConfig c = scaled("multi3", 45, 64);
  const Scan sc = simulate(c, kSeed);
  Rng rng(derive_seed(kSeed, kStage1Stream));
  const Stage1Result r = stage1(sc.y, sc.noise, c.stage1, rng);
  json_out = io::to_json(r).dump();
  if (r.n_inc != 3) return "FAIL detected " + std::to_string(r.n_inc) + " components (need 3)";
  std::vector<char> used(3, 0);
  double worst = 0.0;
  for (const auto& inc : sc.phantom.inclusions) {
    const std::size_t k = nearest(r.centers, center_of_mass(inc));
    if (used[k]) return "FAIL two inclusions matched the same component";
    used[k] = 1;
    worst = std::max(worst, norm(r.centers[k] - center_of_mass(inc)));
  }
  return (worst <= 0.02 ? "PASS" : "FAIL") + f(" 3 components, max center error %.4f (<= 0.02)", worst);
}

void stage1_accuracy(std::string& json_out) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::string r = stage1_centers(json_out);
  const double t = since(t0);
  report(6, r.rfind("PASS", 0) == 0 && t < 600.0, t, r.substr(5));
}

// ------------------------------------------------------------------ 7, 10

ExperimentConfig coverage_config() {
  ExperimentConfig c = scaled("single-smooth", 45, 64);
  c.stage2.sampler.n_samples = 5000;
  c.stage2.sampler.n_pcn = 200;
  c.stage2.sampler.n_mh = 100;
  return c;
}

struct CoverageOut {
  double coverage = 0.0;
  std::optional<double> ess;
  std::string json;
};

CoverageOut coverage_run() {
  const ExperimentConfig c = coverage_config();
  const SingleRun r = single_inclusion(c, kSeed);
  CoverageOut o;
  const auto& m = r.summary.modes.at(0);
  const auto truth = boundary_polygon(r.scan.phantom.inclusions[0], 4096);
  std::size_t in = 0;
  for (std::size_t k = 0; k < m.band.angles.size(); ++k) {
    const double rt = radius_about(truth, m.mean_center, m.band.angles[k]);
    in += rt >= m.band.lo[k] && rt <= m.band.hi[k];
  }
  o.coverage = double(in) / double(m.band.angles.size());
  o.ess = r.summary.ess;
  io::ChainHeader h{r.index, c.stage2.prior_for(r.index), c.stage2.weights, r.chain.b1, r.chain.b2};
  o.json = io::to_json(r.s1).dump() + "\n" + io::to_json(r.summary).dump() + "\n" + io::chain_jsonl(r.chain, h);
  return o;
}

// ------------------------------------------------------------------ 8

void noise_monotonicity() {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<double> med;
  std::string detail;
  for (double level : {1.0, 5.0}) {
    std::vector<double> gv;
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      ExperimentConfig c = scaled("single-smooth", 45, 64);
      c.noise = {std::nullopt, level};
      c.stage2.sampler.n_samples = 2000;
      c.stage2.sampler.n_pcn = 100;
      c.stage2.sampler.n_mh = 50;
      gv.push_back(single_inclusion(c, seed).summary.global_variance);
    }
    std::sort(gv.begin(), gv.end());
    med.push_back(gv[1]);
    detail += f("%g%%: median %.3e; ", level, gv[1]);
  }
  const double ratio = med[1] / med[0];
  const double t = since(t0);
  report(8, med[1] > med[0] && ratio > 2.0 && t < 2700.0, t, detail + f("ratio %.2f (> 2)", ratio));
}

// ------------------------------------------------------------------ 9

void sparse_widening() {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<double> width;
  for (std::size_t n_theta : {10u, 100u}) {
    ExperimentConfig c = scaled("single-smooth", n_theta, 64);
    c.stage2.sampler.n_samples = 2000;
    c.stage2.sampler.n_pcn = 100;
    c.stage2.sampler.n_mh = 50;
    width.push_back(single_inclusion(c, kSeed).summary.modes.at(0).band.mean_width());
  }
  const double t = since(t0);
  report(9, width[0] > width[1] && t < 1800.0, t,
         f("mean band width %.4f at N_theta=10 vs %.4f at N_theta=100", width[0], width[1]));
}

}  // namespace

int main() {
  const auto guard = [](int id, const std::function<void()>& body) {
    try {
      body();
    } catch (const std::exception& e) {
      report(id, false, 0.0, std::string("exception: ") + e.what());
    }
  };
  guard(1, radon_oracle);
  guard(2, functional_vs_grid);
  guard(3, prior_invariance);
  guard(4, dimension_robustness);
  guard(5, hpd_correctness);

  std::string s1a, s1b;
  guard(6, [&] { stage1_accuracy(s1a); });

  CoverageOut cov;
  bool have_cov = false;
  guard(7, [&] {
    const auto t0 = std::chrono::steady_clock::now();
    cov = coverage_run();
    have_cov = true;
    const double t = since(t0);
    report(7, cov.coverage >= 0.9 && t < 900.0, t, f("true boundary inside the 99%% band at %.1f%% of 128 angles (>= 90%%)", 100 * cov.coverage));
  });
  guard(8, noise_monotonicity);
  guard(9, sparse_widening);
  guard(10, [&] {
    const bool ok = have_cov && cov.ess && *cov.ess >= 100.0;
    report(10, ok, 0.0, cov.ess ? f("ESS of first-mode radius at angle 0: %.1f (>= 100)", *cov.ess) : "ESS undefined");
  });
  guard(11, [&] {
    const auto t0 = std::chrono::steady_clock::now();
    stage1_centers(s1b);
    const CoverageOut again = coverage_run();
    const bool same6 = !s1a.empty() && s1a == s1b, same7 = have_cov && cov.json == again.json;
    report(11, same6 && same7, since(t0),
           std::string("criterion 6 JSON ") + (same6 ? "identical" : "differs") + f(" (%g bytes), ", double(s1a.size())) +
               "criterion 7 JSON " + (same7 ? "identical" : "differs") + f(" (%g bytes)", double(cov.json.size())));
  });
  std::printf("%d of 11 criteria failed\n", failures);
  return std::min(failures, 255);
}
