#pragma once

// Two-stage boundary estimation. Stage 1 samples a level-set posterior,
// segments its mean image and assigns a bounding box to every inclusion.
// Stage 2 samples a star-shaped posterior per inclusion and summarizes the
// center modes, mean boundaries, radial HPD bands and global variance.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <mutex>
#include <numbers>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "ctbuq/diagnostics.hpp"
#include "ctbuq/errors.hpp"
#include "ctbuq/forward.hpp"
#include "ctbuq/inference.hpp"
#include "ctbuq/priors.hpp"
#include "ctbuq/randfield.hpp"
#include "ctbuq/rng.hpp"

namespace ctbuq {

// ---------------------------------------------------------------- segmentation

/// Inclusive pixel-index rectangle.
struct PixelBox {
  long i0 = 0, i1 = 0, j0 = 0, j1 = 0;

  bool intersects(const PixelBox& o) const { return i0 <= o.i1 && o.i0 <= i1 && j0 <= o.j1 && o.j0 <= j1; }
  friend bool operator==(const PixelBox&, const PixelBox&) = default;
};

struct Component {
  std::vector<std::size_t> pixels;  ///< flat indices j * nx + i
  Point2 center;                    ///< mean of pixel centers
  PixelBox extent;
};

/// 4-connected components of `mask`, dropping those with fewer than
/// `min_pixels` pixels. Components are ordered by their first pixel in
/// row-major order.
inline std::vector<Component> segment(const std::vector<char>& mask, const GridSpec& grid, std::size_t min_pixels = 4) {
  require(mask.size() == grid.nx * grid.ny, "segment: mask size does not match grid");
  std::vector<char> seen(mask.size(), 0);
  std::vector<Component> out;
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < mask.size(); ++start) {
    if (!mask[start] || seen[start]) continue;
    Component c;
    c.extent = {long(grid.nx), -1, long(grid.ny), -1};
    stack.assign(1, start);
    seen[start] = 1;
    while (!stack.empty()) {
      const std::size_t q = stack.back();
      stack.pop_back();
      c.pixels.push_back(q);
      const long i = long(q % grid.nx), j = long(q / grid.nx);
      c.extent.i0 = std::min(c.extent.i0, i);
      c.extent.i1 = std::max(c.extent.i1, i);
      c.extent.j0 = std::min(c.extent.j0, j);
      c.extent.j1 = std::max(c.extent.j1, j);
      const long nb[4][2] = {{i - 1, j}, {i + 1, j}, {i, j - 1}, {i, j + 1}};
      for (const auto& p : nb) {
        if (p[0] < 0 || p[1] < 0 || p[0] >= long(grid.nx) || p[1] >= long(grid.ny)) continue;
        const std::size_t r = std::size_t(p[1]) * grid.nx + std::size_t(p[0]);
        if (mask[r] && !seen[r]) {
          seen[r] = 1;
          stack.push_back(r);
        }
      }
    }
    if (c.pixels.size() < min_pixels) continue;
    std::sort(c.pixels.begin(), c.pixels.end());
    double sx = 0.0, sy = 0.0;
    for (std::size_t q : c.pixels) {
      sx += grid.origin.x + (double(q % grid.nx) + 0.5) * grid.spacing;
      sy += grid.origin.y + (double(q / grid.nx) + 0.5) * grid.spacing;
    }
    c.center = {sx / double(c.pixels.size()), sy / double(c.pixels.size())};
    out.push_back(std::move(c));
  }
  return out;
}

/// Foreground = pixels strictly above `threshold`.
inline std::vector<Component> segment(const Field2D& image, double threshold, std::size_t min_pixels = 4) {
  std::vector<char> mask(image.values.size());
  for (std::size_t q = 0; q < mask.size(); ++q) mask[q] = image.values[q] > threshold;
  return segment(mask, image.grid, min_pixels);
}

struct BoxSet {
  std::vector<PixelBox> pixel_boxes;
  std::vector<Rect> boxes;
  bool overlap_warning = false;
};

inline Rect to_rect(const PixelBox& b, const GridSpec& g) {
  return {g.origin.x + double(b.i0) * g.spacing, g.origin.x + double(b.i1 + 1) * g.spacing,
          g.origin.y + double(b.j0) * g.spacing, g.origin.y + double(b.j1 + 1) * g.spacing};
}

/// Pixel extents grown by `margin_pixels` on each side and clipped to the grid.
inline BoxSet bounding_boxes(const std::vector<Component>& comps, const GridSpec& grid, long margin_pixels) {
  require(margin_pixels >= 0, "bounding_boxes: margin must be nonnegative");
  BoxSet s;
  for (const auto& c : comps) {
    PixelBox b{c.extent.i0 - margin_pixels, c.extent.i1 + margin_pixels, c.extent.j0 - margin_pixels,
               c.extent.j1 + margin_pixels};
    b.i0 = std::max(b.i0, 0L);
    b.j0 = std::max(b.j0, 0L);
    b.i1 = std::min(b.i1, long(grid.nx) - 1);
    b.j1 = std::min(b.j1, long(grid.ny) - 1);
    s.pixel_boxes.push_back(b);
    s.boxes.push_back(to_rect(b, grid));
  }
  for (std::size_t a = 0; a < s.pixel_boxes.size(); ++a) {
    for (std::size_t b = a + 1; b < s.pixel_boxes.size(); ++b) {
      s.overlap_warning = s.overlap_warning || s.pixel_boxes[a].intersects(s.pixel_boxes[b]);
    }
  }
  return s;
}

/// ceil((d_min_D / 2) / spacing)
inline long margin_pixels_for(double d_min_D, const GridSpec& grid) {
  return long(std::ceil(0.5 * d_min_D / grid.spacing - 1e-12));
}

// ---------------------------------------------------------------- stage 1

/// Level-set forward model: white noise -> Matern field -> two-valued image
/// -> sinogram through a precomputed grid projector.
class LevelSetForward {
 public:
  LevelSetForward(const SpectralSampler2D& sampler, const GridProjector& projector, const AttenuationLevels& levels)
      : sampler_(&sampler), projector_(&projector), levels_(levels) {
    require(sampler.grid() == projector.grid(), "LevelSetForward: sampler and projector grids differ");
  }

  std::size_t output_size() const { return projector_->geometry().size(); }
  std::size_t dimension() const { return sampler_->dimension(); }

  void image(std::span<const double> xi, std::span<double> img) const {
    sampler_->filter(xi, img);
    for (double& v : img) v = v < 0.0 ? levels_.a_minus : levels_.a_plus;
  }

  void predict(std::span<const double> xi, const std::optional<Point2>&, std::span<double> out) const {
    std::vector<double> img(sampler_->dimension());
    image(xi, img);
    projector_->apply(img, out);
  }

 private:
  const SpectralSampler2D* sampler_;
  const GridProjector* projector_;
  AttenuationLevels levels_;
};

struct Stage1Config {
  AttenuationLevels levels;
  MaternParams prior{2.0, 10.0, 1.0, -1.5};
  /// When set, prior.amplitude is the pointwise standard deviation of the
  /// field rather than the raw spectral constant.
  bool amplitude_is_sd = true;
  std::size_t grid_n = 0;  ///< 0: use N_s (pixel size 2 / N_s)
  int max_mode = 0;        ///< spectral truncation, 0 keeps every mode
  SamplerConfig sampler{0.05, 0.0, 1, 0, 5000, 20, 100, 0, 0.15, 0.25};
  /// Tempered warm-up ahead of tuning at the true noise level.
  AnnealSchedule anneal{30, 300.0, 10};
  double burn_in_fraction = 0.1;
  std::size_t min_component_pixels = 4;
  double d_min_D = 0.1;

  friend bool operator==(const Stage1Config&, const Stage1Config&) = default;
};

struct Stage1Result {
  Field2D mean_field_image;      ///< F_ls applied to the mean coefficients
  Field2D pointwise_mean_image;  ///< mean of F_ls over samples
  std::size_t n_inc = 0;
  std::vector<Point2> centers;
  std::vector<Rect> boxes;
  std::vector<PixelBox> pixel_boxes;
  std::vector<std::size_t> component_sizes;
  bool overlap_warning = false;
  double b1 = 0.0;
  double acceptance = 0.0;
  std::vector<double> phi_trace;
};

namespace detail {
inline void check_stage1_levels(const AttenuationLevels& l) {
  require(l.a_minus >= 0.0 && l.a_minus < l.a_plus, "stage1: need 0 <= a_minus < a_plus");
}
}  // namespace detail

/// Segments the mean image restricted to the unit disk.
inline void localize(Stage1Result& r, const AttenuationLevels& levels, std::size_t min_pixels, double d_min_D) {
  const GridSpec& g = r.mean_field_image.grid;
  std::vector<char> mask(g.nx * g.ny, 0);
  for (std::size_t j = 0; j < g.ny; ++j) {
    for (std::size_t i = 0; i < g.nx; ++i) {
      const Point2 p = r.mean_field_image.pixel_center(i, j);
      mask[j * g.nx + i] = dot(p, p) < 1.0 && r.mean_field_image.at(i, j) > levels.threshold();
    }
  }
  const auto comps = segment(mask, g, min_pixels);
  if (comps.empty()) {
    throw EmptyResult("stage1: no inclusion found in the mean image (no pixel above " +
                      std::to_string(levels.threshold()) + " inside the unit disk)");
  }
  const BoxSet boxes = bounding_boxes(comps, g, margin_pixels_for(d_min_D, g));
  r.n_inc = comps.size();
  r.centers.clear();
  r.component_sizes.clear();
  for (const auto& c : comps) {
    r.centers.push_back(c.center);
    r.component_sizes.push_back(c.pixels.size());
  }
  r.boxes = boxes.boxes;
  r.pixel_boxes = boxes.pixel_boxes;
  r.overlap_warning = boxes.overlap_warning;
}

inline Stage1Result stage1(const Sinogram& y, const NoiseModel& noise, const Stage1Config& cfg, Rng& rng) {
  detail::check_stage1_levels(cfg.levels);
  cfg.sampler.validate();
  require(cfg.burn_in_fraction >= 0.0 && cfg.burn_in_fraction < 1.0, "stage1: burn_in_fraction must lie in [0, 1)");
  require(cfg.sampler.n_samples >= 1, "stage1: need at least one sample");
  const std::size_t n = cfg.grid_n ? cfg.grid_n : y.geometry.n_s + (y.geometry.n_s % 2);
  const GridSpec grid = GridSpec::unit_box(n);
  MaternParams prior = cfg.prior;
  if (cfg.amplitude_is_sd) {
    MaternParams unit = prior;
    unit.amplitude = 1.0;
    prior.amplitude /= std::sqrt(SpectralSampler2D(unit, grid, cfg.max_mode).pointwise_variance());
  }
  const SpectralSampler2D sampler(prior, grid, cfg.max_mode);
  const GridProjector projector(grid, y.geometry);
  const LevelSetForward fwd(sampler, projector, cfg.levels);
  const LikelihoodContext<LevelSetForward> ctx(fwd, y.values, noise);

  ChainState init = make_state(ctx, std::vector<double>(sampler.dimension(), 0.0));
  const std::size_t burn = std::size_t(std::floor(cfg.burn_in_fraction * double(cfg.sampler.n_samples)));
  std::vector<double> sum(sampler.dimension(), 0.0), img_sum(sampler.dimension(), 0.0), img(sampler.dimension());
  std::size_t kept = 0, accepted = 0;
  Stage1Result r;
  r.phi_trace.reserve(cfg.sampler.n_samples);
  const TuneResult t = run_chain_visit(init, ctx, cfg.sampler, rng, [&](std::size_t k, const ChainState& s, const SweepStats& st) {
    accepted += st.pcn_accepted;
    r.phi_trace.push_back(s.phi);
    if (k < burn) return;
    ++kept;
    for (std::size_t q = 0; q < sum.size(); ++q) sum[q] += s.coeffs[q];
    fwd.image(s.coeffs, img);
    for (std::size_t q = 0; q < img.size(); ++q) img_sum[q] += img[q];
  }, cfg.anneal);
  for (double& v : sum) v /= double(kept);
  r.mean_field_image = Field2D(grid);
  fwd.image(sum, r.mean_field_image.values);
  r.pointwise_mean_image = Field2D(grid);
  for (std::size_t q = 0; q < img_sum.size(); ++q) r.pointwise_mean_image.values[q] = img_sum[q] / double(kept);
  r.b1 = t.b1;
  r.acceptance = double(accepted) / double(cfg.sampler.n_samples * std::max<std::size_t>(cfg.sampler.n_pcn, 1));
  localize(r, cfg.levels, cfg.min_component_pixels, cfg.d_min_D);
  return r;
}

// ---------------------------------------------------------------- stage 2

/// Star-shaped forward model on a constant background plus a fixed
/// contribution from the image outside the inclusion's box.
class StarForward {
 public:
  StarForward(const StarProjector& projector, std::vector<double> rest)
      : projector_(&projector), rest_(std::move(rest)) {
    require(rest_.empty() || rest_.size() == projector.geometry().size(), "StarForward: rest size mismatch");
  }

  std::size_t output_size() const { return projector_->geometry().size(); }

  void predict(std::span<const double> xi, const std::optional<Point2>& c, std::span<double> out) const {
    require(c.has_value(), "StarForward: center required");
    projector_->project(xi, *c, out);
    for (std::size_t k = 0; k < rest_.size(); ++k) out[k] += rest_[k];
  }

 private:
  const StarProjector* projector_;
  std::vector<double> rest_;
};

/// E || xi - E xi ||^2 in L2(0, 2pi) via Parseval:
/// pi * sum_k w_k^2 [(da_k)^2 + (db_k)^2], averaged over samples.
inline double global_variance(const std::vector<std::vector<double>>& samples, const MaternParams& params,
                              WeightMode mode = WeightMode::literal) {
  require(samples.size() >= 2, "global_variance: need at least 2 samples");
  const std::size_t d = samples.front().size();
  require(d % 2 == 0, "global_variance: coefficient vectors must have even length");
  for (const auto& s : samples) require(s.size() == d, "global_variance: inconsistent coefficient lengths");
  const auto w = kl_weights(params, d / 2, mode);
  std::vector<double> mean(d, 0.0);
  for (const auto& s : samples)
    for (std::size_t q = 0; q < d; ++q) mean[q] += s[q];
  for (double& v : mean) v /= double(samples.size());
  double acc = 0.0;
  for (const auto& s : samples) {
    for (std::size_t q = 0; q < d; ++q) {
      const double dv = s[q] - mean[q];
      acc += w[q / 2] * w[q / 2] * dv * dv;
    }
  }
  return std::numbers::pi * acc / double(samples.size());
}

struct CenterModes {
  std::vector<std::vector<std::size_t>> modes;  ///< sample indices per mode, heaviest first
  double mass = 0.0;                            ///< fraction of samples in the HPD region
};

/// Bins the center samples on a grid x grid histogram over `box`, keeps the
/// smallest density super-level set holding `level` of the samples (ties
/// kept), and splits it into 8-connected components.
inline CenterModes center_hpd_modes(const std::vector<Point2>& centers, const Rect& box, std::size_t grid, double level) {
  require(!centers.empty(), "center_hpd_modes: no samples");
  require(grid >= 1, "center_hpd_modes: grid must be positive");
  require(level > 0.0 && level <= 1.0, "center_hpd_modes: level must lie in (0, 1]");
  const double wx = (box.xmax - box.xmin) / double(grid), wy = (box.ymax - box.ymin) / double(grid);
  auto bin_of = [&](Point2 p) {
    const long i = std::clamp(long(std::floor((p.x - box.xmin) / wx)), 0L, long(grid) - 1);
    const long j = std::clamp(long(std::floor((p.y - box.ymin) / wy)), 0L, long(grid) - 1);
    return std::size_t(j) * grid + std::size_t(i);
  };
  std::vector<std::size_t> counts(grid * grid, 0), bins(centers.size());
  for (std::size_t k = 0; k < centers.size(); ++k) counts[bins[k] = bin_of(centers[k])]++;
  std::vector<std::size_t> sorted = counts;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  const double need = level * double(centers.size());
  double acc = 0.0;
  std::size_t cut = 0;
  for (std::size_t c : sorted) {
    acc += double(c);
    cut = c;
    if (acc >= need - 1e-9) break;
  }
  std::vector<char> in(counts.size());
  for (std::size_t q = 0; q < counts.size(); ++q) in[q] = counts[q] >= cut && counts[q] > 0;

  std::vector<long> label(counts.size(), -1);
  std::vector<std::size_t> mass;
  std::vector<std::size_t> stack;
  for (std::size_t q = 0; q < counts.size(); ++q) {
    if (!in[q] || label[q] >= 0) continue;
    const long id = long(mass.size());
    mass.push_back(0);
    stack.assign(1, q);
    label[q] = id;
    while (!stack.empty()) {
      const std::size_t b = stack.back();
      stack.pop_back();
      mass[std::size_t(id)] += counts[b];
      const long i = long(b % grid), j = long(b / grid);
      for (long dj = -1; dj <= 1; ++dj) {
        for (long di = -1; di <= 1; ++di) {
          const long ii = i + di, jj = j + dj;
          if (ii < 0 || jj < 0 || ii >= long(grid) || jj >= long(grid)) continue;
          const std::size_t r = std::size_t(jj) * grid + std::size_t(ii);
          if (in[r] && label[r] < 0) {
            label[r] = id;
            stack.push_back(r);
          }
        }
      }
    }
  }
  std::vector<std::size_t> order(mass.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return mass[a] > mass[b]; });
  std::vector<std::size_t> rank(mass.size());
  for (std::size_t r = 0; r < order.size(); ++r) rank[order[r]] = r;

  CenterModes out;
  out.modes.resize(mass.size());
  std::size_t covered = 0;
  for (std::size_t k = 0; k < centers.size(); ++k) {
    const long l = label[bins[k]];
    if (l < 0) continue;
    out.modes[rank[std::size_t(l)]].push_back(k);
    ++covered;
  }
  out.mass = double(covered) / double(centers.size());
  return out;
}

struct RadialBand {
  std::vector<double> angles;
  std::vector<double> lo;
  std::vector<double> mean;  ///< radius of the mean boundary
  std::vector<double> hi;

  double mean_width() const {
    double s = 0.0;
    for (std::size_t k = 0; k < lo.size(); ++k) s += hi[k] - lo[k];
    return lo.empty() ? 0.0 : s / double(lo.size());
  }
};

/// Per angle, the hull of the HPD set of {exp(xi_j(angle))}, widened if
/// needed to contain the mean-boundary radius. Fewer than 100 samples fall
/// back to the sample range.
inline RadialBand radial_band(const std::vector<const std::vector<double>*>& samples, const BoundaryBasis& basis,
                              double level) {
  require(!samples.empty(), "radial_band: no samples");
  const std::size_t m = basis.angles().size();
  const std::size_t d = 2 * basis.n_kl();
  std::vector<double> mean(d, 0.0);
  for (const auto* s : samples)
    for (std::size_t q = 0; q < d; ++q) mean[q] += (*s)[q];
  for (double& v : mean) v /= double(samples.size());

  std::vector<std::vector<double>> radii(m, std::vector<double>(samples.size()));
  std::vector<double> xi(m);
  for (std::size_t j = 0; j < samples.size(); ++j) {
    basis.evaluate(*samples[j], xi);
    for (std::size_t a = 0; a < m; ++a) radii[a][j] = std::exp(xi[a]);
  }
  RadialBand b;
  b.angles = basis.angles();
  const auto mxi = basis.evaluate(mean);
  for (std::size_t a = 0; a < m; ++a) {
    const double mr = std::exp(mxi[a]);
    double lo = 0.0, hi = 0.0;
    if (samples.size() >= 100) {
      const HpdResult h = hpd_1d(radii[a], level);
      lo = h.intervals.front().lo;
      hi = h.intervals.back().hi;
    } else {
      const auto [mn, mx] = std::minmax_element(radii[a].begin(), radii[a].end());
      lo = *mn;
      hi = *mx;
    }
    b.lo.push_back(std::min(lo, mr));
    b.mean.push_back(mr);
    b.hi.push_back(std::max(hi, mr));
  }
  return b;
}

struct SummaryConfig {
  double hpd_level = 0.99;
  std::size_t n_band = 128;
  double burn_in_fraction = 0.1;
  std::size_t mode_grid = 64;

  void validate() const {
    require(hpd_level > 0.0 && hpd_level < 1.0, "hpd_level must lie in (0, 1)");
    require(n_band >= 1, "n_band must be positive");
    require(burn_in_fraction >= 0.0 && burn_in_fraction < 1.0, "burn_in_fraction must lie in [0, 1)");
    require(mode_grid >= 1, "mode_grid must be positive");
  }
  friend bool operator==(const SummaryConfig&, const SummaryConfig&) = default;
};

struct ModeSummary {
  std::vector<std::size_t> samples;  ///< indices into the post-burn-in chain
  std::vector<double> mean_coeffs;
  Point2 mean_center;
  RadialBand band;
};

struct PosteriorSummary {
  std::size_t inclusion_index = 0;
  Rect box;
  std::vector<ModeSummary> modes;
  double mode_mass = 0.0;
  double global_variance = 0.0;
  std::optional<double> ess;  ///< radius at angle 0 over the first mode's samples
  std::optional<std::size_t> acf_zero_lag;
  double pcn_acceptance = 0.0;
  double mh_acceptance = 0.0;
  double b1 = 0.0;
  double b2 = 0.0;
  std::size_t n_kept = 0;
};

/// Summaries of a recorded Stage-2 chain.
inline PosteriorSummary summarize_chain(const Chain& chain, const Rect& box, const MaternParams& params,
                                        WeightMode weights, const SummaryConfig& sc, std::size_t index = 0) {
  sc.validate();
  const std::size_t burn = std::size_t(std::floor(sc.burn_in_fraction * double(chain.states.size())));
  require(chain.states.size() >= burn + 2, "summarize_chain: need at least 2 post-burn-in samples");
  PosteriorSummary s;
  s.inclusion_index = index;
  s.box = box;
  s.n_kept = chain.states.size() - burn;
  const SweepStats tot = chain.totals();
  s.pcn_acceptance = tot.pcn_rate();
  s.mh_acceptance = tot.mh_rate();
  s.b1 = chain.b1;
  s.b2 = chain.b2;

  std::vector<std::vector<double>> coeffs;
  std::vector<Point2> centers;
  coeffs.reserve(s.n_kept);
  for (std::size_t k = burn; k < chain.states.size(); ++k) {
    coeffs.push_back(chain.states[k].coeffs);
    centers.push_back(chain.states[k].center.value_or(Point2{}));
  }
  s.global_variance = global_variance(coeffs, params, weights);

  const std::size_t n_kl = coeffs.front().size() / 2;
  const BoundaryBasis basis(params, n_kl, BoundaryBasis::uniform_angles(sc.n_band), weights);
  const CenterModes cm = center_hpd_modes(centers, box, sc.mode_grid, sc.hpd_level);
  s.mode_mass = cm.mass;
  for (const auto& idx : cm.modes) {
    ModeSummary m;
    m.samples = idx;
    std::vector<const std::vector<double>*> ptrs;
    m.mean_coeffs.assign(2 * n_kl, 0.0);
    double cx = 0.0, cy = 0.0;
    for (std::size_t k : idx) {
      ptrs.push_back(&coeffs[k]);
      for (std::size_t q = 0; q < 2 * n_kl; ++q) m.mean_coeffs[q] += coeffs[k][q];
      cx += centers[k].x;
      cy += centers[k].y;
    }
    for (double& v : m.mean_coeffs) v /= double(idx.size());
    m.mean_center = {cx / double(idx.size()), cy / double(idx.size())};
    m.band = radial_band(ptrs, basis, sc.hpd_level);
    s.modes.push_back(std::move(m));
  }

  if (!s.modes.empty() && s.modes.front().samples.size() >= 4) {
    const auto w = kl_weights(params, n_kl, weights);
    std::vector<double> r0;
    for (std::size_t k : s.modes.front().samples) r0.push_back(std::exp(evaluate_boundary_field(coeffs[k], w, params.mean, 0.0)));
    try {
      s.ess = ess(r0);
      const auto rho = acf(r0, std::min<std::size_t>(r0.size() - 1, 1000));
      s.acf_zero_lag = first_lag_below(rho);
    } catch (const UndefinedStatistic&) {
    }
  }
  return s;
}

struct Stage2Config {
  AttenuationLevels levels;
  /// A single prior shared by all inclusions, or one per inclusion.
  std::vector<MaternParams> prior{MaternParams{3.0, 1.0, 0.3, std::log(0.3)}};
  std::size_t n_kl = 100;
  WeightMode weights = WeightMode::literal;
  std::size_t n_poly = 256;
  SamplerConfig sampler{0.05, 0.01, 20, 20, 1000, 20, 500, 500, 0.15, 0.25};
  AnnealSchedule anneal{20, 100.0, 1};
  SummaryConfig summary;
  std::size_t threads = 1;
  bool keep_chains = true;

  const MaternParams& prior_for(std::size_t i) const {
    return prior.size() == 1 ? prior.front() : prior.at(i);
  }
  friend bool operator==(const Stage2Config&, const Stage2Config&) = default;
};

struct InclusionResult {
  std::size_t index = 0;
  std::optional<PosteriorSummary> summary;
  Chain chain;
  std::string error;  ///< nonempty when this inclusion failed
};

/// y_rest = R[(alpha_bar - a_minus) 1_{outside box}] for each box.
inline std::vector<double> rest_projection(const Stage1Result& s1, std::size_t i, const GridProjector& proj,
                                           double a_minus) {
  const Field2D& img = s1.mean_field_image;
  std::vector<double> masked(img.values.size(), 0.0);
  const PixelBox& b = s1.pixel_boxes.at(i);
  for (std::size_t j = 0; j < img.grid.ny; ++j) {
    for (std::size_t q = 0; q < img.grid.nx; ++q) {
      const bool inside = long(q) >= b.i0 && long(q) <= b.i1 && long(j) >= b.j0 && long(j) <= b.j1;
      if (!inside) masked[j * img.grid.nx + q] = img.at(q, j) - a_minus;
    }
  }
  std::vector<double> out(proj.geometry().size());
  proj.apply(masked, out);
  return out;
}

/// Runs one Stage-2 chain for inclusion i (no summary).
inline Chain stage2_chain(const Sinogram& y, const NoiseModel& noise, const Stage1Result& s1, std::size_t i,
                          const Stage2Config& cfg, Rng& rng, const GridProjector* proj = nullptr) {
  const MaternParams& prior = cfg.prior_for(i);
  validate_boundary_params(prior);
  const BoundaryBasis basis(prior, cfg.n_kl, BoundaryBasis::uniform_angles(cfg.n_poly), cfg.weights);
  const StarProjector star(y.geometry, cfg.levels, basis);
  std::vector<double> rest;
  if (s1.n_inc > 1) {
    std::optional<GridProjector> own;
    if (!proj) proj = &own.emplace(s1.mean_field_image.grid, y.geometry);
    rest = rest_projection(s1, i, *proj, cfg.levels.a_minus);
  }
  const StarForward fwd(star, std::move(rest));
  const LikelihoodContext<StarForward> ctx(fwd, y.values, noise, s1.boxes.at(i));
  const ChainState init = make_state(ctx, std::vector<double>(2 * cfg.n_kl, 0.0), s1.centers.at(i));
  return run_chain(init, ctx, cfg.sampler, rng, cfg.anneal);
}

/// Stage 2 over all inclusions. Inclusion i draws from the stream seeded by
/// derive_seed(master_seed, i), so results do not depend on `threads`.
inline std::vector<InclusionResult> stage2(const Sinogram& y, const NoiseModel& noise, const Stage1Result& s1,
                                           const Stage2Config& cfg, std::uint64_t master_seed) {
  cfg.levels.validate();
  cfg.sampler.validate();
  cfg.summary.validate();
  require(cfg.sampler.n_samples >= 1, "stage2: zero-length chain");
  require(cfg.n_kl >= 1 && cfg.n_poly >= 8, "stage2: need n_kl >= 1 and n_poly >= 8");
  require(s1.n_inc >= 1 && s1.centers.size() == s1.n_inc && s1.boxes.size() == s1.n_inc,
          "stage2: inconsistent Stage-1 result");
  require(s1.n_inc == 1 || s1.pixel_boxes.size() == s1.n_inc, "stage2: Stage-1 result lacks pixel boxes");
  require(cfg.prior.size() == 1 || cfg.prior.size() == s1.n_inc, "stage2: need one prior or one per inclusion");

  std::optional<GridProjector> proj;
  if (s1.n_inc > 1) proj.emplace(s1.mean_field_image.grid, y.geometry);

  std::vector<InclusionResult> results(s1.n_inc);
  auto work = [&](std::size_t i) {
    InclusionResult& r = results[i];
    r.index = i;
    try {
      Rng rng(derive_seed(master_seed, i));
      r.chain = stage2_chain(y, noise, s1, i, cfg, rng, proj ? &*proj : nullptr);
      r.summary = summarize_chain(r.chain, s1.boxes[i], cfg.prior_for(i), cfg.weights, cfg.summary, i);
      if (!cfg.keep_chains) r.chain = Chain{};
    } catch (const std::exception& e) {
      r.error = e.what();
    }
  };
  const std::size_t nt = std::max<std::size_t>(1, std::min(cfg.threads, s1.n_inc));
  if (nt == 1) {
    for (std::size_t i = 0; i < s1.n_inc; ++i) work(i);
  } else {
    std::mutex m;
    std::size_t next = 0;
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < nt; ++t) {
      pool.emplace_back([&] {
        for (;;) {
          std::size_t i;
          {
            std::lock_guard<std::mutex> lk(m);
            if (next >= s1.n_inc) return;
            i = next++;
          }
          work(i);
        }
      });
    }
    for (auto& th : pool) th.join();
  }
  return results;
}

/// Radius of a star-shaped polygon seen from `p` along `angle` (farthest
/// crossing), 0 if the ray misses.
inline double radius_about(const std::vector<Point2>& poly, Point2 p, double angle) {
  const Point2 d{std::cos(angle), std::sin(angle)};
  const Point2 n{-d.y, d.x};
  double best = 0.0;
  for (std::size_t k = 0; k < poly.size(); ++k) {
    const Point2 a = poly[k] - p, b = poly[(k + 1) % poly.size()] - p;
    const double ua = dot(n, a), ub = dot(n, b);
    if ((ua < 0.0) == (ub < 0.0) && ua != 0.0 && ub != 0.0) continue;
    if (ua == ub) continue;
    const double lam = ua / (ua - ub);
    const double t = dot(d, a + lam * (b - a));
    best = std::max(best, t);
  }
  return best;
}

}  // namespace ctbuq
