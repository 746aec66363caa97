#pragma once

// Parallel-beam Radon forward operators: grid-based (bilinear image,
// midpoint quadrature), functional (exact inclusion crossings, resolution
// independent), and a fast polygon projector for the star-shaped likelihood.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "ctbuq/errors.hpp"
#include "ctbuq/geometry.hpp"
#include "ctbuq/priors.hpp"
#include "ctbuq/randfield.hpp"
#include "ctbuq/rng.hpp"

namespace ctbuq {

struct ScanGeometry {
  double theta_max = std::numbers::pi;  ///< radians, in (0, pi]
  std::size_t n_theta = 100;
  std::size_t n_s = 100;
  double detector_halfwidth = 1.0;

  void validate() const {
    require(theta_max > 0.0 && theta_max <= std::numbers::pi + 1e-12, "theta_max must lie in (0, pi]");
    require(n_theta >= 1 && n_s >= 1, "n_theta and n_s must be positive");
    require(detector_halfwidth > 0.0, "detector_halfwidth must be positive");
  }

  /// theta_i = i * theta_max / n_theta, i = 0..n_theta-1.
  double angle(std::size_t i) const { return double(i) * theta_max / double(n_theta); }

  /// Detector pixel centers uniformly covering [-w, w].
  double offset(std::size_t j) const {
    const double w = detector_halfwidth;
    return -w + (double(j) + 0.5) * (2.0 * w / double(n_s));
  }

  std::size_t size() const { return n_theta * n_s; }

  /// min(2/N_s, 1e-2) / 2
  double default_step() const { return std::min(2.0 * detector_halfwidth / double(n_s), 1e-2) / 2.0; }

  friend bool operator==(const ScanGeometry&, const ScanGeometry&) = default;
};

/// Angle-major measurement matrix: row i holds angle theta_i.
struct Sinogram {
  ScanGeometry geometry;
  std::vector<double> values;

  Sinogram() = default;
  explicit Sinogram(const ScanGeometry& g, double fill = 0.0) : geometry(g), values(g.size(), fill) {}

  double& at(std::size_t i, std::size_t j) { return values[i * geometry.n_s + j]; }
  double at(std::size_t i, std::size_t j) const { return values[i * geometry.n_s + j]; }

  double norm2() const { return std::sqrt(std::inner_product(values.begin(), values.end(), values.begin(), 0.0)); }
  double max_value() const { return values.empty() ? 0.0 : *std::max_element(values.begin(), values.end()); }
};

struct NoiseModel {
  double sigma_noise = 0.0;
  std::size_t dimension = 0;
};

/// Line L_{theta,s}: base + t * direction, clipped to |t| <= t_max.
struct Ray {
  Point2 base;
  Point2 direction;
  double t_max = 0.0;  ///< half chord length in the sqrt(2)-radius circle

  Point2 at(double t) const { return base + t * direction; }
};

/// Zero-based indices: 0 <= i < n_theta, 0 <= j < n_s.
inline Ray ray(const ScanGeometry& g, std::size_t i, std::size_t j) {
  require(i < g.n_theta && j < g.n_s, "ray: index out of range");
  const double th = g.angle(i);
  const double s = g.offset(j);
  const double c = std::cos(th), sn = std::sin(th);
  const double r2 = 2.0 - s * s;
  return {{s * c, s * sn}, {-sn, c}, r2 > 0.0 ? std::sqrt(r2) : 0.0};
}

/// Half length of the chord of the unit disk at offset s (0 if the line misses).
inline double unit_disk_half_chord(double s) {
  const double q = 1.0 - s * s;
  return q > 0.0 ? std::sqrt(q) : 0.0;
}

namespace detail {

/// Midpoint nodes on [-L, L] with at most `step` spacing; calls f(t, weight).
template <class F>
void midpoint_nodes(double a, double b, double step, F&& f) {
  if (b <= a) return;
  const std::size_t n = std::max<std::size_t>(1, std::size_t(std::ceil((b - a) / step - 1e-12)));
  const double h = (b - a) / double(n);
  for (std::size_t k = 0; k < n; ++k) f(a + (double(k) + 0.5) * h, h);
}

}  // namespace detail

/// Line integrals of a bilinearly interpolated image. The image is treated as
/// zero outside the unit disk, so each ray is integrated over its unit-disk
/// chord (a sub-chord of the sqrt(2) clip) with the composite midpoint rule.
inline Sinogram radon_grid(const Field2D& image, const ScanGeometry& g, double step = 0.0) {
  g.validate();
  if (step <= 0.0) step = g.default_step();
  Sinogram out(g);
  for (std::size_t i = 0; i < g.n_theta; ++i) {
    for (std::size_t j = 0; j < g.n_s; ++j) {
      const Ray r = ray(g, i, j);
      const double L = std::min(unit_disk_half_chord(g.offset(j)), r.t_max);
      double acc = 0.0;
      detail::midpoint_nodes(-L, L, step, [&](double t, double w) { acc += w * image.bilinear(r.at(t)); });
      out.at(i, j) = acc;
    }
  }
  return out;
}

/// The radon_grid quadrature assembled once as a sparse matrix (CSR), so that
/// repeated projections of images on the same grid are a mat-vec.
class GridProjector {
 public:
  GridProjector(const GridSpec& grid, const ScanGeometry& g, double step = 0.0) : grid_(grid), geometry_(g) {
    g.validate();
    if (step <= 0.0) step = g.default_step();
    Field2D probe(grid);
    row_start_.reserve(g.size() + 1);
    row_start_.push_back(0);
    std::vector<std::pair<std::size_t, double>> row;
    for (std::size_t i = 0; i < g.n_theta; ++i) {
      for (std::size_t j = 0; j < g.n_s; ++j) {
        row.clear();
        const Ray r = ray(g, i, j);
        const double L = std::min(unit_disk_half_chord(g.offset(j)), r.t_max);
        detail::midpoint_nodes(-L, L, step, [&](double t, double w) { add_bilinear(r.at(t), w, row); });
        std::sort(row.begin(), row.end(), [](auto& a, auto& b) { return a.first < b.first; });
        for (std::size_t k = 0; k < row.size();) {
          std::size_t col = row[k].first;
          double v = 0.0;
          while (k < row.size() && row[k].first == col) v += row[k++].second;
          cols_.push_back(col);
          vals_.push_back(v);
        }
        row_start_.push_back(cols_.size());
      }
    }
  }

  const GridSpec& grid() const { return grid_; }
  const ScanGeometry& geometry() const { return geometry_; }
  std::size_t nonzeros() const { return vals_.size(); }

  void apply(std::span<const double> image, std::span<double> out) const {
    require(image.size() == grid_.nx * grid_.ny && out.size() == geometry_.size(),
            "GridProjector::apply: size mismatch");
    for (std::size_t r = 0; r + 1 < row_start_.size(); ++r) {
      double acc = 0.0;
      for (std::size_t k = row_start_[r]; k < row_start_[r + 1]; ++k) acc += vals_[k] * image[cols_[k]];
      out[r] = acc;
    }
  }

  Sinogram apply(const Field2D& image) const {
    Sinogram s(geometry_);
    apply(image.values, s.values);
    return s;
  }

 private:
  // Mirrors Field2D::bilinear, emitting weights instead of values.
  void add_bilinear(Point2 p, double w, std::vector<std::pair<std::size_t, double>>& row) const {
    const double fx = (p.x - grid_.origin.x) / grid_.spacing - 0.5;
    const double fy = (p.y - grid_.origin.y) / grid_.spacing - 0.5;
    const double cx = std::clamp(fx, 0.0, double(grid_.nx - 1));
    const double cy = std::clamp(fy, 0.0, double(grid_.ny - 1));
    const std::size_t i0 = std::min(std::size_t(cx), grid_.nx > 1 ? grid_.nx - 2 : 0);
    const std::size_t j0 = std::min(std::size_t(cy), grid_.ny > 1 ? grid_.ny - 2 : 0);
    const std::size_t i1 = std::min(i0 + 1, grid_.nx - 1);
    const std::size_t j1 = std::min(j0 + 1, grid_.ny - 1);
    const double tx = cx - double(i0);
    const double ty = cy - double(j0);
    row.emplace_back(j0 * grid_.nx + i0, w * (1 - tx) * (1 - ty));
    row.emplace_back(j0 * grid_.nx + i1, w * tx * (1 - ty));
    row.emplace_back(j1 * grid_.nx + i0, w * (1 - tx) * ty);
    row.emplace_back(j1 * grid_.nx + i1, w * tx * ty);
  }

  GridSpec grid_;
  ScanGeometry geometry_;
  std::vector<std::size_t> row_start_;
  std::vector<std::size_t> cols_;
  std::vector<double> vals_;
};

namespace detail {

/// Ray parameters where the line crosses the inclusion boundary: located on
/// a fine polygon, then refined by bisection on the exact radius function.
inline void boundary_crossings(const StarInclusion& inc, const std::vector<Point2>& poly, const Ray& r,
                               std::vector<double>& out) {
  const Point2 n{r.direction.y, -r.direction.x};  // unit normal, n . base = s
  const double s = dot(n, r.base);
  const auto w = kl_weights(inc.params, inc.coeffs.n_kl(), inc.weights);
  auto g = [&](double t) {
    const Point2 d = r.at(t) - inc.center;
    const double rho = norm(d);
    if (rho == 0.0) return -1.0;
    return rho - std::exp(evaluate_boundary_field(inc.coeffs.values, w, inc.params.mean, polar_angle(d)));
  };
  const std::size_t m = poly.size();
  for (std::size_t k = 0; k < m; ++k) {
    const Point2 a = poly[k], b = poly[(k + 1) % m];
    const double ua = dot(n, a) - s, ub = dot(n, b) - s;
    if ((ua <= 0.0) == (ub <= 0.0)) continue;
    const double lam = ua / (ua - ub);
    const double ta = dot(r.direction, a - r.base), tb = dot(r.direction, b - r.base);
    double t = ta + lam * (tb - ta);
    const double delta = 2.0 * norm(b - a) + 1e-9;
    double lo = t - delta, hi = t + delta;
    double glo = g(lo), ghi = g(hi);
    if ((glo < 0.0) != (ghi < 0.0)) {
      for (int it = 0; it < 48; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double gm = g(mid);
        if ((gm < 0.0) == (glo < 0.0)) {
          lo = mid;
          glo = gm;
        } else {
          hi = mid;
        }
      }
      t = 0.5 * (lo + hi);
    }
    out.push_back(t);
  }
}

}  // namespace detail

/// Line integrals of the phantom's attenuation function. Each ray's unit-disk
/// chord is split at the inclusion boundary crossings; every piece is then
/// integrated with the composite midpoint rule at spacing <= step, so constant
/// pieces are exact and smooth background pieces converge at second order.
inline Sinogram radon_functional(const Phantom& ph, const ScanGeometry& g, double step = 0.0,
                                 std::size_t n_poly = 1024) {
  g.validate();
  if (step <= 0.0) step = g.default_step();
  std::vector<std::vector<Point2>> polys;
  for (const auto& inc : ph.inclusions) polys.push_back(boundary_polygon(inc, n_poly));
  const auto* field_bg = std::get_if<FieldBackground>(&ph.background);

  Sinogram out(g);
  std::vector<double> cuts;
  for (std::size_t i = 0; i < g.n_theta; ++i) {
    for (std::size_t j = 0; j < g.n_s; ++j) {
      const Ray r = ray(g, i, j);
      const double L = std::min(unit_disk_half_chord(g.offset(j)), r.t_max);
      if (L <= 0.0) continue;
      cuts.clear();
      cuts.push_back(-L);
      cuts.push_back(L);
      for (std::size_t q = 0; q < ph.inclusions.size(); ++q) {
        detail::boundary_crossings(ph.inclusions[q], polys[q], r, cuts);
      }
      std::sort(cuts.begin(), cuts.end());
      double acc = 0.0;
      for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
        const double a = std::max(cuts[k], -L), b = std::min(cuts[k + 1], L);
        if (b <= a) continue;
        const Point2 mid = r.at(0.5 * (a + b));
        bool inside = false;
        for (const auto& inc : ph.inclusions) inside = inside || contains(inc, mid);
        if (inside) {
          acc += ph.levels.a_plus * (b - a);
        } else if (field_bg) {
          detail::midpoint_nodes(a, b, step,
                                 [&](double t, double w) { acc += w * std::exp(field_bg->log_field.bilinear(r.at(t))); });
        } else {
          acc += ph.levels.a_minus * (b - a);
        }
      }
      out.at(i, j) = acc;
    }
  }
  return out;
}

/// Fast forward map of a single star-shaped inclusion on a constant
/// background: y = a_minus * chord + (a_plus - a_minus) * |ray ∩ inclusion ∩ D|.
/// The boundary is a polygon through the basis angles; per projection angle
/// the vertices are projected once and each edge is binned to the detector
/// offsets it spans.
class StarProjector {
 public:
  StarProjector(const ScanGeometry& g, const AttenuationLevels& levels, BoundaryBasis basis)
      : geometry_(g), levels_(levels), basis_(std::move(basis)) {
    g.validate();
    levels.validate();
    for (std::size_t i = 0; i < g.n_theta; ++i) {
      cos_.push_back(std::cos(g.angle(i)));
      sin_.push_back(std::sin(g.angle(i)));
    }
    for (std::size_t j = 0; j < g.n_s; ++j) {
      offsets_.push_back(g.offset(j));
      half_chord_.push_back(unit_disk_half_chord(g.offset(j)));
    }
    for (double a : basis_.angles()) dir_.push_back({std::cos(a), std::sin(a)});
  }

  const ScanGeometry& geometry() const { return geometry_; }
  const BoundaryBasis& basis() const { return basis_; }
  const AttenuationLevels& levels() const { return levels_; }

  /// Writes the predicted sinogram for boundary coefficients and center.
  /// The boundary radii of the last coefficient vector are cached, so
  /// center-only moves skip the basis evaluation. Not safe for concurrent use.
  void project(std::span<const double> coeffs, Point2 center, std::span<double> out) const {
    require(out.size() == geometry_.size(), "StarProjector::project: size mismatch");
    const std::size_t m = basis_.angles().size();
    if (!std::equal(coeffs.begin(), coeffs.end(), cached_coeffs_.begin(), cached_coeffs_.end())) {
      std::vector<double> xi(m);
      basis_.evaluate(coeffs, xi);
      for (std::size_t k = 0; k < m; ++k) {
        if (!std::isfinite(xi[k])) throw NumericalError("StarProjector: non-finite boundary field");
        xi[k] = std::exp(xi[k]);
      }
      cached_coeffs_.assign(coeffs.begin(), coeffs.end());
      cached_radii_ = std::move(xi);
    }
    std::vector<Point2> poly(m);
    for (std::size_t k = 0; k < m; ++k) {
      const double r = cached_radii_[k];
      poly[k] = {center.x + r * dir_[k].x, center.y + r * dir_[k].y};
    }
    project_polygon(poly, out);
  }

  /// `poly` must be simple and counter-clockwise. Each ray's chord through
  /// the polygon is the signed sum of its crossing positions, clipped to the
  /// disk: exits count positive, entries negative.
  void project_polygon(const std::vector<Point2>& poly, std::span<double> out) const {
    require(out.size() == geometry_.size(), "StarProjector::project_polygon: size mismatch");
    const std::size_t ns = geometry_.n_s;
    const double ds = 2.0 * geometry_.detector_halfwidth / double(ns);
    const double inv_ds = 1.0 / ds;
    const double s0 = offsets_.front();
    const double contrast = levels_.a_plus - levels_.a_minus;
    const std::size_t m = poly.size();
    std::vector<double> u(m), w(m);
    for (std::size_t i = 0; i < geometry_.n_theta; ++i) {
      const double c = cos_[i], sn = sin_[i];
      double* row = &out[i * ns];
      for (std::size_t j = 0; j < ns; ++j) row[j] = 0.0;
      for (std::size_t k = 0; k < m; ++k) {
        u[k] = poly[k].x * c + poly[k].y * sn;     // detector coordinate
        w[k] = -poly[k].x * sn + poly[k].y * c;    // position along the ray
      }
      for (std::size_t k = 0; k < m; ++k) {
        const std::size_t k1 = k + 1 == m ? 0 : k + 1;
        const double ua = u[k], ub = u[k1];
        if (ua == ub) continue;
        const double lo = std::min(ua, ub), hi = std::max(ua, ub);
        const double sign = ub < ua ? 1.0 : -1.0;
        // Offsets s_j with lo <= s_j < hi; the index guess is checked below.
        const double flo = (lo - s0) * inv_ds, fhi = (hi - s0) * inv_ds;
        if (fhi < -1.0 || flo > double(ns)) continue;
        const long j0 = std::max(long(flo < 0.0 ? 0.0 : flo), 0L);
        const long j1 = std::min(long(fhi < 0.0 ? 0.0 : fhi) + 1, long(ns) - 1);
        const double slope = (w[k1] - w[k]) / (ub - ua);
        for (long j = j0; j <= j1; ++j) {
          const double s = offsets_[std::size_t(j)];
          if (s < lo || s >= hi) continue;
          const double L = half_chord_[std::size_t(j)];
          const double t = w[k] + (s - ua) * slope;
          row[j] += sign * std::clamp(t, -L, L);
        }
      }
      for (std::size_t j = 0; j < ns; ++j) row[j] = levels_.a_minus * 2.0 * half_chord_[j] + contrast * row[j];
    }
  }

 private:
  ScanGeometry geometry_;
  AttenuationLevels levels_;
  BoundaryBasis basis_;
  std::vector<double> cos_, sin_, offsets_, half_chord_;
  std::vector<Point2> dir_;
  mutable std::vector<double> cached_coeffs_, cached_radii_;
};

/// Either an absolute standard deviation or a percentage noise level.
struct NoiseSpec {
  std::optional<double> sigma;
  std::optional<double> level_pct;
  friend bool operator==(const NoiseSpec&, const NoiseSpec&) = default;
};

struct NoisyScan {
  Sinogram noisy;
  NoiseModel model;
  std::vector<double> noise;    ///< realized epsilon
  double realized_level_pct = 0.0;  ///< 100 * |eps| / |y|, 0 when undefined
};

/// sigma = (level / 100) * |y| / sqrt(N), using the noiseless y.
inline double calibrate_sigma(const Sinogram& clean, double level_pct) {
  require(level_pct > 0.0, "noise level must be positive");
  return level_pct / 100.0 * clean.norm2() / std::sqrt(double(clean.values.size()));
}

inline NoisyScan add_noise(const Sinogram& clean, const NoiseSpec& spec, Rng& rng) {
  double sigma = 0.0;
  if (spec.level_pct) {
    sigma = calibrate_sigma(clean, *spec.level_pct);
  } else if (spec.sigma) {
    require(*spec.sigma >= 0.0, "sigma_noise must be nonnegative");
    sigma = *spec.sigma;
  }
  NoisyScan out{clean, {sigma, clean.values.size()}, std::vector<double>(clean.values.size(), 0.0), 0.0};
  if (sigma > 0.0) {
    std::normal_distribution<double> normal(0.0, sigma);
    for (std::size_t q = 0; q < out.noise.size(); ++q) {
      out.noise[q] = normal(rng);
      out.noisy.values[q] += out.noise[q];
    }
    const double en = std::sqrt(std::inner_product(out.noise.begin(), out.noise.end(), out.noise.begin(), 0.0));
    const double yn = clean.norm2();
    out.realized_level_pct = yn > 0.0 ? 100.0 * en / yn : 0.0;
  }
  return out;
}

struct SnrResult {
  double snr = 0.0;
  double level_pct = 0.0;
};

/// SNR = |y| / |eps|, level = 100 / SNR.
inline SnrResult snr(std::span<const double> y, std::span<const double> eps) {
  const double yn = std::sqrt(std::inner_product(y.begin(), y.end(), y.begin(), 0.0));
  const double en = std::sqrt(std::inner_product(eps.begin(), eps.end(), eps.begin(), 0.0));
  if (!(en > 0.0)) throw UndefinedStatistic("snr: zero noise");
  const double v = yn / en;
  return {v, 100.0 / v};
}

}  // namespace ctbuq
