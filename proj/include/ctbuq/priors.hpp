#pragma once

// Push-forward maps from Gaussian fields to attenuation images, plus
// star-shaped phantom generation with geometric admissibility checks.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "ctbuq/errors.hpp"
#include "ctbuq/geometry.hpp"
#include "ctbuq/randfield.hpp"
#include "ctbuq/rng.hpp"

namespace ctbuq {

struct AttenuationLevels {
  double a_minus = 0.1;  ///< background
  double a_plus = 1.0;   ///< inclusion intensity

  void validate() const {
    require(a_minus > 0.0 && a_minus < a_plus, "attenuation levels need 0 < a_minus < a_plus");
  }
  double threshold() const { return 0.5 * (a_minus + a_plus); }
  friend bool operator==(const AttenuationLevels&, const AttenuationLevels&) = default;
};

/// a_minus where field < 0, a_plus elsewhere.
inline Field2D level_set_map(const Field2D& field, const AttenuationLevels& levels) {
  Field2D out(field.grid);
  for (std::size_t q = 0; q < field.values.size(); ++q) {
    out.values[q] = field.values[q] < 0.0 ? levels.a_minus : levels.a_plus;
  }
  return out;
}

inline Field2D log_gaussian_map(const Field2D& field) {
  static const double kMaxExponent = std::log(std::numeric_limits<double>::max());
  Field2D out(field.grid);
  for (std::size_t q = 0; q < field.values.size(); ++q) {
    const double v = field.values[q];
    if (!std::isfinite(v)) throw NumericalError("log_gaussian_map: non-finite field value");
    if (v > kMaxExponent) throw NumericalError("log_gaussian_map: exp overflow (saturated)");
    out.values[q] = std::exp(v);
  }
  return out;
}

/// Star-shaped inclusion {x : |x - c| < exp(xi(angle(x - c)))}.
struct StarInclusion {
  Point2 center{};
  BoundaryCoeffs coeffs;
  MaternParams params;
  WeightMode weights = WeightMode::literal;

  double log_radius(double angle) const {
    const auto w = kl_weights(params, coeffs.n_kl(), weights);
    return evaluate_boundary_field(coeffs.values, w, params.mean, angle);
  }

  friend bool operator==(const StarInclusion&, const StarInclusion&) = default;
};

inline double star_radius(const StarInclusion& inc, double angle) {
  return std::exp(inc.log_radius(angle));
}

/// Strict inequality: boundary points are outside. The center is always inside.
inline bool contains(const StarInclusion& inc, Point2 x) {
  const Point2 d = x - inc.center;
  const double r = norm(d);
  if (r == 0.0) return true;
  return r < star_radius(inc, polar_angle(d));
}

/// Boundary vertices at n uniformly spaced polar angles.
inline std::vector<Point2> boundary_polygon(const StarInclusion& inc, std::size_t n) {
  BoundaryBasis basis(inc.params, std::max<std::size_t>(inc.coeffs.n_kl(), 1),
                      BoundaryBasis::uniform_angles(n), inc.weights);
  std::vector<double> xi(n);
  basis.evaluate(inc.coeffs.values, xi);
  std::vector<Point2> poly(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double r = std::exp(xi[k]);
    const double a = basis.angles()[k];
    poly[k] = {inc.center.x + r * std::cos(a), inc.center.y + r * std::sin(a)};
  }
  return poly;
}

/// Area and centroid of a simple polygon (shoelace formula).
inline std::pair<double, Point2> polygon_area_centroid(const std::vector<Point2>& poly) {
  double a2 = 0.0, cx = 0.0, cy = 0.0;
  for (std::size_t k = 0; k < poly.size(); ++k) {
    const Point2 p = poly[k];
    const Point2 q = poly[(k + 1) % poly.size()];
    const double cr = p.x * q.y - q.x * p.y;
    a2 += cr;
    cx += (p.x + q.x) * cr;
    cy += (p.y + q.y) * cr;
  }
  return {0.5 * a2, {cx / (3.0 * a2), cy / (3.0 * a2)}};
}

/// Center of mass of the inclusion region (not the star center).
inline Point2 center_of_mass(const StarInclusion& inc, std::size_t n = 4096) {
  return polygon_area_centroid(boundary_polygon(inc, n)).second;
}

/// Log-background field; attenuation there is exp(field).
struct FieldBackground {
  Field2D log_field;
  MaternParams params;
};

struct ConstantBackground {};

using Background = std::variant<ConstantBackground, FieldBackground>;

struct Phantom {
  std::vector<StarInclusion> inclusions;
  Background background = ConstantBackground{};
  AttenuationLevels levels;
};

inline double evaluate_attenuation(const Phantom& ph, Point2 x) {
  for (const auto& inc : ph.inclusions) {
    if (contains(inc, x)) return ph.levels.a_plus;
  }
  if (const auto* bg = std::get_if<FieldBackground>(&ph.background)) {
    return std::exp(bg->log_field.bilinear(x));
  }
  return ph.levels.a_minus;
}

namespace detail {
// -2 outside the unit disk, -1 background, otherwise the inclusion index.
inline int region_of(const Phantom& ph, Point2 p) {
  if (norm(p) >= 1.0) return -2;
  for (std::size_t k = 0; k < ph.inclusions.size(); ++k)
    if (contains(ph.inclusions[k], p)) return int(k);
  return -1;
}
}  // namespace detail

/// Raster of the phantom on `grid`; zero outside the unit disk. With
/// `supersample` s > 1, a pixel whose corners lie in different regions
/// averages s x s evenly spaced points; other pixels take the center value.
inline Field2D rasterize(const Phantom& ph, const GridSpec& grid, std::size_t supersample = 1) {
  require(supersample >= 1, "rasterize: supersample must be at least 1");
  Field2D out(grid);
  auto point = [&](Point2 p) { return norm(p) < 1.0 ? evaluate_attenuation(ph, p) : 0.0; };
  if (supersample == 1) {
    for (std::size_t j = 0; j < grid.ny; ++j)
      for (std::size_t i = 0; i < grid.nx; ++i) out.at(i, j) = point(out.pixel_center(i, j));
    return out;
  }
  const std::size_t cx = grid.nx + 1;
  std::vector<int> corner(cx * (grid.ny + 1));
  for (std::size_t j = 0; j <= grid.ny; ++j)
    for (std::size_t i = 0; i < cx; ++i)
      corner[j * cx + i] = detail::region_of(ph, {grid.origin.x + double(i) * grid.spacing, grid.origin.y + double(j) * grid.spacing});
  const double sub = grid.spacing / double(supersample);
  const double inv = 1.0 / double(supersample * supersample);
  for (std::size_t j = 0; j < grid.ny; ++j) {
    for (std::size_t i = 0; i < grid.nx; ++i) {
      const int c = corner[j * cx + i];
      if (c == corner[j * cx + i + 1] && c == corner[(j + 1) * cx + i] && c == corner[(j + 1) * cx + i + 1]) {
        out.at(i, j) = point(out.pixel_center(i, j));
        continue;
      }
      const double x0 = grid.origin.x + double(i) * grid.spacing, y0 = grid.origin.y + double(j) * grid.spacing;
      double acc = 0.0;
      for (std::size_t b = 0; b < supersample; ++b)
        for (std::size_t a = 0; a < supersample; ++a) acc += point({x0 + (double(a) + 0.5) * sub, y0 + (double(b) + 0.5) * sub});
      out.at(i, j) = acc * inv;
    }
  }
  return out;
}

enum class ViolationKind {
  overlap,           ///< (I) inclusions intersect
  near_boundary,     ///< (II) inclusion too close to the domain boundary
  insufficient_gap,  ///< (III) distinct inclusions closer than the margin
};

inline const char* to_string(ViolationKind k) {
  switch (k) {
    case ViolationKind::overlap: return "overlap";
    case ViolationKind::near_boundary: return "near_boundary";
    case ViolationKind::insufficient_gap: return "insufficient_gap";
  }
  return "?";
}

struct Violation {
  ViolationKind kind;
  std::size_t first = 0;   ///< inclusion index
  std::size_t second = 0;  ///< other inclusion (pairwise kinds) or same index
  double value = 0.0;      ///< offending distance (0 for overlaps)
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool admissible() const { return violations.empty(); }
};

namespace detail {

struct InclusionOutline {
  std::vector<Point2> poly;
  double r_min = 0.0;
  double r_max = 0.0;
};

inline InclusionOutline outline(const StarInclusion& inc, std::size_t n) {
  InclusionOutline o;
  o.poly = boundary_polygon(inc, n);
  o.r_min = std::numeric_limits<double>::infinity();
  for (const auto& p : o.poly) {
    const double r = norm(p - inc.center);
    o.r_min = std::min(o.r_min, r);
    o.r_max = std::max(o.r_max, r);
  }
  return o;
}

inline bool polygon_contains(const std::vector<Point2>& poly, Point2 p) {
  bool inside = false;
  for (std::size_t a = 0, b = poly.size() - 1; a < poly.size(); b = a++) {
    if ((poly[a].y > p.y) != (poly[b].y > p.y)) {
      const double xc = poly[b].x + (p.y - poly[b].y) * (poly[a].x - poly[b].x) / (poly[a].y - poly[b].y);
      if (p.x < xc) inside = !inside;
    }
  }
  return inside;
}

inline void check_boundary(const StarInclusion& inc, const InclusionOutline& o, std::size_t idx,
                           double d_min_boundary, std::vector<Violation>& out) {
  if (norm(inc.center) + o.r_max < 1.0 - d_min_boundary) return;
  double worst = std::numeric_limits<double>::infinity();
  for (const auto& p : o.poly) worst = std::min(worst, 1.0 - norm(p));
  if (worst < d_min_boundary) out.push_back({ViolationKind::near_boundary, idx, idx, worst});
}

inline void check_pair(const StarInclusion& a, const InclusionOutline& oa, std::size_t ia,
                       const StarInclusion& b, const InclusionOutline& ob, std::size_t ib,
                       double d_min_D, std::vector<Violation>& out) {
  const double dc = norm(a.center - b.center);
  if (dc > oa.r_max + ob.r_max + d_min_D) return;
  // Polygon intersection or containment.
  bool overlap = polygon_contains(ob.poly, oa.poly.front()) || polygon_contains(oa.poly, ob.poly.front());
  double gap = std::numeric_limits<double>::infinity();
  const std::size_t na = oa.poly.size(), nb = ob.poly.size();
  for (std::size_t p = 0; p < na && !overlap; ++p) {
    const Point2 p0 = oa.poly[p], p1 = oa.poly[(p + 1) % na];
    for (std::size_t q = 0; q < nb; ++q) {
      const double d = segment_distance(p0, p1, ob.poly[q], ob.poly[(q + 1) % nb]);
      if (d == 0.0) {
        overlap = true;
        break;
      }
      gap = std::min(gap, d);
    }
  }
  if (overlap) {
    out.push_back({ViolationKind::overlap, ia, ib, 0.0});
  } else if (gap < d_min_D) {
    out.push_back({ViolationKind::insufficient_gap, ia, ib, gap});
  }
}

}  // namespace detail

/// Checks the admissibility assumptions on discretized boundary polylines:
/// disjointness, distance to the unit circle, and pairwise separation.
inline ValidationReport validate_configuration(const Phantom& ph, double d_min_D,
                                               double d_min_boundary, std::size_t n_check = 256) {
  require(n_check >= 8, "validate_configuration: n_check must be >= 8");
  ValidationReport report;
  std::vector<detail::InclusionOutline> outlines;
  outlines.reserve(ph.inclusions.size());
  for (const auto& inc : ph.inclusions) outlines.push_back(detail::outline(inc, n_check));
  for (std::size_t i = 0; i < ph.inclusions.size(); ++i) {
    detail::check_boundary(ph.inclusions[i], outlines[i], i, d_min_boundary, report.violations);
  }
  for (std::size_t i = 0; i < ph.inclusions.size(); ++i) {
    for (std::size_t j = i + 1; j < ph.inclusions.size(); ++j) {
      detail::check_pair(ph.inclusions[i], outlines[i], i, ph.inclusions[j], outlines[j], j, d_min_D,
                         report.violations);
    }
  }
  return report;
}

/// Everything needed to draw a random phantom.
struct PriorConfig {
  std::size_t n_inc = 1;
  AttenuationLevels levels;
  /// One entry applies to every inclusion; otherwise one per inclusion.
  std::vector<MaternParams> inclusion_params{MaternParams{3.0, 1.0, 0.3, std::log(0.3)}};
  std::size_t n_kl = 100;
  WeightMode weights = WeightMode::literal;
  /// Background log-field parameters; empty means constant a_minus.
  std::optional<MaternParams> background;
  std::size_t background_grid = 128;
  double d_min_D = 0.1;
  double d_min_boundary = 0.1;
  std::size_t n_check = 256;
  std::size_t max_rejections = 10000;

  const MaternParams& params_for(std::size_t i) const {
    return inclusion_params.size() == 1 ? inclusion_params.front() : inclusion_params.at(i);
  }
};

/// Sampling-and-elimination: inclusions are drawn one at a time (center
/// uniform in the unit disk, standard-normal KL coefficients) and a draw is
/// discarded when the partial phantom fails validation.
inline Phantom sample_phantom(const PriorConfig& cfg, Rng& rng) {
  cfg.levels.validate();
  require(cfg.n_inc >= 1, "sample_phantom: n_inc must be >= 1");
  require(cfg.inclusion_params.size() == 1 || cfg.inclusion_params.size() == cfg.n_inc,
          "sample_phantom: need one inclusion parameter set or one per inclusion");
  for (const auto& p : cfg.inclusion_params) validate_boundary_params(p);

  Phantom ph;
  ph.levels = cfg.levels;
  std::vector<detail::InclusionOutline> outlines;
  std::size_t rejections = 0;
  while (ph.inclusions.size() < cfg.n_inc) {
    const std::size_t idx = ph.inclusions.size();
    StarInclusion inc;
    const double r = std::sqrt(uniform01(rng));
    const double a = kTwoPi * uniform01(rng);
    inc.center = {r * std::cos(a), r * std::sin(a)};
    inc.params = cfg.params_for(idx);
    inc.weights = cfg.weights;
    inc.coeffs = sample_boundary_coeffs(inc.params, cfg.n_kl, rng);

    auto o = detail::outline(inc, cfg.n_check);
    std::vector<Violation> v;
    detail::check_boundary(inc, o, idx, cfg.d_min_boundary, v);
    for (std::size_t j = 0; j < idx && v.empty(); ++j) {
      detail::check_pair(ph.inclusions[j], outlines[j], j, inc, o, idx, cfg.d_min_D, v);
    }
    if (!v.empty()) {
      if (++rejections > cfg.max_rejections) {
        throw InfeasibleConfiguration("sample_phantom: exceeded " + std::to_string(cfg.max_rejections) +
                                      " rejected draws while placing inclusion " + std::to_string(idx + 1) +
                                      " of " + std::to_string(cfg.n_inc));
      }
      continue;
    }
    ph.inclusions.push_back(std::move(inc));
    outlines.push_back(std::move(o));
  }

  if (cfg.background) {
    MaternParams bp = *cfg.background;
    FieldBackground bg{sample_field_2d(bp, GridSpec::unit_box(cfg.background_grid), rng), bp};
    ph.background = std::move(bg);
  }
  return ph;
}

}  // namespace ctbuq
