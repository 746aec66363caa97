#pragma once

// Whittle-Matern Gaussian random fields: 1D periodic boundary fields through a
// truncated Karhunen-Loeve expansion, and 2D periodic fields through spectral
// filtering of white noise.

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <cstddef>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include "ctbuq/errors.hpp"
#include "ctbuq/geometry.hpp"
#include "ctbuq/rng.hpp"

namespace ctbuq {

/// Covariance hyperparameters of (tau^2 I - Laplacian)^(-gamma) plus a constant mean.
struct MaternParams {
  double gamma = 3.0;      ///< smoothness (nu + 1)
  double tau = 1.0;        ///< inverse correlation length
  double amplitude = 1.0;  ///< constant c multiplying the expansion
  double mean = 0.0;       ///< constant mean m

  friend bool operator==(const MaternParams&, const MaternParams&) = default;
};

/// Which eigenvalue weights the 1D expansion uses.
///   literal: c * k^-gamma (tau fixed at 1)
///   exact:   c * (tau^2 + k^2)^(-gamma/2), the true circle eigenvalues
enum class WeightMode { literal, exact };

inline void validate_boundary_params(const MaternParams& p) {
  require(std::isfinite(p.gamma) && p.gamma > 1.0,
          "boundary fields need gamma > 1 (Lipschitz samples)");
  require(std::isfinite(p.tau) && p.tau > 0.0, "tau must be positive");
  require(std::isfinite(p.amplitude) && p.amplitude > 0.0, "amplitude must be positive");
  require(std::isfinite(p.mean), "mean must be finite");
}

/// sqrt(lambda_k) of the 1D expansion.
inline double kl_weight(const MaternParams& p, int k, WeightMode mode = WeightMode::literal) {
  require(k >= 1, "kl_weight: k must be >= 1");
  if (mode == WeightMode::exact) {
    return p.amplitude * std::pow(p.tau * p.tau + double(k) * double(k), -0.5 * p.gamma);
  }
  return p.amplitude * std::pow(double(k), -p.gamma);
}

/// Standard-normal KL coefficients of a periodic boundary field, stored
/// interleaved as (sin_1, cos_1, sin_2, cos_2, ...).
struct BoundaryCoeffs {
  std::vector<double> values;

  BoundaryCoeffs() = default;
  explicit BoundaryCoeffs(std::size_t n_kl) : values(2 * n_kl, 0.0) {}
  explicit BoundaryCoeffs(std::vector<double> v) : values(std::move(v)) {
    require(values.size() % 2 == 0, "BoundaryCoeffs needs an even number of entries");
  }

  std::size_t n_kl() const { return values.size() / 2; }
  double& sin_coeff(std::size_t k) { return values[2 * (k - 1)]; }
  double& cos_coeff(std::size_t k) { return values[2 * (k - 1) + 1]; }
  double sin_coeff(std::size_t k) const { return values[2 * (k - 1)]; }
  double cos_coeff(std::size_t k) const { return values[2 * (k - 1) + 1]; }

  friend bool operator==(const BoundaryCoeffs&, const BoundaryCoeffs&) = default;
};

inline BoundaryCoeffs sample_boundary_coeffs(const MaternParams& /*params*/, std::size_t n_kl,
                                             Rng& rng) {
  require(n_kl >= 1, "sample_boundary_coeffs: n_kl must be >= 1");
  BoundaryCoeffs c(n_kl);
  fill_standard_normal(c.values, rng);
  return c;
}

inline std::vector<double> kl_weights(const MaternParams& p, std::size_t n_kl,
                                      WeightMode mode = WeightMode::literal) {
  std::vector<double> w(n_kl);
  for (std::size_t k = 1; k <= n_kl; ++k) w[k - 1] = kl_weight(p, int(k), mode);
  return w;
}

/// xi(theta) = m + sum_k w_k (a_k sin(k theta) + b_k cos(k theta)).
inline double evaluate_boundary_field(std::span<const double> coeffs,
                                      std::span<const double> weights, double mean,
                                      double angle) {
  double acc = 0.0;
  const std::size_t n = weights.size();
  for (std::size_t k = 1; k <= n; ++k) {
    const double ka = double(k) * angle;
    acc += weights[k - 1] * (coeffs[2 * (k - 1)] * std::sin(ka) + coeffs[2 * (k - 1) + 1] * std::cos(ka));
  }
  return mean + acc;
}

inline std::vector<double> evaluate_boundary_field(const BoundaryCoeffs& coeffs,
                                                   const MaternParams& params,
                                                   std::span<const double> angles,
                                                   WeightMode mode = WeightMode::literal) {
  validate_boundary_params(params);
  const auto w = kl_weights(params, coeffs.n_kl(), mode);
  std::vector<double> out(angles.size());
  for (std::size_t i = 0; i < angles.size(); ++i) {
    require(std::isfinite(angles[i]), "evaluate_boundary_field: non-finite angle");
    out[i] = evaluate_boundary_field(coeffs.values, w, params.mean, angles[i]);
  }
  return out;
}

/// Boundary field evaluation on a fixed angle set, with the trigonometric
/// table precomputed. Used in the inner loop of the star-shaped likelihood.
class BoundaryBasis {
 public:
  BoundaryBasis(const MaternParams& params, std::size_t n_kl, std::vector<double> angles,
                WeightMode mode = WeightMode::literal)
      : params_(params), n_kl_(n_kl), angles_(std::move(angles)) {
    validate_boundary_params(params);
    require(n_kl >= 1, "BoundaryBasis: n_kl must be >= 1");
    const auto w = kl_weights(params, n_kl, mode);
    table_.resize(angles_.size() * 2 * n_kl);
    for (std::size_t i = 0; i < angles_.size(); ++i) {
      double* row = &table_[i * 2 * n_kl];
      for (std::size_t k = 1; k <= n_kl; ++k) {
        row[2 * (k - 1)] = w[k - 1] * std::sin(double(k) * angles_[i]);
        row[2 * (k - 1) + 1] = w[k - 1] * std::cos(double(k) * angles_[i]);
      }
    }
  }

  /// Uniform grid of n angles on [0, 2*pi).
  static std::vector<double> uniform_angles(std::size_t n) {
    std::vector<double> a(n);
    for (std::size_t i = 0; i < n; ++i) a[i] = kTwoPi * double(i) / double(n);
    return a;
  }

  std::size_t n_kl() const { return n_kl_; }
  const std::vector<double>& angles() const { return angles_; }
  const MaternParams& params() const { return params_; }

  void evaluate(std::span<const double> coeffs, std::span<double> out) const {
    require(coeffs.size() == 2 * n_kl_, "BoundaryBasis: coefficient size mismatch");
    const std::size_t m = 2 * n_kl_;
    for (std::size_t i = 0; i < angles_.size(); ++i) {
      const double* row = &table_[i * m];
      double acc[4] = {0.0, 0.0, 0.0, 0.0};
      std::size_t q = 0;
      for (; q + 4 <= m; q += 4)
        for (std::size_t r = 0; r < 4; ++r) acc[r] += row[q + r] * coeffs[q + r];
      for (; q < m; ++q) acc[0] += row[q] * coeffs[q];
      out[i] = params_.mean + ((acc[0] + acc[1]) + (acc[2] + acc[3]));
    }
  }

  std::vector<double> evaluate(std::span<const double> coeffs) const {
    std::vector<double> out(angles_.size());
    evaluate(coeffs, out);
    return out;
  }

 private:
  MaternParams params_;
  std::size_t n_kl_;
  std::vector<double> angles_;
  std::vector<double> table_;
};

/// Regular grid descriptor. `origin` is the lower-left corner of the grid
/// box; pixel (i, j) has its center at origin + ((i + 1/2) h, (j + 1/2) h).
struct GridSpec {
  std::size_t nx = 0;
  std::size_t ny = 0;
  double spacing = 0.0;
  Point2 origin{};

  /// N x N grid covering the 2x2 box [-1, 1]^2.
  static GridSpec unit_box(std::size_t n) { return {n, n, 2.0 / double(n), {-1.0, -1.0}}; }

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

/// Sampled scalar field on a regular grid, row-major with x fastest.
struct Field2D {
  GridSpec grid;
  std::vector<double> values;

  Field2D() = default;
  explicit Field2D(const GridSpec& g, double fill = 0.0) : grid(g), values(g.nx * g.ny, fill) {
    require(g.nx > 0 && g.ny > 0, "Field2D: empty grid");
    require(g.spacing > 0.0, "Field2D: spacing must be positive");
  }

  std::size_t nx() const { return grid.nx; }
  std::size_t ny() const { return grid.ny; }
  double spacing() const { return grid.spacing; }

  double& at(std::size_t i, std::size_t j) { return values[j * grid.nx + i]; }
  double at(std::size_t i, std::size_t j) const { return values[j * grid.nx + i]; }

  Point2 pixel_center(std::size_t i, std::size_t j) const {
    return {grid.origin.x + (double(i) + 0.5) * grid.spacing,
            grid.origin.y + (double(j) + 0.5) * grid.spacing};
  }

  /// Bilinear interpolation between pixel centers; constant extension in the
  /// half-pixel border.
  double bilinear(Point2 p) const {
    const double fx = (p.x - grid.origin.x) / grid.spacing - 0.5;
    const double fy = (p.y - grid.origin.y) / grid.spacing - 0.5;
    const double cx = std::clamp(fx, 0.0, double(grid.nx - 1));
    const double cy = std::clamp(fy, 0.0, double(grid.ny - 1));
    const std::size_t i0 = std::min(std::size_t(cx), grid.nx > 1 ? grid.nx - 2 : 0);
    const std::size_t j0 = std::min(std::size_t(cy), grid.ny > 1 ? grid.ny - 2 : 0);
    const std::size_t i1 = std::min(i0 + 1, grid.nx - 1);
    const std::size_t j1 = std::min(j0 + 1, grid.ny - 1);
    const double tx = cx - double(i0);
    const double ty = cy - double(j0);
    return (1 - tx) * (1 - ty) * at(i0, j0) + tx * (1 - ty) * at(i1, j0) +
           (1 - tx) * ty * at(i0, j1) + tx * ty * at(i1, j1);
  }
};

namespace detail {

inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwDeleter {
  void operator()(void* p) const { fftw_free(p); }
};

template <class T>
using FftwBuffer = std::unique_ptr<T[], FftwDeleter>;

template <class T>
FftwBuffer<T> fftw_alloc(std::size_t n) {
  return FftwBuffer<T>(static_cast<T*>(fftw_malloc(sizeof(T) * n)));
}

}  // namespace detail

/// Spectral sampler for a zero-mean periodic field on `grid` with spectral
/// density S(w) = (tau^2 + |w|^2)^(-gamma), w on the grid's Fourier lattice.
///
/// Normalization: for white noise psi (i.i.d. N(0,1) per pixel) the field is
///   xi = m + c * IFFT( sqrt(S / A) * FFT(psi) ) / sqrt(N)
/// with A the box area and N the pixel count, so the pointwise variance equals
///   c^2 / A * sum_w S(w),
/// the discrete analogue of the continuum KL variance on the periodic box.
/// `max_mode > 0` keeps only frequencies with |k_x|, |k_y| <= max_mode.
class SpectralSampler2D {
 public:
  SpectralSampler2D(const MaternParams& params, const GridSpec& grid, int max_mode = 0)
      : params_(params), grid_(grid), max_mode_(max_mode) {
    require(grid.nx >= 2 && grid.ny >= 2, "sample_field_2d: grid must be at least 2x2");
    require(grid.nx % 2 == 0 && grid.ny % 2 == 0, "sample_field_2d: grid dimensions must be even");
    require(grid.spacing > 0.0, "sample_field_2d: spacing must be positive");
    require(params.gamma >= 0.0 && params.tau > 0.0 && params.amplitude > 0.0,
            "sample_field_2d: need gamma >= 0, tau > 0, amplitude > 0");
    require(max_mode >= 0, "sample_field_2d: max_mode must be >= 0");

    const std::size_t nxc = grid.nx / 2 + 1;
    const double lx = double(grid.nx) * grid.spacing;
    const double ly = double(grid.ny) * grid.spacing;
    const double area = lx * ly;
    const double n = double(grid.nx * grid.ny);
    multiplier_.assign(grid.ny * nxc, 0.0);
    variance_ = 0.0;
    for (std::size_t jy = 0; jy < grid.ny; ++jy) {
      const long ky = jy <= grid.ny / 2 ? long(jy) : long(jy) - long(grid.ny);
      for (std::size_t ix = 0; ix < nxc; ++ix) {
        const long kx = long(ix);
        if (max_mode > 0 && (std::abs(kx) > max_mode || std::abs(ky) > max_mode)) continue;
        const double wx = kTwoPi * double(kx) / lx;
        const double wy = kTwoPi * double(ky) / ly;
        const double s = std::pow(params.tau * params.tau + wx * wx + wy * wy, -params.gamma);
        multiplier_[jy * nxc + ix] = params.amplitude * std::sqrt(s / area) / std::sqrt(n);
      }
    }
    // Variance over the full lattice (both half-planes).
    for (std::size_t jy = 0; jy < grid.ny; ++jy) {
      const long ky = jy <= grid.ny / 2 ? long(jy) : long(jy) - long(grid.ny);
      for (std::size_t jx = 0; jx < grid.nx; ++jx) {
        const long kx = jx <= grid.nx / 2 ? long(jx) : long(jx) - long(grid.nx);
        if (max_mode > 0 && (std::abs(kx) > max_mode || std::abs(ky) > max_mode)) continue;
        const double wx = kTwoPi * double(kx) / lx;
        const double wy = kTwoPi * double(ky) / ly;
        variance_ += std::pow(params.tau * params.tau + wx * wx + wy * wy, -params.gamma);
      }
    }
    variance_ *= params.amplitude * params.amplitude / area;

    auto in = detail::fftw_alloc<double>(grid.nx * grid.ny);
    auto out = detail::fftw_alloc<fftw_complex>(grid.ny * nxc);
    std::lock_guard lock(detail::fftw_planner_mutex());
    forward_ = fftw_plan_dft_r2c_2d(int(grid.ny), int(grid.nx), in.get(), out.get(), FFTW_ESTIMATE);
    backward_ = fftw_plan_dft_c2r_2d(int(grid.ny), int(grid.nx), out.get(), in.get(), FFTW_ESTIMATE);
  }

  SpectralSampler2D(const SpectralSampler2D&) = delete;
  SpectralSampler2D& operator=(const SpectralSampler2D&) = delete;

  ~SpectralSampler2D() {
    std::lock_guard lock(detail::fftw_planner_mutex());
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(backward_);
  }

  std::size_t dimension() const { return grid_.nx * grid_.ny; }
  const GridSpec& grid() const { return grid_; }
  const MaternParams& params() const { return params_; }
  int max_mode() const { return max_mode_; }

  /// Pointwise variance of the field (the normalization constant above).
  double pointwise_variance() const { return variance_; }

  /// Maps white noise to field values (mean included).
  void filter(std::span<const double> white, std::span<double> out) const {
    require(white.size() == dimension() && out.size() == dimension(),
            "SpectralSampler2D::filter: size mismatch");
    const std::size_t nxc = grid_.nx / 2 + 1;
    auto in = detail::fftw_alloc<double>(dimension());
    auto spec = detail::fftw_alloc<fftw_complex>(grid_.ny * nxc);
    std::copy(white.begin(), white.end(), in.get());
    fftw_execute_dft_r2c(forward_, in.get(), spec.get());
    // FFTW's c2r is unnormalized; the 1/sqrt(N) lives in the multiplier.
    for (std::size_t q = 0; q < grid_.ny * nxc; ++q) {
      spec[q][0] *= multiplier_[q];
      spec[q][1] *= multiplier_[q];
    }
    fftw_execute_dft_c2r(backward_, spec.get(), in.get());
    for (std::size_t q = 0; q < dimension(); ++q) out[q] = params_.mean + in[q];
  }

  Field2D field_from_white(std::span<const double> white) const {
    Field2D f(grid_);
    filter(white, f.values);
    return f;
  }

  Field2D sample(Rng& rng) const {
    const auto white = standard_normal_vector(dimension(), rng);
    return field_from_white(white);
  }

 private:
  MaternParams params_;
  GridSpec grid_;
  int max_mode_;
  std::vector<double> multiplier_;
  double variance_ = 0.0;
  fftw_plan forward_ = nullptr;
  fftw_plan backward_ = nullptr;
};

inline Field2D sample_field_2d(const MaternParams& params, const GridSpec& grid, Rng& rng,
                               int max_mode = 0) {
  return SpectralSampler2D(params, grid, max_mode).sample(rng);
}

}  // namespace ctbuq
