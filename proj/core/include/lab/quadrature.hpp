#pragma once

#include <functional>
#include <vector>

#include "lab/enumeration.hpp"
#include "lab/geometry.hpp"
#include "lab/rng.hpp"

namespace lab {

struct QuadratureSpec {
  int mc_samples = 200000;
  double t_max = 12.0;   // H Cartan-coordinate truncation
  double x_max = 100.0;  // U truncation (radius in R^{n-1})
  std::uint64_t seed = 0x5eedULL;
  bool monte_carlo = true;  // importance MC (with sigma) vs deterministic panels
  int grid_m = 64;          // K-grid size (n=2: uniform thetas; else Haar samples)
};

struct IntegralEstimate {
  double value = 0;
  double sigma = 0;       // MC standard error (0 for deterministic panels)
  double tail_bound = 0;  // truncation tail estimate
};

// Haar-random SO(m) matrix (Gaussian QR with the sign convention fixing the
// factorization, then a determinant correction).
Mat haar_sample_SO(int m, Rng& rng);

// integral over H_{i,j} of f(h), where |f(h)| <= C |h|^{-alpha} is the
// declared decay class; requires alpha > n-2 (the convergent zone).
IntegralEstimate h_cartan_quadrature(int i, int j, const std::function<double(const Mat&)>& f,
                                     double alpha, const QuadratureSpec& spec);

// integral over R^{n-1} of f(u(x)) dx for |f(u)| <= C |u|^{-alpha},
// alpha > (n-1)/2. Supports n = 2, 3 deterministically; any n with MC.
IntegralEstimate u_quadrature(int n, const std::function<double(const Mat&)>& f, double alpha,
                              const QuadratureSpec& spec);

// Tabulated density on K / K_{P^inf} with quadrature weights.
struct DensityProfile {
  int n = 2, r = 2;
  std::vector<double> thetas;  // n = 2: absolute angles, uniform grid
  std::vector<Mat> ks;         // n >= 3: Haar sample atoms
  Vec values;                  // nonnegative, sum(values .* weights) = 1
  Vec weights;
  Vec sigmas;                  // per-point MC standard error estimate
  double tail_bound = 0;
  std::uint64_t seed = 0;

  int size() const { return int(values.size()); }
  // density value at an absolute angle (n = 2, piecewise constant)
  double value_at_theta(double theta) const;
  // CDF over [0, 2pi) (n = 2)
  double cdf_theta(double theta) const;
  double sample_theta(Rng& rng) const;  // inverse CDF
  int sample_index(Rng& rng) const;     // atom index by weight*value
};

// w_{P0}: positive-definite P0 = g0 . span{e_1..e_r}; H = H_{r-1, n-r}; the
// r = 1 case carries the extra a(-inf) term of the two-sided decomposition.
DensityProfile eval_w_P0(int n, int r, const GroupElement& g0, const NormSpec& norm,
                         const QuadratureSpec& spec);

// w^inf_{P0}: degenerate P0 = g0 . span{e_1 + e_{n+1}, e_2..e_r}, n >= 3.
// (The H-integral is replaced by the U-integral.)
DensityProfile eval_w_infty(int n, int r, const GroupElement& g0, const NormSpec& norm,
                            const QuadratureSpec& spec);

// w_{theta0} on the circle of degenerate planes (n = 2); profile indexed by
// the absolute plane angle.
DensityProfile eval_w_theta0(double theta0, const NormSpec& norm, const QuadratureSpec& spec);

struct VolumeConstant {
  int n = 2;
  double value = 0;      // lim Vol(G_T)/T^{n-1}, normalized to the KAU Haar reference
  double raw = 0;        // before cross-decomposition normalization
  double std_error = 0;
  double norm_factor = 1;  // Vol_KAU(T0) / Vol_D(T0)
};

// Closed-form limit constant of Vol(G_T)/T^{n-1} for the chosen
// decomposition (U by default). Decompositions other than U are rescaled
// against the common KAU Haar reference at T0 = 50.
VolumeConstant volume_constant(int n, const NormSpec& norm, const QuadratureSpec& spec,
                               const SubgroupSpec& which = SubgroupSpec::U_group());

// Vol(G_T) through the KAU Haar formula; the s-section of the ball is solved
// exactly per sample, so only (k, x) are integrated numerically.
IntegralEstimate vol_ball_mc(int n, const NormSpec& norm, double T, const QuadratureSpec& spec);

struct BTLimitReport {
  double lhs = 0;  // (1/T^{n-1}) int_H int_{b_T(k,h)} omega(s) ds dh
  double rhs = 0;  // the closed-form limit of the same quantity
  double ratio = 0;
};

BTLimitReport bT_limit_check(const GroupElement& k, const SubgroupSpec& which,
                             const NormSpec& norm, double T, const QuadratureSpec& spec);

// ---- building blocks (exposed for tests) ----

// M(s) = e^s A + e^{-s} B + C
struct SDecomp {
  Mat A, B, C;
};
SDecomp s_decomposition(const Mat& left, const Mat& right);

// {s in domain : norm(M(s)) <= T} as a union of intervals
std::vector<std::pair<double, double>> feasible_s(const SDecomp& d, const NormSpec& norm, double T,
                                                  double s_lo, double s_hi);

// int sinh(s)^i cosh(s)^j ds over [s1, s2]
double omega_integral_H(int i, int j, double s1, double s2);
// int e^{(n-1)s} ds over [s1, s2]
double omega_integral_U(int n, double s1, double s2);

// real roots of a polynomial of degree <= 4 (ascending coefficients)
std::vector<double> real_roots(const std::vector<double>& coeffs);

// A sample point of H_{i,j} with its importance weight (Cartan coordinates).
struct HSample {
  Mat h;
  double weight;  // d(h-Haar)/d(sampling law)
  double t;
};
HSample sample_H(int i, int j, double alpha, const QuadratureSpec& spec, Rng& rng);

// A sample of x in R^{n-1} with importance weight for dx.
struct USample {
  Vec x;
  double weight;
};
USample sample_U(int n, Rng& rng);

// Haar sample of K_{P^inf} = S(O(r-1) x O(n-r)) embedded as diag(1, A, B).
Mat sample_K_Pinfty(int n, int r, Rng& rng);

}  // namespace lab
