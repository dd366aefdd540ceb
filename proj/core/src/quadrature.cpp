#include "lab/quadrature.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "lab/moduli.hpp"
#include "lab/rng.hpp"

namespace lab {

namespace {

constexpr double kPi = 3.14159265358979323846264338327950288;
constexpr double kTwoPi = 2.0 * kPi;

// 16-point Gauss-Legendre nodes/weights on [-1,1]
struct GL16 {
  double x[16], w[16];
  GL16() {
    for (int k = 0; k < 8; ++k) {
      double t = std::cos(kPi * (k + 0.75) / 16.5);
      for (int it = 0; it < 100; ++it) {
        double p0 = 1.0, p1 = t;
        for (int l = 2; l <= 16; ++l) {
          double p2 = ((2 * l - 1) * t * p1 - (l - 1) * p0) / l;
          p0 = p1;
          p1 = p2;
        }
        double dp = 16.0 * (t * p1 - p0) / (t * t - 1.0);
        double dt = p1 / dp;
        t -= dt;
        if (std::abs(dt) < 1e-15) break;
      }
      double p0 = 1.0, p1 = t;
      for (int l = 2; l <= 16; ++l) {
        double p2 = ((2 * l - 1) * t * p1 - (l - 1) * p0) / l;
        p0 = p1;
        p1 = p2;
      }
      double dp = 16.0 * (t * p1 - p0) / (t * t - 1.0);
      double ww = 2.0 / ((1.0 - t * t) * dp * dp);
      x[k] = -t;
      x[15 - k] = t;
      w[k] = ww;
      w[15 - k] = ww;
    }
  }
};
const GL16& gl16() {
  static GL16 g;
  return g;
}

// integral of f over [a,b] with n_panels x GL16
double panel_integrate(double a, double b, int n_panels, const std::function<double(double)>& f) {
  const GL16& g = gl16();
  double total = 0;
  double h = (b - a) / n_panels;
  for (int p = 0; p < n_panels; ++p) {
    double c = a + (p + 0.5) * h;
    double acc = 0;
    for (int k = 0; k < 16; ++k) acc += g.w[k] * f(c + 0.5 * h * g.x[k]);
    total += acc * 0.5 * h;
  }
  return total;
}

}  // namespace

Mat haar_sample_SO(int m, Rng& rng) {
  if (m <= 0) return Mat(0, 0);
  if (m == 1) return Mat::Ones(1, 1);
  Mat g(m, m);
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < m; ++c) g(r, c) = rng.gaussian();
  Eigen::HouseholderQR<Mat> qr(g);
  Mat Q = qr.householderQ();
  Mat R = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int c = 0; c < m; ++c)
    if (R(c, c) < 0) Q.col(c) *= -1.0;  // fixes the QR ambiguity -> O(m) Haar
  if (Q.determinant() < 0) Q.col(m - 1) *= -1.0;
  return Q;
}

std::vector<double> real_roots(const std::vector<double>& coeffs) {
  // strip leading (highest-degree) zeros
  std::vector<double> c = coeffs;
  while (c.size() > 1 && std::abs(c.back()) < 1e-13 * (1.0 + std::abs(c.front()))) c.pop_back();
  const int deg = int(c.size()) - 1;
  std::vector<double> roots;
  if (deg <= 0) return roots;
  if (deg == 1) {
    roots.push_back(-c[0] / c[1]);
    return roots;
  }
  Mat comp = Mat::Zero(deg, deg);
  for (int k = 0; k < deg; ++k) comp(0, k) = -c[deg - 1 - k] / c[deg];
  for (int k = 1; k < deg; ++k) comp(k, k - 1) = 1.0;
  Eigen::EigenSolver<Mat> es(comp);
  for (int k = 0; k < deg; ++k) {
    std::complex<double> z = es.eigenvalues()(k);
    if (std::abs(z.imag()) < 1e-8 * (1.0 + std::abs(z.real()))) {
      double r = z.real();
      // Newton polish
      for (int it = 0; it < 4; ++it) {
        double p = 0, dp = 0;
        for (int d = deg; d >= 0; --d) {
          dp = dp * r + p;
          p = p * r + c[std::size_t(d)];
        }
        if (std::abs(dp) < 1e-300) break;
        r -= p / dp;
      }
      roots.push_back(r);
    }
  }
  std::sort(roots.begin(), roots.end());
  return roots;
}

SDecomp s_decomposition(const Mat& left, const Mat& right) {
  const int d = int(left.rows());
  const int n = d - 1;
  SDecomp s;
  s.A = left * make_a_infty(n, +1).mat * right;
  s.B = left * make_a_infty(n, -1).mat * right;
  s.C = left * middle_projector(n) * right;
  return s;
}

namespace {

// merge lambda-intervals into s-intervals clipped to [s_lo, s_hi]
void push_clipped(std::vector<std::pair<double, double>>& out, double l1, double l2, double s_lo,
                  double s_hi) {
  if (l2 <= 0) return;
  double s1 = l1 <= 0 ? -1e300 : std::log(l1);
  double s2 = std::log(l2);
  s1 = std::max(s1, s_lo);
  s2 = std::min(s2, s_hi);
  if (s2 > s1) out.emplace_back(s1, s2);
}

std::vector<std::pair<double, double>> feasible_frobenius(const SDecomp& d, const Mat& skew,
                                                          double T, double s_lo, double s_hi) {
  Mat A = d.A, B = d.B, C = d.C;
  if (skew.size() > 0) {
    A = A * skew;
    B = B * skew;
    C = C * skew;
  }
  const double al = A.squaredNorm();
  const double be = B.squaredNorm();
  const double ga = C.squaredNorm() + 2.0 * A.cwiseProduct(B).sum();
  const double de = 2.0 * A.cwiseProduct(C).sum();
  const double ep = 2.0 * B.cwiseProduct(C).sum();
  // F(l) = al l^2 + de l + ga + ep/l + be/l^2 <= T^2;  p(l) = l^2 (F - T^2)
  std::vector<double> p = {be, ep, ga - T * T, de, al};
  std::vector<double> roots = real_roots(p);
  std::vector<double> cuts;
  for (double r : roots)
    if (r > 1e-300) cuts.push_back(r);
  std::sort(cuts.begin(), cuts.end());
  auto F = [&](double l) { return al * l * l + de * l + ga + ep / l + be / (l * l); };
  std::vector<std::pair<double, double>> out;
  double prev = 0.0;
  for (std::size_t k = 0; k <= cuts.size(); ++k) {
    double next = k < cuts.size() ? cuts[k] : prev * 2 + 1e3;
    double mid = k < cuts.size() ? (prev > 0 ? std::sqrt(prev * next) : next * 0.5)
                                 : prev + 1.0;
    if (F(mid) <= T * T) push_clipped(out, prev, next, s_lo, s_hi);
    prev = next;
    if (k == cuts.size()) break;
  }
  return out;
}

// intersection of interval unions
std::vector<std::pair<double, double>> intersect(const std::vector<std::pair<double, double>>& a,
                                                 const std::vector<std::pair<double, double>>& b) {
  std::vector<std::pair<double, double>> out;
  for (const auto& [a1, a2] : a)
    for (const auto& [b1, b2] : b) {
      double l = std::max(a1, b1), r = std::min(a2, b2);
      if (r > l) out.emplace_back(l, r);
    }
  return out;
}

std::vector<std::pair<double, double>> feasible_maxentry(const SDecomp& d, double T, double s_lo,
                                                         double s_hi) {
  std::vector<std::pair<double, double>> cur = {{s_lo, s_hi}};
  const int rows = int(d.A.rows());
  for (int r = 0; r < rows && !cur.empty(); ++r) {
    for (int c = 0; c < rows && !cur.empty(); ++c) {
      const double A = d.A(r, c), B = d.B(r, c), C = d.C(r, c);
      // |A l + C + B/l| <= T  on l > 0:
      //   q_hi(l) = A l^2 + (C - T) l + B <= 0  and  q_lo(l) = A l^2 + (C + T) l + B >= 0
      auto quad_region = [&](double c1, bool below) {
        // region of l > 0 where A l^2 + c1 l + B (<= 0 | >= 0)
        std::vector<std::pair<double, double>> reg;
        std::vector<double> roots = real_roots({B, c1, A});
        std::vector<double> cuts;
        for (double x : roots)
          if (x > 0) cuts.push_back(x);
        std::sort(cuts.begin(), cuts.end());
        auto val = [&](double l) { return A * l * l + c1 * l + B; };
        double prev = 0.0;
        for (std::size_t k = 0; k <= cuts.size(); ++k) {
          double next = k < cuts.size() ? cuts[k] : 1e300;
          double mid = k < cuts.size() ? (prev > 0 ? std::sqrt(prev * next) : 0.5 * next)
                                       : prev * 2 + 1.0;
          double v = val(mid);
          if ((below && v <= 0) || (!below && v >= 0)) {
            double lo = prev <= 0 ? -1e300 : std::log(prev);
            double hi = next >= 1e300 ? 1e300 : std::log(next);
            reg.emplace_back(lo, hi);
          }
          prev = next;
          if (k == cuts.size()) break;
        }
        return reg;
      };
      cur = intersect(cur, quad_region(C - T, true));
      cur = intersect(cur, quad_region(C + T, false));
    }
  }
  std::sort(cur.begin(), cur.end());
  return cur;
}

}  // namespace

std::vector<std::pair<double, double>> feasible_s(const SDecomp& d, const NormSpec& norm, double T,
                                                  double s_lo, double s_hi) {
  switch (norm.kind) {
    case NormKind::Frobenius: return feasible_frobenius(d, Mat(), T, s_lo, s_hi);
    case NormKind::SkewedFrobenius: return feasible_frobenius(d, norm.g0_inv, T, s_lo, s_hi);
    case NormKind::MaxEntry: return feasible_maxentry(d, T, s_lo, s_hi);
  }
  return {};
}

double omega_integral_H(int i, int j, double s1, double s2) {
  auto F = [&](double s) -> double {
    if (i == 0 && j == 0) return s;
    if (i == 1 && j == 0) return std::cosh(s);
    if (i == 0 && j == 1) return std::sinh(s);
    if (i == 1 && j == 1) return 0.5 * std::sinh(s) * std::sinh(s);
    if (i == 2 && j == 0) return 0.5 * (std::sinh(s) * std::cosh(s) - s);
    if (i == 0 && j == 2) return 0.5 * (std::sinh(s) * std::cosh(s) + s);
    return std::nan("");
  };
  double hi = F(s2), lo = F(s1);
  if (!std::isnan(hi) && !std::isnan(lo)) return hi - lo;
  return panel_integrate(s1, s2, 32, [&](double s) {
    return std::pow(std::sinh(s), i) * std::pow(std::cosh(s), j);
  });
}

double omega_integral_U(int n, double s1, double s2) {
  const double a = double(n - 1);
  return (std::exp(a * s2) - std::exp(a * s1)) / a;
}

HSample sample_H(int i, int j, double alpha, const QuadratureSpec& spec, Rng& rng) {
  const int d = i + j + 2;  // n + 1
  Mat h = Mat::Identity(d, d);
  Mat c = haar_sample_SO(i + 1, rng);
  h.topLeftCorner(i + 1, i + 1) = c;
  HSample out;
  out.t = 0;
  out.weight = 1.0;
  if (j == 0) {
    out.h = std::move(h);
    return out;
  }
  if (j == 1) {
    const double lam = std::max(0.5 * alpha, 0.2);
    const double mass = 1.0 - std::exp(-lam * spec.t_max);
    double u = rng.uniform();
    double t = -std::log(1.0 - u * mass) / lam;
    if (rng.uniform() < 0.5) t = -t;
    double p = 0.5 * lam * std::exp(-lam * std::abs(t)) / mass;
    h(d - 2, d - 2) = std::cosh(t);
    h(d - 1, d - 1) = std::cosh(t);
    h(d - 2, d - 1) = std::sinh(t);
    h(d - 1, d - 2) = std::sinh(t);
    out.h = std::move(h);
    out.t = t;
    out.weight = 1.0 / p;
    return out;
  }
  // j >= 2: lower block c1 a_j(t) c2 with c1, c2 in diag(SO(j), 1)
  const double lam = std::max(0.5 * (alpha - double(j - 1)), 0.2);
  const double mass = 1.0 - std::exp(-lam * spec.t_max);
  double u = rng.uniform();
  double t = -std::log(1.0 - u * mass) / lam;
  double p = lam * std::exp(-lam * t) / mass;
  Mat aj = Mat::Identity(j + 1, j + 1);
  aj(0, 0) = std::cosh(t);
  aj(j, j) = std::cosh(t);
  aj(0, j) = std::sinh(t);
  aj(j, 0) = std::sinh(t);
  Mat c1 = Mat::Identity(j + 1, j + 1);
  c1.topLeftCorner(j, j) = haar_sample_SO(j, rng);
  Mat c2 = Mat::Identity(j + 1, j + 1);
  c2.topLeftCorner(j, j) = haar_sample_SO(j, rng);
  h.bottomRightCorner(j + 1, j + 1) = c1 * aj * c2;
  out.h = std::move(h);
  out.t = t;
  out.weight = std::pow(std::sinh(t), j - 1) / p;
  return out;
}

IntegralEstimate h_cartan_quadrature(int i, int j, const std::function<double(const Mat&)>& f,
                                     double alpha, const QuadratureSpec& spec) {
  const int n = i + j + 1;
  if (alpha <= double(n - 2))
    throw std::invalid_argument("h_cartan_quadrature: decay class alpha must exceed n-2");
  Rng rng(spec.seed);
  const int N = std::max(spec.mc_samples, 16);
  double sum = 0, sum2 = 0, boundary = 0;
  for (int k = 0; k < N; ++k) {
    HSample hs = sample_H(i, j, alpha, spec, rng);
    double v = f(hs.h) * hs.weight;
    sum += v;
    sum2 += v * v;
    if (std::abs(hs.t) > spec.t_max - 1.0)
      boundary = std::max(boundary, std::abs(f(hs.h)) * std::exp(alpha * std::abs(hs.t)));
  }
  IntegralEstimate est;
  est.value = sum / N;
  est.sigma = std::sqrt(std::max(sum2 / N - est.value * est.value, 0.0) / N);
  est.tail_bound =
      boundary * std::exp((double(n - 2) - alpha) * spec.t_max) / (alpha - double(n - 2));
  return est;
}

USample sample_U(int n, Rng& rng) {
  USample s;
  if (n == 2) {
    double phi = rng.uniform(-0.5 * kPi, 0.5 * kPi);
    double x = std::tan(phi);
    s.x = Vec::Constant(1, x);
    s.weight = kPi * (1.0 + x * x);
    return s;
  }
  // radial tan transform, uniform direction
  double phi = rng.uniform(0.0, 0.5 * kPi);
  double r = std::tan(phi);
  Vec dir(n - 1);
  double nn = 0;
  do {
    for (int k = 0; k < n - 1; ++k) dir(k) = rng.gaussian();
    nn = dir.norm();
  } while (nn < 1e-12);
  dir /= nn;
  s.x = r * dir;
  const double area =
      2.0 * std::pow(kPi, 0.5 * (n - 1)) / std::tgamma(0.5 * (n - 1));  // |S^{n-2}|
  s.weight = 0.5 * kPi * area * std::pow(r, n - 2) * (1.0 + r * r);
  return s;
}

IntegralEstimate u_quadrature(int n, const std::function<double(const Mat&)>& f, double alpha,
                              const QuadratureSpec& spec) {
  if (alpha <= 0.5 * double(n - 1))
    throw std::invalid_argument("u_quadrature: decay class alpha must exceed (n-1)/2");
  IntegralEstimate est;
  const double phi_max = std::atan(spec.x_max);
  double boundary_C = 0;
  if (!spec.monte_carlo && n == 2) {
    est.value = panel_integrate(-phi_max, phi_max, 96, [&](double phi) {
      double x = std::tan(phi);
      return f(make_u(2, Vec::Constant(1, x)).mat) * (1.0 + x * x);
    });
    double fb = std::abs(f(make_u(2, Vec::Constant(1, spec.x_max)).mat));
    boundary_C = fb * std::pow(1.0 + spec.x_max * spec.x_max, alpha);
  } else if (!spec.monte_carlo && n == 3) {
    const int n_psi = 64;
    double total = 0;
    for (int p = 0; p < n_psi; ++p) {
      double psi = kTwoPi * (p + 0.5) / n_psi;
      total += panel_integrate(0.0, phi_max, 48, [&](double phi) {
        double r = std::tan(phi);
        Vec x(2);
        x << r * std::cos(psi), r * std::sin(psi);
        return f(make_u(3, x).mat) * r * (1.0 + r * r);
      });
    }
    est.value = total * kTwoPi / n_psi;
    Vec xb(2);
    xb << spec.x_max, 0.0;
    boundary_C = std::abs(f(make_u(3, xb).mat)) * std::pow(1.0 + spec.x_max * spec.x_max, alpha);
  } else {
    Rng rng(spec.seed);
    const int N = std::max(spec.mc_samples, 16);
    double sum = 0, sum2 = 0;
    for (int k = 0; k < N; ++k) {
      USample us = sample_U(n, rng);
      if (us.x.norm() > spec.x_max) continue;  // truncation (tail reported)
      double v = f(make_u(n, us.x).mat) * us.weight;
      sum += v;
      sum2 += v * v;
      if (us.x.norm() > 0.9 * spec.x_max)
        boundary_C = std::max(boundary_C,
                              std::abs(f(make_u(n, us.x).mat)) *
                                  std::pow(1.0 + us.x.squaredNorm(), alpha));
    }
    est.value = sum / N;
    est.sigma = std::sqrt(std::max(sum2 / N - est.value * est.value, 0.0) / N);
  }
  // heavy-tail truncation estimate at |u| ~ 1 + x_max^2
  const double Tcut = 1.0 + spec.x_max * spec.x_max;
  est.tail_bound = boundary_C * std::pow(Tcut, 0.5 * double(n - 1) - alpha) /
                   std::max(2.0 * alpha - double(n - 1), 0.5);
  return est;
}

Mat sample_K_Pinfty(int n, int r, Rng& rng) {
  const int a_dim = r - 1, b_dim = n - r;
  Mat k = Mat::Identity(n + 1, n + 1);
  if (a_dim == 0 && b_dim == 0) return k;
  if (a_dim == 0) {
    k.block(r, r, b_dim, b_dim) = haar_sample_SO(b_dim, rng);
    return k;
  }
  if (b_dim == 0) {
    k.block(1, 1, a_dim, a_dim) = haar_sample_SO(a_dim, rng);
    return k;
  }
  Mat A = haar_sample_SO(a_dim, rng);
  Mat B = haar_sample_SO(b_dim, rng);
  if (rng.uniform() < 0.5) {  // the det(A) = det(B) = -1 component
    A.col(a_dim - 1) *= -1.0;
    B.col(b_dim - 1) *= -1.0;
  }
  k.block(1, 1, a_dim, a_dim) = A;
  k.block(r, r, b_dim, b_dim) = B;
  return k;
}

double DensityProfile::value_at_theta(double theta) const {
  const int m = size();
  const double step = kTwoPi / m;
  double t = std::fmod(theta, kTwoPi);
  if (t < 0) t += kTwoPi;
  if (t >= kTwoPi) t = 0.0;
  int idx = int(std::floor(t / step + 0.5)) % m;
  return values(idx);
}

double DensityProfile::cdf_theta(double theta) const {
  const int m = size();
  const double step = kTwoPi / m;
  double t = std::fmod(theta, kTwoPi);
  if (t < 0) t += kTwoPi;
  if (t >= kTwoPi) t = 0.0;
  // piecewise-constant density: cell l covers [l*step - step/2, l*step + step/2)
  double acc = 0;
  for (int l = 0; l < m; ++l) {
    double lo = l * step - 0.5 * step;
    double hi = l * step + 0.5 * step;
    double cover = std::max(0.0, std::min(hi, t) - std::max(lo, 0.0));
    // the wrap cell [2pi - step/2, 2pi) belongs to l = 0
    if (l == 0) cover += std::max(0.0, std::min(t, kTwoPi) - (kTwoPi - 0.5 * step));
    acc += values(l) * cover / kTwoPi;
  }
  return acc;
}

double DensityProfile::sample_theta(Rng& rng) const {
  const int m = size();
  const double step = kTwoPi / m;
  // cell masses
  double u = rng.uniform();
  double acc = 0;
  for (int l = 0; l < m; ++l) {
    double mass = values(l) * step / kTwoPi;
    if (u <= acc + mass || l == m - 1) {
      double frac = mass > 0 ? (u - acc) / mass : rng.uniform();
      frac = std::min(std::max(frac, 0.0), 1.0);
      double theta = (l - 0.5) * step + frac * step;
      if (theta < 0) theta += kTwoPi;
      return theta;
    }
    acc += mass;
  }
  return 0;
}

int DensityProfile::sample_index(Rng& rng) const {
  double u = rng.uniform();
  double acc = 0;
  for (int l = 0; l < size(); ++l) {
    acc += values(l) * weights(l);
    if (u <= acc) return l;
  }
  return size() - 1;
}

namespace {

struct WNode {
  Mat right;      // kappa * a(+-inf) * h_or_u * g0^{-1}, pre-multiplied pieces
  double weight;  // importance weight
};

// shared node set: kappa sample x (H or U sample), with both boundary signs
// when two_term is set
std::vector<WNode> build_w_nodes(int n, int r, bool use_U, bool two_term, const GroupElement& g0,
                                 double alpha, const QuadratureSpec& spec) {
  Rng rng(spec.seed);
  Mat g0inv = inverse(g0).mat;
  const int i = r - 1, j = n - r;
  std::vector<WNode> nodes;
  nodes.reserve(std::size_t(spec.mc_samples) * (two_term ? 2 : 1));
  Mat ap = make_a_infty(n, +1).mat;
  Mat am = make_a_infty(n, -1).mat;
  for (int k = 0; k < spec.mc_samples; ++k) {
    Mat kap = sample_K_Pinfty(n, r, rng);
    Mat core;
    double w = 1.0;
    if (use_U) {
      USample us = sample_U(n, rng);
      core = make_u(n, us.x).mat * g0inv;
      w = us.weight;
    } else {
      HSample hs = sample_H(i, j, alpha, spec, rng);
      core = hs.h * g0inv;
      w = hs.weight;
    }
    nodes.push_back(WNode{kap * ap * core, w});
    if (two_term) nodes.push_back(WNode{kap * am * core, w});
  }
  return nodes;
}

DensityProfile profile_from_nodes(int n, int r, const std::vector<WNode>& nodes,
                                  const NormSpec& norm, const QuadratureSpec& spec,
                                  bool pair_adjacent_terms) {
  DensityProfile prof;
  prof.n = n;
  prof.r = r;
  prof.seed = spec.seed;
  const int m = spec.grid_m;
  const double expo = double(n - 1);

  std::vector<Mat> grid_ks;
  if (n == 2) {
    prof.thetas.resize(m);
    for (int l = 0; l < m; ++l) {
      prof.thetas[l] = kTwoPi * l / m;
      grid_ks.push_back(make_k_theta(prof.thetas[l]).mat);
    }
  } else {
    Rng krng(spec.seed ^ 0xabcdef12345ULL);
    for (int l = 0; l < m; ++l) {
      Mat R = haar_sample_SO(n, krng);
      Mat k = Mat::Identity(n + 1, n + 1);
      k.topLeftCorner(n, n) = R;
      prof.ks.push_back(k);
      grid_ks.push_back(k);
    }
  }
  prof.values = Vec::Zero(m);
  prof.sigmas = Vec::Zero(m);
  prof.weights = Vec::Constant(m, 1.0 / m);

  // per grid point: mean and variance over node terms
  const std::size_t stride = pair_adjacent_terms ? 2 : 1;
  const std::size_t n_groups = nodes.size() / stride;
  std::vector<double> nums(std::size_t(m), 0.0);
  std::vector<double> sds(std::size_t(m), 0.0);
  parallel_chunks(m, [&](int l) {
    const Mat& k0 = grid_ks[std::size_t(l)];
    double sum = 0, sum2 = 0;
    for (std::size_t g = 0; g < n_groups; ++g) {
      double v = 0;
      for (std::size_t t = 0; t < stride; ++t) {
        const WNode& nd = nodes[g * stride + t];
        v += nd.weight * std::pow(norm(k0 * nd.right), -expo);
      }
      sum += v;
      sum2 += v * v;
    }
    double mean = sum / double(n_groups);
    nums[std::size_t(l)] = mean;
    sds[std::size_t(l)] =
        std::sqrt(std::max(sum2 / double(n_groups) - mean * mean, 0.0) / double(n_groups));
  });

  double denom = 0;
  for (int l = 0; l < m; ++l) denom += nums[std::size_t(l)] * prof.weights(l);
  if (denom <= 0) throw std::runtime_error("density profile: vanishing denominator");
  for (int l = 0; l < m; ++l) {
    prof.values(l) = nums[std::size_t(l)] / denom;
    prof.sigmas(l) = sds[std::size_t(l)] / denom;
  }
  return prof;
}

}  // namespace

DensityProfile eval_w_P0(int n, int r, const GroupElement& g0, const NormSpec& norm,
                         const QuadratureSpec& spec) {
  if (r < 1 || r > n) throw std::invalid_argument("eval_w_P0: need 1 <= r <= n");
  // P0 = g0 . span{e_1..e_r} must be positive definite
  Mat span = g0.mat.leftCols(r);
  if (span_degenerate(span))
    throw std::invalid_argument("eval_w_P0: degenerate P0 (use eval_w_infty)");
  const bool two_term = (r == 1);
  const double alpha = double(n - 1);
  auto nodes = build_w_nodes(n, r, /*use_U=*/false, two_term, g0, alpha, spec);
  DensityProfile prof = profile_from_nodes(n, r, nodes, norm, spec, two_term);
  prof.tail_bound = std::exp((double(n - 2) - alpha) * spec.t_max);
  return prof;
}

DensityProfile eval_w_infty(int n, int r, const GroupElement& g0, const NormSpec& norm,
                            const QuadratureSpec& spec) {
  if (n < 3) throw std::invalid_argument("eval_w_infty: n >= 3 required (n = 2 uses eval_w_theta0)");
  // P0 = g0 . span{v+, e_2..e_r} must be degenerate
  Mat model(n + 1, r);
  model.col(0) = v_plus(n);
  for (int q = 1; q < r; ++q) model.col(q) = Vec::Unit(n + 1, q);
  Mat span = g0.mat * model;
  if (!span_degenerate(span))
    throw std::invalid_argument("eval_w_infty: P0 is not degenerate (use eval_w_P0)");
  const double alpha = double(n - 1);
  auto nodes = build_w_nodes(n, r, /*use_U=*/true, /*two_term=*/false, g0, alpha, spec);
  DensityProfile prof = profile_from_nodes(n, r, nodes, norm, spec, false);
  prof.tail_bound = std::pow(1.0 + spec.x_max * spec.x_max, 0.5 * double(n - 1) - alpha);
  return prof;
}

DensityProfile eval_w_theta0(double theta0, const NormSpec& norm, const QuadratureSpec& spec) {
  GroupElement g0 = make_k_theta(theta0);
  auto nodes = build_w_nodes(2, 2, /*use_U=*/true, /*two_term=*/false, g0, 1.0, spec);
  return profile_from_nodes(2, 2, nodes, norm, spec, false);
}

namespace {

// K-averaging nodes: deterministic circle for n = 2, Haar samples otherwise
std::vector<Mat> k_nodes(int n, int count, std::uint64_t seed) {
  std::vector<Mat> ks;
  if (n == 2) {
    for (int l = 0; l < count; ++l) ks.push_back(make_k_theta(kTwoPi * l / count).mat);
  } else {
    Rng rng(seed ^ 0x7177ULL);
    for (int l = 0; l < count; ++l) {
      Mat k = Mat::Identity(n + 1, n + 1);
      k.topLeftCorner(n, n) = haar_sample_SO(n, rng);
      ks.push_back(k);
    }
  }
  return ks;
}

// Vol(G_T) evaluated in the coordinates of the decomposition `which`
// (s-intervals exact, h/x/k numeric).
double ball_volume_in(int n, const SubgroupSpec& which, const NormSpec& norm, double T,
                      const QuadratureSpec& spec) {
  const double s_hi = std::log(std::max(T, 2.0)) + 6.0;
  std::vector<Mat> ks = k_nodes(n, std::max(spec.grid_m, 16), spec.seed);
  Rng rng(spec.seed ^ 0x5a5a5aULL);
  const int N = spec.mc_samples;
  double acc = 0;

  if (which.kind == SubgroupKind::U) {
    for (int q = 0; q < N; ++q) {
      USample us = sample_U(n, rng);
      const Mat u = make_u(n, us.x).mat;
      const Mat& k = ks[std::size_t(q % ks.size())];
      SDecomp dec = s_decomposition(k, u);
      double mass = 0;
      for (auto [s1, s2] : feasible_s(dec, norm, T, -s_hi, s_hi))
        mass += omega_integral_U(n, s1, s2);
      acc += us.weight * mass;
    }
    return acc / N;
  }

  const int i = which.i, j = which.j;
  Mat zeta = Mat::Identity(n + 1, n + 1);  // the i = 0 reflection diag(-I_2, I_{n-1})
  zeta(0, 0) = -1;
  zeta(1, 1) = -1;
  for (int q = 0; q < N; ++q) {
    HSample hs = sample_H(i, j, double(n - 1), spec, rng);
    const Mat& k = ks[std::size_t(q % ks.size())];
    double mass = 0;
    {
      SDecomp dec = s_decomposition(k, hs.h);
      for (auto [s1, s2] : feasible_s(dec, norm, T, 0.0, s_hi)) mass += omega_integral_H(i, j, s1, s2);
    }
    if (i == 0) {
      SDecomp dec = s_decomposition(k, zeta * hs.h);
      for (auto [s1, s2] : feasible_s(dec, norm, T, 0.0, s_hi)) mass += omega_integral_H(i, j, s1, s2);
    }
    acc += hs.weight * mass;
  }
  return acc / N;
}

}  // namespace

IntegralEstimate vol_ball_mc(int n, const NormSpec& norm, double T, const QuadratureSpec& spec) {
  const double s_hi = std::log(std::max(T, 2.0)) + 6.0;
  std::vector<Mat> ks = k_nodes(n, std::max(spec.grid_m, 16), spec.seed);
  Rng rng(spec.seed ^ 0x5a5a5aULL);
  const int N = spec.mc_samples;
  double sum = 0, sum2 = 0;
  for (int q = 0; q < N; ++q) {
    USample us = sample_U(n, rng);
    const Mat u = make_u(n, us.x).mat;
    const Mat& k = ks[std::size_t(q % ks.size())];
    SDecomp dec = s_decomposition(k, u);
    double mass = 0;
    for (auto [s1, s2] : feasible_s(dec, norm, T, -s_hi, s_hi))
      mass += omega_integral_U(n, s1, s2);
    double v = us.weight * mass;
    sum += v;
    sum2 += v * v;
  }
  IntegralEstimate est;
  est.value = sum / N;
  est.sigma = std::sqrt(std::max(sum2 / N - est.value * est.value, 0.0) / N);
  return est;
}

VolumeConstant volume_constant(int n, const NormSpec& norm, const QuadratureSpec& spec,
                               const SubgroupSpec& which) {
  VolumeConstant vc;
  vc.n = n;
  const double expo = double(n - 1);
  const double pref_H = 1.0 / (expo * std::pow(2.0, expo));
  const double pref_U = 1.0 / expo;
  std::vector<Mat> ks = k_nodes(n, std::max(spec.grid_m, 16), spec.seed);
  Mat ap = make_a_infty(n, +1).mat;
  Mat am = make_a_infty(n, -1).mat;

  Rng rng(spec.seed ^ 0x77aa11ULL);
  const int N = spec.mc_samples;
  double sum = 0, sum2 = 0;
  if (which.kind == SubgroupKind::U) {
    for (int q = 0; q < N; ++q) {
      USample us = sample_U(n, rng);
      const Mat u = make_u(n, us.x).mat;
      const Mat& k = ks[std::size_t(q % ks.size())];
      double v = us.weight * pref_U * std::pow(norm(k * ap * u), -expo);
      sum += v;
      sum2 += v * v;
    }
    vc.raw = sum / N;
    vc.norm_factor = 1.0;
    vc.value = vc.raw;
    vc.std_error = std::sqrt(std::max(sum2 / N - vc.raw * vc.raw, 0.0) / N);
    return vc;
  }

  const int i = which.i, j = which.j;
  for (int q = 0; q < N; ++q) {
    HSample hs = sample_H(i, j, expo, spec, rng);
    const Mat& k = ks[std::size_t(q % ks.size())];
    double v = std::pow(norm(k * ap * hs.h), -expo);
    if (i == 0) v += std::pow(norm(k * am * hs.h), -expo);
    v *= hs.weight * pref_H;
    sum += v;
    sum2 += v * v;
  }
  vc.raw = sum / N;
  double raw_sigma = std::sqrt(std::max(sum2 / N - vc.raw * vc.raw, 0.0) / N);

  // pin the free dh scaling against the KAU reference ball at T0 = 50
  const double T0 = 50.0;
  double vol_kau = ball_volume_in(n, SubgroupSpec::U_group(), norm, T0, spec);
  double vol_d = ball_volume_in(n, which, norm, T0, spec);
  vc.norm_factor = vol_kau / vol_d;
  vc.value = vc.raw * vc.norm_factor;
  vc.std_error = raw_sigma * vc.norm_factor;
  return vc;
}

BTLimitReport bT_limit_check(const GroupElement& k, const SubgroupSpec& which,
                             const NormSpec& norm, double T, const QuadratureSpec& spec) {
  const int n = k.n();
  const double expo = double(n - 1);
  const double s_hi = std::log(std::max(T, 2.0)) + 6.0;
  Mat ap = make_a_infty(n, +1).mat;
  Rng rng(spec.seed ^ 0x99ULL);
  const int N = spec.mc_samples;
  double lhs = 0, rhs = 0;
  if (which.kind == SubgroupKind::U) {
    for (int q = 0; q < N; ++q) {
      USample us = sample_U(n, rng);
      const Mat u = make_u(n, us.x).mat;
      SDecomp dec = s_decomposition(k.mat, u);
      double mass = 0;
      for (auto [s1, s2] : feasible_s(dec, norm, T, 0.0, s_hi))
        mass += omega_integral_U(n, s1, s2);
      lhs += us.weight * mass;
      rhs += us.weight * std::pow(norm(k.mat * ap * u), -expo);
    }
    lhs /= N * std::pow(T, expo);
    rhs = rhs / N / expo;
  } else {
    const int i = which.i, j = which.j;
    for (int q = 0; q < N; ++q) {
      HSample hs = sample_H(i, j, expo, spec, rng);
      SDecomp dec = s_decomposition(k.mat, hs.h);
      double mass = 0;
      for (auto [s1, s2] : feasible_s(dec, norm, T, 0.0, s_hi))
        mass += omega_integral_H(i, j, s1, s2);
      lhs += hs.weight * mass;
      rhs += hs.weight * std::pow(norm(k.mat * ap * hs.h), -expo);
    }
    lhs /= N * std::pow(T, expo);
    rhs = rhs / N / (expo * std::pow(2.0, expo));
  }
  BTLimitReport rep;
  rep.lhs = lhs;
  rep.rhs = rhs;
  rep.ratio = rhs != 0 ? lhs / rhs : 0;
  return rep;
}

}  // namespace lab
