#include "lab/geometry.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <thread>

#include "lab/rng.hpp"

namespace lab {

int worker_count() {
  if (const char* env = std::getenv("LAB_THREADS")) {
    int v = std::atoi(env);
    if (v >= 1) return v;
  }
  unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : int(hc);
}

void parallel_chunks(int n_chunks, const std::function<void(int)>& fn) {
  int workers = std::min(worker_count(), n_chunks);
  if (workers <= 1) {
    for (int i = 0; i < n_chunks; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::atomic<int> next{0};
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        int i = next.fetch_add(1);
        if (i >= n_chunks) return;
        fn(i);
      }
    });
  }
  for (auto& t : pool) t.join();
}

QuadForm::QuadForm(int ambient_dim) : dim(ambient_dim) {
  if (dim < 3) throw std::invalid_argument("QuadForm: need n >= 2 (dim >= 3)");
}

Mat QuadForm::gram() const {
  Mat g = Mat::Identity(dim, dim);
  g(dim - 1, dim - 1) = -1.0;
  return g;
}

double QuadForm::q(const Vec& x) const {
  double s = x.head(dim - 1).squaredNorm();
  return s - x(dim - 1) * x(dim - 1);
}

double QuadForm::b(const Vec& x, const Vec& y) const {
  return x.head(dim - 1).dot(y.head(dim - 1)) - x(dim - 1) * y(dim - 1);
}

bool is_group_element(const Mat& m, double tol) {
  if (m.rows() != m.cols() || m.rows() < 3) return false;
  const int d = int(m.rows());
  Mat gram = QuadForm(d).gram();
  Mat resid = m.transpose() * gram * m - gram;
  if (resid.cwiseAbs().maxCoeff() > tol) return false;
  if (std::abs(m.determinant() - 1.0) > tol) return false;
  return m(d - 1, d - 1) >= 1.0 - tol;
}

GroupElement group_element(const Mat& m) {
  if (!is_group_element(m))
    throw std::invalid_argument("group_element: matrix is not in SO(n,1)^0");
  GroupElement g;
  g.mat = m;
  // keep an exact copy when the entries are integral
  bool integral = true;
  for (int r = 0; r < m.rows() && integral; ++r)
    for (int c = 0; c < m.cols(); ++c)
      if (m(r, c) != std::floor(m(r, c))) { integral = false; break; }
  if (integral) {
    IMat e(m.rows(), m.cols());
    for (int r = 0; r < m.rows(); ++r)
      for (int c = 0; c < m.cols(); ++c) e(r, c) = std::int64_t(std::llround(m(r, c)));
    g.exact = std::move(e);
  }
  return g;
}

GroupElement group_element(const Mat& m, IMat exact) {
  GroupElement g = group_element(m);
  g.exact = std::move(exact);
  return g;
}

GroupElement identity_element(int n) {
  return group_element(Mat::Identity(n + 1, n + 1));
}

GroupElement multiply(const GroupElement& a, const GroupElement& b) {
  GroupElement g;
  g.mat = a.mat * b.mat;
  if (a.exact && b.exact) g.exact = (*a.exact) * (*b.exact);
  return g;
}

GroupElement inverse(const GroupElement& g) {
  // g^{-1} = gram g^T gram, exact for integer matrices
  const int d = g.dim();
  GroupElement out;
  Mat gram = QuadForm(d).gram();
  out.mat = gram * g.mat.transpose() * gram;
  if (g.exact) {
    IMat e = g.exact->transpose();
    for (int r = 0; r < d; ++r) {
      e(d - 1, r) = -e(d - 1, r);
      e(r, d - 1) = -e(r, d - 1);
    }
    out.exact = std::move(e);
  }
  return out;
}

Mat star(const Mat& m) {
  return m.transpose().inverse();
}

GroupElement star(const GroupElement& g) {
  const int d = g.dim();
  Mat gram = QuadForm(d).gram();
  GroupElement out;
  out.mat = gram * g.mat * gram;  // (g^T)^{-1} for g in O(n,1)
  if (g.exact) {
    IMat e = *g.exact;
    for (int r = 0; r < d; ++r) {
      e(d - 1, r) = -e(d - 1, r);
      e(r, d - 1) = -e(r, d - 1);
    }
    out.exact = std::move(e);
  }
  return out;
}

GroupElement make_a(int n, double s) {
  if (!std::isfinite(s)) throw std::invalid_argument("make_a: s must be finite");
  Mat m = Mat::Identity(n + 1, n + 1);
  m(0, 0) = std::cosh(s);
  m(n, n) = std::cosh(s);
  m(0, n) = std::sinh(s);
  m(n, 0) = std::sinh(s);
  GroupElement g;
  g.mat = std::move(m);
  return g;
}

GroupElement make_u(int n, const Vec& x) {
  if (x.size() != n - 1) throw std::invalid_argument("make_u: x must have length n-1");
  if (!x.allFinite()) throw std::invalid_argument("make_u: x must be finite");
  const double h = 0.5 * x.squaredNorm();
  Mat m = Mat::Identity(n + 1, n + 1);
  m(0, 0) = 1.0 - h;
  m(0, n) = h;
  m(n, 0) = -h;
  m(n, n) = 1.0 + h;
  for (int q = 0; q < n - 1; ++q) {
    m(0, q + 1) = x(q);
    m(n, q + 1) = x(q);
    m(q + 1, 0) = -x(q);
    m(q + 1, n) = x(q);
  }
  GroupElement g;
  g.mat = std::move(m);
  return g;
}

GroupElement embed_K(const Mat& R) {
  const int n = int(R.rows());
  if (R.cols() != n) throw std::invalid_argument("embed_K: square matrix required");
  Mat resid = R.transpose() * R - Mat::Identity(n, n);
  if (resid.cwiseAbs().maxCoeff() > kFormTol)
    throw std::invalid_argument("embed_K: not orthogonal");
  if (std::abs(R.determinant() - 1.0) > 1e-8)
    throw std::invalid_argument("embed_K: det must be +1");
  Mat m = Mat::Identity(n + 1, n + 1);
  m.topLeftCorner(n, n) = R;
  GroupElement g;
  g.mat = std::move(m);
  return g;
}

GroupElement make_k_theta(double theta) { return make_k_theta(2, theta); }

GroupElement make_k_theta(int n, double theta) {
  Mat m = Mat::Identity(n + 1, n + 1);
  m(0, 0) = std::cos(theta);
  m(0, 1) = -std::sin(theta);
  m(1, 0) = std::sin(theta);
  m(1, 1) = std::cos(theta);
  GroupElement g;
  g.mat = std::move(m);
  return g;
}

Vec v_plus(int n) {
  Vec v = Vec::Zero(n + 1);
  v(0) = 1.0;
  v(n) = 1.0;
  return v;
}

Vec v_minus(int n) {
  Vec v = Vec::Zero(n + 1);
  v(0) = 1.0;
  v(n) = -1.0;
  return v;
}

BoundaryMatrix make_a_infty(int n, int sign) {
  Mat m = Mat::Zero(n + 1, n + 1);
  const double s = sign >= 0 ? 0.5 : -0.5;
  m(0, 0) = 0.5;
  m(n, n) = 0.5;
  m(0, n) = s;
  m(n, 0) = s;
  return BoundaryMatrix{std::move(m), sign >= 0 ? +1 : -1};
}

Mat middle_projector(int n) {
  Mat m = Mat::Identity(n + 1, n + 1);
  m(0, 0) = 0.0;
  m(n, n) = 0.0;
  return m;
}

namespace {

// SO(n) matrix whose first column is the unit vector y (Householder completion).
Mat so_with_first_column(const Vec& y) {
  const int n = int(y.size());
  Mat Q = Mat::Identity(n, n);
  Vec w = y - Vec::Unit(n, 0);
  double nw = w.norm();
  if (nw > 1e-14) {
    w /= nw;
    Q -= 2.0 * w * w.transpose();  // reflects e1 to y, det = -1
    // fix determinant by flipping the last column
    Q.col(n - 1) *= -1.0;
  }
  if (n == 1) Q(0, 0) = y(0) >= 0 ? 1.0 : -1.0;  // O(1); det fixed below by caller
  return Q;
}

}  // namespace

CartanFactors cartan_decompose(const GroupElement& g) {
  const int d = g.dim();
  const int n = d - 1;
  Mat gtg = g.mat.transpose() * g.mat;
  Eigen::SelfAdjointEigenSolver<Mat> es(gtg);
  const double lmax = es.eigenvalues()(d - 1);
  double t = 0.5 * std::log(std::max(lmax, 1.0));

  GroupElement k2;
  if (t < 1e-9) {
    k2 = identity_element(n);
    t = 0.0;
  } else {
    // top eigenvector is (y, 1)/sqrt(2) with y = R^{-1} e1 for k2 = diag(R, 1)
    Vec w = es.eigenvectors().col(d - 1);
    if (w(d - 1) < 0) w = -w;
    Vec y = w.head(n);
    y.normalize();
    Mat Rinv = so_with_first_column(y);  // R^{-1} e1 = y
    if (std::abs(Rinv.determinant() - 1.0) > 1e-8) Rinv.col(n - 1) *= -1.0;
    Mat R = Rinv.transpose();
    k2 = embed_K(R);
  }
  GroupElement k1;
  k1.mat = g.mat * k2.mat.transpose() * make_a(n, -t).mat;
  // reassembly k1 a(t) k2 == g holds by construction; k1 lies in K up to
  // the eigensolver accuracy
  return CartanFactors{std::move(k1), t, std::move(k2)};
}

Mat2 sl2_delta(double s) {
  Mat2 m;
  m << std::exp(0.5 * s), 0.0, 0.0, std::exp(-0.5 * s);
  return m;
}

Mat2 sl2_upsilon(double t) {
  Mat2 m;
  m << 1.0, t, 0.0, 1.0;
  return m;
}

Mat2 sl2_kappa(double v) {
  Mat2 m;
  m << std::cos(v), -std::sin(v), std::sin(v), std::cos(v);
  return m;
}

// Ad(g) X = g X g^{-1} on traceless X = x1 (E+F) + x2 (-H) + x3 (E-F); in
// these coordinates X = [[-x2, x1+x3], [x1-x3, x2]] and -det X = x1^2+x2^2-x3^2.
Mat isogeny_phi_mat(const Mat2& g) {
  const double det = g(0, 0) * g(1, 1) - g(0, 1) * g(1, 0);
  if (std::abs(det - 1.0) > 1e-9)
    throw std::invalid_argument("isogeny_phi: det must be 1");
  Mat2 ginv;
  ginv << g(1, 1), -g(0, 1), -g(1, 0), g(0, 0);
  Mat out(3, 3);
  for (int j = 0; j < 3; ++j) {
    Mat2 Y;
    if (j == 0) Y << 0, 1, 1, 0;
    else if (j == 1) Y << -1, 0, 0, 1;
    else Y << 0, 1, -1, 0;
    Mat2 Z = g * Y * ginv;
    out(0, j) = 0.5 * (Z(0, 1) + Z(1, 0));
    out(1, j) = -Z(0, 0);
    out(2, j) = 0.5 * (Z(0, 1) - Z(1, 0));
  }
  return out;
}

GroupElement isogeny_phi(const Mat2& g) {
  GroupElement e;
  e.mat = isogeny_phi_mat(g);
  return e;
}

Eigen::Matrix<std::int64_t, 3, 3> isogeny_phi_twice(const Eigen::Matrix<std::int64_t, 2, 2>& g) {
  const std::int64_t a = g(0, 0), b = g(0, 1), c = g(1, 0), d = g(1, 1);
  Eigen::Matrix<std::int64_t, 3, 3> m;
  m << a * a - b * b - c * c + d * d, 2 * (a * b - c * d), a * a + b * b - c * c - d * d,
       2 * (a * c - b * d),           2 * (a * d + b * c), 2 * (a * c + b * d),
       a * a - b * b + c * c - d * d, 2 * (a * b + c * d), a * a + b * b + c * c + d * d;
  return m;
}

Mat2 isogeny_phi_inverse(const Mat& h) {
  if (h.rows() != 3 || h.cols() != 3)
    throw std::invalid_argument("isogeny_phi_inverse: 3x3 input required");
  // entry identities of Phi: squares and pairwise products of (a,b,c,d)
  const double a2 = 0.5 * (h(0, 0) + h(0, 2) + h(2, 0) + h(2, 2));
  const double b2 = 0.5 * (-h(0, 0) + h(0, 2) - h(2, 0) + h(2, 2));
  const double c2 = 0.5 * (-h(0, 0) - h(0, 2) + h(2, 0) + h(2, 2));
  const double d2 = 0.5 * (h(0, 0) - h(0, 2) - h(2, 0) + h(2, 2));
  const double ab = 0.5 * (h(0, 1) + h(2, 1));
  const double cd = 0.5 * (h(2, 1) - h(0, 1));
  const double ac = 0.5 * (h(1, 0) + h(1, 2));
  const double bd = 0.5 * (h(1, 2) - h(1, 0));
  const double ad = 0.5 * (h(1, 1) + 1.0);
  const double bc = 0.5 * (h(1, 1) - 1.0);

  double sq[4] = {a2, b2, c2, d2};
  int lead = 0;
  for (int i = 1; i < 4; ++i)
    if (sq[i] > sq[lead]) lead = i;
  double v = std::sqrt(std::max(sq[lead], 0.0));
  double a, b, c, d;
  switch (lead) {
    case 0: a = v; b = ab / v; c = ac / v; d = ad / v; break;
    case 1: b = v; a = ab / v; d = bd / v; c = bc / v; break;
    case 2: c = v; a = ac / v; d = cd / v; b = bc / v; break;
    default: d = v; a = ad / v; b = bd / v; c = cd / v; break;
  }
  Mat2 g;
  g << a, b, c, d;
  return g;
}

SubgroupSpec SubgroupSpec::H(int i, int j) {
  if (i < 0 || j < 0) throw std::invalid_argument("SubgroupSpec::H: i, j >= 0");
  SubgroupSpec s;
  s.kind = SubgroupKind::Hij;
  s.i = i;
  s.j = j;
  return s;
}

Mat p1_infty_basis(int n, int r) {
  Mat b = Mat::Zero(n + 1, r);
  b.col(0) = v_plus(n) / std::sqrt(2.0);
  for (int q = 1; q < r; ++q) b(q, q) = 1.0;
  return b;
}

Mat p2_infty_basis(int n, int r) {
  const int r2 = n + 1 - r;
  Mat b = Mat::Zero(n + 1, r2);
  b.col(0) = v_minus(n) / std::sqrt(2.0);
  for (int q = 1; q < r2; ++q) b(r - 1 + q, q) = 1.0;
  return b;
}

namespace {

bool same_span(const Mat& A, const Mat& B, double tol) {
  // rank([A B]) == rank(A) == cols(A)
  Mat joint(A.rows(), A.cols() + B.cols());
  joint << A, B;
  Eigen::JacobiSVD<Mat> svd(joint);
  int rank = 0;
  for (int i = 0; i < svd.singularValues().size(); ++i)
    if (svd.singularValues()(i) > tol * svd.singularValues()(0)) ++rank;
  return rank == A.cols();
}

}  // namespace

bool in_K_Pinfty(const GroupElement& k, int r) {
  const int n = k.n();
  Mat p1 = p1_infty_basis(n, r);
  Mat p2 = p2_infty_basis(n, r);
  return same_span(p1, k.mat * p1, kDecompTol) && same_span(p2, k.mat * p2, kDecompTol);
}

std::pair<Mat, Mat> make_g1_g2(int n, double s) {
  // g1: e1 -> (e^s/2) v+, e_q -> e_q, v- -> e^{-s} v-; so on the standard
  // basis e_{n+1} = e1 - v- goes to (e^s/2) v+ - e^{-s} v-. g2: v+ -> e^{-s} v+,
  // e_q -> e_q, e_{n+1} -> -(e^s/2) v-; so e1 = v+ - e_{n+1} goes to
  // e^{-s} v+ + (e^s/2) v-. Written in closed form: the linear-solve route
  // loses the e^{-2s} scale to conditioning at large s.
  const int d = n + 1;
  Vec vp = v_plus(n), vm = v_minus(n);
  const double es = std::exp(s), ems = std::exp(-s);
  Mat g1 = Mat::Identity(d, d);
  g1.col(0) = 0.5 * es * vp;
  g1.col(d - 1) = 0.5 * es * vp - ems * vm;
  Mat g2 = Mat::Identity(d, d);
  g2.col(0) = ems * vp + 0.5 * es * vm;
  g2.col(d - 1) = -0.5 * es * vm;
  return {g1, g2};
}

std::pair<Mat, Mat> make_g1_g2_inv(int n, double s) {
  const int d = n + 1;
  Vec vp = v_plus(n), vm = v_minus(n);
  const double es = std::exp(s), ems = std::exp(-s);
  // g1^{-1}: v+ -> 2 e^{-s} e1, e_q -> e_q, v- -> e^s v-, written on the
  // standard basis through e1 = (v+ + v-)/2, e_{n+1} = (v+ - v-)/2
  Mat inv1 = Mat::Identity(d, d);
  inv1.col(0) = ems * Vec::Unit(d, 0) + 0.5 * es * vm;
  inv1.col(d - 1) = ems * Vec::Unit(d, 0) - 0.5 * es * vm;
  // g2^{-1}: v+ -> e^s v+, e_q -> e_q, v- -> -2 e^{-s} e_{n+1}
  Mat inv2 = Mat::Identity(d, d);
  inv2.col(0) = 0.5 * es * vp - ems * Vec::Unit(d, d - 1);
  inv2.col(d - 1) = 0.5 * es * vp + ems * Vec::Unit(d, d - 1);
  return {inv1, inv2};
}

std::pair<Mat, Mat> make_R1_R2(int n) {
  const int d = n + 1;
  Vec vp = v_plus(n), vm = v_minus(n);
  Mat R1 = Mat::Identity(d, d);
  R1.col(0) = 0.5 * vp;
  R1.col(d - 1) = -vm;  // det = 1 with this sign
  Mat R2 = Mat::Identity(d, d);
  R2.col(0) = vp;
  R2.col(d - 1) = -0.5 * vm;
  return {R1, R2};
}

std::pair<Mat, Mat> make_d1_d2(int i, int j, double s) {
  Mat d1 = Mat::Identity(i + 1, i + 1) * std::exp(-s / double(i + 1));
  d1(0, 0) = std::exp(double(i) * s / double(i + 1));
  Mat d2 = Mat::Identity(j + 1, j + 1) * std::exp(-s / double(j + 1));
  d2(j, j) = std::exp(double(j) * s / double(j + 1));
  return {d1, d2};
}

std::pair<Mat, Mat> make_delta_pair(int i, int j, double s) {
  Mat d1 = Mat::Identity(i + 1, i + 1) * std::exp(-s / double(i + 1));
  d1(0, 0) = std::exp(double(i) * s / double(i + 1));
  Mat d2 = Mat::Identity(j + 1, j + 1) * std::exp(-s / double(j + 1));
  d2(0, 0) = std::exp(double(j) * s / double(j + 1));
  return {d1, d2};
}

std::pair<Mat, Mat> make_upsilon_pair(int i, int j, const Vec& x) {
  if (x.size() != i + j) throw std::invalid_argument("make_upsilon_pair: |x| must be i+j");
  Mat u1 = Mat::Identity(i + 1, i + 1);
  for (int q = 0; q < i; ++q) u1(0, q + 1) = x(q);
  Mat u2 = Mat::Identity(j + 1, j + 1);
  for (int q = 0; q < j; ++q) u2(0, q + 1) = x(i + q);
  return {u1, u2};
}

namespace {

// Ambient map acting as y on the span of basis columns and as the identity on
// the columns of complement.
Mat subspace_map(const Mat& basis, const Mat& complement, const Mat& y) {
  const int d = int(basis.rows());
  Mat dom(d, d), img(d, d);
  dom << basis, complement;
  img << basis * y, complement;
  return img * dom.inverse();
}

}  // namespace

std::pair<Mat, Mat> rep_rho0(int n, int i, int j, const Mat& y1, const Mat& y2) {
  const int d = n + 1;
  if (y1.rows() != i + 1 || y2.rows() != j + 1)
    throw std::invalid_argument("rep_rho0: block sizes must be i+1, j+1");
  if (std::abs(y1.determinant()) < 1e-12 || std::abs(y2.determinant()) < 1e-12)
    throw std::invalid_argument("rep_rho0: singular input");
  Mat b1 = Mat::Identity(d, d).leftCols(i + 1);
  Mat c1 = Mat::Identity(d, d).rightCols(d - (i + 1));
  Mat b2 = Mat::Identity(d, d).rightCols(j + 1);
  Mat c2 = Mat::Identity(d, d).leftCols(d - (j + 1));
  return {subspace_map(b1, c1, y1), subspace_map(b2, c2, y2)};
}

std::pair<Mat, Mat> rep_rho_infty(int n, int i, int j, const Mat& y1, const Mat& y2) {
  const int d = n + 1;
  if (y1.rows() != i + 1 || y2.rows() != j + 1)
    throw std::invalid_argument("rep_rho_infty: block sizes must be i+1, j+1");
  if (std::abs(y1.determinant()) < 1e-12 || std::abs(y2.determinant()) < 1e-12)
    throw std::invalid_argument("rep_rho_infty: singular input");
  // B1 = (v+, e2..e_{i+1}), complement (e_{i+2}..e_n, v-)
  Mat b1(d, i + 1), c1(d, d - (i + 1));
  b1.col(0) = v_plus(n);
  for (int q = 1; q <= i; ++q) b1.col(q) = Vec::Unit(d, q);
  {
    int col = 0;
    for (int q = i + 1; q < n; ++q) c1.col(col++) = Vec::Unit(d, q);
    c1.col(col) = v_minus(n);
  }
  // B2 = (v-, e_{i+2}..e_n), complement (v+, e2..e_{i+1})
  Mat b2(d, j + 1), c2(d, d - (j + 1));
  b2.col(0) = v_minus(n);
  for (int q = 1; q <= j; ++q) b2.col(q) = Vec::Unit(d, i + q);
  {
    int col = 0;
    c2.col(col++) = v_plus(n);
    for (int q = 1; q <= i; ++q) c2.col(col++) = Vec::Unit(d, q);
  }
  return {subspace_map(b1, c1, y1), subspace_map(b2, c2, y2)};
}

Mat rep_rho_infty_2d(const Mat2& g) {
  // basis (v+, v0 = e2) of span{v+, e2}, fixing v-
  Mat dom(3, 3), img(3, 3);
  Vec vp = v_plus(2), vm = v_minus(2);
  dom.col(0) = vp;
  dom.col(1) = Vec::Unit(3, 1);
  dom.col(2) = vm;
  img.col(0) = g(0, 0) * vp + g(1, 0) * Vec::Unit(3, 1);
  img.col(1) = g(0, 1) * vp + g(1, 1) * Vec::Unit(3, 1);
  img.col(2) = vm;
  return img * dom.inverse();
}

Mat rep_rho_infty_theta(double theta, const Mat2& g) {
  Mat k = make_k_theta(theta).mat;
  return k * rep_rho_infty_2d(g) * k.transpose();
}

}  // namespace lab
