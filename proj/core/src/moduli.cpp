#include "lab/moduli.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace lab {

namespace {

using njson = nlohmann::ordered_json;

bool full_rank(const Mat& b) {
  Mat g = b.transpose() * b;
  double prod = 1.0;
  for (int c = 0; c < b.cols(); ++c) prod *= b.col(c).norm();
  return g.determinant() > 1e-12 * prod * prod;
}

// mu with half-integer ties resolved toward a positive remainder, so the
// Gauss loop cannot oscillate on the boundary of the reduced domain
std::int64_t reduction_mu(double x) {
  double fl = std::floor(x);
  double frac = x - fl;
  if (std::abs(frac - 0.5) < 1e-9) return std::int64_t(fl);
  return std::int64_t(std::llround(x));
}

void gauss_reduce_2(Mat& b) {
  for (int guard = 0; guard < 256; ++guard) {
    if (b.col(0).squaredNorm() > b.col(1).squaredNorm() * (1.0 + 1e-15))
      b.col(0).swap(b.col(1));
    double n1 = b.col(0).squaredNorm();
    std::int64_t mu = reduction_mu(b.col(0).dot(b.col(1)) / n1);
    if (mu == 0) break;
    b.col(1) -= double(mu) * b.col(0);
  }
}

void gauss_reduce_2_exact(IMat& b) {
  for (;;) {
    auto sq = [&](int c) {
      std::int64_t s = 0;
      for (int r = 0; r < b.rows(); ++r) s += b(r, c) * b(r, c);
      return s;
    };
    if (sq(0) > sq(1)) b.col(0).swap(b.col(1));
    std::int64_t n1 = sq(0);
    std::int64_t ip = 0;
    for (int r = 0; r < b.rows(); ++r) ip += b(r, 0) * b(r, 1);
    // round(ip/n1) with ties toward positive remainder
    std::int64_t mu = std::llround(double(ip) / double(n1));
    if (2 * (ip - mu * n1) == -n1) mu -= 1;
    if (mu == 0) break;
    b.col(1) -= mu * b.col(0);
  }
}

// Textbook LLL on the ambient columns, delta = 0.99. Used for rank >= 3 where
// the output is a good (not canonical) representative.
void lll_reduce(Mat& b) {
  const int r = int(b.cols());
  const double delta = 0.99;
  auto gso = [&](Mat& bstar, Mat& mu) {
    bstar = b;
    mu = Mat::Identity(r, r);
    for (int i = 0; i < r; ++i) {
      for (int j = 0; j < i; ++j) {
        double m = b.col(i).dot(bstar.col(j)) / bstar.col(j).squaredNorm();
        mu(i, j) = m;
        bstar.col(i) -= m * bstar.col(j);
      }
    }
  };
  Mat bstar, mu;
  gso(bstar, mu);
  int k = 1;
  int guard = 0;
  while (k < r && ++guard < 10000) {
    for (int j = k - 1; j >= 0; --j) {
      std::int64_t m = std::llround(mu(k, j));
      if (m != 0) {
        b.col(k) -= double(m) * b.col(j);
        gso(bstar, mu);
      }
    }
    if (bstar.col(k).squaredNorm() >=
        (delta - mu(k, k - 1) * mu(k, k - 1)) * bstar.col(k - 1).squaredNorm()) {
      ++k;
    } else {
      b.col(k).swap(b.col(k - 1));
      gso(bstar, mu);
      k = std::max(k - 1, 1);
    }
  }
}

int first_significant(const Vec& v) {
  double scale = v.cwiseAbs().maxCoeff();
  for (int i = 0; i < v.size(); ++i)
    if (std::abs(v(i)) > 1e-9 * scale) return i;
  return 0;
}

bool lex_less(const Vec& a, const Vec& b) {
  for (int i = 0; i < a.size(); ++i) {
    if (a(i) < b(i) - 1e-12) return true;
    if (a(i) > b(i) + 1e-12) return false;
  }
  return false;
}

void order_and_sign(Mat& b) {
  const int r = int(b.cols());
  // provisional per-column sign fix, then sort by (norm, lex), then re-fix
  for (int c = 0; c < r; ++c)
    if (b(first_significant(b.col(c)), c) < 0) b.col(c) *= -1.0;
  std::vector<int> idx(r);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int c) {
    double na = b.col(a).norm(), nc = b.col(c).norm();
    if (na < nc * (1.0 - 1e-9)) return true;
    if (nc < na * (1.0 - 1e-9)) return false;
    return lex_less(b.col(a), b.col(c));
  });
  Mat sorted(b.rows(), r);
  for (int c = 0; c < r; ++c) sorted.col(c) = b.col(idx[c]);
  b = sorted;
}

}  // namespace

LatticeBasis make_lattice(const Mat& basis) {
  if (basis.cols() < 1 || basis.rows() < basis.cols())
    throw std::invalid_argument("make_lattice: need (n+1) x r with r <= n+1");
  if (!full_rank(basis)) throw std::invalid_argument("make_lattice: rank-deficient basis");
  LatticeBasis L;
  L.ambient_dim = int(basis.rows());
  L.rank = int(basis.cols());
  L.basis = basis;
  bool integral = true;
  for (int r = 0; r < basis.rows() && integral; ++r)
    for (int c = 0; c < basis.cols(); ++c)
      if (basis(r, c) != std::floor(basis(r, c))) { integral = false; break; }
  if (integral) {
    IMat e(basis.rows(), basis.cols());
    for (int r = 0; r < basis.rows(); ++r)
      for (int c = 0; c < basis.cols(); ++c) e(r, c) = std::int64_t(std::llround(basis(r, c)));
    L.exact_basis = std::move(e);
  }
  return L;
}

LatticeBasis make_lattice(const IMat& basis) {
  LatticeBasis L = make_lattice(Mat(basis.cast<double>()));
  L.exact_basis = basis;
  return L;
}

HomothetyClass canonical_class(const LatticeBasis& L) {
  Mat b = L.basis;
  if (L.rank == 2) {
    if (L.exact_basis) {
      IMat e = *L.exact_basis;
      gauss_reduce_2_exact(e);
      b = e.cast<double>();
    } else {
      gauss_reduce_2(b);
    }
  } else if (L.rank >= 3) {
    lll_reduce(b);
  }
  double det = (b.transpose() * b).determinant();
  b /= std::pow(det, 0.5 / double(L.rank));
  order_and_sign(b);
  HomothetyClass c;
  c.canon.ambient_dim = L.ambient_dim;
  c.canon.rank = L.rank;
  c.canon.basis = std::move(b);
  c.canon.exact_basis = L.exact_basis;  // original exact data, pre-normalization
  return c;
}

HomothetyClass canonical_class(const Mat& basis) { return canonical_class(make_lattice(basis)); }

double class_distance(const HomothetyClass& a, const HomothetyClass& b) {
  if (a.rank() != b.rank() || a.ambient_dim() != b.ambient_dim()) return 1e300;
  return (a.canon.basis - b.canon.basis).cwiseAbs().maxCoeff();
}

namespace {

// exact notion: B = A C with C in GL(r,Z) up to a scalar
bool unimodular_change_of_basis(const Mat& A, const Mat& B, double tol) {
  Mat C = (A.transpose() * A).ldlt().solve(A.transpose() * B);
  if ((A * C - B).cwiseAbs().maxCoeff() > 1e-6 * (1.0 + B.cwiseAbs().maxCoeff()))
    return false;  // spans differ
  double det = std::abs(C.determinant());
  if (det < 1e-12) return false;
  C /= std::pow(det, 1.0 / double(C.cols()));
  double resid = 0.0;
  for (int r = 0; r < C.rows(); ++r)
    for (int c = 0; c < C.cols(); ++c) resid = std::max(resid, std::abs(C(r, c) - std::round(C(r, c))));
  (void)tol;
  return resid < 1e-6;
}

}  // namespace

bool class_equal(const HomothetyClass& a, const HomothetyClass& b, double tol) {
  if (a.rank() != b.rank() || a.ambient_dim() != b.ambient_dim()) return false;
  if (class_distance(a, b) < tol) return true;
  // canonical forms can disagree on tie boundaries (lattices with several
  // shortest vectors, e.g. hexagonal); the change-of-basis test settles those
  // exactly, and it is the only sound comparison for rank >= 3 where LLL
  // output is not unique
  return unimodular_change_of_basis(a.canon.basis, b.canon.basis, tol);
}

bool span_degenerate(const Mat& span, double tol) {
  Eigen::HouseholderQR<Mat> qr(span);
  Mat onb = qr.householderQ() * Mat::Identity(span.rows(), span.cols());
  Mat gram = QuadForm(int(span.rows())).gram();
  return std::abs((onb.transpose() * gram * onb).determinant()) < tol;
}

OrthoPair make_ortho_pair(const LatticeBasis& a, const LatticeBasis& b) {
  return make_ortho_pair(canonical_class(a), canonical_class(b));
}

OrthoPair make_ortho_pair(const HomothetyClass& a, const HomothetyClass& b) {
  if (a.ambient_dim() != b.ambient_dim())
    throw std::invalid_argument("make_ortho_pair: ambient dimensions differ");
  if (a.rank() + b.rank() != a.ambient_dim())
    throw std::invalid_argument("make_ortho_pair: ranks must sum to n+1");
  Mat cross = a.canon.basis.transpose() * b.canon.basis;
  if (cross.cwiseAbs().maxCoeff() > kDecompTol)
    throw std::invalid_argument("make_ortho_pair: spans are not orthogonal");
  OrthoPair p{a, b};
  if (!span_degenerate(a.canon.basis)) {
    // convention: the positive-definite lattice sits first
    const int d = a.ambient_dim();
    Mat gram = QuadForm(d).gram();
    Mat qg = a.canon.basis.transpose() * gram * a.canon.basis;
    Eigen::SelfAdjointEigenSolver<Mat> es(qg);
    if (es.eigenvalues()(0) < 0) std::swap(p.first, p.second);
  }
  return p;
}

OrthoPair act(const GroupElement& g, const OrthoPair& p) {
  GroupElement gs = star(g);
  LatticeBasis first = make_lattice(Mat(g.mat * p.first.canon.basis));
  LatticeBasis second = make_lattice(Mat(gs.mat * p.second.canon.basis));
  if (g.exact && p.first.canon.exact_basis)
    first.exact_basis = (*g.exact) * (*p.first.canon.exact_basis);
  if (gs.exact && p.second.canon.exact_basis)
    second.exact_basis = (*gs.exact) * (*p.second.canon.exact_basis);
  OrthoPair out{canonical_class(first), canonical_class(second)};
  return out;
}

SubspacePair project_pi(const OrthoPair& p) {
  auto onb = [](const Mat& b) {
    Eigen::HouseholderQR<Mat> qr(b);
    return Mat(qr.householderQ() * Mat::Identity(b.rows(), b.cols()));
  };
  SubspacePair s;
  s.p1 = onb(p.first.canon.basis);
  s.p2 = onb(p.second.canon.basis);
  const int d = p.first.ambient_dim();
  Mat gram = QuadForm(d).gram();
  if (p.first.canon.exact_basis) {
    // exact integer route
    const IMat& e = *p.first.canon.exact_basis;
    IMat qg(e.cols(), e.cols());
    for (int i = 0; i < e.cols(); ++i)
      for (int j = 0; j < e.cols(); ++j) {
        std::int64_t v = 0;
        for (int r = 0; r + 1 < d; ++r) v += e(r, i) * e(r, j);
        v -= e(d - 1, i) * e(d - 1, j);
        qg(i, j) = v;
      }
    s.degenerate = std::abs(Mat(qg.cast<double>()).determinant()) < 0.5;
  } else {
    s.degenerate = std::abs((s.p1.transpose() * gram * s.p1).determinant()) < kDecompTol;
  }
  return s;
}

LatticeBasis ortho_lattice(const IVec& v) {
  const int d = int(v.size());
  if (v.isZero()) throw std::invalid_argument("ortho_lattice: v must be nonzero");
  // column-reduce [v^T; I] by exact Euclid until one nonzero entry remains in
  // the top row; the other columns of the accumulated U span ker <v, .>
  IVec w = v;
  IMat U = IMat::Identity(d, d);
  for (;;) {
    int piv = -1;
    for (int c = 0; c < d; ++c)
      if (w(c) != 0 && (piv == -1 || std::abs(w(c)) < std::abs(w(piv)))) piv = c;
    bool more = false;
    for (int c = 0; c < d; ++c) {
      if (c == piv || w(c) == 0) continue;
      std::int64_t q = w(c) / w(piv);
      w(c) -= q * w(piv);
      U.col(c) -= q * U.col(piv);
      if (w(c) != 0) more = true;
    }
    if (!more) {
      // move pivot to front
      if (piv != 0) {
        std::swap(w(0), w(piv));
        U.col(0).swap(U.col(piv));
      }
      break;
    }
  }
  IMat kernel(d, d - 1);
  for (int c = 1; c < d; ++c) kernel.col(c - 1) = U.col(c);
  return make_lattice(kernel);
}

X2Point reduce_tau(double x, double y) {
  if (!(y > 0.0)) throw std::invalid_argument("reduce_tau: need Im tau > 0");
  for (int guard = 0; guard < 512; ++guard) {
    x -= std::round(x);
    double n2 = x * x + y * y;
    if (n2 < 1.0 - 1e-15) {
      x = -x / n2;
      y = y / n2;
    } else {
      break;
    }
  }
  if (std::abs(x + 0.5) < 1e-12) x = 0.5;
  if (std::abs(x * x + y * y - 1.0) < 1e-12 && x < 0.0) x = -x;
  return X2Point{x, y};
}

ShapePoint fold_shape(const X2Point& p) {
  return ShapePoint{std::abs(p.x), p.y};
}

ShapePoint shape(const HomothetyClass& c) {
  if (c.rank() != 2) throw std::invalid_argument("shape: rank-2 class required");
  const Mat& b = c.canon.basis;
  double g11 = b.col(0).squaredNorm();
  double g12 = b.col(0).dot(b.col(1));
  double g22 = b.col(1).squaredNorm();
  double det = g11 * g22 - g12 * g12;
  if (det <= 0) throw std::invalid_argument("shape: degenerate Gram");
  return fold_shape(reduce_tau(g12 / g11, std::sqrt(det) / g11));
}

X2Point x2_point(const HomothetyClass& c, const Mat& frame) {
  if (c.rank() != 2) throw std::invalid_argument("x2_point: rank-2 class required");
  Mat coords = frame.transpose() * c.canon.basis;  // 2 x 2
  if ((frame * coords - c.canon.basis).cwiseAbs().maxCoeff() > 1e-7)
    throw std::invalid_argument("x2_point: class does not lie in the frame's plane");
  if (coords.determinant() < 0) coords.col(1) *= -1.0;
  double g11 = coords.col(0).squaredNorm();
  double g12 = coords.col(0).dot(coords.col(1));
  double det = coords.determinant();
  return reduce_tau(g12 / g11, det / g11);
}

FiberCoordinates fiber_coordinates(const OrthoPair& p, const SubspacePair& P) {
  auto one = [](const HomothetyClass& c, const Mat& frame) {
    Mat coords = frame.transpose() * c.canon.basis;
    if ((frame * coords - c.canon.basis).cwiseAbs().maxCoeff() > 1e-7)
      throw std::invalid_argument("fiber_coordinates: span mismatch with the given frame");
    FiberCoordinate f;
    f.coords = canonical_class(coords);
    if (c.rank() == 2) f.x2 = x2_point(c, frame);
    return f;
  };
  return FiberCoordinates{one(p.first, P.p1), one(p.second, P.p2)};
}

namespace {

njson lattice_json(const HomothetyClass& c) {
  njson j;
  j["ambient_dim"] = c.ambient_dim();
  j["rank"] = c.rank();
  std::vector<double> flat;
  flat.reserve(size_t(c.canon.basis.size()));
  for (int r = 0; r < c.canon.basis.rows(); ++r)
    for (int col = 0; col < c.canon.basis.cols(); ++col) flat.push_back(c.canon.basis(r, col));
  j["basis"] = flat;
  return j;
}

}  // namespace

std::string to_json_string(const HomothetyClass& c) { return lattice_json(c).dump(); }

std::string to_json_string(const OrthoPair& p) {
  njson j;
  j["first"] = lattice_json(p.first);
  j["second"] = lattice_json(p.second);
  return j.dump();
}

std::string to_json_string(const ShapePoint& s) {
  njson j;
  j["x"] = s.x;
  j["y"] = s.y;
  return j.dump();
}

}  // namespace lab
