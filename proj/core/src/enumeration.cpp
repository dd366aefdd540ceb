#include "lab/enumeration.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>
#include <unordered_set>

#include "lab/rng.hpp"

namespace lab {

double NormSpec::operator()(const Mat& m) const {
  switch (kind) {
    case NormKind::Frobenius: return m.norm();
    case NormKind::MaxEntry: return m.cwiseAbs().maxCoeff();
    case NormKind::SkewedFrobenius: return (m * g0_inv).norm();
  }
  return 0;
}

NormSpec frobenius_norm() { return NormSpec{NormKind::Frobenius, {}, {}}; }
NormSpec max_entry_norm() { return NormSpec{NormKind::MaxEntry, {}, {}}; }

NormSpec skewed_frobenius_norm(const GroupElement& g0) {
  NormSpec s;
  s.kind = NormKind::SkewedFrobenius;
  s.g0 = g0.mat;
  s.g0_inv = inverse(g0).mat;
  return s;
}

RepKind GammaSpec::rep() const {
  switch (kind) {
    case GammaKind::PhiSL2Z: return RepKind::SL2;
    case GammaKind::IntegerOrthogonal: return RepKind::Ambient;
    case GammaKind::ConjugatedIntegerOrthogonal: return RepKind::AmbientConjugated;
  }
  return RepKind::Ambient;
}

GammaSpec gamma_phi_sl2z() {
  GammaSpec g;
  g.kind = GammaKind::PhiSL2Z;
  g.n = 2;
  IMat S(2, 2), T(2, 2);
  S << 0, -1, 1, 0;
  T << 1, 1, 0, 1;
  g.generators = {S, T};
  return g;
}

GammaSpec gamma_integer_orthogonal(int n) {
  GammaSpec g;
  g.kind = GammaKind::IntegerOrthogonal;
  g.n = n;
  g.form = IMat::Identity(n + 1, n + 1);
  g.form(n, n) = -1;
  return g;
}

GammaSpec gamma_sargent_shapira() {
  GammaSpec g;
  g.kind = GammaKind::ConjugatedIntegerOrthogonal;
  g.n = 2;
  g.form = IMat::Zero(3, 3);
  g.form(0, 2) = 1;
  g.form(2, 0) = 1;
  g.form(1, 1) = -1;
  const double r = 1.0 / std::sqrt(2.0);
  Mat M(3, 3);
  M << 0, r, r,
       1, 0, 0,
       0, -r, r;
  g.conjugator = M;
  return g;
}

GroupElement embed_gamma(const GammaSpec& spec, const IMat& exact) {
  switch (spec.kind) {
    case GammaKind::PhiSL2Z: {
      Mat2 m;
      m << double(exact(0, 0)), double(exact(0, 1)), double(exact(1, 0)), double(exact(1, 1));
      return isogeny_phi(m);
    }
    case GammaKind::IntegerOrthogonal: {
      GroupElement g;
      g.mat = exact.cast<double>();
      g.exact = exact;
      return g;
    }
    case GammaKind::ConjugatedIntegerOrthogonal: {
      GroupElement g;
      g.mat = spec.conjugator.transpose() * exact.cast<double>() * spec.conjugator;
      return g;
    }
  }
  throw std::logic_error("embed_gamma: unknown kind");
}

namespace {

double skew_scale(const NormSpec& norm) {
  if (norm.kind != NormKind::SkewedFrobenius) return 1.0;
  Eigen::JacobiSVD<Mat> svd(norm.g0);
  return svd.singularValues()(0);  // |Phi(g)| <= T * sigma_max(g0)
}

bool sl2_sign_canonical(std::int64_t a, std::int64_t b, std::int64_t c, std::int64_t d) {
  for (std::int64_t v : {a, b, c, d}) {
    if (v > 0) return true;
    if (v < 0) return false;
  }
  return false;
}

bool phi_norm_ok(const IMat& q, const NormSpec& norm, double T) {
  Eigen::Matrix<std::int64_t, 2, 2> g2;
  g2 << q(0, 0), q(0, 1), q(1, 0), q(1, 1);
  auto twice = isogeny_phi_twice(g2);
  switch (norm.kind) {
    case NormKind::Frobenius: {
      double s = 0;
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) s += double(twice(r, c)) * double(twice(r, c));
      return s <= 4.0 * T * T * (1.0 + 3e-12);
    }
    case NormKind::MaxEntry: {
      std::int64_t m = 0;
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) m = std::max(m, std::abs(twice(r, c)));
      return double(m) <= 2.0 * T * (1.0 + 1e-12);
    }
    case NormKind::SkewedFrobenius: {
      Mat phi = twice.cast<double>() * 0.5;
      return norm_leq(norm(phi), T);
    }
  }
  return false;
}

void sort_elements(BallEnumeration& ball) {
  std::sort(ball.elements.begin(), ball.elements.end(),
            [](const BallElement& x, const BallElement& y) {
              for (int r = 0; r < x.exact.rows(); ++r)
                for (int c = 0; c < x.exact.cols(); ++c) {
                  if (x.exact(r, c) != y.exact(r, c)) return x.exact(r, c) < y.exact(r, c);
                }
              return false;
            });
}

BallEnumeration enumerate_phi_direct(const GammaSpec& spec, const NormSpec& norm, double T) {
  BallEnumeration ball;
  ball.T = T;
  ball.rep = RepKind::SL2;
  const double bound = std::sqrt(2.0 * T * skew_scale(norm)) + 1.0;
  if (bound > 46000.0) throw std::invalid_argument("enumerate_ball_direct: entry bound overflow");
  const std::int64_t m = std::int64_t(std::ceil(bound));

  // the search region is partitioned into leading-entry stripes; each tuple
  // is visited exactly once, so the merge needs no dedup and the final order
  // is independent of the worker count
  const int n_stripes = int(2 * m + 1);
  std::vector<std::vector<BallElement>> stripes;
  stripes.resize(std::size_t(n_stripes));
  parallel_chunks(n_stripes, [&](int stripe) {
    std::int64_t a = stripe - m;
    auto& out = stripes[std::size_t(stripe)];
    auto consider = [&](std::int64_t b, std::int64_t c, std::int64_t d) {
      if (!sl2_sign_canonical(a, b, c, d)) return;  // quotient by {+-I}
      IMat q(2, 2);
      q << a, b, c, d;
      if (!phi_norm_ok(q, norm, T)) return;
      out.push_back(BallElement{embed_gamma(spec, q), q});
    };
    for (std::int64_t b = -m; b <= m; ++b) {
      for (std::int64_t c = -m; c <= m; ++c) {
        if (a == 0) {
          if (b * c != -1) continue;
          for (std::int64_t d = -m; d <= m; ++d) consider(b, c, d);
        } else {
          std::int64_t num = 1 + b * c;
          if (num % a != 0) continue;
          std::int64_t d = num / a;
          if (std::abs(d) <= m) consider(b, c, d);
        }
      }
    }
  });
  for (auto& s : stripes)
    for (auto& el : s) ball.elements.push_back(std::move(el));
  sort_elements(ball);
  return ball;
}

// integer vectors with a prescribed q-value, explored by coordinate loops
void isotropic_like(const IMat& Q, std::int64_t target, double max_norm,
                    const std::function<void(const IVec&)>& sink) {
  const int d = int(Q.rows());
  IVec v = IVec::Zero(d);
  std::int64_t cap = std::int64_t(std::floor(max_norm));
  std::function<void(int, std::int64_t)> rec = [&](int idx, std::int64_t norm2_left) {
    if (idx == d) {
      std::int64_t qv = 0;
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) qv += Q(i, j) * v(i) * v(j);
      if (qv == target) sink(v);
      return;
    }
    std::int64_t c = std::int64_t(std::floor(std::sqrt(double(norm2_left))));
    for (std::int64_t t = -c; t <= c; ++t) {
      v(idx) = t;
      rec(idx + 1, norm2_left - t * t);
    }
    v(idx) = 0;
  };
  rec(0, cap * cap);
}

BallEnumeration enumerate_orth_direct(const GammaSpec& spec, const NormSpec& norm, double T) {
  const int d = spec.n + 1;
  BallEnumeration ball;
  ball.T = T;
  ball.rep = spec.rep();
  const IMat& Q = spec.form;

  // columns must satisfy B(c_i, c_j) = Q_ij; prune on the Euclidean budget,
  // which is exact for the Frobenius norm and a sound over-approximation
  // otherwise (|entry| <= |.|_F in the embedded coordinates, conjugator
  // orthogonal)
  double budget = T * T * skew_scale(norm) * skew_scale(norm) + 1e-9;

  std::vector<std::vector<IVec>> pools(d);
  for (int c = 0; c < d; ++c) {
    isotropic_like(Q, Q(c, c), std::sqrt(budget), [&](const IVec& v) { pools[c].push_back(v); });
  }

  IMat cols(d, d);
  std::function<void(int, double)> rec = [&](int k, double norm2_used) {
    if (k == d) {
      Mat m = cols.cast<double>();
      if (std::llround(m.determinant()) != 1) return;
      GroupElement g = embed_gamma(spec, cols);
      if (g.mat(d - 1, d - 1) < 1.0 - 1e-9) return;  // identity component
      if (!norm_leq(norm(g.mat), T)) return;
      ball.elements.push_back(BallElement{std::move(g), cols});
      return;
    }
    for (const IVec& v : pools[k]) {
      double n2 = double(v.squaredNorm());
      if (norm2_used + n2 > budget) continue;
      bool ok = true;
      for (int j = 0; j < k && ok; ++j) {
        std::int64_t bq = 0;
        for (int i = 0; i < d; ++i)
          for (int l = 0; l < d; ++l) bq += Q(i, l) * cols(i, j) * v(l);
        ok = (bq == Q(j, k));
      }
      if (!ok) continue;
      cols.col(k) = v;
      rec(k + 1, norm2_used + n2);
    }
  };
  rec(0, 0.0);
  sort_elements(ball);
  return ball;
}

// Fast path for the Sargent-Shapira form 2xz - y^2: enumerate pairs of
// isotropic columns (c1, c3) with B(c1, c3) = 1; the middle column is then
// determined up to the sign fixed by det = +1.
BallEnumeration enumerate_ss_direct(const GammaSpec& spec, const NormSpec& norm, double T) {
  BallEnumeration ball;
  ball.T = T;
  ball.rep = spec.rep();

  const double budget = T * T * skew_scale(norm) * skew_scale(norm) + 1e-9;
  const std::int64_t xmax = std::int64_t(std::floor(std::sqrt(budget)));

  // isotropic: 2xz = y^2
  std::vector<Eigen::Vector3i> iso;
  for (std::int64_t y = -xmax; y <= xmax; ++y) {
    if (y == 0) {
      for (std::int64_t x = -xmax; x <= xmax; ++x) iso.emplace_back(int(x), 0, 0);
      for (std::int64_t z = -xmax; z <= xmax; ++z)
        if (z != 0) iso.emplace_back(0, 0, int(z));
      continue;
    }
    if (y % 2 != 0) continue;  // 2 | y^2 forces y even
    std::int64_t m2 = (y * y) / 2;
    for (std::int64_t x = 1; x * x <= m2; ++x) {
      if (m2 % x != 0) continue;
      std::int64_t z = m2 / x;
      for (int sx : {1, -1}) {
        std::int64_t xx = sx * x, zz = sx * z;  // xz > 0 required
        iso.emplace_back(int(xx), int(y), int(zz));
        if (x != z) iso.emplace_back(int(zz), int(y), int(xx));
      }
    }
  }
  std::sort(iso.begin(), iso.end(), [](const auto& a, const auto& b) {
    auto na = a.squaredNorm(), nb = b.squaredNorm();
    if (na != nb) return na < nb;
    return std::lexicographical_compare(a.data(), a.data() + 3, b.data(), b.data() + 3);
  });

  auto bform = [](const Eigen::Vector3i& u, const Eigen::Vector3i& w) {
    return std::int64_t(u(0)) * w(2) + std::int64_t(u(2)) * w(0) - std::int64_t(u(1)) * w(1);
  };

  for (const auto& c1 : iso) {
    double n1 = double(c1.squaredNorm());
    if (n1 + 1.0 > budget) break;  // sorted by norm; smallest c2 has |c2|^2 >= 1
    for (const auto& c3 : iso) {
      double n3 = double(c3.squaredNorm());
      if (n1 + n3 + 1.0 > budget) break;
      if (bform(c1, c3) != 1) continue;
      // Q-orthogonal complement of (c1, c3): w = Q (c1 x c3)
      Eigen::Vector3i cr(c1(1) * c3(2) - c1(2) * c3(1),
                         c1(2) * c3(0) - c1(0) * c3(2),
                         c1(0) * c3(1) - c1(1) * c3(0));
      Eigen::Vector3i w(cr(2), -cr(1), cr(0));  // Q_mat * cr
      std::int64_t qw = std::int64_t(w(0)) * w(2) * 2 - std::int64_t(w(1)) * w(1);
      if (qw >= 0) continue;  // need Q(c2) = -1 after scaling
      std::int64_t t2 = -qw;
      std::int64_t t = std::int64_t(std::llround(std::sqrt(double(t2))));
      while (t * t < t2) ++t;
      while (t * t > t2) --t;
      if (t * t != t2 || t == 0) continue;
      if (w(0) % t != 0 || w(1) % t != 0 || w(2) % t != 0) continue;
      Eigen::Vector3i c2 = w / int(t);
      if (n1 + n3 + double(c2.squaredNorm()) > budget) continue;
      IMat cols(3, 3);
      for (int r = 0; r < 3; ++r) {
        cols(r, 0) = c1(r);
        cols(r, 1) = c2(r);
        cols(r, 2) = c3(r);
      }
      double det = cols.cast<double>().determinant();
      if (std::llround(det) == -1) {
        cols.col(1) *= -1;
      } else if (std::llround(det) != 1) {
        continue;
      }
      GroupElement g = embed_gamma(spec, cols);
      if (g.mat(2, 2) < 1.0 - 1e-9) continue;
      if (!norm_leq(norm(g.mat), T)) continue;
      ball.elements.push_back(BallElement{std::move(g), cols});
    }
  }
  sort_elements(ball);
  return ball;
}

}  // namespace

BallEnumeration enumerate_ball_direct(const GammaSpec& spec, const NormSpec& norm, double T) {
  switch (spec.kind) {
    case GammaKind::PhiSL2Z: return enumerate_phi_direct(spec, norm, T);
    case GammaKind::IntegerOrthogonal: return enumerate_orth_direct(spec, norm, T);
    case GammaKind::ConjugatedIntegerOrthogonal: {
      // specialized for Q = 2xz - y^2; other forms go through the generic search
      IMat Q = spec.form;
      IMat ss(3, 3);
      ss << 0, 0, 1, 0, -1, 0, 1, 0, 0;
      if (Q.rows() == 3 && Q == ss) return enumerate_ss_direct(spec, norm, T);
      return enumerate_orth_direct(spec, norm, T);
    }
  }
  throw std::logic_error("enumerate_ball_direct: unknown kind");
}

namespace {

struct KeyHash {
  std::size_t operator()(const std::vector<std::int64_t>& k) const {
    std::size_t h = 1469598103934665603ULL;
    for (auto v : k) {
      h ^= std::size_t(v) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    }
    return h;
  }
};

std::vector<std::int64_t> flatten_key(const IMat& m, bool mod_sign) {
  std::vector<std::int64_t> key;
  key.reserve(std::size_t(m.size()));
  int sign = 1;
  if (mod_sign) {
    sign = 0;
    for (int r = 0; r < m.rows() && sign == 0; ++r)
      for (int c = 0; c < m.cols() && sign == 0; ++c)
        if (m(r, c) != 0) sign = m(r, c) > 0 ? 1 : -1;
    if (sign == 0) sign = 1;
  }
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) key.push_back(sign * m(r, c));
  return key;
}

IMat exact_inverse_rep(const GammaSpec& spec, const IMat& m) {
  if (spec.kind == GammaKind::PhiSL2Z) {
    IMat inv(2, 2);
    inv << m(1, 1), -m(0, 1), -m(1, 0), m(0, 0);
    return inv;
  }
  // gamma^{-1} = Q^{-1} gamma^T Q; Q is unimodular here (det +-1), and for the
  // shipped forms Q^{-1} = Q
  Mat qinv = spec.form.cast<double>().inverse();
  Mat gi = qinv * m.cast<double>().transpose() * spec.form.cast<double>();
  IMat out(m.rows(), m.cols());
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) out(r, c) = std::int64_t(std::llround(gi(r, c)));
  return out;
}

}  // namespace

BallEnumeration enumerate_ball_bfs(const GammaSpec& spec, const NormSpec& norm, double T,
                                   double kappa, std::size_t element_cap) {
  if (spec.generators.empty())
    throw std::invalid_argument("enumerate_ball_bfs: generator list required");
  const bool mod_sign = spec.kind == GammaKind::PhiSL2Z;

  std::vector<IMat> gens;
  for (const IMat& g : spec.generators) {
    gens.push_back(g);
    gens.push_back(exact_inverse_rep(spec, g));
  }

  BallEnumeration ball;
  ball.T = T;
  ball.rep = spec.rep();

  const int d = spec.kind == GammaKind::PhiSL2Z ? 2 : spec.n + 1;
  IMat id = IMat::Identity(d, d);

  std::unordered_set<std::vector<std::int64_t>, KeyHash> seen;
  std::deque<IMat> frontier;
  seen.insert(flatten_key(id, mod_sign));
  frontier.push_back(id);

  auto norm_of = [&](const IMat& m) { return norm(embed_gamma(spec, m).mat); };

  if (norm_leq(norm_of(id), T)) ball.elements.push_back(BallElement{embed_gamma(spec, id), id});

  while (!frontier.empty()) {
    IMat cur = frontier.front();
    frontier.pop_front();
    for (const IMat& g : gens) {
      IMat nxt = cur * g;
      auto key = flatten_key(nxt, mod_sign);
      if (seen.count(key)) continue;
      double nn = norm_of(nxt);
      if (nn > kappa * T) continue;
      seen.insert(std::move(key));
      if (seen.size() > element_cap) {
        ball.complete = false;
        sort_elements(ball);
        return ball;
      }
      if (mod_sign) {
        // store the sign-canonical representative
        IMat canon = nxt;
        if (!sl2_sign_canonical(canon(0, 0), canon(0, 1), canon(1, 0), canon(1, 1))) canon = -canon;
        if (norm_leq(nn, T)) ball.elements.push_back(BallElement{embed_gamma(spec, canon), canon});
      } else {
        if (norm_leq(nn, T)) ball.elements.push_back(BallElement{embed_gamma(spec, nxt), nxt});
      }
      frontier.push_back(std::move(nxt));
    }
  }
  sort_elements(ball);
  return ball;
}

std::vector<Eigen::Vector3i> enumerate_HZ(double T) {
  std::vector<Eigen::Vector3i> out;
  if (T < 1.0) return out;
  const std::int64_t ymax = std::int64_t(std::floor(T * (1.0 + 1e-12)));
  const double T2 = T * T * (1.0 + 3e-12);
  for (std::int64_t y = -ymax; y <= ymax; ++y) {
    if ((1 + y * y) % 2 != 0) continue;  // y must be odd
    std::int64_t m = (1 + y * y) / 2;    // xz = m > 0
    for (std::int64_t x = 1; x * x <= m; ++x) {
      if (m % x != 0) continue;
      std::int64_t z = m / x;
      for (int s : {1, -1}) {
        if (double(x * x + y * y + z * z) <= T2) {
          out.emplace_back(int(s * x), int(y), int(s * z));
          if (x != z) out.emplace_back(int(s * z), int(y), int(s * x));
        }
      }
    }
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return std::lexicographical_compare(a.data(), a.data() + 3, b.data(), b.data() + 3);
  });
  return out;
}

GrowthReport growth_report(const std::vector<double>& T_ladder,
                           const std::vector<std::size_t>& counts,
                           const std::vector<double>& volumes, int n) {
  if (T_ladder.size() < 3 || T_ladder.size() != counts.size() || counts.size() != volumes.size())
    throw std::invalid_argument("growth_report: need matched ladders of length >= 3");
  GrowthReport rep;
  for (std::size_t i = 0; i < T_ladder.size(); ++i) {
    GrowthRow row;
    row.T = T_ladder[i];
    row.count = counts[i];
    row.count_over_Tpow = double(counts[i]) / std::pow(T_ladder[i], n - 1);
    row.count_over_vol = volumes[i] > 0 ? double(counts[i]) / volumes[i] : 0.0;
    rep.rows.push_back(row);
  }
  double lo = 1e300, hi = 0;
  for (std::size_t i = rep.rows.size() - 3; i < rep.rows.size(); ++i) {
    lo = std::min(lo, rep.rows[i].count_over_vol);
    hi = std::max(hi, rep.rows[i].count_over_vol);
  }
  rep.top_variation = lo > 0 ? hi / lo - 1.0 : 1e300;
  // least-squares slope of log(count) against log(T)
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double N = double(T_ladder.size());
  for (std::size_t i = 0; i < T_ladder.size(); ++i) {
    double x = std::log(T_ladder[i]);
    double y = std::log(double(std::max<std::size_t>(counts[i], 1)));
    sx += x; sy += y; sxx += x * x; sxy += x * y;
  }
  rep.exponent_fit = (N * sxy - sx * sy) / (N * sxx - sx * sx);
  return rep;
}

}  // namespace lab
