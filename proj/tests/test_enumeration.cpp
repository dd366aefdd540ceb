#include <doctest.h>

#include <set>

#include "lab/enumeration.hpp"
#include "lab/quadrature.hpp"

using namespace lab;

namespace {

bool same_element_sets(const BallEnumeration& a, const BallEnumeration& b) {
  if (a.count() != b.count()) return false;
  for (std::size_t i = 0; i < a.count(); ++i)
    if (a.elements[i].exact != b.elements[i].exact) return false;
  return true;
}

std::int64_t bform(const IMat& Q, const IVec& u, const IVec& w) {
  std::int64_t s = 0;
  for (int i = 0; i < Q.rows(); ++i)
    for (int j = 0; j < Q.cols(); ++j) s += Q(i, j) * u(i) * w(j);
  return s;
}

}  // namespace

TEST_CASE("phi-sl2z direct: tiny balls") {
  auto gs = gamma_phi_sl2z();
  auto nf = frobenius_norm();
  CHECK(enumerate_ball_direct(gs, nf, 1.0).count() == 0);
  // at T = |I|_F = sqrt(3) the ball is {id, k_pi}: k_pi = Phi(S) has the same
  // Frobenius norm as the identity (every k_theta does)
  auto tiny = enumerate_ball_direct(gs, nf, std::sqrt(3.0));
  CHECK(tiny.count() == 2);
  bool has_id = false, has_kpi = false;
  for (const auto& el : tiny.elements) {
    if ((el.g.mat - Mat::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-12) has_id = true;
    if ((el.g.mat - make_k_theta(3.14159265358979323846).mat).cwiseAbs().maxCoeff() < 1e-12)
      has_kpi = true;
  }
  CHECK(has_id);
  CHECK(has_kpi);
}

TEST_CASE("phi-sl2z growth ratios") {
  auto gs = gamma_phi_sl2z();
  auto nf = frobenius_norm();
  // the doubling ratio settles into [1.6, 2.4] from T = 20 on; at T = 10 the
  // ball is still small (66/26 = 2.54) and sits outside the bracket
  for (double T : {20.0, 40.0, 50.0, 100.0}) {
    double r = double(enumerate_ball_direct(gs, nf, 2 * T).count()) /
               double(enumerate_ball_direct(gs, nf, T).count());
    CHECK(r >= 1.6);
    CHECK(r <= 2.4);
  }
}

TEST_CASE("BFS vs direct oracle equivalence (phi-sl2z, T <= 30, kappa = 4)") {
  auto gs = gamma_phi_sl2z();
  auto nf = frobenius_norm();
  for (double T : {5.0, 12.0, 30.0}) {
    auto direct = enumerate_ball_direct(gs, nf, T);
    auto bfs = enumerate_ball_bfs(gs, nf, T, 4.0);
    CHECK(same_element_sets(direct, bfs));
  }
  // max-entry norm agreement too
  auto me = max_entry_norm();
  CHECK(same_element_sets(enumerate_ball_direct(gs, me, 12.0),
                          enumerate_ball_bfs(gs, me, 12.0, 4.0)));
}

TEST_CASE("BFS basics") {
  GammaSpec trivial = gamma_phi_sl2z();
  trivial.generators = {IMat(IMat::Identity(2, 2))};
  auto ball = enumerate_ball_bfs(trivial, frobenius_norm(), 10.0, 4.0);
  CHECK(ball.count() == 1);  // generators = {id} -> {id}
  CHECK_THROWS(enumerate_ball_bfs(GammaSpec{}, frobenius_norm(), 10.0, 4.0));
}

TEST_CASE("monotonicity of balls") {
  auto gs = gamma_phi_sl2z();
  auto nf = frobenius_norm();
  auto small = enumerate_ball_direct(gs, nf, 15.0);
  auto big = enumerate_ball_direct(gs, nf, 30.0);
  std::set<std::vector<std::int64_t>> keys;
  for (const auto& el : big.elements) {
    std::vector<std::int64_t> k(el.exact.data(), el.exact.data() + 4);
    keys.insert(k);
  }
  for (const auto& el : small.elements) {
    std::vector<std::int64_t> k(el.exact.data(), el.exact.data() + 4);
    CHECK(keys.count(k) == 1);
  }
}

TEST_CASE("inverse closure under star-invariant norms (exact)") {
  auto gs = gamma_phi_sl2z();
  auto nf = frobenius_norm();
  auto ball = enumerate_ball_direct(gs, nf, 40.0);
  auto rowmajor = [](const IMat& m) {
    return std::vector<std::int64_t>{m(0, 0), m(0, 1), m(1, 0), m(1, 1)};
  };
  std::set<std::vector<std::int64_t>> keys;
  for (const auto& el : ball.elements) keys.insert(rowmajor(el.exact));
  for (const auto& el : ball.elements) {
    IMat inv(2, 2);
    inv << el.exact(1, 1), -el.exact(0, 1), -el.exact(1, 0), el.exact(0, 0);
    // the enumerator's sign convention: first nonzero of (a,b,c,d) positive
    auto key = rowmajor(inv);
    std::int64_t sign = 0;
    for (int q = 0; q < 4 && sign == 0; ++q)
      if (key[std::size_t(q)] != 0) sign = key[std::size_t(q)] > 0 ? 1 : -1;
    if (sign < 0)
      for (auto& v : key) v = -v;
    CHECK(keys.count(key) == 1);
  }
}

TEST_CASE("sargent-shapira group: form preservation, brute-force oracle, BFS") {
  auto ss = gamma_sargent_shapira();
  auto nf = frobenius_norm();

  // columns-pool brute force (independent of the pair-solving enumerator)
  for (double T : {4.0, 6.0, 9.0}) {
    int E = int(T);
    std::vector<IVec> iso, neg;
    IVec v(3);
    for (int a = -E; a <= E; ++a)
      for (int b = -E; b <= E; ++b)
        for (int c = -E; c <= E; ++c) {
          v << a, b, c;
          std::int64_t q = bform(ss.form, v, v);
          if (q == 0) iso.push_back(v);
          if (q == -1) neg.push_back(v);
        }
    long long n_brute = 0;
    for (const auto& c1 : iso)
      for (const auto& c2 : neg) {
        if (bform(ss.form, c1, c2) != 0) continue;
        for (const auto& c3 : iso) {
          if (bform(ss.form, c1, c3) != 1 || bform(ss.form, c2, c3) != 0) continue;
          IMat g(3, 3);
          g.col(0) = c1;
          g.col(1) = c2;
          g.col(2) = c3;
          if (std::llround(g.cast<double>().determinant()) != 1) continue;
          GroupElement ge = embed_gamma(ss, g);
          if (ge.mat(2, 2) < 1.0 - 1e-9) continue;
          if (!norm_leq(ge.mat.norm(), T)) continue;
          ++n_brute;
        }
      }
    auto ball = enumerate_ball_direct(ss, nf, T);
    CHECK(static_cast<long long>(ball.count()) == n_brute);
  }

  // every element preserves Q exactly and embeds into SO(2,1)^0
  auto b30 = enumerate_ball_direct(ss, nf, 30.0);
  for (const auto& el : b30.elements) {
    CHECK(el.exact.transpose() * ss.form * el.exact == ss.form);
    CHECK(is_group_element(el.g.mat, 1e-9));
  }

  // BFS with generators harvested from the T=4 ball reproduces the T=30 ball
  GammaSpec gen = ss;
  for (const auto& el : enumerate_ball_direct(ss, nf, 4.0).elements)
    gen.generators.push_back(el.exact);
  CHECK(same_element_sets(enumerate_ball_bfs(gen, nf, 30.0, 4.0), b30));
}

TEST_CASE("integer orthogonal group (n = 3) small ball") {
  auto io = gamma_integer_orthogonal(3);
  auto nf = frobenius_norm();
  auto ball = enumerate_ball_direct(io, nf, 4.0);
  CHECK(ball.count() >= 1);
  IMat Q = io.form;
  for (const auto& el : ball.elements) {
    CHECK(el.exact.transpose() * Q * el.exact == Q);
    CHECK(el.g.mat(3, 3) >= 1.0);
  }
  // the compact part alone contains |SO(3, Z)| = 24 elements of norm 2
  CHECK(ball.count() >= 24);
}

TEST_CASE("enumerate_HZ") {
  auto hz = enumerate_HZ(std::sqrt(3.0));
  auto has = [&](int x, int y, int z) {
    for (const auto& v : hz)
      if (v(0) == x && v(1) == y && v(2) == z) return true;
    return false;
  };
  CHECK(has(1, 1, 1));
  CHECK(has(1, -1, 1));
  for (const auto& v : hz) CHECK(2 * v(0) * v(2) - v(1) * v(1) == 1);
  // symmetries
  auto hz40 = enumerate_HZ(40.0);
  auto has40 = [&](int x, int y, int z) {
    for (const auto& v : hz40)
      if (v(0) == x && v(1) == y && v(2) == z) return true;
    return false;
  };
  for (const auto& v : hz40) {
    CHECK(has40(v(2), v(1), v(0)));
    CHECK(has40(v(0), -v(1), v(2)));
  }
  CHECK(enumerate_HZ(0.5).empty());
}

TEST_CASE("growth_report") {
  // synthetic constant-rate input: last column constant to 2%
  std::vector<double> Ts = {50, 100, 200, 400};
  std::vector<std::size_t> counts;
  std::vector<double> vols;
  for (double T : Ts) {
    counts.push_back(std::size_t(std::llround(3.0 * T)));
    vols.push_back(3.1 * T);
  }
  auto rep = growth_report(Ts, counts, vols, 2);
  CHECK(rep.top_variation < 0.02);
  CHECK(rep.exponent_fit == doctest::Approx(1.0).epsilon(0.01));
  CHECK_THROWS(growth_report({1.0, 2.0}, {1, 2}, {1.0, 2.0}, 2));

  // real ladder: exponent fit within [0.85, 1.15], top-three variation <= 15%
  auto gs = gamma_phi_sl2z();
  auto nf = frobenius_norm();
  std::vector<double> ladder = {25, 50, 100, 200};
  std::vector<std::size_t> cs;
  std::vector<double> vs;
  QuadratureSpec spec;
  spec.mc_samples = 20000;
  spec.seed = 101;
  for (double T : ladder) {
    cs.push_back(enumerate_ball_direct(gs, nf, T).count());
    vs.push_back(vol_ball_mc(2, nf, T, spec).value);
  }
  auto real_rep = growth_report(ladder, cs, vs, 2);
  CHECK(real_rep.exponent_fit >= 0.85);
  CHECK(real_rep.exponent_fit <= 1.15);
  CHECK(real_rep.top_variation <= 0.15);
}

TEST_CASE("skewed norm enumeration stays finite and sound") {
  auto gs = gamma_phi_sl2z();
  auto sk = skewed_frobenius_norm(make_a(2, 1.0));
  auto ball = enumerate_ball_direct(gs, sk, 10.0);
  for (const auto& el : ball.elements) CHECK(norm_leq(sk(el.g.mat), 10.0));
  // the skewed ball around a(1) is not the Frobenius ball
  auto fb = enumerate_ball_direct(gs, frobenius_norm(), 10.0);
  CHECK_FALSE(same_element_sets(ball, fb));
}
