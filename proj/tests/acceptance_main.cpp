// Acceptance suite: runs every acceptance criterion at its stated tolerance
// and prints one pass/fail line per criterion. Exit code = number of failed
// criteria.

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <vector>

#include "lab/experiment.hpp"

using namespace lab;
using Clock = std::chrono::steady_clock;

namespace {

struct Criterion {
  std::string name;
  bool pass = true;
  std::ostringstream detail;
  Clock::time_point t0 = Clock::now();

  explicit Criterion(std::string n) : name(std::move(n)) {}

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [FAILED: " << what << "]";
    } else {
      detail << " [" << what << "]";
    }
  }

  bool finish() const {
    double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    std::cout << (pass ? "[PASS] " : "[FAIL] ") << name << detail.str() << " ("
              << std::fixed << std::setprecision(1) << secs << "s)\n";
    std::cout.unsetf(std::ios::fixed);
    std::cout << std::setprecision(6);
    return pass;
  }
};

std::string fmt(double v) {
  std::ostringstream ss;
  ss << std::setprecision(4) << v;
  return ss.str();
}

std::string source_dir() {
#ifdef LAB_SOURCE_DIR
  return LAB_SOURCE_DIR;
#else
  return ".";
#endif
}

std::string read_file(const std::string& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

bool same_element_sets(const BallEnumeration& a, const BallEnumeration& b) {
  if (a.count() != b.count()) return false;
  for (std::size_t i = 0; i < a.count(); ++i)
    if (a.elements[i].exact != b.elements[i].exact) return false;
  return true;
}

// contraction residual evaluated in __float128 from one shared E = e^s; the
// e^{-2s} scale is below the double-precision cancellation floor for s > 9
double contraction_residual_quad(int n, double s, bool starred) {
  const int d = n + 1;
  using F = __float128;
  F E = F(std::exp(s));
  std::vector<F> a(std::size_t(d * d), F(0)), gi(std::size_t(d * d), F(0));
  auto at = [&](std::vector<F>& m, int r, int c) -> F& { return m[std::size_t(r * d + c)]; };
  for (int q = 1; q < n; ++q) {
    at(a, q, q) = 1;
    at(gi, q, q) = 1;
  }
  F ch = (E + 1 / E) / 2, sh = (E - 1 / E) / 2;
  at(a, 0, 0) = ch;
  at(a, d - 1, d - 1) = ch;
  at(a, 0, d - 1) = starred ? -sh : sh;
  at(a, d - 1, 0) = starred ? -sh : sh;
  if (!starred) {
    at(gi, 0, 0) = 1 / E + E / 2;
    at(gi, d - 1, 0) = -E / 2;
    at(gi, 0, d - 1) = 1 / E - E / 2;
    at(gi, d - 1, d - 1) = E / 2;
  } else {
    at(gi, 0, 0) = E / 2;
    at(gi, d - 1, 0) = E / 2 - 1 / E;
    at(gi, 0, d - 1) = E / 2;
    at(gi, d - 1, d - 1) = E / 2 + 1 / E;
  }
  F fro = 0;
  for (int r = 0; r < d; ++r)
    for (int c = 0; c < d; ++c) {
      F acc = r == c ? F(-1) : F(0);
      for (int k = 0; k < d; ++k) acc += at(a, r, k) * at(gi, k, c);
      fro += acc * acc;
    }
  return std::sqrt(double(fro));
}

OrthoPair degenerate_start(double theta0, double alpha) {
  Mat k = make_k_theta(theta0).mat;
  Vec vp = k * v_plus(2), v0 = k * Vec::Unit(3, 1);
  Mat b(3, 2);
  b.col(0) = vp;
  b.col(1) = alpha * v0;
  Eigen::Vector3d a1 = b.col(0), b1 = b.col(1);
  Mat nrm = a1.cross(b1);
  return make_ortho_pair(make_lattice(b), make_lattice(nrm));
}

// --- criterion 1: exact-identity suite -------------------------------------
bool criterion1() {
  Criterion c("C1 exact-identity suite (isogeny, group laws, contraction, action identities)");
  Rng rng(1001);
  bool ok = true;

  for (double s : {0.5, 1.0, 2.0})
    ok &= (isogeny_phi_mat(sl2_delta(s)) - make_a(2, s).mat).cwiseAbs().maxCoeff() < 1e-12;
  for (double t : {-1.0, 0.3, 2.0})
    ok &= (isogeny_phi_mat(sl2_upsilon(t)) - make_u(2, Vec::Constant(1, t)).mat)
              .cwiseAbs()
              .maxCoeff() < 1e-12;
  for (double th : {0.3, 2.2})
    ok &= (isogeny_phi_mat(sl2_kappa(0.5 * th)) - make_k_theta(th).mat).cwiseAbs().maxCoeff() <
          1e-12;
  c.require(ok, "Phi characterization 1e-12");

  ok = true;
  for (int t = 0; t < 100; ++t) {
    double s = rng.uniform(-3, 3), u = rng.uniform(-3, 3);
    ok &= (make_a(3, s).mat * make_a(3, u).mat - make_a(3, s + u).mat).cwiseAbs().maxCoeff() <
          1e-12;
    Vec x = Vec::Constant(1, rng.uniform(-2, 2)), y = Vec::Constant(1, rng.uniform(-2, 2));
    ok &= (make_u(2, x).mat * make_u(2, y).mat - make_u(2, Vec(x + y)).mat).cwiseAbs().maxCoeff() <
          1e-12;
    ok &= (make_k_theta(s).mat * make_k_theta(u).mat - make_k_theta(s + u).mat)
              .cwiseAbs()
              .maxCoeff() < 1e-12;
  }
  c.require(ok, "group laws 1e-12 x100");

  ok = true;
  for (int n : {2, 3})
    for (double s = 2.0; s <= 12.0; s += 0.25) {
      ok &= contraction_residual_quad(n, s, false) <= 2.0 * std::exp(-2.0 * s);
      ok &= contraction_residual_quad(n, s, true) <= 2.0 * std::exp(-2.0 * s);
      if (s <= 8.0) {  // double-precision regime: check the library matrices too
        auto [g1i, g2i] = make_g1_g2_inv(n, s);
        ok &= (make_a(n, s).mat * g1i - Mat::Identity(n + 1, n + 1)).norm() <=
              2.0 * std::exp(-2.0 * s);
        ok &= (star(make_a(n, s)).mat * g2i - Mat::Identity(n + 1, n + 1)).norm() <=
              2.0 * std::exp(-2.0 * s);
      }
    }
  c.require(ok, "contraction bracket <= 2e^{-2s} on [2,12]");

  auto randmat = [&rng](int d) {
    Mat y(d, d);
    do {
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) y(a, b) = double(rng.uniform_int(7) - 3);
    } while (std::abs(y.determinant()) < 0.5);
    return y;
  };
  ok = true;
  for (auto [n, i, j] : std::vector<std::array<int, 3>>{{2, 1, 0}, {3, 1, 1}, {3, 0, 2}}) {
    for (int trial = 0; trial < 20; ++trial) {
      double s = std::vector<double>{0.5, 1.0, 3.0}[std::size_t(trial % 3)];
      Mat y1 = randmat(i + 1), y2 = randmat(j + 1);
      Mat b1 = Mat::Zero(n + 1, i + 1), b2 = Mat::Zero(n + 1, j + 1);
      for (int q = 0; q <= i; ++q) b1(q, q) = 1;
      for (int q = 0; q <= j; ++q) b2(i + 1 + q, q) = 1;
      auto [g1, g2] = make_g1_g2(n, s);
      auto [R1, R2] = make_R1_R2(n);
      auto [d1, d2] = make_d1_d2(i, j, s);
      ok &= class_equal(canonical_class(Mat(g1 * b1 * y1)),
                        canonical_class(Mat(R1 * b1 * d1 * y1)), 1e-9);
      ok &= class_equal(canonical_class(Mat(g2 * b2 * y2)),
                        canonical_class(Mat(R2 * b2 * d2 * y2)), 1e-9);
    }
  }
  c.require(ok, "diagonal-push identity (symmetric case) x20 at 1e-9");

  ok = true;
  for (auto [n, i, j] : std::vector<std::array<int, 3>>{{2, 1, 0}, {3, 1, 1}, {3, 2, 0}}) {
    for (int trial = 0; trial < 20; ++trial) {
      double s = rng.uniform(0.2, 2.5);
      Vec x(n - 1);
      for (int q = 0; q < n - 1; ++q) x(q) = rng.uniform(-1.5, 1.5);
      Mat y1 = randmat(i + 1), y2 = randmat(j + 1);
      Mat b1 = Mat::Zero(n + 1, i + 1), b2 = Mat::Zero(n + 1, j + 1);
      b1.col(0) = v_plus(n);
      for (int q = 1; q <= i; ++q) b1(q, q) = 1;
      b2.col(0) = v_minus(n);
      for (int q = 1; q <= j; ++q) b2(i + q, q) = 1;
      Mat g = make_a(n, s).mat * make_u(n, x).mat;
      auto [del1, del2] = make_delta_pair(i, j, s);
      auto [ups1, ups2] = make_upsilon_pair(i, j, x);
      ok &= class_equal(canonical_class(Mat(g * b1 * y1)),
                        canonical_class(Mat(b1 * del1 * ups1 * y1)), 1e-9);
      ok &= class_equal(canonical_class(Mat(star(g) * b2 * y2)),
                        canonical_class(Mat(b2 * del2 * ups2 * y2)), 1e-9);
    }
  }
  c.require(ok, "diagonal-push identity (horospherical case) x20 at 1e-9");
  return c.finish();
}

// --- criterion 2: enumeration oracle equivalence ---------------------------
bool criterion2() {
  Criterion c("C2 direct vs BFS enumeration (phi-sl2z, T <= 30, kappa = 4)");
  auto gs = gamma_phi_sl2z();
  auto nf = frobenius_norm();
  for (double T : {10.0, 20.0, 30.0}) {
    auto direct = enumerate_ball_direct(gs, nf, T);
    auto bfs = enumerate_ball_bfs(gs, nf, T, 4.0);
    c.require(same_element_sets(direct, bfs),
              "T=" + fmt(T) + " identical sets (" + std::to_string(direct.count()) + ")");
  }
  return c.finish();
}

// --- criterion 3: growth law ------------------------------------------------
bool criterion3() {
  Criterion c("C3 growth law (ratios, Vol-stabilization, exponent)");
  auto gs = gamma_phi_sl2z();
  auto nf = frobenius_norm();
  QuadratureSpec spec;
  spec.mc_samples = 50000;
  spec.seed = 1003;

  std::vector<double> ladder = {25, 50, 100, 200};
  std::vector<std::size_t> counts;
  std::vector<double> vols;
  for (double T : ladder) {
    counts.push_back(enumerate_ball_direct(gs, nf, T).count());
    vols.push_back(vol_ball_mc(2, nf, T, spec).value);
  }
  for (double T : {50.0, 100.0}) {
    std::size_t nT = counts[T == 50.0 ? 1 : 2];
    std::size_t n2T = counts[T == 50.0 ? 2 : 3];
    double ratio = double(n2T) / double(nT);
    c.require(ratio >= 1.6 && ratio <= 2.4, "#G_2T/#G_T(T=" + fmt(T) + ")=" + fmt(ratio));
  }
  auto rep = growth_report(ladder, counts, vols, 2);
  c.require(rep.top_variation <= 0.15,
            "top-three #/Vol variation=" + fmt(rep.top_variation));
  return c.finish();
}

// --- criterion 4: volume asymptotics ----------------------------------------
bool criterion4() {
  Criterion c("C4 volume asymptotics (T=1e3 vs closed-form constants)");
  QuadratureSpec spec;
  spec.mc_samples = 60000;
  spec.seed = 1004;
  auto nf = frobenius_norm();
  auto me = max_entry_norm();
  for (auto [n, nrm, label] : std::vector<std::tuple<int, NormSpec, std::string>>{
           {2, nf, "n2-frob"}, {2, me, "n2-max"}, {3, nf, "n3-frob"}}) {
    auto vc = volume_constant(n, nrm, spec);
    auto vb = vol_ball_mc(n, nrm, 1000.0, spec);
    double rel = std::abs(vb.value / std::pow(1000.0, n - 1) - vc.value) / vc.value;
    c.require(rel < 0.05, label + " rel=" + fmt(rel));
  }
  double vals[4] = {volume_constant(3, nf, spec, SubgroupSpec::U_group()).value,
                    volume_constant(3, nf, spec, SubgroupSpec::H(0, 2)).value,
                    volume_constant(3, nf, spec, SubgroupSpec::H(1, 1)).value,
                    volume_constant(3, nf, spec, SubgroupSpec::H(2, 0)).value};
  double worst = 0;
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) worst = std::max(worst, std::abs(vals[a] - vals[b]) / vals[b]);
  c.require(worst < 0.05, "three-decomposition agreement worst=" + fmt(worst));
  return c.finish();
}

// --- criterion 5: b_T-interval asymptotics -----------------------------------
bool criterion5() {
  Criterion c("C5 b_T asymptotic ratios at T=1e3");
  QuadratureSpec spec;
  spec.mc_samples = 50000;
  spec.seed = 1005;
  auto nf = frobenius_norm();
  Rng rng(555);
  GroupElement krand2 = embed_K(haar_sample_SO(2, rng));
  GroupElement krand3 = embed_K(haar_sample_SO(3, rng));
  for (auto [k, which, label] : std::vector<std::tuple<GroupElement, SubgroupSpec, std::string>>{
           {identity_element(2), SubgroupSpec::H(0, 1), "n2-H01-id"},
           {krand2, SubgroupSpec::H(0, 1), "n2-H01-rand"},
           {identity_element(2), SubgroupSpec::U_group(), "n2-U-id"},
           {krand2, SubgroupSpec::U_group(), "n2-U-rand"},
           {identity_element(3), SubgroupSpec::H(1, 1), "n3-H11-id"},
           {krand3, SubgroupSpec::H(1, 1), "n3-H11-rand"}}) {
    auto r = bT_limit_check(k, which, nf, 1000.0, spec);
    c.require(r.ratio > 0.9 && r.ratio < 1.1, label + "=" + fmt(r.ratio));
  }
  return c.finish();
}

// --- criterion 6: density correctness ----------------------------------------
bool criterion6() {
  Criterion c("C6 density correctness (constants, normalization, oracle)");
  QuadratureSpec spec;
  spec.mc_samples = 40000;
  spec.seed = 1006;
  spec.grid_m = 64;
  auto nf = frobenius_norm();

  GroupElement kk = make_k_theta(3, 0.4);
  Mat model(4, 2);
  model.col(0) = v_plus(3);
  model.col(1) = Vec::Unit(4, 1);
  GroupElement g0d = witt_translate_degenerate(Mat(kk.mat * model));

  bool const_ok = true, norm_ok = true;
  for (const DensityProfile& p :
       {eval_w_P0(2, 2, identity_element(2), nf, spec),
        eval_w_P0(2, 1, identity_element(2), nf, spec), eval_w_theta0(0.6, nf, spec),
        eval_w_infty(3, 2, g0d, nf, spec)}) {
    for (int l = 0; l < p.size(); ++l)
      const_ok &= std::abs(p.values(l) - 1.0) <= 3.0 * p.sigmas(l) + 1e-12;
    norm_ok &= std::abs(p.values.dot(p.weights) - 1.0) < 1e-6;
  }
  c.require(const_ok, "Frobenius profiles == 1 within 3 sigma");
  c.require(norm_ok, "normalization 1e-6");

  auto skew = skewed_frobenius_norm(make_a(2, 1.0));
  DensityProfile ps = eval_w_theta0(0.0, skew, spec);
  QuadratureSpec spec10 = spec;
  spec10.mc_samples = 10 * spec.mc_samples;
  spec10.seed = 777;
  DensityProfile ps10 = eval_w_theta0(0.0, skew, spec10);
  bool oracle_ok = true;
  for (int l = 0; l < ps.size(); ++l) {
    double s3 = 3.0 * std::sqrt(ps.sigmas(l) * ps.sigmas(l) + ps10.sigmas(l) * ps10.sigmas(l));
    oracle_ok &= std::abs(ps.values(l) - ps10.values(l)) <= s3 + 1e-12;
  }
  c.require(oracle_ok, "skewed-Frobenius vs 10x oracle, pointwise 3 sigma");
  return c.finish();
}

// --- criterion 7: Sargent-Shapira preset --------------------------------------
bool criterion7() {
  Criterion c("C7 Sargent-Shapira preset (T=50,100,200)");
  std::string preset = read_file(source_dir() + "/presets/sargent-shapira.json");
  if (preset.empty()) {
    c.require(false, "preset file missing");
    return c.finish();
  }
  ExperimentConfig cfg = parse_config(preset);
  cfg.out_dir = "/tmp/lab_acceptance_ss";
  ComparisonReport rep = run_experiment(cfg);
  emit(rep, cfg.out_dir);

  bool decreasing = true;
  for (std::size_t i = 1; i < rep.rows.size(); ++i)
    decreasing &= rep.rows[i].shape_disc < rep.rows[i - 1].shape_disc;
  c.require(decreasing, "shape TV strictly decreasing " + fmt(rep.rows[0].shape_disc) + "->" +
                            fmt(rep.rows[1].shape_disc) + "->" + fmt(rep.rows[2].shape_disc));
  c.require(rep.rows.back().shape_disc < 0.15,
            "top-rung shape TV=" + fmt(rep.rows.back().shape_disc) + " < 0.15");
  c.require(rep.rows.back().ks < 0.08, "top-rung KS=" + fmt(rep.rows.back().ks) + " < 0.08");
  c.require(rep.rows.back().count >= 3000,
            "top-rung orbit points=" + std::to_string(rep.rows.back().count) + " >= 3000");
  return c.finish();
}

// --- criterion 8: special-orbit suite -----------------------------------------
bool criterion8() {
  Criterion c("C8 special orbit (Zv+ + Zv0, phi-sl2z)");
  auto gamma = gamma_phi_sl2z();
  auto nf = frobenius_norm();
  QuadratureSpec spec;
  spec.mc_samples = 40000;
  spec.seed = 1008;
  spec.grid_m = 64;

  OrthoPair start = degenerate_start(0.0, 1.0);
  PredictedLaw law = classify_start(start, gamma, nf, spec);
  c.require(law.kind == PredictedLaw::Case::SpecialExtension && law.m == 1,
            "detect_special -> Special, m=1");

  auto ball = enumerate_ball_direct(gamma, nf, 100.0);
  long fails = 0;
  double worst = 0;
  for (const auto& el : ball.elements) {
    auto w = multi_section_check(el.g, law.packet_coords, law.theta0);
    if (!w.ok) ++fails;
    worst = std::max(worst, w.mismatch);
  }
  c.require(fails == 0, "multisection failures=" + std::to_string(fails) + "/" +
                            std::to_string(ball.count()));
  c.require(worst < 1e-8, "orbit fiber classes on curve, worst=" + fmt(worst));

  // empirical theta-marginal vs w_theta0 (uniform for Frobenius)
  ExperimentConfig cfg;
  cfg.n = 2;
  cfg.gamma = gamma;
  cfg.norm = nf;
  cfg.start = start;
  cfg.T_ladder = {100.0};
  cfg.quad = spec;
  auto dists = run_orbit(cfg, ball);
  double ks = ks_theta(dists.back(), law.profile);
  c.require(ks < 0.08, "KS=" + fmt(ks) + " < 0.08");
  return c.finish();
}

// --- criterion 9: non-special control ------------------------------------------
bool criterion9() {
  Criterion c("C9 non-special degenerate control (alpha = sqrt 2)");
  auto gamma = gamma_phi_sl2z();
  auto nf = frobenius_norm();
  QuadratureSpec spec;
  spec.mc_samples = 30000;
  spec.seed = 1009;
  spec.grid_m = 64;

  OrthoPair start = degenerate_start(0.0, std::sqrt(2.0));
  SpecialVerdict verdict = detect_special(start.first, 0.0, gamma, 1000);
  c.require(!verdict.special && verdict.orbit_bound == 1000, "NotSpecialUpTo(1e3)");

  ExperimentConfig cfg;
  cfg.n = 2;
  cfg.gamma = gamma;
  cfg.norm = nf;
  cfg.start = start;
  cfg.T_ladder = {200.0};
  cfg.quad = spec;
  auto ball = enumerate_ball_direct(gamma, nf, 200.0);
  auto dists = run_orbit(cfg, ball);
  const int bins = 36;
  std::vector<char> hit(std::size_t(shape_bin_count(bins)), 0);
  for (const auto& p : dists.back().points) hit[std::size_t(shape_bin_index(p.shape, bins))] = 1;
  int filled = 0;
  for (char h : hit) filled += h;
  c.require(filled * 2 >= shape_bin_count(bins),
            "filled bins " + std::to_string(filled) + "/" + std::to_string(shape_bin_count(bins)));
  return c.finish();
}

// --- criterion 10: determinism ---------------------------------------------------
bool criterion10() {
  Criterion c("C10 determinism (byte-identical reports)");
  std::string cfg_json = R"({
    "n": 2, "gamma": {"kind": "phi-sl2z"}, "norm": {"kind": "frobenius"},
    "start": {"kind": "degenerate-coords", "theta0": 0, "coords": [1, 0, 0, 1]},
    "T_ladder": [20, 40],
    "stats": [{"kind": "ks_theta"}, {"kind": "shape_bins", "bins": 16},
              {"kind": "test_functions", "count": 4, "seed": 7}, {"kind": "multisection"}],
    "seed": 99, "n_predicted": 20000,
    "quadrature": {"mc_samples": 8000, "grid_m": 32}, "out_dir": "unused"})";
  ExperimentConfig cfg = parse_config(cfg_json);
  namespace fs = std::filesystem;
  fs::remove_all("/tmp/lab_det_a");
  fs::remove_all("/tmp/lab_det_b");
  ComparisonReport r1 = run_experiment(cfg);
  emit(r1, "/tmp/lab_det_a");
  ComparisonReport r2 = run_experiment(cfg);
  emit(r2, "/tmp/lab_det_b");
  for (const char* f : {"report.json", "curves.csv", "histograms.csv"}) {
    bool same = read_file(std::string("/tmp/lab_det_a/") + f) ==
                read_file(std::string("/tmp/lab_det_b/") + f);
    c.require(same, std::string(f) + " bytes identical");
  }
  return c.finish();
}

}  // namespace

int main() {
  std::cout << "acceptance suite\n================\n";
  int failures = 0;
  failures += !criterion1();
  failures += !criterion2();
  failures += !criterion3();
  failures += !criterion4();
  failures += !criterion5();
  failures += !criterion6();
  failures += !criterion7();
  failures += !criterion8();
  failures += !criterion9();
  failures += !criterion10();
  std::cout << "================\n"
            << (failures == 0 ? "ALL CRITERIA PASSED" : std::to_string(failures) + " CRITERIA FAILED")
            << "\n";
  return failures == 0 ? 0 : 1;
}
