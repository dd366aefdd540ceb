#include "lab/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace lab {

namespace {

using njson = nlohmann::ordered_json;

constexpr double kPi = 3.14159265358979323846264338327950288;
constexpr double kTwoPi = 2.0 * kPi;

Mat mat_from_flat(const std::vector<double>& flat, int rows, int cols) {
  if (int(flat.size()) != rows * cols) throw std::invalid_argument("matrix size mismatch");
  Mat m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = flat[std::size_t(r * cols + c)];
  return m;
}

GammaSpec parse_gamma(const njson& j) {
  std::string kind = j.value("kind", "phi-sl2z");
  if (kind == "phi-sl2z") return gamma_phi_sl2z();
  if (kind == "conj-int-orth") {
    GammaSpec g = gamma_sargent_shapira();
    if (j.contains("Q")) {
      std::vector<std::int64_t> q = j["Q"].get<std::vector<std::int64_t>>();
      int d = int(std::llround(std::sqrt(double(q.size()))));
      IMat Q(d, d);
      for (int r = 0; r < d; ++r)
        for (int c = 0; c < d; ++c) Q(r, c) = q[std::size_t(r * d + c)];
      g.form = Q;
    }
    if (j.contains("conjugator")) {
      std::vector<double> m = j["conjugator"].get<std::vector<double>>();
      int d = int(std::llround(std::sqrt(double(m.size()))));
      g.conjugator = mat_from_flat(m, d, d);
    }
    return g;
  }
  if (kind == "int-orth") {
    int n = j.value("n", 3);
    return gamma_integer_orthogonal(n);
  }
  throw std::invalid_argument("gamma.kind must be phi-sl2z, int-orth, or conj-int-orth");
}

NormSpec parse_norm(const njson& j, int dim) {
  std::string kind = j.value("kind", "frobenius");
  if (kind == "frobenius") return frobenius_norm();
  if (kind == "max") return max_entry_norm();
  if (kind == "skewed") {
    std::vector<double> m = j.at("g0").get<std::vector<double>>();
    return skewed_frobenius_norm(group_element(mat_from_flat(m, dim, dim)));
  }
  throw std::invalid_argument("norm.kind must be frobenius, max, or skewed");
}

LatticeBasis parse_lattice(const njson& j) {
  int d = j.at("ambient_dim").get<int>();
  int r = j.at("rank").get<int>();
  std::vector<double> flat = j.at("basis").get<std::vector<double>>();
  return make_lattice(mat_from_flat(flat, d, r));
}

OrthoPair parse_start(const njson& j, const GammaSpec& gamma, int n) {
  std::string kind = j.value("kind", "pair");
  if (kind == "pair") {
    return make_ortho_pair(parse_lattice(j.at("first")), parse_lattice(j.at("second")));
  }
  if (kind == "ortho-vector") {
    // v in Z^{n+1}: pair (Lambda_v, Z v), pulled into the SO(n,1) model by the
    // group's conjugator when one is present
    std::vector<std::int64_t> vv = j.at("v").get<std::vector<std::int64_t>>();
    IVec v(int(vv.size()));
    for (int i = 0; i < v.size(); ++i) v(i) = vv[std::size_t(i)];
    LatticeBasis lam = ortho_lattice(v);
    Mat line = v.cast<double>();
    Mat first = lam.basis, second = line;
    if (gamma.kind == GammaKind::ConjugatedIntegerOrthogonal) {
      first = gamma.conjugator.transpose() * first;
      second = gamma.conjugator.transpose() * second;
    }
    return make_ortho_pair(make_lattice(first), make_lattice(second));
  }
  if (kind == "degenerate-coords") {
    // rank-2 lattice in the plane P^inf_theta0, coordinates over (v+, v0)
    double theta0 = j.value("theta0", 0.0);
    std::vector<double> flat = j.at("coords").get<std::vector<double>>();
    Mat2 y;
    y << flat[0], flat[1], flat[2], flat[3];
    Mat k = make_k_theta(theta0).mat;
    Vec vp = k * v_plus(2), v0 = k * Vec::Unit(3, 1);
    Mat basis(3, 2);
    basis.col(0) = y(0, 0) * vp + y(1, 0) * v0;
    basis.col(1) = y(0, 1) * vp + y(1, 1) * v0;
    // the orthogonal line of a degenerate plane: Euclidean normal
    Eigen::Vector3d a = basis.col(0), b = basis.col(1);
    Mat nrm = a.cross(b);
    (void)n;
    return make_ortho_pair(make_lattice(basis), make_lattice(nrm));
  }
  throw std::invalid_argument("start.kind must be pair, ortho-vector, or degenerate-coords");
}

StatSpec parse_stat(const njson& j) {
  StatSpec s;
  std::string kind = j.at("kind").get<std::string>();
  if (kind == "ks_theta") s.kind = StatSpec::Kind::KsTheta;
  else if (kind == "shape_bins") s.kind = StatSpec::Kind::ShapeBins;
  else if (kind == "test_functions") s.kind = StatSpec::Kind::TestFunctions;
  else if (kind == "multisection") s.kind = StatSpec::Kind::MultiSection;
  else throw std::invalid_argument("unknown stat kind: " + kind);
  s.bins = j.value("bins", 36);
  if (s.kind == StatSpec::Kind::ShapeBins && s.bins < 10)
    throw std::invalid_argument("shape_bins: bins >= 10 required");
  s.count = j.value("count", 16);
  s.seed = j.value("seed", std::uint64_t(7));
  return s;
}

}  // namespace

ExperimentConfig parse_config(const std::string& json_text) {
  njson j = njson::parse(json_text);
  ExperimentConfig cfg;
  cfg.n = j.value("n", 2);
  cfg.r = j.value("r", 2);
  cfg.gamma = parse_gamma(j.at("gamma"));
  cfg.norm = parse_norm(j.value("norm", njson{{"kind", "frobenius"}}), cfg.n + 1);
  cfg.start = parse_start(j.at("start"), cfg.gamma, cfg.n);
  cfg.T_ladder = j.at("T_ladder").get<std::vector<double>>();
  for (std::size_t i = 1; i < cfg.T_ladder.size(); ++i)
    if (cfg.T_ladder[i] <= cfg.T_ladder[i - 1])
      throw std::invalid_argument("T_ladder must be strictly increasing");
  if (j.contains("stats"))
    for (const auto& s : j["stats"]) cfg.stats.push_back(parse_stat(s));
  cfg.seed = j.value("seed", std::uint64_t(1));
  cfg.out_dir = j.value("out_dir", std::string("out"));
  cfg.n_predicted = j.value("n_predicted", 200000);
  cfg.use_bfs = j.value("use_bfs", false);
  cfg.bfs_kappa = j.value("bfs_kappa", 4.0);
  if (j.contains("quadrature")) {
    const auto& q = j["quadrature"];
    cfg.quad.mc_samples = q.value("mc_samples", cfg.quad.mc_samples);
    cfg.quad.t_max = q.value("t_max", cfg.quad.t_max);
    cfg.quad.x_max = q.value("x_max", cfg.quad.x_max);
    cfg.quad.grid_m = q.value("grid_m", cfg.quad.grid_m);
    cfg.quad.seed = q.value("seed", cfg.quad.seed);
  }
  if (j.contains("thresholds")) {
    const auto& t = j["thresholds"];
    if (t.contains("ks_max")) cfg.thresholds.ks_max = t["ks_max"].get<double>();
    if (t.contains("discrepancy_max"))
      cfg.thresholds.discrepancy_max = t["discrepancy_max"].get<double>();
    cfg.thresholds.require_discrepancy_decreasing =
        t.value("require_discrepancy_decreasing", false);
    if (t.contains("multisection_max_failures"))
      cfg.thresholds.multisection_max_failures = t["multisection_max_failures"].get<long>();
  }
  cfg.raw_json = njson::parse(json_text).dump(2);
  return cfg;
}

std::string config_echo(const ExperimentConfig& cfg) { return cfg.raw_json; }

std::vector<EmpiricalDistribution> run_orbit(const ExperimentConfig& cfg,
                                             const BallEnumeration& ball) {
  std::vector<EmpiricalDistribution> out;
  // evaluate once per element, then filter per rung
  struct Cached {
    double norm;
    EmpiricalPoint pt;
  };
  std::vector<Cached> cache(ball.elements.size());
  Mat gram = QuadForm(cfg.n + 1).gram();
  parallel_chunks(int(ball.elements.size()), [&](int idx) {
    const BallElement& el = ball.elements[std::size_t(idx)];
    Cached c;
    c.norm = cfg.norm(el.g.mat);
    OrthoPair img = act(el.g, cfg.start);
    const HomothetyClass* rank2 = img.first.rank() == 2 ? &img.first : nullptr;
    if (!rank2 && img.second.rank() == 2) rank2 = &img.second;
    EmpiricalPoint p;
    p.gamma_index = idx;
    if (rank2) {
      p.shape = shape(*rank2);
      if (cfg.n == 2) {
        p.theta = plane_angle_n2(rank2->canon.basis);
        Eigen::HouseholderQR<Mat> qr(rank2->canon.basis);
        Mat onb = qr.householderQ() * Mat::Identity(3, 2);
        p.qdet = std::abs((onb.transpose() * gram * onb).determinant());
        if (p.qdet < kDecompTol) {
          p.x2 = x2_point(*rank2, degenerate_frame_n2(p.theta));
        }
      }
    }
    c.pt = p;
    cache[std::size_t(idx)] = std::move(c);
  });
  for (double T : cfg.T_ladder) {
    EmpiricalDistribution dist;
    dist.T = T;
    for (const Cached& c : cache)
      if (norm_leq(c.norm, T)) dist.points.push_back(c.pt);
    out.push_back(std::move(dist));
  }
  return out;
}

double ks_theta(const EmpiricalDistribution& emp, const DensityProfile& profile) {
  if (emp.points.empty()) throw std::invalid_argument("ks_theta: empty distribution");
  std::vector<double> thetas;
  thetas.reserve(emp.points.size());
  for (const auto& p : emp.points) thetas.push_back(p.theta);
  std::sort(thetas.begin(), thetas.end());
  const double N = double(thetas.size());
  double ks = 0;
  for (std::size_t i = 0; i < thetas.size(); ++i) {
    double F = profile.cdf_theta(thetas[i]);
    ks = std::max(ks, std::abs(F - double(i) / N));
    ks = std::max(ks, std::abs(F - double(i + 1) / N));
  }
  return ks;
}

namespace {

void bin_grid(int requested, int& nx, int& nu) {
  nx = std::max(1, int(std::floor(std::sqrt(double(requested)))));
  nu = (requested + nx - 1) / nx;
}

}  // namespace

int shape_bin_count(int requested) {
  int nx, nu;
  bin_grid(requested, nx, nu);
  return nx * nu;
}

int shape_bin_index(const ShapePoint& s, int requested) {
  int nx, nu;
  bin_grid(requested, nx, nu);
  // strips of equal mass in asin(x); within a strip, v = sqrt(1-x^2)/y is the
  // relative height and cells of equal v-width carry equal hyperbolic area
  double x = std::min(std::max(s.x, 0.0), 0.5);
  double ix = std::asin(x) / (kPi / 6.0);
  int sx = std::min(int(ix * nx), nx - 1);
  double v = std::sqrt(std::max(1.0 - x * x, 0.0)) / std::max(s.y, 1e-300);
  v = std::min(std::max(v, 0.0), 1.0);
  int su = std::min(int(v * nu), nu - 1);
  return sx * nu + su;
}

double shape_discrepancy(const std::vector<ShapePoint>& empirical,
                         const std::vector<ShapePoint>& predicted, int bins) {
  const int B = shape_bin_count(bins);
  std::vector<double> pe(std::size_t(B), 0.0), pp(std::size_t(B), 0.0);
  for (const auto& s : empirical) pe[std::size_t(shape_bin_index(s, bins))] += 1.0;
  for (const auto& s : predicted) pp[std::size_t(shape_bin_index(s, bins))] += 1.0;
  for (auto& v : pe) v /= std::max<double>(1.0, double(empirical.size()));
  for (auto& v : pp) v /= std::max<double>(1.0, double(predicted.size()));
  double tv = 0;
  for (int b = 0; b < B; ++b) tv += std::abs(pe[std::size_t(b)] - pp[std::size_t(b)]);
  return 0.5 * tv;
}

double test_function_gap(const std::vector<EmpiricalPoint>& emp,
                         const std::vector<PredictedSample>& pred,
                         const std::function<double(double, const ShapePoint&)>& f) {
  if (emp.empty() || pred.empty()) throw std::invalid_argument("test_function_gap: empty input");
  double se = 0;
  for (const auto& p : emp) se += f(p.theta, p.shape);
  se /= double(emp.size());
  double sp = 0;
  for (const auto& p : pred) sp += f(p.theta, p.shape_pt ? *p.shape_pt : ShapePoint{});
  sp /= double(pred.size());
  return std::abs(se - sp);
}

namespace {

double circle_dist(double a, double b) {
  double d = std::fmod(std::abs(a - b), kTwoPi);
  return std::min(d, kTwoPi - d);
}

double hyp_dist(const ShapePoint& a, const ShapePoint& b) {
  double num = (a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y);
  return std::acosh(1.0 + num / (2.0 * a.y * b.y));
}

double bump(double z) {
  if (z >= 1.0) return 0.0;
  double c = std::cos(0.5 * kPi * z);
  return c * c;
}

}  // namespace

std::vector<double> test_function_gaps(const std::vector<EmpiricalPoint>& emp,
                                       const std::vector<PredictedSample>& pred, int count,
                                       std::uint64_t seed) {
  std::vector<double> gaps;
  Rng rng(seed);
  for (int q = 0; q < count; ++q) {
    double tc = rng.uniform(0.0, kTwoPi);
    double tw = rng.uniform(0.5, 1.6);
    X2Point c = sample_x2(rng);
    while (c.y > 3.0) c = sample_x2(rng);  // keep centers in the bulk
    ShapePoint sc = fold_shape(c);
    double sw = rng.uniform(0.6, 1.6);
    auto f = [=](double theta, const ShapePoint& s) {
      return bump(circle_dist(theta, tc) / tw) * bump(hyp_dist(s, sc) / sw);
    };
    gaps.push_back(test_function_gap(emp, pred, f));
  }
  return gaps;
}

Verdicts evaluate_verdicts(const std::vector<ComparisonRow>& rows, const Thresholds& th) {
  Verdicts v;
  if (rows.empty()) return v;
  const ComparisonRow& top = rows.back();
  if (th.ks_max && !(top.ks <= *th.ks_max)) v.ks_pass = false;
  if (th.discrepancy_max && !(top.shape_disc <= *th.discrepancy_max)) v.discrepancy_pass = false;
  if (th.require_discrepancy_decreasing) {
    for (std::size_t i = 1; i < rows.size(); ++i)
      if (!(rows[i].shape_disc < rows[i - 1].shape_disc)) v.discrepancy_decreasing = false;
  }
  if (th.multisection_max_failures) {
    for (const auto& r : rows)
      if (r.multisection_failures > *th.multisection_max_failures) v.multisection_pass = false;
  }
  v.all_pass = v.ks_pass && v.discrepancy_pass && v.discrepancy_decreasing && v.multisection_pass;
  return v;
}

ComparisonReport run_experiment(const ExperimentConfig& cfg) {
  ComparisonReport report;
  report.config_json = cfg.raw_json;

  const double T_max = cfg.T_ladder.back();
  BallEnumeration ball = cfg.use_bfs
                             ? enumerate_ball_bfs(cfg.gamma, cfg.norm, T_max, cfg.bfs_kappa)
                             : enumerate_ball_direct(cfg.gamma, cfg.norm, T_max);

  PredictedLaw law = classify_start(cfg.start, cfg.gamma, cfg.norm, cfg.quad);
  switch (law.kind) {
    case PredictedLaw::Case::NonDegenerate: report.law_case = "nondegenerate"; break;
    case PredictedLaw::Case::DegenerateHigh: report.law_case = "degenerate-high"; break;
    case PredictedLaw::Case::DegenerateGeneric2D: report.law_case = "degenerate-generic-2d"; break;
    case PredictedLaw::Case::SpecialExtension: report.law_case = "special-extension"; break;
  }
  report.packet_m = law.m;

  std::vector<PredictedSample> pred = sample_predicted(law, cfg.n_predicted, cfg.seed ^ 0xf00dULL);
  std::vector<ShapePoint> pred_shapes;
  for (const auto& p : pred)
    if (p.shape_pt) pred_shapes.push_back(*p.shape_pt);

  std::vector<EmpiricalDistribution> dists = run_orbit(cfg, ball);

  int hist_bins = 0;
  for (const auto& s : cfg.stats)
    if (s.kind == StatSpec::Kind::ShapeBins) hist_bins = s.bins;

  for (const auto& dist : dists) {
    ComparisonRow row;
    row.T = dist.T;
    row.count = dist.points.size();
    double deg = 0;
    for (const auto& p : dist.points)
      if (p.qdet < 0.1) deg += 1.0;
    row.degenerate_fraction = dist.points.empty() ? 0.0 : deg / double(dist.points.size());

    for (const auto& stat : cfg.stats) {
      switch (stat.kind) {
        case StatSpec::Kind::KsTheta:
          if (!dist.points.empty() && cfg.n == 2) row.ks = ks_theta(dist, law.profile);
          break;
        case StatSpec::Kind::ShapeBins: {
          std::vector<ShapePoint> es;
          for (const auto& p : dist.points) es.push_back(p.shape);
          if (!es.empty()) row.shape_disc = shape_discrepancy(es, pred_shapes, stat.bins);
          break;
        }
        case StatSpec::Kind::TestFunctions:
          if (!dist.points.empty())
            row.gaps = test_function_gaps(dist.points, pred, stat.count, stat.seed);
          break;
        case StatSpec::Kind::MultiSection: {
          if (law.kind == PredictedLaw::Case::SpecialExtension) {
            long fails = 0;
            for (const auto& p : dist.points) {
              const BallElement& el = ball.elements[std::size_t(p.gamma_index)];
              if (!multi_section_check(el.g, law.packet_coords, law.theta0).ok) ++fails;
            }
            row.multisection_failures = fails;
          }
          break;
        }
      }
    }
    report.rows.push_back(std::move(row));
  }

  if (hist_bins > 0) {
    report.hist_bins = hist_bins;
    const int B = shape_bin_count(hist_bins);
    std::vector<double> hp(std::size_t(B), 0.0);
    for (const auto& s : pred_shapes) hp[std::size_t(shape_bin_index(s, hist_bins))] += 1.0;
    for (auto& v : hp) v /= std::max<double>(1.0, double(pred_shapes.size()));
    for (const auto& dist : dists) {
      std::vector<double> he(std::size_t(B), 0.0);
      for (const auto& p : dist.points) he[std::size_t(shape_bin_index(p.shape, hist_bins))] += 1.0;
      for (auto& v : he) v /= std::max<double>(1.0, double(dist.points.size()));
      report.hist_pred.push_back(hp);
      report.hist_emp.push_back(he);
    }
  }

  report.verdicts = evaluate_verdicts(report.rows, cfg.thresholds);
  return report;
}

namespace {

njson report_to_json(const ComparisonReport& report) {
  njson j;
  j["config"] = njson::parse(report.config_json.empty() ? "{}" : report.config_json);
  j["law_case"] = report.law_case;
  j["packet_m"] = report.packet_m;
  njson rows = njson::array();
  for (const auto& r : report.rows) {
    njson row;
    row["T"] = r.T;
    row["count"] = r.count;
    if (!std::isnan(r.ks)) row["ks_theta"] = r.ks;
    if (!std::isnan(r.shape_disc)) row["shape_discrepancy"] = r.shape_disc;
    if (!r.gaps.empty()) row["test_function_gaps"] = r.gaps;
    if (r.multisection_failures >= 0) row["multisection_failures"] = r.multisection_failures;
    row["degenerate_fraction"] = r.degenerate_fraction;
    rows.push_back(row);
  }
  j["rows"] = rows;
  njson v;
  v["ks_pass"] = report.verdicts.ks_pass;
  v["discrepancy_pass"] = report.verdicts.discrepancy_pass;
  v["discrepancy_decreasing"] = report.verdicts.discrepancy_decreasing;
  v["multisection_pass"] = report.verdicts.multisection_pass;
  v["all_pass"] = report.verdicts.all_pass;
  j["verdicts"] = v;
  return j;
}

}  // namespace

void emit(const ComparisonReport& report, const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw std::runtime_error("emit: cannot create " + out_dir + ": " + ec.message());

  {
    std::ofstream f(out_dir + "/report.json", std::ios::binary);
    if (!f) throw std::runtime_error("emit: cannot write " + out_dir + "/report.json");
    f << report_to_json(report).dump(2) << "\n";
  }
  {
    std::ofstream f(out_dir + "/curves.csv", std::ios::binary);
    if (!f) throw std::runtime_error("emit: cannot write " + out_dir + "/curves.csv");
    f << "T,count,ks_theta,shape_discrepancy,gap_mean,multisection_failures,degenerate_fraction\n";
    for (const auto& r : report.rows) {
      double gm = std::nan("");
      if (!r.gaps.empty()) {
        gm = 0;
        for (double g : r.gaps) gm += g;
        gm /= double(r.gaps.size());
      }
      f << r.T << "," << r.count << "," << r.ks << "," << r.shape_disc << "," << gm << ","
        << r.multisection_failures << "," << r.degenerate_fraction << "\n";
    }
  }
  {
    std::ofstream f(out_dir + "/histograms.csv", std::ios::binary);
    if (!f) throw std::runtime_error("emit: cannot write " + out_dir + "/histograms.csv");
    f << "T,bin,predicted,empirical\n";
    for (std::size_t r = 0; r < report.hist_pred.size(); ++r) {
      for (std::size_t b = 0; b < report.hist_pred[r].size(); ++b) {
        f << report.rows[r].T << "," << b << "," << report.hist_pred[r][b] << ","
          << report.hist_emp[r][b] << "\n";
      }
    }
  }
}

ComparisonReport read_report(const std::string& report_json_path) {
  std::ifstream f(report_json_path);
  if (!f) throw std::runtime_error("read_report: cannot open " + report_json_path);
  std::stringstream ss;
  ss << f.rdbuf();
  njson j = njson::parse(ss.str());
  ComparisonReport rep;
  rep.config_json = j.at("config").dump(2);
  rep.law_case = j.value("law_case", "");
  rep.packet_m = j.value("packet_m", 0);
  for (const auto& row : j.at("rows")) {
    ComparisonRow r;
    r.T = row.at("T").get<double>();
    r.count = row.at("count").get<std::size_t>();
    if (row.contains("ks_theta")) r.ks = row["ks_theta"].get<double>();
    if (row.contains("shape_discrepancy")) r.shape_disc = row["shape_discrepancy"].get<double>();
    if (row.contains("test_function_gaps"))
      r.gaps = row["test_function_gaps"].get<std::vector<double>>();
    if (row.contains("multisection_failures"))
      r.multisection_failures = row["multisection_failures"].get<long>();
    r.degenerate_fraction = row.value("degenerate_fraction", 0.0);
    rep.rows.push_back(std::move(r));
  }
  const auto& v = j.at("verdicts");
  rep.verdicts.ks_pass = v.value("ks_pass", true);
  rep.verdicts.discrepancy_pass = v.value("discrepancy_pass", true);
  rep.verdicts.discrepancy_decreasing = v.value("discrepancy_decreasing", true);
  rep.verdicts.multisection_pass = v.value("multisection_pass", true);
  rep.verdicts.all_pass = v.value("all_pass", true);
  return rep;
}

}  // namespace lab
