#pragma once

#include <optional>
#include <string>
#include <vector>

#include "lab/limitlaw.hpp"

namespace lab {

struct StatSpec {
  enum class Kind { KsTheta, ShapeBins, TestFunctions, MultiSection };
  Kind kind = Kind::KsTheta;
  int bins = 36;             // ShapeBins
  int count = 16;            // TestFunctions
  std::uint64_t seed = 7;    // TestFunctions
};

struct Thresholds {
  std::optional<double> ks_max;
  std::optional<double> discrepancy_max;
  bool require_discrepancy_decreasing = false;
  std::optional<long> multisection_max_failures;
};

struct ExperimentConfig {
  int n = 2, r = 2;
  GammaSpec gamma;
  NormSpec norm;
  OrthoPair start;
  std::vector<double> T_ladder;
  std::vector<StatSpec> stats;
  std::uint64_t seed = 1;
  std::string out_dir = "out";
  QuadratureSpec quad;
  int n_predicted = 200000;
  bool use_bfs = false;   // enumerate via generator closure instead of direct search
  double bfs_kappa = 4.0;
  Thresholds thresholds;
  std::string raw_json;   // canonical echo of the parsed configuration
};

ExperimentConfig parse_config(const std::string& json_text);
std::string config_echo(const ExperimentConfig& cfg);

struct EmpiricalPoint {
  double theta = 0;            // absolute plane angle (n = 2)
  ShapePoint shape;            // fiber shape of the rank-2 lattice
  std::optional<X2Point> x2;   // oriented fiber coordinate (degenerate orbits)
  double qdet = 0;             // |det q-Gram| of the orthonormalized plane
  int gamma_index = -1;
};

struct EmpiricalDistribution {
  double T = 0;
  std::vector<EmpiricalPoint> points;
};

// Enumerates Gamma_{T_max} once and applies every element to the start pair;
// rungs are norm filters of the same element list.
std::vector<EmpiricalDistribution> run_orbit(const ExperimentConfig& cfg,
                                             const BallEnumeration& ball);

// One-sample Kolmogorov-Smirnov distance of the empirical thetas against the
// profile CDF (n = 2).
double ks_theta(const EmpiricalDistribution& emp, const DensityProfile& profile);

// Equal-hyperbolic-area binning of the shape fundamental domain.
int shape_bin_count(int requested);  // nx*nu actually used
int shape_bin_index(const ShapePoint& s, int requested);

double shape_discrepancy(const std::vector<ShapePoint>& empirical,
                         const std::vector<ShapePoint>& predicted, int bins);

// |empirical mean - predicted mean| for one bounded test function.
double test_function_gap(const std::vector<EmpiricalPoint>& emp,
                         const std::vector<PredictedSample>& pred,
                         const std::function<double(double, const ShapePoint&)>& f);

// Seeded bump family on (theta, shape).
std::vector<double> test_function_gaps(const std::vector<EmpiricalPoint>& emp,
                                       const std::vector<PredictedSample>& pred, int count,
                                       std::uint64_t seed);

struct ComparisonRow {
  double T = 0;
  std::size_t count = 0;
  double ks = std::nan("");
  double shape_disc = std::nan("");
  std::vector<double> gaps;
  long multisection_failures = -1;
  double degenerate_fraction = 0;
};

struct Verdicts {
  bool ks_pass = true;
  bool discrepancy_pass = true;
  bool discrepancy_decreasing = true;
  bool multisection_pass = true;
  bool all_pass = true;
};

struct ComparisonReport {
  std::string config_json;
  std::vector<ComparisonRow> rows;
  Verdicts verdicts;
  std::string law_case;
  int packet_m = 0;
  int hist_bins = 0;
  std::vector<std::vector<double>> hist_pred;  // per rung, per bin mass
  std::vector<std::vector<double>> hist_emp;
};

ComparisonReport run_experiment(const ExperimentConfig& cfg);

// Writes report.json, curves.csv, histograms.csv under out_dir.
void emit(const ComparisonReport& report, const std::string& out_dir);

// Re-evaluates the verdicts from a written report.json (pure recomputation).
ComparisonReport read_report(const std::string& report_json_path);

// Verdict evaluation from rows + thresholds alone.
Verdicts evaluate_verdicts(const std::vector<ComparisonRow>& rows, const Thresholds& th);

}  // namespace lab
