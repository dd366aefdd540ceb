#pragma once

#include <optional>
#include <vector>

#include "lab/moduli.hpp"
#include "lab/quadrature.hpp"

namespace lab {

// Witt-style constructive translates: g0 in SO(n,1)^0 carrying the model
// subspace onto P0.
GroupElement witt_translate_posdef(const Mat& p0_basis);     // P0 = g0 span{e_1..e_r}
GroupElement witt_translate_degenerate(const Mat& p0_basis); // P0 = g0 span{v+, e_2..e_r}

// Absolute angle of a plane in R^3 (n = 2): computed from the Euclidean
// normal; for a degenerate plane this is the theta with P = k_theta P0^inf.
double plane_angle_n2(const Mat& span_basis);

struct PredictedLaw {
  enum class Case { NonDegenerate, DegenerateHigh, DegenerateGeneric2D, SpecialExtension };
  Case kind = Case::NonDegenerate;
  int n = 2, r = 2;
  DensityProfile profile;           // density on K/K_{P^inf} (n=2: absolute angle)
  GroupElement g0;                  // translator used for the density
  double theta0 = 0.0;              // n = 2 degenerate cases
  std::vector<HomothetyClass> packet;  // SpecialExtension: ambient classes
  std::vector<Mat2> packet_coords;     // coordinates in the frame of P^inf_theta0
  int m = 0;
  bool star_dual = false;  // n = 2, r = 1 handled through the dual component
};

struct SpecialVerdict {
  bool special = false;
  std::vector<HomothetyClass> packet;
  std::vector<Mat2> packet_coords;
  int m = 0;
  int orbit_bound = 0;  // N_max used for a NotSpecialUpTo verdict
};

// Pull back the generators of Gamma through Phi at angle theta0 (one of the
// two lifts each; -I acts trivially on homothety classes).
std::vector<Mat2> pullback_generators(const GammaSpec& gamma, double theta0);

// Orbit-closure specialness test for a degenerate 2-lattice in P^inf_theta0.
SpecialVerdict detect_special(const HomothetyClass& lambda, double theta0,
                              const GammaSpec& gamma, int n_max = 1000);

// Routes a starting pair to its predicted limit law.
PredictedLaw classify_start(const OrthoPair& start, const GammaSpec& gamma, const NormSpec& norm,
                            const QuadratureSpec& spec, int n_max = 1000);

// The m classes k_theta [rho^inf_theta0(kappa_{-theta/2}) Lambda_i].
std::vector<HomothetyClass> m_extension_curve(const std::vector<Mat2>& packet_coords,
                                              double theta0, double theta);

struct MultiSectionWitness {
  bool ok = false;
  double theta = 0;     // offset angle, gamma P^inf_theta0 = P^inf_{theta+theta0}
  int index = -1;       // packet member matched
  double mismatch = 0;  // canonical-form distance of the best candidate
};

MultiSectionWitness multi_section_check(const GroupElement& gamma_el,
                                        const std::vector<Mat2>& packet_coords, double theta0,
                                        double tol = 1e-8);

// One draw of the predicted law; theta is the absolute plane angle (n = 2).
struct PredictedSample {
  double theta = 0;
  std::optional<X2Point> fiber;
  std::optional<ShapePoint> shape_pt;
  std::optional<int> packet_index;
  int k_index = -1;  // n >= 3: profile atom
};

std::vector<PredictedSample> sample_predicted(const PredictedLaw& law, int N, std::uint64_t seed);

// Invariant-probability sample of the SL(2,Z)\H marginal of X_2 (hyperbolic
// area on the fundamental domain; exact two-piece sampler with the cusp piece
// handled by inverse CDF).
X2Point sample_x2(Rng& rng);

// Orthonormal frame (k_theta v+/sqrt(2), k_theta e2) of the degenerate plane
// at absolute angle theta (n = 2).
Mat degenerate_frame_n2(double theta);

}  // namespace lab
