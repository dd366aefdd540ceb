#pragma once

#include <string>
#include <vector>

#include "lab/geometry.hpp"

namespace lab {

enum class NormKind { Frobenius, MaxEntry, SkewedFrobenius };

// Ball membership |g| <= T with a relative slack so that exact boundary
// elements (e.g. the identity at T = |I|) are included regardless of
// floating-point rounding of T itself. Every enumerator and rung filter uses
// this one predicate.
inline bool norm_leq(double value, double T) { return value <= T * (1.0 + 1e-12); }

// Matrix norm used for the balls Gamma_T; SkewedFrobenius(g0) is |g g0^{-1}|_F.
struct NormSpec {
  NormKind kind = NormKind::Frobenius;
  Mat g0;      // SkewedFrobenius only
  Mat g0_inv;  // cached

  double operator()(const Mat& m) const;
  bool star_invariant() const { return kind != NormKind::SkewedFrobenius; }
};

NormSpec frobenius_norm();
NormSpec max_entry_norm();
NormSpec skewed_frobenius_norm(const GroupElement& g0);

enum class GammaKind { PhiSL2Z, IntegerOrthogonal, ConjugatedIntegerOrthogonal };

// How the exact integer representatives map into SO(n,1)^0.
enum class RepKind { SL2, Ambient, AmbientConjugated };

struct GammaSpec {
  GammaKind kind = GammaKind::PhiSL2Z;
  int n = 2;
  IMat form;        // integer Gram matrix Q (orthogonal kinds)
  Mat conjugator;   // M with M^{-1} SO(Q)^0 M = SO(n,1)^0 (conjugated kind)
  std::vector<IMat> generators;  // exact reps (SL2 2x2 for PhiSL2Z, ambient otherwise)

  RepKind rep() const;
};

GammaSpec gamma_phi_sl2z();
GammaSpec gamma_integer_orthogonal(int n);  // Q = diag(1,...,1,-1)
// The Sargent-Shapira group: Q(x,y,z) = 2xz - y^2 with a fixed orthogonal
// conjugator into SO(2,1)^0.
GammaSpec gamma_sargent_shapira();

// Embed an exact representative into SO(n,1)^0.
GroupElement embed_gamma(const GammaSpec& spec, const IMat& exact);

struct BallElement {
  GroupElement g;  // element of SO(n,1)^0
  IMat exact;      // exact integer representative (see GammaSpec::rep)
};

struct BallEnumeration {
  double T = 0;
  RepKind rep = RepKind::Ambient;
  std::vector<BallElement> elements;  // deduplicated, ordered lexicographically
  bool complete = true;               // false when a cap was hit

  std::size_t count() const { return elements.size(); }
};

// Exact search over the whole norm ball (entry bounds derived per group kind).
BallEnumeration enumerate_ball_direct(const GammaSpec& spec, const NormSpec& norm, double T);

// Generator closure exploring words of norm <= kappa*T, returning norm <= T.
// Completeness is heuristic; kappa is the safety margin.
BallEnumeration enumerate_ball_bfs(const GammaSpec& spec, const NormSpec& norm, double T,
                                   double kappa, std::size_t element_cap = 2'000'000);

// All (x,y,z) in Z^3 with 2xz - y^2 = 1 and Euclidean norm <= T.
std::vector<Eigen::Vector3i> enumerate_HZ(double T);

struct GrowthRow {
  double T = 0;
  std::size_t count = 0;
  double count_over_Tpow = 0;  // #Gamma_T / T^{n-1}
  double count_over_vol = 0;   // #Gamma_T / Vol(G_T)
};

struct GrowthReport {
  std::vector<GrowthRow> rows;
  double top_variation = 0;  // max/min - 1 over the last column, top three rungs
  double exponent_fit = 0;   // least-squares slope of log count vs log T
};

GrowthReport growth_report(const std::vector<double>& T_ladder,
                           const std::vector<std::size_t>& counts,
                           const std::vector<double>& volumes, int n);

}  // namespace lab
