#pragma once

#include <optional>
#include <string>

#include "lab/geometry.hpp"

namespace lab {

struct LatticeBasis {
  int ambient_dim = 0;
  int rank = 0;
  Mat basis;                         // (n+1) x r, full column rank
  std::optional<IMat> exact_basis;   // set when entries are integers
};

LatticeBasis make_lattice(const Mat& basis);
LatticeBasis make_lattice(const IMat& basis);

// Canonical representative: unimodular reduction (Lagrange-Gauss for rank <= 2,
// LLL otherwise), unit Euclidean covolume, deterministic column order and signs.
struct HomothetyClass {
  LatticeBasis canon;

  int rank() const { return canon.rank; }
  int ambient_dim() const { return canon.ambient_dim; }
};

HomothetyClass canonical_class(const LatticeBasis& L);
HomothetyClass canonical_class(const Mat& basis);

// Equality in the moduli space. Canonical forms are compared directly; ranks
// >= 3 additionally confirm via the exact change-of-basis test (LLL output is
// not unique there).
bool class_equal(const HomothetyClass& a, const HomothetyClass& b, double tol = kDecompTol);
// max-norm distance of canonical forms (diagnostic)
double class_distance(const HomothetyClass& a, const HomothetyClass& b);

struct SubspacePair {
  Mat p1;  // (n+1) x r orthonormal
  Mat p2;  // (n+1) x (n+1-r) orthonormal
  bool degenerate = false;
};

struct OrthoPair {
  HomothetyClass first;
  HomothetyClass second;
};

// Builds the pair, checking Euclidean orthogonality of the spans; for
// nondegenerate pairs the positive-definite lattice is put first.
OrthoPair make_ortho_pair(const LatticeBasis& a, const LatticeBasis& b);
OrthoPair make_ortho_pair(const HomothetyClass& a, const HomothetyClass& b);

// g . ([L1],[L2]) = ([g L1], [g* L2])
OrthoPair act(const GroupElement& g, const OrthoPair& p);

SubspacePair project_pi(const OrthoPair& p);

// q-degeneracy of a subspace given any spanning matrix.
bool span_degenerate(const Mat& span, double tol = kDecompTol);

// Integer basis of v^perp cap Z^{n+1} (exact).
LatticeBasis ortho_lattice(const IVec& v);

struct ShapePoint {
  double x = 0.0;  // in [0, 1/2]
  double y = 1.0;  // x^2 + y^2 >= 1
};

struct X2Point {
  double x = 0.0;  // in [-1/2, 1/2], boundary convention x >= 0
  double y = 1.0;
};

// Reduce tau = x + iy into the SL(2,Z) fundamental domain.
X2Point reduce_tau(double x, double y);
ShapePoint fold_shape(const X2Point& p);

// Shape of a rank-2 class (scaling and ambient O-transformations quotiented).
ShapePoint shape(const HomothetyClass& c);
// Oriented lattice parameter of a rank-2 class in an explicit orthonormal
// frame of its plane ((n+1) x 2).
X2Point x2_point(const HomothetyClass& c, const Mat& frame);

struct FiberCoordinate {
  HomothetyClass coords;        // lattice written in the subspace frame
  std::optional<X2Point> x2;    // set when rank == 2
};

struct FiberCoordinates {
  FiberCoordinate first;
  FiberCoordinate second;
};

// Coordinates of the pair in the frames p1, p2 of P (defaults to project_pi(p)).
FiberCoordinates fiber_coordinates(const OrthoPair& p, const SubspacePair& P);

// JSON serialization (schemas documented in the README)
std::string to_json_string(const HomothetyClass& c);
std::string to_json_string(const OrthoPair& p);
std::string to_json_string(const ShapePoint& s);

}  // namespace lab
