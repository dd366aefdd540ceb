#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <utility>

namespace lab {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using IMat = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;
using IVec = Eigen::Matrix<std::int64_t, Eigen::Dynamic, 1>;

constexpr double kFormTol = 1e-10;     // constructor invariants
constexpr double kDecompTol = 1e-9;    // decomposition round-trips
constexpr double kGroupLawTol = 1e-12; // one-parameter group laws

// The quadratic form x_1^2 + ... + x_n^2 - x_{n+1}^2 on R^{n+1}.
struct QuadForm {
  int dim;  // n+1

  explicit QuadForm(int ambient_dim);
  static QuadForm lorentz_n(int n) { return QuadForm(n + 1); }

  int n() const { return dim - 1; }
  Mat gram() const;               // diag(1,...,1,-1)
  double q(const Vec& x) const;   // x^T gram x
  double b(const Vec& x, const Vec& y) const;
};

// An element of SO(n,1)^0, certified at construction: preserves the form,
// det = 1, bottom-right entry >= 1 (orthochronous).
struct GroupElement {
  Mat mat;
  std::optional<IMat> exact;  // set when all entries are integers

  int dim() const { return int(mat.rows()); }
  int n() const { return dim() - 1; }
};

GroupElement group_element(const Mat& m);
GroupElement group_element(const Mat& m, IMat exact);
bool is_group_element(const Mat& m, double tol = kFormTol);

GroupElement identity_element(int n);
GroupElement multiply(const GroupElement& a, const GroupElement& b);
GroupElement inverse(const GroupElement& g);

// g* = (g^T)^{-1}; for g in O(n,1), g* = gram g gram.
GroupElement star(const GroupElement& g);
Mat star(const Mat& m);

// a(s): cosh/sinh in the (1, n+1) corners, identity in the middle block.
GroupElement make_a(int n, double s);
// u(x), x in R^{n-1}: the expanding horospherical unipotent.
GroupElement make_u(int n, const Vec& x);
// K embedding diag(R, 1) for R in SO(n).
GroupElement embed_K(const Mat& R);
// Planar rotation k_theta (n = 2).
GroupElement make_k_theta(double theta);
// General k_theta-type rotation of the (1,2)-plane inside SO(n,1)^0.
GroupElement make_k_theta(int n, double theta);

// v+ = e_1 + e_{n+1}, v- = e_1 - e_{n+1}.
Vec v_plus(int n);
Vec v_minus(int n);

// Rank-one boundary matrices a(+-infinity); a(s) = e^s a(inf) + e^{-s} a(-inf) + P_mid.
struct BoundaryMatrix {
  Mat mat;
  int sign;  // +1 or -1
};
BoundaryMatrix make_a_infty(int n, int sign);
Mat middle_projector(int n);  // diag(0, I_{n-1}, 0)

// Cartan decomposition g = k1 a(t) k2, t >= 0.
struct CartanFactors {
  GroupElement k1;
  double t;
  GroupElement k2;
};
CartanFactors cartan_decompose(const GroupElement& g);

// ---- SL(2,R) and the isogeny Phi : SL(2,R) -> SO(2,1)^0 ----

using Mat2 = Eigen::Matrix2d;

Mat2 sl2_delta(double s);    // diag(e^{s/2}, e^{-s/2})
Mat2 sl2_upsilon(double t);  // [[1, t], [0, 1]]
Mat2 sl2_kappa(double v);    // rotation by v; Phi(kappa_{theta/2}) = k_theta

// Matrix of Ad(g) on sl(2,R) in the ordered basis (E+F, -H, E-F); in these
// coordinates -det is x1^2 + x2^2 - x3^2, so the image lies in SO(2,1)^0 and
// the characterizing identities Phi(delta(s)) = a(s), Phi(upsilon(t)) = u(t)
// hold exactly.
GroupElement isogeny_phi(const Mat2& g);
Mat isogeny_phi_mat(const Mat2& g);

// Doubled image 2*Phi(g) for integer g; entries of Phi(SL(2,Z)) are half-integers.
Eigen::Matrix<std::int64_t, 3, 3> isogeny_phi_twice(const Eigen::Matrix<std::int64_t, 2, 2>& g);

// One of the two SL(2,R) preimages of h in SO(2,1)^0 (the kernel is {+-I}).
Mat2 isogeny_phi_inverse(const Mat& h);

// ---- subgroup descriptors ----

enum class SubgroupKind { K, KPinfty, A, U, Hij };

struct SubgroupSpec {
  SubgroupKind kind;
  int i = -1, j = -1;  // for Hij: i + j = n - 1

  static SubgroupSpec H(int i, int j);
  static SubgroupSpec U_group() { return SubgroupSpec{SubgroupKind::U}; }
};

// k * P1_inf == P1_inf and k * P2_inf == P2_inf (rank test at kDecompTol).
bool in_K_Pinfty(const GroupElement& k, int r);

// Orthonormal spanning matrices of P1^inf, P2^inf for rank r.
Mat p1_infty_basis(int n, int r);
Mat p2_infty_basis(int n, int r);

// ---- section-4 matrices ----

// g1(s), g2(s): the asymptotic models of a(s), a(s)^* on the nondegenerate pair.
std::pair<Mat, Mat> make_g1_g2(int n, double s);
// their inverses in closed form (the generic matrix inverse loses the
// e^{-2s} contraction scale beyond s ~ 9 in doubles)
std::pair<Mat, Mat> make_g1_g2_inv(int n, double s);
// R1, R2 in SL(n+1,R); R1 e1 = v+/2, R2 e_{n+1} = -v-/2, remaining columns
// fixed deterministically (R1 e_{n+1} = -v-, R2 e1 = v+), which makes both
// determinants exactly 1.
std::pair<Mat, Mat> make_R1_R2(int n);
// d1(s) in SL(i+1,R), d2(s) in SL(j+1,R).
std::pair<Mat, Mat> make_d1_d2(int i, int j, double s);
// delta(s), upsilon(a,b) for the U-case coordinates; x splits as (a, b) in R^i x R^j.
std::pair<Mat, Mat> make_delta_pair(int i, int j, double s);
std::pair<Mat, Mat> make_upsilon_pair(int i, int j, const Vec& x);

// Ambient maps acting as y1/y2 on P1/P2 through the stated ordered bases and
// fixing the written complement.
std::pair<Mat, Mat> rep_rho0(int n, int i, int j, const Mat& y1, const Mat& y2);
std::pair<Mat, Mat> rep_rho_infty(int n, int i, int j, const Mat& y1, const Mat& y2);
// n = 2: ambient matrix of rho^inf_theta(g) = k_theta rho^inf(g) k_theta^{-1}.
Mat rep_rho_infty_theta(double theta, const Mat2& g);
// n = 2 ambient matrix of rho^inf(g) on the plane span{v+, e2} (basis (v+, v0)),
// fixing v-.
Mat rep_rho_infty_2d(const Mat2& g);

}  // namespace lab
