#include "lab/limitlaw.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>

namespace lab {

namespace {

constexpr double kPi = 3.14159265358979323846264338327950288;
constexpr double kTwoPi = 2.0 * kPi;

double wrap_angle(double t) {
  t = std::fmod(t, kTwoPi);
  if (t < 0) t += kTwoPi;
  if (t >= kTwoPi) t = 0.0;  // guard against 2pi + (-eps) rounding up
  return t;
}

// q-orthonormal basis of a positive-definite subspace (Gram-Schmidt in q,
// which coincides with the Euclidean one on spatial directions).
Mat q_orthonormalize_posdef(const Mat& span, const QuadForm& form) {
  Mat out = span;
  for (int c = 0; c < out.cols(); ++c) {
    for (int p = 0; p < c; ++p)
      out.col(c) -= form.b(out.col(p), out.col(c)) * out.col(p);
    double q = form.q(out.col(c));
    if (q <= 1e-12) throw std::invalid_argument("q_orthonormalize: subspace not positive definite");
    out.col(c) /= std::sqrt(q);
  }
  return out;
}

}  // namespace

GroupElement witt_translate_posdef(const Mat& p0_basis) {
  const int d = int(p0_basis.rows());
  const int n = d - 1;
  const int r = int(p0_basis.cols());
  QuadForm form(d);
  Mat cols(d, d);
  cols.leftCols(r) = q_orthonormalize_posdef(p0_basis, form);

  // q-orthogonal complement W = ker((gram P)^T), signature (n-r, 1)
  Mat gram = form.gram();
  Eigen::FullPivLU<Mat> lu((gram * cols.leftCols(r)).transpose());
  Mat W = lu.kernel();  // d x (d - r)

  // negative direction inside W
  Mat qg = W.transpose() * gram * W;
  Eigen::SelfAdjointEigenSolver<Mat> es(qg);
  Vec neg = W * es.eigenvectors().col(0);
  if (es.eigenvalues()(0) >= 0) throw std::logic_error("witt_translate: no negative direction");
  neg /= std::sqrt(-form.q(neg));
  if (neg(d - 1) < 0) neg = -neg;  // orthochronous certificate
  cols.col(d - 1) = neg;

  // positive part of W: project out the negative direction (q-orthogonally)
  if (d - r - 1 > 0) {
    Mat Wp(d, d - r - 1);
    int out_c = 0;
    for (int c = 0; c < W.cols(); ++c) {
      Vec v = W.col(c);
      v += form.b(v, neg) * neg;  // B(neg,neg) = -1
      bool indep = true;
      Mat test(d, out_c + 1);
      for (int p = 0; p < out_c; ++p) test.col(p) = Wp.col(p);
      test.col(out_c) = v;
      Eigen::JacobiSVD<Mat> svd(test);
      if (svd.singularValues()(out_c) < 1e-9 * svd.singularValues()(0)) indep = false;
      if (!indep) continue;
      Wp.col(out_c++) = v;
      if (out_c == d - r - 1) break;
    }
    cols.middleCols(r, d - r - 1) = q_orthonormalize_posdef(Wp.leftCols(out_c), form);
  }
  if (cols.determinant() < 0) {
    if (r < n)
      cols.col(r) *= -1.0;  // a middle spatial column; span unchanged
    else
      cols.col(r - 1) *= -1.0;  // flips a P0 column; span unchanged
  }
  return group_element(cols);
}

GroupElement witt_translate_degenerate(const Mat& p0_basis) {
  const int d = int(p0_basis.rows());
  const int n = d - 1;
  const int r = int(p0_basis.cols());
  QuadForm form(d);
  if (!span_degenerate(p0_basis))
    throw std::invalid_argument("witt_translate_degenerate: subspace is not degenerate");

  // radical direction: kernel of the q-Gram on an orthonormal basis
  Eigen::HouseholderQR<Mat> qr(p0_basis);
  Mat onb = qr.householderQ() * Mat::Identity(d, r);
  Mat qg = onb.transpose() * form.gram() * onb;
  Eigen::SelfAdjointEigenSolver<Mat> es(qg);
  int null_idx = 0;
  for (int c = 1; c < r; ++c)
    if (std::abs(es.eigenvalues()(c)) < std::abs(es.eigenvalues()(null_idx))) null_idx = c;
  Vec w = onb * es.eigenvectors().col(null_idx);
  if (std::abs(w(d - 1)) < 1e-9)
    throw std::invalid_argument("witt_translate_degenerate: radical has no time component");
  w /= w(d - 1);  // w = (spatial unit, 1) on the cone
  Vec ws = w.head(n);
  ws /= ws.norm();

  // k1 in K rotates e1 to the spatial part of the radical
  Mat R1 = Mat::Identity(n, n);
  {
    Vec e1 = Vec::Unit(n, 0);
    Vec diff = ws - e1;
    if (diff.norm() > 1e-14) {
      Vec h = diff / diff.norm();
      R1 -= 2.0 * h * h.transpose();
      R1.col(n - 1) *= -1.0;  // det fix
    }
  }
  if (R1.determinant() < 0) R1.col(n - 1) *= -1.0;
  GroupElement k1 = embed_K(R1);

  // in k1^{-1} P0, every vector has equal first and last coordinates; the
  // middle parts span an (r-1)-dimensional spatial piece
  Mat pulled = k1.mat.transpose() * p0_basis;
  Mat mids(n - 1, r);
  int cnt = 0;
  for (int c = 0; c < r; ++c) {
    Vec v = pulled.col(c);
    Vec mid = v.segment(1, n - 1);
    if (mid.norm() < 1e-10) continue;
    mids.col(cnt++) = mid;
  }
  Mat R2 = Mat::Identity(n, n);
  if (r >= 2) {
    // orthonormalize the middle span and rotate e2..e_r onto it
    Eigen::ColPivHouseholderQR<Mat> mq(mids.leftCols(std::max(cnt, 1)));
    Mat monb = Mat(mq.householderQ()).leftCols(r - 1);
    Mat target(n, r - 1);
    target.setZero();
    target.bottomRows(n - 1) = monb;
    // complete (e1, target) to SO(n)
    Mat full(n, n);
    full.col(0) = Vec::Unit(n, 0);
    full.middleCols(1, r - 1) = target;
    // Gram-Schmidt completion over the remaining coordinates
    int out_c = r;
    for (int c = 0; c < n && out_c < n; ++c) {
      Vec v = Vec::Unit(n, c);
      for (int p = 0; p < out_c; ++p) v -= full.col(p).dot(v) * full.col(p);
      if (v.norm() < 1e-9) continue;
      full.col(out_c++) = v / v.norm();
    }
    if (full.determinant() < 0) full.col(n - 1) *= -1.0;
    R2 = full;
  }
  GroupElement g0 = multiply(k1, embed_K(R2));

  // verify: g0 maps span{v+, e_2..e_r} onto P0
  Mat model(d, r);
  model.col(0) = v_plus(n);
  for (int q = 1; q < r; ++q) model.col(q) = Vec::Unit(d, q);
  Mat image = g0.mat * model;
  Mat joint(d, 2 * r);
  joint << image, p0_basis;
  Eigen::JacobiSVD<Mat> svd(joint);
  if (svd.singularValues()(r) > 1e-7 * svd.singularValues()(0))
    throw std::logic_error("witt_translate_degenerate: span mismatch");
  return g0;
}

double plane_angle_n2(const Mat& span_basis) {
  if (span_basis.rows() != 3 || span_basis.cols() != 2)
    throw std::invalid_argument("plane_angle_n2: 3x2 basis required");
  Eigen::Vector3d a = span_basis.col(0), b = span_basis.col(1);
  Eigen::Vector3d w = a.cross(b);
  if (w.norm() < 1e-14) throw std::invalid_argument("plane_angle_n2: degenerate basis");
  if (w(2) < 0) w = -w;
  return wrap_angle(std::atan2(-w(1), -w(0)));
}

Mat degenerate_frame_n2(double theta) {
  Mat frame(3, 2);
  Mat k = make_k_theta(theta).mat;
  frame.col(0) = k * (v_plus(2) / std::sqrt(2.0));
  frame.col(1) = k * Vec::Unit(3, 1);
  return frame;
}

std::vector<Mat2> pullback_generators(const GammaSpec& gamma, double theta0) {
  std::vector<Mat2> out;
  if (gamma.kind == GammaKind::PhiSL2Z) {
    // Gamma = Phi(SL(2,Z)); pullback = kappa_{-theta0/2} SL(2,Z) kappa_{theta0/2}
    for (const IMat& g : gamma.generators) {
      Mat2 m;
      m << double(g(0, 0)), double(g(0, 1)), double(g(1, 0)), double(g(1, 1));
      out.push_back(sl2_kappa(-0.5 * theta0) * m * sl2_kappa(0.5 * theta0));
    }
    return out;
  }
  if (gamma.generators.empty())
    throw std::invalid_argument("pullback_generators: generator list required for this group");
  Mat k = make_k_theta(theta0).mat;
  for (const IMat& g : gamma.generators) {
    GroupElement ge = embed_gamma(gamma, g);
    out.push_back(isogeny_phi_inverse(k.transpose() * ge.mat * k));
  }
  return out;
}

namespace {

Mat2 canonical_coord_class(const Mat2& y) {
  HomothetyClass c = canonical_class(Mat(y));
  Mat2 out;
  out << c.canon.basis(0, 0), c.canon.basis(0, 1), c.canon.basis(1, 0), c.canon.basis(1, 1);
  return out;
}

bool coord_known(const std::vector<Mat2>& seen, const Mat2& y, double tol) {
  for (const Mat2& s : seen)
    if ((s - y).cwiseAbs().maxCoeff() < tol) return true;
  return false;
}

}  // namespace

SpecialVerdict detect_special(const HomothetyClass& lambda, double theta0,
                              const GammaSpec& gamma, int n_max) {
  if (lambda.rank() != 2 || lambda.ambient_dim() != 3)
    throw std::invalid_argument("detect_special: rank-2 lattice in R^3 required");
  Mat frame = degenerate_frame_n2(theta0);
  Mat coords = frame.transpose() * lambda.canon.basis;
  if ((frame * coords - lambda.canon.basis).cwiseAbs().maxCoeff() > kDecompTol)
    throw std::invalid_argument("detect_special: lattice does not lie in P^inf_theta0");
  Mat2 y0;
  // coordinates in the (v+, v0) basis: v+ has length sqrt(2) in the frame
  y0 << coords(0, 0) / std::sqrt(2.0), coords(0, 1) / std::sqrt(2.0), coords(1, 0), coords(1, 1);

  std::vector<Mat2> gens = pullback_generators(gamma, theta0);
  std::vector<Mat2> all_gens;
  for (const Mat2& g : gens) {
    all_gens.push_back(g);
    Mat2 inv;
    inv << g(1, 1), -g(0, 1), -g(1, 0), g(0, 0);
    all_gens.push_back(inv);
  }

  std::vector<Mat2> seen = {canonical_coord_class(y0)};
  std::deque<Mat2> queue = {y0};
  while (!queue.empty()) {
    Mat2 y = queue.front();
    queue.pop_front();
    for (const Mat2& g : all_gens) {
      Mat2 ny = g * y;
      // rescale to keep entries bounded along deep orbits
      ny /= std::sqrt(std::abs(ny.determinant()));
      Mat2 canon = canonical_coord_class(ny);
      if (coord_known(seen, canon, 1e-7)) continue;
      seen.push_back(canon);
      if (int(seen.size()) > n_max) {
        SpecialVerdict v;
        v.special = false;
        v.orbit_bound = n_max;
        return v;
      }
      queue.push_back(ny);
    }
  }
  SpecialVerdict v;
  v.special = true;
  v.m = int(seen.size());
  v.orbit_bound = n_max;
  v.packet_coords = seen;
  for (const Mat2& y : seen) {
    Mat basis(3, 2);
    // back to ambient: columns y expressed over (v+, v0)
    Vec vp = make_k_theta(theta0).mat * v_plus(2);
    Vec v0 = make_k_theta(theta0).mat * Vec::Unit(3, 1);
    basis.col(0) = y(0, 0) * vp + y(1, 0) * v0;
    basis.col(1) = y(0, 1) * vp + y(1, 1) * v0;
    v.packet.push_back(canonical_class(basis));
  }
  return v;
}

std::vector<HomothetyClass> m_extension_curve(const std::vector<Mat2>& packet_coords,
                                              double theta0, double theta) {
  std::vector<HomothetyClass> out;
  Mat k_abs = make_k_theta(theta + theta0).mat;  // = k_theta k_theta0
  Vec vp = v_plus(2), v0 = Vec::Unit(3, 1);
  Mat2 rot = sl2_kappa(-0.5 * theta);
  for (const Mat2& y : packet_coords) {
    Mat2 c = rot * y;
    Mat basis(3, 2);
    basis.col(0) = k_abs * (c(0, 0) * vp + c(1, 0) * v0);
    basis.col(1) = k_abs * (c(0, 1) * vp + c(1, 1) * v0);
    out.push_back(canonical_class(basis));
  }
  return out;
}

MultiSectionWitness multi_section_check(const GroupElement& gamma_el,
                                        const std::vector<Mat2>& packet_coords, double theta0,
                                        double tol) {
  MultiSectionWitness w;
  if (packet_coords.empty()) return w;
  // the image of the base packet member under gamma
  Mat2 y = packet_coords.front();
  Vec vp = make_k_theta(theta0).mat * v_plus(2);
  Vec v0 = make_k_theta(theta0).mat * Vec::Unit(3, 1);
  Mat basis(3, 2);
  basis.col(0) = y(0, 0) * vp + y(1, 0) * v0;
  basis.col(1) = y(0, 1) * vp + y(1, 1) * v0;
  Mat image = gamma_el.mat * basis;
  HomothetyClass img_class = canonical_class(image);

  double theta_abs = plane_angle_n2(image);
  w.theta = wrap_angle(theta_abs - theta0);
  std::vector<HomothetyClass> curve = m_extension_curve(packet_coords, theta0, w.theta);
  w.mismatch = 1e300;
  for (std::size_t i = 0; i < curve.size(); ++i) {
    double d = class_distance(img_class, curve[i]);
    if (d < w.mismatch) {
      w.mismatch = d;
      w.index = int(i);
    }
  }
  w.ok = w.mismatch < tol;
  return w;
}

PredictedLaw classify_start(const OrthoPair& start, const GammaSpec& gamma, const NormSpec& norm,
                            const QuadratureSpec& spec, int n_max) {
  PredictedLaw law;
  const int d = start.first.ambient_dim();
  law.n = d - 1;
  law.r = start.first.rank();
  const Mat& b1 = start.first.canon.basis;

  if (!span_degenerate(b1)) {
    // make_ortho_pair put the positive-definite component first
    law.kind = PredictedLaw::Case::NonDegenerate;
    law.g0 = witt_translate_posdef(b1);
    law.profile = eval_w_P0(law.n, law.r, law.g0, norm, spec);
    return law;
  }

  if (law.n >= 3) {
    law.kind = PredictedLaw::Case::DegenerateHigh;
    law.g0 = witt_translate_degenerate(b1);
    law.profile = eval_w_infty(law.n, law.r, law.g0, norm, spec);
    return law;
  }

  // n = 2: a degenerate 1-lattice rides on its orthogonal 2-lattice through
  // the dual action; only star-invariant norms keep the counting unchanged
  if (law.r == 1) {
    if (!norm.star_invariant())
      throw std::invalid_argument(
          "classify_start: n=2 degenerate line with a skewed norm is out of scope (dual trick "
          "needs a star-invariant norm)");
    OrthoPair swapped{start.second, start.first};
    PredictedLaw dual = classify_start(swapped, gamma, norm, spec, n_max);
    dual.star_dual = true;
    return dual;
  }

  law.theta0 = plane_angle_n2(b1);
  law.profile = eval_w_theta0(law.theta0, norm, spec);
  SpecialVerdict verdict = detect_special(start.first, law.theta0, gamma, n_max);
  if (verdict.special) {
    law.kind = PredictedLaw::Case::SpecialExtension;
    law.packet = verdict.packet;
    law.packet_coords = verdict.packet_coords;
    law.m = verdict.m;
  } else {
    law.kind = PredictedLaw::Case::DegenerateGeneric2D;
  }
  return law;
}

X2Point sample_x2(Rng& rng) {
  // hyperbolic area of the fundamental domain F is pi/3; the cusp piece
  // {y > y_cut} has mass (1/y_cut)/(pi/3)
  const double y_cut = 50.0;
  const double total = kPi / 3.0;
  const double cusp_mass = (1.0 / y_cut) / total;
  if (rng.uniform() < cusp_mass) {
    double x = rng.uniform(-0.5, 0.5);
    double y = y_cut / (1.0 - rng.uniform());  // density 1/y^2 on [y_cut, inf)
    return X2Point{x, y};
  }
  // rejection on the box [-1/2,1/2] x [sqrt(3)/2, y_cut] with density 1/y^2
  const double y_min = std::sqrt(3.0) / 2.0;
  for (;;) {
    double x = rng.uniform(-0.5, 0.5);
    double u = rng.uniform();
    double inv = 1.0 / y_min - u * (1.0 / y_min - 1.0 / y_cut);
    double y = 1.0 / inv;
    if (x * x + y * y >= 1.0) return X2Point{x, y};
  }
}

std::vector<PredictedSample> sample_predicted(const PredictedLaw& law, int N, std::uint64_t seed) {
  std::vector<PredictedSample> out;
  out.reserve(std::size_t(N));
  Rng rng(seed);
  for (int q = 0; q < N; ++q) {
    PredictedSample s;
    switch (law.kind) {
      case PredictedLaw::Case::NonDegenerate:
      case PredictedLaw::Case::DegenerateHigh:
      case PredictedLaw::Case::DegenerateGeneric2D: {
        if (law.n == 2) {
          s.theta = law.profile.sample_theta(rng);
        } else {
          s.k_index = law.profile.sample_index(rng);
          s.theta = std::nan("");
        }
        // fiber marginals: rank-2 factors carry the X_2 invariant law;
        // higher ranks stay symbolic
        if (law.r == 2 || law.n + 1 - law.r == 2) {
          X2Point f = sample_x2(rng);
          s.fiber = f;
          s.shape_pt = fold_shape(f);
        }
        break;
      }
      case PredictedLaw::Case::SpecialExtension: {
        double theta_abs = law.profile.sample_theta(rng);
        double theta = wrap_angle(theta_abs - law.theta0);
        int i = rng.uniform_int(law.m);
        auto curve = m_extension_curve({law.packet_coords[std::size_t(i)]}, law.theta0, theta);
        s.theta = theta_abs;
        s.packet_index = i;
        s.shape_pt = shape(curve.front());
        s.fiber = x2_point(curve.front(), degenerate_frame_n2(theta_abs));
        break;
      }
    }
    out.push_back(s);
  }
  return out;
}

}  // namespace lab
