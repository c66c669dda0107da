#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <cmath>
#include <vector>

#include "skelformer/common.hpp"
#include "skelformer/rng.hpp"

namespace skelformer {

// Rotations are plain 3x3 special-orthogonal Eigen matrices; quaternions are
// Eigen::Quaternion. Everything here is a pure function, safe to call from
// any thread.

template <typename S>
using Quat = Eigen::Quaternion<S>;
using Quatd = Quat<double>;

template <typename S>
Mat3<S> rot_x(S angle) {
  return Mat3<S>(Eigen::AngleAxis<S>(angle, Vec3<S>::UnitX()));
}
template <typename S>
Mat3<S> rot_y(S angle) {
  return Mat3<S>(Eigen::AngleAxis<S>(angle, Vec3<S>::UnitY()));
}
template <typename S>
Mat3<S> rot_z(S angle) {
  return Mat3<S>(Eigen::AngleAxis<S>(angle, Vec3<S>::UnitZ()));
}

template <typename Derived>
bool is_rotation(const Eigen::MatrixBase<Derived>& m,
                 typename Derived::Scalar tol = 1e-9) {
  using S = typename Derived::Scalar;
  const Mat3<S> r = m;
  return ((r * r.transpose() - Mat3<S>::Identity()).cwiseAbs().maxCoeff() <
          tol) &&
         std::abs(r.determinant() - S(1)) < tol;
}

/// Angular distance on SO(3). The trace argument is clamped to [-1, 1] so
/// round-off can never produce NaN.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar geodesic_distance(
    const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  using S = typename DerivedA::Scalar;
  const S c = ((a * b.transpose()).trace() - S(1)) / S(2);
  return std::acos(std::clamp(c, S(-1), S(1)));
}

namespace detail {

// Shared projection core: nearest special-orthogonal matrix from the SVD of
// m, sign fixed by det(U V^T). Reports the near-degenerate case where the
// minimizer sign is ambiguous instead of picking one silently.
template <typename S>
Mat3<S> orthogonalize_svd(const Mat3<S>& m, bool* degenerate,
                          S tie_tol = S(1e-12)) {
  Eigen::JacobiSVD<Mat3<S>> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Mat3<S>& u = svd.matrixU();
  const Mat3<S>& v = svd.matrixV();
  const S sign = (u * v.transpose()).determinant() < S(0) ? S(-1) : S(1);
  if (degenerate != nullptr) {
    const auto& sv = svd.singularValues();
    *degenerate = sign < S(0) && (sv[1] - sv[2]) <= tie_tol;
  }
  Mat3<S> sigma_o = Mat3<S>::Identity();
  sigma_o(2, 2) = sign;
  return u * sigma_o * v.transpose();
}

}  // namespace detail

/// Nearest rotation to an arbitrary 3x3 matrix in Frobenius norm,
/// Theta = U diag(1,1,det(UV^T)) V^T.
template <typename S>
Mat3<S> symmetric_orthogonalize(const Mat3<S>& m) {
  if (!m.allFinite()) {
    throw DegenerateInput("symmetric_orthogonalize: non-finite input");
  }
  bool degenerate = false;
  Mat3<S> r = detail::orthogonalize_svd(m, &degenerate);
  if (degenerate) {
    throw DegenerateInput(
        "symmetric_orthogonalize: tied smallest singular values with "
        "negative determinant; nearest rotation is not unique");
  }
  return r;
}

/// Gram-Schmidt of two 3-vectors (first two columns of the rotation).
template <typename S>
Mat3<S> sixdof_to_rotation(const Eigen::Matrix<S, 6, 1>& v) {
  const Vec3<S> a = v.template head<3>();
  const Vec3<S> b = v.template tail<3>();
  const S an = a.norm();
  if (an <= S(1e-9)) {
    throw DegenerateInput("sixdof_to_rotation: first vector has near-zero norm");
  }
  const Vec3<S> c0 = a / an;
  const Vec3<S> w = b - c0.dot(b) * c0;
  if (w.norm() <= S(1e-9) * b.norm() || b.norm() == S(0)) {
    throw DegenerateInput("sixdof_to_rotation: vectors are near-parallel");
  }
  const Vec3<S> c1 = w.normalized();
  const Vec3<S> c2 = c0.cross(c1);
  Mat3<S> r;
  r.col(0) = c0;
  r.col(1) = c1;
  r.col(2) = c2;
  return r;
}

template <typename S>
Mat3<S> skew(const Vec3<S>& v) {
  Mat3<S> m;
  m << S(0), -v.z(), v.y(), v.z(), S(0), -v.x(), -v.y(), v.x(), S(0);
  return m;
}

/// Exponential map so(3) -> SO(3) (Rodrigues).
template <typename S>
Mat3<S> expmap(const Vec3<S>& w) {
  const S theta = w.norm();
  if (theta < S(1e-12)) {
    return Mat3<S>::Identity() + skew<S>(w);
  }
  const Mat3<S> k = skew<S>(Vec3<S>(w / theta));
  return Mat3<S>::Identity() + std::sin(theta) * k +
         (S(1) - std::cos(theta)) * k * k;
}

/// Logarithm map SO(3) -> so(3), |result| in [0, pi].
template <typename S>
Vec3<S> logmap(const Mat3<S>& r) {
  const S c = std::clamp((r.trace() - S(1)) / S(2), S(-1), S(1));
  const S theta = std::acos(c);
  Vec3<S> axial(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  if (theta < S(1e-7)) {
    return S(0.5) * axial;
  }
  if (theta > S(kPi) - S(1e-5)) {
    // Near pi the axial vector vanishes; recover the axis from R + I.
    const Mat3<S> a = (r + Mat3<S>::Identity()) * S(0.5);
    int i = 0;
    a.diagonal().maxCoeff(&i);
    Vec3<S> axis = a.col(i) / std::sqrt(std::max(a(i, i), S(1e-18)));
    axis.normalize();
    // Fix the sign with the (possibly tiny) axial part.
    if (axis.dot(axial) < S(0)) axis = -axis;
    return theta * axis;
  }
  return (theta / (S(2) * std::sin(theta))) * axial;
}

/// Uniform random rotation (normalized 4-normal quaternion).
inline Mat3d random_rotation(Rng& rng) {
  Quatd q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  q.normalize();
  return q.toRotationMatrix();
}

/// Weighted chordal L2 mean of unit quaternions: the leading eigenvector of
/// the weighted outer-product accumulator. Invariant to per-input sign flips
/// and to uniform weight scaling.
template <typename S>
Quat<S> quaternion_average(const std::vector<Quat<S>>& qs,
                           const std::vector<S>& weights) {
  if (qs.empty() || qs.size() != weights.size()) {
    throw ShapeMismatch("quaternion_average: empty input or size mismatch");
  }
  S wsum = S(0);
  for (S w : weights) {
    if (w < S(0)) throw DegenerateInput("quaternion_average: negative weight");
    wsum += w;
  }
  if (wsum <= S(0)) {
    throw DegenerateInput("quaternion_average: weights sum to zero");
  }
  Eigen::Matrix<S, 4, 4> acc = Eigen::Matrix<S, 4, 4>::Zero();
  for (size_t i = 0; i < qs.size(); ++i) {
    const Eigen::Matrix<S, 4, 1> c = qs[i].coeffs();  // (x, y, z, w)
    acc += (weights[i] / wsum) * c * c.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<S, 4, 4>> eig(acc);
  const auto& evals = eig.eigenvalues();  // ascending
  if (evals[3] - evals[2] <= S(1e-10)) {
    throw AmbiguousAverage(
        "quaternion_average: tied leading eigenvalues, mean not unique");
  }
  const Eigen::Matrix<S, 4, 1> lead = eig.eigenvectors().col(3);
  Quat<S> q(lead[3], lead[0], lead[1], lead[2]);
  q.normalize();
  return q;
}

/// Similarity transform p -> scale * rotation * p + translation.
struct RigidAlignment {
  double scale = 1.0;
  Mat3d rotation = Mat3d::Identity();
  Vec3d translation = Vec3d::Zero();

  /// Applies the transform to N x 3 row-per-point data.
  MatXd apply(const MatXd& points) const {
    MatXd out = scale * (points * rotation.transpose());
    out.rowwise() += translation.transpose();
    return out;
  }
};

/// Masked similarity Procrustes: the transform of pred minimizing masked mean
/// squared distance to gt (Umeyama with scale).
inline RigidAlignment procrustes_align(const MatXd& pred, const MatXd& gt,
                                       const std::vector<bool>& mask) {
  if (pred.rows() != gt.rows() || pred.cols() != 3 || gt.cols() != 3 ||
      static_cast<Eigen::Index>(mask.size()) != pred.rows()) {
    throw ShapeMismatch("procrustes_align: inputs must be matching N x 3");
  }
  Eigen::Index n = 0;
  for (bool m : mask) n += m ? 1 : 0;
  if (n < 3) {
    throw DegenerateInput("procrustes_align: fewer than 3 unmasked points");
  }
  MatXd x(n, 3), y(n, 3);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < pred.rows(); ++i) {
    if (!mask[static_cast<size_t>(i)]) continue;
    x.row(k) = pred.row(i);
    y.row(k) = gt.row(i);
    ++k;
  }
  const Vec3d mx = x.colwise().mean();
  const Vec3d my = y.colwise().mean();
  x.rowwise() -= mx.transpose();
  y.rowwise() -= my.transpose();

  {
    Eigen::JacobiSVD<MatXd> rank_probe(x);
    const auto& sv = rank_probe.singularValues();
    if (sv[1] <= 1e-9 * std::max(1.0, sv[0])) {
      throw DegenerateInput("procrustes_align: unmasked points are collinear");
    }
  }

  const Mat3d cov = (y.transpose() * x) / static_cast<double>(n);
  Eigen::JacobiSVD<Mat3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Vec3d s_fix = Vec3d::Ones();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) {
    s_fix[2] = -1.0;
  }
  RigidAlignment out;
  out.rotation =
      svd.matrixU() * s_fix.asDiagonal() * svd.matrixV().transpose();
  const double var_x = x.squaredNorm() / static_cast<double>(n);
  out.scale = svd.singularValues().dot(s_fix) / var_x;
  out.translation = my - out.scale * out.rotation * mx;
  return out;
}

/// Reflection of a rotation across the YZ plane: S R S with S=diag(-1,1,1).
template <typename S>
Mat3<S> reflect_rotation_yz(const Mat3<S>& r) {
  Mat3<S> out = r;
  // Entries with exactly one index on the X axis flip sign.
  out(0, 1) = -r(0, 1);
  out(0, 2) = -r(0, 2);
  out(1, 0) = -r(1, 0);
  out(2, 0) = -r(2, 0);
  return out;
}

template <typename S>
Vec3<S> reflect_point_yz(const Vec3<S>& p) {
  return Vec3<S>(-p.x(), p.y(), p.z());
}

}  // namespace skelformer
