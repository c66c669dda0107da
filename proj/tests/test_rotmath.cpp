#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>

#include "oracles.hpp"
#include "skelformer/rotmath.hpp"

using namespace skelformer;

namespace {

Mat3d random_matrix(Rng& rng, double scale = 1.0) {
  Mat3d m;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m(i, j) = rng.uniform(-scale, scale);
  return m;
}

}  // namespace

TEST_CASE("geodesic distance basics") {
  Rng rng(17);
  for (int i = 0; i < 20; ++i) {
    const Mat3d r = random_rotation(rng);
    CHECK(geodesic_distance(r, r) < 1e-7);  // arccos floors at ~sqrt(eps)
  }
  CHECK(geodesic_distance(Mat3d::Identity(), rot_z(kPi)) ==
        doctest::Approx(kPi));
  CHECK(geodesic_distance(Mat3d::Identity(), rot_x(0.5)) ==
        doctest::Approx(0.5));
  // Symmetry and range.
  for (int i = 0; i < 200; ++i) {
    const Mat3d a = random_rotation(rng);
    const Mat3d b = random_rotation(rng);
    const double d = geodesic_distance(a, b);
    CHECK(d >= 0.0);
    CHECK(d <= kPi + 1e-12);
    CHECK(d == doctest::Approx(geodesic_distance(b, a)).epsilon(1e-12));
  }
}

TEST_CASE("geodesic distance triangle inequality") {
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const Mat3d a = random_rotation(rng);
    const Mat3d b = random_rotation(rng);
    const Mat3d c = random_rotation(rng);
    CHECK(geodesic_distance(a, c) <=
          geodesic_distance(a, b) + geodesic_distance(b, c) + 1e-8);
  }
}

TEST_CASE("symmetric orthogonalization fixed points") {
  CHECK((symmetric_orthogonalize(Mat3d(Mat3d::Identity())) - Mat3d::Identity())
            .norm() < 1e-12);
  Mat3d d = Vec3d(2.0, 1.0, 1.0).asDiagonal();
  CHECK((symmetric_orthogonalize(d) - Mat3d::Identity()).norm() < 1e-12);
  // Rotations are fixed points.
  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    const Mat3d r = random_rotation(rng);
    CHECK((symmetric_orthogonalize(r) - r).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("symmetric orthogonalization produces rotations") {
  Rng rng(7);
  for (int i = 0; i < 2000; ++i) {
    const Mat3d m = random_matrix(rng, 2.0);
    const Mat3d r = symmetric_orthogonalize(m);
    CHECK((r * r.transpose() - Mat3d::Identity()).cwiseAbs().maxCoeff() <
          1e-9);
    CHECK(std::abs(r.determinant() - 1.0) < 1e-9);
  }
}

TEST_CASE("symmetric orthogonalization is the nearest rotation (sampling)") {
  Rng rng(11);
  // Shared pool of uniformly sampled rotations.
  const int pool_size = 1000000;
  std::vector<Mat3d> pool(pool_size);
  for (auto& q : pool) q = random_rotation(rng);

  int negdet_cases = 0;
  for (int c = 0; c < 3; ++c) {
    Mat3d m = random_matrix(rng, 1.0);
    if (m.determinant() >= 0.0) m.col(0) *= -1.0;
    negdet_cases += m.determinant() < 0.0 ? 1 : 0;
    const Mat3d theta = symmetric_orthogonalize(m);
    const double d_theta = (theta - m).norm();
    double d_best = std::numeric_limits<double>::infinity();
    for (const auto& q : pool) d_best = std::min(d_best, (q - m).norm());
    CHECK(d_theta <= d_best + 1e-12);   // never beaten by any sample
    CHECK(d_best <= d_theta + 1e-2);    // sampling comes close to it
  }
  CHECK(negdet_cases == 3);
}

TEST_CASE("nearest-rotation dominance over random rotations") {
  Rng rng(13);
  const Mat3d m = random_matrix(rng, 1.5);
  const Mat3d theta = symmetric_orthogonalize(m);
  const double d_theta = (theta - m).norm();
  for (int i = 0; i < 10000; ++i) {
    CHECK(d_theta <= (random_rotation(rng) - m).norm() + 1e-12);
  }
}

TEST_CASE("symmetric orthogonalization degenerate report") {
  // Reflection with two tied (zeroed) singular values: minimizer not unique.
  Mat3d m = Vec3d(1.0, 0.0, 0.0).asDiagonal();
  m(1, 1) = 0.0;
  m(2, 2) = 0.0;
  m(0, 0) = -1.0;
  CHECK_THROWS_AS((void)symmetric_orthogonalize(m), DegenerateInput);
  Mat3d nf = Mat3d::Zero();
  nf(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS((void)symmetric_orthogonalize(nf), DegenerateInput);
}

TEST_CASE("sixdof to rotation") {
  Eigen::Matrix<double, 6, 1> v;
  v << 1, 0, 0, 0, 1, 0;
  CHECK((sixdof_to_rotation(v) - Mat3d::Identity()).norm() < 1e-12);
  v << 2, 0, 0, 0, 3, 0;
  CHECK((sixdof_to_rotation(v) - Mat3d::Identity()).norm() < 1e-12);
  v << 1, 1, 0, 0, 1, 0;
  const Mat3d r = sixdof_to_rotation(v);
  CHECK(is_rotation(r, 1e-9));
  const Vec3d expected_c0 = Vec3d(1, 1, 0).normalized();
  CHECK((r.col(0) - expected_c0).norm() < 1e-12);

  v << 0, 0, 0, 0, 1, 0;
  CHECK_THROWS_AS((void)sixdof_to_rotation(v), DegenerateInput);
  v << 1, 0, 0, 2, 0, 0;
  CHECK_THROWS_AS((void)sixdof_to_rotation(v), DegenerateInput);
}

TEST_CASE("expmap logmap round trip") {
  Rng rng(23);
  for (int i = 0; i < 500; ++i) {
    const Vec3d w = rng.uniform(0.0, 3.1) * rng.unit_vec3();
    const Mat3d r = expmap(w);
    CHECK(is_rotation(r, 1e-9));
    CHECK((logmap(r) - w).norm() < 1e-6 * std::max(1.0, w.norm()));
  }
  // Near pi.
  const Vec3d w = (kPi - 1e-9) * Vec3d(0, 1, 0);
  CHECK((logmap(expmap(w)) - w).norm() < 1e-5);
}

TEST_CASE("quaternion average basics") {
  Rng rng(29);
  const Quatd q(random_rotation(rng));
  auto same = quaternion_average<double>({q, q}, {1.0, 1.0});
  CHECK(std::abs(std::abs(same.dot(q)) - 1.0) < 1e-12);

  Quatd qneg(-q.w(), -q.x(), -q.y(), -q.z());
  auto flip = quaternion_average<double>({q, qneg}, {1.0, 1.0});
  CHECK(std::abs(std::abs(flip.dot(q)) - 1.0) < 1e-12);

  const Quatd a(rot_z(0.0));
  const Quatd b(rot_z(kPi / 2));
  auto mid = quaternion_average<double>({a, b}, {1.0, 1.0});
  CHECK((mid.toRotationMatrix() - rot_z(kPi / 4)).norm() < 1e-9);
}

TEST_CASE("quaternion average matches independent Jacobi eigen oracle") {
  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + static_cast<int>(rng.uniform_index(6));
    std::vector<Quatd> qs;
    std::vector<double> ws;
    Eigen::Matrix4d acc = Eigen::Matrix4d::Zero();
    double wsum = 0.0;
    for (int i = 0; i < n; ++i) {
      qs.emplace_back(random_rotation(rng));
      ws.push_back(rng.uniform(0.1, 2.0));
      wsum += ws.back();
    }
    for (int i = 0; i < n; ++i) {
      const Eigen::Vector4d c = qs[i].coeffs();
      acc += ws[i] * c * c.transpose();
    }
    acc /= wsum;
    Eigen::VectorXd vals;
    Eigen::MatrixXd vecs;
    oracles::jacobi_symmetric_eig(acc, vals, vecs);
    if (vals[3] - vals[2] <= 1e-10) continue;  // oracle says ambiguous too
    const Eigen::Vector4d lead = vecs.col(3).normalized();
    const Quatd expect(lead[3], lead[0], lead[1], lead[2]);
    const Quatd got = quaternion_average(qs, ws);
    CHECK(std::abs(std::abs(got.dot(expect)) - 1.0) < 1e-8);
  }
}

TEST_CASE("quaternion average sign and weight-scaling invariance") {
  Rng rng(37);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<Quatd> qs;
    std::vector<double> ws;
    for (int i = 0; i < 5; ++i) {
      qs.emplace_back(random_rotation(rng));
      ws.push_back(rng.uniform(0.2, 1.0));
    }
    const Mat3d base = quaternion_average(qs, ws).toRotationMatrix();
    // Flip the sign of a random subset.
    auto flipped = qs;
    for (auto& q : flipped) {
      if (rng.bernoulli(0.5)) q.coeffs() = -q.coeffs();
    }
    CHECK((quaternion_average(flipped, ws).toRotationMatrix() - base)
              .cwiseAbs()
              .maxCoeff() < 1e-8);
    // Scale weights.
    auto scaled = ws;
    for (auto& w : scaled) w *= 7.5;
    CHECK((quaternion_average(qs, scaled).toRotationMatrix() - base)
              .cwiseAbs()
              .maxCoeff() < 1e-8);
  }
}

TEST_CASE("quaternion average ambiguity detection") {
  const Quatd a(rot_z(0.0));
  const Quatd b(rot_z(kPi));  // orthogonal quaternions, perfectly tied
  CHECK_THROWS_AS((void)quaternion_average<double>({a, b}, {1.0, 1.0}),
                  AmbiguousAverage);
  CHECK_THROWS_AS((void)quaternion_average<double>({}, {}), ShapeMismatch);
  CHECK_THROWS_AS((void)quaternion_average<double>({a}, {0.0}),
                  DegenerateInput);
}

TEST_CASE("procrustes identity on equal sets") {
  Rng rng(41);
  MatXd pts(10, 3);
  for (int i = 0; i < 10; ++i)
    pts.row(i) = rng.normal_vec3(1.0).transpose();
  const auto a =
      procrustes_align(pts, pts, std::vector<bool>(10, true));
  CHECK(a.scale == doctest::Approx(1.0).epsilon(1e-12));
  CHECK((a.rotation - Mat3d::Identity()).norm() < 1e-9);
  CHECK(a.translation.norm() < 1e-9);
}

TEST_CASE("procrustes recovers a constructed similarity") {
  Rng rng(43);
  MatXd gt(12, 3);
  for (int i = 0; i < 12; ++i) gt.row(i) = rng.normal_vec3(0.5).transpose();
  const Mat3d r = rot_z(kPi / 3);
  const Vec3d t(1, 2, 3);
  MatXd pred = 2.0 * (gt * r.transpose());
  pred.rowwise() += t.transpose();

  const auto a = procrustes_align(pred, gt, std::vector<bool>(12, true));
  CHECK(a.scale == doctest::Approx(0.5).epsilon(1e-9));
  CHECK((a.rotation - rot_z(-kPi / 3)).norm() < 1e-9);
  const MatXd aligned = a.apply(pred);
  CHECK((aligned - gt).rowwise().norm().maxCoeff() < 1e-9);
}

TEST_CASE("procrustes masked alignment under noise") {
  Rng rng(47);
  for (int seed = 0; seed < 100; ++seed) {
    Rng trial(derive_seed(47, "procrustes_mc", seed));
    MatXd gt(20, 3);
    for (int i = 0; i < 20; ++i)
      gt.row(i) = trial.normal_vec3(0.4).transpose();
    MatXd pred = gt;
    for (int i = 0; i < 20; ++i)
      pred.row(i) += trial.normal_vec3(0.001).transpose();
    std::vector<bool> mask(20, true);
    for (int i = 0; i < 6; ++i) mask[trial.uniform_index(20)] = false;
    size_t kept = 0;
    for (bool m : mask) kept += m;
    if (kept < 3) continue;
    const auto a = procrustes_align(pred, gt, mask);
    const MatXd aligned = a.apply(pred);
    double err = 0.0;
    int n = 0;
    for (int i = 0; i < 20; ++i) {
      if (!mask[i]) continue;
      err += (aligned.row(i) - gt.row(i)).norm();
      ++n;
    }
    CHECK(err / n < 0.002);  // residual MPJPE < 2 mm
  }
}

TEST_CASE("procrustes idempotence") {
  Rng rng(53);
  MatXd gt(9, 3);
  for (int i = 0; i < 9; ++i) gt.row(i) = rng.normal_vec3(1.0).transpose();
  MatXd pred = gt;
  for (int i = 0; i < 9; ++i) pred.row(i) += rng.normal_vec3(0.05).transpose();
  std::vector<bool> mask(9, true);
  const auto a = procrustes_align(pred, gt, mask);
  const MatXd once = a.apply(pred);
  const auto b = procrustes_align(once, gt, mask);
  CHECK(b.scale == doctest::Approx(1.0).epsilon(1e-8));
  CHECK((b.rotation - Mat3d::Identity()).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(b.translation.norm() < 1e-8);
}

TEST_CASE("procrustes degenerate inputs") {
  MatXd line(5, 3);
  for (int i = 0; i < 5; ++i) line.row(i) = Vec3d(i, 2.0 * i, 0.0).transpose();
  CHECK_THROWS_AS(
      (void)procrustes_align(line, line, std::vector<bool>(5, true)),
      DegenerateInput);
  MatXd two(2, 3);
  two.setRandom();
  CHECK_THROWS_AS((void)procrustes_align(two, two, std::vector<bool>(2, true)),
                  DegenerateInput);
}

TEST_CASE("yz reflection conjugation is consistent with matrix identity") {
  Rng rng(59);
  Mat3d s = Vec3d(-1, 1, 1).asDiagonal();
  for (int i = 0; i < 100; ++i) {
    const Mat3d r = random_rotation(rng);
    CHECK((reflect_rotation_yz(r) - s * r * s).cwiseAbs().maxCoeff() < 1e-15);
    CHECK(is_rotation(Mat3d(reflect_rotation_yz(r)), 1e-9));
  }
}
