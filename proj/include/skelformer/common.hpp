#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>

namespace skelformer {

template <typename S>
using Mat3 = Eigen::Matrix<S, 3, 3>;
template <typename S>
using Vec3 = Eigen::Matrix<S, 3, 1>;
template <typename S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using VecX = Eigen::Matrix<S, Eigen::Dynamic, 1>;

using Mat3d = Mat3<double>;
using Vec3d = Vec3<double>;
using MatXd = MatX<double>;
using VecXd = VecX<double>;

inline constexpr double kPi = 3.14159265358979323846;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input violates a geometric precondition (near-singular, collinear, ...).
class DegenerateInput : public Error {
 public:
  using Error::Error;
};

/// Quaternion average has no unique maximizer (tied leading eigenvalues).
class AmbiguousAverage : public Error {
 public:
  using Error::Error;
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

class BehindCamera : public Error {
 public:
  using Error::Error;
};

class NonFinite : public Error {
 public:
  using Error::Error;
};

class InsufficientConstraints : public Error {
 public:
  using Error::Error;
};

/// File-level problems: missing paths, bad magic, wrong format version.
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace skelformer
