#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

#include "fetrack/mesh.hpp"

namespace fetrack {

/// phi(r) = r^2 log r, phi(0) = 0.
double tps_kernel(double r);

/// Phi(q) = c + X q + Y^T s(q) with s_k(q) = phi(|q - p_k|).
struct TpsModel {
  std::vector<Vec3> controls;
  Vec3 c = Vec3::Zero();
  Eigen::Matrix3d X = Eigen::Matrix3d::Zero();
  Eigen::MatrixXd Y;  // m x 3

  Vec3 operator()(const Vec3& q) const;
};

/// Interpolating fit. Throws GeometryError for fewer than 4 controls, two
/// controls closer than 1e-10, or (nearly) coplanar controls.
TpsModel tps_fit(std::span<const Vec3> controls, std::span<const Vec3> displacements);

inline Vec3 tps_eval(const TpsModel& m, const Vec3& q) { return m(q); }

}  // namespace fetrack
