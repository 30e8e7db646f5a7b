#include "fetrack/tps.hpp"

#include <cmath>

#include <Eigen/Dense>

namespace fetrack {

double tps_kernel(double r) { return r > 0.0 ? r * r * std::log(r) : 0.0; }

Vec3 TpsModel::operator()(const Vec3& q) const {
  Vec3 out = c + X * q;
  for (std::size_t k = 0; k < controls.size(); ++k) {
    out += tps_kernel((q - controls[k]).norm()) * Y.row(static_cast<Eigen::Index>(k)).transpose();
  }
  return out;
}

TpsModel tps_fit(std::span<const Vec3> controls, std::span<const Vec3> displacements) {
  const std::size_t m = controls.size();
  if (displacements.size() != m) throw GeometryError("tps_fit: control and displacement counts differ");
  if (m < 4) throw GeometryError("tps_fit: at least 4 control points are required");

  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      if ((controls[i] - controls[j]).norm() < 1e-10) {
        throw GeometryError("tps_fit: singular system (duplicate control points " + std::to_string(i) + ", " +
                            std::to_string(j) + ")");
      }
    }
  }

  // Work in centered coordinates for conditioning.
  Vec3 center = Vec3::Zero();
  for (const Vec3& p : controls) center += p;
  center /= static_cast<double>(m);
  Eigen::MatrixXd pc(m, 3);
  for (std::size_t i = 0; i < m; ++i) pc.row(static_cast<Eigen::Index>(i)) = (controls[i] - center).transpose();
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(pc);
  const Vec3 sv = svd.singularValues();
  if (!(sv(2) > 1e-10 * sv(0))) throw GeometryError("tps_fit: singular system (coplanar control points)");

  const Eigen::Index n = static_cast<Eigen::Index>(m);
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n + 4, n + 4);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double s = tps_kernel((pc.row(i) - pc.row(j)).norm());
      l(i, j) = s;
      l(j, i) = s;
    }
    l(i, n) = 1.0;
    l(n, i) = 1.0;
    l.block<1, 3>(i, n + 1) = pc.row(i);
    l.block<3, 1>(n + 1, i) = pc.row(i).transpose();
  }
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n + 4, 3);
  for (Eigen::Index i = 0; i < n; ++i) rhs.row(i) = displacements[static_cast<std::size_t>(i)].transpose();

  const Eigen::MatrixXd sol = l.partialPivLu().solve(rhs);
  if (!sol.allFinite()) throw GeometryError("tps_fit: singular system");

  TpsModel model;
  model.controls.assign(controls.begin(), controls.end());
  model.Y = sol.topRows(n);
  const Vec3 cc = sol.row(n).transpose();
  model.X = sol.bottomRows<3>().transpose();
  // Phi(q) = cc + X (q - center) + ...; the kernel is translation invariant.
  model.c = cc - model.X * center;
  return model;
}

}  // namespace fetrack
