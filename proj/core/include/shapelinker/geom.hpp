#pragma once

#include <Eigen/Core>

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace shapelinker::geom {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Ordered set of 3D points in angstrom. The unit of alignment throughout;
// order matters for the correspondence-based operations (kabsch, rmsd) and
// is irrelevant for the set-based ones (chamfer).
struct PointCloud {
  std::vector<Vec3> points;
  std::string label;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

// Proper rotation plus translation; maps p to rotation * p + translation.
struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  PointCloud apply(const PointCloud& cloud) const;

  // Checks RtR = I and det = +1 within tol.
  bool is_valid(double tol = 1e-9) const;
};

Vec3 centroid(const PointCloud& cloud);

// Returns the cloud shifted to zero centroid plus the removed centroid, so
// the shift is invertible.
std::pair<PointCloud, Vec3> center_to_origin(const PointCloud& cloud);

// Optimal rigid superposition of P onto Q (points in correspondence by
// index): minimizes rmsd(transform(P), Q). Requires |P| = |Q| >= 3 and
// finite input. Reflections are excluded via a sign correction on the
// smallest singular value; degenerate (collinear, coincident) input still
// yields a valid proper rotation.
RigidTransform kabsch(const PointCloud& P, const PointCloud& Q);

// Same computation without the >= 3 point precondition, for callers that
// must stay well-defined on degenerate clouds (the aligner forward pass).
RigidTransform kabsch_unchecked(const PointCloud& P, const PointCloud& Q);

// Symmetric squared-nearest-neighbor distance, normalized by |A| + |B|:
//   (sum_i min_j |a_i-b_j|^2 + sum_j min_i |a_i-b_j|^2) / (|A| + |B|)
// Dispatches to the exact double loop below kChamferGridThreshold points and
// to a uniform spatial grid above; both are exact.
double chamfer_distance(const PointCloud& A, const PointCloud& B);
double chamfer_distance_bruteforce(const PointCloud& A, const PointCloud& B);
double chamfer_distance_grid(const PointCloud& A, const PointCloud& B);

inline constexpr std::size_t kChamferGridThreshold = 512;

// Root mean square deviation over index-corresponding points.
double rmsd(const PointCloud& P, const PointCloud& Q);

// Deterministic 3x3 SVD: singular values sorted descending, column signs
// fixed so the largest-magnitude entry of each left singular vector is
// positive. H = U * S.asDiagonal() * V^T.
struct Svd3 {
  Mat3 U;
  Vec3 S;
  Mat3 V;
};
Svd3 deterministic_svd3(const Mat3& H);

// XYZ file format: line 1 = point count, line 2 = comment, then
// "element x y z" per line, coordinates in angstrom, written with six
// decimals.
struct XyzRecord {
  std::vector<std::string> elements;
  PointCloud cloud;
  std::string comment;
};

XyzRecord read_xyz(std::istream& in);
XyzRecord read_xyz_file(const std::string& path);
void write_xyz(std::ostream& out, const XyzRecord& record);
void write_xyz_file(const std::string& path, const XyzRecord& record);

}  // namespace shapelinker::geom
