#include "shapelinker/geom.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_map>

#include "shapelinker/errors.hpp"

namespace shapelinker::geom {

namespace {

void require_finite(const PointCloud& cloud, const char* name) {
  for (const Vec3& p : cloud.points) {
    if (!p.allFinite()) {
      throw InvalidInputError(std::string(name) +
                              " contains non-finite coordinates");
    }
  }
}

void require_nonempty(const PointCloud& cloud, const char* name) {
  if (cloud.empty()) {
    throw InvalidInputError(std::string(name) + " is empty");
  }
}

}  // namespace

PointCloud RigidTransform::apply(const PointCloud& cloud) const {
  PointCloud out;
  out.label = cloud.label;
  out.points.reserve(cloud.size());
  for (const Vec3& p : cloud.points) out.points.push_back(apply(p));
  return out;
}

bool RigidTransform::is_valid(double tol) const {
  const Mat3 gram = rotation.transpose() * rotation;
  if ((gram - Mat3::Identity()).cwiseAbs().maxCoeff() > tol) return false;
  return std::abs(rotation.determinant() - 1.0) <= tol;
}

Vec3 centroid(const PointCloud& cloud) {
  require_nonempty(cloud, "cloud");
  Vec3 c = Vec3::Zero();
  for (const Vec3& p : cloud.points) c += p;
  return c / static_cast<double>(cloud.size());
}

std::pair<PointCloud, Vec3> center_to_origin(const PointCloud& cloud) {
  require_nonempty(cloud, "cloud");
  require_finite(cloud, "cloud");
  const Vec3 c = centroid(cloud);
  PointCloud out;
  out.label = cloud.label;
  out.points.reserve(cloud.size());
  for (const Vec3& p : cloud.points) out.points.push_back(p - c);
  return {std::move(out), c};
}

Svd3 deterministic_svd3(const Mat3& H) {
  Eigen::JacobiSVD<Mat3> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Svd3 out{svd.matrixU(), svd.singularValues(), svd.matrixV()};
  // Fix column signs: the largest-magnitude entry of each left singular
  // vector is made positive (ties broken by lowest row index). U and V flip
  // together so U * S * V^T is preserved.
  for (int j = 0; j < 3; ++j) {
    int imax = 0;
    for (int i = 1; i < 3; ++i) {
      if (std::abs(out.U(i, j)) > std::abs(out.U(imax, j))) imax = i;
    }
    if (out.U(imax, j) < 0.0) {
      out.U.col(j) = -out.U.col(j);
      out.V.col(j) = -out.V.col(j);
    }
  }
  return out;
}

RigidTransform kabsch_unchecked(const PointCloud& P, const PointCloud& Q) {
  const std::size_t n = P.size();
  const Vec3 p_bar = centroid(P);
  const Vec3 q_bar = centroid(Q);

  Mat3 H = Mat3::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    H += (P.points[i] - p_bar) * (Q.points[i] - q_bar).transpose();
  }

  const Svd3 svd = deterministic_svd3(H);
  Vec3 d(1.0, 1.0, (svd.U * svd.V.transpose()).determinant());
  RigidTransform t;
  t.rotation = svd.V * d.asDiagonal() * svd.U.transpose();
  t.translation = q_bar - t.rotation * p_bar;
  return t;
}

RigidTransform kabsch(const PointCloud& P, const PointCloud& Q) {
  if (P.size() != Q.size()) {
    throw InvalidInputError("kabsch: cloud sizes differ (" +
                            std::to_string(P.size()) + " vs " +
                            std::to_string(Q.size()) + ")");
  }
  if (P.size() < 3) {
    throw InvalidInputError("kabsch: need at least 3 points");
  }
  require_finite(P, "P");
  require_finite(Q, "Q");
  return kabsch_unchecked(P, Q);
}

double rmsd(const PointCloud& P, const PointCloud& Q) {
  if (P.size() != Q.size()) {
    throw InvalidInputError("rmsd: cloud sizes differ");
  }
  require_nonempty(P, "P");
  double acc = 0.0;
  for (std::size_t i = 0; i < P.size(); ++i) {
    acc += (P.points[i] - Q.points[i]).squaredNorm();
  }
  return std::sqrt(acc / static_cast<double>(P.size()));
}

namespace {

// One-directional sum of squared nearest-neighbor distances by brute force.
double nn_sq_sum_bruteforce(const std::vector<Vec3>& from,
                            const std::vector<Vec3>& to) {
  double acc = 0.0;
  for (const Vec3& a : from) {
    double best = std::numeric_limits<double>::infinity();
    for (const Vec3& b : to) {
      const double d = (a - b).squaredNorm();
      if (d < best) best = d;
    }
    acc += best;
  }
  return acc;
}

// Uniform grid over the target cloud for exact nearest-neighbor queries.
// The query cell is clamped into the occupied cell box, then cells are
// scanned in expanding Chebyshev rings around it. An in-box cell at ring
// r >= 1 only holds points at euclidean distance >= (r-1)*h from the query
// (stepping away from the clamped cell never moves toward the query), which
// gives the exact stopping rule; rings past the box reach hold nothing, so
// the scan is bounded even for queries far outside the box.
class UniformGrid {
public:
  explicit UniformGrid(const std::vector<Vec3>& pts) : pts_(pts) {
    Vec3 lo = pts[0];
    Vec3 hi = pts[0];
    for (const Vec3& p : pts) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    origin_ = lo;
    const double extent = (hi - lo).maxCoeff();
    const double target =
        extent / std::max(1.0, std::cbrt(static_cast<double>(pts.size())));
    h_ = target > 1e-9 ? target : 1.0;
    for (int a = 0; a < 3; ++a) {
      const double top = std::floor((hi[a] - origin_[a]) / h_);
      cmax_[a] = top > 0.0 ? static_cast<int>(top) : 0;
    }
    for (std::size_t i = 0; i < pts.size(); ++i) {
      cells_[key_of(cell_of_clamped(pts[i]))].push_back(i);
    }
  }

  double nearest_sq(const Vec3& q) const {
    const Eigen::Vector3i c0 = cell_of_clamped(q);
    const int reach =
        std::max({c0.x(), cmax_.x() - c0.x(), c0.y(), cmax_.y() - c0.y(),
                  c0.z(), cmax_.z() - c0.z()});
    double best = std::numeric_limits<double>::infinity();
    for (int r = 0; r <= reach; ++r) {
      if (r > 0 && best <= square((r - 1) * h_)) break;
      scan_ring(q, c0, r, best);
    }
    return best;
  }

private:
  static double square(double x) { return x * x; }

  int cell_index(double scaled, int axis) const {
    double c = std::floor(scaled);
    if (c < 0.0) c = 0.0;
    const double hi = static_cast<double>(cmax_[axis]);
    if (c > hi) c = hi;
    return static_cast<int>(c);
  }

  Eigen::Vector3i cell_of_clamped(const Vec3& p) const {
    return Eigen::Vector3i(cell_index((p.x() - origin_.x()) / h_, 0),
                           cell_index((p.y() - origin_.y()) / h_, 1),
                           cell_index((p.z() - origin_.z()) / h_, 2));
  }

  static std::int64_t key_of(const Eigen::Vector3i& c) {
    return (static_cast<std::int64_t>(c.x()) << 42) |
           (static_cast<std::int64_t>(c.y()) << 21) |
           static_cast<std::int64_t>(c.z());
  }

  void scan_ring(const Vec3& q, const Eigen::Vector3i& c0, int r,
                 double& best) const {
    const auto visit = [&](int x, int y, int z) {
      if (x < 0 || y < 0 || z < 0 || x > cmax_.x() || y > cmax_.y() ||
          z > cmax_.z()) {
        return;
      }
      const auto it = cells_.find(key_of(Eigen::Vector3i(x, y, z)));
      if (it == cells_.end()) return;
      for (const std::size_t idx : it->second) {
        const double d = (q - pts_[idx]).squaredNorm();
        if (d < best) best = d;
      }
    };
    if (r == 0) {
      visit(c0.x(), c0.y(), c0.z());
      return;
    }
    for (int dx = -r; dx <= r; ++dx) {
      for (int dy = -r; dy <= r; ++dy) {
        for (int dz = -r; dz <= r; ++dz) {
          if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != r) {
            continue;
          }
          visit(c0.x() + dx, c0.y() + dy, c0.z() + dz);
        }
      }
    }
  }

  const std::vector<Vec3>& pts_;
  Vec3 origin_ = Vec3::Zero();
  double h_ = 1.0;
  Eigen::Vector3i cmax_ = Eigen::Vector3i::Zero();
  std::unordered_map<std::int64_t, std::vector<std::size_t>> cells_;
};

double nn_sq_sum_grid(const std::vector<Vec3>& from, const UniformGrid& grid) {
  double acc = 0.0;
  for (const Vec3& a : from) acc += grid.nearest_sq(a);
  return acc;
}

void check_chamfer_inputs(const PointCloud& A, const PointCloud& B) {
  require_nonempty(A, "A");
  require_nonempty(B, "B");
  require_finite(A, "A");
  require_finite(B, "B");
}

}  // namespace

double chamfer_distance_bruteforce(const PointCloud& A, const PointCloud& B) {
  check_chamfer_inputs(A, B);
  const double total = nn_sq_sum_bruteforce(A.points, B.points) +
                       nn_sq_sum_bruteforce(B.points, A.points);
  return total / static_cast<double>(A.size() + B.size());
}

double chamfer_distance_grid(const PointCloud& A, const PointCloud& B) {
  check_chamfer_inputs(A, B);
  const UniformGrid grid_b(B.points);
  const UniformGrid grid_a(A.points);
  const double total =
      nn_sq_sum_grid(A.points, grid_b) + nn_sq_sum_grid(B.points, grid_a);
  return total / static_cast<double>(A.size() + B.size());
}

double chamfer_distance(const PointCloud& A, const PointCloud& B) {
  check_chamfer_inputs(A, B);
  if (A.size() + B.size() < kChamferGridThreshold) {
    return chamfer_distance_bruteforce(A, B);
  }
  return chamfer_distance_grid(A, B);
}

XyzRecord read_xyz(std::istream& in) {
  XyzRecord rec;
  std::string line;
  if (!std::getline(in, line)) {
    throw InvalidInputError("xyz: no atoms (empty input)");
  }
  long count = 0;
  try {
    count = std::stol(line);
  } catch (const std::exception&) {
    throw InvalidInputError("xyz: first line must be the point count");
  }
  if (count <= 0) {
    throw InvalidInputError("xyz: no atoms (count " + std::to_string(count) +
                            ")");
  }
  if (!std::getline(in, rec.comment)) {
    throw InvalidInputError("xyz: missing comment line");
  }
  for (long i = 0; i < count; ++i) {
    if (!std::getline(in, line)) {
      throw InvalidInputError("xyz: expected " + std::to_string(count) +
                              " records, got " + std::to_string(i));
    }
    std::istringstream ls(line);
    std::string element;
    double x = 0.0, y = 0.0, z = 0.0;
    if (!(ls >> element >> x >> y >> z)) {
      throw InvalidInputError("xyz: malformed record on line " +
                              std::to_string(i + 3));
    }
    rec.elements.push_back(element);
    rec.cloud.points.emplace_back(x, y, z);
  }
  return rec;
}

XyzRecord read_xyz_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw InvalidInputError("cannot open " + path);
  }
  return read_xyz(in);
}

void write_xyz(std::ostream& out, const XyzRecord& record) {
  if (record.elements.size() != record.cloud.size()) {
    throw InvalidInputError("xyz: element/point count mismatch");
  }
  out << record.cloud.size() << "\n" << record.comment << "\n";
  char buf[128];
  for (std::size_t i = 0; i < record.cloud.size(); ++i) {
    const Vec3& p = record.cloud.points[i];
    std::snprintf(buf, sizeof(buf), " %12.6f %12.6f %12.6f", p.x(), p.y(),
                  p.z());
    out << record.elements[i] << buf << "\n";
  }
}

void write_xyz_file(const std::string& path, const XyzRecord& record) {
  std::ofstream out(path);
  if (!out) {
    throw InvalidInputError("cannot open " + path + " for writing");
  }
  write_xyz(out, record);
}

}  // namespace shapelinker::geom
