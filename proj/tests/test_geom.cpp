#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Geometry>

#include <cmath>
#include <limits>
#include <sstream>

#include "shapelinker/errors.hpp"
#include "shapelinker/geom.hpp"
#include "shapelinker/rng.hpp"

using shapelinker::InvalidInputError;
using shapelinker::Rng;
namespace geom = shapelinker::geom;
using geom::Mat3;
using geom::PointCloud;
using geom::RigidTransform;
using geom::Vec3;

namespace {

PointCloud make_cloud(std::initializer_list<Vec3> pts) {
  PointCloud c;
  c.points.assign(pts);
  return c;
}

PointCloud random_cloud(Rng& rng, std::size_t n, double scale = 5.0) {
  PointCloud c;
  c.points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    c.points.emplace_back(rng.uniform(-scale, scale), rng.uniform(-scale, scale),
                          rng.uniform(-scale, scale));
  }
  return c;
}

Mat3 rotation_z(double angle) {
  return Eigen::AngleAxisd(angle, Vec3::UnitZ()).toRotationMatrix();
}

Mat3 random_rotation(Rng& rng) {
  const Vec3 axis =
      Vec3(rng.normal(), rng.normal(), rng.normal()).normalized();
  return Eigen::AngleAxisd(rng.uniform(0.0, 2.0 * M_PI), axis)
      .toRotationMatrix();
}

}  // namespace

TEST_CASE("center_to_origin examples") {
  {
    auto [centered, c] = geom::center_to_origin(make_cloud({{1, 2, 3}}));
    CHECK(centered.points[0].norm() == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(c.isApprox(Vec3(1, 2, 3)));
  }
  {
    auto [centered, c] =
        geom::center_to_origin(make_cloud({{1, 0, 0}, {-1, 0, 0}}));
    CHECK(c.norm() == doctest::Approx(0.0));
    CHECK(centered.points[0].isApprox(Vec3(1, 0, 0)));
    CHECK(centered.points[1].isApprox(Vec3(-1, 0, 0)));
  }
  {
    auto [centered, c] =
        geom::center_to_origin(make_cloud({{0, 0, 0}, {2, 0, 0}, {4, 0, 0}}));
    CHECK(c.isApprox(Vec3(2, 0, 0)));
    CHECK(centered.points[0].isApprox(Vec3(-2, 0, 0)));
    CHECK(centered.points[1].norm() == doctest::Approx(0.0));
    CHECK(centered.points[2].isApprox(Vec3(2, 0, 0)));
  }
  CHECK(geom::centroid(make_cloud({{0, 0, 0}, {2, 0, 0}, {4, 0, 0}}))
            .isApprox(Vec3(2, 0, 0)));
  CHECK_THROWS_AS(geom::center_to_origin(PointCloud{}), InvalidInputError);
}

TEST_CASE("center_to_origin leaves centroid below 1e-9") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    PointCloud cloud = random_cloud(rng, 1 + rng.uniform_index(40), 100.0);
    auto [centered, c] = geom::center_to_origin(cloud);
    const Vec3 res = geom::centroid(centered);
    CHECK(std::abs(res.x()) < 1e-9);
    CHECK(std::abs(res.y()) < 1e-9);
    CHECK(std::abs(res.z()) < 1e-9);
  }
}

TEST_CASE("kabsch identity case") {
  Rng rng(7);
  const PointCloud p = random_cloud(rng, 12);
  const RigidTransform t = geom::kabsch(p, p);
  CHECK(t.is_valid());
  CHECK((t.rotation - Mat3::Identity()).norm() < 1e-9);
  CHECK(t.translation.norm() < 1e-9);
  CHECK(geom::rmsd(t.apply(p), p) < 1e-9);
}

TEST_CASE("kabsch recovers a known transform") {
  Rng rng(13);
  const PointCloud p = random_cloud(rng, 10);
  RigidTransform truth;
  truth.rotation = rotation_z(M_PI / 2.0);
  truth.translation = Vec3(1, 2, 3);
  const PointCloud q = truth.apply(p);

  const RigidTransform t = geom::kabsch(p, q);
  CHECK(t.is_valid());
  CHECK((t.rotation - truth.rotation).norm() < 1e-9);
  CHECK((t.translation - truth.translation).norm() < 1e-9);
  CHECK(geom::rmsd(t.apply(p), q) < 1e-9);
}

TEST_CASE("kabsch collinear input stays a proper rotation") {
  const PointCloud p = make_cloud({{0, 0, 0}, {1, 0, 0}, {2, 0, 0}});
  RigidTransform truth;
  truth.rotation = rotation_z(0.7);
  truth.translation = Vec3(0.5, -1.0, 2.0);
  const PointCloud q = truth.apply(p);

  const RigidTransform t = geom::kabsch(p, q);
  CHECK(t.is_valid(1e-9));
  CHECK(geom::rmsd(t.apply(p), q) < 1e-9);
}

TEST_CASE("kabsch precondition errors") {
  const PointCloud two = make_cloud({{0, 0, 0}, {1, 0, 0}});
  const PointCloud three = make_cloud({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}});
  const PointCloud four =
      make_cloud({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  CHECK_THROWS_AS(geom::kabsch(two, two), InvalidInputError);
  CHECK_THROWS_AS(geom::kabsch(three, four), InvalidInputError);

  PointCloud bad = three;
  bad.points[1].y() = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(geom::kabsch(bad, three), InvalidInputError);
  CHECK_THROWS_AS(geom::kabsch(three, bad), InvalidInputError);
}

TEST_CASE("kabsch local optimality probe") {
  Rng rng(17);
  const PointCloud p = random_cloud(rng, 16);
  PointCloud q = random_cloud(rng, 16);
  const RigidTransform t = geom::kabsch(p, q);
  const double best = geom::rmsd(t.apply(p), q);

  for (int trial = 0; trial < 1000; ++trial) {
    const double angle = rng.uniform(1e-4, 0.3);
    const Vec3 axis =
        Vec3(rng.normal(), rng.normal(), rng.normal()).normalized();
    RigidTransform perturbed = t;
    perturbed.rotation =
        Eigen::AngleAxisd(angle, axis).toRotationMatrix() * t.rotation;
    // Translation re-optimized for the perturbed rotation, so the probe
    // tests the rotation choice alone.
    perturbed.translation =
        geom::centroid(q) - perturbed.rotation * geom::centroid(p);
    CHECK(geom::rmsd(perturbed.apply(p), q) >= best - 1e-12);
  }
}

TEST_CASE("kabsch never increases rmsd") {
  Rng rng(19);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 3 + rng.uniform_index(30);
    const PointCloud p = random_cloud(rng, n);
    const PointCloud q = random_cloud(rng, n);
    const RigidTransform t = geom::kabsch(p, q);
    CHECK(geom::rmsd(t.apply(p), q) <= geom::rmsd(p, q) + 1e-12);
  }
}

TEST_CASE("chamfer examples") {
  Rng rng(23);
  const PointCloud a = random_cloud(rng, 9);
  CHECK(geom::chamfer_distance(a, a) == doctest::Approx(0.0).epsilon(1e-15));

  CHECK(geom::chamfer_distance(make_cloud({{0, 0, 0}}),
                               make_cloud({{1, 0, 0}})) ==
        doctest::Approx(1.0));
  CHECK(geom::chamfer_distance(make_cloud({{0, 0, 0}, {2, 0, 0}}),
                               make_cloud({{0, 0, 0}})) ==
        doctest::Approx(4.0 / 3.0));
  CHECK_THROWS_AS(geom::chamfer_distance(PointCloud{}, a), InvalidInputError);
  CHECK_THROWS_AS(geom::chamfer_distance(a, PointCloud{}), InvalidInputError);
}

TEST_CASE("chamfer symmetry and rigid invariance") {
  Rng rng(29);
  for (int trial = 0; trial < 25; ++trial) {
    const PointCloud a = random_cloud(rng, 1 + rng.uniform_index(32));
    const PointCloud b = random_cloud(rng, 1 + rng.uniform_index(32));
    const double ab = geom::chamfer_distance(a, b);
    const double ba = geom::chamfer_distance(b, a);
    CHECK(ab == ba);

    RigidTransform t;
    t.rotation = random_rotation(rng);
    t.translation = Vec3(rng.normal(), rng.normal(), rng.normal()) * 3.0;
    const double moved = geom::chamfer_distance(t.apply(a), t.apply(b));
    CHECK(moved == doctest::Approx(ab).epsilon(1e-9));
  }
}

TEST_CASE("chamfer grid path matches brute force") {
  Rng rng(31);
  for (int trial = 0; trial < 40; ++trial) {
    const PointCloud a = random_cloud(rng, 1 + rng.uniform_index(32));
    const PointCloud b = random_cloud(rng, 1 + rng.uniform_index(32));
    const double brute = geom::chamfer_distance_bruteforce(a, b);
    const double grid = geom::chamfer_distance_grid(a, b);
    CHECK(std::abs(brute - grid) < 1e-12);
  }
  // Above the dispatch threshold the public entry point takes the grid path;
  // it must still agree with the double loop.
  const PointCloud big_a = random_cloud(rng, 400, 12.0);
  const PointCloud big_b = random_cloud(rng, 300, 12.0);
  REQUIRE(big_a.size() + big_b.size() >= geom::kChamferGridThreshold);
  CHECK(std::abs(geom::chamfer_distance(big_a, big_b) -
                 geom::chamfer_distance_bruteforce(big_a, big_b)) < 1e-12);

  // Degenerate spread: all points coincident on one axis.
  PointCloud flat_a, flat_b;
  for (int i = 0; i < 300; ++i) {
    flat_a.points.emplace_back(0.0, 0.0, i * 0.01);
    flat_b.points.emplace_back(0.0, 0.0, i * 0.011 + 0.5);
  }
  CHECK(std::abs(geom::chamfer_distance_grid(flat_a, flat_b) -
                 geom::chamfer_distance_bruteforce(flat_a, flat_b)) < 1e-12);
}

TEST_CASE("rmsd examples") {
  const PointCloud p = make_cloud({{0, 0, 0}});
  CHECK(geom::rmsd(p, p) == doctest::Approx(0.0));
  CHECK(geom::rmsd(make_cloud({{0, 0, 0}}), make_cloud({{3, 4, 0}})) ==
        doctest::Approx(5.0));
  CHECK(geom::rmsd(make_cloud({{0, 0, 0}, {0, 0, 0}}),
                   make_cloud({{1, 0, 0}, {0, 1, 0}})) == doctest::Approx(1.0));
  CHECK_THROWS_AS(geom::rmsd(p, make_cloud({{0, 0, 0}, {1, 1, 1}})),
                  InvalidInputError);
}

TEST_CASE("deterministic svd reconstructs and fixes signs") {
  Rng rng(37);
  for (int trial = 0; trial < 50; ++trial) {
    Mat3 h;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) h(i, j) = rng.normal();
    const geom::Svd3 svd = geom::deterministic_svd3(h);
    const Mat3 rebuilt = svd.U * svd.S.asDiagonal() * svd.V.transpose();
    CHECK((rebuilt - h).norm() < 1e-9);
    CHECK(svd.S(0) >= svd.S(1));
    CHECK(svd.S(1) >= svd.S(2));
    for (int c = 0; c < 3; ++c) {
      int arg = 0;
      svd.U.col(c).cwiseAbs().maxCoeff(&arg);
      CHECK(svd.U(arg, c) > 0.0);
    }
  }
  // Zero matrix falls back to identity factors.
  const geom::Svd3 zero = geom::deterministic_svd3(Mat3::Zero());
  CHECK((zero.U - Mat3::Identity()).norm() < 1e-12);
  CHECK((zero.V - Mat3::Identity()).norm() < 1e-12);
  CHECK(zero.S.norm() < 1e-12);
}

TEST_CASE("xyz round trip") {
  geom::XyzRecord rec;
  rec.elements = {"C", "O", "H"};
  rec.cloud = make_cloud({{0.1, -2.25, 3.0}, {1.0, 0.0, 0.0}, {0, 0, 0}});
  rec.comment = "fixture";

  std::ostringstream out;
  geom::write_xyz(out, rec);
  std::istringstream in(out.str());
  const geom::XyzRecord back = geom::read_xyz(in);

  REQUIRE(back.elements.size() == 3);
  CHECK(back.elements[1] == "O");
  CHECK(back.comment == "fixture");
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK((back.cloud.points[i] - rec.cloud.points[i]).norm() < 1e-6);
  }

  // Writing the reread record reproduces the bytes: format output is fixed
  // at six decimals.
  std::ostringstream again;
  geom::write_xyz(again, back);
  CHECK(again.str() == out.str());
}

TEST_CASE("xyz reader rejects malformed input") {
  {
    std::istringstream in("");
    CHECK_THROWS_WITH_AS(geom::read_xyz(in), doctest::Contains("no atoms"),
                         InvalidInputError);
  }
  {
    std::istringstream in("0\nempty\n");
    CHECK_THROWS_WITH_AS(geom::read_xyz(in), doctest::Contains("no atoms"),
                         InvalidInputError);
  }
  {
    std::istringstream in("2\ncomment\nC 0 0 0\n");
    CHECK_THROWS_AS(geom::read_xyz(in), InvalidInputError);
  }
  {
    std::istringstream in("1\ncomment\nC 0 zero 0\n");
    CHECK_THROWS_AS(geom::read_xyz(in), InvalidInputError);
  }
}
