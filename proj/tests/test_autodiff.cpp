#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Geometry>

#include <cmath>
#include <functional>

#include "shapelinker/autodiff.hpp"
#include "shapelinker/errors.hpp"
#include "shapelinker/geom.hpp"
#include "shapelinker/rng.hpp"

namespace ad = shapelinker::ad;
namespace geom = shapelinker::geom;
using ad::Mat;
using ad::Tape;
using ad::Var;
using shapelinker::Rng;

namespace {

Mat random_mat(Rng& rng, int r, int c, double scale = 1.0) {
  Mat m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = rng.normal() * scale;
  return m;
}

// Checks d(loss)/d(every entry of every input) against central differences.
// `build` maps the current parameter values to a scalar loss on a fresh
// tape; `analytic` runs one tape construction + backward and returns the
// gradients in input order.
void check_gradients(std::vector<Mat>& params,
                     const std::function<double(const std::vector<Mat>&)>& f,
                     const std::vector<Mat>& analytic, double tol = 1e-6) {
  REQUIRE(analytic.size() == params.size());
  for (std::size_t p = 0; p < params.size(); ++p) {
    REQUIRE(analytic[p].rows() == params[p].rows());
    REQUIRE(analytic[p].cols() == params[p].cols());
    for (int i = 0; i < params[p].rows(); ++i) {
      for (int j = 0; j < params[p].cols(); ++j) {
        const double fd = ad::central_difference(
            [&]() { return f(params); }, &params[p](i, j));
        const double got = analytic[p](i, j);
        const double denom = std::max({1.0, std::abs(fd), std::abs(got)});
        CHECK(std::abs(fd - got) / denom < tol);
      }
    }
  }
}

// Runs `graph` on a fresh tape over the given inputs and returns the scalar
// value plus gradients for each input.
std::pair<double, std::vector<Mat>> run_graph(
    const std::vector<Mat>& inputs,
    const std::function<Var(Tape&, const std::vector<Var>&)>& graph) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (const Mat& m : inputs) vars.push_back(tape.param(m));
  const Var loss = graph(tape, vars);
  tape.backward(loss);
  std::vector<Mat> grads;
  grads.reserve(inputs.size());
  for (const Var& v : vars) grads.push_back(tape.grad(v));
  return {tape.value(loss)(0, 0), grads};
}

void gate(std::vector<Mat> inputs,
          const std::function<Var(Tape&, const std::vector<Var>&)>& graph,
          double tol = 1e-6) {
  auto [value, grads] = run_graph(inputs, graph);
  (void)value;
  check_gradients(
      inputs, [&](const std::vector<Mat>& xs) { return run_graph(xs, graph).first; },
      grads, tol);
}

}  // namespace

TEST_CASE("matmul add sub gradients") {
  Rng rng(3);
  gate({random_mat(rng, 3, 4), random_mat(rng, 4, 2), random_mat(rng, 3, 2)},
       [](Tape& t, const std::vector<Var>& v) {
         return t.sum(t.sub(t.matmul(v[0], v[1]), v[2]));
       });
  gate({random_mat(rng, 2, 5), random_mat(rng, 2, 5)},
       [](Tape& t, const std::vector<Var>& v) {
         return t.mean(t.square(t.add(v[0], v[1])));
       });
}

TEST_CASE("hadamard and broadcast gradients") {
  Rng rng(5);
  gate({random_mat(rng, 4, 3), random_mat(rng, 4, 3)},
       [](Tape& t, const std::vector<Var>& v) {
         return t.sum(t.hadamard(v[0], v[1]));
       });
  gate({random_mat(rng, 4, 3), random_mat(rng, 1, 3)},
       [](Tape& t, const std::vector<Var>& v) {
         return t.sum(t.square(t.add_rowvec(v[0], v[1])));
       });
  gate({random_mat(rng, 4, 3), random_mat(rng, 4, 1)},
       [](Tape& t, const std::vector<Var>& v) {
         return t.sum(t.square(t.mul_colvec(v[0], v[1])));
       });
}

TEST_CASE("scalar ops transpose slices gradients") {
  Rng rng(7);
  gate({random_mat(rng, 3, 3)}, [](Tape& t, const std::vector<Var>& v) {
    return t.sum(t.add_scalar(t.scale(v[0], -2.5), 0.75));
  });
  gate({random_mat(rng, 2, 6)}, [](Tape& t, const std::vector<Var>& v) {
    return t.sum(t.square(t.transpose(v[0])));
  });
  gate({random_mat(rng, 3, 6)}, [](Tape& t, const std::vector<Var>& v) {
    const Var left = t.slice_cols(v[0], 0, 2);
    const Var right = t.slice_cols(v[0], 2, 4);
    return t.sum(t.matmul(t.transpose(left), t.square(right)));
  });
  gate({random_mat(rng, 3, 2), random_mat(rng, 3, 3)},
       [](Tape& t, const std::vector<Var>& v) {
         return t.sum(t.square(t.concat_cols({v[0], v[1]})));
       });
}

TEST_CASE("nonlinearity gradients") {
  Rng rng(9);
  gate({random_mat(rng, 3, 4)}, [](Tape& t, const std::vector<Var>& v) {
    return t.sum(t.tanh(v[0]));
  });
  gate({random_mat(rng, 3, 4)}, [](Tape& t, const std::vector<Var>& v) {
    return t.sum(t.sigmoid(v[0]));
  });
  gate({random_mat(rng, 4, 5)}, [](Tape& t, const std::vector<Var>& v) {
    return t.sum(t.square(t.softmax_rows(v[0])));
  });
}

TEST_CASE("gather and log softmax pick gradients") {
  Rng rng(11);
  const std::vector<int> rows = {2, 0, 2, 1};
  gate({random_mat(rng, 3, 4)}, [&](Tape& t, const std::vector<Var>& v) {
    return t.sum(t.square(t.gather_rows(v[0], rows)));
  });
  const std::vector<int> targets = {1, 3, 0};
  gate({random_mat(rng, 3, 4)}, [&](Tape& t, const std::vector<Var>& v) {
    return t.sum(t.log_softmax_pick(v[0], targets));
  });
  // Weighted pick, as used by the policy loss.
  gate({random_mat(rng, 3, 4), random_mat(rng, 3, 1)},
       [&](Tape& t, const std::vector<Var>& v) {
         return t.sum(t.hadamard(t.log_softmax_pick(v[0], targets), v[1]));
       });
}

TEST_CASE("log softmax pick values") {
  Tape tape;
  Mat logits(2, 3);
  logits << 1.0, 2.0, 3.0, -1.0, 0.0, 1.0;
  const Var lp = tape.log_softmax_pick(tape.constant(logits), {2, 0});
  const double z0 = std::log(std::exp(1.0) + std::exp(2.0) + std::exp(3.0));
  const double z1 = std::log(std::exp(-1.0) + std::exp(0.0) + std::exp(1.0));
  CHECK(tape.value(lp)(0, 0) == doctest::Approx(3.0 - z0).epsilon(1e-12));
  CHECK(tape.value(lp)(1, 0) == doctest::Approx(-1.0 - z1).epsilon(1e-12));
}

TEST_CASE("constants do not accumulate gradients") {
  Tape tape;
  const Var c = tape.constant(Mat::Ones(2, 2));
  const Var p = tape.param(Mat::Ones(2, 2));
  const Var loss = tape.sum(tape.hadamard(c, p));
  tape.backward(loss);
  CHECK(tape.grad(p).sum() == doctest::Approx(4.0));
  CHECK_FALSE(tape.requires_grad(c));
}

TEST_CASE("chamfer op value matches geometry module") {
  Rng rng(13);
  const Mat a = random_mat(rng, 6, 3, 2.0);
  const Mat b = random_mat(rng, 9, 3, 2.0);

  geom::PointCloud ca, cb;
  for (int i = 0; i < a.rows(); ++i) ca.points.push_back(a.row(i).transpose());
  for (int i = 0; i < b.rows(); ++i) cb.points.push_back(b.row(i).transpose());

  Tape tape;
  const Var d = tape.chamfer(tape.constant(a), tape.constant(b));
  CHECK(tape.value(d)(0, 0) ==
        doctest::Approx(geom::chamfer_distance(ca, cb)).epsilon(1e-12));
}

TEST_CASE("chamfer gradients match central differences") {
  Rng rng(17);
  gate({random_mat(rng, 5, 3, 2.0), random_mat(rng, 7, 3, 2.0)},
       [](Tape& t, const std::vector<Var>& v) {
         return t.chamfer(v[0], v[1]);
       },
       1e-5);
}

TEST_CASE("kabsch align forward matches geometry module") {
  Rng rng(19);
  Mat query = random_mat(rng, 8, 3, 2.0);
  query.rowwise() -= query.colwise().mean();
  const Mat pseudo = random_mat(rng, 8, 3, 2.0);

  Tape tape;
  Eigen::Matrix3d rot;
  Eigen::Vector3d trans;
  const Var aligned =
      tape.kabsch_align(tape.constant(pseudo), query, &rot, &trans);

  geom::PointCloud p, q;
  for (int i = 0; i < query.rows(); ++i) {
    p.points.push_back(query.row(i).transpose());
    q.points.push_back(pseudo.row(i).transpose());
  }
  const geom::RigidTransform ref = geom::kabsch(p, q);
  CHECK((rot - ref.rotation).norm() < 1e-9);
  CHECK((trans - ref.translation).norm() < 1e-9);
  CHECK(rot.determinant() == doctest::Approx(1.0).epsilon(1e-9));

  const Mat expect = (query * ref.rotation.transpose()).rowwise() +
                     ref.translation.transpose();
  CHECK((tape.value(aligned) - expect).norm() < 1e-9);
}

TEST_CASE("kabsch align zero pseudo coordinates still yields a rotation") {
  Rng rng(23);
  Mat query = random_mat(rng, 6, 3);
  query.rowwise() -= query.colwise().mean();

  Tape tape;
  Eigen::Matrix3d rot;
  Eigen::Vector3d trans;
  const Var aligned =
      tape.kabsch_align(tape.constant(Mat::Zero(6, 3)), query, &rot, &trans);
  CHECK(rot.determinant() == doctest::Approx(1.0).epsilon(1e-9));
  CHECK((rot * rot.transpose() - Eigen::Matrix3d::Identity()).norm() < 1e-9);
  CHECK(trans.norm() < 1e-12);
  CHECK(tape.value(aligned).rows() == 6);
}

TEST_CASE("kabsch align gradients match central differences") {
  Rng rng(29);
  Mat query = random_mat(rng, 7, 3, 2.0);
  query.rowwise() -= query.colwise().mean();

  gate({random_mat(rng, 7, 3, 2.0)},
       [&](Tape& t, const std::vector<Var>& v) {
         return t.mean(t.square(t.kabsch_align(v[0], query)));
       },
       1e-4);
}

TEST_CASE("aligner style loss gradient end to end") {
  // Pseudo-coordinates produced by a tiny linear map of the query, then
  // Kabsch + chamfer against a rotated reference: the exact spine of the
  // aligner loss, checked against finite differences.
  Rng rng(31);
  Mat query = random_mat(rng, 6, 3, 1.5);
  query.rowwise() -= query.colwise().mean();
  Mat reference = random_mat(rng, 8, 3, 1.5);
  reference.rowwise() -= reference.colwise().mean();

  gate({random_mat(rng, 3, 3, 0.5), random_mat(rng, 1, 3, 0.2)},
       [&](Tape& t, const std::vector<Var>& v) {
         const Var pseudo =
             t.add_rowvec(t.matmul(t.constant(query), v[0]), v[1]);
         const Var aligned = t.kabsch_align(pseudo, query);
         return t.chamfer(aligned, t.constant(reference));
       },
       1e-4);
}

TEST_CASE("backward requires a scalar") {
  Tape tape;
  const Var p = tape.param(Mat::Ones(2, 2));
  CHECK_THROWS_AS(tape.backward(p), shapelinker::NumericError);
}
