#include "shapelinker/aligner.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <limits>

#include "shapelinker/errors.hpp"
#include "shapelinker/rng.hpp"

namespace shapelinker::aligner {

namespace {

using ad::Mat;
using ad::Tape;
using ad::Var;
using geom::PointCloud;
using geom::Vec3;

Mat to_mat(const PointCloud& cloud) {
  Mat m(static_cast<Eigen::Index>(cloud.size()), 3);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    m.row(static_cast<Eigen::Index>(i)) = cloud.points[i].transpose();
  }
  return m;
}

PointCloud to_cloud(const Mat& m) {
  PointCloud c;
  c.points.reserve(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    c.points.emplace_back(m.row(i).transpose());
  }
  return c;
}

struct AttnVars {
  Var wq, bq, wk, bk, wv, bv, wo, bo;
};

struct ModelVars {
  Var input_w, input_b;
  AttnVars self_attn;
  AttnVars cross_attn;
  Var output_w, output_b;
};

// Registers every parameter on the tape, as trainable params or constants.
ModelVars register_model(Tape& tape, const AlignerModel& m, bool trainable) {
  const auto reg = [&](const Mat& v) {
    return trainable ? tape.param(v) : tape.constant(v);
  };
  ModelVars out{
      reg(m.input_w),
      reg(m.input_b),
      {reg(m.self_attn.wq), reg(m.self_attn.bq), reg(m.self_attn.wk),
       reg(m.self_attn.bk), reg(m.self_attn.wv), reg(m.self_attn.bv),
       reg(m.self_attn.wo), reg(m.self_attn.bo)},
      {reg(m.cross_attn.wq), reg(m.cross_attn.bq), reg(m.cross_attn.wk),
       reg(m.cross_attn.bk), reg(m.cross_attn.wv), reg(m.cross_attn.bv),
       reg(m.cross_attn.wo), reg(m.cross_attn.bo)},
      reg(m.output_w),
      reg(m.output_b),
  };
  return out;
}

// Tape vars in named_params order.
std::vector<Var> ordered_vars(const ModelVars& v) {
  return {v.input_w,       v.input_b,       v.self_attn.wq,  v.self_attn.bq,
          v.self_attn.wk,  v.self_attn.bk,  v.self_attn.wv,  v.self_attn.bv,
          v.self_attn.wo,  v.self_attn.bo,  v.cross_attn.wq, v.cross_attn.bq,
          v.cross_attn.wk, v.cross_attn.bk, v.cross_attn.wv, v.cross_attn.bv,
          v.cross_attn.wo, v.cross_attn.bo, v.output_w,      v.output_b};
}

void check_finite(const Tape& tape, Var v, const char* layer) {
  if (!tape.value(v).allFinite()) {
    throw NumericError(std::string("aligner forward: non-finite activation "
                                   "in ") +
                       layer);
  }
}

// Full multi-head attention: queries from x_q, keys/values from x_kv.
Var attention(Tape& t, const AttnVars& p, Var x_q, Var x_kv, int d_a, int h) {
  const int dh = d_a / h;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  const Var q = t.add_rowvec(t.matmul(x_q, p.wq), p.bq);
  const Var k = t.add_rowvec(t.matmul(x_kv, p.wk), p.bk);
  const Var v = t.add_rowvec(t.matmul(x_kv, p.wv), p.bv);
  std::vector<Var> heads;
  heads.reserve(static_cast<std::size_t>(h));
  for (int i = 0; i < h; ++i) {
    const Var qh = t.slice_cols(q, i * dh, dh);
    const Var kh = t.slice_cols(k, i * dh, dh);
    const Var vh = t.slice_cols(v, i * dh, dh);
    const Var scores = t.scale(t.matmul(qh, t.transpose(kh)), inv_sqrt);
    heads.push_back(t.matmul(t.softmax_rows(scores), vh));
  }
  return t.add_rowvec(t.matmul(t.concat_cols(heads), p.wo), p.bo);
}

struct ForwardOut {
  Var pseudo;
  Var aligned;
  Var loss;
  Eigen::Matrix3d rotation;
  Eigen::Vector3d translation;
};

// The full differentiable pipeline on centered clouds.
ForwardOut forward_graph(Tape& tape, const ModelVars& vars,
                         const Mat& query_centered, const Mat& ref_centered,
                         int d_a, int h) {
  const Var q_in = tape.constant(query_centered);
  const Var r_in = tape.constant(ref_centered);

  const Var xq =
      tape.add_rowvec(tape.matmul(q_in, vars.input_w), vars.input_b);
  const Var xr =
      tape.add_rowvec(tape.matmul(r_in, vars.input_w), vars.input_b);
  check_finite(tape, xq, "input linear (query)");
  check_finite(tape, xr, "input linear (reference)");

  const Var aq = attention(tape, vars.self_attn, xq, xq, d_a, h);
  const Var ar = attention(tape, vars.self_attn, xr, xr, d_a, h);
  check_finite(tape, aq, "self-attention (query)");
  check_finite(tape, ar, "self-attention (reference)");

  const Var cross = attention(tape, vars.cross_attn, aq, ar, d_a, h);
  check_finite(tape, cross, "cross-attention");

  const Var pseudo = tape.add_rowvec(tape.matmul(cross, vars.output_w),
                                     vars.output_b);
  check_finite(tape, pseudo, "output linear");

  ForwardOut out;
  out.pseudo = pseudo;
  out.aligned = tape.kabsch_align(pseudo, query_centered, &out.rotation,
                                  &out.translation);
  check_finite(tape, out.aligned, "kabsch superposition");
  out.loss = tape.chamfer(out.aligned, tape.constant(ref_centered));
  check_finite(tape, out.loss, "chamfer loss");
  return out;
}

struct CenteredPair {
  Mat query;
  Mat reference;
  Vec3 query_centroid;
  Vec3 reference_centroid;
};

CenteredPair center_inputs(const PointCloud& query,
                           const PointCloud& reference) {
  if (query.empty()) throw InvalidInputError("aligner: empty query cloud");
  if (reference.empty()) {
    throw InvalidInputError("aligner: empty reference cloud");
  }
  auto [qc, qcen] = geom::center_to_origin(query);
  auto [rc, rcen] = geom::center_to_origin(reference);
  return {to_mat(qc), to_mat(rc), qcen, rcen};
}

AlignmentResult result_from(const Tape& tape, const ForwardOut& fwd,
                            const CenteredPair& pair) {
  AlignmentResult res;
  res.transform.rotation = fwd.rotation;
  res.transform.translation = fwd.translation;
  res.chamfer = tape.value(fwd.loss)(0, 0);
  res.pseudo_coords = to_cloud(tape.value(fwd.pseudo));
  res.aligned_coords = to_cloud(tape.value(fwd.aligned));
  res.query_centroid = pair.query_centroid;
  res.reference_centroid = pair.reference_centroid;
  return res;
}

Eigen::Matrix3d random_rotation(Rng& rng) {
  Vec3 axis(rng.normal(), rng.normal(), rng.normal());
  while (axis.norm() < 1e-9) {
    axis = Vec3(rng.normal(), rng.normal(), rng.normal());
  }
  axis.normalize();
  return Eigen::AngleAxisd(rng.uniform(0.0, 2.0 * M_PI), axis)
      .toRotationMatrix();
}

}  // namespace

void AlignerModel::validate() const {
  if (d_a < 1 || h < 1 || d_a % h != 0) {
    throw InvalidInputError(
        "aligner: embedding dim must be a positive multiple of the head "
        "count");
  }
  AlignerModel copy = *this;
  for (const auto& [name, mat] : named_params(copy)) {
    if (!mat->allFinite()) {
      throw InvalidInputError("aligner: non-finite parameter " + name);
    }
  }
  if (input_w.rows() != 3 || input_w.cols() != d_a || output_w.rows() != d_a ||
      output_w.cols() != 3) {
    throw InvalidInputError("aligner: parameter shapes do not match d_a");
  }
}

AlignerModel init_model(int d_a, int h, std::uint64_t seed) {
  if (d_a < 1 || h < 1 || d_a % h != 0) {
    throw InvalidInputError(
        "aligner: embedding dim must be a positive multiple of the head "
        "count");
  }
  AlignerModel m;
  m.d_a = d_a;
  m.h = h;
  Rng rng(substream_seed(seed, "aligner/init"));
  const auto dense = [&](int rows, int cols) {
    Mat w(rows, cols);
    const double scale = 1.0 / std::sqrt(static_cast<double>(rows));
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < cols; ++j) w(i, j) = rng.normal() * scale;
    }
    return w;
  };
  const auto attn = [&]() {
    AttentionParams p;
    p.wq = dense(d_a, d_a);
    p.bq = Mat::Zero(1, d_a);
    p.wk = dense(d_a, d_a);
    p.bk = Mat::Zero(1, d_a);
    p.wv = dense(d_a, d_a);
    p.bv = Mat::Zero(1, d_a);
    p.wo = dense(d_a, d_a);
    p.bo = Mat::Zero(1, d_a);
    return p;
  };
  m.input_w = dense(3, d_a);
  m.input_b = Mat::Zero(1, d_a);
  m.self_attn = attn();
  m.cross_attn = attn();
  m.output_w = dense(d_a, 3);
  m.output_b = Mat::Zero(1, 3);
  return m;
}

std::vector<std::pair<std::string, ad::Mat*>> named_params(AlignerModel& m) {
  return {
      {"input.w", &m.input_w},        {"input.b", &m.input_b},
      {"self.wq", &m.self_attn.wq},   {"self.bq", &m.self_attn.bq},
      {"self.wk", &m.self_attn.wk},   {"self.bk", &m.self_attn.bk},
      {"self.wv", &m.self_attn.wv},   {"self.bv", &m.self_attn.bv},
      {"self.wo", &m.self_attn.wo},   {"self.bo", &m.self_attn.bo},
      {"cross.wq", &m.cross_attn.wq}, {"cross.bq", &m.cross_attn.bq},
      {"cross.wk", &m.cross_attn.wk}, {"cross.bk", &m.cross_attn.bk},
      {"cross.wv", &m.cross_attn.wv}, {"cross.bv", &m.cross_attn.bv},
      {"cross.wo", &m.cross_attn.wo}, {"cross.bo", &m.cross_attn.bo},
      {"out.w", &m.output_w},         {"out.b", &m.output_b},
  };
}

std::vector<std::pair<std::string, const ad::Mat*>> named_params(
    const AlignerModel& m) {
  std::vector<std::pair<std::string, const ad::Mat*>> out;
  auto& mutable_m = const_cast<AlignerModel&>(m);
  for (const auto& [name, mat] : named_params(mutable_m)) {
    out.emplace_back(name, mat);
  }
  return out;
}

AlignmentResult align(const AlignerModel& model, const PointCloud& query,
                      const PointCloud& reference) {
  model.validate();
  const CenteredPair pair = center_inputs(query, reference);
  Tape tape;
  const ModelVars vars = register_model(tape, model, false);
  const ForwardOut fwd =
      forward_graph(tape, vars, pair.query, pair.reference, model.d_a,
                    model.h);
  return result_from(tape, fwd, pair);
}

std::pair<double, std::vector<Mat>> loss_and_grads(
    const AlignerModel& model, const PointCloud& query,
    const PointCloud& reference) {
  model.validate();
  const CenteredPair pair = center_inputs(query, reference);
  Tape tape;
  const ModelVars vars = register_model(tape, model, true);
  const ForwardOut fwd =
      forward_graph(tape, vars, pair.query, pair.reference, model.d_a,
                    model.h);
  tape.backward(fwd.loss);

  std::vector<Mat> grads;
  for (const Var& v : ordered_vars(vars)) {
    if (!tape.grad(v).allFinite()) {
      throw NumericError("aligner backward: non-finite gradient");
    }
    grads.push_back(tape.grad(v));
  }
  return {tape.value(fwd.loss)(0, 0), std::move(grads)};
}

Vec3 transform_point(const AlignmentResult& result, const Vec3& p) {
  return result.transform.apply(p - result.query_centroid) +
         result.reference_centroid;
}

surface::AtomSet transform_atoms(const AlignmentResult& result,
                                 const surface::AtomSet& atoms) {
  surface::AtomSet out = atoms;
  for (surface::Atom& a : out.atoms) {
    a.position = transform_point(result, a.position);
  }
  return out;
}

namespace {

double anchored_rmsd(const AlignmentResult& res, const Mat& ref_centered,
                     const AnchorPairs& anchors) {
  if (anchors.empty()) {
    throw InvalidInputError("realign: anchor pairs must be non-empty");
  }
  double acc = 0.0;
  for (const auto& [qi, ri] : anchors) {
    const Vec3 a = res.aligned_coords.points.at(static_cast<std::size_t>(qi));
    const Vec3 b = ref_centered.row(ri).transpose();
    acc += (a - b).squaredNorm();
  }
  return std::sqrt(acc / static_cast<double>(anchors.size()));
}

// Splits scalar values into two clusters by 2-means. Returns the threshold
// separating the modes, or an empty optional when the spread is below the
// single-mode gap.
struct ModeSplit {
  bool bimodal = false;
  double threshold = 0.0;
};

ModeSplit split_modes(const std::vector<double>& values) {
  const auto [mn_it, mx_it] = std::minmax_element(values.begin(), values.end());
  const double mn = *mn_it, mx = *mx_it;
  ModeSplit out;
  if (mx - mn < 1.0) return out;  // one mode: spread under 1 angstrom
  double lo = mn, hi = mx;
  for (int iter = 0; iter < 10; ++iter) {
    double lo_sum = 0.0, hi_sum = 0.0;
    int lo_n = 0, hi_n = 0;
    for (const double v : values) {
      if (std::abs(v - lo) <= std::abs(v - hi)) {
        lo_sum += v;
        ++lo_n;
      } else {
        hi_sum += v;
        ++hi_n;
      }
    }
    if (lo_n == 0 || hi_n == 0) break;
    lo = lo_sum / lo_n;
    hi = hi_sum / hi_n;
  }
  out.bimodal = true;
  out.threshold = 0.5 * (lo + hi);
  return out;
}

}  // namespace

std::vector<AlignmentResult> realign_flips_with(
    const AlignFn& align_fn, const std::vector<PointCloud>& conformers,
    const PointCloud& reference, const AnchorPairs& anchors,
    std::uint64_t seed, int* iterations_out) {
  if (conformers.empty()) {
    throw InvalidInputError("realign: no conformer clouds");
  }
  const Mat ref_centered = to_mat(geom::center_to_origin(reference).first);

  std::vector<AlignmentResult> results;
  std::vector<double> rmsds;
  results.reserve(conformers.size());
  rmsds.reserve(conformers.size());
  for (const PointCloud& c : conformers) {
    results.push_back(align_fn(c, 0));
    rmsds.push_back(anchored_rmsd(results.back(), ref_centered, anchors));
  }

  int iterations = 0;
  if (conformers.size() >= 2) {
    Rng rng(substream_seed(seed, "aligner/realign"));
    while (iterations < 5) {
      const ModeSplit split = split_modes(rmsds);
      if (!split.bimodal) break;
      std::size_t low = 0;
      for (const double r : rmsds) low += r <= split.threshold ? 1 : 0;
      if (static_cast<double>(low) >=
          0.9 * static_cast<double>(rmsds.size())) {
        break;
      }
      ++iterations;
      for (std::size_t i = 0; i < conformers.size(); ++i) {
        if (rmsds[i] <= split.threshold) continue;
        std::uint64_t pseed = rng.next_u64();
        while (pseed == 0) pseed = rng.next_u64();
        const AlignmentResult candidate = align_fn(conformers[i], pseed);
        const double r = anchored_rmsd(candidate, ref_centered, anchors);
        if (r < rmsds[i]) {
          results[i] = candidate;
          rmsds[i] = r;
        }
      }
    }
  }
  if (iterations_out) *iterations_out = iterations;
  return results;
}

std::vector<AlignmentResult> realign_flips(
    const AlignerModel& model, const std::vector<PointCloud>& conformers,
    const PointCloud& reference, const AnchorPairs& anchors,
    std::uint64_t seed, int* iterations_out) {
  const AlignFn fn = [&](const PointCloud& cloud, std::uint64_t pseed) {
    if (pseed == 0) return align(model, cloud, reference);
    // Re-run on a randomly rotated copy (about the cloud centroid) and fold
    // the perturbation into the returned transform so it still maps the
    // original centered query.
    Rng rng(pseed);
    const Eigen::Matrix3d r0 = random_rotation(rng);
    const Vec3 centroid = geom::centroid(cloud);
    PointCloud rotated = cloud;
    for (Vec3& p : rotated.points) p = r0 * (p - centroid) + centroid;
    AlignmentResult res = align(model, rotated, reference);
    res.transform.rotation = res.transform.rotation * r0;
    res.query_centroid = centroid;
    return res;
  };
  return realign_flips_with(fn, conformers, reference, anchors, seed,
                            iterations_out);
}

AlignmentResult ransac_align(const PointCloud& query,
                             const PointCloud& reference, int iterations,
                             double inlier_threshold, std::uint64_t seed) {
  if (query.size() < 3 || reference.size() < 3) {
    throw InvalidInputError("ransac: both clouds need at least 3 points");
  }
  if (iterations < 1) {
    throw InvalidInputError("ransac: iterations must be >= 1");
  }
  auto [q_centered, q_centroid] = geom::center_to_origin(query);
  auto [r_centered, r_centroid] = geom::center_to_origin(reference);

  Rng rng(substream_seed(seed, "aligner/ransac"));
  geom::RigidTransform best;
  double best_chamfer = std::numeric_limits<double>::infinity();

  const auto consider = [&](const geom::RigidTransform& t) {
    const double c = geom::chamfer_distance(t.apply(q_centered), r_centered);
    if (c < best_chamfer) {
      best_chamfer = c;
      best = t;
    }
  };

  for (int iter = 0; iter < iterations; ++iter) {
    PointCloud p3, q3;
    for (int k = 0; k < 3; ++k) {
      p3.points.push_back(
          q_centered.points[rng.uniform_index(q_centered.size())]);
      q3.points.push_back(
          r_centered.points[rng.uniform_index(r_centered.size())]);
    }
    const geom::RigidTransform hyp = geom::kabsch(p3, q3);
    consider(hyp);

    // One refinement on nearest-neighbor inliers of this hypothesis.
    const PointCloud moved = hyp.apply(q_centered);
    PointCloud in_q, in_r;
    for (std::size_t i = 0; i < moved.size(); ++i) {
      double bd = std::numeric_limits<double>::infinity();
      std::size_t bj = 0;
      for (std::size_t j = 0; j < r_centered.size(); ++j) {
        const double d = (moved.points[i] - r_centered.points[j]).squaredNorm();
        if (d < bd) {
          bd = d;
          bj = j;
        }
      }
      if (bd < inlier_threshold * inlier_threshold) {
        in_q.points.push_back(q_centered.points[i]);
        in_r.points.push_back(r_centered.points[bj]);
      }
    }
    if (in_q.size() >= 3) {
      consider(geom::kabsch(in_q, in_r));
    }
  }

  AlignmentResult res;
  res.transform = best;
  res.chamfer = best_chamfer;
  res.aligned_coords = best.apply(q_centered);
  res.query_centroid = q_centroid;
  res.reference_centroid = r_centroid;
  return res;
}

}  // namespace shapelinker::aligner
