#include "shapelinker/autodiff.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <utility>

#include "shapelinker/errors.hpp"
#include "shapelinker/geom.hpp"

namespace shapelinker::ad {

namespace {

// Clamp used on singular-value gaps in the SVD differential; keeps the
// backward pass finite on near-degenerate spectra at the cost of a bounded
// local error (still inside the finite-difference gate).
constexpr double kSvdJitter = 1e-8;

double clamp_gap(double denom) {
  if (std::abs(denom) >= kSvdJitter) return denom;
  return denom < 0.0 ? -kSvdJitter : kSvdJitter;
}

}  // namespace

Var Tape::emplace(Mat value, bool requires_grad,
                  std::function<void()> backward) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

void Tape::ensure_grad(int id) {
  Node& n = nodes_[id];
  if (n.grad.rows() != n.value.rows() || n.grad.cols() != n.value.cols()) {
    n.grad = Mat::Zero(n.value.rows(), n.value.cols());
  }
}

Var Tape::constant(Mat value) { return emplace(std::move(value), false, {}); }

Var Tape::param(Mat value) {
  Var v = emplace(std::move(value), true, {});
  ensure_grad(v.id);
  return v;
}

void Tape::backward(Var output) {
  if (value(output).size() != 1) {
    throw NumericError("backward: output must be a scalar node");
  }
  for (Node& n : nodes_) {
    if (n.requires_grad) {
      n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    }
  }
  nodes_[output.id].grad(0, 0) = 1.0;
  for (int i = output.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.requires_grad && n.backward) n.backward();
  }
}

Var Tape::matmul(Var a, Var b) {
  Mat out = value(a) * value(b);
  const int aid = a.id, bid = b.id;
  const int oid = static_cast<int>(nodes_.size());
  const bool rg = requires_grad(a) || requires_grad(b);
  std::function<void()> bw;
  if (rg) {
    bw = [this, aid, bid, oid]() {
      const Mat& g = nodes_[oid].grad;
      if (nodes_[aid].requires_grad) {
        nodes_[aid].grad += g * nodes_[bid].value.transpose();
      }
      if (nodes_[bid].requires_grad) {
        nodes_[bid].grad += nodes_[aid].value.transpose() * g;
      }
    };
  }
  return emplace(std::move(out), rg, std::move(bw));
}

Var Tape::add(Var a, Var b) {
  Mat out = value(a) + value(b);
  const int aid = a.id, bid = b.id;
  const int oid = static_cast<int>(nodes_.size());
  const bool rg = requires_grad(a) || requires_grad(b);
  std::function<void()> bw;
  if (rg) {
    bw = [this, aid, bid, oid]() {
      const Mat& g = nodes_[oid].grad;
      if (nodes_[aid].requires_grad) nodes_[aid].grad += g;
      if (nodes_[bid].requires_grad) nodes_[bid].grad += g;
    };
  }
  return emplace(std::move(out), rg, std::move(bw));
}

Var Tape::sub(Var a, Var b) {
  Mat out = value(a) - value(b);
  const int aid = a.id, bid = b.id;
  const int oid = static_cast<int>(nodes_.size());
  const bool rg = requires_grad(a) || requires_grad(b);
  std::function<void()> bw;
  if (rg) {
    bw = [this, aid, bid, oid]() {
      const Mat& g = nodes_[oid].grad;
      if (nodes_[aid].requires_grad) nodes_[aid].grad += g;
      if (nodes_[bid].requires_grad) nodes_[bid].grad -= g;
    };
  }
  return emplace(std::move(out), rg, std::move(bw));
}

Var Tape::hadamard(Var a, Var b) {
  Mat out = value(a).cwiseProduct(value(b));
  const int aid = a.id, bid = b.id;
  const int oid = static_cast<int>(nodes_.size());
  const bool rg = requires_grad(a) || requires_grad(b);
  std::function<void()> bw;
  if (rg) {
    bw = [this, aid, bid, oid]() {
      const Mat& g = nodes_[oid].grad;
      if (nodes_[aid].requires_grad) {
        nodes_[aid].grad += g.cwiseProduct(nodes_[bid].value);
      }
      if (nodes_[bid].requires_grad) {
        nodes_[bid].grad += g.cwiseProduct(nodes_[aid].value);
      }
    };
  }
  return emplace(std::move(out), rg, std::move(bw));
}

Var Tape::add_rowvec(Var a, Var row) {
  Mat out = value(a).rowwise() + value(row).row(0);
  const int aid = a.id, rid = row.id;
  const int oid = static_cast<int>(nodes_.size());
  const bool rg = requires_grad(a) || requires_grad(row);
  std::function<void()> bw;
  if (rg) {
    bw = [this, aid, rid, oid]() {
      const Mat& g = nodes_[oid].grad;
      if (nodes_[aid].requires_grad) nodes_[aid].grad += g;
      if (nodes_[rid].requires_grad) {
        nodes_[rid].grad += g.colwise().sum();
      }
    };
  }
  return emplace(std::move(out), rg, std::move(bw));
}

Var Tape::mul_colvec(Var a, Var col) {
  Mat out =
      (value(a).array().colwise() * value(col).col(0).array()).matrix();
  const int aid = a.id, cid = col.id;
  const int oid = static_cast<int>(nodes_.size());
  const bool rg = requires_grad(a) || requires_grad(col);
  std::function<void()> bw;
  if (rg) {
    bw = [this, aid, cid, oid]() {
      const Mat& g = nodes_[oid].grad;
      if (nodes_[aid].requires_grad) {
        nodes_[aid].grad.array() +=
            g.array().colwise() * nodes_[cid].value.col(0).array();
      }
      if (nodes_[cid].requires_grad) {
        nodes_[cid].grad +=
            g.cwiseProduct(nodes_[aid].value).rowwise().sum();
      }
    };
  }
  return emplace(std::move(out), rg, std::move(bw));
}

Var Tape::scale(Var a, double s) {
  Mat out = value(a) * s;
  const int aid = a.id;
  const int oid = static_cast<int>(nodes_.size());
  const bool rg = requires_grad(a);
  std::function<void()> bw;
  if (rg) {
    bw = [this, aid, oid, s]() { nodes_[aid].grad += nodes_[oid].grad * s; };
  }
  return emplace(std::move(out), rg, std::move(bw));
}

Var Tape::add_scalar(Var a, double s) {
  Mat out = (value(a).array() + s).matrix();
  const int aid = a.id;
  const int oid = static_cast<int>(nodes_.size());
  const bool rg = requires_grad(a);
  std::function<void()> bw;
  if (rg) {
    bw = [this, aid, oid]() { nodes_[aid].grad += nodes_[oid].grad; };
  }
  return emplace(std::move(out), rg, std::move(bw));
}

Var Tape::transpose(Var a) {
  Mat out = value(a).transpose();
  const int aid = a.id;
  const int oid = static_cast<int>(nodes_.size());
  const bool rg = requires_grad(a);
  std::function<void()> bw;
  if (rg) {
    bw = [this, aid, oid]() {
      nodes_[aid].grad += nodes_[oid].grad.transpose();
    };
  }
  return emplace(std::move(out), rg, std::move(bw));
}

Var Tape::softmax_rows(Var a) {
  const Mat& x = value(a);
  Mat out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).maxCoeff();
    out.row(i) = (x.row(i).array() - m).exp().matrix();
    out.row(i) /= out.row(i).sum();
  }
  const int aid = a.id;
  const int oid = static_cast<int>(nodes_.size());
  const bool rg = requires_grad(a);
  std::function<void()> bw;
  if (rg) {
    bw = [this, aid, oid]() {
      const Mat& g = nodes_[oid].grad;
      const Mat& y = nodes_[oid].value;
      Mat gy = g.cwiseProduct(y);
      const Eigen::VectorXd rowsums = gy.rowwise().sum();
      nodes_[aid].grad += gy - (y.array().colwise() * rowsums.array()).matrix();
    };
  }
  return emplace(std::move(out), rg, std::move(bw));
}

Var Tape::tanh(Var a) {
  Mat out = value(a).array().tanh().matrix();
  const int aid = a.id;
  const int oid = static_cast<int>(nodes_.size());
  const bool rg = requires_grad(a);
  std::function<void()> bw;
  if (rg) {
    bw = [this, aid, oid]() {
      const Mat& y = nodes_[oid].value;
      nodes_[aid].grad.array() +=
          nodes_[oid].grad.array() * (1.0 - y.array().square());
    };
  }
  return emplace(std::move(out), rg, std::move(bw));
}

Var Tape::sigmoid(Var a) {
  Mat out = (1.0 / (1.0 + (-value(a).array()).exp())).matrix();
  const int aid = a.id;
  const int oid = static_cast<int>(nodes_.size());
  const bool rg = requires_grad(a);
  std::function<void()> bw;
  if (rg) {
    bw = [this, aid, oid]() {
      const Mat& y = nodes_[oid].value;
      nodes_[aid].grad.array() +=
          nodes_[oid].grad.array() * y.array() * (1.0 - y.array());
    };
  }
  return emplace(std::move(out), rg, std::move(bw));
}

Var Tape::square(Var a) {
  Mat out = value(a).array().square().matrix();
  const int aid = a.id;
  const int oid = static_cast<int>(nodes_.size());
  const bool rg = requires_grad(a);
  std::function<void()> bw;
  if (rg) {
    bw = [this, aid, oid]() {
      nodes_[aid].grad.array() +=
          2.0 * nodes_[oid].grad.array() * nodes_[aid].value.array();
    };
  }
  return emplace(std::move(out), rg, std::move(bw));
}

Var Tape::slice_cols(Var a, int first, int count) {
  Mat out = value(a).middleCols(first, count);
  const int aid = a.id;
  const int oid = static_cast<int>(nodes_.size());
  const bool rg = requires_grad(a);
  std::function<void()> bw;
  if (rg) {
    bw = [this, aid, oid, first, count]() {
      nodes_[aid].grad.middleCols(first, count) += nodes_[oid].grad;
    };
  }
  return emplace(std::move(out), rg, std::move(bw));
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  Eigen::Index rows = value(parts.front()).rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) cols += value(p).cols();
  Mat out(rows, cols);
  std::vector<int> ids;
  std::vector<int> offsets;
  bool rg = false;
  Eigen::Index off = 0;
  for (const Var& p : parts) {
    out.middleCols(off, value(p).cols()) = value(p);
    ids.push_back(p.id);
    offsets.push_back(static_cast<int>(off));
    off += value(p).cols();
    rg = rg || requires_grad(p);
  }
  const int oid = static_cast<int>(nodes_.size());
  std::function<void()> bw;
  if (rg) {
    bw = [this, ids, offsets, oid]() {
      const Mat& g = nodes_[oid].grad;
      for (std::size_t k = 0; k < ids.size(); ++k) {
        Node& in = nodes_[ids[k]];
        if (in.requires_grad) {
          in.grad += g.middleCols(offsets[k], in.value.cols());
        }
      }
    };
  }
  return emplace(std::move(out), rg, std::move(bw));
}

Var Tape::sum(Var a) {
  Mat out(1, 1);
  out(0, 0) = value(a).sum();
  const int aid = a.id;
  const int oid = static_cast<int>(nodes_.size());
  const bool rg = requires_grad(a);
  std::function<void()> bw;
  if (rg) {
    bw = [this, aid, oid]() {
      nodes_[aid].grad.array() += nodes_[oid].grad(0, 0);
    };
  }
  return emplace(std::move(out), rg, std::move(bw));
}

Var Tape::mean(Var a) {
  const double inv = 1.0 / static_cast<double>(value(a).size());
  Mat out(1, 1);
  out(0, 0) = value(a).sum() * inv;
  const int aid = a.id;
  const int oid = static_cast<int>(nodes_.size());
  const bool rg = requires_grad(a);
  std::function<void()> bw;
  if (rg) {
    bw = [this, aid, oid, inv]() {
      nodes_[aid].grad.array() += nodes_[oid].grad(0, 0) * inv;
    };
  }
  return emplace(std::move(out), rg, std::move(bw));
}

Var Tape::gather_rows(Var table, const std::vector<int>& rows) {
  const Mat& t = value(table);
  Mat out(static_cast<Eigen::Index>(rows.size()), t.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = t.row(rows[i]);
  }
  const int tid = table.id;
  const int oid = static_cast<int>(nodes_.size());
  const bool rg = requires_grad(table);
  std::function<void()> bw;
  if (rg) {
    bw = [this, tid, rows, oid]() {
      const Mat& g = nodes_[oid].grad;
      for (std::size_t i = 0; i < rows.size(); ++i) {
        nodes_[tid].grad.row(rows[i]) +=
            g.row(static_cast<Eigen::Index>(i));
      }
    };
  }
  return emplace(std::move(out), rg, std::move(bw));
}

Var Tape::log_softmax_pick(Var a, const std::vector<int>& targets) {
  const Mat& x = value(a);
  Mat soft(x.rows(), x.cols());
  Mat out(x.rows(), 1);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double m = x.row(i).maxCoeff();
    const Eigen::ArrayXd e = (x.row(i).transpose().array() - m).exp();
    const double z = e.sum();
    soft.row(i) = (e / z).matrix().transpose();
    out(i, 0) = x(i, targets[static_cast<std::size_t>(i)]) - m - std::log(z);
  }
  const int aid = a.id;
  const int oid = static_cast<int>(nodes_.size());
  const bool rg = requires_grad(a);
  std::function<void()> bw;
  if (rg) {
    bw = [this, aid, targets, soft, oid]() {
      const Mat& g = nodes_[oid].grad;
      Mat& da = nodes_[aid].grad;
      for (Eigen::Index i = 0; i < da.rows(); ++i) {
        da.row(i) -= g(i, 0) * soft.row(i);
        da(i, targets[static_cast<std::size_t>(i)]) += g(i, 0);
      }
    };
  }
  return emplace(std::move(out), rg, std::move(bw));
}

Var Tape::kabsch_align(Var pseudo, const Mat& query_centered,
                       Eigen::Matrix3d* rotation_out,
                       Eigen::Vector3d* translation_out) {
  const Mat& q = value(pseudo);
  const Mat& p = query_centered;
  if (q.cols() != 3 || p.cols() != 3 || q.rows() != p.rows()) {
    throw InvalidInputError("kabsch_align: shapes must match (n x 3)");
  }
  const Eigen::Index n = q.rows();
  const Eigen::RowVector3d q_bar = q.colwise().mean();
  const Mat qc = q.rowwise() - q_bar;
  const Eigen::Matrix3d h = p.transpose() * qc;

  const geom::Svd3 svd = geom::deterministic_svd3(h);
  const double det_sign = (svd.U * svd.V.transpose()).determinant();
  const Eigen::Vector3d d(1.0, 1.0, det_sign);
  const Eigen::Matrix3d rot =
      svd.V * d.asDiagonal() * svd.U.transpose();
  const Eigen::Vector3d trans = q_bar.transpose();

  Mat out = (p * rot.transpose()).rowwise() + trans.transpose();
  if (rotation_out) *rotation_out = rot;
  if (translation_out) *translation_out = trans;

  const int qid = pseudo.id;
  const int oid = static_cast<int>(nodes_.size());
  const bool rg = requires_grad(pseudo);
  std::function<void()> bw;
  if (rg) {
    const Eigen::Matrix3d u = svd.U;
    const Eigen::Matrix3d v = svd.V;
    const Eigen::Vector3d s = svd.S;
    const Mat p_copy = p;
    bw = [this, qid, oid, u, v, s, d, p_copy, n]() {
      const Mat& g = nodes_[oid].grad;  // n x 3

      // aligned = P R^T + 1 t^T
      const Eigen::Matrix3d r_bar = g.transpose() * p_copy;
      const Eigen::Vector3d t_bar = g.colwise().sum().transpose();

      // R = V D U^T
      const Eigen::Matrix3d u_bar = r_bar.transpose() * v * d.asDiagonal();
      const Eigen::Matrix3d v_bar = r_bar * u * d.asDiagonal();

      // SVD differential: H_bar = U [ (F o A) S + S (F o B) ] V^T with
      // A = U^T U_bar - U_bar^T U, B = V^T V_bar - V_bar^T V and
      // F_ij = 1 / (s_j^2 - s_i^2), gaps clamped at kSvdJitter.
      const Eigen::Matrix3d a = u.transpose() * u_bar - u_bar.transpose() * u;
      const Eigen::Matrix3d b = v.transpose() * v_bar - v_bar.transpose() * v;
      Eigen::Matrix3d inner = Eigen::Matrix3d::Zero();
      for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
          if (i == j) continue;
          const double f = 1.0 / clamp_gap(s(j) * s(j) - s(i) * s(i));
          inner(i, j) = f * (a(i, j) * s(j) + s(i) * b(i, j));
        }
      }
      const Eigen::Matrix3d h_bar = u * inner * v.transpose();

      // H = P^T Qc, Qc = Q - 1 q_bar, t = q_bar
      const Mat qc_bar = p_copy * h_bar;  // n x 3
      const Eigen::RowVector3d col_mean = qc_bar.colwise().sum() /
                                          static_cast<double>(n);
      Mat dq = qc_bar.rowwise() - col_mean;
      dq.rowwise() += (t_bar / static_cast<double>(n)).transpose();
      nodes_[qid].grad += dq;
    };
  }
  return emplace(std::move(out), rg, std::move(bw));
}

Var Tape::chamfer(Var a, Var b) {
  const Mat& pa = value(a);
  const Mat& pb = value(b);
  if (pa.cols() != 3 || pb.cols() != 3 || pa.rows() == 0 || pb.rows() == 0) {
    throw InvalidInputError("chamfer: inputs must be non-empty n x 3");
  }
  const Eigen::Index na = pa.rows();
  const Eigen::Index nb = pb.rows();
  std::vector<int> nn_ab(static_cast<std::size_t>(na));
  std::vector<int> nn_ba(static_cast<std::size_t>(nb));
  double total = 0.0;
  for (Eigen::Index i = 0; i < na; ++i) {
    double best = std::numeric_limits<double>::infinity();
    int arg = 0;
    for (Eigen::Index j = 0; j < nb; ++j) {
      const double dist = (pa.row(i) - pb.row(j)).squaredNorm();
      if (dist < best) {
        best = dist;
        arg = static_cast<int>(j);
      }
    }
    nn_ab[static_cast<std::size_t>(i)] = arg;
    total += best;
  }
  for (Eigen::Index j = 0; j < nb; ++j) {
    double best = std::numeric_limits<double>::infinity();
    int arg = 0;
    for (Eigen::Index i = 0; i < na; ++i) {
      const double dist = (pa.row(i) - pb.row(j)).squaredNorm();
      if (dist < best) {
        best = dist;
        arg = static_cast<int>(i);
      }
    }
    nn_ba[static_cast<std::size_t>(j)] = arg;
    total += best;
  }
  const double norm = 1.0 / static_cast<double>(na + nb);
  Mat out(1, 1);
  out(0, 0) = total * norm;

  const int aid = a.id, bid = b.id;
  const int oid = static_cast<int>(nodes_.size());
  const bool rg = requires_grad(a) || requires_grad(b);
  std::function<void()> bw;
  if (rg) {
    bw = [this, aid, bid, nn_ab, nn_ba, norm, oid]() {
      const double g = nodes_[oid].grad(0, 0) * norm;
      const Mat& va = nodes_[aid].value;
      const Mat& vb = nodes_[bid].value;
      const bool need_a = nodes_[aid].requires_grad;
      const bool need_b = nodes_[bid].requires_grad;
      for (std::size_t i = 0; i < nn_ab.size(); ++i) {
        const Eigen::RowVector3d diff =
            va.row(static_cast<Eigen::Index>(i)) - vb.row(nn_ab[i]);
        if (need_a) {
          nodes_[aid].grad.row(static_cast<Eigen::Index>(i)) +=
              2.0 * g * diff;
        }
        if (need_b) nodes_[bid].grad.row(nn_ab[i]) -= 2.0 * g * diff;
      }
      for (std::size_t j = 0; j < nn_ba.size(); ++j) {
        const Eigen::RowVector3d diff =
            va.row(nn_ba[j]) - vb.row(static_cast<Eigen::Index>(j));
        if (need_a) nodes_[aid].grad.row(nn_ba[j]) += 2.0 * g * diff;
        if (need_b) {
          nodes_[bid].grad.row(static_cast<Eigen::Index>(j)) -=
              2.0 * g * diff;
        }
      }
    };
  }
  return emplace(std::move(out), rg, std::move(bw));
}

double central_difference(const std::function<double()>& f, double* entry,
                          double eps) {
  const double saved = *entry;
  *entry = saved + eps;
  const double hi = f();
  *entry = saved - eps;
  const double lo = f();
  *entry = saved;
  return (hi - lo) / (2.0 * eps);
}

}  // namespace shapelinker::ad
