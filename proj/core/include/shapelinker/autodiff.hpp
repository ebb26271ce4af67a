#pragma once

#include <Eigen/Core>

#include <functional>
#include <vector>

namespace shapelinker::ad {

using Mat = Eigen::MatrixXd;

class Tape;

// Handle to a node on a tape. Cheap to copy; values live on the tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Mat& value() const;
  const Mat& grad() const;
};

// Eager reverse-mode tape over dense matrices. Forward values are computed
// when an op is recorded; backward() replays the closures in reverse.
// Gradients accumulate only into nodes reachable from a param().
class Tape {
public:
  // Leaf that does not require gradients.
  Var constant(Mat value);
  // Leaf that accumulates gradients.
  Var param(Mat value);

  const Mat& value(Var v) const { return nodes_[v.id].value; }
  const Mat& grad(Var v) const { return nodes_[v.id].grad; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

  // Seeds d(output)/d(output) = 1 (output must be 1x1) and propagates.
  void backward(Var output);

  std::size_t size() const { return nodes_.size(); }

  // --- ops ------------------------------------------------------------
  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var hadamard(Var a, Var b);
  Var add_rowvec(Var a, Var row);       // (n x d) + broadcast (1 x d)
  Var mul_colvec(Var a, Var col);       // (n x d) * broadcast (n x 1)
  Var scale(Var a, double s);
  Var add_scalar(Var a, double s);
  Var transpose(Var a);
  Var softmax_rows(Var a);
  Var tanh(Var a);
  Var sigmoid(Var a);
  Var square(Var a);
  Var slice_cols(Var a, int first, int count);
  Var concat_cols(const std::vector<Var>& parts);
  Var sum(Var a);                       // 1x1
  Var mean(Var a);                      // 1x1
  Var gather_rows(Var table, const std::vector<int>& rows);
  // Per row i: log softmax(a.row(i))[targets[i]], returned as (n x 1).
  Var log_softmax_pick(Var a, const std::vector<int>& targets);

  // Centered-query Kabsch superposition onto pseudo-coordinates followed by
  // application of the recovered transform to the query: the one custom op
  // of the aligner. `query` rows must already be centered. Returns the
  // aligned coordinates (n x 3); rotation/translation are written to the
  // optional out-parameters. Gradients flow into `pseudo` only.
  Var kabsch_align(Var pseudo, const Mat& query_centered,
                   Eigen::Matrix3d* rotation_out = nullptr,
                   Eigen::Vector3d* translation_out = nullptr);

  // Symmetric normalized squared-nearest-neighbor distance between the rows
  // of a and b, as a 1x1 node. Ties pick the lowest-index neighbor, which
  // fixes the subgradient.
  Var chamfer(Var a, Var b);

private:
  struct Node {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    std::function<void()> backward;
  };

  Var emplace(Mat value, bool requires_grad, std::function<void()> backward);
  Mat& grad_ref(int id) { return nodes_[id].grad; }
  void ensure_grad(int id);

  std::vector<Node> nodes_;
};

inline const Mat& Var::value() const { return tape->value(*this); }
inline const Mat& Var::grad() const { return tape->grad(*this); }

// Numerical gradient of f with respect to entry (i, j) of m by central
// differences. Shared test oracle for every gradient gate in the project.
double central_difference(const std::function<double()>& f, double* entry,
                          double eps = 1e-5);

}  // namespace shapelinker::ad
