#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "shapelinker/autodiff.hpp"
#include "shapelinker/geom.hpp"
#include "shapelinker/surface.hpp"

namespace shapelinker::aligner {

// One multi-head attention block: full-width query/key/value projections
// plus the head-concat output projection. Biases are stored as 1 x d rows.
struct AttentionParams {
  ad::Mat wq, bq;
  ad::Mat wk, bk;
  ad::Mat wv, bv;
  ad::Mat wo, bo;
};

// Point-cloud aligner: input linear (3 -> d_a), one self-attention block
// shared between the query and reference branches, one cross-attention
// block (queries from the query branch, keys/values from the reference
// branch), and an output linear (d_a -> 3) producing pseudo-coordinates
// that the query is superposed onto. No residuals or layer normalization.
struct AlignerModel {
  int d_a = 16;
  int h = 8;
  ad::Mat input_w, input_b;   // 3 x d_a, 1 x d_a
  AttentionParams self_attn;  // all d_a x d_a / 1 x d_a
  AttentionParams cross_attn;
  ad::Mat output_w, output_b;  // d_a x 3, 1 x 3

  void validate() const;
};

// Fresh model with scaled-normal weights and zero biases; deterministic in
// the seed.
AlignerModel init_model(int d_a, int h, std::uint64_t seed);

// Stable name -> parameter mapping shared by the optimizer, the gradient
// store, and the checkpoint format. Order is fixed.
std::vector<std::pair<std::string, ad::Mat*>> named_params(AlignerModel& m);
std::vector<std::pair<std::string, const ad::Mat*>> named_params(
    const AlignerModel& m);

struct AlignmentResult {
  geom::RigidTransform transform;  // centered query -> centered ref frame
  double chamfer = 0.0;            // vs the centered reference
  geom::PointCloud pseudo_coords;
  geom::PointCloud aligned_coords;
  geom::Vec3 query_centroid = geom::Vec3::Zero();
  geom::Vec3 reference_centroid = geom::Vec3::Zero();
};

// Inference-mode forward pass. Clouds are centered internally; the result
// transform maps centered-query coordinates into the centered-reference
// frame, with the removed centroids reported alongside.
AlignmentResult align(const AlignerModel& model, const geom::PointCloud& query,
                      const geom::PointCloud& reference);

// Chamfer loss of the aligned placement plus analytic gradients for every
// parameter, in named_params order.
std::pair<double, std::vector<ad::Mat>> loss_and_grads(
    const AlignerModel& model, const geom::PointCloud& query,
    const geom::PointCloud& reference);

// Moves atom coordinates rigidly with the alignment: center on the query
// centroid, rotate/translate, decenter into the reference's original frame.
geom::Vec3 transform_point(const AlignmentResult& result, const geom::Vec3& p);
surface::AtomSet transform_atoms(const AlignmentResult& result,
                                 const surface::AtomSet& atoms);

// Index correspondences (query point, reference point) used to score an
// alignment by RMSD in realign_flips.
using AnchorPairs = std::vector<std::pair<int, int>>;

// Re-aligns the high-RMSD subpopulation of a conformer batch with randomly
// rotated inputs until at least 90% of conformers sit in the lower RMSD
// mode or 5 iterations pass. Returns the best result per conformer;
// iterations_out reports how many resampling rounds ran.
std::vector<AlignmentResult> realign_flips(
    const AlignerModel& model, const std::vector<geom::PointCloud>& conformers,
    const geom::PointCloud& reference, const AnchorPairs& anchors,
    std::uint64_t seed, int* iterations_out = nullptr);

// Same loop over an arbitrary alignment callable (cloud, perturbation seed)
// -> result; lets tests drive the mode-split logic with stub aligners.
using AlignFn =
    std::function<AlignmentResult(const geom::PointCloud&, std::uint64_t)>;
std::vector<AlignmentResult> realign_flips_with(
    const AlignFn& align_fn, const std::vector<geom::PointCloud>& conformers,
    const geom::PointCloud& reference, const AnchorPairs& anchors,
    std::uint64_t seed, int* iterations_out = nullptr);

// Best-of-N rigid registration baseline: each iteration samples three index
// pairs, solves Kabsch on them, refines once on inlier correspondences
// closer than inlier_threshold, and keeps the lowest-chamfer candidate.
AlignmentResult ransac_align(const geom::PointCloud& query,
                             const geom::PointCloud& reference, int iterations,
                             double inlier_threshold, std::uint64_t seed);

// --- training ---------------------------------------------------------

struct TrainConfig {
  int epochs = 50;
  double learning_rate = 1e-3;
  int batch_size = 8;
  double val_fraction = 0.2;
  std::uint64_t rng_seed = 0;
  // Adam moments.
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;
};

struct EpochLoss {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

using TrainPair = std::pair<geom::PointCloud, geom::PointCloud>;

// Mean chamfer loss of the model across pairs, no gradients.
double mean_loss(const AlignerModel& model,
                 const std::vector<TrainPair>& pairs);

// Adam training over (query, reference) pairs. Row 0 of the trace is the
// pre-update evaluation; one row follows per epoch. Deterministic given
// config.rng_seed.
std::vector<EpochLoss> train(AlignerModel& model,
                             const std::vector<TrainPair>& dataset,
                             const TrainConfig& config);

// Checkpoint JSON: {format_version, d_a, h, params: {name: {shape, data}}}.
void save_checkpoint(const std::string& path, const AlignerModel& model);
AlignerModel load_checkpoint(const std::string& path);

// Dataset manifest: JSON list of {query_xyz_path, reference_xyz_path};
// relative paths resolve against the manifest's directory.
std::vector<TrainPair> load_manifest(const std::string& path);

// Per-epoch loss trace as CSV with header epoch,train_loss,val_loss.
void write_loss_csv(const std::string& path,
                    const std::vector<EpochLoss>& trace);

}  // namespace shapelinker::aligner
