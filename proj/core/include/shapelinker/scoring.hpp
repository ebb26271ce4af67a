#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "shapelinker/aligner.hpp"
#include "shapelinker/chem.hpp"
#include "shapelinker/geom.hpp"
#include "shapelinker/surface.hpp"

namespace shapelinker::scoring {

// Monotone-decreasing [0,1] transform: low raw values score high. The
// midpoint (high+low)/2 maps to exactly 0.5.
//   s(x) = 1 / (1 + 10^(10 k (x - (high+low)/2) / (high - low)))
double reverse_sigmoid(double x, double low, double high, double k);

// 1 iff low <= x <= high, else 0.
double step_score(double x, double low, double high);

// Weighted geometric mean (prod C_i^{w_i})^(1/sum w_i) over (value, weight)
// pairs. Any zero component annihilates the product. Values must lie in
// [0,1] and weights must be positive.
double composite_score(const std::vector<std::pair<double, double>>& components);

struct ScoreComponent {
  std::string name;
  double raw = 0.0;
  double transformed = 0.0;  // C_i in [0,1]
  double weight = 1.0;
};

struct ScoreRecord {
  std::string smiles;
  std::vector<ScoreComponent> components;
  double composite = 0.0;
  std::string scaffold;
  bool filtered = false;
  std::string note;

  // The score the optimizer sees: zero once the diversity filter fired.
  double effective_score() const { return filtered ? 0.0 : composite; }
};

struct DiversityFilterState {
  std::map<std::string, int> buckets;
  int capacity = 25;

  void validate() const;
};

// Increments the scaffold bucket and returns the score unchanged, or zero
// when the bucket already held `capacity` samples before this call.
double diversity_filter(DiversityFilterState& state,
                        const std::string& scaffold, double score);

// Applies the filter to a finished record, setting record.filtered. Records
// without components (failed parses) stay at zero and are not bucketed.
// Returns the effective score.
double apply_diversity(DiversityFilterState& state, ScoreRecord& record);

// Surface-samples every conformer, aligns each to the reference cloud, and
// returns (raw, transformed) where raw is the minimum Chamfer distance
// across conformers and transformed = reverse_sigmoid(raw, ...). A
// conformer whose sampling or alignment throws is skipped; if none
// survives, returns (+inf, 0).
std::pair<double, double> shape_score(
    const aligner::AlignerModel& model,
    const std::vector<surface::AtomSet>& conformers,
    const geom::PointCloud& reference_cloud,
    const surface::SurfaceParams& params = {}, double sigmoid_low = 0.0,
    double sigmoid_high = 3.5, double sigmoid_k = 0.25);

struct ScoringConfig {
  double weight_shape = 3.0;
  double weight_rot = 1.0;
  double weight_length = 1.0;
  double sigmoid_low = 0.0;
  double sigmoid_high = 3.5;
  double sigmoid_k = 0.25;
  double rot_low = 0.0;
  double rot_high = 30.0;
  double length_low = 100.0;
  double length_high = 100.0;
  int bucket_capacity = 25;
  int conformers = 16;
  int extension_hops = 2;
  surface::SurfaceParams surface;

  ScoringConfig();
  void validate() const;
};

// Strict JSON parse: unknown keys anywhere reject the config. Accepted
// shape: {weights:{shape,rot,length}, sigmoid:{low,high,k}, rot_band:[lo,hi],
// length_band:[lo,hi], bucket_capacity, conformers, hops,
// surface:{level,resolution,sigma,descent_steps,seeds_per_atom}}. Every key
// is optional; omitted ones keep their defaults.
ScoringConfig scoring_config_from_json_text(const std::string& text);

// Full composite pipeline for one annotated molecule: extracts the extended
// linker, embeds conformers, runs the shape score against the reference
// cloud, applies the rotatable-bond and linker-length step scores, and
// combines everything via the weighted geometric mean. Component failures
// score zero and leave a note; the diversity filter is NOT applied here.
ScoreRecord score_molecule(const chem::MolGraph& mol,
                           const chem::LinkerAnnotation& linker,
                           const aligner::AlignerModel& model,
                           const geom::PointCloud& reference,
                           const ScoringConfig& config, std::uint64_t seed);

// Parses the SMILES and scores the whole molecule as its own linker with
// attachments at the first and last atom in writing order. Parse failures
// return a zero record with a note instead of throwing.
ScoreRecord score_smiles(const std::string& smiles,
                         const aligner::AlignerModel& model,
                         const geom::PointCloud& reference,
                         const ScoringConfig& config, std::uint64_t seed);

// CSV report: sample_id,smiles,<component raw/transformed pairs>,composite,
// scaffold,filtered,note. Component columns come from the first record that
// carries components; records without them leave those cells empty.
void write_score_csv(const std::string& path,
                     const std::vector<ScoreRecord>& records);

// Per-sample shape novelty: inverse-min-max-scaled CD times (1 - Tanimoto
// similarity). With all CDs equal the scale factor degenerates to 1.
struct ShapeNoveltyResult {
  std::vector<double> per_sample;
  double mean = 0.0;
};

ShapeNoveltyResult shape_novelty(const std::vector<double>& cd_values,
                                 const std::vector<double>& similarities);

// Batch generation metrics. Fractions are null when their denominator is
// empty: validity needs samples, uniqueness needs valid parses, novelty
// needs unique canonical forms.
struct GenerationMetrics {
  std::optional<double> validity;
  std::optional<double> uniqueness;
  std::optional<double> novelty;
  int sample_count = 0;
  int valid_count = 0;
  int unique_count = 0;
  int novel_count = 0;
};

// validity = parseable fraction; uniqueness = |unique canonical| / |valid|;
// novelty = fraction of unique canonicals absent from the reference set.
// Reference entries are canonicalized when they parse and compared verbatim
// otherwise.
GenerationMetrics eval_generation(const std::vector<std::string>& samples,
                                  const std::vector<std::string>& reference_set);

}  // namespace shapelinker::scoring
