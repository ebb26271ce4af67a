#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "shapelinker/autodiff.hpp"
#include "shapelinker/scoring.hpp"

namespace shapelinker::rl {

// Character-level SMILES vocabulary. Two-letter halogens are single units;
// everything else tokenizes one character at a time. Index 0 is padding,
// then the begin and end markers, then the corpus tokens in sorted order.
struct Vocabulary {
  std::vector<std::string> tokens;
  std::map<std::string, int> index;
  int pad_id = 0;
  int begin_id = 1;
  int end_id = 2;

  static Vocabulary from_corpus(const std::vector<std::string>& corpus);

  int size() const { return static_cast<int>(tokens.size()); }
  // Splits one SMILES string into vocabulary ids (no begin/end markers).
  // Unknown tokens throw InvalidInputError.
  std::vector<int> encode(const std::string& smiles) const;
  std::string decode(const std::vector<int>& body) const;
};

// Splits a SMILES string into token texts without consulting a vocabulary.
std::vector<std::string> tokenize_smiles(const std::string& smiles);

// Gated-recurrent sequence model over the vocabulary: embedding table, one
// GRU layer, and a linear projection to vocabulary logits. Serves as both
// the frozen prior and the trainable agent.
struct SequenceModel {
  Vocabulary vocab;
  int embed_dim = 32;
  int hidden = 128;
  ad::Mat embedding;                    // V x embed_dim
  ad::Mat wxz, whz, bz;                 // update gate
  ad::Mat wxr, whr, br;                 // reset gate
  ad::Mat wxh, whh, bh;                 // candidate state
  ad::Mat out_w, out_b;                 // hidden x V, 1 x V

  void validate() const;
};

SequenceModel init_sequence_model(const Vocabulary& vocab, int embed_dim,
                                  int hidden, std::uint64_t seed);

// Stable name -> parameter mapping shared by the optimizer and the
// checkpoint format.
std::vector<std::pair<std::string, ad::Mat*>> named_params(SequenceModel& m);
std::vector<std::pair<std::string, const ad::Mat*>> named_params(
    const SequenceModel& m);

// Generated sequences never exceed this many body tokens.
inline constexpr int kMaxSequenceLength = 128;

// Teacher-forced log-likelihood of begin -> body -> end under the model,
// one value per body. Plain forward pass, no gradients.
std::vector<double> batch_log_prob(const SequenceModel& model,
                                   const std::vector<std::vector<int>>& bodies);
double sequence_log_prob(const SequenceModel& model, const std::string& smiles);

struct SampleResult {
  std::string smiles;
  std::vector<int> tokens;
  double log_prob = 0.0;   // model likelihood at temperature 1
  bool terminated = false; // hit the end token before the length cap
};

// Autoregressive sampling with logits divided by `temperature` before the
// softmax. Padding and begin tokens are masked out of the sampling
// distribution; the returned log-likelihood is the unmasked model
// probability at temperature 1.
std::vector<SampleResult> sample_batch(const SequenceModel& model, int n,
                                       double temperature, std::uint64_t seed);

// log pi_aug = log pi_prior + sigma * score.
double augmented_likelihood(double log_prior, double score, double sigma);

// J = (log pi_aug - log pi_agent)^2.
double policy_loss(double log_aug, double log_agent);

// Mean squared augmented-likelihood gap over the batch plus analytic
// gradients for every agent parameter, in named_params order.
std::pair<double, std::vector<ad::Mat>> policy_loss_and_grads(
    const SequenceModel& agent, const std::vector<std::vector<int>>& bodies,
    const std::vector<double>& log_aug);

struct PretrainConfig {
  int epochs = 200;
  int batch_size = 32;
  double learning_rate = 5e-3;
  int embed_dim = 32;
  int hidden = 128;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

struct PretrainResult {
  SequenceModel model;
  // Index 0 is the untrained model; one entry per epoch follows.
  std::vector<double> epoch_perplexity;
};

// Per-token perplexity of the corpus under the model (end tokens counted).
double corpus_perplexity(const SequenceModel& model,
                         const std::vector<std::string>& corpus);

// Maximum-likelihood teacher forcing over the corpus with Adam.
// Deterministic per seed.
PretrainResult pretrain_prior(const std::vector<std::string>& corpus,
                              const PretrainConfig& config);

struct RLConfig {
  double sigma = 120.0;
  int batch_size = 32;
  double learning_rate = 1e-4;
  int epochs = 200;
  double temperature = 1.5;
  int checkpoint_interval = 0;  // 0 disables checkpoint callbacks
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

// Strict JSON parse; accepted keys: sigma, batch_size, learning_rate,
// epochs, temperature, checkpoint_interval. Unknown keys are rejected.
RLConfig rl_config_from_json_text(const std::string& text);

// Adam state persisted across rl_step calls.
struct AdamState {
  std::vector<ad::Mat> m;
  std::vector<ad::Mat> v;
  long step = 0;

  explicit AdamState(const SequenceModel& model);
};

using ScoreFn = std::function<scoring::ScoreRecord(const std::string&)>;

struct StepDiagnostics {
  double mean_score = 0.0;   // post-filter effective scores
  double mean_loss = 0.0;
  double valid_frac = 0.0;
  double unique_frac = 0.0;  // unique canonical forms / valid, 0 when none
  std::vector<std::pair<std::string, double>> component_means;
};

// One REINVENT-style update: sample a batch from the agent, score it
// (invalid SMILES score zero and skip the scorer), apply the diversity
// filter serially, build the augmented likelihood against the frozen
// prior, and take one Adam step on the squared-gap loss. Throws
// TrainingError when the loss or a gradient goes non-finite.
StepDiagnostics rl_step(SequenceModel& agent, const SequenceModel& prior,
                        const ScoreFn& score_fn,
                        scoring::DiversityFilterState& filter,
                        const RLConfig& config, AdamState& optimizer,
                        int epoch, std::uint64_t step_seed);

struct CurveRow {
  int epoch = 0;
  StepDiagnostics diag;
};

struct RlRunResult {
  SequenceModel agent;
  std::vector<CurveRow> curve;
};

using CheckpointFn = std::function<void(int epoch, const SequenceModel&)>;

// Runs rl_step for config.epochs epochs starting from a copy of the prior.
// The filter argument seeds the diversity state (capacity included); the
// checkpoint callback fires every checkpoint_interval epochs when set.
RlRunResult rl_run(const RLConfig& config, const SequenceModel& prior,
                   const ScoreFn& score_fn,
                   scoring::DiversityFilterState filter = {},
                   const CheckpointFn& on_checkpoint = nullptr);

// Learning-curve CSV: epoch, mean_score, mean_loss, valid_frac,
// unique_frac, then one mean_<component> column per component name seen.
void write_curve_csv(const std::string& path,
                     const std::vector<CurveRow>& curve);

// Sequence-model checkpoints in the aligner's JSON layout plus the
// vocabulary and dimensions.
void save_sequence_checkpoint(const std::string& path,
                              const SequenceModel& model);
SequenceModel load_sequence_checkpoint(const std::string& path);

}  // namespace shapelinker::rl
