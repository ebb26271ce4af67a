#include "shapelinker/scoring.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "shapelinker/errors.hpp"
#include "shapelinker/rng.hpp"

namespace shapelinker::scoring {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream out;
  out.precision(12);
  out << v;
  return out.str();
}

}  // namespace

double reverse_sigmoid(double x, double low, double high, double k) {
  if (high <= low) {
    throw InvalidInputError("reverse sigmoid: high bound must exceed low");
  }
  if (k <= 0.0) {
    throw InvalidInputError("reverse sigmoid: steepness must be positive");
  }
  const double mid = 0.5 * (high + low);
  return 1.0 / (1.0 + std::pow(10.0, 10.0 * k * (x - mid) / (high - low)));
}

double step_score(double x, double low, double high) {
  if (low > high) {
    throw InvalidInputError("step score: low bound must not exceed high");
  }
  return (x >= low && x <= high) ? 1.0 : 0.0;
}

double composite_score(
    const std::vector<std::pair<double, double>>& components) {
  if (components.empty()) {
    throw InvalidInputError("composite score: no components");
  }
  double weight_sum = 0.0;
  double log_sum = 0.0;
  bool zero = false;
  for (const auto& [value, weight] : components) {
    if (!(value >= 0.0 && value <= 1.0)) {
      throw InvalidInputError(
          "composite score: component value outside [0,1]");
    }
    if (!(weight > 0.0)) {
      throw InvalidInputError("composite score: weight must be positive");
    }
    weight_sum += weight;
    if (value == 0.0) {
      zero = true;
    } else {
      log_sum += weight * std::log(value);
    }
  }
  if (zero) return 0.0;
  return std::exp(log_sum / weight_sum);
}

void DiversityFilterState::validate() const {
  if (capacity < 1) {
    throw InvalidInputError("diversity filter: capacity must be >= 1");
  }
  for (const auto& [scaffold, count] : buckets) {
    if (count < 0) {
      throw InvalidInputError("diversity filter: negative bucket count");
    }
  }
}

double diversity_filter(DiversityFilterState& state,
                        const std::string& scaffold, double score) {
  state.validate();
  if (!(score >= 0.0 && score <= 1.0)) {
    throw InvalidInputError("diversity filter: score outside [0,1]");
  }
  const int before = state.buckets[scaffold]++;
  return before >= state.capacity ? 0.0 : score;
}

double apply_diversity(DiversityFilterState& state, ScoreRecord& record) {
  if (record.components.empty()) return 0.0;
  const auto it = state.buckets.find(record.scaffold);
  record.filtered = it != state.buckets.end() && it->second >= state.capacity;
  return diversity_filter(state, record.scaffold, record.composite);
}

std::pair<double, double> shape_score(
    const aligner::AlignerModel& model,
    const std::vector<surface::AtomSet>& conformers,
    const geom::PointCloud& reference_cloud,
    const surface::SurfaceParams& params, double sigmoid_low,
    double sigmoid_high, double sigmoid_k) {
  if (conformers.empty()) {
    throw InvalidInputError("shape score: conformer list is empty");
  }
  double best = kInf;
  for (const surface::AtomSet& conformer : conformers) {
    try {
      const geom::PointCloud cloud = surface::sample_surface(conformer, params);
      const aligner::AlignmentResult result =
          aligner::align(model, cloud, reference_cloud);
      best = std::min(best, result.chamfer);
    } catch (const std::exception&) {
      // A conformer that cannot be sampled or aligned contributes nothing.
      continue;
    }
  }
  if (!std::isfinite(best)) return {kInf, 0.0};
  return {best, reverse_sigmoid(best, sigmoid_low, sigmoid_high, sigmoid_k)};
}

ScoringConfig::ScoringConfig() {
  // Scoring runs inside the RL loop, so the surface sampler is trimmed
  // relative to its standalone defaults.
  surface.seeds_per_atom = 32;
  surface.descent_steps = 30;
  surface.resolution = 1.0;
}

void ScoringConfig::validate() const {
  if (!(weight_shape > 0.0 && weight_rot > 0.0 && weight_length > 0.0)) {
    throw InvalidInputError("scoring config: weights must be positive");
  }
  if (sigmoid_high <= sigmoid_low) {
    throw InvalidInputError("scoring config: sigmoid high must exceed low");
  }
  if (sigmoid_k <= 0.0) {
    throw InvalidInputError("scoring config: sigmoid steepness must be positive");
  }
  if (rot_low > rot_high) {
    throw InvalidInputError("scoring config: rot band is inverted");
  }
  if (length_low > length_high) {
    throw InvalidInputError("scoring config: length band is inverted");
  }
  if (bucket_capacity < 1) {
    throw InvalidInputError("scoring config: bucket capacity must be >= 1");
  }
  if (conformers < 1) {
    throw InvalidInputError("scoring config: conformer count must be >= 1");
  }
  if (extension_hops < 0) {
    throw InvalidInputError("scoring config: hops must be >= 0");
  }
  surface.validate();
}

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed,
                         const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) {
      throw InvalidInputError("scoring config: unknown key '" + key +
                              "' in " + where);
    }
  }
}

double number_at(const json& obj, const std::string& key, double fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj.at(key).is_number()) {
    throw InvalidInputError("scoring config: '" + key + "' must be a number");
  }
  return obj.at(key).get<double>();
}

int integer_at(const json& obj, const std::string& key, int fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj.at(key).is_number_integer()) {
    throw InvalidInputError("scoring config: '" + key +
                            "' must be an integer");
  }
  return obj.at(key).get<int>();
}

std::pair<double, double> band_at(const json& obj, const std::string& key,
                                  std::pair<double, double> fallback) {
  if (!obj.contains(key)) return fallback;
  const json& band = obj.at(key);
  if (!band.is_array() || band.size() != 2 || !band[0].is_number() ||
      !band[1].is_number()) {
    throw InvalidInputError("scoring config: '" + key +
                            "' must be a [low, high] pair");
  }
  return {band[0].get<double>(), band[1].get<double>()};
}

}  // namespace

ScoringConfig scoring_config_from_json_text(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(e.byte, "scoring config is not valid JSON");
  }
  if (!root.is_object()) {
    throw InvalidInputError("scoring config: top level must be an object");
  }
  reject_unknown_keys(root,
                      {"weights", "sigmoid", "rot_band", "length_band",
                       "bucket_capacity", "conformers", "hops", "surface"},
                      "the top level");
  ScoringConfig cfg;
  if (root.contains("weights")) {
    const json& w = root.at("weights");
    if (!w.is_object()) {
      throw InvalidInputError("scoring config: 'weights' must be an object");
    }
    reject_unknown_keys(w, {"shape", "rot", "length"}, "'weights'");
    cfg.weight_shape = number_at(w, "shape", cfg.weight_shape);
    cfg.weight_rot = number_at(w, "rot", cfg.weight_rot);
    cfg.weight_length = number_at(w, "length", cfg.weight_length);
  }
  if (root.contains("sigmoid")) {
    const json& s = root.at("sigmoid");
    if (!s.is_object()) {
      throw InvalidInputError("scoring config: 'sigmoid' must be an object");
    }
    reject_unknown_keys(s, {"low", "high", "k"}, "'sigmoid'");
    cfg.sigmoid_low = number_at(s, "low", cfg.sigmoid_low);
    cfg.sigmoid_high = number_at(s, "high", cfg.sigmoid_high);
    cfg.sigmoid_k = number_at(s, "k", cfg.sigmoid_k);
  }
  std::tie(cfg.rot_low, cfg.rot_high) =
      band_at(root, "rot_band", {cfg.rot_low, cfg.rot_high});
  std::tie(cfg.length_low, cfg.length_high) =
      band_at(root, "length_band", {cfg.length_low, cfg.length_high});
  cfg.bucket_capacity =
      integer_at(root, "bucket_capacity", cfg.bucket_capacity);
  cfg.conformers = integer_at(root, "conformers", cfg.conformers);
  cfg.extension_hops = integer_at(root, "hops", cfg.extension_hops);
  if (root.contains("surface")) {
    const json& s = root.at("surface");
    if (!s.is_object()) {
      throw InvalidInputError("scoring config: 'surface' must be an object");
    }
    reject_unknown_keys(
        s, {"level", "resolution", "sigma", "descent_steps", "seeds_per_atom"},
        "'surface'");
    cfg.surface.level = number_at(s, "level", cfg.surface.level);
    cfg.surface.resolution = number_at(s, "resolution", cfg.surface.resolution);
    cfg.surface.sigma = number_at(s, "sigma", cfg.surface.sigma);
    cfg.surface.descent_steps =
        integer_at(s, "descent_steps", cfg.surface.descent_steps);
    cfg.surface.seeds_per_atom =
        integer_at(s, "seeds_per_atom", cfg.surface.seeds_per_atom);
  }
  cfg.validate();
  return cfg;
}

ScoreRecord score_molecule(const chem::MolGraph& mol,
                           const chem::LinkerAnnotation& linker,
                           const aligner::AlignerModel& model,
                           const geom::PointCloud& reference,
                           const ScoringConfig& config, std::uint64_t seed) {
  config.validate();
  linker.validate(mol);

  ScoreRecord record;
  record.smiles = chem::canonical_smiles(mol);
  const std::string scaffold = chem::murcko_scaffold(mol);
  // Acyclic molecules have no scaffold; bucket them by their own canonical
  // form so the filter acts on exact repeats instead of lumping every
  // chain together.
  record.scaffold = scaffold.empty() ? record.smiles : scaffold;

  ScoreComponent shape;
  shape.name = "shape";
  shape.weight = config.weight_shape;
  try {
    const auto [extended, extended_ann] =
        chem::extract_extended_linker(mol, linker, config.extension_hops);
    const auto conformers = chem::embed_3d(
        extended, config.conformers, substream_seed(seed, "score/embed"));
    std::vector<surface::AtomSet> sets;
    sets.reserve(conformers.size());
    for (const auto& c : conformers) sets.push_back(c.atoms);
    surface::SurfaceParams params = config.surface;
    params.rng_seed = substream_seed(seed, "score/surface");
    std::tie(shape.raw, shape.transformed) =
        shape_score(model, sets, reference, params, config.sigmoid_low,
                    config.sigmoid_high, config.sigmoid_k);
    if (!std::isfinite(shape.raw)) {
      record.note = "shape score failed: no conformer aligned";
    }
  } catch (const std::exception& e) {
    shape.raw = kInf;
    shape.transformed = 0.0;
    record.note = std::string("shape score failed: ") + e.what();
  }

  ScoreComponent rot;
  rot.name = "rot";
  rot.weight = config.weight_rot;
  rot.raw = chem::rot_bond_ratio(mol, linker);
  rot.transformed = step_score(rot.raw, config.rot_low, config.rot_high);

  ScoreComponent length;
  length.name = "length";
  length.weight = config.weight_length;
  length.raw = chem::linker_length_ratio(mol, linker);
  length.transformed =
      step_score(length.raw, config.length_low, config.length_high);

  record.components = {shape, rot, length};
  std::vector<std::pair<double, double>> pairs;
  for (const ScoreComponent& c : record.components) {
    pairs.emplace_back(c.transformed, c.weight);
  }
  record.composite = composite_score(pairs);
  return record;
}

ScoreRecord score_smiles(const std::string& smiles,
                         const aligner::AlignerModel& model,
                         const geom::PointCloud& reference,
                         const ScoringConfig& config, std::uint64_t seed) {
  chem::MolGraph mol;
  try {
    mol = chem::parse_smiles(smiles);
  } catch (const ParseError& e) {
    ScoreRecord record;
    record.smiles = smiles;
    record.note = std::string("parse error: ") + e.what();
    return record;
  }
  chem::LinkerAnnotation whole;
  whole.linker_atoms.resize(mol.atom_count());
  std::iota(whole.linker_atoms.begin(), whole.linker_atoms.end(), 0);
  whole.attachments = {0, static_cast<int>(mol.atom_count()) - 1};
  ScoreRecord record =
      score_molecule(mol, whole, model, reference, config, seed);
  record.smiles = smiles;
  return record;
}

void write_score_csv(const std::string& path,
                     const std::vector<ScoreRecord>& records) {
  std::ofstream out(path);
  if (!out) {
    throw InvalidInputError("cannot open score CSV for writing: " + path);
  }
  const ScoreRecord* shaped = nullptr;
  for (const ScoreRecord& r : records) {
    if (!r.components.empty()) {
      shaped = &r;
      break;
    }
  }
  out << "sample_id,smiles";
  if (shaped) {
    for (const ScoreComponent& c : shaped->components) {
      out << ',' << c.name << "_raw," << c.name << "_transformed";
    }
  }
  out << ",composite,scaffold,filtered,note\n";
  for (std::size_t i = 0; i < records.size(); ++i) {
    const ScoreRecord& r = records[i];
    out << i << ',' << r.smiles;
    if (shaped) {
      for (std::size_t c = 0; c < shaped->components.size(); ++c) {
        if (c < r.components.size()) {
          out << ',' << format_double(r.components[c].raw) << ','
              << format_double(r.components[c].transformed);
        } else {
          out << ",,";
        }
      }
    }
    out << ',' << format_double(r.composite) << ',' << r.scaffold << ','
        << (r.filtered ? 1 : 0) << ',' << r.note << '\n';
  }
  if (!out) {
    throw InvalidInputError("failed writing score CSV: " + path);
  }
}

ShapeNoveltyResult shape_novelty(const std::vector<double>& cd_values,
                                 const std::vector<double>& similarities) {
  if (cd_values.size() != similarities.size()) {
    throw InvalidInputError(
        "shape novelty: cd and similarity lists differ in length");
  }
  if (cd_values.empty()) {
    throw InvalidInputError("shape novelty: no samples");
  }
  const auto [min_it, max_it] =
      std::minmax_element(cd_values.begin(), cd_values.end());
  const double lo = *min_it;
  const double hi = *max_it;
  const double span = hi - lo;

  ShapeNoveltyResult result;
  result.per_sample.reserve(cd_values.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < cd_values.size(); ++i) {
    const double scaled = span > 0.0 ? (hi - cd_values[i]) / span : 1.0;
    const double sn = scaled * (1.0 - similarities[i]);
    result.per_sample.push_back(sn);
    sum += sn;
  }
  result.mean = sum / static_cast<double>(cd_values.size());
  return result;
}

GenerationMetrics eval_generation(
    const std::vector<std::string>& samples,
    const std::vector<std::string>& reference_set) {
  GenerationMetrics metrics;
  metrics.sample_count = static_cast<int>(samples.size());

  std::set<std::string> unique;
  for (const std::string& s : samples) {
    try {
      unique.insert(chem::canonical_smiles(chem::parse_smiles(s)));
      ++metrics.valid_count;
    } catch (const ParseError&) {
      continue;
    }
  }
  metrics.unique_count = static_cast<int>(unique.size());

  std::set<std::string> reference;
  for (const std::string& r : reference_set) {
    try {
      reference.insert(chem::canonical_smiles(chem::parse_smiles(r)));
    } catch (const ParseError&) {
      reference.insert(r);
    }
  }
  for (const std::string& u : unique) {
    if (!reference.count(u)) ++metrics.novel_count;
  }

  if (metrics.sample_count > 0) {
    metrics.validity = static_cast<double>(metrics.valid_count) /
                       static_cast<double>(metrics.sample_count);
  }
  if (metrics.valid_count > 0) {
    metrics.uniqueness = static_cast<double>(metrics.unique_count) /
                         static_cast<double>(metrics.valid_count);
  }
  if (metrics.unique_count > 0) {
    metrics.novelty = static_cast<double>(metrics.novel_count) /
                      static_cast<double>(metrics.unique_count);
  }
  return metrics;
}

}  // namespace shapelinker::scoring
