#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "shapelinker/aligner.hpp"
#include "shapelinker/errors.hpp"
#include "shapelinker/rng.hpp"

namespace shapelinker::aligner {

using ad::Mat;
using nlohmann::json;

void TrainConfig::validate() const {
  if (epochs < 1) throw InvalidInputError("train: epochs must be >= 1");
  if (learning_rate <= 0.0) {
    throw InvalidInputError("train: learning rate must be > 0");
  }
  if (batch_size < 1) throw InvalidInputError("train: batch size must be >= 1");
  if (val_fraction < 0.0 || val_fraction >= 1.0) {
    throw InvalidInputError("train: val fraction must be in [0, 1)");
  }
}

double mean_loss(const AlignerModel& model,
                 const std::vector<TrainPair>& pairs) {
  if (pairs.empty()) throw InvalidInputError("mean_loss: no pairs");
  double acc = 0.0;
  for (const TrainPair& p : pairs) {
    acc += align(model, p.first, p.second).chamfer;
  }
  return acc / static_cast<double>(pairs.size());
}

std::vector<EpochLoss> train(AlignerModel& model,
                             const std::vector<TrainPair>& dataset,
                             const TrainConfig& config) {
  config.validate();
  model.validate();
  if (dataset.empty()) throw InvalidInputError("train: empty dataset");

  // Deterministic split: shuffle indices once, take the tail as validation.
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng(substream_seed(config.rng_seed, "aligner/split"));
  split_rng.shuffle(order);
  const auto n_val = static_cast<std::size_t>(
      config.val_fraction * static_cast<double>(dataset.size()));
  std::vector<TrainPair> train_set, val_set;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < order.size() - n_val ? train_set : val_set)
        .push_back(dataset[order[i]]);
  }
  if (train_set.empty()) train_set = val_set;
  const std::vector<TrainPair>& val_eval =
      val_set.empty() ? train_set : val_set;

  std::vector<EpochLoss> trace;
  trace.push_back(
      {0, mean_loss(model, train_set), mean_loss(model, val_eval)});

  // Adam state per parameter.
  auto params = named_params(model);
  std::vector<Mat> m_state, v_state;
  for (const auto& [name, mat] : params) {
    m_state.push_back(Mat::Zero(mat->rows(), mat->cols()));
    v_state.push_back(Mat::Zero(mat->rows(), mat->cols()));
  }
  long step = 0;

  Rng epoch_rng(substream_seed(config.rng_seed, "aligner/epochs"));
  std::vector<std::size_t> idx(train_set.size());
  std::iota(idx.begin(), idx.end(), 0);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    epoch_rng.shuffle(idx);
    double epoch_loss = 0.0;
    std::size_t pair_count = 0;

    for (std::size_t start = 0; start < idx.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop = std::min(
          idx.size(), start + static_cast<std::size_t>(config.batch_size));
      std::vector<Mat> batch_grads;
      for (std::size_t k = start; k < stop; ++k) {
        const TrainPair& pair = train_set[idx[k]];
        double loss = 0.0;
        std::vector<Mat> grads;
        try {
          std::tie(loss, grads) = loss_and_grads(model, pair.first,
                                                 pair.second);
        } catch (const TrainingError&) {
          throw;
        } catch (const NumericError& e) {
          throw TrainingError(epoch, e.what());
        }
        epoch_loss += loss;
        ++pair_count;
        if (batch_grads.empty()) {
          batch_grads = std::move(grads);
        } else {
          for (std::size_t p = 0; p < grads.size(); ++p) {
            batch_grads[p] += grads[p];
          }
        }
      }
      const double inv = 1.0 / static_cast<double>(stop - start);
      ++step;
      const double bc1 = 1.0 - std::pow(config.beta1, step);
      const double bc2 = 1.0 - std::pow(config.beta2, step);
      for (std::size_t p = 0; p < params.size(); ++p) {
        const Mat g = batch_grads[p] * inv;
        m_state[p] = config.beta1 * m_state[p] + (1.0 - config.beta1) * g;
        v_state[p] = config.beta2 * v_state[p] +
                     (1.0 - config.beta2) * g.cwiseProduct(g);
        const Mat m_hat = m_state[p] / bc1;
        const Mat v_hat = v_state[p] / bc2;
        *params[p].second -=
            config.learning_rate *
            (m_hat.array() / (v_hat.array().sqrt() + config.adam_eps))
                .matrix();
      }
    }

    const double train_loss = epoch_loss / static_cast<double>(pair_count);
    const double val_loss = mean_loss(model, val_eval);
    if (!std::isfinite(train_loss) || !std::isfinite(val_loss)) {
      throw TrainingError(epoch, "loss diverged");
    }
    trace.push_back({epoch, train_loss, val_loss});
  }
  return trace;
}

void save_checkpoint(const std::string& path, const AlignerModel& model) {
  json root;
  root["format_version"] = 1;
  root["d_a"] = model.d_a;
  root["h"] = model.h;
  json params = json::object();
  for (const auto& [name, mat] : named_params(model)) {
    json entry;
    entry["shape"] = {mat->rows(), mat->cols()};
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(mat->size()));
    for (Eigen::Index i = 0; i < mat->rows(); ++i) {
      for (Eigen::Index j = 0; j < mat->cols(); ++j) {
        data.push_back((*mat)(i, j));
      }
    }
    entry["data"] = std::move(data);
    params[name] = std::move(entry);
  }
  root["params"] = std::move(params);

  std::ofstream out(path);
  if (!out) throw InvalidInputError("cannot write checkpoint: " + path);
  out << root.dump(2) << "\n";
}

AlignerModel load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInputError("cannot open checkpoint: " + path);
  json root;
  try {
    in >> root;
  } catch (const json::exception& e) {
    throw InvalidInputError("checkpoint " + path + ": " + e.what());
  }
  if (!root.contains("format_version") ||
      root["format_version"].get<int>() != 1) {
    throw InvalidInputError("checkpoint " + path +
                            ": unsupported format_version");
  }
  AlignerModel model;
  model.d_a = root.at("d_a").get<int>();
  model.h = root.at("h").get<int>();
  const json& params = root.at("params");
  std::size_t used = 0;
  for (auto& [name, mat] : named_params(model)) {
    if (!params.contains(name)) {
      throw InvalidInputError("checkpoint " + path + ": missing parameter " +
                              name);
    }
    const json& entry = params.at(name);
    const auto rows = entry.at("shape").at(0).get<Eigen::Index>();
    const auto cols = entry.at("shape").at(1).get<Eigen::Index>();
    const auto& data = entry.at("data");
    if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
      throw InvalidInputError("checkpoint " + path + ": parameter " + name +
                              " data does not match its shape");
    }
    mat->resize(rows, cols);
    std::size_t k = 0;
    for (Eigen::Index i = 0; i < rows; ++i) {
      for (Eigen::Index j = 0; j < cols; ++j) {
        (*mat)(i, j) = data.at(k++).get<double>();
      }
    }
    ++used;
  }
  if (params.size() != used) {
    throw InvalidInputError("checkpoint " + path +
                            ": unknown extra parameters present");
  }
  model.validate();
  return model;
}

std::vector<TrainPair> load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInputError("cannot open manifest: " + path);
  json root;
  try {
    in >> root;
  } catch (const json::exception& e) {
    throw InvalidInputError("manifest " + path + ": " + e.what());
  }
  if (!root.is_array()) {
    throw InvalidInputError("manifest " + path + ": expected a JSON list");
  }
  const std::filesystem::path base =
      std::filesystem::path(path).parent_path();
  const auto resolve = [&](const std::string& p) {
    const std::filesystem::path fp(p);
    return fp.is_absolute() ? fp.string() : (base / fp).string();
  };
  std::vector<TrainPair> out;
  for (const json& row : root) {
    const std::string q = resolve(row.at("query_xyz_path").get<std::string>());
    const std::string r =
        resolve(row.at("reference_xyz_path").get<std::string>());
    out.emplace_back(geom::read_xyz_file(q).cloud,
                     geom::read_xyz_file(r).cloud);
  }
  return out;
}

void write_loss_csv(const std::string& path,
                    const std::vector<EpochLoss>& trace) {
  std::ofstream out(path);
  if (!out) throw InvalidInputError("cannot write loss csv: " + path);
  out << "epoch,train_loss,val_loss\n";
  char buf[80];
  for (const EpochLoss& row : trace) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g\n", row.epoch,
                  row.train_loss, row.val_loss);
    out << buf;
  }
}

}  // namespace shapelinker::aligner
