#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "protoattend/dataset.hpp"
#include "protoattend/inference.hpp"
#include "protoattend/model.hpp"
#include "protoattend/optim.hpp"

namespace protoattend {

using Rng = std::mt19937_64;

struct TrainConfig {
  std::size_t batch_size = 64;
  std::size_t candidates_train = 256;  // D during training
  std::size_t candidates_infer = 4096; // D at evaluation; capped at the training-set size
  std::uint64_t iterations = 5000;     // N_t
  LrSchedule lr_schedule{};
  double clip_norm = 20.0;
  std::uint64_t seed = 1;
  double noise_ratio = 0.0;
  bool exclude_batch_from_candidates = true;
  std::uint64_t eval_every = 500;

  void validate() const;
};

/// Uniform sample of `size` distinct rows of `train` that are not listed in
/// `exclude`. Throws ContractError when too few rows remain.
CandidateDatabase sample_candidate_db(const Dataset& train, std::size_t size, Rng& rng,
                                      std::span<const std::size_t> exclude = {});

/// Flips exactly round(ratio * N) labels at uniformly chosen positions; each
/// flipped label is drawn uniformly from the other num_classes - 1 classes.
std::vector<int> inject_label_noise(std::span<const int> labels, double ratio, std::size_t num_classes, Rng& rng);

struct StepMetrics {
  std::uint64_t iteration = 0;
  LossBreakdown loss;
  double grad_norm = 0.0;  // before clipping
  double learning_rate = 0.0;
};

/// One optimization step on the rows `batch` of `train`: fresh candidate
/// database, shared encode, objective, backward, global-norm clipping and an
/// Adam update at lr_at(iteration). Throws NumericError on a non-finite loss.
StepMetrics train_step(std::span<const std::size_t> batch, const Dataset& train, ModelParameters& params,
                       AdamState& adam, const ModelConfig& model_config, const TrainConfig& config,
                       std::uint64_t iteration, Rng& rng);

struct EvalRecord {
  std::uint64_t iteration = 0;
  LossBreakdown loss;
  double acc_alpha0 = 0.0;
  double acc_alpha1 = 0.0;
  std::optional<double> mean_conf_correct;
  std::optional<double> mean_conf_incorrect;
};

struct TrainLog {
  std::vector<EvalRecord> records;

  static constexpr const char* kCsvHeader =
      "iteration,loss_total,loss_alpha0,loss_alpha1,loss_alphahalf,loss_sparse,loss_conf,"
      "acc_alpha0,acc_alpha1,mean_conf_correct,mean_conf_incorrect";
  void write_csv(std::ostream& out) const;
};

struct TrainResult {
  ModelParameters params;       // after the last iteration
  ModelParameters best_params;  // highest validation accuracy of ŷ(alpha_predict); ties keep the earlier
  std::uint64_t best_iteration = 0;
  TrainLog log;
};

/// Runs `config.iterations` steps. Batches come from a per-epoch shuffle.
/// Label noise, when configured, is injected once into the training labels
/// before the first step, so sampled candidates carry noisy labels as well.
/// When `out_dir` is given, final.ckpt and best.ckpt are written there.
TrainResult train(const Dataset& train_set, const Dataset& valid_set, const TrainConfig& config,
                  const ModelConfig& model_config, const std::optional<std::filesystem::path>& out_dir = {},
                  const std::string& config_text = {});

// Inference database of up to `size` training rows, drawn with a fixed seed
// derived from `seed` and encoded with `params`.
CandidateDatabase inference_database(const Dataset& train_set, std::size_t size, std::uint64_t seed,
                                     const ModelParameters& params, const ModelConfig& config);

}  // namespace protoattend
