#include "protoattend/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "protoattend/checkpoint.hpp"
#include "format.hpp"
#include "protoattend/error.hpp"
#include "protoattend/evaluation.hpp"

namespace protoattend {

namespace {

using detail::format_double;

// Independent streams derived from the run seed.
constexpr std::uint64_t kNoiseStream = 0x6e6f697365ULL;
constexpr std::uint64_t kInferenceStream = 0x696e666572ULL;

std::string format_optional(const std::optional<double>& v) {
  if (!v) return {};
  return format_double(*v);
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size < 1) throw ContractError("batch_size must be at least 1");
  if (candidates_train < 1) throw ContractError("candidates_train must be at least 1");
  if (candidates_infer < 1) throw ContractError("candidates_infer must be at least 1");
  lr_schedule.validate();
  if (!(clip_norm > 0.0)) throw ContractError("clip_norm must be positive");
  if (!(noise_ratio >= 0.0 && noise_ratio < 1.0)) throw ContractError("noise_ratio must lie in [0, 1)");
  if (eval_every < 1) throw ContractError("eval_every must be at least 1");
}

CandidateDatabase sample_candidate_db(const Dataset& train, std::size_t size, Rng& rng,
                                      std::span<const std::size_t> exclude) {
  std::vector<char> excluded(train.size(), 0);
  for (std::size_t idx : exclude) {
    if (idx < excluded.size()) excluded[idx] = 1;
  }
  std::vector<std::size_t> pool;
  pool.reserve(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    if (!excluded[i]) pool.push_back(i);
  }
  if (size > pool.size()) {
    throw ContractError("candidate database of size " + std::to_string(size) + " requested but only " +
                        std::to_string(pool.size()) + " rows are available");
  }
  // Partial Fisher-Yates: the first `size` slots become a uniform sample.
  for (std::size_t k = 0; k < size; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, pool.size() - 1);
    std::swap(pool[k], pool[pick(rng)]);
  }
  pool.resize(size);

  CandidateDatabase db;
  db.indices = std::move(pool);
  db.samples = train.features.gather_rows(db.indices);
  db.labels.reserve(size);
  for (std::size_t idx : db.indices) db.labels.push_back(train.labels[idx]);
  return db;
}

std::vector<int> inject_label_noise(std::span<const int> labels, double ratio, std::size_t num_classes, Rng& rng) {
  if (!(ratio >= 0.0 && ratio < 1.0)) throw ContractError("noise ratio must lie in [0, 1)");
  if (num_classes < 2) throw ContractError("label noise needs at least 2 classes");
  std::vector<int> noisy(labels.begin(), labels.end());
  const auto flips = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(labels.size())));
  std::vector<std::size_t> positions(labels.size());
  std::iota(positions.begin(), positions.end(), std::size_t{0});
  std::uniform_int_distribution<int> other(0, static_cast<int>(num_classes) - 2);
  for (std::size_t k = 0; k < flips; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, positions.size() - 1);
    std::swap(positions[k], positions[pick(rng)]);
    const std::size_t at = positions[k];
    int replacement = other(rng);
    if (replacement >= noisy[at]) ++replacement;
    noisy[at] = replacement;
  }
  return noisy;
}

StepMetrics train_step(std::span<const std::size_t> batch, const Dataset& train, ModelParameters& params,
                       AdamState& adam, const ModelConfig& model_config, const TrainConfig& config,
                       std::uint64_t iteration, Rng& rng) {
  if (iteration >= config.iterations) {
    throw ContractError("iteration " + std::to_string(iteration) + " beyond the configured " +
                        std::to_string(config.iterations));
  }
  StepMetrics metrics;
  metrics.iteration = iteration;
  metrics.learning_rate = lr_at(config.lr_schedule, iteration);

  const std::span<const std::size_t> exclude = config.exclude_batch_from_candidates ? batch : std::span<const std::size_t>{};
  const CandidateDatabase db = sample_candidate_db(train, config.candidates_train, rng, exclude);
  const Tensor inputs = train.features.gather_rows(batch);
  std::vector<int> labels;
  labels.reserve(batch.size());
  for (std::size_t idx : batch) labels.push_back(train.labels[idx]);

  metrics.loss = evaluate_objective(params, model_config, inputs, labels, db.samples, db.labels,
                                    TrainingProgress{iteration, config.iterations}, true);
  const LossBreakdown& l = metrics.loss;
  if (!std::isfinite(l.total)) {
    throw NumericError("non-finite loss at iteration " + std::to_string(iteration) + ": alpha0=" +
                       format_double(l.alpha0) + " alpha1=" + format_double(l.alpha1) +
                       " alpha_half=" + format_double(l.alpha_half) + " sparse=" + format_double(l.sparse) +
                       " conf=" + format_double(l.conf));
  }
  auto list = params.list();
  metrics.grad_norm = clip_global_norm(list, config.clip_norm);
  adam_step(list, adam, metrics.learning_rate);
  return metrics;
}

void TrainLog::write_csv(std::ostream& out) const {
  out << kCsvHeader << "\n";
  for (const auto& r : records) {
    out << r.iteration << "," << format_double(r.loss.total) << "," << format_double(r.loss.alpha0) << ","
        << format_double(r.loss.alpha1) << "," << format_double(r.loss.alpha_half) << ","
        << format_double(r.loss.sparse) << "," << format_double(r.loss.conf) << "," << format_double(r.acc_alpha0)
        << "," << format_double(r.acc_alpha1) << "," << format_optional(r.mean_conf_correct) << ","
        << format_optional(r.mean_conf_incorrect) << "\n";
  }
}

CandidateDatabase inference_database(const Dataset& train_set, std::size_t size, std::uint64_t seed,
                                     const ModelParameters& params, const ModelConfig& config) {
  Rng rng(seed ^ kInferenceStream);
  return precompute_database(sample_candidate_db(train_set, std::min(size, train_set.size()), rng), params, config);
}

TrainResult train(const Dataset& train_set, const Dataset& valid_set, const TrainConfig& config,
                  const ModelConfig& model_config, const std::optional<std::filesystem::path>& out_dir,
                  const std::string& config_text) {
  config.validate();
  model_config.validate();
  train_set.validate();
  if (train_set.input_dim() != model_config.input_dim) {
    throw IncompatibleError("training data has " + std::to_string(train_set.input_dim()) +
                            " features, model expects " + std::to_string(model_config.input_dim));
  }
  if (train_set.num_classes > model_config.num_classes) {
    throw IncompatibleError("training data has " + std::to_string(train_set.num_classes) +
                            " classes, model has " + std::to_string(model_config.num_classes));
  }
  if (config.batch_size > train_set.size()) throw ContractError("batch_size exceeds the training set size");

  TrainResult result{ModelParameters::initialize(model_config, config.seed), {}, 0, {}};
  result.best_params = result.params;

  Dataset train = train_set;
  if (config.noise_ratio > 0.0) {
    Rng noise_rng(config.seed ^ kNoiseStream);
    train.labels = inject_label_noise(train.labels, config.noise_ratio, model_config.num_classes, noise_rng);
  }

  Rng rng(config.seed);
  AdamState adam = AdamState::for_parameters(result.params.list());
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t cursor = order.size();
  double best_accuracy = -1.0;

  for (std::uint64_t i = 0; i < config.iterations; ++i) {
    if (cursor + config.batch_size > order.size()) {
      std::shuffle(order.begin(), order.end(), rng);
      cursor = 0;
    }
    const std::span<const std::size_t> batch(order.data() + cursor, config.batch_size);
    cursor += config.batch_size;
    const StepMetrics step = train_step(batch, train, result.params, adam, model_config, config, i, rng);

    const std::uint64_t done = i + 1;
    if (done % config.eval_every != 0) continue;
    if (valid_set.size() == 0) throw ContractError("validation split is empty");
    const CandidateDatabase db =
        inference_database(train, config.candidates_infer, config.seed, result.params, model_config);
    const SampleOutcomes outcomes = evaluate_samples(result.params, model_config, valid_set, db, {});
    const DualAccuracy acc = dual_accuracy(outcomes);
    const auto flags = outcomes.correct();
    const ConfidenceSplit split = confidence_split_means(outcomes.confidence, flags);
    result.log.records.push_back(EvalRecord{done, step.loss, acc.input, acc.prototype, split.correct, split.incorrect});

    const double selected = static_cast<double>(std::count(flags.begin(), flags.end(), 1)) /
                            static_cast<double>(flags.size());
    if (selected > best_accuracy) {
      best_accuracy = selected;
      result.best_params = result.params;
      result.best_iteration = done;
    }
  }
  if (result.log.records.empty()) {
    result.best_params = result.params;
    result.best_iteration = config.iterations;
  }

  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    RunConfig run = config_text.empty() ? RunConfig{} : parse_config_text(config_text);
    run.model = model_config;
    run.train = config;
    save_checkpoint(*out_dir / "final.ckpt", result.params, run);
    save_checkpoint(*out_dir / "best.ckpt", result.best_params, run);
  }
  for (Parameter* p : result.params.list()) p->zero_grad();
  return result;
}

}  // namespace protoattend
