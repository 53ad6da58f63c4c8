#include "protoattend/experiments.hpp"

#include <algorithm>
#include <ostream>

#include "format.hpp"
#include "protoattend/error.hpp"
#include "protoattend/evaluation.hpp"
#include "protoattend/training.hpp"

namespace protoattend {

namespace {

using detail::format_double;

Dataset load_source(const DataConfig& config, bool test) {
  if (config.format == "idx") {
    return test ? load_idx(config.test_images, config.test_labels) : load_idx(config.train_images, config.train_labels);
  }
  if (config.format == "csv") {
    const std::string& path = test ? config.test_csv : config.train_csv;
    if (path.empty()) throw ContractError(std::string("data.") + (test ? "test_csv" : "train_csv") + " is not set");
    return load_csv(path, config.label_column);
  }
  throw ContractError("unknown data format '" + config.format + "'");
}


}  // namespace

Splits load_splits(const DataConfig& config) {
  Splits splits;
  if (config.format == "synthetic") {
    const auto draw = [&](std::uint64_t offset) {
      return synthetic_gaussians(config.synthetic_classes, config.synthetic_dim, config.synthetic_per_class,
                                 config.synthetic_sigma, config.synthetic_seed + offset);
    };
    splits.train = draw(0);
    splits.valid = draw(1);
    splits.test = draw(2);
  } else {
    Dataset source = load_source(config, false);
    if (config.valid_size >= source.size()) {
      throw ContractError("valid_size " + std::to_string(config.valid_size) + " leaves no training rows out of " +
                          std::to_string(source.size()));
    }
    const std::size_t train_rows = config.train_size == 0 ? source.size() - config.valid_size : config.train_size;
    if (train_rows + config.valid_size > source.size()) {
      throw ContractError("train_size + valid_size = " + std::to_string(train_rows + config.valid_size) +
                          " exceeds the " + std::to_string(source.size()) + " available rows");
    }
    splits.train = source.slice(0, train_rows);
    splits.valid = source.slice(train_rows, train_rows + config.valid_size);
    splits.test = load_source(config, true);
    if (config.test_size > 0 && config.test_size < splits.test.size()) {
      splits.test = splits.test.slice(0, config.test_size);
    }
  }
  if (splits.train.input_dim() != splits.test.input_dim()) {
    throw IncompatibleError("train and test sources have different feature counts (" +
                            std::to_string(splits.train.input_dim()) + " vs " +
                            std::to_string(splits.test.input_dim()) + ")");
  }
  const std::size_t classes = std::max({splits.train.num_classes, splits.valid.num_classes, splits.test.num_classes});
  for (Dataset* d : {&splits.train, &splits.valid, &splits.test}) {
    d->num_classes = classes;
    if (config.standardize) *d = standardize_per_sample(std::move(*d));
  }
  splits.train.split = Split::Train;
  splits.valid.split = Split::Valid;
  splits.test.split = Split::Test;
  return splits;
}

std::vector<NoiseBenchCell> noise_benchmark(const Splits& splits, const RunConfig& base,
                                            std::span<const double> ratios, std::span<const double> lambda_grid,
                                            std::ostream* progress) {
  for (double r : ratios) {
    if (!(r >= 0.0 && r < 1.0)) throw ContractError("noise ratio " + format_double(r) + " outside [0, 1)");
  }
  if (lambda_grid.empty()) throw ContractError("lambda grid is empty");

  std::vector<NoiseBenchCell> cells;
  std::uint64_t cell_index = 0;

  const auto run = [&](NoiseBenchCell cell, ModelConfig model) {
    TrainConfig train_cfg = base.train;
    train_cfg.noise_ratio = cell.ratio;
    train_cfg.seed = base.train.seed + cell_index++;
    try {
      const TrainResult result = train(splits.train, splits.valid, train_cfg, model);
      const CandidateDatabase db =
          inference_database(splits.train, train_cfg.candidates_infer, train_cfg.seed, result.best_params, model);
      const auto accuracy = [&](const Dataset& d) {
        const auto flags = evaluate_samples(result.best_params, model, d, db, {}).correct();
        return static_cast<double>(std::count(flags.begin(), flags.end(), 1)) / static_cast<double>(flags.size());
      };
      cell.valid_accuracy = accuracy(splits.valid);
      cell.test_accuracy = accuracy(splits.test);
    } catch (const std::exception& e) {
      cell.error = e.what();
    }
    if (progress) {
      *progress << cell.method << " ratio=" << cell.ratio << " lambda=" << cell.lambda_sparse << " -> "
                << (cell.error.empty() ? "test " + format_double(*cell.test_accuracy) : "failed: " + cell.error)
                << std::endl;
    }
    return cell;
  };

  for (double ratio : ratios) {
    ModelConfig baseline = base.model;
    baseline.objective = ObjectiveVariant::AlphaZero;
    baseline.alpha_predict = 0.0;
    baseline.lambda_sparse = 0.0;
    baseline.lambda_conf = 0.0;
    cells.push_back(run(NoiseBenchCell{"baseline", ratio, 0.0, {}, {}, {}}, baseline));

    std::optional<NoiseBenchCell> best;
    std::string failures;
    for (double lambda : lambda_grid) {
      ModelConfig proto = base.model;
      proto.normalization = Normalization::Sparsemax;
      proto.alpha_predict = 1.0;
      proto.lambda_sparse = lambda;
      NoiseBenchCell cell = run(NoiseBenchCell{"protoattend", ratio, lambda, {}, {}, {}}, proto);
      if (!cell.error.empty()) {
        failures += (failures.empty() ? "" : "; ") + cell.error;
        continue;
      }
      if (!best || *cell.valid_accuracy > *best->valid_accuracy) best = cell;
    }
    if (best) {
      cells.push_back(*best);
    } else {
      cells.push_back(NoiseBenchCell{"protoattend", ratio, 0.0, {}, {}, failures});
    }
  }
  return cells;
}

void write_noise_bench_csv(std::ostream& out, std::span<const NoiseBenchCell> cells) {
  out << kNoiseBenchHeader << "\n";
  for (const auto& c : cells) {
    out << c.method << "," << format_double(c.ratio) << "," << format_double(c.lambda_sparse) << ","
        << (c.valid_accuracy ? format_double(*c.valid_accuracy) : "") << ","
        << (c.test_accuracy ? format_double(*c.test_accuracy) : "") << "," << (c.error.empty() ? "ok" : "failed")
        << "\n";
  }
}

}  // namespace protoattend
