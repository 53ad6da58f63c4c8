#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "protoattend/config.hpp"
#include "protoattend/dataset.hpp"

namespace protoattend {

struct Splits {
  Dataset train;
  Dataset valid;
  Dataset test;
};

/// Loads and prepares the three splits described by `config`. Train and
/// valid are consecutive row ranges of the training source; test comes from
/// the test source. Synthetic sources draw each split with its own seed.
Splits load_splits(const DataConfig& config);

struct NoiseBenchCell {
  std::string method;  // "baseline" or "protoattend"
  double ratio = 0.0;
  double lambda_sparse = 0.0;
  std::optional<double> valid_accuracy;
  std::optional<double> test_accuracy;
  std::string error;  // non-empty when the cell failed
};

inline constexpr const char* kNoiseBenchHeader = "method,ratio,lambda_sparse,valid_accuracy,test_accuracy,status";

/// For each ratio, trains the baseline (AlphaZero objective, predictions at
/// alpha 0) and ProtoAttend (sparsemax, predictions at alpha 1) once per
/// lambda in `lambda_grid`, keeping the lambda with the best validation
/// accuracy. Validation labels stay clean. Cell k of the run is seeded with
/// base.train.seed + k. A failed cell is reported and the bench moves on.
std::vector<NoiseBenchCell> noise_benchmark(const Splits& splits, const RunConfig& base,
                                            std::span<const double> ratios, std::span<const double> lambda_grid,
                                            std::ostream* progress = nullptr);

void write_noise_bench_csv(std::ostream& out, std::span<const NoiseBenchCell> cells);

}  // namespace protoattend
