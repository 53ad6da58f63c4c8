#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "protoattend/dataset.hpp"
#include "protoattend/inference.hpp"

namespace protoattend {

inline constexpr double kDefaultFractions[] = {0.5, 0.9, 0.95};

// Per-sample results of running a model over a dataset.
struct SampleOutcomes {
  std::vector<int> labels;
  std::vector<int> pred_input;      // argmax ŷ(0)
  std::vector<int> pred_prototype;  // argmax ŷ(1)
  std::vector<int> predicted;       // argmax ŷ(alpha_predict)
  std::vector<double> confidence;
  std::vector<double> fractions;
  std::vector<std::vector<std::size_t>> prototype_counts;  // [fraction][sample]

  std::size_t size() const { return labels.size(); }
  std::vector<std::uint8_t> correct() const;
};

/// Evaluates `dataset` in row chunks against a precomputed database. Chunks
/// are spread over PROTOATTEND_THREADS workers (default 1); results do not
/// depend on the worker count.
SampleOutcomes evaluate_samples(const ModelParameters& params, const ModelConfig& config, const Dataset& dataset,
                                const CandidateDatabase& db,
                                std::span<const double> fractions = kDefaultFractions);

// Worker count from PROTOATTEND_THREADS, at least 1.
std::size_t evaluation_threads();

struct DualAccuracy {
  double input = 0.0;      // ŷ(0)
  double prototype = 0.0;  // ŷ(1)
};

DualAccuracy dual_accuracy(const SampleOutcomes& outcomes);
DualAccuracy dual_accuracy(const ModelParameters& params, const ModelConfig& config, const Dataset& dataset,
                           const CandidateDatabase& db);

// Smallest k such that the k largest weights sum to at least `fraction`.
std::size_t prototype_count(std::span<const double> weights, double fraction);

// Lower median for even counts.
std::size_t lower_median(std::vector<std::size_t> values);

std::vector<std::size_t> median_prototype_counts(const SampleOutcomes& outcomes);
std::vector<std::size_t> median_prototype_counts(const ModelParameters& params, const ModelConfig& config,
                                                 const Dataset& dataset, const CandidateDatabase& db,
                                                 std::span<const double> fractions = kDefaultFractions);

struct ReliabilityBin {
  double lower = 0.0;
  double upper = 0.0;
  std::size_t count = 0;
  std::optional<double> accuracy;  // absent for empty bins
};

// Equal-width bins [j/n, (j+1)/n); the last bin is closed at 1.
std::vector<ReliabilityBin> reliability_bins(std::span<const double> confidences,
                                             std::span<const std::uint8_t> correct, std::size_t n_bins = 10);

struct SweepPoint {
  double threshold = 0.0;
  double fraction_predicted = 0.0;
  double accuracy = 0.0;
};

// Thresholds must ascend. Points whose retained subset is empty are omitted.
std::vector<SweepPoint> confidence_sweep(std::span<const double> confidences, std::span<const std::uint8_t> correct,
                                         std::span<const double> thresholds);
std::vector<double> default_sweep_thresholds();

struct RocPoint {
  double false_positive_rate = 0.0;
  double true_positive_rate = 0.0;
};

struct OodResult {
  std::vector<RocPoint> roc;
  double auc = 0.0;
};

/// In-distribution samples are the positive class. The AUC is the rank
/// statistic P(in > out) + 0.5 P(in == out); the curve sweeps thresholds over
/// the union of scores from (0, 0) to (1, 1).
OodResult roc_auc(std::span<const double> in_scores, std::span<const double> out_scores);
double trapezoid_area(std::span<const RocPoint> roc);

struct ConfidenceSplit {
  std::optional<double> correct;
  std::optional<double> incorrect;
};

ConfidenceSplit confidence_split_means(std::span<const double> confidences, std::span<const std::uint8_t> correct);

std::vector<PredictionReport> export_prototypes(const ModelParameters& params, const ModelConfig& config,
                                                const Tensor& inputs, const CandidateDatabase& db, std::size_t top_m);

// CSV outputs. Headers are exposed so callers and tests agree on them.
inline constexpr const char* kSidecarHeader = "input_id,predicted_class,confidence,rank,candidate_id,candidate_label,weight";
inline constexpr const char* kBinsHeader = "lower,upper,count,accuracy";
inline constexpr const char* kSweepHeader = "threshold,fraction_predicted,accuracy";
inline constexpr const char* kRocHeader = "false_positive_rate,true_positive_rate";
inline constexpr const char* kPrototypeCountHeader = "fraction,median_prototypes";

void write_sidecar(std::ostream& out, std::size_t input_id, const PredictionReport& report, bool header = true);
void write_bins_csv(std::ostream& out, std::span<const ReliabilityBin> bins);
void write_sweep_csv(std::ostream& out, std::span<const SweepPoint> points);
void write_roc_csv(std::ostream& out, const OodResult& result);

}  // namespace protoattend
