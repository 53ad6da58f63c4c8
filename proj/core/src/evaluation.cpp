#include "protoattend/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <ostream>
#include <string>
#include <thread>

#include "format.hpp"
#include "protoattend/error.hpp"

namespace protoattend {

namespace {

using detail::format_double;

constexpr std::size_t kChunkRows = 256;

void check_flags(std::span<const double> confidences, std::span<const std::uint8_t> correct) {
  if (confidences.size() != correct.size()) {
    throw DimensionError(std::to_string(confidences.size()) + " confidences for " + std::to_string(correct.size()) +
                         " correctness flags");
  }
}


}  // namespace

std::vector<std::uint8_t> SampleOutcomes::correct() const {
  std::vector<std::uint8_t> out(size());
  for (std::size_t i = 0; i < size(); ++i) out[i] = predicted[i] == labels[i] ? 1 : 0;
  return out;
}

std::size_t evaluation_threads() {
  if (const char* env = std::getenv("PROTOATTEND_THREADS")) {
    const long value = std::strtol(env, nullptr, 10);
    if (value > 0) return static_cast<std::size_t>(value);
  }
  return 1;
}

SampleOutcomes evaluate_samples(const ModelParameters& params, const ModelConfig& config, const Dataset& dataset,
                                const CandidateDatabase& db, std::span<const double> fractions) {
  const std::size_t n = dataset.size();
  SampleOutcomes out;
  out.labels = dataset.labels;
  out.pred_input.resize(n);
  out.pred_prototype.resize(n);
  out.predicted.resize(n);
  out.confidence.resize(n);
  out.fractions.assign(fractions.begin(), fractions.end());
  out.prototype_counts.assign(fractions.size(), std::vector<std::size_t>(n));

  const std::size_t chunks = (n + kChunkRows - 1) / kChunkRows;
  auto run_chunk = [&](std::size_t c) {
    const std::size_t begin = c * kChunkRows;
    const std::size_t end = std::min(n, begin + kChunkRows);
    const BatchPrediction batch = predict_batch(dataset.features.slice_rows(begin, end), db, params, config);
    for (std::size_t r = 0; r < end - begin; ++r) {
      const std::size_t i = begin + r;
      out.pred_input[i] = static_cast<int>(argmax(batch.logits_input.row(r)));
      out.pred_prototype[i] = static_cast<int>(argmax(batch.logits_prototype.row(r)));
      out.predicted[i] = batch.predicted[r];
      out.confidence[i] = batch.confidence[r];
      for (std::size_t f = 0; f < fractions.size(); ++f) {
        out.prototype_counts[f][i] = prototype_count(batch.weights.row(r), fractions[f]);
      }
    }
  };

  const std::size_t workers = std::min(evaluation_threads(), std::max<std::size_t>(chunks, 1));
  if (workers <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) run_chunk(c);
  } else {
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t c = w; c < chunks; c += workers) run_chunk(c);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    pool.clear();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  return out;
}

DualAccuracy dual_accuracy(const SampleOutcomes& outcomes) {
  if (outcomes.size() == 0) throw ContractError("accuracy over an empty dataset");
  std::size_t hits_input = 0, hits_proto = 0;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    hits_input += outcomes.pred_input[i] == outcomes.labels[i];
    hits_proto += outcomes.pred_prototype[i] == outcomes.labels[i];
  }
  const auto n = static_cast<double>(outcomes.size());
  return {static_cast<double>(hits_input) / n, static_cast<double>(hits_proto) / n};
}

DualAccuracy dual_accuracy(const ModelParameters& params, const ModelConfig& config, const Dataset& dataset,
                           const CandidateDatabase& db) {
  if (dataset.size() == 0) throw ContractError("accuracy over an empty dataset");
  return dual_accuracy(evaluate_samples(params, config, dataset, db, {}));
}

std::size_t prototype_count(std::span<const double> weights, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ContractError("prototype fraction must lie in (0, 1]");
  std::vector<double> sorted(weights.begin(), weights.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  // Rounding in the cumulative sum must not cost an extra prototype.
  constexpr double kSlack = 1e-12;
  double cumulative = 0.0;
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    cumulative += sorted[k];
    if (cumulative >= fraction - kSlack) return k + 1;
  }
  return sorted.size();
}

std::size_t lower_median(std::vector<std::size_t> values) {
  if (values.empty()) throw ContractError("median of an empty set");
  const std::size_t mid = (values.size() - 1) / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  return values[mid];
}

std::vector<std::size_t> median_prototype_counts(const SampleOutcomes& outcomes) {
  std::vector<std::size_t> out;
  for (const auto& counts : outcomes.prototype_counts) out.push_back(lower_median(counts));
  return out;
}

std::vector<std::size_t> median_prototype_counts(const ModelParameters& params, const ModelConfig& config,
                                                 const Dataset& dataset, const CandidateDatabase& db,
                                                 std::span<const double> fractions) {
  return median_prototype_counts(evaluate_samples(params, config, dataset, db, fractions));
}

std::vector<ReliabilityBin> reliability_bins(std::span<const double> confidences,
                                             std::span<const std::uint8_t> correct, std::size_t n_bins) {
  check_flags(confidences, correct);
  if (n_bins == 0) throw ContractError("reliability diagram needs at least one bin");
  const auto n = static_cast<double>(n_bins);
  auto edge = [&](std::size_t j) { return static_cast<double>(j) / n; };

  std::vector<ReliabilityBin> bins(n_bins);
  std::vector<std::size_t> hits(n_bins, 0);
  for (std::size_t j = 0; j < n_bins; ++j) {
    bins[j].lower = edge(j);
    bins[j].upper = edge(j + 1);
  }
  for (std::size_t i = 0; i < confidences.size(); ++i) {
    const double c = confidences[i];
    if (!(c >= 0.0 && c <= 1.0)) throw ContractError("confidence " + format_double(c) + " outside [0, 1]");
    auto j = static_cast<std::size_t>(std::min(std::floor(c * n), n - 1.0));
    // Correct for rounding in c * n against the exact edge values.
    while (j + 1 < n_bins && c >= edge(j + 1)) ++j;
    while (j > 0 && c < edge(j)) --j;
    bins[j].count += 1;
    hits[j] += correct[i] ? 1 : 0;
  }
  for (std::size_t j = 0; j < n_bins; ++j) {
    if (bins[j].count > 0) bins[j].accuracy = static_cast<double>(hits[j]) / static_cast<double>(bins[j].count);
  }
  return bins;
}

std::vector<SweepPoint> confidence_sweep(std::span<const double> confidences, std::span<const std::uint8_t> correct,
                                         std::span<const double> thresholds) {
  check_flags(confidences, correct);
  if (!std::is_sorted(thresholds.begin(), thresholds.end())) {
    throw ContractError("sweep thresholds must be sorted ascending");
  }
  std::vector<SweepPoint> points;
  if (confidences.empty()) return points;
  for (double t : thresholds) {
    std::size_t kept = 0, hits = 0;
    for (std::size_t i = 0; i < confidences.size(); ++i) {
      if (confidences[i] >= t) {
        ++kept;
        hits += correct[i] ? 1 : 0;
      }
    }
    if (kept == 0) continue;
    points.push_back(SweepPoint{t, static_cast<double>(kept) / static_cast<double>(confidences.size()),
                                static_cast<double>(hits) / static_cast<double>(kept)});
  }
  return points;
}

std::vector<double> default_sweep_thresholds() {
  std::vector<double> out;
  for (int k = 0; k < 20; ++k) out.push_back(k / 20.0);
  out.push_back(0.999);
  return out;
}

OodResult roc_auc(std::span<const double> in_scores, std::span<const double> out_scores) {
  if (in_scores.empty() || out_scores.empty()) throw ContractError("ROC needs non-empty in- and out-of-distribution scores");
  std::vector<double> in_sorted(in_scores.begin(), in_scores.end());
  std::vector<double> out_sorted(out_scores.begin(), out_scores.end());
  std::sort(in_sorted.begin(), in_sorted.end());
  std::sort(out_sorted.begin(), out_sorted.end());

  // Rank statistic: pairs with in > out count 1, ties count one half.
  double wins = 0.0;
  for (double s : in_sorted) {
    const auto lower = std::lower_bound(out_sorted.begin(), out_sorted.end(), s);
    const auto upper = std::upper_bound(lower, out_sorted.end(), s);
    wins += static_cast<double>(lower - out_sorted.begin()) + 0.5 * static_cast<double>(upper - lower);
  }
  OodResult result;
  result.auc = wins / (static_cast<double>(in_sorted.size()) * static_cast<double>(out_sorted.size()));

  // Threshold sweep from above the largest score downwards: predict "in" when score >= t.
  std::vector<double> thresholds(in_sorted);
  thresholds.insert(thresholds.end(), out_sorted.begin(), out_sorted.end());
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  const auto n_in = static_cast<double>(in_sorted.size());
  const auto n_out = static_cast<double>(out_sorted.size());
  result.roc.push_back({0.0, 0.0});
  for (double t : thresholds) {
    const auto in_above = in_sorted.end() - std::lower_bound(in_sorted.begin(), in_sorted.end(), t);
    const auto out_above = out_sorted.end() - std::lower_bound(out_sorted.begin(), out_sorted.end(), t);
    result.roc.push_back({static_cast<double>(out_above) / n_out, static_cast<double>(in_above) / n_in});
  }
  return result;
}

double trapezoid_area(std::span<const RocPoint> roc) {
  double area = 0.0;
  for (std::size_t k = 1; k < roc.size(); ++k) {
    area += (roc[k].false_positive_rate - roc[k - 1].false_positive_rate) *
            (roc[k].true_positive_rate + roc[k - 1].true_positive_rate) * 0.5;
  }
  return area;
}

ConfidenceSplit confidence_split_means(std::span<const double> confidences, std::span<const std::uint8_t> correct) {
  check_flags(confidences, correct);
  double sum_ok = 0.0, sum_bad = 0.0;
  std::size_t n_ok = 0, n_bad = 0;
  for (std::size_t i = 0; i < confidences.size(); ++i) {
    if (correct[i]) {
      sum_ok += confidences[i];
      ++n_ok;
    } else {
      sum_bad += confidences[i];
      ++n_bad;
    }
  }
  ConfidenceSplit split;
  if (n_ok) split.correct = sum_ok / static_cast<double>(n_ok);
  if (n_bad) split.incorrect = sum_bad / static_cast<double>(n_bad);
  return split;
}

std::vector<PredictionReport> export_prototypes(const ModelParameters& params, const ModelConfig& config,
                                                const Tensor& inputs, const CandidateDatabase& db, std::size_t top_m) {
  if (top_m < 1) throw ContractError("top_m must be at least 1");
  std::vector<PredictionReport> reports;
  for (std::size_t begin = 0; begin < inputs.rows(); begin += kChunkRows) {
    const std::size_t end = std::min(inputs.rows(), begin + kChunkRows);
    const BatchPrediction batch = predict_batch(inputs.slice_rows(begin, end), db, params, config);
    for (std::size_t r = 0; r < end - begin; ++r) {
      reports.push_back(make_report(batch.weights.row(r), batch.logits.row(r), db, top_m));
    }
  }
  return reports;
}

void write_sidecar(std::ostream& out, std::size_t input_id, const PredictionReport& report, bool header) {
  if (header) out << kSidecarHeader << "\n";
  for (std::size_t k = 0; k < report.prototypes.size(); ++k) {
    const Prototype& p = report.prototypes[k];
    out << input_id << "," << report.predicted_class << "," << format_double(report.confidence) << "," << k + 1 << ","
        << p.source_index << "," << p.label << "," << format_double(p.weight) << "\n";
  }
}

void write_bins_csv(std::ostream& out, std::span<const ReliabilityBin> bins) {
  out << kBinsHeader << "\n";
  for (const auto& b : bins) {
    out << format_double(b.lower) << "," << format_double(b.upper) << "," << b.count << ","
        << (b.accuracy ? format_double(*b.accuracy) : std::string()) << "\n";
  }
}

void write_sweep_csv(std::ostream& out, std::span<const SweepPoint> points) {
  out << kSweepHeader << "\n";
  for (const auto& p : points) {
    out << format_double(p.threshold) << "," << format_double(p.fraction_predicted) << ","
        << format_double(p.accuracy) << "\n";
  }
}

void write_roc_csv(std::ostream& out, const OodResult& result) {
  out << kRocHeader << "\n";
  for (const auto& p : result.roc) {
    out << format_double(p.false_positive_rate) << "," << format_double(p.true_positive_rate) << "\n";
  }
}

}  // namespace protoattend
