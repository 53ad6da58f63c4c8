#include "protoattend/simplex.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "protoattend/error.hpp"

namespace protoattend {

std::size_t SparsemaxSupport::count() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
}

void softmax_into(std::span<const double> z, std::span<double> out) {
  if (z.empty()) throw ContractError("softmax of an empty vector");
  const double peak = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  for (std::size_t j = 0; j < z.size(); ++j) {
    out[j] = std::exp(z[j] - peak);
    total += out[j];
  }
  for (std::size_t j = 0; j < z.size(); ++j) out[j] /= total;
}

std::vector<double> softmax(std::span<const double> z) {
  std::vector<double> out(z.size());
  softmax_into(z, out);
  return out;
}

double sparsemax_into(std::span<const double> z, std::span<double> out, std::vector<double>& scratch) {
  if (z.empty()) throw ContractError("sparsemax of an empty vector");
  scratch.assign(z.begin(), z.end());
  std::sort(scratch.begin(), scratch.end(), std::greater<>());

  double cumulative = 0.0;
  double support_sum = scratch[0];
  std::size_t support_size = 1;
  for (std::size_t k = 1; k <= scratch.size(); ++k) {
    cumulative += scratch[k - 1];
    if (1.0 + static_cast<double>(k) * scratch[k - 1] > cumulative) {
      support_size = k;
      support_sum = cumulative;
    }
  }
  const double threshold = (support_sum - 1.0) / static_cast<double>(support_size);
  for (std::size_t j = 0; j < z.size(); ++j) out[j] = std::max(z[j] - threshold, 0.0);
  return threshold;
}

SparsemaxResult sparsemax(std::span<const double> z) {
  SparsemaxResult result;
  result.weights.resize(z.size());
  std::vector<double> scratch;
  result.support.threshold = sparsemax_into(z, result.weights, scratch);
  result.support.mask.resize(z.size());
  for (std::size_t j = 0; j < z.size(); ++j) result.support.mask[j] = result.weights[j] > 0.0;
  return result;
}

std::vector<double> sparsemax_jvp(const SparsemaxSupport& support, std::span<const double> upstream) {
  if (support.mask.size() != upstream.size()) {
    throw DimensionError("sparsemax_jvp: support of size " + std::to_string(support.mask.size()) +
                         " vs upstream of size " + std::to_string(upstream.size()));
  }
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t j = 0; j < upstream.size(); ++j) {
    if (support.mask[j]) {
      total += upstream[j];
      ++count;
    }
  }
  const double mean = count ? total / static_cast<double>(count) : 0.0;
  std::vector<double> out(upstream.size(), 0.0);
  for (std::size_t j = 0; j < upstream.size(); ++j) {
    if (support.mask[j]) out[j] = upstream[j] - mean;
  }
  return out;
}

Tensor normalize_rows(const Tensor& scores, Normalization normalization) {
  Tensor out(scores.shape());
  std::vector<double> scratch;
  for (std::size_t i = 0; i < scores.rows(); ++i) {
    if (normalization == Normalization::Softmax) {
      softmax_into(scores.row(i), out.row(i));
    } else {
      sparsemax_into(scores.row(i), out.row(i), scratch);
    }
  }
  return out;
}

double entropy_sparsity(const Tensor& weights, double eps) {
  const std::size_t batch = weights.rows();
  if (batch == 0) return 0.0;
  double total = 0.0;
  for (double p : weights.data()) total -= p * std::log(p + eps);
  return total / static_cast<double>(batch);
}

double softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  const std::size_t batch = logits.rows();
  const std::size_t classes = logits.cols();
  if (labels.size() != batch) {
    throw DimensionError("cross entropy: " + std::to_string(labels.size()) + " labels for logits " +
                         shape_string(logits.shape()));
  }
  if (batch == 0) throw ContractError("cross entropy over an empty batch");
  double total = 0.0;
  for (std::size_t i = 0; i < batch; ++i) {
    const int label = labels[i];
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw ContractError("label " + std::to_string(label) + " outside [0, " + std::to_string(classes) + ")");
    }
    auto row = logits.row(i);
    const double peak = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (double v : row) sum += std::exp(v - peak);
    total += std::log(sum) + peak - row[static_cast<std::size_t>(label)];
  }
  return total / static_cast<double>(batch);
}

std::size_t argmax(std::span<const double> values) {
  if (values.empty()) throw ContractError("argmax of an empty vector");
  return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

}  // namespace protoattend
