#pragma once

#include <span>
#include <vector>

#include "protoattend/tensor.hpp"

namespace protoattend {

enum class Normalization { Softmax, Sparsemax };

// Support of a sparsemax output: entries with z[j] > threshold.
struct SparsemaxSupport {
  std::vector<bool> mask;
  double threshold = 0.0;

  std::size_t count() const;
};

struct SparsemaxResult {
  std::vector<double> weights;
  SparsemaxSupport support;
};

// Numerically stable exp(z - max z) / sum. Throws ContractError on empty input.
std::vector<double> softmax(std::span<const double> z);
void softmax_into(std::span<const double> z, std::span<double> out);

/// Euclidean projection of `z` onto the probability simplex.
///
/// Sorts a copy of `z` descending and picks the largest k with
/// 1 + k * z_(k) > sum_{j<=k} z_(j); the threshold is (sum_{j<=k} z_(j) - 1) / k
/// and the output is max(z - threshold, 0).
SparsemaxResult sparsemax(std::span<const double> z);

// Allocation-light variant used by the row kernels. `scratch` is resized as
// needed. Returns the threshold.
double sparsemax_into(std::span<const double> z, std::span<double> out, std::vector<double>& scratch);

/// Jacobian-vector product of sparsemax at the point whose support is given:
/// out = s * (upstream - mean of upstream over the support).
std::vector<double> sparsemax_jvp(const SparsemaxSupport& support, std::span<const double> upstream);

// Row-wise normalization of a score matrix.
Tensor normalize_rows(const Tensor& scores, Normalization normalization);

inline constexpr double kEntropyEpsilon = 1e-10;

// Mean row entropy: -(1/B) sum_i sum_j p_ij log(p_ij + eps).
double entropy_sparsity(const Tensor& weights, double eps = kEntropyEpsilon);

// Mean of -log softmax(logits_i)[label_i]. Labels must be in [0, C).
double softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

// Index of the largest entry; lowest index on ties.
std::size_t argmax(std::span<const double> values);

}  // namespace protoattend
