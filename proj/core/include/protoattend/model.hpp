#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "protoattend/autodiff.hpp"
#include "protoattend/simplex.hpp"
#include "protoattend/tensor.hpp"

namespace protoattend {

// Training objectives, named by which decision branches ŷ(alpha) they train.
enum class ObjectiveVariant {
  AlphaZero,          // L(ŷ(0))
  AlphaOne,           // L(ŷ(1))
  AlphaHalf,          // L(ŷ(0.5))
  SumZeroOne,         // L(ŷ(0)) + L(ŷ(1))
  AnnealedZeroToOne,  // (1 - i/N) L(ŷ(0)) + (i/N) L(ŷ(1))
  SumZeroOneHalf,     // L(ŷ(0)) + L(ŷ(1)) + L(ŷ(0.5))
};

std::string_view to_string(ObjectiveVariant variant);
std::optional<ObjectiveVariant> parse_objective(std::string_view name);
std::string_view to_string(Normalization normalization);
std::optional<Normalization> parse_normalization(std::string_view name);

struct ModelConfig {
  std::size_t input_dim = 784;
  std::vector<std::size_t> hidden_dims = {256, 128};
  std::size_t num_classes = 10;
  std::size_t attention_dim = 16;
  std::size_t value_dim = 64;
  Normalization normalization = Normalization::Sparsemax;
  double alpha_predict = 1.0;
  double lambda_sparse = 0.0;
  double lambda_conf = 0.0;
  ObjectiveVariant objective = ObjectiveVariant::SumZeroOneHalf;

  // Throws ContractError describing the first violated invariant.
  void validate() const;
  std::size_t trunk_output_dim() const { return hidden_dims.empty() ? input_dim : hidden_dims.back(); }
};

struct DenseLayer {
  Parameter weight;  // [in x out]
  Parameter bias;    // [out]
};

/// All trainable tensors. One trunk serves inputs and candidates alike; the
/// key/query heads carry the relation function and the decision layer maps
/// value mixtures to logits.
struct ModelParameters {
  std::vector<DenseLayer> trunk;
  DenseLayer key_head;
  DenseLayer query_head;
  DenseLayer value_head;
  Parameter value_gain;
  Parameter value_bias;
  DenseLayer decision;

  // Fan-in scaled uniform weights on +-sqrt(6 / fan_in), zero biases, unit
  // layer-norm gain. Deterministic in `seed`.
  static ModelParameters initialize(const ModelConfig& config, std::uint64_t seed);

  // Fixed order: trunk layers, key, query, value, value norm, decision.
  std::vector<Parameter*> list();
  std::vector<const Parameter*> list() const;
  void zero_grad();
  // FNV-1a digest over names, shapes and raw value bytes.
  std::uint64_t fingerprint() const;
};

// Graph handles for every parameter tensor.
struct BoundParameters {
  std::vector<std::pair<Var, Var>> trunk;
  std::pair<Var, Var> key_head, query_head, value_head, decision;
  Var value_gain, value_bias;
};

// Trainable binding: backward() accumulates into the parameters' gradients.
BoundParameters bind_trainable(Graph& g, ModelParameters& params);
// Constant binding for inference.
BoundParameters bind_constant(Graph& g, const ModelParameters& params);

struct EncodedBatch {
  Tensor values;   // [N x d_out], layer-normalized
  Tensor queries;  // [N x d_att]
  Tensor keys;     // [N x d_att]
};

struct EncodedVars {
  Var values, queries, keys;
};

EncodedVars encode(Graph& g, const BoundParameters& params, Var inputs);
EncodedBatch encode(const Tensor& inputs, const ModelParameters& params, const ModelConfig& config);

// Row i is normalization(keys * queries_i / sqrt(d_att)) over the D candidates.
Var relational_attention(Graph& g, Var queries, Var candidate_keys, Normalization normalization);
Tensor relational_attention(const Tensor& queries, const Tensor& candidate_keys, Normalization normalization);

// Row i is (1 - alpha) * values[i] + alpha * sum_j weights[i, j] * candidate_values[j].
Var mix_values(Graph& g, Var values, Var candidate_values, Var weights, double alpha);
Tensor mix_values(const Tensor& values, const Tensor& candidate_values, const Tensor& weights, double alpha);

// Single linear map to class logits.
Var decide(Graph& g, const BoundParameters& params, Var mixed);
Tensor decide(const Tensor& mixed, const ModelParameters& params);

// Iteration position, needed by the annealed objective.
struct TrainingProgress {
  std::uint64_t iteration = 0;
  std::uint64_t total = 1;
};

// Each term is the weighted contribution it makes to `total`.
struct ObjectiveTerms {
  Var total;
  std::optional<Var> alpha0, alpha1, alpha_half, sparse, conf;
};

struct LossBreakdown {
  double total = 0.0;
  double alpha0 = 0.0;
  double alpha1 = 0.0;
  double alpha_half = 0.0;
  double sparse = 0.0;
  double conf = 0.0;
};

/// Builds the training loss for a batch against a candidate database. Inputs
/// and candidates are encoded in one trunk pass; all ŷ(alpha) terms share the
/// same attention matrix. Regularizers are added when their coefficient is
/// positive.
ObjectiveTerms objective(Graph& g, const BoundParameters& params, const ModelConfig& config, const Tensor& inputs,
                         std::span<const int> labels, const Tensor& candidates,
                         std::span<const int> candidate_labels, std::optional<TrainingProgress> progress = {});

// True when the objective reads the attention matrix at all.
bool objective_uses_attention(const ModelConfig& config);

/// Evaluates the objective; when `with_gradients` is set, the parameter
/// gradients are zeroed and then filled by backward().
LossBreakdown evaluate_objective(ModelParameters& params, const ModelConfig& config, const Tensor& inputs,
                                 std::span<const int> labels, const Tensor& candidates,
                                 std::span<const int> candidate_labels, std::optional<TrainingProgress> progress,
                                 bool with_gradients);

// Total weight on candidates whose label equals `predicted`.
double confidence_conformity(std::span<const double> weights, std::span<const int> candidate_labels, int predicted);

// -(1/B) sum_ij p_ij [candidate_labels_j == labels_i], in [-1, 0].
double confidence_regularizer(const Tensor& weights, std::span<const int> candidate_labels,
                              std::span<const int> labels);

}  // namespace protoattend
