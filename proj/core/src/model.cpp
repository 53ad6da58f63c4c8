#include "protoattend/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>

#include "protoattend/error.hpp"

namespace protoattend {

namespace {

constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

void fnv_mix(std::uint64_t& hash, const void* bytes, std::size_t length) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  for (std::size_t k = 0; k < length; ++k) {
    hash ^= p[k];
    hash *= kFnvPrime;
  }
}

DenseLayer make_dense(const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Tensor weight({in, out});
  for (double& w : weight.storage()) w = dist(rng);
  return DenseLayer{Parameter(name + ".weight", std::move(weight)), Parameter(name + ".bias", Tensor({out}))};
}

template <typename Params, typename Bind>
BoundParameters bind_with(Params& params, Bind bind) {
  BoundParameters bound;
  for (auto& layer : params.trunk) bound.trunk.emplace_back(bind(layer.weight), bind(layer.bias));
  bound.key_head = {bind(params.key_head.weight), bind(params.key_head.bias)};
  bound.query_head = {bind(params.query_head.weight), bind(params.query_head.bias)};
  bound.value_head = {bind(params.value_head.weight), bind(params.value_head.bias)};
  bound.value_gain = bind(params.value_gain);
  bound.value_bias = bind(params.value_bias);
  bound.decision = {bind(params.decision.weight), bind(params.decision.bias)};
  return bound;
}

}  // namespace

std::string_view to_string(ObjectiveVariant variant) {
  switch (variant) {
    case ObjectiveVariant::AlphaZero: return "alpha_zero";
    case ObjectiveVariant::AlphaOne: return "alpha_one";
    case ObjectiveVariant::AlphaHalf: return "alpha_half";
    case ObjectiveVariant::SumZeroOne: return "sum_zero_one";
    case ObjectiveVariant::AnnealedZeroToOne: return "annealed_zero_to_one";
    case ObjectiveVariant::SumZeroOneHalf: return "sum_zero_one_half";
  }
  return "unknown";
}

std::optional<ObjectiveVariant> parse_objective(std::string_view name) {
  for (auto v : {ObjectiveVariant::AlphaZero, ObjectiveVariant::AlphaOne, ObjectiveVariant::AlphaHalf,
                 ObjectiveVariant::SumZeroOne, ObjectiveVariant::AnnealedZeroToOne,
                 ObjectiveVariant::SumZeroOneHalf}) {
    if (to_string(v) == name) return v;
  }
  return std::nullopt;
}

std::string_view to_string(Normalization normalization) {
  return normalization == Normalization::Softmax ? "softmax" : "sparsemax";
}

std::optional<Normalization> parse_normalization(std::string_view name) {
  if (name == "softmax") return Normalization::Softmax;
  if (name == "sparsemax") return Normalization::Sparsemax;
  return std::nullopt;
}

void ModelConfig::validate() const {
  if (input_dim == 0) throw ContractError("input_dim must be positive");
  for (std::size_t h : hidden_dims) {
    if (h == 0) throw ContractError("hidden layer widths must be positive");
  }
  if (num_classes < 2) throw ContractError("num_classes must be at least 2");
  if (attention_dim < 1) throw ContractError("attention_dim must be at least 1");
  if (value_dim < 1) throw ContractError("value_dim must be at least 1");
  if (!(alpha_predict >= 0.0 && alpha_predict <= 1.0)) throw ContractError("alpha_predict must lie in [0, 1]");
  if (!(lambda_sparse >= 0.0)) throw ContractError("lambda_sparse must be non-negative");
  if (!(lambda_conf >= 0.0)) throw ContractError("lambda_conf must be non-negative");
}

ModelParameters ModelParameters::initialize(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  ModelParameters params;
  std::size_t width = config.input_dim;
  for (std::size_t k = 0; k < config.hidden_dims.size(); ++k) {
    params.trunk.push_back(make_dense("trunk." + std::to_string(k), width, config.hidden_dims[k], rng));
    width = config.hidden_dims[k];
  }
  params.key_head = make_dense("key_head", width, config.attention_dim, rng);
  params.query_head = make_dense("query_head", width, config.attention_dim, rng);
  params.value_head = make_dense("value_head", width, config.value_dim, rng);
  params.value_gain = Parameter("value_norm.gain", Tensor({config.value_dim}, 1.0));
  params.value_bias = Parameter("value_norm.bias", Tensor({config.value_dim}));
  params.decision = make_dense("decision", config.value_dim, config.num_classes, rng);
  return params;
}

std::vector<Parameter*> ModelParameters::list() {
  std::vector<Parameter*> out;
  for (auto& layer : trunk) {
    out.push_back(&layer.weight);
    out.push_back(&layer.bias);
  }
  for (DenseLayer* layer : {&key_head, &query_head, &value_head}) {
    out.push_back(&layer->weight);
    out.push_back(&layer->bias);
  }
  out.push_back(&value_gain);
  out.push_back(&value_bias);
  out.push_back(&decision.weight);
  out.push_back(&decision.bias);
  return out;
}

std::vector<const Parameter*> ModelParameters::list() const {
  auto mutable_list = const_cast<ModelParameters*>(this)->list();
  return {mutable_list.begin(), mutable_list.end()};
}

void ModelParameters::zero_grad() {
  for (Parameter* p : list()) p->zero_grad();
}

std::uint64_t ModelParameters::fingerprint() const {
  std::uint64_t hash = kFnvOffset;
  for (const Parameter* p : list()) {
    fnv_mix(hash, p->name.data(), p->name.size());
    for (std::uint64_t dim : p->value.shape()) fnv_mix(hash, &dim, sizeof dim);
    fnv_mix(hash, p->value.data().data(), p->value.size() * sizeof(double));
  }
  return hash;
}

BoundParameters bind_trainable(Graph& g, ModelParameters& params) {
  return bind_with(params, [&](Parameter& p) { return g.parameter(p); });
}

BoundParameters bind_constant(Graph& g, const ModelParameters& params) {
  return bind_with(params, [&](const Parameter& p) { return g.constant(p.value); });
}

EncodedVars encode(Graph& g, const BoundParameters& params, Var inputs) {
  Var h = inputs;
  for (const auto& [weight, bias] : params.trunk) h = ops::relu(g, ops::linear(g, h, weight, bias));
  Var keys = ops::relu(g, ops::linear(g, h, params.key_head.first, params.key_head.second));
  Var queries = ops::relu(g, ops::linear(g, h, params.query_head.first, params.query_head.second));
  Var values = ops::relu(g, ops::linear(g, h, params.value_head.first, params.value_head.second));
  values = ops::layer_norm(g, values, params.value_gain, params.value_bias);
  return EncodedVars{values, queries, keys};
}

EncodedBatch encode(const Tensor& inputs, const ModelParameters& params, const ModelConfig& config) {
  if (inputs.rank() != 2 || inputs.cols() != config.input_dim) {
    throw DimensionError("encode: inputs " + shape_string(inputs.shape()) + " but input_dim is " +
                         std::to_string(config.input_dim));
  }
  Graph g;
  const BoundParameters bound = bind_constant(g, params);
  const EncodedVars vars = encode(g, bound, g.constant(inputs));
  return EncodedBatch{g.value(vars.values), g.value(vars.queries), g.value(vars.keys)};
}

Var relational_attention(Graph& g, Var queries, Var candidate_keys, Normalization normalization) {
  const Tensor& q = g.value(queries);
  const Tensor& k = g.value(candidate_keys);
  if (k.rows() == 0) throw ContractError("relational attention needs at least one candidate");
  if (q.cols() != k.cols()) {
    throw DimensionError("relational attention: queries " + shape_string(q.shape()) + " vs keys " +
                         shape_string(k.shape()));
  }
  const double inv_sqrt_dim = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  Var scores = ops::scale(g, ops::matmul_nt(g, queries, candidate_keys), inv_sqrt_dim);
  return ops::normalize_rows(g, scores, normalization);
}

Tensor relational_attention(const Tensor& queries, const Tensor& candidate_keys, Normalization normalization) {
  Graph g;
  return g.value(relational_attention(g, g.constant(queries), g.constant(candidate_keys), normalization));
}

Var mix_values(Graph& g, Var values, Var candidate_values, Var weights, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ContractError("mix_values: alpha must lie in [0, 1]");
  return ops::lerp(g, values, ops::matmul(g, weights, candidate_values), alpha);
}

Tensor mix_values(const Tensor& values, const Tensor& candidate_values, const Tensor& weights, double alpha) {
  Graph g;
  return g.value(mix_values(g, g.constant(values), g.constant(candidate_values), g.constant(weights), alpha));
}

Var decide(Graph& g, const BoundParameters& params, Var mixed) {
  return ops::linear(g, mixed, params.decision.first, params.decision.second);
}

Tensor decide(const Tensor& mixed, const ModelParameters& params) {
  Graph g;
  Var logits = ops::linear(g, g.constant(mixed), g.constant(params.decision.weight.value),
                           g.constant(params.decision.bias.value));
  return g.value(logits);
}

bool objective_uses_attention(const ModelConfig& config) {
  return config.objective != ObjectiveVariant::AlphaZero || config.lambda_sparse > 0.0 || config.lambda_conf > 0.0;
}

ObjectiveTerms objective(Graph& g, const BoundParameters& params, const ModelConfig& config, const Tensor& inputs,
                         std::span<const int> labels, const Tensor& candidates,
                         std::span<const int> candidate_labels, std::optional<TrainingProgress> progress) {
  if (labels.size() != inputs.rows() || candidate_labels.size() != candidates.rows()) {
    throw DimensionError("objective: label counts do not match inputs/candidates");
  }

  double w0 = 0.0, w1 = 0.0, w_half = 0.0;
  switch (config.objective) {
    case ObjectiveVariant::AlphaZero: w0 = 1.0; break;
    case ObjectiveVariant::AlphaOne: w1 = 1.0; break;
    case ObjectiveVariant::AlphaHalf: w_half = 1.0; break;
    case ObjectiveVariant::SumZeroOne: w0 = w1 = 1.0; break;
    case ObjectiveVariant::SumZeroOneHalf: w0 = w1 = w_half = 1.0; break;
    case ObjectiveVariant::AnnealedZeroToOne: {
      if (!progress || progress->total == 0 || progress->iteration > progress->total) {
        throw ContractError("annealed objective requires an iteration index within [0, N_t]");
      }
      const double fraction = static_cast<double>(progress->iteration) / static_cast<double>(progress->total);
      w0 = 1.0 - fraction;
      w1 = fraction;
      break;
    }
  }
  const bool annealed = config.objective == ObjectiveVariant::AnnealedZeroToOne;
  const bool use_attention = objective_uses_attention(config);
  const std::size_t batch = inputs.rows();

  EncodedVars input_enc;
  EncodedVars cand_enc;
  if (use_attention) {
    Var all = g.constant(concat_rows(inputs, candidates));
    EncodedVars enc = encode(g, params, all);
    const std::size_t total = batch + candidates.rows();
    input_enc = {ops::slice_rows(g, enc.values, 0, batch), ops::slice_rows(g, enc.queries, 0, batch), {}};
    cand_enc = {ops::slice_rows(g, enc.values, batch, total), {}, ops::slice_rows(g, enc.keys, batch, total)};
  } else {
    input_enc = encode(g, params, g.constant(inputs));
  }

  ObjectiveTerms terms;
  std::vector<Var> parts;
  auto add_term = [&](std::optional<Var>& slot, Var term) {
    slot = term;
    parts.push_back(term);
  };

  std::optional<Var> weights;
  if (use_attention) weights = relational_attention(g, input_enc.queries, cand_enc.keys, config.normalization);

  auto branch_loss = [&](double alpha) {
    Var mixed = alpha == 0.0 ? input_enc.values : mix_values(g, input_enc.values, cand_enc.values, *weights, alpha);
    return ops::softmax_cross_entropy(g, decide(g, params, mixed), labels);
  };

  if (w0 != 0.0 || annealed) add_term(terms.alpha0, ops::scale(g, branch_loss(0.0), w0));
  if (w1 != 0.0 || annealed) add_term(terms.alpha1, ops::scale(g, branch_loss(1.0), w1));
  if (w_half != 0.0) add_term(terms.alpha_half, ops::scale(g, branch_loss(0.5), w_half));
  if (config.lambda_sparse > 0.0) {
    add_term(terms.sparse, ops::scale(g, ops::entropy_sparsity(g, *weights), config.lambda_sparse));
  }
  if (config.lambda_conf > 0.0) {
    add_term(terms.conf,
             ops::scale(g, ops::label_agreement_loss(g, *weights, candidate_labels, labels), config.lambda_conf));
  }

  Var total = parts.front();
  for (std::size_t k = 1; k < parts.size(); ++k) total = ops::add(g, total, parts[k]);
  terms.total = total;
  return terms;
}

LossBreakdown evaluate_objective(ModelParameters& params, const ModelConfig& config, const Tensor& inputs,
                                 std::span<const int> labels, const Tensor& candidates,
                                 std::span<const int> candidate_labels, std::optional<TrainingProgress> progress,
                                 bool with_gradients) {
  Graph g;
  const BoundParameters bound = with_gradients ? bind_trainable(g, params) : bind_constant(g, params);
  const ObjectiveTerms terms = objective(g, bound, config, inputs, labels, candidates, candidate_labels, progress);
  auto read = [&](const std::optional<Var>& v) { return v ? g.value(*v)[0] : 0.0; };
  LossBreakdown out{g.value(terms.total)[0], read(terms.alpha0),     read(terms.alpha1),
                    read(terms.alpha_half),  read(terms.sparse),     read(terms.conf)};
  if (with_gradients) {
    params.zero_grad();
    g.backward(terms.total);
  }
  return out;
}

double confidence_conformity(std::span<const double> weights, std::span<const int> candidate_labels, int predicted) {
  if (weights.size() != candidate_labels.size()) {
    throw DimensionError("confidence: " + std::to_string(weights.size()) + " weights for " +
                         std::to_string(candidate_labels.size()) + " candidate labels");
  }
  double total = 0.0;
  for (std::size_t j = 0; j < weights.size(); ++j) {
    if (candidate_labels[j] == predicted) total += weights[j];
  }
  return std::clamp(total, 0.0, 1.0);
}

double confidence_regularizer(const Tensor& weights, std::span<const int> candidate_labels,
                              std::span<const int> labels) {
  Graph g;
  return g.value(ops::label_agreement_loss(g, g.constant(weights), candidate_labels, labels))[0];
}

}  // namespace protoattend
