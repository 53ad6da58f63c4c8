#include "protoattend/inference.hpp"

#include <algorithm>
#include <numeric>

#include "protoattend/error.hpp"

namespace protoattend {

CandidateDatabase precompute_database(CandidateDatabase db, const ModelParameters& params, const ModelConfig& config) {
  if (db.labels.size() != db.size() || db.samples.rows() != db.size()) {
    throw DimensionError("candidate database: indices, samples and labels disagree in length");
  }
  EncodedBatch enc = encode(db.samples, params, config);
  db.encoded = EncodedCandidates{std::move(enc.keys), std::move(enc.values), params.fingerprint()};
  return db;
}

BatchPrediction predict_batch(const Tensor& inputs, const CandidateDatabase& db, const ModelParameters& params,
                              const ModelConfig& config) {
  if (!db.encoded) throw IncompatibleError("candidate database has not been encoded; call precompute_database");
  if (db.encoded->fingerprint != params.fingerprint()) {
    throw IncompatibleError("candidate database was encoded with different parameters; re-encode it");
  }
  if (db.size() == 0) throw ContractError("candidate database is empty");

  const EncodedBatch enc = encode(inputs, params, config);
  BatchPrediction out;
  out.weights = relational_attention(enc.queries, db.encoded->keys, config.normalization);

  Graph g;
  Var weights = g.constant(out.weights);
  Var values = g.constant(enc.values);
  Var cand_values = g.constant(db.encoded->values);
  Var w = g.constant(params.decision.weight.value);
  Var b = g.constant(params.decision.bias.value);
  Var mixed_proto = ops::matmul(g, weights, cand_values);
  out.logits_input = g.value(ops::linear(g, values, w, b));
  out.logits_prototype = g.value(ops::linear(g, mixed_proto, w, b));
  if (config.alpha_predict == 0.0) {
    out.logits = out.logits_input;
  } else if (config.alpha_predict == 1.0) {
    out.logits = out.logits_prototype;
  } else {
    out.logits = g.value(ops::linear(g, ops::lerp(g, values, mixed_proto, config.alpha_predict), w, b));
  }

  const std::size_t n = inputs.rows();
  out.predicted.resize(n);
  out.confidence.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.predicted[i] = static_cast<int>(argmax(out.logits.row(i)));
    out.confidence[i] = confidence_conformity(out.weights.row(i), db.labels, out.predicted[i]);
  }
  return out;
}

PredictionReport make_report(std::span<const double> weights, std::span<const double> logits,
                             const CandidateDatabase& db, std::size_t top_m) {
  if (top_m < 1) throw ContractError("top_m must be at least 1");
  PredictionReport report;
  report.logits.assign(logits.begin(), logits.end());
  report.predicted_class = static_cast<int>(argmax(logits));
  report.confidence = confidence_conformity(weights, db.labels, report.predicted_class);

  std::vector<std::size_t> order;
  for (std::size_t j = 0; j < weights.size(); ++j) {
    if (weights[j] > 0.0) order.push_back(j);
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return weights[a] > weights[b]; });
  if (order.size() > top_m) order.resize(top_m);
  for (std::size_t j : order) report.prototypes.push_back(Prototype{j, db.indices[j], db.labels[j], weights[j]});
  return report;
}

PredictionReport predict(std::span<const double> input, const CandidateDatabase& db, const ModelParameters& params,
                         const ModelConfig& config, std::size_t top_m) {
  if (top_m < 1) throw ContractError("top_m must be at least 1");
  Tensor x({1, input.size()}, std::vector<double>(input.begin(), input.end()));
  const BatchPrediction batch = predict_batch(x, db, params, config);
  return make_report(batch.weights.row(0), batch.logits.row(0), db, top_m);
}

PredictionReport predict_on_the_fly(std::span<const double> input, const CandidateDatabase& db,
                                    const ModelParameters& params, const ModelConfig& config, std::size_t top_m) {
  CandidateDatabase fresh = db;
  fresh.encoded.reset();
  return predict(input, precompute_database(std::move(fresh), params, config), params, config, top_m);
}

}  // namespace protoattend
