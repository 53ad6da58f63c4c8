#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "protoattend/model.hpp"

namespace protoattend {

// Keys and values of a candidate database under one parameter snapshot.
struct EncodedCandidates {
  Tensor keys;    // [D x d_att]
  Tensor values;  // [D x d_out]
  std::uint64_t fingerprint = 0;
};

struct CandidateDatabase {
  std::vector<std::size_t> indices;  // rows of the source dataset, unique
  Tensor samples;                    // [D x input_dim]
  std::vector<int> labels;
  std::optional<EncodedCandidates> encoded;

  std::size_t size() const { return indices.size(); }
};

// Attaches keys/values computed with `params`, tagged by params.fingerprint().
// Idempotent.
CandidateDatabase precompute_database(CandidateDatabase db, const ModelParameters& params, const ModelConfig& config);

struct Prototype {
  std::size_t position = 0;      // row within the database
  std::size_t source_index = 0;  // row within the dataset the database was drawn from
  int label = 0;
  double weight = 0.0;
};

struct PredictionReport {
  int predicted_class = 0;
  double confidence = 0.0;
  std::vector<double> logits;         // at alpha_predict
  std::vector<Prototype> prototypes;  // top positive weights, non-increasing
};

struct BatchPrediction {
  Tensor weights;           // [N x D] attention rows
  Tensor logits_input;      // ŷ(0)
  Tensor logits_prototype;  // ŷ(1)
  Tensor logits;            // ŷ(alpha_predict)
  std::vector<int> predicted;
  std::vector<double> confidence;
};

/// Batched inference against a precomputed database. Throws
/// IncompatibleError when the database was encoded with different parameters.
BatchPrediction predict_batch(const Tensor& inputs, const CandidateDatabase& db, const ModelParameters& params,
                              const ModelConfig& config);

PredictionReport predict(std::span<const double> input, const CandidateDatabase& db, const ModelParameters& params,
                         const ModelConfig& config, std::size_t top_m = 5);

// Same as predict() but encodes the database samples inside the call.
PredictionReport predict_on_the_fly(std::span<const double> input, const CandidateDatabase& db,
                                    const ModelParameters& params, const ModelConfig& config, std::size_t top_m = 5);

// Builds a report from one attention row and its logits.
PredictionReport make_report(std::span<const double> weights, std::span<const double> logits,
                             const CandidateDatabase& db, std::size_t top_m);

}  // namespace protoattend
