#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "protoattend/model.hpp"
#include "protoattend/training.hpp"

namespace protoattend {

// Where the datasets come from and how they are prepared.
struct DataConfig {
  std::string format = "idx";  // idx | csv | synthetic
  std::string train_images = "data/mnist/train-images-idx3-ubyte";
  std::string train_labels = "data/mnist/train-labels-idx1-ubyte";
  std::string test_images = "data/mnist/t10k-images-idx3-ubyte";
  std::string test_labels = "data/mnist/t10k-labels-idx1-ubyte";
  std::string train_csv;
  std::string test_csv;
  std::string label_column = "label";
  std::size_t train_size = 10000;  // rows taken from the start of the training file; 0 = all remaining
  std::size_t valid_size = 2000;   // rows following the training rows
  std::size_t test_size = 0;       // 0 = whole test file
  bool standardize = true;
  // synthetic Gaussian source
  std::size_t synthetic_classes = 2;
  std::size_t synthetic_dim = 8;
  std::size_t synthetic_per_class = 200;
  double synthetic_sigma = 0.5;
  std::uint64_t synthetic_seed = 7;
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  DataConfig data;
};

/// Parses `key = value` lines grouped under [model], [train] and [data].
/// '#' starts a comment. Keys that are absent keep their defaults. Unknown
/// keys, malformed values and out-of-range values raise ParseError with the
/// offending line number.
RunConfig parse_config_text(std::string_view text);
RunConfig parse_config(const std::filesystem::path& path);

// Canonical text form; parse_config_text(to_config_text(c)) reproduces c.
std::string to_config_text(const RunConfig& config);

}  // namespace protoattend
