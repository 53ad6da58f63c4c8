#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "protoattend/tensor.hpp"

namespace protoattend {

enum class Split { Train, Valid, Test };

struct Dataset {
  Tensor features;  // [N x input_dim]
  std::vector<int> labels;
  std::size_t num_classes = 0;
  Split split = Split::Train;

  std::size_t size() const { return labels.size(); }
  std::size_t input_dim() const { return features.cols(); }

  // Throws ContractError on NaN features, out-of-range labels or ragged sizes.
  void validate() const;
  Dataset subset(std::span<const std::size_t> indices) const;
  Dataset slice(std::size_t begin, std::size_t end) const;
};

/// Reads an IDX image file (magic 0x00000803, dims N x rows x cols, unsigned
/// bytes) and its label file (magic 0x00000801). Pixels are scaled to [0, 1]
/// and flattened row-major. num_classes is max label + 1, at least 2.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

// Writes features (rounded from [0, 1] to bytes) and labels as an IDX pair.
void write_idx(const std::filesystem::path& images, const std::filesystem::path& labels, const Dataset& dataset,
               std::uint32_t rows, std::uint32_t cols);

// Comma-separated file with a header row; every column other than the
// label column is a numeric feature, in header order.
Dataset load_csv(const std::filesystem::path& path, std::string_view label_column = "label");
void write_csv(const std::filesystem::path& path, const Dataset& dataset, std::string_view label_column = "label");

// Class means sit at distinct corners of the hypercube {-scale, +scale}^dim;
// samples are mean + sigma * N(0, I). Sample i belongs to class i % num_classes.
Dataset synthetic_gaussians(std::size_t num_classes, std::size_t dim, std::size_t per_class, double sigma,
                            std::uint64_t seed, double scale = 2.0);

// Rescales every row to zero mean and unit variance (variance floored at 1e-12).
Dataset standardize_per_sample(Dataset dataset);

}  // namespace protoattend
