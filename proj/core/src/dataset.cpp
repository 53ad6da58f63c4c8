#include "protoattend/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "protoattend/error.hpp"

namespace protoattend {

namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ContractError("cannot open " + path.string());
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset, const std::string& what) {
  if (offset + 4 > bytes.size()) throw FormatError(what + ": truncated header", offset);
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void put_be32(std::ostream& out, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                         static_cast<char>(v)};
  out.write(bytes, 4);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream stream(line);
  while (std::getline(stream, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

void Dataset::validate() const {
  if (features.rows() != labels.size()) {
    throw ContractError("dataset has " + std::to_string(features.rows()) + " feature rows but " +
                        std::to_string(labels.size()) + " labels");
  }
  if (!features.all_finite()) throw ContractError("dataset contains non-finite features");
  for (int label : labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= num_classes) {
      throw ContractError("label " + std::to_string(label) + " outside [0, " + std::to_string(num_classes) + ")");
    }
  }
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.features = features.gather_rows(indices);
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) out.labels.push_back(labels[i]);
  out.num_classes = num_classes;
  out.split = split;
  return out;
}

Dataset Dataset::slice(std::size_t begin, std::size_t end) const {
  Dataset out;
  out.features = features.slice_rows(begin, end);
  out.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(begin),
                    labels.begin() + static_cast<std::ptrdiff_t>(end));
  out.num_classes = num_classes;
  out.split = split;
  return out;
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  const auto image_bytes = read_file(images);
  const auto label_bytes = read_file(labels);
  const std::string image_name = images.filename().string();
  const std::string label_name = labels.filename().string();

  const std::uint32_t image_magic = read_be32(image_bytes, 0, image_name);
  if (image_magic != kIdxImagesMagic) {
    throw FormatError(image_name + ": expected image magic 0x00000803", 0);
  }
  const std::uint32_t label_magic = read_be32(label_bytes, 0, label_name);
  if (label_magic != kIdxLabelsMagic) {
    throw FormatError(label_name + ": expected label magic 0x00000801", 0);
  }
  const std::uint32_t count = read_be32(image_bytes, 4, image_name);
  const std::uint32_t rows = read_be32(image_bytes, 8, image_name);
  const std::uint32_t cols = read_be32(image_bytes, 12, image_name);
  const std::uint32_t label_count = read_be32(label_bytes, 4, label_name);
  if (label_count != count) {
    throw FormatError(label_name + ": " + std::to_string(label_count) + " labels for " + std::to_string(count) +
                          " images",
                      4);
  }
  if (rows == 0 || cols == 0) throw FormatError(image_name + ": zero image dimension", 8);

  const std::size_t pixels = std::size_t{rows} * cols;
  const std::size_t image_end = 16 + std::size_t{count} * pixels;
  if (image_bytes.size() < image_end) {
    throw FormatError(image_name + ": truncated payload, expected " + std::to_string(image_end) + " bytes",
                      image_bytes.size());
  }
  if (image_bytes.size() > image_end) throw FormatError(image_name + ": trailing bytes after payload", image_end);
  if (label_bytes.size() != 8 + std::size_t{count}) {
    throw FormatError(label_name + ": payload length does not match header count",
                      std::min<std::size_t>(label_bytes.size(), 8 + std::size_t{count}));
  }

  Dataset out;
  out.features = Tensor({count, pixels});
  auto data = out.features.data();
  for (std::size_t k = 0; k < data.size(); ++k) data[k] = static_cast<double>(image_bytes[16 + k]) / 255.0;
  out.labels.resize(count);
  int max_label = 1;
  for (std::size_t i = 0; i < count; ++i) {
    out.labels[i] = label_bytes[8 + i];
    max_label = std::max(max_label, out.labels[i]);
  }
  out.num_classes = static_cast<std::size_t>(max_label) + 1;
  return out;
}

void write_idx(const std::filesystem::path& images, const std::filesystem::path& labels, const Dataset& dataset,
               std::uint32_t rows, std::uint32_t cols) {
  if (std::size_t{rows} * cols != dataset.input_dim()) {
    throw DimensionError("write_idx: " + std::to_string(rows) + "x" + std::to_string(cols) +
                         " images do not match input_dim " + std::to_string(dataset.input_dim()));
  }
  std::ofstream img(images, std::ios::binary);
  std::ofstream lab(labels, std::ios::binary);
  if (!img || !lab) throw ContractError("cannot write IDX files next to " + images.string());
  put_be32(img, kIdxImagesMagic);
  put_be32(img, static_cast<std::uint32_t>(dataset.size()));
  put_be32(img, rows);
  put_be32(img, cols);
  for (double v : dataset.features.data()) {
    img.put(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))));
  }
  put_be32(lab, kIdxLabelsMagic);
  put_be32(lab, static_cast<std::uint32_t>(dataset.size()));
  for (int label : dataset.labels) lab.put(static_cast<char>(static_cast<unsigned char>(label)));
}

Dataset load_csv(const std::filesystem::path& path, std::string_view label_column) {
  std::ifstream in(path);
  if (!in) throw ContractError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": missing header row", 0);
  std::vector<std::string> header = split_csv_line(line);
  for (auto& name : header) name = trim(name);
  const auto label_it = std::find(header.begin(), header.end(), label_column);
  if (label_it == header.end()) {
    throw FormatError(path.string() + ": no label column '" + std::string(label_column) + "' in header", 0);
  }
  const auto label_pos = static_cast<std::size_t>(label_it - header.begin());
  const std::size_t dim = header.size() - 1;

  std::vector<double> features;
  std::vector<int> labels;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw FormatError(path.string() + ": line " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                            " cells, header has " + std::to_string(header.size()),
                        row);
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const std::string cell = trim(cells[c]);
      double value = 0.0;
      const auto [end, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
      if (ec != std::errc() || end != cell.data() + cell.size() || cell.empty() || !std::isfinite(value)) {
        throw FormatError(path.string() + ": non-numeric cell '" + cell + "' on line " + std::to_string(row) +
                              ", column '" + header[c] + "'",
                          row);
      }
      if (c == label_pos) {
        if (value != std::floor(value) || value < 0.0) {
          throw FormatError(path.string() + ": label '" + cell + "' on line " + std::to_string(row) +
                                " is not a non-negative integer",
                            row);
        }
        labels.push_back(static_cast<int>(value));
      } else {
        features.push_back(value);
      }
    }
  }
  if (labels.empty()) throw ContractError(path.string() + ": no data rows");

  Dataset out;
  out.features = Tensor({labels.size(), dim}, std::move(features));
  out.labels = std::move(labels);
  out.num_classes = std::max<std::size_t>(2, static_cast<std::size_t>(*std::max_element(out.labels.begin(), out.labels.end())) + 1);
  return out;
}

void write_csv(const std::filesystem::path& path, const Dataset& dataset, std::string_view label_column) {
  std::ofstream out(path);
  if (!out) throw ContractError("cannot write " + path.string());
  for (std::size_t c = 0; c < dataset.input_dim(); ++c) out << "f" << c << ",";
  out << label_column << "\n";
  out.precision(17);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    for (double v : dataset.features.row(i)) out << v << ",";
    out << dataset.labels[i] << "\n";
  }
}

Dataset synthetic_gaussians(std::size_t num_classes, std::size_t dim, std::size_t per_class, double sigma,
                            std::uint64_t seed, double scale) {
  if (num_classes < 2) throw ContractError("synthetic_gaussians: need at least 2 classes");
  if (dim == 0 || (dim < 63 && (std::size_t{1} << dim) < num_classes)) {
    throw ContractError("synthetic_gaussians: " + std::to_string(dim) + " dimensions cannot host " +
                        std::to_string(num_classes) + " distinct corners");
  }
  if (sigma < 0.0) throw ContractError("synthetic_gaussians: sigma must be non-negative");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  const std::size_t n = num_classes * per_class;
  Dataset out;
  out.features = Tensor({n, dim});
  out.labels.resize(n);
  out.num_classes = num_classes;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t cls = i % num_classes;
    out.labels[i] = static_cast<int>(cls);
    for (std::size_t k = 0; k < dim; ++k) {
      const double corner = (k < 63 && ((cls >> k) & 1U)) ? scale : -scale;
      out.features(i, k) = corner + sigma * noise(rng);
    }
  }
  return out;
}

Dataset standardize_per_sample(Dataset dataset) {
  const std::size_t dim = dataset.input_dim();
  if (dim < 2) throw ContractError("per-sample standardization needs input_dim >= 2");
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    auto row = dataset.features.row(i);
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= static_cast<double>(dim);
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    var /= static_cast<double>(dim);
    const double inv_std = 1.0 / std::sqrt(std::max(var, 1e-12));
    for (double& v : row) v = (v - mean) * inv_std;
  }
  return dataset;
}

}  // namespace protoattend
