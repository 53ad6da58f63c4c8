#include "protoattend/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "format.hpp"
#include "protoattend/error.hpp"

namespace protoattend {

namespace {

using detail::format_double;

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

template <typename T>
T parse_number(const std::string& text, std::size_t line, const std::string& key) {
  T value{};
  const char* begin = text.data();
  const char* end = begin + text.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw ParseError("'" + key + "' expects a number, got '" + text + "'", line);
  }
  return value;
}

std::size_t parse_size(const std::string& text, std::size_t line, const std::string& key) {
  if (!text.empty() && text[0] == '-') throw ParseError("'" + key + "' must be non-negative", line);
  return parse_number<std::size_t>(text, line, key);
}

std::size_t parse_positive(const std::string& text, std::size_t line, const std::string& key) {
  const std::size_t v = parse_size(text, line, key);
  if (v == 0) throw ParseError("'" + key + "' must be positive", line);
  return v;
}

bool parse_bool(const std::string& text, std::size_t line, const std::string& key) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ParseError("'" + key + "' expects true or false, got '" + text + "'", line);
}

double parse_in_range(const std::string& text, std::size_t line, const std::string& key, double lo, double hi,
                      bool hi_open = false) {
  const double v = parse_number<double>(text, line, key);
  if (!(v >= lo) || (hi_open ? !(v < hi) : !(v <= hi))) {
    std::ostringstream msg;
    msg << "'" << key << "' = " << text << " outside [" << lo << ", " << hi << (hi_open ? ")" : "]");
    throw ParseError(msg.str(), line);
  }
  return v;
}


using Setter = std::function<void(RunConfig&, const std::string&, std::size_t)>;

const std::map<std::string, std::map<std::string, Setter>>& setters() {
  static const std::map<std::string, std::map<std::string, Setter>> table = {
      {"model",
       {
           {"input_dim", [](RunConfig& c, const std::string& v, std::size_t l) { c.model.input_dim = parse_positive(v, l, "input_dim"); }},
           {"hidden_dims",
            [](RunConfig& c, const std::string& v, std::size_t l) {
              c.model.hidden_dims.clear();
              std::istringstream in(v);
              std::string item;
              while (std::getline(in, item, ',')) {
                const std::string t = trim(item);
                if (!t.empty()) c.model.hidden_dims.push_back(parse_positive(t, l, "hidden_dims"));
              }
            }},
           {"num_classes",
            [](RunConfig& c, const std::string& v, std::size_t l) {
              c.model.num_classes = parse_size(v, l, "num_classes");
              if (c.model.num_classes < 2) throw ParseError("'num_classes' must be at least 2", l);
            }},
           {"attention_dim", [](RunConfig& c, const std::string& v, std::size_t l) { c.model.attention_dim = parse_positive(v, l, "attention_dim"); }},
           {"value_dim", [](RunConfig& c, const std::string& v, std::size_t l) { c.model.value_dim = parse_positive(v, l, "value_dim"); }},
           {"normalization",
            [](RunConfig& c, const std::string& v, std::size_t l) {
              auto n = parse_normalization(v);
              if (!n) throw ParseError("'normalization' must be softmax or sparsemax, got '" + v + "'", l);
              c.model.normalization = *n;
            }},
           {"alpha_predict", [](RunConfig& c, const std::string& v, std::size_t l) { c.model.alpha_predict = parse_in_range(v, l, "alpha_predict", 0.0, 1.0); }},
           {"lambda_sparse", [](RunConfig& c, const std::string& v, std::size_t l) { c.model.lambda_sparse = parse_in_range(v, l, "lambda_sparse", 0.0, 1e300); }},
           {"lambda_conf", [](RunConfig& c, const std::string& v, std::size_t l) { c.model.lambda_conf = parse_in_range(v, l, "lambda_conf", 0.0, 1e300); }},
           {"objective",
            [](RunConfig& c, const std::string& v, std::size_t l) {
              auto o = parse_objective(v);
              if (!o) throw ParseError("unknown objective '" + v + "'", l);
              c.model.objective = *o;
            }},
       }},
      {"train",
       {
           {"batch_size", [](RunConfig& c, const std::string& v, std::size_t l) { c.train.batch_size = parse_positive(v, l, "batch_size"); }},
           {"candidates_train", [](RunConfig& c, const std::string& v, std::size_t l) { c.train.candidates_train = parse_positive(v, l, "candidates_train"); }},
           {"candidates_infer", [](RunConfig& c, const std::string& v, std::size_t l) { c.train.candidates_infer = parse_positive(v, l, "candidates_infer"); }},
           {"iterations", [](RunConfig& c, const std::string& v, std::size_t l) { c.train.iterations = parse_size(v, l, "iterations"); }},
           {"learning_rate",
            [](RunConfig& c, const std::string& v, std::size_t l) {
              c.train.lr_schedule.initial_rate = parse_number<double>(v, l, "learning_rate");
              if (!(c.train.lr_schedule.initial_rate > 0.0)) throw ParseError("'learning_rate' must be positive", l);
            }},
           {"lr_decay_rate",
            [](RunConfig& c, const std::string& v, std::size_t l) {
              c.train.lr_schedule.decay_rate = parse_in_range(v, l, "lr_decay_rate", 0.0, 1.0);
              if (c.train.lr_schedule.decay_rate == 0.0) throw ParseError("'lr_decay_rate' must be positive", l);
            }},
           {"lr_decay_every", [](RunConfig& c, const std::string& v, std::size_t l) { c.train.lr_schedule.decay_every = parse_positive(v, l, "lr_decay_every"); }},
           {"clip_norm",
            [](RunConfig& c, const std::string& v, std::size_t l) {
              c.train.clip_norm = parse_number<double>(v, l, "clip_norm");
              if (!(c.train.clip_norm > 0.0)) throw ParseError("'clip_norm' must be positive", l);
            }},
           {"seed", [](RunConfig& c, const std::string& v, std::size_t l) { c.train.seed = parse_size(v, l, "seed"); }},
           {"noise_ratio", [](RunConfig& c, const std::string& v, std::size_t l) { c.train.noise_ratio = parse_in_range(v, l, "noise_ratio", 0.0, 1.0, true); }},
           {"exclude_batch_from_candidates", [](RunConfig& c, const std::string& v, std::size_t l) { c.train.exclude_batch_from_candidates = parse_bool(v, l, "exclude_batch_from_candidates"); }},
           {"eval_every", [](RunConfig& c, const std::string& v, std::size_t l) { c.train.eval_every = parse_positive(v, l, "eval_every"); }},
       }},
      {"data",
       {
           {"format",
            [](RunConfig& c, const std::string& v, std::size_t l) {
              if (v != "idx" && v != "csv" && v != "synthetic") throw ParseError("'format' must be idx, csv or synthetic", l);
              c.data.format = v;
            }},
           {"train_images", [](RunConfig& c, const std::string& v, std::size_t) { c.data.train_images = v; }},
           {"train_labels", [](RunConfig& c, const std::string& v, std::size_t) { c.data.train_labels = v; }},
           {"test_images", [](RunConfig& c, const std::string& v, std::size_t) { c.data.test_images = v; }},
           {"test_labels", [](RunConfig& c, const std::string& v, std::size_t) { c.data.test_labels = v; }},
           {"train_csv", [](RunConfig& c, const std::string& v, std::size_t) { c.data.train_csv = v; }},
           {"test_csv", [](RunConfig& c, const std::string& v, std::size_t) { c.data.test_csv = v; }},
           {"label_column", [](RunConfig& c, const std::string& v, std::size_t) { c.data.label_column = v; }},
           {"train_size", [](RunConfig& c, const std::string& v, std::size_t l) { c.data.train_size = parse_size(v, l, "train_size"); }},
           {"valid_size", [](RunConfig& c, const std::string& v, std::size_t l) { c.data.valid_size = parse_size(v, l, "valid_size"); }},
           {"test_size", [](RunConfig& c, const std::string& v, std::size_t l) { c.data.test_size = parse_size(v, l, "test_size"); }},
           {"standardize", [](RunConfig& c, const std::string& v, std::size_t l) { c.data.standardize = parse_bool(v, l, "standardize"); }},
           {"synthetic_classes",
            [](RunConfig& c, const std::string& v, std::size_t l) {
              c.data.synthetic_classes = parse_size(v, l, "synthetic_classes");
              if (c.data.synthetic_classes < 2) throw ParseError("'synthetic_classes' must be at least 2", l);
            }},
           {"synthetic_dim", [](RunConfig& c, const std::string& v, std::size_t l) { c.data.synthetic_dim = parse_positive(v, l, "synthetic_dim"); }},
           {"synthetic_per_class", [](RunConfig& c, const std::string& v, std::size_t l) { c.data.synthetic_per_class = parse_positive(v, l, "synthetic_per_class"); }},
           {"synthetic_sigma", [](RunConfig& c, const std::string& v, std::size_t l) { c.data.synthetic_sigma = parse_in_range(v, l, "synthetic_sigma", 0.0, 1e300); }},
           {"synthetic_seed", [](RunConfig& c, const std::string& v, std::size_t l) { c.data.synthetic_seed = parse_size(v, l, "synthetic_seed"); }},
       }},
  };
  return table;
}

}  // namespace

RunConfig parse_config_text(std::string_view text) {
  RunConfig config;
  std::string section;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = raw;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError("malformed section header '" + line + "'", line_no);
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      if (!setters().contains(section)) throw ParseError("unknown section [" + section + "]", line_no);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected 'key = value', got '" + line + "'", line_no);
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (section.empty()) throw ParseError("key '" + key + "' appears before any section header", line_no);
    const auto& keys = setters().at(section);
    const auto it = keys.find(key);
    if (it == keys.end()) throw ParseError("unknown key '" + key + "' in [" + section + "]", line_no);
    it->second(config, value, line_no);
  }
  try {
    config.model.validate();
    config.train.validate();
  } catch (const ContractError& e) {
    throw ParseError(e.what(), line_no);
  }
  return config;
}

RunConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ContractError("cannot open config file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str());
}

std::string to_config_text(const RunConfig& c) {
  std::ostringstream out;
  out << "[model]\n";
  out << "input_dim = " << c.model.input_dim << "\n";
  out << "hidden_dims = ";
  for (std::size_t k = 0; k < c.model.hidden_dims.size(); ++k) out << (k ? "," : "") << c.model.hidden_dims[k];
  out << "\n";
  out << "num_classes = " << c.model.num_classes << "\n";
  out << "attention_dim = " << c.model.attention_dim << "\n";
  out << "value_dim = " << c.model.value_dim << "\n";
  out << "normalization = " << to_string(c.model.normalization) << "\n";
  out << "alpha_predict = " << format_double(c.model.alpha_predict) << "\n";
  out << "lambda_sparse = " << format_double(c.model.lambda_sparse) << "\n";
  out << "lambda_conf = " << format_double(c.model.lambda_conf) << "\n";
  out << "objective = " << to_string(c.model.objective) << "\n";
  out << "\n[train]\n";
  out << "batch_size = " << c.train.batch_size << "\n";
  out << "candidates_train = " << c.train.candidates_train << "\n";
  out << "candidates_infer = " << c.train.candidates_infer << "\n";
  out << "iterations = " << c.train.iterations << "\n";
  out << "learning_rate = " << format_double(c.train.lr_schedule.initial_rate) << "\n";
  out << "lr_decay_rate = " << format_double(c.train.lr_schedule.decay_rate) << "\n";
  out << "lr_decay_every = " << c.train.lr_schedule.decay_every << "\n";
  out << "clip_norm = " << format_double(c.train.clip_norm) << "\n";
  out << "seed = " << c.train.seed << "\n";
  out << "noise_ratio = " << format_double(c.train.noise_ratio) << "\n";
  out << "exclude_batch_from_candidates = " << (c.train.exclude_batch_from_candidates ? "true" : "false") << "\n";
  out << "eval_every = " << c.train.eval_every << "\n";
  out << "\n[data]\n";
  out << "format = " << c.data.format << "\n";
  out << "train_images = " << c.data.train_images << "\n";
  out << "train_labels = " << c.data.train_labels << "\n";
  out << "test_images = " << c.data.test_images << "\n";
  out << "test_labels = " << c.data.test_labels << "\n";
  out << "train_csv = " << c.data.train_csv << "\n";
  out << "test_csv = " << c.data.test_csv << "\n";
  out << "label_column = " << c.data.label_column << "\n";
  out << "train_size = " << c.data.train_size << "\n";
  out << "valid_size = " << c.data.valid_size << "\n";
  out << "test_size = " << c.data.test_size << "\n";
  out << "standardize = " << (c.data.standardize ? "true" : "false") << "\n";
  out << "synthetic_classes = " << c.data.synthetic_classes << "\n";
  out << "synthetic_dim = " << c.data.synthetic_dim << "\n";
  out << "synthetic_per_class = " << c.data.synthetic_per_class << "\n";
  out << "synthetic_sigma = " << format_double(c.data.synthetic_sigma) << "\n";
  out << "synthetic_seed = " << c.data.synthetic_seed << "\n";
  return out.str();
}

}  // namespace protoattend
