#include "protoattend/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

#include "protoattend/error.hpp"

namespace protoattend {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[4] = {'P', 'A', 'T', 'D'};
constexpr char kSwappedMagic[4] = {'D', 'T', 'A', 'P'};

class Writer {
 public:
  template <typename T>
  void put(T value) {
    const auto* p = reinterpret_cast<const char*>(&value);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const char*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  const std::vector<char>& bytes() const { return bytes_; }

 private:
  std::vector<char> bytes_;
};

class Reader {
 public:
  explicit Reader(std::vector<char> bytes) : bytes_(std::move(bytes)) {}

  template <typename T>
  T get(const char* what) {
    T value;
    get_bytes(&value, sizeof(T), what);
    return value;
  }
  void get_bytes(void* out, std::size_t n, const char* what) {
    if (n > bytes_.size() - pos_) throw FormatError(std::string("checkpoint truncated while reading ") + what, pos_);
    std::memcpy(out, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::vector<char> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelParameters& params, const RunConfig& config) {
  Writer w;
  w.put_bytes(kMagic, 4);
  w.put<std::uint32_t>(kCheckpointVersion);
  const std::string text = to_config_text(config);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(text.size()));
  w.put_bytes(text.data(), text.size());
  const auto tensors = params.list();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(tensors.size()));
  for (const Parameter* p : tensors) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(p->name.size()));
    w.put_bytes(p->name.data(), p->name.size());
    w.put<std::uint32_t>(static_cast<std::uint32_t>(p->value.rank()));
    for (std::uint64_t dim : p->value.shape()) w.put<std::uint64_t>(dim);
    w.put_bytes(p->value.data().data(), p->value.size() * sizeof(double));
  }
  w.put<std::uint64_t>(params.fingerprint());

  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ContractError("cannot write checkpoint " + tmp.string());
    out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
    if (!out) throw ContractError("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ContractError("cannot open checkpoint " + path.string());
  Reader r(std::vector<char>{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()});

  char magic[4];
  r.get_bytes(magic, 4, "magic");
  if (std::memcmp(magic, kSwappedMagic, 4) == 0) {
    throw FormatError("checkpoint magic is byte-swapped; file was written big-endian", 0);
  }
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("not a checkpoint: bad magic", 0);
  const std::size_t version_at = r.position();
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                          std::to_string(kCheckpointVersion) + ")",
                      version_at);
  }

  const auto text_size = r.get<std::uint32_t>("config length");
  std::string text(text_size, '\0');
  r.get_bytes(text.data(), text_size, "config");
  Checkpoint ckpt;
  try {
    ckpt.config = parse_config_text(text);
  } catch (const ParseError& e) {
    throw FormatError(std::string("embedded config: ") + e.what(), r.position());
  }

  // Expected layout comes from the stored model config.
  ckpt.params = ModelParameters::initialize(ckpt.config.model, 0);
  auto tensors = ckpt.params.list();
  const std::size_t count_at = r.position();
  const auto count = r.get<std::uint32_t>("tensor count");
  if (count != tensors.size()) {
    throw IntegrityError("checkpoint holds " + std::to_string(count) + " tensors, model config implies " +
                          std::to_string(tensors.size()),
                      count_at);
  }
  for (Parameter* p : tensors) {
    const std::size_t at = r.position();
    const auto name_size = r.get<std::uint32_t>("tensor name length");
    if (name_size > r.remaining()) throw FormatError("tensor name length exceeds file", at);
    std::string name(name_size, '\0');
    r.get_bytes(name.data(), name_size, "tensor name");
    if (name != p->name) throw IntegrityError("expected tensor '" + p->name + "', found '" + name + "'", at);
    const auto rank = r.get<std::uint32_t>("tensor rank");
    if (rank != p->value.rank()) throw IntegrityError("tensor '" + name + "' has wrong rank", at);
    Shape shape(rank);
    for (auto& dim : shape) dim = r.get<std::uint64_t>("tensor shape");
    if (shape != p->value.shape()) {
      throw IntegrityError("tensor '" + name + "' has shape " + shape_string(shape) + ", expected " +
                            shape_string(p->value.shape()),
                        at);
    }
    r.get_bytes(p->value.data().data(), p->value.size() * sizeof(double), "tensor payload");
    p->zero_grad();
  }
  const std::size_t fp_at = r.position();
  ckpt.fingerprint = r.get<std::uint64_t>("fingerprint");
  if (r.remaining() != 0) throw FormatError("trailing bytes after checkpoint", r.position());
  if (ckpt.fingerprint != ckpt.params.fingerprint()) {
    throw IntegrityError("checkpoint fingerprint mismatch: payload is corrupted", fp_at);
  }
  return ckpt;
}

}  // namespace protoattend
