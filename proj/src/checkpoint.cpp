#include "csal/checkpoint.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

namespace csal {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

// Reals are stored as f32; reading back through the shortest decimal that
// names the same float recovers values such as 0.1 exactly.
double widen(float v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  double out = v;
  std::from_chars(buf, res.ptr, out);
  return out;
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::string text(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) throw FormatError(std::string("checkpoint truncated while reading ") + what);
  }

  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

CheckpointRecord meta(const std::string& name, const std::vector<double>& values) {
  CheckpointRecord r;
  r.name = "meta." + name;
  r.dims = {static_cast<std::uint32_t>(values.size())};
  for (double v : values) r.values.push_back(static_cast<float>(v));
  return r;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const std::vector<CheckpointRecord>& records) {
  std::vector<std::uint8_t> out(std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(records.size()));
  for (const auto& r : records) {
    std::size_t expected = 1;
    for (auto d : r.dims) expected *= d;
    if (expected != r.values.size()) {
      throw FormatError("checkpoint record " + r.name + " has " + std::to_string(r.values.size()) +
                        " values for its dims");
    }
    put_u32(out, static_cast<std::uint32_t>(r.name.size()));
    out.insert(out.end(), r.name.begin(), r.name.end());
    put_u32(out, static_cast<std::uint32_t>(r.dims.size()));
    for (auto d : r.dims) put_u32(out, d);
    for (float v : r.values) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

std::vector<CheckpointRecord> decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader in(bytes);
  if (in.text(4, "magic") != std::string(kCheckpointMagic, 4)) throw FormatError("not a checkpoint: bad magic");
  const std::uint32_t version = in.u32("version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  const std::uint32_t count = in.u32("record count");
  std::vector<CheckpointRecord> records;
  for (std::uint32_t k = 0; k < count; ++k) {
    CheckpointRecord r;
    r.name = in.text(in.u32("name length"), "name");
    const std::uint32_t rank = in.u32("rank");
    std::uint64_t total = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      r.dims.push_back(in.u32("dims"));
      total *= r.dims.back();
      if (total > bytes.size()) throw FormatError("checkpoint record " + r.name + " larger than file");
    }
    r.values.resize(total);
    for (auto& v : r.values) v = std::bit_cast<float>(in.u32("values"));
    records.push_back(std::move(r));
  }
  if (!in.done()) throw FormatError("trailing bytes after checkpoint records");
  return records;
}

void write_checkpoint(const std::filesystem::path& path, const std::vector<CheckpointRecord>& records) {
  const auto bytes = encode_checkpoint(records);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::vector<CheckpointRecord> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

template <typename T>
std::vector<CheckpointRecord> to_records(const ModelConfig& cfg, const ModelParams<T>& params) {
  std::vector<CheckpointRecord> records;
  records.push_back(meta("levels", {static_cast<double>(cfg.levels)}));
  records.push_back(meta("input_size", {static_cast<double>(cfg.input_size)}));
  records.push_back(meta("encoder_channels", {cfg.encoder_channels.begin(), cfg.encoder_channels.end()}));
  records.push_back(meta("decoder_channels", {cfg.decoder_channels.begin(), cfg.decoder_channels.end()}));
  records.push_back(meta("head_channels", {static_cast<double>(cfg.head_channels)}));
  records.push_back(meta("hgam_enabled", {cfg.hgam_enabled ? 1.0 : 0.0}));
  records.push_back(meta("msg_channels", {static_cast<double>(cfg.msg_channels)}));
  records.push_back(meta("attention", {cfg.attention.lambda, cfg.attention.epsilon}));
  for (const auto& np : params.named()) {
    CheckpointRecord r;
    r.name = np.name;
    for (auto d : np.tensor->shape()) r.dims.push_back(static_cast<std::uint32_t>(d));
    for (T v : np.tensor->data()) r.values.push_back(static_cast<float>(v));
    records.push_back(std::move(r));
  }
  return records;
}

template <typename T>
ModelParams<T> from_records(const std::vector<CheckpointRecord>& records, ModelConfig& cfg) {
  std::map<std::string, const CheckpointRecord*> by_name;
  for (const auto& r : records) by_name[r.name] = &r;
  auto get = [&](const std::string& name) -> const CheckpointRecord& {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw FormatError("checkpoint missing record " + name);
    return *it->second;
  };
  auto ints = [&](const std::string& name) {
    std::vector<std::size_t> out;
    for (float v : get("meta." + name).values) out.push_back(static_cast<std::size_t>(v));
    return out;
  };
  auto one = [&](const std::string& name) {
    const auto v = ints(name);
    if (v.size() != 1) throw FormatError("checkpoint meta." + name + " must hold one value");
    return v[0];
  };

  ModelConfig loaded;
  loaded.levels = one("levels");
  loaded.input_size = one("input_size");
  loaded.encoder_channels = ints("encoder_channels");
  loaded.decoder_channels = ints("decoder_channels");
  loaded.head_channels = one("head_channels");
  loaded.hgam_enabled = one("hgam_enabled") != 0;
  loaded.msg_channels = one("msg_channels");
  const auto& attn = get("meta.attention").values;
  if (attn.size() != 2) throw FormatError("checkpoint meta.attention must hold lambda and epsilon");
  loaded.attention.lambda = widen(attn[0]);
  loaded.attention.epsilon = widen(attn[1]);
  try {
    loaded.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("checkpoint describes an invalid model: ") + e.what());
  }

  ModelParams<T> params = ModelParams<T>::zeros(loaded);
  std::size_t used = 0;
  for (const auto& np : params.named()) {
    const auto& r = get(np.name);
    Shape dims(r.dims.begin(), r.dims.end());
    if (dims != np.tensor->shape()) {
      throw FormatError("checkpoint record " + np.name + " has shape " + to_string(dims) + ", expected " +
                        to_string(np.tensor->shape()));
    }
    auto dst = np.tensor->data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(r.values[i]);
    ++used;
  }
  std::size_t meta_count = 0;
  for (const auto& r : records) meta_count += r.name.rfind("meta.", 0) == 0 ? 1 : 0;
  if (used + meta_count != records.size()) throw FormatError("checkpoint has unexpected extra records");
  cfg = loaded;
  return params;
}

template std::vector<CheckpointRecord> to_records(const ModelConfig&, const ModelParams<float>&);
template std::vector<CheckpointRecord> to_records(const ModelConfig&, const ModelParams<double>&);
template ModelParams<float> from_records(const std::vector<CheckpointRecord>&, ModelConfig&);
template ModelParams<double> from_records(const std::vector<CheckpointRecord>&, ModelConfig&);

}  // namespace csal
