#include "rewardchain/params.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace rc {

namespace {

constexpr char kMagic[4] = {'R', 'C', 'P', 'T'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) throw CheckpointError(std::string("truncated checkpoint while reading ") + what);
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::string str(std::size_t n) {
    need(n, "name");
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  float f32() {
    const std::uint32_t bits = u32("tensor data");
    return std::bit_cast<float>(bits);
  }
  bool done() const { return pos_ == bytes_.size(); }
  std::size_t pos() const { return pos_; }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_params(const ParamSet& params) {
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : t.data()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  return out;
}

ParamSet deserialize_params(const std::vector<std::uint8_t>& bytes) {
  Reader in(bytes);
  in.need(4, "magic");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw CheckpointError("bad checkpoint magic");
  in.str(4);
  const std::uint32_t version = in.u32("version");
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint32_t count = in.u32("count");
  ParamSet out;
  for (std::uint32_t e = 0; e < count; ++e) {
    const std::uint32_t len = in.u32("name length");
    std::string name = in.str(len);
    const std::uint32_t ndim = in.u32("rank");
    Shape shape;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      const std::uint32_t dim = in.u32("dims");
      if (dim == 0) throw CheckpointError("zero-sized dimension in '" + name + "'");
      shape.push_back(dim);
    }
    const std::size_t n = shape_numel(shape);
    in.need(n * 4, "tensor data");
    std::vector<float> values(n);
    for (float& v : values) v = in.f32();
    if (out.contains(name)) throw CheckpointError("duplicate parameter name '" + name + "'");
    out.emplace(std::move(name), Tensor::from_floats(std::move(shape), values));
  }
  if (!in.done()) throw CheckpointError("trailing bytes after checkpoint entries");
  return out;
}

void save_checkpoint(const ParamSet& params, const std::filesystem::path& path) {
  const auto bytes = serialize_params(params);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("failed writing '" + path.string() + "'");
}

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace

ParamSet load_checkpoint(const std::filesystem::path& path) {
  try {
    return deserialize_params(read_file(path));
  } catch (const CheckpointError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
}

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t size) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t params_hash(const ParamSet& params) {
  const auto bytes = serialize_params(params);
  return fnv1a64(bytes.data(), bytes.size());
}

std::uint64_t file_hash(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return fnv1a64(bytes.data(), bytes.size());
}

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xF];
  return s;
}

ParamSet select_prefix(const ParamSet& params, const std::string& prefix) {
  ParamSet out;
  for (const auto& [name, t] : params) {
    if (name.starts_with(prefix)) out.emplace(name, t);
  }
  return out;
}

VarMap bind_params(Tape& tape, const ParamSet& params, bool requires_grad) {
  VarMap out;
  for (const auto& [name, t] : params) out.emplace(name, tape.leaf(t, requires_grad));
  return out;
}

Var get_var(const VarMap& vars, const std::string& name) {
  auto it = vars.find(name);
  if (it == vars.end()) throw std::invalid_argument("missing parameter '" + name + "'");
  return it->second;
}

ParamSet collect_grads(const VarMap& vars, const GradMap& grads) {
  ParamSet out;
  for (const auto& [name, v] : vars) {
    auto it = grads.find(v.id());
    if (it == grads.end()) throw std::logic_error("no gradient recorded for '" + name + "'");
    out.emplace(name, it->second);
  }
  return out;
}

double global_norm(const ParamSet& grads) {
  double s = 0.0;
  for (const auto& [name, g] : grads) {
    for (double v : g.data()) s += v * v;
  }
  return std::sqrt(s);
}

double clip_global_norm(ParamSet& grads, double max_norm) {
  const double norm = global_norm(grads);
  if (max_norm > 0.0 && norm > max_norm) {
    const double k = max_norm / norm;
    for (auto& [name, g] : grads) {
      for (double& v : g.data()) v = round_f32(v * k);
    }
  }
  return norm;
}

}  // namespace rc
