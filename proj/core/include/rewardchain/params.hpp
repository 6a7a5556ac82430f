#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "rewardchain/tape.hpp"

namespace rc {

/// Named parameter tensors, ordered by name.
using ParamSet = std::map<std::string, Tensor>;
/// Parameters bound to a tape.
using VarMap = std::map<std::string, Var>;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Binary checkpoint layout (all integers u32 little-endian):
///   "RCPT" | version | count | count x (name_len | name | ndim | dims... | f32 data)
/// Entries are written in lexicographic name order.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize_params(const ParamSet& params);
ParamSet deserialize_params(const std::vector<std::uint8_t>& bytes);
void save_checkpoint(const ParamSet& params, const std::filesystem::path& path);
ParamSet load_checkpoint(const std::filesystem::path& path);

/// FNV-1a 64 over the serialized form.
std::uint64_t params_hash(const ParamSet& params);
std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t size);
std::uint64_t file_hash(const std::filesystem::path& path);
std::string hex64(std::uint64_t v);

/// Subset of `params` whose names start with `prefix`.
ParamSet select_prefix(const ParamSet& params, const std::string& prefix);

VarMap bind_params(Tape& tape, const ParamSet& params, bool requires_grad);
Var get_var(const VarMap& vars, const std::string& name);
/// Gradient of every bound parameter; throws if one is missing from `grads`.
ParamSet collect_grads(const VarMap& vars, const GradMap& grads);

double global_norm(const ParamSet& grads);
/// Scales every gradient by max_norm / norm when norm exceeds max_norm.
/// Returns the norm before clipping.
double clip_global_norm(ParamSet& grads, double max_norm);

}  // namespace rc
