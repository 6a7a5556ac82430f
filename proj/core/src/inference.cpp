#include "rewardchain/inference.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <nlohmann/json.hpp>
#include <stdexcept>

#include "rewardchain/chain.hpp"
#include "rewardchain/ops.hpp"

namespace rc {

void SamplerConfig::validate() const {
  if (train_steps < 2) throw std::invalid_argument("train_steps must be at least 2");
  if (n_steps < 1 || n_steps > train_steps - 1) {
    throw std::invalid_argument("sampling steps must lie in [1, " + std::to_string(train_steps - 1) + "]");
  }
  if (!(guidance >= 0.0) || !std::isfinite(guidance)) throw std::invalid_argument("guidance scale must be >= 0");
  if (finetuned_steps < 0) throw std::invalid_argument("finetuned_steps must be non-negative");
}

Tensor initial_noise(std::uint64_t seed, std::size_t rows, std::size_t dim) {
  Rng rng(seed);
  return rng.normal_tensor({rows, dim});
}

Tensor encode_prompts(const ParamSet& text, std::span<const Prompt> prompts) {
  Tape tape;
  return text_encode(bind_params(tape, text, false), prompts).value();
}

std::vector<Tensor> staged_conditioning(const Tensor& base, const Tensor& finetuned, int n_steps,
                                        int finetuned_steps) {
  if (base.shape() != finetuned.shape()) throw std::invalid_argument("base and fine-tuned conditioning differ in shape");
  std::vector<Tensor> conds;
  for (int i = 0; i < n_steps; ++i) conds.push_back(i >= n_steps - finetuned_steps ? finetuned : base);
  return conds;
}

Tensor sample_from_embeddings(const ParamSet& denoiser, std::span<const Tensor> conds, const Tensor& z_T,
                              const SamplerConfig& config) {
  config.validate();
  if (conds.empty()) throw std::invalid_argument("no conditioning given");
  const NoiseSchedule schedule = make_schedule(config.train_steps, config.schedule);
  const StepPlan plan = make_step_plan(config.n_steps, schedule);
  Tape tape;
  VarMap den = bind_params(tape, denoiser, false);
  std::vector<Var> vars;
  for (const Tensor& c : conds) {
    if (c.rank() != 2 || c.rows() != z_T.rows()) {
      throw std::invalid_argument("conditioning " + shape_str(c.shape()) + " does not match latents " +
                                  shape_str(z_T.shape()));
    }
    vars.push_back(tape.constant(c));
  }
  ChainOptions opts;
  opts.sampler = config.sampler;
  opts.cfg = config.guidance != 1.0;
  opts.guidance = config.guidance;
  opts.grad_steps = 0;
  return run_chain(tape, den, vars, z_T, schedule, plan, opts).z0.value();
}

Tensor sample_prompts(const ModelBundle& bundle, std::span<const Prompt> prompts, const Tensor& z_T,
                      const SamplerConfig& config) {
  config.validate();
  const Tensor c = encode_prompts(bundle.text, prompts);
  if (bundle.base_text.empty() || config.finetuned_steps >= config.n_steps) {
    const Tensor conds[1] = {c};
    return sample_from_embeddings(bundle.denoiser, conds, z_T, config);
  }
  const Tensor base = encode_prompts(bundle.base_text, prompts);
  return sample_from_embeddings(bundle.denoiser, staged_conditioning(base, c, config.n_steps, config.finetuned_steps),
                                z_T, config);
}

Tensor sample(const ModelBundle& bundle, const Prompt& prompt, std::uint64_t seed, const SamplerConfig& config) {
  const Prompt prompts[1] = {prompt};
  return sample_prompts(bundle, prompts, initial_noise(seed, 1, bundle.world.data_dim()), config);
}

Tensor interpolate_embeddings(const Tensor& c_original, const Tensor& c_finetuned, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("interpolation weight must lie in [0, 1]");
  if (c_original.shape() != c_finetuned.shape()) throw std::invalid_argument("embedding shapes differ");
  if (lambda == 0.0) return c_original;
  if (lambda == 1.0) return c_finetuned;
  Tensor out(c_original.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    out[i] = round_f32((1.0 - lambda) * c_original[i] + lambda * c_finetuned[i]);
  }
  return out;
}

Tensor mix_styles(std::span<const WeightedEmbedding> entries) {
  if (entries.size() < 2) throw std::invalid_argument("style mixing needs at least two embeddings");
  double total = 0.0;
  for (const WeightedEmbedding& e : entries) {
    if (!std::isfinite(e.weight) || e.weight < 0.0) throw std::invalid_argument("mixing weights must be non-negative");
    if (e.embedding.shape() != entries[0].embedding.shape()) throw std::invalid_argument("embedding shapes differ");
    total += e.weight;
  }
  if (std::abs(total - 1.0) > 1e-6) {
    throw std::invalid_argument("mixing weights sum to " + std::to_string(total) + ", expected 1");
  }
  for (const WeightedEmbedding& e : entries) {
    // Summing from +0 would turn a -0 entry into +0.
    if (e.weight == 1.0) return e.embedding;
  }
  Tensor out(entries[0].embedding.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    double acc = 0.0;
    for (const WeightedEmbedding& e : entries) acc += e.weight * e.embedding[i];
    out[i] = round_f32(acc);
  }
  return out;
}

std::string sample_sidecar_json(const SampleRecord& r) {
  nlohmann::ordered_json j;
  j["prompt"] = r.prompt;
  j["seed"] = r.seed;
  j["shape"] = r.x.shape();
  j["sampler"] = to_string(r.config.sampler);
  j["schedule"] = to_string(r.config.schedule);
  j["train_steps"] = r.config.train_steps;
  j["n_steps"] = r.config.n_steps;
  j["guidance"] = r.config.guidance;
  j["finetuned_steps"] = r.config.finetuned_steps;
  if (r.lambda) j["lambda"] = *r.lambda;
  if (!r.mix_weights.empty()) {
    j["weights"] = r.mix_weights;
    j["sources"] = r.mix_sources;
  }
  j["rewards"] = {{"image_style", r.scores.image},
                  {"alignment", r.scores.align},
                  {"clip_constraint", r.scores.clip},
                  {"collapse_probe", r.scores.collapse}};
  return j.dump(2) + "\n";
}

void write_sample(const std::filesystem::path& stem, const SampleRecord& record) {
  std::filesystem::path data = stem, side = stem;
  data += ".f32";
  side += ".json";
  std::string bytes;
  for (double v : record.x.data()) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    for (int k = 0; k < 4; ++k) bytes.push_back(static_cast<char>((bits >> (8 * k)) & 0xff));
  }
  std::ofstream raw(data, std::ios::binary);
  raw << bytes;
  if (!raw) throw std::runtime_error("cannot write " + data.string());
  std::ofstream out(side, std::ios::binary);
  out << sample_sidecar_json(record);
  if (!out) throw std::runtime_error("cannot write " + side.string());
}

std::vector<float> read_f32_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() % 4 != 0) throw std::runtime_error(path.string() + ": size is not a multiple of 4");
  std::vector<float> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t bits = 0;
    for (int k = 0; k < 4; ++k) bits |= static_cast<std::uint32_t>(bytes[4 * i + k]) << (8 * k);
    out[i] = std::bit_cast<float>(bits);
  }
  return out;
}

}  // namespace rc
