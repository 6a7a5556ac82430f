#include "rewardchain/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "rewardchain/ops.hpp"

namespace rc {

namespace {

std::size_t distinct_sets(std::size_t attributes) {
  const std::size_t a = attributes;
  return a + a * (a - 1) / 2 + a * (a - 1) * (a - 2) / 6;
}

/// Pairs whose prompts name pairwise different attribute sets, so every
/// off-diagonal entry of the contrastive matrix is a true negative.
PairBatch sample_distinct_pairs(const ToyWorld& world, Rng& rng, std::size_t n) {
  if (n > distinct_sets(world.attributes())) throw std::invalid_argument("batch exceeds the number of attribute sets");
  std::set<Prompt> seen;
  PairBatch b;
  b.x = Tensor({n, world.data_dim()});
  std::size_t r = 0;
  while (r < n) {
    Pair p = sample_pair(world, rng);
    Prompt key = p.prompt;
    std::sort(key.begin(), key.end());
    if (!seen.insert(key).second) continue;
    for (std::size_t i = 0; i < world.data_dim(); ++i) b.x.at(r, i) = p.x[i];
    b.prompts.push_back(std::move(p.prompt));
    ++r;
  }
  return b;
}

ParamSet merged(const ParamSet& a, const ParamSet& b) {
  ParamSet out = a;
  for (const auto& [name, t] : b) {
    if (!out.emplace(name, t).second) throw std::invalid_argument("duplicate parameter '" + name + "'");
  }
  return out;
}

Tensor const_cond(const ParamSet& text, std::span<const Prompt> prompts) {
  Tape tape;
  return text_encode(bind_params(tape, text, false), prompts).value();
}

}  // namespace

Var clip_loss(const VarMap& text, const VarMap& image, std::span<const Prompt> prompts, Var x) {
  const std::size_t n = prompts.size();
  if (n < 2) throw std::invalid_argument("contrastive loss needs a batch of at least 2 pairs");
  if (x.value().rows() != n) throw std::invalid_argument("contrastive loss: one data row per prompt required");
  Var te = ops::normalize_rows(text_encode(text, prompts));
  Var ie = ops::normalize_rows(image_encode(image, x));
  Var logits = ops::mul_scalar(ops::matmul(te, ops::transpose(ie)), ops::exp(get_var(image, "image/logit_scale")));
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i);
  Var both = ops::add(ops::cross_entropy(logits, labels), ops::cross_entropy(ops::transpose(logits), labels));
  return ops::scale(both, 0.5);
}

std::vector<LossPoint> clip_pretrain(ParamSet& text, ParamSet& image, const ToyWorld& world,
                                     const ClipPretrainConfig& cfg) {
  if (cfg.batch < 2) throw std::invalid_argument("contrastive pretraining needs a batch of at least 2");
  if (!image.contains("image/logit_scale")) throw std::invalid_argument("image encoder has no logit scale");
  AdamWState state;
  const AdamWConfig opt{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay};
  std::vector<LossPoint> curve;
  for (int it = 0; it < cfg.iterations; ++it) {
    Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(it)));
    PairBatch batch = sample_distinct_pairs(world, rng, cfg.batch);
    Tape tape;
    VarMap tv = bind_params(tape, text, true);
    VarMap iv = bind_params(tape, image, true);
    Var loss = clip_loss(tv, iv, batch.prompts, tape.constant(batch.x));
    GradMap g = tape.backward(loss);
    ParamSet params = merged(text, image);
    ParamSet grads = merged(collect_grads(tv, g), collect_grads(iv, g));
    adamw_update(params, grads, state, opt);
    Tensor& scale = params.at("image/logit_scale");
    scale[0] = round_f32(std::clamp(scale[0], 0.0, kMaxLogitScale));
    text = select_prefix(params, "text/");
    image = select_prefix(params, "image/");
    curve.push_back({it, loss.value().item()});
  }
  return curve;
}

std::vector<LossPoint> diffusion_pretrain(ParamSet& denoiser, const ParamSet& text, const ToyWorld& world,
                                          const NoiseSchedule& schedule, const DiffusionPretrainConfig& cfg) {
  if (cfg.batch < 1) throw std::invalid_argument("diffusion pretraining needs a positive batch");
  if (!(cfg.null_prob >= 0.0 && cfg.null_prob <= 1.0)) throw std::invalid_argument("null probability outside [0, 1]");
  AdamWState state;
  std::vector<LossPoint> curve;
  const std::size_t d = world.data_dim();
  for (int it = 0; it < cfg.iterations; ++it) {
    Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(it)));
    PairBatch batch = sample_pairs(world, rng, cfg.batch);
    std::vector<int> t(cfg.batch);
    std::vector<double> keep(cfg.batch), drop(cfg.batch);
    for (std::size_t r = 0; r < cfg.batch; ++r) {
      t[r] = static_cast<int>(rng.below(static_cast<std::uint64_t>(schedule.train_steps)));
      const bool null_row = rng.uniform() < cfg.null_prob;
      keep[r] = null_row ? 0.0 : 1.0;
      drop[r] = null_row ? 1.0 : 0.0;
    }
    Tensor eps = rng.normal_tensor({cfg.batch, d});

    Tape tape;
    VarMap dv = bind_params(tape, denoiser, true);
    Var cond = ops::axpby_rows(tape.constant(const_cond(text, batch.prompts)), null_condition(dv, cfg.batch), keep, drop);
    Var e = tape.constant(eps);
    Var z = forward_diffuse(tape.constant(batch.x), e, t, schedule);
    Var loss = ops::squared_error(denoise(dv, z, t, cond, schedule), e);
    ParamSet grads = collect_grads(dv, tape.backward(loss));
    const double progress = cfg.iterations > 1 ? static_cast<double>(it) / (cfg.iterations - 1) : 0.0;
    const double lr = cfg.lr * (1.0 - (1.0 - cfg.final_lr_fraction) * progress);
    adamw_update(denoiser, grads, state, AdamWConfig{lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
    curve.push_back({it, loss.value().item()});
  }
  return curve;
}

double denoiser_mse(const ParamSet& denoiser, const ParamSet& text, const ToyWorld& world,
                    const NoiseSchedule& schedule, std::span<const Prompt> prompts, std::size_t count,
                    std::uint64_t seed) {
  if (prompts.empty() || count == 0) throw std::invalid_argument("denoiser_mse needs prompts and a positive count");
  Rng rng(seed);
  const std::size_t d = world.data_dim();
  std::vector<Prompt> rows;
  Tensor x({count, d});
  std::vector<int> t(count);
  for (std::size_t r = 0; r < count; ++r) {
    const Prompt& p = prompts[r % prompts.size()];
    rows.push_back(p);
    Tensor base = world.pattern_sum(p);
    for (std::size_t i = 0; i < d; ++i) x.at(r, i) = base[i] + world.noise_scale * rng.normal();
    t[r] = static_cast<int>(rng.below(static_cast<std::uint64_t>(schedule.train_steps)));
  }
  x.round_to(Precision::f32);
  Tensor eps = rng.normal_tensor({count, d});
  Tape tape;
  VarMap dv = bind_params(tape, denoiser, false);
  Var e = tape.constant(eps);
  Var z = forward_diffuse(tape.constant(x), e, t, schedule);
  Var cond = tape.constant(const_cond(text, rows));
  return ops::squared_error(denoise(dv, z, t, cond, schedule), e).value().item();
}

ClipAgreement clip_agreement(const ParamSet& text, const ParamSet& image, const ToyWorld& world,
                             std::span<const Prompt> prompts, std::uint64_t seed) {
  const std::size_t n = prompts.size();
  if (n < 2) throw std::invalid_argument("clip agreement needs at least 2 prompts");
  Rng rng(seed);
  const std::size_t d = world.data_dim();
  Tensor x({n, d});
  for (std::size_t r = 0; r < n; ++r) {
    Tensor base = world.pattern_sum(prompts[r]);
    for (std::size_t i = 0; i < d; ++i) x.at(r, i) = base[i] + world.noise_scale * rng.normal();
  }
  x.round_to(Precision::f32);
  Tape tape;
  Var te = ops::normalize_rows(text_encode(bind_params(tape, text, false), prompts));
  Var ie = ops::normalize_rows(image_encode(bind_params(tape, image, false), tape.constant(x)));
  const Tensor sim = ops::matmul(te, ops::transpose(ie)).value();
  ClipAgreement out;
  std::size_t wins = 0, triples = 0;
  for (std::size_t p = 0; p < n; ++p) {
    out.matched_mean += sim.at(p, p);
    for (std::size_t q = 0; q < n; ++q) {
      if (q == p) continue;
      out.mismatched_mean += sim.at(p, q);
      wins += sim.at(p, p) > sim.at(p, q) ? 1 : 0;
      ++triples;
    }
  }
  out.matched_mean /= static_cast<double>(n);
  out.mismatched_mean /= static_cast<double>(triples);
  out.triple_accuracy = static_cast<double>(wins) / static_cast<double>(triples);
  return out;
}

std::string loss_csv(const std::vector<LossPoint>& points) {
  std::ostringstream out;
  out << "iter,loss\n";
  char buf[64];
  for (const LossPoint& p : points) {
    std::snprintf(buf, sizeof buf, "%d,%.9g\n", p.iter, p.loss);
    out << buf;
  }
  return out.str();
}

}  // namespace rc
