#include "rewardchain/models.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "rewardchain/ops.hpp"

namespace rc {

namespace {

Tensor fan_in_uniform(Rng& rng, std::size_t fan_in, std::size_t fan_out) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return rng.uniform_tensor({fan_in, fan_out}, -bound, bound);
}

void require_width(const Var& x, std::size_t width, const char* what) {
  const Tensor& v = x.value();
  if (v.rank() != 2 || v.cols() != width) {
    throw std::invalid_argument(std::string(what) + ": expected [B, " + std::to_string(width) + "] input, got " +
                                shape_str(v.shape()));
  }
}

}  // namespace

ParamSet init_text_encoder(const ModelDims& d, Rng& rng) {
  ParamSet p;
  p["text/embed"] = rng.uniform_tensor({d.vocab, d.token_dim}, -1.0, 1.0);
  p["text/w1"] = fan_in_uniform(rng, d.token_dim, d.hidden);
  p["text/b1"] = Tensor::zeros({d.hidden});
  p["text/w2"] = fan_in_uniform(rng, d.hidden, d.cond_dim);
  p["text/b2"] = Tensor::zeros({d.cond_dim});
  return p;
}

ParamSet init_image_encoder(const ModelDims& d, Rng& rng) {
  ParamSet p;
  p["image/w1"] = fan_in_uniform(rng, d.data_dim, d.hidden);
  p["image/b1"] = Tensor::zeros({d.hidden});
  p["image/w2"] = fan_in_uniform(rng, d.hidden, d.cond_dim);
  p["image/b2"] = Tensor::zeros({d.cond_dim});
  Tensor scale = Tensor::scalar(kInitLogitScale);
  scale.round_to(Precision::f32);
  p["image/logit_scale"] = scale;
  return p;
}

ParamSet init_denoiser(const ModelDims& d, Rng& rng) {
  ParamSet p;
  const std::size_t in = d.data_dim + d.time_dim + d.cond_dim;
  p["denoiser/w1"] = fan_in_uniform(rng, in, d.hidden);
  p["denoiser/b1"] = Tensor::zeros({d.hidden});
  p["denoiser/w2"] = fan_in_uniform(rng, d.hidden, d.hidden);
  p["denoiser/b2"] = Tensor::zeros({d.hidden});
  p["denoiser/w3"] = fan_in_uniform(rng, d.hidden, d.data_dim);
  p["denoiser/b3"] = Tensor::zeros({d.data_dim});
  p["denoiser/null"] = rng.uniform_tensor({1, d.cond_dim}, -1.0, 1.0);
  return p;
}

Tensor time_embedding(std::span<const int> t, int train_steps, std::size_t width) {
  if (width % 2 != 0) throw std::invalid_argument("time embedding width must be even");
  if (train_steps < 1) throw std::invalid_argument("time embedding needs a positive timestep count");
  Tensor out({t.size(), width});
  const std::size_t half = width / 2;
  for (std::size_t r = 0; r < t.size(); ++r) {
    const double u = static_cast<double>(t[r]) / train_steps;
    for (std::size_t k = 0; k < half; ++k) {
      const double angle = std::numbers::pi * std::ldexp(u, static_cast<int>(k));
      out.at(r, 2 * k) = std::sin(angle);
      out.at(r, 2 * k + 1) = std::cos(angle);
    }
  }
  out.round_to(Precision::f32);
  return out;
}

Var text_encode(const VarMap& p, std::span<const Prompt> prompts) {
  if (prompts.empty()) throw std::invalid_argument("text_encode: no prompts");
  Var table = get_var(p, "text/embed");
  const auto vocab = static_cast<int>(table.value().rows());
  std::vector<Var> pooled;
  pooled.reserve(prompts.size());
  for (const Prompt& prompt : prompts) {
    if (prompt.empty()) throw std::invalid_argument("text_encode: empty prompt");
    for (int tok : prompt) {
      if (tok < 0 || tok >= vocab) {
        throw std::out_of_range("text_encode: token " + std::to_string(tok) + " outside vocabulary of " +
                                std::to_string(vocab));
      }
    }
    pooled.push_back(ops::mean_rows(ops::gather_rows(table, prompt)));
  }
  Var h = pooled.size() == 1 ? pooled[0] : ops::concat_rows(pooled);
  h = ops::silu(ops::linear(h, get_var(p, "text/w1"), get_var(p, "text/b1")));
  return ops::linear(h, get_var(p, "text/w2"), get_var(p, "text/b2"));
}

Var text_encode(const VarMap& p, const Prompt& prompt) { return text_encode(p, std::span<const Prompt>(&prompt, 1)); }

Var image_hidden_preactivation(const VarMap& p, Var x) {
  Var w1 = get_var(p, "image/w1");
  require_width(x, w1.value().rows(), "image_encode");
  return ops::linear(x, w1, get_var(p, "image/b1"));
}

Var image_encode(const VarMap& p, Var x) {
  Var h = ops::silu(image_hidden_preactivation(p, x));
  return ops::linear(h, get_var(p, "image/w2"), get_var(p, "image/b2"));
}

Var denoise(const VarMap& p, Var z, std::span<const int> t, Var cond, const NoiseSchedule& schedule) {
  Var w1 = get_var(p, "denoiser/w1");
  Var w3 = get_var(p, "denoiser/w3");
  const std::size_t data_dim = w3.value().cols();
  const std::size_t cond_dim = get_var(p, "denoiser/null").value().cols();
  const std::size_t time_dim = w1.value().rows() - data_dim - cond_dim;
  require_width(z, data_dim, "denoise latent");
  require_width(cond, cond_dim, "denoise conditioning");
  const std::size_t batch = z.value().rows();
  if (cond.value().rows() != batch) throw std::invalid_argument("denoise: latent and conditioning batch differ");

  std::vector<double> alpha, sigma;
  for (int ti : t) {
    schedule.check_timestep(ti);
    alpha.push_back(schedule.alpha[static_cast<std::size_t>(ti)]);
    sigma.push_back(schedule.sigma[static_cast<std::size_t>(ti)]);
  }
  Tensor temb;
  if (t.size() == 1) {
    Tensor one = time_embedding(t, schedule.train_steps, time_dim);
    temb = Tensor({batch, time_dim});
    for (std::size_t r = 0; r < batch; ++r) {
      for (std::size_t c = 0; c < time_dim; ++c) temb.at(r, c) = one[c];
    }
  } else if (t.size() == batch) {
    temb = time_embedding(t, schedule.train_steps, time_dim);
  } else {
    throw std::invalid_argument("denoise: expected one timestep or one per row");
  }
  const Var parts[3] = {z, z.tape()->constant(std::move(temb)), cond};
  Var h = ops::silu(ops::linear(ops::concat_cols(parts), w1, get_var(p, "denoiser/b1")));
  h = ops::silu(ops::linear(h, get_var(p, "denoiser/w2"), get_var(p, "denoiser/b2")));
  return ops::axpby_rows(z, ops::linear(h, w3, get_var(p, "denoiser/b3")), sigma, alpha);
}

Var denoise(const VarMap& p, Var z, int t, Var cond, const NoiseSchedule& schedule) {
  const int ts[1] = {t};
  return denoise(p, z, ts, cond, schedule);
}

Var null_condition(const VarMap& p, std::size_t batch) {
  return ops::repeat_rows(get_var(p, "denoiser/null"), batch);
}

ModelDims infer_dims(const ParamSet& text, const ParamSet& denoiser) {
  auto get = [](const ParamSet& s, const std::string& name) -> const Tensor& {
    auto it = s.find(name);
    if (it == s.end()) throw std::invalid_argument("missing parameter '" + name + "'");
    return it->second;
  };
  ModelDims d;
  const Tensor& embed = get(text, "text/embed");
  d.vocab = embed.dim(0);
  d.token_dim = embed.dim(1);
  d.hidden = get(text, "text/w1").dim(1);
  d.cond_dim = get(text, "text/w2").dim(1);
  d.data_dim = get(denoiser, "denoiser/w3").dim(1);
  d.time_dim = get(denoiser, "denoiser/w1").dim(0) - d.data_dim - d.cond_dim;
  return d;
}

}  // namespace rc
