#include "rewardchain/world.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace rc {

namespace {

double cosine(const Tensor& a, const Tensor& b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

std::string pattern_name(std::size_t k) { return "world/pattern_" + std::to_string(k); }

const Tensor& require(const ParamSet& p, const std::string& name) {
  auto it = p.find(name);
  if (it == p.end()) throw std::invalid_argument("world checkpoint is missing '" + name + "'");
  return it->second;
}

void shuffle(std::vector<Prompt>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

}  // namespace

void ToyWorld::check_prompt(const Prompt& prompt) const {
  if (prompt.empty()) throw std::invalid_argument("empty prompt");
  for (int tok : prompt) {
    if (tok < 0 || static_cast<std::size_t>(tok) >= patterns.size()) {
      throw std::out_of_range("token " + std::to_string(tok) + " does not name an attribute");
    }
  }
}

Tensor ToyWorld::pattern_sum(const Prompt& prompt) const {
  check_prompt(prompt);
  Tensor out({data_dim()});
  for (int tok : prompt) {
    const Tensor& p = patterns[static_cast<std::size_t>(tok)];
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] += p[i];
  }
  out.round_to(Precision::f32);
  return out;
}

ToyWorld make_world(const WorldConfig& cfg, std::uint64_t seed) {
  if (cfg.attributes < 3) throw std::invalid_argument("world needs at least 3 attributes");
  if (cfg.attributes > cfg.vocab) throw std::invalid_argument("more attributes than vocabulary tokens");
  if (!(cfg.noise_scale >= 0.0)) throw std::invalid_argument("noise scale must be non-negative");
  Rng rng(seed);
  ToyWorld w;
  w.noise_scale = round_f32(cfg.noise_scale);
  auto draw = [&] {
    Tensor t = rng.normal_tensor({cfg.data_dim});
    for (double& v : t.data()) v = round_f32(v * cfg.pattern_scale);
    return t;
  };
  constexpr int kMaxTries = 10000;
  for (std::size_t k = 0; k < cfg.attributes; ++k) {
    for (int attempt = 0;; ++attempt) {
      if (attempt == kMaxTries) throw std::runtime_error("could not draw separable attribute patterns");
      Tensor cand = draw();
      bool ok = true;
      for (const Tensor& p : w.patterns) ok = ok && cosine(cand, p) < cfg.max_cosine;
      if (ok) {
        w.patterns.push_back(std::move(cand));
        break;
      }
    }
  }
  w.style = draw();
  w.collapse_point = w.patterns.front();
  return w;
}

ParamSet world_to_params(const ToyWorld& w) {
  ParamSet p;
  for (std::size_t k = 0; k < w.patterns.size(); ++k) p[pattern_name(k)] = w.patterns[k];
  p["world/style"] = w.style;
  p["world/collapse_point"] = w.collapse_point;
  p["world/noise_scale"] = Tensor::scalar(w.noise_scale);
  return p;
}

ToyWorld world_from_params(const ParamSet& p) {
  ToyWorld w;
  for (std::size_t k = 0;; ++k) {
    auto it = p.find(pattern_name(k));
    if (it == p.end()) break;
    w.patterns.push_back(it->second.reshaped({it->second.numel()}));
  }
  if (w.patterns.empty()) throw std::invalid_argument("world checkpoint holds no patterns");
  w.style = require(p, "world/style");
  w.collapse_point = require(p, "world/collapse_point");
  w.noise_scale = require(p, "world/noise_scale").item();
  return w;
}

Prompt sample_prompt(const ToyWorld& w, Rng& rng) {
  const std::size_t len = 1 + rng.below(3);
  std::vector<int> pool(w.attributes());
  for (std::size_t k = 0; k < pool.size(); ++k) pool[k] = static_cast<int>(k);
  Prompt prompt;
  for (std::size_t i = 0; i < len; ++i) {
    const std::size_t j = i + rng.below(pool.size() - i);
    std::swap(pool[i], pool[j]);
    prompt.push_back(pool[i]);
  }
  return prompt;
}

Pair sample_pair(const ToyWorld& w, Rng& rng) {
  Pair out;
  out.prompt = sample_prompt(w, rng);
  out.x = w.pattern_sum(out.prompt);
  for (std::size_t i = 0; i < out.x.numel(); ++i) out.x[i] += w.noise_scale * rng.normal();
  out.x.round_to(Precision::f32);
  return out;
}

PairBatch sample_pairs(const ToyWorld& w, Rng& rng, std::size_t n) {
  PairBatch b;
  const std::size_t d = w.data_dim();
  b.x = Tensor({n, d});
  for (std::size_t r = 0; r < n; ++r) {
    Pair p = sample_pair(w, rng);
    for (std::size_t i = 0; i < d; ++i) b.x.at(r, i) = p.x[i];
    b.prompts.push_back(std::move(p.prompt));
  }
  return b;
}

PromptSet parse_prompts(const std::string& text, std::size_t vocab, Split split) {
  PromptSet set;
  set.split = split;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream words(line);
    std::string word;
    Prompt prompt;
    while (words >> word) {
      int tok = 0;
      const auto [end, ec] = std::from_chars(word.data(), word.data() + word.size(), tok);
      if (ec != std::errc() || end != word.data() + word.size()) {
        throw PromptFileError("line " + std::to_string(lineno) + ": '" + word + "' is not an integer token");
      }
      if (tok < 0 || static_cast<std::size_t>(tok) >= vocab) {
        throw PromptFileError("line " + std::to_string(lineno) + ": token " + std::to_string(tok) +
                              " outside vocabulary [0, " + std::to_string(vocab) + ")");
      }
      prompt.push_back(tok);
    }
    if (prompt.empty()) continue;
    set.prompts.push_back(std::move(prompt));
    set.lines.push_back(lineno);
  }
  if (set.prompts.empty()) throw PromptFileError("prompt file holds no prompts");
  return set;
}

PromptSet load_prompts(const std::filesystem::path& path, std::size_t vocab, Split split) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open prompt file '" + path.string() + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  try {
    return parse_prompts(ss.str(), vocab, split);
  } catch (const PromptFileError& e) {
    throw PromptFileError(path.string() + ": " + e.what());
  }
}

std::string format_prompts(const PromptSet& set) {
  std::string out;
  for (const Prompt& p : set.prompts) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (i) out += ' ';
      out += std::to_string(p[i]);
    }
    out += '\n';
  }
  return out;
}

void save_prompts(const PromptSet& set, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  f << format_prompts(set);
}

PromptSplits make_prompt_splits(const ToyWorld& w, std::uint64_t seed, std::size_t holdout_count) {
  const int a = static_cast<int>(w.attributes());
  std::vector<Prompt> all;
  for (int i = 0; i < a; ++i) {
    all.push_back({i});
    for (int j = i + 1; j < a; ++j) {
      all.push_back({i, j});
      for (int k = j + 1; k < a; ++k) all.push_back({i, j, k});
    }
  }
  if (holdout_count == 0 || holdout_count >= all.size()) {
    throw std::invalid_argument("holdout size must leave both splits non-empty");
  }
  std::sort(all.begin(), all.end(), [](const Prompt& x, const Prompt& y) {
    return x.size() != y.size() ? x.size() < y.size() : x < y;
  });
  Rng rng(seed);
  shuffle(all, rng);
  PromptSplits s;
  s.holdout.split = Split::holdout;
  s.train.split = Split::train;
  s.holdout.prompts.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(holdout_count));
  s.train.prompts.assign(all.begin() + static_cast<std::ptrdiff_t>(holdout_count), all.end());
  s.holdout.lines.assign(s.holdout.prompts.size(), 0);
  s.train.lines.assign(s.train.prompts.size(), 0);
  return s;
}

}  // namespace rc
