#include "rewardchain/config.hpp"

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

namespace rc {

using json = nlohmann::ordered_json;

namespace {

/// Reads keys from one JSON object and remembers which ones were used, so
/// leftovers can be reported as unknown.
class Section {
 public:
  Section(const json& root, std::string name) : name_(std::move(name)) {
    if (!root.is_object()) throw ConfigError(where() + "expected an object");
    obj_ = &root;
  }

  void get(const char* key, int& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) throw ConfigError(where(key) + "expected an integer");
      out = v->get<int>();
    }
  }
  void get(const char* key, std::size_t& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer() || v->get<long long>() < 0) {
        throw ConfigError(where(key) + "expected a non-negative integer");
      }
      out = v->get<std::size_t>();
    }
  }
  void get(const char* key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) throw ConfigError(where(key) + "expected a number");
      out = v->get<double>();
      if (!std::isfinite(out)) throw ConfigError(where(key) + "expected a finite number");
    }
  }
  void get(const char* key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) throw ConfigError(where(key) + "expected true or false");
      out = v->get<bool>();
    }
  }
  template <class Parse>
  void get_enum(const char* key, Parse parse) {
    if (const json* v = find(key)) {
      if (!v->is_string()) throw ConfigError(where(key) + "expected a string");
      try {
        parse(v->get<std::string>());
      } catch (const std::invalid_argument& e) {
        throw ConfigError(where(key) + e.what());
      }
    }
  }
  void get(const char* key, std::vector<int>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) throw ConfigError(where(key) + "expected an array of integers");
      out.clear();
      for (const json& e : *v) {
        if (!e.is_number_integer()) throw ConfigError(where(key) + "expected an array of integers");
        out.push_back(e.get<int>());
      }
    }
  }
  const json* sub(const char* key) { return find(key); }

  void finish() const {
    for (const auto& [key, value] : obj_->items()) {
      if (!used_.count(key)) throw ConfigError(where() + "unknown key '" + key + "'");
    }
  }
  std::string where(const char* key = nullptr) const {
    std::string s = name_.empty() ? "config" : "config." + name_;
    if (key) s += std::string(".") + key;
    return s + ": ";
  }

 private:
  const json* find(const char* key) {
    used_.insert(key);
    auto it = obj_->find(key);
    return it == obj_->end() ? nullptr : &*it;
  }

  std::string name_;
  const json* obj_ = nullptr;
  std::set<std::string> used_;
};

RewardSpec parse_rewards(const json& v, const std::string& where, bool frozen_copy) {
  if (!v.is_array()) throw ConfigError(where + "expected an array of {kind, weight}");
  RewardSpec spec;
  spec.constraint_uses_frozen_copy = frozen_copy;
  for (const json& e : v) {
    Section s(e, "train.rewards[]");
    RewardTerm term;
    bool have_kind = false;
    s.get_enum("kind", [&](const std::string& k) {
      term.kind = parse_reward_kind(k);
      have_kind = true;
    });
    if (!have_kind) throw ConfigError(s.where("kind") + "missing");
    s.get("weight", term.weight);
    s.finish();
    spec.terms.push_back(term);
  }
  return spec;
}

template <class Fn>
void section(Section& root, const char* key, Fn fn) {
  if (const json* v = root.sub(key)) {
    Section s(*v, key);
    fn(s);
    s.finish();
  }
}

}  // namespace

void RunConfig::validate() const {
  try {
    if (world.attributes < 1 || world.attributes > world.vocab) throw ConfigError("world.attributes must lie in [1, vocab]");
    if (world.data_dim < 2) throw ConfigError("world.data_dim must be at least 2");
    if (!(world.noise_scale >= 0.0)) throw ConfigError("world.noise_scale must be non-negative");
    if (!(world.pattern_scale > 0.0)) throw ConfigError("world.pattern_scale must be positive");
    if (dims.data_dim != world.data_dim || dims.vocab != world.vocab) {
      throw ConfigError("model sizes must match the world's data_dim and vocab");
    }
    if (dims.hidden < 1 || dims.cond_dim < 1 || dims.token_dim < 1) throw ConfigError("model widths must be positive");
    if (dims.time_dim != 8) throw ConfigError("model.time_dim is fixed at 8");
    if (clip.iterations < 0 || diffusion.iterations < 0) throw ConfigError("iterations must be non-negative");
    if (clip.batch < 2) throw ConfigError("pretrain_clip.batch must be at least 2");
    if (diffusion.batch < 1) throw ConfigError("pretrain_diffusion.batch must be positive");
    if (!(clip.lr > 0.0) || !(diffusion.lr > 0.0)) throw ConfigError("pretraining learning rates must be positive");
    if (!(diffusion.null_prob >= 0.0 && diffusion.null_prob <= 1.0)) {
      throw ConfigError("pretrain_diffusion.null_prob must lie in [0, 1]");
    }
    if (!(diffusion.final_lr_fraction >= 0.0 && diffusion.final_lr_fraction <= 1.0)) {
      throw ConfigError("pretrain_diffusion.final_lr_fraction must lie in [0, 1]");
    }
    train.validate();
    eval.validate();
    if (eval.sampler.finetuned_steps > eval.sampler.n_steps) {
      throw ConfigError("eval.finetuned_steps must not exceed eval.n_steps");
    }
    if (!(collapse.probe_weight > 0.0) || !(collapse.clip_weight > 0.0)) {
      throw ConfigError("collapse weights must be positive");
    }
    if (ablate_train_k.empty() || ablate_test_n.empty() || ablate_samplers.empty() || ablate_sampler_steps.empty()) {
      throw ConfigError("ablation lists must be non-empty");
    }
    for (int k : ablate_train_k) {
      if (k < 1 || k > train.n_steps) throw ConfigError("ablation.train_k entries must lie in [1, train.n_steps]");
    }
    for (int n : ablate_test_n) {
      if (n < 1 || n > eval.sampler.n_steps) throw ConfigError("ablation.test_n entries must lie in [1, eval.n_steps]");
    }
    for (int n : ablate_sampler_steps) {
      if (n < 1 || n > train.train_steps - 1) throw ConfigError("ablation.sampler_steps entries out of range");
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

RunConfig parse_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c;
  Section root(doc, "");
  section(root, "world", [&](Section& s) {
    s.get("attributes", c.world.attributes);
    s.get("data_dim", c.world.data_dim);
    s.get("vocab", c.world.vocab);
    s.get("pattern_scale", c.world.pattern_scale);
    s.get("noise_scale", c.world.noise_scale);
    s.get("max_cosine", c.world.max_cosine);
  });
  c.dims.data_dim = c.world.data_dim;
  c.dims.vocab = c.world.vocab;
  section(root, "model", [&](Section& s) {
    s.get("cond_dim", c.dims.cond_dim);
    s.get("token_dim", c.dims.token_dim);
    s.get("hidden", c.dims.hidden);
    s.get("time_dim", c.dims.time_dim);
  });
  section(root, "pretrain_clip", [&](Section& s) {
    s.get("iterations", c.clip.iterations);
    s.get("batch", c.clip.batch);
    s.get("lr", c.clip.lr);
    s.get("weight_decay", c.clip.weight_decay);
  });
  section(root, "pretrain_diffusion", [&](Section& s) {
    s.get("iterations", c.diffusion.iterations);
    s.get("batch", c.diffusion.batch);
    s.get("lr", c.diffusion.lr);
    s.get("final_lr_fraction", c.diffusion.final_lr_fraction);
    s.get("weight_decay", c.diffusion.weight_decay);
    s.get("null_prob", c.diffusion.null_prob);
  });
  section(root, "train", [&](Section& s) {
    TrainConfig& t = c.train;
    s.get_enum("regime", [&](const std::string& v) { t.regime = parse_regime(v); });
    s.get_enum("schedule", [&](const std::string& v) { t.schedule = parse_schedule_kind(v); });
    s.get("train_steps", t.train_steps);
    s.get_enum("sampler", [&](const std::string& v) { t.sampler = parse_sampler_kind(v); });
    s.get("n_steps", t.n_steps);
    s.get("k_steps", t.k_steps);
    s.get("cfg_in_chain", t.cfg_in_chain);
    s.get("guidance", t.guidance);
    s.get("lr", t.lr);
    s.get("weight_decay", t.weight_decay);
    s.get("iterations", t.iterations);
    s.get("batch", t.batch);
    s.get("grad_clip", t.grad_clip);
    s.get("checkpointing", t.checkpointing);
    s.get("checkpoint_every", t.checkpoint_every);
    bool frozen = t.rewards.constraint_uses_frozen_copy;
    s.get("constraint_uses_frozen_copy", frozen);
    t.rewards.constraint_uses_frozen_copy = frozen;
    if (const json* r = s.sub("rewards")) t.rewards = parse_rewards(*r, s.where("rewards"), frozen);
  });
  c.eval.sampler.schedule = c.train.schedule;
  c.eval.sampler.train_steps = c.train.train_steps;
  c.eval.rewards = c.train.rewards;
  section(root, "eval", [&](Section& s) {
    SamplerConfig& e = c.eval.sampler;
    s.get_enum("sampler", [&](const std::string& v) { e.sampler = parse_sampler_kind(v); });
    s.get("n_steps", e.n_steps);
    s.get("guidance", e.guidance);
    s.get("finetuned_steps", e.finetuned_steps);
    s.get("seeds", c.eval.seeds);
  });
  section(root, "collapse", [&](Section& s) {
    s.get("probe_weight", c.collapse.probe_weight);
    s.get("clip_weight", c.collapse.clip_weight);
    s.get("frozen_copy", c.collapse.frozen_copy);
  });
  section(root, "ablation", [&](Section& s) {
    s.get("train_k", c.ablate_train_k);
    s.get("test_n", c.ablate_test_n);
    if (const json* v = s.sub("samplers")) {
      if (!v->is_array()) throw ConfigError(s.where("samplers") + "expected an array of strings");
      c.ablate_samplers.clear();
      for (const json& e : *v) {
        if (!e.is_string()) throw ConfigError(s.where("samplers") + "expected an array of strings");
        try {
          c.ablate_samplers.push_back(parse_sampler_kind(e.get<std::string>()));
        } catch (const std::invalid_argument& err) {
          throw ConfigError(s.where("samplers") + err.what());
        }
      }
    }
    s.get("sampler_steps", c.ablate_sampler_steps);
  });
  root.finish();
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

std::string config_json(const RunConfig& c) {
  json j;
  j["world"] = {{"attributes", c.world.attributes},       {"data_dim", c.world.data_dim},
                {"vocab", c.world.vocab},                 {"pattern_scale", c.world.pattern_scale},
                {"noise_scale", c.world.noise_scale},     {"max_cosine", c.world.max_cosine}};
  j["model"] = {{"cond_dim", c.dims.cond_dim},
                {"token_dim", c.dims.token_dim},
                {"hidden", c.dims.hidden},
                {"time_dim", c.dims.time_dim}};
  j["pretrain_clip"] = {{"iterations", c.clip.iterations},
                        {"batch", c.clip.batch},
                        {"lr", c.clip.lr},
                        {"weight_decay", c.clip.weight_decay}};
  j["pretrain_diffusion"] = {{"iterations", c.diffusion.iterations},
                             {"batch", c.diffusion.batch},
                             {"lr", c.diffusion.lr},
                             {"final_lr_fraction", c.diffusion.final_lr_fraction},
                             {"weight_decay", c.diffusion.weight_decay},
                             {"null_prob", c.diffusion.null_prob}};
  const TrainConfig& t = c.train;
  json rewards = json::array();
  for (const RewardTerm& r : t.rewards.terms) rewards.push_back({{"kind", to_string(r.kind)}, {"weight", r.weight}});
  j["train"] = {{"regime", to_string(t.regime)},
                {"schedule", to_string(t.schedule)},
                {"train_steps", t.train_steps},
                {"sampler", to_string(t.sampler)},
                {"n_steps", t.n_steps},
                {"k_steps", t.k_steps},
                {"cfg_in_chain", t.cfg_in_chain},
                {"guidance", t.guidance},
                {"lr", t.lr},
                {"weight_decay", t.weight_decay},
                {"iterations", t.iterations},
                {"batch", t.batch},
                {"grad_clip", t.grad_clip},
                {"checkpointing", t.checkpointing},
                {"checkpoint_every", t.checkpoint_every},
                {"constraint_uses_frozen_copy", t.rewards.constraint_uses_frozen_copy},
                {"rewards", rewards}};
  j["eval"] = {{"sampler", to_string(c.eval.sampler.sampler)},
               {"n_steps", c.eval.sampler.n_steps},
               {"guidance", c.eval.sampler.guidance},
               {"finetuned_steps", c.eval.sampler.finetuned_steps},
               {"seeds", c.eval.seeds}};
  j["collapse"] = {{"probe_weight", c.collapse.probe_weight},
                   {"clip_weight", c.collapse.clip_weight},
                   {"frozen_copy", c.collapse.frozen_copy}};
  json samplers = json::array();
  for (SamplerKind k : c.ablate_samplers) samplers.push_back(to_string(k));
  j["ablation"] = {{"train_k", c.ablate_train_k},
                   {"test_n", c.ablate_test_n},
                   {"samplers", samplers},
                   {"sampler_steps", c.ablate_sampler_steps}};
  return j.dump(2) + "\n";
}

}  // namespace rc
