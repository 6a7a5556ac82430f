#include "cli.hpp"

#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "rewardchain/config.hpp"

namespace rc::cli {

namespace fs = std::filesystem;

namespace {

// Child seed streams; every random draw of a command derives from --seed
// through one of these.
enum Stream : std::uint64_t {
  kWorld = 1,
  kInitClip,
  kClip,
  kSplits,
  kInitDenoiser,
  kDiffusion,
  kFinetune,
  kEval,
  kAblation,
  kCollapse,
  kSample,
  kAgreement,
};

struct Globals {
  std::string config_path;
  std::uint64_t seed = 0;
  std::string out_dir = "rewardchain-out";
};

struct Context {
  RunConfig config;
  std::uint64_t seed = 0;
  fs::path out;
  std::ostream& log;

  std::uint64_t stream(Stream s) const { return mix_seed(seed, s); }
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) throw std::runtime_error("cannot write " + path.string());
}

void write_table(const Context& ctx, const std::string& stem, const Table& t) {
  write_text(ctx.out / (stem + ".csv"), t.csv());
  write_text(ctx.out / (stem + ".txt"), t.text());
  ctx.log << t.text();
}

ModelBundle load_model(const fs::path& dir) {
  ModelBundle b = load_bundle(dir);
  require_full(b, dir);
  return b;
}

PromptSet load_split(const fs::path& dir, const ToyWorld& world, Split split) {
  const fs::path file = dir / (split == Split::train ? bundle_files::train_prompts : bundle_files::holdout_prompts);
  if (!fs::exists(file)) throw std::runtime_error("missing prompt file '" + file.string() + "'");
  PromptSet set = load_prompts(file, world.patterns.size(), split);
  for (const Prompt& p : set.prompts) world.check_prompt(p);
  return set;
}

void copy_prompts(const fs::path& from, const fs::path& to) {
  for (const char* f : {bundle_files::train_prompts, bundle_files::holdout_prompts}) {
    if (fs::exists(from / f) && fs::absolute(from) != fs::absolute(to)) {
      fs::copy_file(from / f, to / f, fs::copy_options::overwrite_existing);
    }
  }
}

Prompt parse_prompt_arg(const std::string& text, const ToyWorld& world) {
  PromptSet set = parse_prompts(text, world.patterns.size());
  if (set.size() != 1) throw std::invalid_argument("--prompt must be a single line of tokens");
  world.check_prompt(set.prompts[0]);
  return set.prompts[0];
}

void cmd_pretrain_clip(const Context& ctx) {
  const RunConfig& c = ctx.config;
  ModelBundle b;
  b.world = make_world(c.world, ctx.stream(kWorld));
  Rng init(ctx.stream(kInitClip));
  b.text = init_text_encoder(c.dims, init);
  b.image = init_image_encoder(c.dims, init);
  ClipPretrainConfig pc = c.clip;
  pc.seed = ctx.stream(kClip);
  const auto losses = clip_pretrain(b.text, b.image, b.world, pc);
  const PromptSplits splits = make_prompt_splits(b.world, ctx.stream(kSplits));
  save_bundle(b, ctx.out);
  save_prompts(splits.train, ctx.out / bundle_files::train_prompts);
  save_prompts(splits.holdout, ctx.out / bundle_files::holdout_prompts);
  write_text(ctx.out / "clip_loss.csv", loss_csv(losses));
  const ClipAgreement a = clip_agreement(b.text, b.image, b.world, splits.holdout.prompts, ctx.stream(kAgreement));
  Table t;
  t.header = {"matched_mean", "mismatched_mean", "triple_accuracy"};
  t.rows.push_back({format_number(a.matched_mean), format_number(a.mismatched_mean), format_number(a.triple_accuracy)});
  write_table(ctx, "clip_agreement", t);
}

void cmd_pretrain_diffusion(const Context& ctx, const fs::path& model) {
  ModelBundle b = load_bundle(model);
  require_clip(b, model);
  ModelDims dims = ctx.config.dims;
  dims.cond_dim = b.text.at("text/w2").dim(1);
  dims.data_dim = b.world.data_dim();
  Rng init(ctx.stream(kInitDenoiser));
  b.denoiser = init_denoiser(dims, init);
  const NoiseSchedule schedule = make_schedule(ctx.config.train.train_steps, ctx.config.train.schedule);
  DiffusionPretrainConfig dc = ctx.config.diffusion;
  dc.seed = ctx.stream(kDiffusion);
  const auto losses = diffusion_pretrain(b.denoiser, b.text, b.world, schedule, dc);
  save_bundle(b, ctx.out);
  copy_prompts(model, ctx.out);
  write_text(ctx.out / "diffusion_loss.csv", loss_csv(losses));
  const PromptSet holdout = load_split(model, b.world, Split::holdout);
  const double mse = denoiser_mse(b.denoiser, b.text, b.world, schedule, holdout.prompts, 512, ctx.stream(kEval));
  Table t;
  t.header = {"holdout_mse"};
  t.rows.push_back({format_number(mse)});
  write_table(ctx, "denoiser_mse", t);
}

void cmd_finetune(const Context& ctx, const fs::path& model, Regime regime) {
  const ModelBundle start = load_model(model);
  const PromptSet train = load_split(model, start.world, Split::train);
  TrainConfig tc = ctx.config.train;
  tc.regime = regime;
  tc.seed = ctx.stream(kFinetune);
  CheckpointFn save_every = [&](int done, const ModelBundle& b) {
    char name[32];
    std::snprintf(name, sizeof name, "iter_%06d", done);
    const fs::path dir = ctx.out / "checkpoints" / name;
    save_bundle(b, dir);
    copy_prompts(model, dir);
    ctx.log << "checkpoint " << dir.string() << '\n';
  };
  const TrainResult r = run_training(tc, start, train, save_every);
  save_bundle(r.bundle, ctx.out);
  copy_prompts(model, ctx.out);
  write_text(ctx.out / "metrics.csv", metrics_csv(r.metrics));
  Table t;
  t.header = {"regime", "iterations", "param_hash"};
  const ParamSet& trained = regime == Regime::unet_chain ? r.bundle.denoiser : r.bundle.text;
  t.rows.push_back({to_string(regime), std::to_string(tc.iterations), hex64(params_hash(trained))});
  write_table(ctx, "finetune", t);
}

SampleRecord record_for(const ModelBundle& b, const Prompt& prompt, std::uint64_t seed, Tensor x, const Tensor& cond,
                        const SamplerConfig& sc) {
  SampleRecord r;
  r.prompt = prompt;
  r.seed = seed;
  const Prompt ps[1] = {prompt};
  r.scores = score_samples(x, ps, cond, b.image, b.world);
  r.x = std::move(x);
  r.config = sc;
  return r;
}

/// Base-encoder conditioning early, `late` for the last finetuned_steps.
Tensor sample_with(const ModelBundle& b, const Tensor& base, const Tensor& late, const Tensor& z_T,
                   const SamplerConfig& sc) {
  return sample_from_embeddings(b.denoiser, staged_conditioning(base, late, sc.n_steps, std::min(sc.finetuned_steps, sc.n_steps)),
                                z_T, sc);
}

const ParamSet& base_encoder(const ModelBundle& b) { return b.base_text.empty() ? b.text : b.base_text; }

void cmd_sample(const Context& ctx, const fs::path& model, const std::string& prompt_text) {
  const ModelBundle b = load_model(model);
  const Prompt prompt = parse_prompt_arg(prompt_text, b.world);
  const SamplerConfig& sc = ctx.config.eval.sampler;
  const std::uint64_t seed = ctx.stream(kSample);
  const Prompt ps[1] = {prompt};
  const Tensor c = encode_prompts(b.text, ps);
  const Tensor x = sample_prompts(b, ps, initial_noise(seed, 1, b.world.data_dim()), sc);
  write_sample(ctx.out / "sample", record_for(b, prompt, ctx.seed, x, c, sc));
  ctx.log << "wrote " << (ctx.out / "sample.f32").string() << '\n';
}

void cmd_interpolate(const Context& ctx, const fs::path& model, const std::string& prompt_text,
                     const std::vector<double>& lambdas) {
  const ModelBundle b = load_model(model);
  const Prompt prompt = parse_prompt_arg(prompt_text, b.world);
  const SamplerConfig& sc = ctx.config.eval.sampler;
  const Prompt ps[1] = {prompt};
  const Tensor c0 = encode_prompts(base_encoder(b), ps), c1 = encode_prompts(b.text, ps);
  const Tensor z_T = initial_noise(ctx.stream(kSample), 1, b.world.data_dim());
  for (double l : lambdas) interpolate_embeddings(c0, c0, l);  // validate all before sampling
  Table t;
  t.header = {"index", "lambda", "distance_to_previous", "reward_image", "reward_align", "reward_clip"};
  Tensor prev;
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    const Tensor c = interpolate_embeddings(c0, c1, lambdas[i]);
    const Tensor x = sample_with(b, c0, c, z_T, sc);
    SampleRecord r = record_for(b, prompt, ctx.seed, x, c, sc);
    r.lambda = lambdas[i];
    write_sample(ctx.out / ("interp_" + std::to_string(i)), r);
    double dist = 0.0;
    if (i > 0) {
      for (std::size_t k = 0; k < x.numel(); ++k) dist += (x[k] - prev[k]) * (x[k] - prev[k]);
      dist = std::sqrt(dist);
    }
    t.rows.push_back({std::to_string(i), format_number(lambdas[i]), i ? format_number(dist) : "",
                      format_number(r.scores.image), format_number(r.scores.align), format_number(r.scores.clip)});
    prev = x;
  }
  write_table(ctx, "interpolate", t);
}

void cmd_mix(const Context& ctx, const fs::path& model, const std::string& prompt_text,
             const std::vector<std::string>& encoders, const std::vector<double>& weights) {
  const ModelBundle b = load_model(model);
  const Prompt prompt = parse_prompt_arg(prompt_text, b.world);
  if (encoders.size() != weights.size()) {
    throw std::invalid_argument("--encoders and --weights must have the same length");
  }
  const SamplerConfig& sc = ctx.config.eval.sampler;
  const Prompt ps[1] = {prompt};
  std::vector<WeightedEmbedding> entries;
  for (std::size_t i = 0; i < encoders.size(); ++i) {
    ParamSet text;
    if (encoders[i] == "base") {
      text = base_encoder(b);
    } else {
      const ModelBundle e = load_bundle(encoders[i]);
      if (e.text.empty()) throw std::runtime_error("missing checkpoint '" + (fs::path(encoders[i]) / bundle_files::text).string() + "'");
      text = e.text;
    }
    entries.push_back({encode_prompts(text, ps), weights[i]});
  }
  const Tensor c = mix_styles(entries);
  const Tensor x = sample_with(b, encode_prompts(base_encoder(b), ps), c,
                               initial_noise(ctx.stream(kSample), 1, b.world.data_dim()), sc);
  SampleRecord r = record_for(b, prompt, ctx.seed, x, c, sc);
  r.mix_weights = weights;
  r.mix_sources = encoders;
  write_sample(ctx.out / "mix", r);
  ctx.log << "wrote " << (ctx.out / "mix.f32").string() << '\n';
}

void cmd_evaluate(const Context& ctx, const fs::path& model, const std::string& baseline) {
  const ModelBundle b = load_model(model);
  const PromptSet holdout = load_split(model, b.world, Split::holdout);
  std::vector<std::pair<std::string, EvalReport>> reports;
  const std::uint64_t seed = ctx.stream(kEval);
  if (!baseline.empty()) reports.emplace_back("baseline", evaluate(load_model(baseline), holdout.prompts, ctx.config.eval, seed));
  reports.emplace_back("model", evaluate(b, holdout.prompts, ctx.config.eval, seed));
  write_table(ctx, "eval", report_table(reports));
}

void cmd_ablate_steps(const Context& ctx, const fs::path& model) {
  const ModelBundle b = load_model(model);
  const PromptSet train = load_split(model, b.world, Split::train);
  const PromptSet holdout = load_split(model, b.world, Split::holdout);
  TrainConfig tc = ctx.config.train;
  tc.regime = Regime::prompt_chain;
  write_table(ctx, "ablate_steps",
              ablate_steps(tc, ctx.config.eval, b, train, holdout.prompts, ctx.config.ablate_train_k,
                           ctx.config.ablate_test_n, ctx.stream(kAblation)));
}

void cmd_ablate_schedulers(const Context& ctx, const fs::path& model) {
  const ModelBundle b = load_model(model);
  const PromptSet holdout = load_split(model, b.world, Split::holdout);
  write_table(ctx, "ablate_schedulers",
              ablate_schedulers(ctx.config.eval, b, holdout.prompts, ctx.config.ablate_samplers,
                                ctx.config.ablate_sampler_steps, ctx.stream(kAblation)));
}

void cmd_collapse(const Context& ctx, const fs::path& model) {
  const ModelBundle b = load_model(model);
  const PromptSet train = load_split(model, b.world, Split::train);
  const PromptSet holdout = load_split(model, b.world, Split::holdout);
  const CollapseReport r = collapse_experiment(ctx.config.train, ctx.config.collapse, ctx.config.eval, b, train,
                                               holdout.prompts, ctx.stream(kCollapse));
  save_bundle(r.unconstrained_bundle, ctx.out / "no_constraint");
  save_bundle(r.constrained_bundle, ctx.out / "constraint");
  write_table(ctx, "collapse", r.table());
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Reward fine-tuning of a toy text-conditioned diffusion model.", "rewardchain"};
  app.fallthrough();
  app.require_subcommand(0, 1);
  Globals g;
  app.add_option("--config", g.config_path, "JSON configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Seed every random draw derives from");
  app.add_option("--out-dir", g.out_dir, "Directory for all outputs");

  std::string model, prompt = "0", baseline, regime = "prompt-chain";
  std::vector<double> lambdas = {0.0, 0.25, 0.5, 0.75, 1.0}, weights;
  std::vector<std::string> encoders;
  std::function<void(const Context&)> action;

  auto model_opt = [&](CLI::App* sub) { sub->add_option("--model", model, "Checkpoint directory")->required(); };

  app.add_subcommand("pretrain-clip", "Create the world and prompt splits, train the text and image encoders")
      ->callback([&] { action = cmd_pretrain_clip; });
  auto* pd = app.add_subcommand("pretrain-diffusion", "Train the denoiser under the frozen text encoder");
  model_opt(pd);
  pd->callback([&] { action = [&](const Context& c) { cmd_pretrain_diffusion(c, model); }; });

  auto* ft = app.add_subcommand("finetune-text", "Reward fine-tuning of the text encoder");
  model_opt(ft);
  ft->add_option("--regime", regime, "prompt-chain or direct")->check(CLI::IsMember({"prompt-chain", "direct"}));
  ft->callback([&] { action = [&](const Context& c) { cmd_finetune(c, model, parse_regime(regime)); }; });

  auto* fu = app.add_subcommand("finetune-unet", "Reward fine-tuning of the denoiser with the text encoder frozen");
  model_opt(fu);
  fu->callback([&] { action = [&](const Context& c) { cmd_finetune(c, model, Regime::unet_chain); }; });

  auto* sa = app.add_subcommand("sample", "Sample one prompt");
  model_opt(sa);
  sa->add_option("--prompt", prompt, "Whitespace-separated attribute tokens");
  sa->callback([&] { action = [&](const Context& c) { cmd_sample(c, model, prompt); }; });

  auto* in = app.add_subcommand("interpolate", "Sample along original -> fine-tuned embedding interpolation");
  model_opt(in);
  in->add_option("--prompt", prompt, "Whitespace-separated attribute tokens");
  in->add_option("--lambdas", lambdas, "Interpolation weights")->delimiter(',');
  in->callback([&] { action = [&](const Context& c) { cmd_interpolate(c, model, prompt, lambdas); }; });

  auto* mx = app.add_subcommand("mix", "Sample a convex mix of several encoders' embeddings");
  model_opt(mx);
  mx->add_option("--prompt", prompt, "Whitespace-separated attribute tokens");
  mx->add_option("--encoders", encoders, "Checkpoint directories, or 'base' for the model's original encoder")
      ->delimiter(',')
      ->required();
  mx->add_option("--weights", weights, "Mixing weights, summing to 1")->delimiter(',')->required();
  mx->callback([&] { action = [&](const Context& c) { cmd_mix(c, model, prompt, encoders, weights); }; });

  auto* ev = app.add_subcommand("evaluate", "Score a model on its holdout prompts");
  model_opt(ev);
  ev->add_option("--baseline", baseline, "Optional second checkpoint directory reported alongside");
  ev->callback([&] { action = [&](const Context& c) { cmd_evaluate(c, model, baseline); }; });

  auto* as = app.add_subcommand("ablate-steps", "Train-K x test-N grid");
  model_opt(as);
  as->callback([&] { action = [&](const Context& c) { cmd_ablate_steps(c, model); }; });

  auto* ac = app.add_subcommand("ablate-schedulers", "Sampler x step-count table");
  model_opt(ac);
  ac->callback([&] { action = [&](const Context& c) { cmd_ablate_schedulers(c, model); }; });

  auto* co = app.add_subcommand("collapse", "Collapse-probe runs without and with the similarity constraint");
  model_opt(co);
  co->callback([&] { action = [&](const Context& c) { cmd_collapse(c, model); }; });

  try {
    std::vector<std::string> args;
    for (int i = argc - 1; i > 0; --i) args.emplace_back(argv[i]);
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }
  if (!action) {
    err << app.help();
    return 1;
  }

  try {
    RunConfig config = g.config_path.empty() ? parse_config("{}") : load_config(g.config_path);
    Context ctx{std::move(config), g.seed, fs::path(g.out_dir), out};
    fs::create_directories(ctx.out);
    write_text(ctx.out / "config.json", config_json(ctx.config));
    action(ctx);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace rc::cli
