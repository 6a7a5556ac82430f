#include "rewardchain/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <future>
#include <set>
#include <sstream>
#include <stdexcept>

namespace rc {

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string Table::csv() const {
  std::ostringstream out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
    out << '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
  return out.str();
}

std::string Table::text() const {
  std::vector<std::size_t> width(header.size());
  for (std::size_t i = 0; i < header.size(); ++i) width[i] = header[i].size();
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size() && i < width.size(); ++i) width[i] = std::max(width[i], r[i].size());
  }
  std::ostringstream out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out << "  ";
      out << std::string(width[i] - cells[i].size(), ' ') << cells[i];
    }
    out << '\n';
  };
  line(header);
  std::size_t total = 0;
  for (std::size_t w : width) total += w;
  out << std::string(total + 2 * (width.size() - 1), '-') << '\n';
  for (const auto& r : rows) line(r);
  return out.str();
}

void EvalConfig::validate() const {
  sampler.validate();
  if (seeds < 2) throw std::invalid_argument("evaluation needs at least 2 seeds");
  rewards.validate();
}

namespace {

double row_distance(const Tensor& x, std::size_t a, std::size_t b) {
  double d2 = 0.0;
  for (std::size_t k = 0; k < x.cols(); ++k) {
    const double d = x.at(a, k) - x.at(b, k);
    d2 += d * d;
  }
  return std::sqrt(d2);
}

}  // namespace

double diversity_of(const Tensor& x, std::size_t prompts, int seeds) {
  double sum = 0.0;
  std::size_t n = 0;
  for (int s = 0; s < seeds; ++s) {
    const std::size_t base = static_cast<std::size_t>(s) * prompts;
    for (std::size_t i = 0; i < prompts; ++i) {
      for (std::size_t j = i + 1; j < prompts; ++j) {
        sum += row_distance(x, base + i, base + j);
        ++n;
      }
    }
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

double spread_of(const Tensor& x, std::size_t prompts, int seeds) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < prompts; ++i) {
    for (int a = 0; a < seeds; ++a) {
      for (int b = a + 1; b < seeds; ++b) {
        sum += row_distance(x, static_cast<std::size_t>(a) * prompts + i, static_cast<std::size_t>(b) * prompts + i);
        ++n;
      }
    }
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

EvalReport evaluate(const ModelBundle& bundle, std::span<const Prompt> prompts, const EvalConfig& config,
                    std::uint64_t seed) {
  config.validate();
  if (prompts.empty()) throw std::invalid_argument("evaluation prompt set is empty");
  if (prompts.size() < kMinEvalPrompts) {
    throw std::invalid_argument("evaluation needs at least " + std::to_string(kMinEvalPrompts) + " prompts, got " +
                                std::to_string(prompts.size()));
  }
  const std::size_t p = prompts.size(), d = bundle.world.data_dim();
  const auto seeds = static_cast<std::size_t>(config.seeds);
  std::vector<Prompt> rows;
  Tensor z_T({seeds * p, d});
  for (std::size_t s = 0; s < seeds; ++s) {
    const Tensor z = initial_noise(mix_seed(seed, s), 1, d);
    for (std::size_t i = 0; i < p; ++i) {
      rows.push_back(prompts[i]);
      for (std::size_t k = 0; k < d; ++k) z_T.at(s * p + i, k) = z[k];
    }
  }
  const Tensor x = sample_prompts(bundle, rows, z_T, config.sampler);
  EvalReport r;
  r.prompts = p;
  r.seeds = config.seeds;
  r.means = score_samples(x, rows, encode_prompts(bundle.text, rows), bundle.image, bundle.world);
  r.combined = combined_reward(r.means, config.rewards);
  r.diversity = diversity_of(x, p, config.seeds);
  r.spread = spread_of(x, p, config.seeds);
  for (double v : {r.means.image, r.means.align, r.means.clip, r.means.collapse, r.combined, r.diversity, r.spread}) {
    if (!std::isfinite(v)) throw std::runtime_error("evaluation produced a non-finite value");
  }
  return r;
}

namespace {

std::vector<std::string> report_cells(const EvalReport& r) {
  return {format_number(r.means.image), format_number(r.means.align), format_number(r.means.clip),
          format_number(r.means.collapse), format_number(r.combined), format_number(r.diversity),
          format_number(r.spread)};
}

const std::vector<std::string> kReportColumns = {"reward_image", "reward_align", "reward_clip", "reward_collapse",
                                                 "combined",     "diversity",    "spread"};

std::vector<std::string> with_columns(std::vector<std::string> head) {
  head.insert(head.end(), kReportColumns.begin(), kReportColumns.end());
  return head;
}

}  // namespace

Table report_table(std::span<const std::pair<std::string, EvalReport>> reports) {
  Table t;
  t.header = with_columns({"model", "prompts", "seeds"});
  for (const auto& [name, r] : reports) {
    std::vector<std::string> row = {name, std::to_string(r.prompts), std::to_string(r.seeds)};
    auto cells = report_cells(r);
    row.insert(row.end(), cells.begin(), cells.end());
    t.rows.push_back(std::move(row));
  }
  return t;
}

Table ablate_steps(const TrainConfig& train, const EvalConfig& eval, const ModelBundle& start,
                   const PromptSet& train_prompts, std::span<const Prompt> eval_prompts,
                   std::span<const int> train_k, std::span<const int> test_n, std::uint64_t seed) {
  if (train_k.empty() || test_n.empty()) throw std::invalid_argument("ablation lists must be non-empty");
  eval.validate();
  for (int k : train_k) {
    TrainConfig c = train;
    c.k_steps = k;
    c.validate();
  }
  for (int n : test_n) {
    if (n < 1 || n > eval.sampler.n_steps) {
      throw std::invalid_argument("test steps must lie in [1, " + std::to_string(eval.sampler.n_steps) + "]");
    }
  }
  const std::set<int> ks(train_k.begin(), train_k.end()), ns(test_n.begin(), test_n.end());

  // One training run per K; cells are independent, so each runs on its own task.
  std::vector<std::future<std::vector<std::vector<std::string>>>> jobs;
  for (int k : ks) {
    jobs.push_back(std::async(std::launch::async, [&, k] {
      TrainConfig c = train;
      c.k_steps = k;
      c.seed = mix_seed(seed, static_cast<std::uint64_t>(k));
      const ModelBundle tuned = run_training(c, start, train_prompts).bundle;
      std::vector<std::vector<std::string>> rows;
      for (int n : ns) {
        EvalConfig e = eval;
        e.sampler.finetuned_steps = n;
        const EvalReport r = evaluate(tuned, eval_prompts, e,
                                      mix_seed(seed, static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(n)));
        std::vector<std::string> row = {std::to_string(k), std::to_string(n)};
        auto cells = report_cells(r);
        row.insert(row.end(), cells.begin(), cells.end());
        rows.push_back(std::move(row));
      }
      return rows;
    }));
  }
  Table t;
  t.header = with_columns({"train_k", "test_n"});
  for (auto& job : jobs) {
    for (auto& row : job.get()) t.rows.push_back(std::move(row));
  }
  return t;
}

Table ablate_schedulers(const EvalConfig& eval, const ModelBundle& bundle, std::span<const Prompt> eval_prompts,
                        std::span<const SamplerKind> kinds, std::span<const int> steps, std::uint64_t seed) {
  if (kinds.empty() || steps.empty()) throw std::invalid_argument("ablation lists must be non-empty");
  eval.validate();
  std::vector<SamplerKind> unique;
  for (SamplerKind k : kinds) {
    if (std::find(unique.begin(), unique.end(), k) == unique.end()) unique.push_back(k);
  }
  std::sort(unique.begin(), unique.end());
  const std::set<int> ns(steps.begin(), steps.end());
  const double share = static_cast<double>(eval.sampler.finetuned_steps) / eval.sampler.n_steps;

  std::vector<std::future<std::vector<std::string>>> jobs;
  for (SamplerKind kind : unique) {
    for (int n : ns) {
      jobs.push_back(std::async(std::launch::async, [&, kind, n] {
        EvalConfig e = eval;
        e.sampler.sampler = kind;
        e.sampler.n_steps = n;
        e.sampler.finetuned_steps = static_cast<int>(std::lround(share * n));
        // The same noise for every cell, so rows differ only by the sampler.
        const EvalReport r = evaluate(bundle, eval_prompts, e, seed);
        std::vector<std::string> row = {to_string(kind), std::to_string(n), std::to_string(e.sampler.finetuned_steps)};
        auto cells = report_cells(r);
        row.insert(row.end(), cells.begin(), cells.end());
        return row;
      }));
    }
  }
  Table t;
  t.header = with_columns({"sampler", "steps", "finetuned_steps"});
  for (auto& job : jobs) t.rows.push_back(job.get());
  return t;
}

Table CollapseReport::table() const {
  Table t;
  t.header = with_columns({"run", "diversity_ratio"});
  auto add = [&](const std::string& name, const EvalReport& r) {
    std::vector<std::string> row = {name, format_number(baseline.diversity > 0 ? r.diversity / baseline.diversity : 0)};
    auto cells = report_cells(r);
    row.insert(row.end(), cells.begin(), cells.end());
    t.rows.push_back(std::move(row));
  };
  add("baseline", baseline);
  add("no_constraint", unconstrained);
  add("constraint", constrained);
  return t;
}

CollapseReport collapse_experiment(const TrainConfig& train, const CollapseConfig& collapse, const EvalConfig& eval,
                                   const ModelBundle& start, const PromptSet& train_prompts,
                                   std::span<const Prompt> eval_prompts, std::uint64_t seed) {
  if (!(collapse.probe_weight > 0.0)) throw std::invalid_argument("collapse probe weight must be positive");
  if (!(collapse.clip_weight > 0.0)) throw std::invalid_argument("constraint weight must be positive");
  TrainConfig off = train;
  off.regime = Regime::prompt_chain;
  off.seed = seed;
  off.rewards = RewardSpec{{{RewardKind::collapse_probe, collapse.probe_weight}}, collapse.frozen_copy};
  TrainConfig on = off;
  on.rewards.terms.push_back({RewardKind::clip_constraint, collapse.clip_weight});

  CollapseReport report;
  const std::uint64_t eval_seed = mix_seed(seed, 1);
  report.baseline = evaluate(start, eval_prompts, eval, eval_seed);
  auto off_job = std::async(std::launch::async, [&] { return run_training(off, start, train_prompts).bundle; });
  report.constrained_bundle = run_training(on, start, train_prompts).bundle;
  report.unconstrained_bundle = off_job.get();
  report.unconstrained = evaluate(report.unconstrained_bundle, eval_prompts, eval, eval_seed);
  report.constrained = evaluate(report.constrained_bundle, eval_prompts, eval, eval_seed);
  return report;
}

}  // namespace rc
