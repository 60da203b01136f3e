#include "nesppo/harness.h"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "nesppo/envs.h"
#include "nesppo/errors.h"
#include "nesppo/transfer.h"

namespace nesppo {

namespace fs = std::filesystem;

std::string_view to_string(Algorithm a) {
  switch (a) {
    case Algorithm::kNes: return "nes";
    case Algorithm::kPpo: return "ppo";
    case Algorithm::kNoisyPpo: return "noisy-ppo";
    case Algorithm::kNesPpo: return "nes+ppo";
  }
  return "?";
}

Algorithm parse_algorithm(std::string_view s) {
  if (s == "nes") return Algorithm::kNes;
  if (s == "ppo") return Algorithm::kPpo;
  if (s == "noisy-ppo") return Algorithm::kNoisyPpo;
  if (s == "nes+ppo") return Algorithm::kNesPpo;
  throw ConfigError("unknown algorithm '" + std::string(s) +
                    "' (expected nes, ppo, noisy-ppo or nes+ppo)");
}

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::vector<std::size_t> to_sizes(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_u64(key, trim(item)));
  return out;
}

std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i > 0) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

template <typename F>
auto as_config_error(const std::string& key, F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

struct KeyHandler {
  std::string name;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

const std::vector<KeyHandler>& handlers() {
  static const std::vector<KeyHandler> table = [] {
    std::vector<KeyHandler> h;
    auto add = [&](std::string name, auto set, auto get) {
      h.push_back({std::move(name), set, get});
    };
    add("algorithm",
        [](RunConfig& c, const std::string& v) { c.algorithm = parse_algorithm(v); },
        [](const RunConfig& c) { return std::string(to_string(c.algorithm)); });
    add("env", [](RunConfig& c, const std::string& v) { c.env = v; },
        [](const RunConfig& c) { return c.env; });
    add("seed", [](RunConfig& c, const std::string& v) { c.seed = to_u64("seed", v); },
        [](const RunConfig& c) { return std::to_string(c.seed); });
    add("out", [](RunConfig& c, const std::string& v) { c.out_dir = v; },
        [](const RunConfig& c) { return c.out_dir; });
    add("transfer_source",
        [](RunConfig& c, const std::string& v) {
          c.transfer_source = v.empty() ? std::nullopt : std::optional<std::string>(v);
        },
        [](const RunConfig& c) { return c.transfer_source.value_or(""); });

    add("ppo.clip_alpha",
        [](RunConfig& c, const std::string& v) { c.ppo.clip_alpha = to_double("ppo.clip_alpha", v); },
        [](const RunConfig& c) { return fmt_double(c.ppo.clip_alpha); });
    add("ppo.gamma",
        [](RunConfig& c, const std::string& v) { c.ppo.gamma = to_double("ppo.gamma", v); },
        [](const RunConfig& c) { return fmt_double(c.ppo.gamma); });
    add("ppo.beta",
        [](RunConfig& c, const std::string& v) { c.ppo.beta = to_double("ppo.beta", v); },
        [](const RunConfig& c) { return fmt_double(c.ppo.beta); });
    add("ppo.kl_target",
        [](RunConfig& c, const std::string& v) { c.ppo.kl_target = to_double("ppo.kl_target", v); },
        [](const RunConfig& c) { return fmt_double(c.ppo.kl_target); });
    add("ppo.actor_lr",
        [](RunConfig& c, const std::string& v) { c.ppo.actor_lr = to_double("ppo.actor_lr", v); },
        [](const RunConfig& c) { return fmt_double(c.ppo.actor_lr); });
    add("ppo.critic_lr",
        [](RunConfig& c, const std::string& v) { c.ppo.critic_lr = to_double("ppo.critic_lr", v); },
        [](const RunConfig& c) { return fmt_double(c.ppo.critic_lr); });
    add("ppo.rollout_len",
        [](RunConfig& c, const std::string& v) { c.ppo.rollout_len = to_u64("ppo.rollout_len", v); },
        [](const RunConfig& c) { return std::to_string(c.ppo.rollout_len); });
    add("ppo.epochs_per_update",
        [](RunConfig& c, const std::string& v) {
          c.ppo.epochs_per_update = to_u64("ppo.epochs_per_update", v);
        },
        [](const RunConfig& c) { return std::to_string(c.ppo.epochs_per_update); });
    add("ppo.minibatch_size",
        [](RunConfig& c, const std::string& v) {
          c.ppo.minibatch_size = to_u64("ppo.minibatch_size", v);
        },
        [](const RunConfig& c) { return std::to_string(c.ppo.minibatch_size); });
    add("ppo.objective",
        [](RunConfig& c, const std::string& v) {
          c.ppo.objective = as_config_error("ppo.objective", [&] { return parse_objective(v); });
        },
        [](const RunConfig& c) { return std::string(to_string(c.ppo.objective)); });
    add("ppo.noise_mode",
        [](RunConfig& c, const std::string& v) {
          c.ppo.noise_mode = as_config_error("ppo.noise_mode", [&] { return parse_noise_mode(v); });
        },
        [](const RunConfig& c) { return std::string(to_string(c.ppo.noise_mode)); });
    add("ppo.total_env_steps",
        [](RunConfig& c, const std::string& v) {
          c.ppo.total_env_steps = to_u64("ppo.total_env_steps", v);
        },
        [](const RunConfig& c) { return std::to_string(c.ppo.total_env_steps); });
    add("ppo.adv_normalize",
        [](RunConfig& c, const std::string& v) {
          c.ppo.adv_normalize = to_bool("ppo.adv_normalize", v);
        },
        [](const RunConfig& c) { return std::string(c.ppo.adv_normalize ? "true" : "false"); });
    add("ppo.hidden",
        [](RunConfig& c, const std::string& v) { c.ppo.hidden = to_sizes("ppo.hidden", v); },
        [](const RunConfig& c) { return join_sizes(c.ppo.hidden); });
    add("ppo.activation",
        [](RunConfig& c, const std::string& v) {
          c.ppo.activation = as_config_error("ppo.activation", [&] { return parse_activation(v); });
        },
        [](const RunConfig& c) { return std::string(to_string(c.ppo.activation)); });
    add("ppo.max_grad_norm",
        [](RunConfig& c, const std::string& v) {
          c.ppo.max_grad_norm = to_double("ppo.max_grad_norm", v);
        },
        [](const RunConfig& c) { return fmt_double(c.ppo.max_grad_norm); });
    add("ppo.zero_sigma",
        [](RunConfig& c, const std::string& v) { c.ppo.zero_sigma = to_bool("ppo.zero_sigma", v); },
        [](const RunConfig& c) { return std::string(c.ppo.zero_sigma ? "true" : "false"); });

    add("nes.alpha",
        [](RunConfig& c, const std::string& v) { c.nes.alpha = to_double("nes.alpha", v); },
        [](const RunConfig& c) { return fmt_double(c.nes.alpha); });
    add("nes.sigma",
        [](RunConfig& c, const std::string& v) { c.nes.sigma = to_double("nes.sigma", v); },
        [](const RunConfig& c) { return fmt_double(c.nes.sigma); });
    add("nes.population",
        [](RunConfig& c, const std::string& v) { c.nes.population = to_u64("nes.population", v); },
        [](const RunConfig& c) { return std::to_string(c.nes.population); });
    add("nes.iterations",
        [](RunConfig& c, const std::string& v) { c.nes.iterations = to_u64("nes.iterations", v); },
        [](const RunConfig& c) { return std::to_string(c.nes.iterations); });
    add("nes.episodes_per_eval",
        [](RunConfig& c, const std::string& v) {
          c.nes.episodes_per_eval = to_u64("nes.episodes_per_eval", v);
        },
        [](const RunConfig& c) { return std::to_string(c.nes.episodes_per_eval); });
    add("nes.worker_count",
        [](RunConfig& c, const std::string& v) {
          c.nes.worker_count = to_u64("nes.worker_count", v);
        },
        [](const RunConfig& c) { return std::to_string(c.nes.worker_count); });
    add("nes.hidden",
        [](RunConfig& c, const std::string& v) { c.nes_hidden = to_sizes("nes.hidden", v); },
        [](const RunConfig& c) {
          return join_sizes(c.nes_hidden.empty() ? c.ppo.hidden : c.nes_hidden);
        });
    add("nes.activation",
        [](RunConfig& c, const std::string& v) {
          c.nes_activation = as_config_error("nes.activation", [&] { return parse_activation(v); });
        },
        [](const RunConfig& c) {
          return std::string(to_string(c.nes_activation.value_or(c.ppo.activation)));
        });
    add("nes.select",
        [](RunConfig& c, const std::string& v) {
          if (v != "best" && v != "final") {
            throw ConfigError("nes.select: expected best or final, got '" + v + "'");
          }
          c.nes_select_best = v == "best";
        },
        [](const RunConfig& c) { return std::string(c.nes_select_best ? "best" : "final"); });
    add("nes.inline",
        [](RunConfig& c, const std::string& v) { c.nes_inline = to_bool("nes.inline", v); },
        [](const RunConfig& c) { return std::string(c.nes_inline ? "true" : "false"); });
    return h;
  }();
  return table;
}

const KeyHandler* find_handler(std::string_view key) {
  for (const auto& h : handlers()) {
    if (h.name == key) return &h;
  }
  return nullptr;
}

NetSpec nes_spec_for(const RunConfig& config) {
  return nes_actor_spec(config.env, config.nes_hidden.empty() ? config.ppo.hidden : config.nes_hidden,
                        config.nes_activation.value_or(config.ppo.activation));
}

class MetricsFile {
 public:
  explicit MetricsFile(const fs::path& path) : out_(path, std::ios::trunc) {
    if (!out_) throw std::runtime_error("cannot open " + path.string() + " for writing");
  }
  MetricsSink sink() {
    return [this](const MetricsRecord& r) {
      out_ << format_metrics(r) << '\n';
      out_.flush();
    };
  }

 private:
  std::ofstream out_;
};

struct NesPhase {
  Checkpoint selected;
};

NesPhase run_nes_phase(const RunConfig& config, const fs::path& dir,
                       const std::string& metrics_name) {
  const NetSpec spec = nes_spec_for(config);
  MetricsFile metrics(dir / metrics_name);
  const NesResult result = train_nes(config.env, spec, config.nes, config.seed, nullptr,
                                     metrics.sink());
  const Provenance prov{"nes", config.seed, config.nes.iterations};
  save_checkpoint((dir / "nes_best.ckpt").string(), spec, result.best_params, prov);
  save_checkpoint((dir / "nes_final.ckpt").string(), spec, result.final_params, prov);
  return {Checkpoint{spec, config.nes_select_best ? result.best_params : result.final_params,
                     prov}};
}

void save_ppo_outputs(const RunConfig& config, const fs::path& dir, const PpoResult& result) {
  const std::uint64_t steps = result.metrics.empty() ? 0 : result.metrics.back().env_steps;
  const std::string algo = config.ppo.noise_mode == NoiseMode::kOff ? "ppo" : "noisy-ppo";
  save_checkpoint((dir / "actor.ckpt").string(), result.nets.actor_spec, result.nets.actor,
                  {algo, config.seed, steps});
  save_checkpoint((dir / "critic.ckpt").string(), result.nets.critic_spec, result.nets.critic,
                  {algo, config.seed, steps});
}

}  // namespace

void RunConfig::validate() const {
  const auto& names = env_names();
  if (std::find(names.begin(), names.end(), env) == names.end()) {
    throw ConfigError("unknown env '" + env + "'");
  }
  ppo.validate();
  nes.validate();
  if (algorithm == Algorithm::kPpo && ppo.noise_mode != NoiseMode::kOff) {
    throw ConfigError("algorithm=ppo needs ppo.noise_mode=off (use noisy-ppo)");
  }
  if (algorithm == Algorithm::kNoisyPpo && ppo.noise_mode == NoiseMode::kOff) {
    throw ConfigError("algorithm=noisy-ppo needs ppo.noise_mode independent or factorized");
  }
  if (algorithm == Algorithm::kNesPpo) {
    if (!transfer_source && !nes_inline) {
      throw ConfigError("algorithm=nes+ppo needs transfer_source or nes.inline=true");
    }
    if (transfer_source && nes_inline) {
      throw ConfigError("algorithm=nes+ppo takes transfer_source or nes.inline=true, not both");
    }
    if (nes_inline) {
      // Catch an untransferable pair before the NES phase spends its budget.
      const auto e = make_env(env);
      const NetSpec target = make_policy_nets(*e, ppo, seed).actor_spec;
      if (auto mismatch = transfer_mismatch(nes_spec_for(*this), target)) {
        throw ConfigError("nes network cannot seed the ppo actor: " + *mismatch);
      }
    }
  }
  if (out_dir.empty()) throw ConfigError("out must not be empty");
}

Settings parse_settings(std::string_view text) {
  Settings out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    const std::string trimmed = trim(line);
    if (trimmed.empty()) continue;
    const auto eq = trimmed.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key=value, got '" +
                        trimmed + "'");
    }
    out.emplace_back(trim(std::string_view(trimmed).substr(0, eq)),
                     trim(std::string_view(trimmed).substr(eq + 1)));
  }
  return out;
}

Settings read_settings_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_settings(ss.str());
}

RunConfig resolve_config(const Settings& settings) {
  RunConfig config;
  for (const auto& [key, value] : settings) {
    if (key == "env") config.env = value;
  }
  config.ppo = default_ppo_config(config.env);
  bool noise_mode_set = false;
  for (const auto& [key, value] : settings) {
    const KeyHandler* h = find_handler(key);
    if (h == nullptr) throw ConfigError("unknown setting '" + key + "'");
    h->set(config, value);
    noise_mode_set |= key == "ppo.noise_mode";
  }
  if (config.algorithm == Algorithm::kNoisyPpo && !noise_mode_set) {
    config.ppo.noise_mode = NoiseMode::kFactorized;
  }
  return config;
}

std::string render_config(const RunConfig& config) {
  std::string out;
  for (const auto& h : handlers()) out += h.name + "=" + h.get(config) + "\n";
  return out;
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& h : handlers()) k.push_back(h.name);
    return k;
  }();
  return keys;
}

int run(const RunConfig& config, std::ostream& err) {
  try {
    config.validate();
    const fs::path dir(config.out_dir);
    fs::create_directories(dir);
    {
      std::ofstream resolved(dir / "resolved.config", std::ios::trunc);
      resolved << render_config(config);
    }
    switch (config.algorithm) {
      case Algorithm::kNes: {
        const NesPhase phase = run_nes_phase(config, dir, "metrics.tsv");
        save_checkpoint((dir / "actor.ckpt").string(), phase.selected.spec,
                        phase.selected.params, phase.selected.provenance);
        break;
      }
      case Algorithm::kPpo:
      case Algorithm::kNoisyPpo: {
        MetricsFile metrics(dir / "metrics.tsv");
        const PpoResult result = train_ppo(config.env, config.ppo, config.seed, nullptr,
                                           metrics.sink());
        save_ppo_outputs(config, dir, result);
        break;
      }
      case Algorithm::kNesPpo: {
        Checkpoint source;
        if (config.transfer_source) {
          source = load_checkpoint(*config.transfer_source);
        } else {
          source = run_nes_phase(config, dir, "nes_metrics.tsv").selected;
        }
        const auto env = make_env(config.env);
        const NetSpec target = make_policy_nets(*env, config.ppo, config.seed).actor_spec;
        const ParamVector actor = transplant(source, target);
        MetricsFile metrics(dir / "metrics.tsv");
        const PpoResult result = train_ppo(config.env, config.ppo, config.seed, &actor,
                                           metrics.sink());
        save_ppo_outputs(config, dir, result);
        break;
      }
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const TransferError& e) {
    err << "transfer error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

double final_performance(const std::vector<MetricsRecord>& records) {
  std::vector<double> returns;
  for (const auto& r : records) {
    const double v = std::isfinite(r.eval_return) ? r.eval_return : r.mean_return;
    if (std::isfinite(v)) returns.push_back(v);
  }
  if (returns.empty()) return kNaN;
  const std::size_t n = std::min(kSmoothingWindow, returns.size());
  double sum = 0.0;
  for (std::size_t i = returns.size() - n; i < returns.size(); ++i) sum += returns[i];
  return sum / static_cast<double>(n);
}

std::string format_sweep_summary(const std::string& parameter, const std::vector<SweepRow>& rows) {
  std::string out = parameter + "\truns\tmean\tstd\n";
  char buf[128];
  for (const auto& row : rows) {
    std::snprintf(buf, sizeof(buf), "\t%zu\t%.6f\t%.6f\n", row.finals.size(), row.mean,
                  row.stddev);
    out += row.value + buf;
  }
  return out;
}

SweepResult sweep(const Settings& base, const std::string& parameter,
                  const std::vector<std::string>& values, const std::vector<std::uint64_t>& seeds,
                  std::ostream& err, std::size_t jobs) {
  SweepResult result;
  struct Job {
    std::size_t row;
    RunConfig config;
    int status = kExitOk;
    std::string log;
  };
  std::vector<Job> plan;
  RunConfig base_config;
  try {
    if (values.empty()) throw ConfigError("sweep needs at least one value");
    if (seeds.empty()) throw ConfigError("sweep needs at least one seed");
    if (find_handler(parameter) == nullptr) {
      throw ConfigError("unknown sweep parameter '" + parameter + "'");
    }
    if (parameter == "out" || parameter == "seed") {
      throw ConfigError("sweep parameter cannot be '" + parameter + "'");
    }
    base_config = resolve_config(base);
    for (std::size_t v = 0; v < values.size(); ++v) {
      for (std::uint64_t seed : seeds) {
        Settings s = base;
        s.emplace_back(parameter, values[v]);
        s.emplace_back("seed", std::to_string(seed));
        s.emplace_back("out", (fs::path(base_config.out_dir) / (parameter + "=" + values[v]) /
                               ("seed" + std::to_string(seed)))
                                  .string());
        RunConfig c = resolve_config(s);
        c.validate();
        plan.push_back({v, std::move(c), kExitOk, {}});
      }
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    result.status = kExitConfig;
    return result;
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < plan.size(); i = next++) {
      std::ostringstream log;
      plan[i].status = run(plan[i].config, log);
      plan[i].log = log.str();
    }
  };
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 1; w < std::max<std::size_t>(jobs, 1); ++w) pool.emplace_back(worker);
    worker();
  }

  result.rows.resize(values.size());
  for (std::size_t v = 0; v < values.size(); ++v) result.rows[v].value = values[v];
  for (const auto& job : plan) {
    err << job.log;
    if (job.status != kExitOk) {
      if (result.status == kExitOk) result.status = job.status;
      result.rows[job.row].finals.push_back(kNaN);
      continue;
    }
    const auto records = read_metrics_file((fs::path(job.config.out_dir) / "metrics.tsv").string());
    result.rows[job.row].finals.push_back(final_performance(records));
  }
  for (auto& row : result.rows) {
    const double n = static_cast<double>(row.finals.size());
    double sum = 0.0;
    for (double f : row.finals) sum += f;
    row.mean = sum / n;
    double ss = 0.0;
    for (double f : row.finals) ss += (f - row.mean) * (f - row.mean);
    row.stddev = row.finals.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  }
  fs::create_directories(base_config.out_dir);
  std::ofstream summary(fs::path(base_config.out_dir) / "summary.tsv", std::ios::trunc);
  summary << format_sweep_summary(parameter, result.rows);
  return result;
}

// ---- plotting ----

std::vector<double> trailing_mean(const std::vector<double>& values, std::size_t window) {
  std::vector<double> out(values.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    sum += values[i];
    if (i >= window) sum -= values[i - window];
    out[i] = sum / static_cast<double>(std::min(i + 1, window));
  }
  return out;
}

namespace {

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), pattern, v);
  return buf;
}

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

}  // namespace

std::string render_plot(const std::vector<PlotSeries>& series) {
  struct Curve {
    std::string name;
    std::vector<double> x, y;
  };
  std::vector<Curve> curves;
  for (const auto& s : series) {
    Curve c{s.name, {}, {}};
    std::vector<double> raw;
    for (const auto& r : s.records) {
      const double v = std::isfinite(r.eval_return) ? r.eval_return : r.mean_return;
      if (!std::isfinite(v)) continue;
      c.x.push_back(static_cast<double>(r.env_steps));
      raw.push_back(v);
    }
    if (raw.empty()) continue;
    c.y = trailing_mean(raw, kSmoothingWindow);
    curves.push_back(std::move(c));
  }
  if (curves.empty()) throw ConfigError("no plottable records in the given metrics");

  double x0 = curves[0].x[0], x1 = x0, y0 = curves[0].y[0], y1 = y0;
  for (const auto& c : curves) {
    for (double v : c.x) x0 = std::min(x0, v), x1 = std::max(x1, v);
    for (double v : c.y) y0 = std::min(y0, v), y1 = std::max(y1, v);
  }
  if (x1 == x0) x0 -= 1.0, x1 += 1.0;
  if (y1 == y0) y0 -= 1.0, y1 += 1.0;

  constexpr double kW = 900, kH = 500, kLeft = 80, kRight = 260, kTop = 40, kBottom = 60;
  const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return kTop + ph - (y - y0) / (y1 - y0) * ph; };

  std::string svg;
  svg += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"900\" height=\"500\" "
         "viewBox=\"0 0 900 500\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg += "<rect x=\"0\" y=\"0\" width=\"900\" height=\"500\" fill=\"white\"/>\n";
  svg += "<rect x=\"80\" y=\"40\" width=\"560\" height=\"400\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double fx = x0 + (x1 - x0) * i / 4.0;
    const double fy = y0 + (y1 - y0) * i / 4.0;
    svg += "<text x=\"" + fmt("%.2f", px(fx)) + "\" y=\"458\" text-anchor=\"middle\">" +
           fmt("%.6g", fx) + "</text>\n";
    svg += "<text x=\"74\" y=\"" + fmt("%.2f", py(fy) + 4) + "\" text-anchor=\"end\">" +
           fmt("%.6g", fy) + "</text>\n";
  }
  svg += "<text x=\"360\" y=\"490\" text-anchor=\"middle\">environment steps</text>\n";
  svg += "<text x=\"20\" y=\"240\" text-anchor=\"middle\" transform=\"rotate(-90 20 240)\">"
         "return</text>\n";
  svg += "<text x=\"650\" y=\"40\">smoothing: trailing mean of " +
         std::to_string(kSmoothingWindow) + " records</text>\n";

  for (std::size_t i = 0; i < curves.size(); ++i) {
    const auto& c = curves[i];
    const std::string color = kPalette[i % std::size(kPalette)];
    if (c.x.size() == 1) {
      svg += "<circle cx=\"" + fmt("%.2f", px(c.x[0])) + "\" cy=\"" + fmt("%.2f", py(c.y[0])) +
             "\" r=\"4\" fill=\"" + color + "\"/>\n";
    } else {
      svg += "<polyline fill=\"none\" stroke=\"" + color + "\" stroke-width=\"1.5\" points=\"";
      for (std::size_t k = 0; k < c.x.size(); ++k) {
        if (k > 0) svg += ' ';
        svg += fmt("%.2f", px(c.x[k])) + "," + fmt("%.2f", py(c.y[k]));
      }
      svg += "\"/>\n";
    }
    const std::string ly = fmt("%.2f", 60.0 + 18.0 * static_cast<double>(i));
    svg += "<line x1=\"650\" y1=\"" + ly + "\" x2=\"670\" y2=\"" + ly + "\" stroke=\"" + color +
           "\" stroke-width=\"2\"/>\n";
    svg += "<text x=\"676\" y=\"" + fmt("%.2f", 64.0 + 18.0 * static_cast<double>(i)) + "\">" +
           xml_escape(c.name) + " (MA" + std::to_string(kSmoothingWindow) + ")</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

void emit_plot(const std::vector<std::string>& metrics_paths, const std::string& output) {
  if (metrics_paths.empty()) throw ConfigError("plot needs at least one metrics file");
  std::vector<PlotSeries> series;
  for (const auto& p : metrics_paths) {
    const fs::path path(p);
    std::string name = path.stem().string();
    if (path.filename() == "metrics.tsv") {
      const auto parent = fs::absolute(path).parent_path().filename().string();
      if (!parent.empty()) name = parent;
    }
    series.push_back({name, read_metrics_file(p)});
  }
  const std::string svg = render_plot(series);
  std::ofstream out(output, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + output + " for writing");
  out << svg;
}

// ---- evaluation ----

EvaluateReport evaluate(const std::string& checkpoint_path, const std::string& env_name,
                        std::size_t episodes, std::uint64_t seed,
                        const EvaluateOptions& options) {
  const Checkpoint ckpt = load_checkpoint(checkpoint_path);
  auto env = make_env(env_name);
  const ActionSpace space = env->action_space();
  const HeadKind want = space.discrete ? HeadKind::kCategorical : HeadKind::kGaussian;
  if (ckpt.spec.input_size() != env->obs_dim() || ckpt.spec.output_size() != space.size ||
      ckpt.spec.head != want) {
    throw ConfigError("checkpoint network " + spec_to_string(ckpt.spec) +
                      " does not fit env " + env_name);
  }
  const NoiseDraw none = zero_noise(ckpt.spec);
  const ResolvedNet net(ckpt.spec, ckpt.params,
                        ckpt.spec.has_noisy_layers() ? &none : nullptr);

  EvaluateReport report;
  report.env = env_name;
  const bool scored = env_name == "rollerball";
  const auto start = std::chrono::steady_clock::now();
  const RngStream seeds(seed);
  double score = 0.0;
  double return_sum = 0.0;
  bool stop = false;
  for (std::size_t e = 0; e < episodes && !stop; ++e) {
    std::vector<double> obs = env->reset(seeds.derive(e).next_u64());
    ++report.episodes_run;
    double ret = 0.0;
    while (true) {
      const auto out = net.forward(obs);
      const Transition t = env->step(greedy_action(dist_from_outputs(ckpt.spec, out.outputs,
                                                                      ckpt.params)));
      ++report.total_steps;
      ret += t.reward;
      if (scored) {
        if (t.reward == RollerBallEnv::kHitReward) score += 1.0;
        if (t.reward == RollerBallEnv::kFallReward) score -= 10.0;
        if (score >= options.score_cap) {
          report.cap_reached = true;
          report.steps_to_cap = report.total_steps;
          stop = true;
        } else if (report.total_steps >= options.step_budget) {
          stop = true;
        }
      }
      if (t.done || stop) break;
      obs = t.obs;
    }
    return_sum += ret;
    report.score_trajectory.push_back(scored ? score : ret);
  }
  if (report.episodes_run > 0) {
    report.mean_return = return_sum / static_cast<double>(report.episodes_run);
  }
  report.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return report;
}

std::string format_evaluate_report(const EvaluateReport& report) {
  std::string out;
  out += "env=" + report.env + "\n";
  out += "episodes=" + std::to_string(report.episodes_run) + "\n";
  out += "total_steps=" + std::to_string(report.total_steps) + "\n";
  out += std::string("cap_reached=") + (report.cap_reached ? "true" : "false") + "\n";
  out += "steps_to_cap=" +
         (report.steps_to_cap ? std::to_string(*report.steps_to_cap) : std::string("none")) + "\n";
  out += "mean_return=" + fmt_double(report.mean_return) + "\n";
  out += "score_trajectory=";
  for (std::size_t i = 0; i < report.score_trajectory.size(); ++i) {
    if (i > 0) out += ',';
    out += fmt_double(report.score_trajectory[i]);
  }
  out += "\n";
  out += "wall_ms=" + fmt("%.3f", report.wall_ms) + "\n";
  return out;
}

}  // namespace nesppo
