// nesppo command line: train, sweep, transfer, evaluate, plot.
#include <cstdint>
#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "nesppo/errors.h"
#include "nesppo/harness.h"
#include "nesppo/transfer.h"

namespace {

using namespace nesppo;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string env;
  std::string algo;
  std::vector<std::string> set;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "key=value config file");
  cmd->add_option("--seed", c.seed, "run seed");
  cmd->add_option("--out", c.out, "output directory");
  cmd->add_option("--env", c.env, "environment name");
  cmd->add_option("--algo", c.algo, "nes | ppo | noisy-ppo | nes+ppo");
  cmd->add_option("--set", c.set, "extra key=value override (repeatable)");
}

// File values first, then flags, so flags win.
Settings gather(const Common& c) {
  Settings s;
  if (!c.config.empty()) s = read_settings_file(c.config);
  for (const auto& kv : c.set) {
    const auto more = parse_settings(kv);
    s.insert(s.end(), more.begin(), more.end());
  }
  if (!c.env.empty()) s.emplace_back("env", c.env);
  if (!c.algo.empty()) s.emplace_back("algorithm", c.algo);
  if (c.seed) s.emplace_back("seed", std::to_string(*c.seed));
  if (!c.out.empty()) s.emplace_back("out", c.out);
  return s;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  for (char ch : s) {
    if (ch == ',') {
      if (!item.empty()) out.push_back(item);
      item.clear();
    } else {
      item += ch;
    }
  }
  if (!item.empty()) out.push_back(item);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"NES, PPO and noisy-network PPO toolkit"};
  app.require_subcommand(1);

  Common train_opts;
  auto* train = app.add_subcommand("train", "train one run");
  add_common(train, train_opts);

  Common sweep_opts;
  std::string sweep_param, sweep_values, sweep_seeds = "0";
  std::size_t sweep_jobs = 1;
  auto* sweep_cmd = app.add_subcommand("sweep", "values x seeds cross product");
  add_common(sweep_cmd, sweep_opts);
  sweep_cmd->add_option("--param", sweep_param, "config key to vary")->required();
  sweep_cmd->add_option("--values", sweep_values, "comma separated values")->required();
  sweep_cmd->add_option("--seeds", sweep_seeds, "comma separated seeds");
  sweep_cmd->add_option("--jobs", sweep_jobs, "concurrent runs");

  std::string from, spec_text, transfer_out;
  auto* transfer_cmd = app.add_subcommand("transfer", "transplant a checkpoint into a spec");
  transfer_cmd->add_option("--from", from, "source checkpoint")->required();
  transfer_cmd->add_option("--spec", spec_text, "target network description")->required();
  transfer_cmd->add_option("--out", transfer_out, "output checkpoint")->required();

  std::string eval_ckpt, eval_env, eval_report;
  std::size_t eval_episodes = 10;
  std::uint64_t eval_seed = 0;
  EvaluateOptions eval_options;
  auto* eval_cmd = app.add_subcommand("evaluate", "greedy replay of a checkpoint");
  eval_cmd->add_option("--checkpoint", eval_ckpt, "actor checkpoint")->required();
  eval_cmd->add_option("--env", eval_env, "environment name")->required();
  eval_cmd->add_option("--episodes", eval_episodes, "episode count");
  eval_cmd->add_option("--seed", eval_seed, "episode seed");
  eval_cmd->add_option("--score-cap", eval_options.score_cap, "rollerball score cap");
  eval_cmd->add_option("--step-budget", eval_options.step_budget, "rollerball step budget");
  eval_cmd->add_option("--out", eval_report, "write the report here as well");

  std::vector<std::string> plot_inputs;
  std::string plot_out;
  auto* plot_cmd = app.add_subcommand("plot", "SVG learning curves");
  plot_cmd->add_option("metrics", plot_inputs, "metrics files");
  plot_cmd->add_option("--out", plot_out, "output SVG")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*train) {
      const RunConfig config = resolve_config(gather(train_opts));
      return run(config, std::cerr);
    }
    if (*sweep_cmd) {
      std::vector<std::uint64_t> seeds;
      for (const auto& s : split_list(sweep_seeds)) seeds.push_back(std::stoull(s));
      const SweepResult result = sweep(gather(sweep_opts), sweep_param,
                                       split_list(sweep_values), seeds, std::cerr, sweep_jobs);
      if (result.status == kExitConfig) return result.status;
      std::cout << format_sweep_summary(sweep_param, result.rows);
      return result.status;
    }
    if (*transfer_cmd) {
      const Checkpoint source = load_checkpoint(from);
      const NetSpec target = spec_from_string(spec_text);
      const ParamVector params = transplant(source, target);
      save_checkpoint(transfer_out, target, params, source.provenance);
      return kExitOk;
    }
    if (*eval_cmd) {
      const EvaluateReport report = evaluate(eval_ckpt, eval_env, eval_episodes, eval_seed,
                                             eval_options);
      const std::string text = format_evaluate_report(report);
      std::cout << text;
      if (!eval_report.empty()) std::ofstream(eval_report, std::ios::trunc) << text;
      return kExitOk;
    }
    if (*plot_cmd) {
      emit_plot(plot_inputs, plot_out);
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const TransferError& e) {
    std::cerr << "transfer error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const FormatError& e) {
    std::cerr << "checkpoint error: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitRuntime;
}
