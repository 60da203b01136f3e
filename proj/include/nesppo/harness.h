#ifndef NESPPO_HARNESS_H_
#define NESPPO_HARNESS_H_

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nesppo/metrics.h"
#include "nesppo/nes.h"
#include "nesppo/ppo.h"

namespace nesppo {

enum class Algorithm { kNes, kPpo, kNoisyPpo, kNesPpo };
std::string_view to_string(Algorithm a);
Algorithm parse_algorithm(std::string_view s);

// Exit statuses of every command.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;

struct RunConfig {
  Algorithm algorithm = Algorithm::kPpo;
  std::string env = "cartpole";
  std::uint64_t seed = 0;
  std::string out_dir = "run";
  PpoConfig ppo = default_ppo_config("cartpole");
  EsConfig nes;
  // Hidden layout of the NES network; empty means "same as ppo.hidden".
  std::vector<std::size_t> nes_hidden;
  std::optional<Activation> nes_activation;
  // Which NES iterate is written as the transfer source: best or final.
  bool nes_select_best = true;
  // nes+ppo: a checkpoint to transplant, or an NES phase run in-process.
  std::optional<std::string> transfer_source;
  bool nes_inline = false;

  // Throws ConfigError on the first violated rule.
  void validate() const;
};

// Ordered key=value settings, later assignments win.
using Settings = std::vector<std::pair<std::string, std::string>>;

// Reads key=value lines; '#' starts a comment, blank lines are skipped.
Settings parse_settings(std::string_view text);
Settings read_settings_file(const std::string& path);

// Applies settings on top of the defaults. `env` is resolved first so the
// per-environment PPO defaults sit under any explicit ppo.* value.
RunConfig resolve_config(const Settings& settings);
// Every effective value, one key=value line each, in a fixed order.
std::string render_config(const RunConfig& config);
// Recognised setting names.
const std::vector<std::string>& config_keys();

// Trains per the config and writes resolved.config, metrics and
// checkpoints under out_dir. Returns an exit status; errors go to `err`.
int run(const RunConfig& config, std::ostream& err);

// Scalar used to rank a finished run: mean of the last (up to) 10 records'
// returns, where a record's return is eval_return when present, otherwise
// mean_return. NaN when no record carries a return.
double final_performance(const std::vector<MetricsRecord>& records);

struct SweepRow {
  std::string value;
  std::vector<double> finals;  // one per seed, in seed order
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation, 0 for a single seed
};

struct SweepResult {
  int status = kExitOk;
  std::vector<SweepRow> rows;
};

// Runs values x seeds under base.out_dir/<parameter>=<value>/seed<seed>
// and writes summary.tsv in base.out_dir. `jobs` runs execute concurrently.
SweepResult sweep(const Settings& base, const std::string& parameter,
                  const std::vector<std::string>& values, const std::vector<std::uint64_t>& seeds,
                  std::ostream& err, std::size_t jobs = 1);
std::string format_sweep_summary(const std::string& parameter, const std::vector<SweepRow>& rows);

struct PlotSeries {
  std::string name;
  std::vector<MetricsRecord> records;
};

inline constexpr std::size_t kSmoothingWindow = 10;

// Trailing moving average over up to `window` points.
std::vector<double> trailing_mean(const std::vector<double>& values, std::size_t window);

// SVG line chart: env steps on x, smoothed return on y, one polyline per
// series (a marker when the series has a single point). Throws ConfigError
// when no series has a plottable record.
std::string render_plot(const std::vector<PlotSeries>& series);
// Loads each metrics file (named after its directory, or its stem when the
// file is not called metrics.tsv) and writes the chart to `output`.
void emit_plot(const std::vector<std::string>& metrics_paths, const std::string& output);

struct EvaluateOptions {
  double score_cap = 3000.0;               // rollerball only
  std::uint64_t step_budget = 1'000'000;   // rollerball only
};

struct EvaluateReport {
  std::string env;
  std::size_t episodes_run = 0;
  // Rollerball: cumulative score after each episode. Other envs: the
  // undiscounted return of each episode.
  std::vector<double> score_trajectory;
  std::uint64_t total_steps = 0;
  bool cap_reached = false;
  std::optional<std::uint64_t> steps_to_cap;
  double mean_return = 0.0;  // 0 when no episode ran
  double wall_ms = 0.0;      // informational
};

// Greedy replay of a checkpointed actor. Rollerball counts hits (+1) and
// falls (-10) into a cumulative score and stops at the cap or the budget.
EvaluateReport evaluate(const std::string& checkpoint_path, const std::string& env,
                        std::size_t episodes, std::uint64_t seed,
                        const EvaluateOptions& options = {});
std::string format_evaluate_report(const EvaluateReport& report);

}  // namespace nesppo

#endif  // NESPPO_HARNESS_H_
