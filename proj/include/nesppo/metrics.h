#ifndef NESPPO_METRICS_H_
#define NESPPO_METRICS_H_

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

namespace nesppo {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// One line of a training log. Fields a trainer does not produce stay NaN.
struct MetricsRecord {
  std::uint64_t index = 0;      // update (PPO) or iteration (NES)
  std::uint64_t env_steps = 0;  // cumulative
  double mean_return = kNaN;    // episodes finished this update / population mean
  double return_std = kNaN;
  double max_return = kNaN;
  double eval_return = kNaN;  // greedy return of the unperturbed NES iterate
  double actor_loss = kNaN;
  double critic_loss = kNaN;
  double kl = kNaN;
  double clip_frac = kNaN;
  double sigma_mean = kNaN;
  double theta_norm = kNaN;
  double beta = kNaN;
  double wall_ms = 0.0;
};

using MetricsSink = std::function<void(const MetricsRecord&)>;

// Tab-separated key=value pairs in a fixed field order, no trailing tab.
std::string format_metrics(const MetricsRecord& record);
// Inverse of format_metrics. Throws FormatError on unknown or missing keys.
MetricsRecord parse_metrics(const std::string& line);

void write_metrics(std::ostream& out, const std::vector<MetricsRecord>& records);
std::vector<MetricsRecord> read_metrics_file(const std::string& path);

// Same line with the wall-clock field removed; used for determinism checks.
std::string mask_wall_clock(const std::string& line);

}  // namespace nesppo

#endif  // NESPPO_METRICS_H_
