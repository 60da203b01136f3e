#include "nesppo/metrics.h"

#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "nesppo/errors.h"

namespace nesppo {

namespace {

struct Field {
  const char* key;
  double MetricsRecord::*real;
  std::uint64_t MetricsRecord::*count;
};

const std::array<Field, 14>& fields() {
  static const std::array<Field, 14> table = {{
      {"index", nullptr, &MetricsRecord::index},
      {"env_steps", nullptr, &MetricsRecord::env_steps},
      {"mean_return", &MetricsRecord::mean_return, nullptr},
      {"return_std", &MetricsRecord::return_std, nullptr},
      {"max_return", &MetricsRecord::max_return, nullptr},
      {"eval_return", &MetricsRecord::eval_return, nullptr},
      {"actor_loss", &MetricsRecord::actor_loss, nullptr},
      {"critic_loss", &MetricsRecord::critic_loss, nullptr},
      {"kl", &MetricsRecord::kl, nullptr},
      {"clip_frac", &MetricsRecord::clip_frac, nullptr},
      {"sigma_mean", &MetricsRecord::sigma_mean, nullptr},
      {"theta_norm", &MetricsRecord::theta_norm, nullptr},
      {"beta", &MetricsRecord::beta, nullptr},
      {"wall_ms", &MetricsRecord::wall_ms, nullptr},
  }};
  return table;
}

std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string format_metrics(const MetricsRecord& record) {
  std::string line;
  for (const auto& f : fields()) {
    if (!line.empty()) line += '\t';
    line += f.key;
    line += '=';
    if (f.count != nullptr) {
      line += std::to_string(record.*(f.count));
    } else if (f.real == &MetricsRecord::wall_ms) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.3f", record.wall_ms);
      line += buf;
    } else {
      line += format_real(record.*(f.real));
    }
  }
  return line;
}

MetricsRecord parse_metrics(const std::string& line) {
  MetricsRecord record;
  std::size_t seen = 0;
  std::size_t start = 0;
  while (start <= line.size()) {
    std::size_t end = line.find('\t', start);
    if (end == std::string::npos) end = line.size();
    const std::string item = line.substr(start, end - start);
    const std::size_t eq = item.find('=');
    if (eq == std::string::npos) throw FormatError("metrics item without '=': " + item);
    const std::string key = item.substr(0, eq);
    const std::string value = item.substr(eq + 1);
    bool known = false;
    for (const auto& f : fields()) {
      if (key != f.key) continue;
      known = true;
      if (f.count != nullptr) {
        std::uint64_t v = 0;
        auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
        if (ec != std::errc() || ptr != value.data() + value.size()) {
          throw FormatError("bad integer for " + key + ": " + value);
        }
        record.*(f.count) = v;
      } else {
        char* parse_end = nullptr;
        const double v = std::strtod(value.c_str(), &parse_end);
        if (parse_end != value.c_str() + value.size() || value.empty()) {
          throw FormatError("bad number for " + key + ": " + value);
        }
        record.*(f.real) = v;
      }
    }
    if (!known) throw FormatError("unknown metrics key '" + key + "'");
    ++seen;
    start = end + 1;
  }
  if (seen != fields().size()) {
    throw FormatError("metrics line has " + std::to_string(seen) + " fields, expected " +
                      std::to_string(fields().size()));
  }
  return record;
}

void write_metrics(std::ostream& out, const std::vector<MetricsRecord>& records) {
  for (const auto& r : records) out << format_metrics(r) << '\n';
}

std::vector<MetricsRecord> read_metrics_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open metrics file " + path);
  std::vector<MetricsRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    records.push_back(parse_metrics(line));
  }
  return records;
}

std::string mask_wall_clock(const std::string& line) {
  const std::size_t pos = line.find("\twall_ms=");
  return pos == std::string::npos ? line : line.substr(0, pos);
}

}  // namespace nesppo
