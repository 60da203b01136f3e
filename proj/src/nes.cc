#include "nesppo/nes.h"

#include <algorithm>
#include <atomic>
#include <barrier>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <optional>
#include <thread>

#include "nesppo/envs.h"

namespace nesppo {

void EsConfig::validate() const {
  if (!(sigma > 0.0)) throw ConfigError("nes.sigma must be positive");
  if (!std::isfinite(alpha)) throw ConfigError("nes.alpha must be finite");
  if (population == 0) throw ConfigError("nes.population must be at least 1");
  if (worker_count == 0) throw ConfigError("nes.worker_count must be at least 1");
  if (episodes_per_eval == 0) throw ConfigError("nes.episodes_per_eval must be at least 1");
}

SeedTable SeedTable::build(std::uint64_t run_seed, std::uint64_t iteration,
                           std::size_t population) {
  SeedTable table;
  table.run_seed = run_seed;
  table.iteration = iteration;
  const RngStream per_iteration = RngStream(run_seed).derive(iteration);
  table.seeds.reserve(population);
  for (std::size_t i = 0; i < population; ++i) {
    table.seeds.push_back(per_iteration.derive(i).next_u64());
  }
  return table;
}

std::vector<double> SeedTable::perturbation(std::size_t member, std::size_t dim) const {
  RngStream rng(seeds.at(member));
  return rng.gaussian(dim);
}

std::vector<double> es_update(std::span<const double> theta,
                              std::span<const std::vector<double>> perturbations,
                              std::span<const double> fitness, double alpha, double sigma) {
  if (perturbations.size() != fitness.size() || perturbations.empty()) {
    throw ShapeError("es_update: " + std::to_string(perturbations.size()) +
                     " perturbations for " + std::to_string(fitness.size()) + " returns");
  }
  std::vector<double> sum(theta.size(), 0.0);
  for (std::size_t i = 0; i < perturbations.size(); ++i) {
    if (!std::isfinite(fitness[i])) {
      throw NumericError("non-finite fitness for member " + std::to_string(i));
    }
    const auto& eps = perturbations[i];
    if (eps.size() != theta.size()) throw ShapeError("perturbation length differs from theta");
    for (std::size_t k = 0; k < sum.size(); ++k) sum[k] += fitness[i] * eps[k];
  }
  const double scale = alpha / (static_cast<double>(perturbations.size()) * sigma);
  std::vector<double> next(theta.begin(), theta.end());
  for (std::size_t k = 0; k < next.size(); ++k) next[k] += scale * sum[k];
  return next;
}

namespace {

std::vector<double> perturbed(std::span<const double> theta, const std::vector<double>& eps,
                              double sigma) {
  std::vector<double> out(theta.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = theta[k] + sigma * eps[k];
  return out;
}

double checked_fitness(const FitnessFn& fitness, std::span<const double> params,
                       std::size_t member) {
  const double f = fitness(params, member);
  if (!std::isfinite(f)) {
    throw NumericError("non-finite fitness for member " + std::to_string(member));
  }
  return f;
}

}  // namespace

std::vector<double> es_step(std::span<const double> theta, const EsConfig& config,
                            const FitnessFn& fitness,
                            std::span<const std::vector<double>> perturbations) {
  config.validate();
  std::vector<double> returns(perturbations.size());
  for (std::size_t i = 0; i < perturbations.size(); ++i) {
    returns[i] = checked_fitness(fitness, perturbed(theta, perturbations[i], config.sigma), i);
  }
  return es_update(theta, perturbations, returns, config.alpha, config.sigma);
}

std::vector<double> es_step(std::span<const double> theta, const EsConfig& config,
                            const FitnessFn& fitness, RngStream& rng) {
  std::vector<std::vector<double>> eps;
  eps.reserve(config.population);
  for (std::size_t i = 0; i < config.population; ++i) eps.push_back(rng.gaussian(theta.size()));
  return es_step(theta, config, fitness, eps);
}

std::vector<double> es_step(std::span<const double> theta, const EsConfig& config,
                            const FitnessFn& fitness, const SeedTable& table) {
  std::vector<std::vector<double>> eps;
  eps.reserve(table.seeds.size());
  for (std::size_t i = 0; i < table.seeds.size(); ++i) {
    eps.push_back(table.perturbation(i, theta.size()));
  }
  return es_step(theta, config, fitness, eps);
}

std::vector<double> es_step_parallel(std::span<const double> theta, const EsConfig& config,
                                     const FitnessFn& fitness, const SeedTable& table,
                                     ParallelStepStats* stats) {
  config.validate();
  const std::size_t n = table.seeds.size();
  if (n == 0) throw ConfigError("seed table is empty");
  const std::size_t workers = std::min(config.worker_count, n);

  // The only shared state: the board of published (member, F) reports.
  std::mutex board_mutex;
  std::vector<FitnessReport> board;
  board.reserve(n);
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::optional<std::vector<double>>> results(workers);
  std::barrier sync(static_cast<std::ptrdiff_t>(workers));

  auto worker = [&](std::size_t w) {
    try {
      for (std::size_t i = w; i < n; i += workers) {
        const auto eps = table.perturbation(i, theta.size());
        const double f = checked_fitness(fitness, perturbed(theta, eps, config.sigma), i);
        std::lock_guard lock(board_mutex);
        board.push_back({i, f});
      }
    } catch (...) {
      errors[w] = std::current_exception();
    }
    sync.arrive_and_wait();

    // Every worker now sees all n scalars and rebuilds the update itself.
    std::vector<double> returns(n, 0.0);
    std::vector<bool> present(n, false);
    for (const auto& report : board) {
      returns[report.member_index] = report.fitness;
      present[report.member_index] = true;
    }
    if (std::find(present.begin(), present.end(), false) != present.end()) return;
    std::vector<std::vector<double>> eps;
    eps.reserve(n);
    for (std::size_t j = 0; j < n; ++j) eps.push_back(table.perturbation(j, theta.size()));
    results[w] = es_update(theta, eps, returns, config.alpha, config.sigma);
  };

  {
    std::vector<std::jthread> threads;
    threads.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) threads.emplace_back(worker, w);
  }

  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  if (board.size() != n) {
    throw NumericError("parallel ES step received " + std::to_string(board.size()) + " of " +
                       std::to_string(n) + " fitness reports");
  }
  for (std::size_t w = 1; w < workers; ++w) {
    if (results[w] != results[0]) {
      throw NumericError("workers disagree on the reconstructed update");
    }
  }
  if (stats != nullptr) {
    stats->scalars_exchanged = board.size();
    stats->indices_exchanged = board.size();
    stats->fitness.assign(n, 0.0);
    for (const auto& report : board) stats->fitness[report.member_index] = report.fitness;
  }
  return std::move(*results[0]);
}

EvalResult evaluate_policy(std::string_view env_name, const NetSpec& spec,
                           const ParamVector& params, std::uint64_t eval_seed,
                           std::size_t episodes) {
  auto env = make_env(env_name);
  if (spec.input_size() != env->obs_dim() || spec.output_size() != env->action_space().size) {
    throw ShapeError("network " + std::to_string(spec.input_size()) + "->" +
                     std::to_string(spec.output_size()) + " does not fit " + env->name());
  }
  std::optional<NoiseDraw> noise;
  if (spec.has_noisy_layers()) noise = zero_noise(spec);
  const ResolvedNet net(spec, params, noise ? &*noise : nullptr);
  const RngStream seeds(eval_seed);
  EvalResult result;
  if (episodes == 0) return result;
  double total = 0.0;
  for (std::size_t e = 0; e < episodes; ++e) {
    std::vector<double> obs = env->reset(seeds.derive(e).next_u64());
    bool done = false;
    while (!done) {
      const auto out = net.forward(obs);
      const Transition t = env->step(greedy_action(dist_from_outputs(spec, out.outputs, params)));
      total += t.reward;
      obs = t.obs;
      done = t.done;
      ++result.env_steps;
    }
  }
  result.mean_return = total / static_cast<double>(episodes);
  return result;
}

double evaluate_return(std::string_view env_name, const NetSpec& spec,
                       const ParamVector& params, std::uint64_t eval_seed,
                       std::size_t episodes) {
  return evaluate_policy(env_name, spec, params, eval_seed, episodes).mean_return;
}

std::uint64_t iteration_eval_seed(std::uint64_t run_seed, std::uint64_t iteration) {
  // Index space disjoint from the seed table's per-iteration streams.
  return RngStream(run_seed).derive(0xE7A1'0000'0000ULL + iteration).next_u64();
}

namespace {

FitnessFn env_fitness(std::string_view env_name, const NetSpec& spec,
                      const std::vector<Block>& layout, std::uint64_t eval_seed,
                      std::size_t episodes, std::atomic<std::uint64_t>* steps) {
  return [env = std::string(env_name), spec, layout, eval_seed, episodes, steps](
             std::span<const double> params, std::size_t) {
    const ParamVector pv(layout, std::vector<double>(params.begin(), params.end()));
    const EvalResult r = evaluate_policy(env, spec, pv, eval_seed, episodes);
    if (steps != nullptr) steps->fetch_add(r.env_steps);
    return r.mean_return;
  };
}

}  // namespace

std::vector<double> es_step_parallel(std::span<const double> theta, const EsConfig& config,
                                     std::string_view env_name, const NetSpec& spec,
                                     std::uint64_t run_seed, std::uint64_t iteration,
                                     ParallelStepStats* stats) {
  const auto layout = make_layout(spec);
  const auto fitness = env_fitness(env_name, spec, layout, iteration_eval_seed(run_seed, iteration),
                                   config.episodes_per_eval, nullptr);
  return es_step_parallel(theta, config, fitness,
                          SeedTable::build(run_seed, iteration, config.population), stats);
}

NetSpec nes_actor_spec(std::string_view env_name, const std::vector<std::size_t>& hidden,
                       Activation activation) {
  const auto env = make_env(env_name);
  const ActionSpace space = env->action_space();
  return NetSpec::mlp(env->obs_dim(), hidden, space.size,
                      space.discrete ? HeadKind::kCategorical : HeadKind::kGaussian,
                      LayerKind::kPlain, activation);
}

NesResult train_nes(std::string_view env_name, const NetSpec& spec, const EsConfig& config,
                    std::uint64_t run_seed, const ParamVector* initial,
                    const MetricsSink& sink) {
  config.validate();
  spec.validate();
  if (spec.has_noisy_layers()) throw ConfigError("NES trains plain networks only");
  NesResult result;
  result.spec = spec;
  if (initial != nullptr) {
    if (initial->layout() != make_layout(spec)) {
      throw ConfigError("initial NES parameters do not match the network layout");
    }
    result.final_params = *initial;
  } else {
    RngStream init_rng = RngStream(run_seed).derive(0);
    result.final_params = init_params(spec, init_rng);
  }
  ParamVector& theta = result.final_params;
  result.best_params = theta;
  result.best_fitness = -std::numeric_limits<double>::infinity();

  std::atomic<std::uint64_t> steps{0};
  const auto start = std::chrono::steady_clock::now();
  auto consider = [&](std::uint64_t iteration) {
    const EvalResult center = evaluate_policy(env_name, spec, theta,
                                              iteration_eval_seed(run_seed, iteration),
                                              config.episodes_per_eval);
    steps += center.env_steps;
    if (center.mean_return > result.best_fitness) {
      result.best_fitness = center.mean_return;
      result.best_params = theta;
    }
    return center.mean_return;
  };

  for (std::uint64_t t = 0; t < config.iterations; ++t) {
    const double center = consider(t);
    const auto fitness = env_fitness(env_name, spec, theta.layout(), iteration_eval_seed(run_seed, t),
                                     config.episodes_per_eval, &steps);
    ParallelStepStats stats;
    auto next = es_step_parallel(theta.data(), config, fitness,
                                 SeedTable::build(run_seed, t, config.population), &stats);
    std::copy(next.begin(), next.end(), theta.data().begin());

    const auto& f = stats.fitness;
    const double mean = std::accumulate(f.begin(), f.end(), 0.0) / static_cast<double>(f.size());
    double var = 0.0;
    for (double x : f) var += (x - mean) * (x - mean);
    double sq = 0.0;
    for (double v : theta.data()) sq += v * v;

    MetricsRecord record;
    record.index = t;
    record.env_steps = steps.load();
    record.mean_return = mean;
    record.return_std = std::sqrt(var / static_cast<double>(f.size()));
    record.max_return = *std::max_element(f.begin(), f.end());
    record.eval_return = center;
    record.theta_norm = std::sqrt(sq);
    record.wall_ms = std::chrono::duration<double, std::milli>(
                         std::chrono::steady_clock::now() - start)
                         .count();
    if (sink) sink(record);
    result.metrics.push_back(record);
  }
  consider(config.iterations);
  return result;
}

}  // namespace nesppo
