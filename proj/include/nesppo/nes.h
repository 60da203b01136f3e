#ifndef NESPPO_NES_H_
#define NESPPO_NES_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "nesppo/metrics.h"
#include "nesppo/nnet.h"
#include "nesppo/numerics.h"

namespace nesppo {

struct EsConfig {
  double alpha = 0.01;  // learning rate
  double sigma = 0.1;   // perturbation standard deviation
  std::size_t population = 50;
  std::size_t iterations = 100;
  std::size_t episodes_per_eval = 1;
  std::size_t worker_count = 1;

  void validate() const;
};

// Per-member perturbation seeds for one iteration. Anyone holding
// (run_seed, iteration, n) rebuilds the same table.
struct SeedTable {
  std::uint64_t run_seed = 0;
  std::uint64_t iteration = 0;
  std::vector<std::uint64_t> seeds;

  static SeedTable build(std::uint64_t run_seed, std::uint64_t iteration,
                         std::size_t population);
  // epsilon_i: `dim` standard normals from seeds[member].
  std::vector<double> perturbation(std::size_t member, std::size_t dim) const;
};

struct FitnessReport {
  std::size_t member_index = 0;
  double fitness = 0.0;
};

// Fitness of a perturbed parameter vector. Called concurrently by the
// parallel step, so it must be safe to call from several threads.
using FitnessFn = std::function<double(std::span<const double> params, std::size_t member)>;

// theta + alpha / (n sigma) * sum_i F_i eps_i, summed in ascending i.
std::vector<double> es_update(std::span<const double> theta,
                              std::span<const std::vector<double>> perturbations,
                              std::span<const double> fitness, double alpha, double sigma);

// One sequential step with caller-supplied perturbations.
std::vector<double> es_step(std::span<const double> theta, const EsConfig& config,
                            const FitnessFn& fitness,
                            std::span<const std::vector<double>> perturbations);
// Perturbations drawn in member order from `rng`.
std::vector<double> es_step(std::span<const double> theta, const EsConfig& config,
                            const FitnessFn& fitness, RngStream& rng);
// Perturbations regenerated from a seed table.
std::vector<double> es_step(std::span<const double> theta, const EsConfig& config,
                            const FitnessFn& fitness, const SeedTable& table);

struct ParallelStepStats {
  std::size_t scalars_exchanged = 0;
  std::size_t indices_exchanged = 0;
  std::vector<double> fitness;  // F_i in member order
};

// Workers evaluate members i with i % worker_count == w, publish only
// (i, F_i), then each rebuilds every eps_j from the table and computes the
// update. Bit-identical to es_step(theta, config, fitness, table).
std::vector<double> es_step_parallel(std::span<const double> theta, const EsConfig& config,
                                     const FitnessFn& fitness, const SeedTable& table,
                                     ParallelStepStats* stats = nullptr);

struct EvalResult {
  double mean_return = 0.0;
  std::uint64_t env_steps = 0;
};

// Mean undiscounted return of the greedy policy over `episodes` episodes.
// Noisy specs are evaluated through their mu blocks.
EvalResult evaluate_policy(std::string_view env_name, const NetSpec& spec,
                           const ParamVector& params, std::uint64_t eval_seed,
                           std::size_t episodes);
double evaluate_return(std::string_view env_name, const NetSpec& spec,
                       const ParamVector& params, std::uint64_t eval_seed,
                       std::size_t episodes);

// Environment fitness for one iteration of a run.
std::vector<double> es_step_parallel(std::span<const double> theta, const EsConfig& config,
                                     std::string_view env_name, const NetSpec& spec,
                                     std::uint64_t run_seed, std::uint64_t iteration,
                                     ParallelStepStats* stats = nullptr);

// Evaluation seed shared by every member of one iteration.
std::uint64_t iteration_eval_seed(std::uint64_t run_seed, std::uint64_t iteration);

struct NesResult {
  NetSpec spec;
  ParamVector final_params;
  ParamVector best_params;
  double best_fitness = 0.0;
  std::vector<MetricsRecord> metrics;
};

NetSpec nes_actor_spec(std::string_view env_name, const std::vector<std::size_t>& hidden,
                       Activation activation = Activation::kTanh);

NesResult train_nes(std::string_view env_name, const NetSpec& spec, const EsConfig& config,
                    std::uint64_t run_seed, const ParamVector* initial = nullptr,
                    const MetricsSink& sink = {});

}  // namespace nesppo

#endif  // NESPPO_NES_H_
