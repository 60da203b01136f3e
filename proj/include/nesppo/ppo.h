#ifndef NESPPO_PPO_H_
#define NESPPO_PPO_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nesppo/envs.h"
#include "nesppo/metrics.h"
#include "nesppo/nnet.h"
#include "nesppo/numerics.h"

namespace nesppo {

enum class Objective { kClip, kKlPenalty };
enum class NoiseMode { kOff, kIndependent, kFactorized };

std::string_view to_string(Objective o);
std::string_view to_string(NoiseMode m);
Objective parse_objective(std::string_view s);
NoiseMode parse_noise_mode(std::string_view s);
LayerKind layer_kind_for(NoiseMode m);

struct PpoConfig {
  double clip_alpha = 0.2;
  double gamma = 0.99;
  double beta = 1.0;  // initial KL coefficient for the penalty objective
  double kl_target = 0.01;
  double actor_lr = 1e-4;
  double critic_lr = 2e-4;
  std::size_t rollout_len = 2048;
  std::size_t epochs_per_update = 10;
  std::size_t minibatch_size = 64;
  Objective objective = Objective::kClip;
  NoiseMode noise_mode = NoiseMode::kOff;
  std::size_t total_env_steps = 200000;
  bool adv_normalize = true;
  std::vector<std::size_t> hidden = {128, 128};
  Activation activation = Activation::kTanh;
  // Rescale each minibatch gradient to at most this global norm; 0 disables.
  double max_grad_norm = 0.0;
  // Zero every sigma block at start and after each update. Degenerates the
  // noisy variant to plain PPO; used by equivalence tests.
  bool zero_sigma = false;

  void validate() const;
};

// Defaults with the per-environment discount (0.9 for pendulum).
PpoConfig default_ppo_config(std::string_view env_name);

struct Trajectory {
  std::vector<std::vector<double>> obs;
  std::vector<Action> actions;
  std::vector<double> rewards;
  std::vector<bool> dones;
  std::vector<double> behavior_logp;
  std::vector<double> values;
  // Distribution that sampled each action, replayed by the KL penalty.
  std::vector<PolicyDist> behavior_dists;
  std::optional<NoiseDraw> noise_used;
  // V(s_T) of the state after the last step; 0 when that step ended an episode.
  double bootstrap_value = 0.0;
  // Returns of the episodes that finished inside this rollout.
  std::vector<double> episode_returns;

  std::size_t size() const { return rewards.size(); }
};

struct AdvantageBatch {
  std::vector<double> returns_to_go;
  std::vector<double> advantage;
};

// Environment plus the episode bookkeeping that persists across rollouts.
class RolloutCursor {
 public:
  RolloutCursor(Environment& env, std::uint64_t episode_seed);

  Environment& env() { return *env_; }
  // Current observation, resetting the environment when needed.
  const std::vector<double>& observation();
  void record(const Transition& t);
  std::vector<double> take_finished_returns();

 private:
  Environment* env_;
  RngStream episode_seeds_;
  std::vector<double> obs_;
  bool needs_reset_ = true;
  double running_return_ = 0.0;
  std::vector<double> finished_;
};

struct PolicyNets {
  NetSpec actor_spec;
  ParamVector actor;
  NetSpec critic_spec;
  ParamVector critic;
};

// Runs `steps` environment steps with the stochastic policy. `noise` is the
// draw held fixed for the whole rollout (required iff the actor is noisy).
Trajectory collect_rollout(RolloutCursor& cursor, const PolicyNets& nets,
                           const NoiseDraw* noise, std::size_t steps,
                           RngStream& action_rng);

// Discounted return-to-go inside each episode segment, bootstrapped with
// gamma * V(s_T) when the rollout stops mid-episode.
AdvantageBatch returns_to_go(const Trajectory& traj, double gamma);
void normalize_advantages(AdvantageBatch& batch);

struct ObjectiveResult {
  double loss = 0.0;  // negated objective (minimized)
  ParamVector grads;
  double clip_frac = 0.0;
  double mean_kl = 0.0;
};

// Clipped surrogate over the samples in `indices`.
ObjectiveResult clip_objective(const AdvantageBatch& batch, const Trajectory& traj,
                               std::span<const std::size_t> indices,
                               const NetSpec& spec, const ParamVector& actor,
                               double clip_alpha);

// r * A - beta * KL(pi_old || pi_new), averaged and negated.
ObjectiveResult kl_penalty_objective(const AdvantageBatch& batch, const Trajectory& traj,
                                     std::span<const std::size_t> indices,
                                     const NetSpec& spec, const ParamVector& actor,
                                     double beta);

double adapt_beta(double measured_kl, double kl_target, double beta);

// Mean squared error between returns-to-go and critic values.
ObjectiveResult critic_loss(const AdvantageBatch& batch, const Trajectory& traj,
                            std::span<const std::size_t> indices,
                            const NetSpec& spec, const ParamVector& critic);

// Mean KL(behavior || current) over the whole trajectory.
double measure_kl(const Trajectory& traj, const NetSpec& spec, const ParamVector& actor);

struct AdamState {
  std::uint64_t step = 0;
  std::vector<double> m;
  std::vector<double> v;
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

  explicit AdamState(std::size_t size = 0) : m(size, 0.0), v(size, 0.0) {}
};

void adam_step(ParamVector& params, const ParamVector& grads, AdamState& state, double lr);

struct PpoResult {
  PolicyNets nets;
  std::vector<MetricsRecord> metrics;
  double final_beta = 0.0;
};

PolicyNets make_policy_nets(const Environment& env, const PpoConfig& config,
                            std::uint64_t seed);

using RolloutObserver = std::function<void(const Trajectory&)>;

// Full training loop. `initial_actor`, when given, replaces the random actor
// initialization (parameter transfer); its layout must match the actor spec.
// `on_rollout` sees every collected trajectory before the update uses it.
PpoResult train_ppo(std::string_view env_name, const PpoConfig& config, std::uint64_t seed,
                    const ParamVector* initial_actor = nullptr,
                    const MetricsSink& sink = {}, const RolloutObserver& on_rollout = {});

}  // namespace nesppo

#endif  // NESPPO_PPO_H_
