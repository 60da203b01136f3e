#include "nesppo/ppo.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace nesppo {

std::string_view to_string(Objective o) {
  return o == Objective::kClip ? "clip" : "kl-penalty";
}

std::string_view to_string(NoiseMode m) {
  switch (m) {
    case NoiseMode::kOff:
      return "off";
    case NoiseMode::kIndependent:
      return "independent";
    case NoiseMode::kFactorized:
      return "factorized";
  }
  return "?";
}

Objective parse_objective(std::string_view s) {
  if (s == "clip") return Objective::kClip;
  if (s == "kl-penalty") return Objective::kKlPenalty;
  throw ConfigError("unknown objective '" + std::string(s) + "'");
}

NoiseMode parse_noise_mode(std::string_view s) {
  if (s == "off") return NoiseMode::kOff;
  if (s == "independent") return NoiseMode::kIndependent;
  if (s == "factorized") return NoiseMode::kFactorized;
  throw ConfigError("unknown noise mode '" + std::string(s) + "'");
}

LayerKind layer_kind_for(NoiseMode m) {
  switch (m) {
    case NoiseMode::kOff:
      return LayerKind::kPlain;
    case NoiseMode::kIndependent:
      return LayerKind::kNoisyIndependent;
    case NoiseMode::kFactorized:
      return LayerKind::kNoisyFactorized;
  }
  return LayerKind::kPlain;
}

void PpoConfig::validate() const {
  if (!(clip_alpha > 0.0 && clip_alpha < 1.0)) {
    throw ConfigError("ppo.clip_alpha must lie in (0, 1), got " + std::to_string(clip_alpha));
  }
  if (!(gamma > 0.0 && gamma <= 1.0)) {
    throw ConfigError("ppo.gamma must lie in (0, 1], got " + std::to_string(gamma));
  }
  if (!(beta > 0.0)) throw ConfigError("ppo.beta must be positive");
  if (!(kl_target > 0.0)) throw ConfigError("ppo.kl_target must be positive");
  if (!(actor_lr > 0.0) || !(critic_lr > 0.0)) {
    throw ConfigError("ppo learning rates must be positive");
  }
  if (rollout_len == 0) throw ConfigError("ppo.rollout_len must be at least 1");
  if (epochs_per_update == 0) throw ConfigError("ppo.epochs_per_update must be at least 1");
  if (minibatch_size == 0) throw ConfigError("ppo.minibatch_size must be at least 1");
  if (hidden.empty()) throw ConfigError("ppo.hidden needs at least one layer");
  if (max_grad_norm < 0.0) throw ConfigError("ppo.max_grad_norm must be >= 0");
}

PpoConfig default_ppo_config(std::string_view env_name) {
  PpoConfig config;
  if (env_name == "pendulum") config.gamma = 0.9;
  return config;
}

// ---- rollouts ----

RolloutCursor::RolloutCursor(Environment& env, std::uint64_t episode_seed)
    : env_(&env), episode_seeds_(episode_seed) {}

const std::vector<double>& RolloutCursor::observation() {
  if (needs_reset_) {
    obs_ = env_->reset(episode_seeds_.next_u64());
    needs_reset_ = false;
    running_return_ = 0.0;
  }
  return obs_;
}

void RolloutCursor::record(const Transition& t) {
  obs_ = t.obs;
  running_return_ += t.reward;
  if (t.done) {
    finished_.push_back(running_return_);
    needs_reset_ = true;
  }
}

std::vector<double> RolloutCursor::take_finished_returns() {
  std::vector<double> out;
  out.swap(finished_);
  return out;
}

Trajectory collect_rollout(RolloutCursor& cursor, const PolicyNets& nets,
                           const NoiseDraw* noise, std::size_t steps,
                           RngStream& action_rng) {
  Environment& env = cursor.env();
  if (nets.actor_spec.input_size() != env.obs_dim() ||
      nets.critic_spec.input_size() != env.obs_dim()) {
    throw ShapeError("network input width does not match " + env.name() +
                     " observations (" + std::to_string(env.obs_dim()) + ")");
  }
  if (nets.actor_spec.output_size() != env.action_space().size) {
    throw ShapeError("actor output width does not match the " + env.name() +
                     " action space");
  }
  const ResolvedNet actor(nets.actor_spec, nets.actor, noise);
  const ResolvedNet critic(nets.critic_spec, nets.critic, nullptr);

  Trajectory traj;
  if (noise != nullptr && nets.actor_spec.has_noisy_layers()) traj.noise_used = *noise;
  traj.obs.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    const std::vector<double> obs = cursor.observation();
    const auto out = actor.forward(obs);
    PolicyDist dist = dist_from_outputs(nets.actor_spec, out.outputs, nets.actor);
    Action action = sample_action(dist, action_rng);
    const double logp = log_prob(dist, action);
    const double value = critic.forward(obs).outputs[0];

    const Transition tr = env.step(action);
    cursor.record(tr);

    traj.obs.push_back(obs);
    traj.actions.push_back(std::move(action));
    traj.rewards.push_back(tr.reward);
    traj.dones.push_back(tr.done);
    traj.behavior_logp.push_back(logp);
    traj.values.push_back(value);
    traj.behavior_dists.push_back(std::move(dist));
  }
  if (!traj.dones.empty() && !traj.dones.back()) {
    traj.bootstrap_value = critic.forward(cursor.observation()).outputs[0];
  }
  traj.episode_returns = cursor.take_finished_returns();
  return traj;
}

AdvantageBatch returns_to_go(const Trajectory& traj, double gamma) {
  const std::size_t n = traj.size();
  if (n == 0) throw ShapeError("returns_to_go on an empty trajectory");
  if (traj.dones.size() != n || traj.values.size() != n) {
    throw ShapeError("trajectory arrays have inconsistent lengths");
  }
  AdvantageBatch batch;
  batch.returns_to_go.resize(n);
  batch.advantage.resize(n);
  double next = traj.dones[n - 1] ? 0.0 : traj.bootstrap_value;
  for (std::size_t i = n; i-- > 0;) {
    if (traj.dones[i]) next = 0.0;
    next = traj.rewards[i] + gamma * next;
    batch.returns_to_go[i] = next;
    batch.advantage[i] = next - traj.values[i];
  }
  return batch;
}

void normalize_advantages(AdvantageBatch& batch) {
  const auto& a = batch.advantage;
  if (a.size() < 2) return;
  const double mean = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(a.size());
  double var = 0.0;
  for (double x : a) var += (x - mean) * (x - mean);
  const double stddev = std::sqrt(var / static_cast<double>(a.size()));
  for (double& x : batch.advantage) x = (x - mean) / (stddev + 1e-8);
}

// ---- objectives ----

namespace {

void check_aligned(const AdvantageBatch& batch, const Trajectory& traj,
                   std::span<const std::size_t> indices) {
  const std::size_t n = traj.size();
  if (batch.advantage.size() != n || batch.returns_to_go.size() != n ||
      traj.obs.size() != n || traj.actions.size() != n || traj.behavior_logp.size() != n ||
      traj.values.size() != n) {
    throw ShapeError("advantage batch and trajectory lengths differ");
  }
  if (indices.empty()) throw ShapeError("empty minibatch");
  for (std::size_t i : indices) {
    if (i >= n) throw ShapeError("minibatch index " + std::to_string(i) + " out of range");
  }
}

const NoiseDraw* noise_of(const Trajectory& traj) {
  return traj.noise_used ? &*traj.noise_used : nullptr;
}

// Chains a distribution gradient (scaled by `scale`) into the actor params.
void accumulate_dist_grad(const ResolvedNet& net, const ForwardCache& cache,
                          const DistGrad& g, double scale, ParamVector& grads) {
  std::vector<double> d_out(g.d_outputs.size());
  for (std::size_t k = 0; k < d_out.size(); ++k) d_out[k] = scale * g.d_outputs[k];
  net.backward(cache, d_out, grads);
  if (!g.d_log_std.empty()) {
    auto block = grads.block("log_std");
    for (std::size_t d = 0; d < block.size(); ++d) block[d] += scale * g.d_log_std[d];
  }
}

}  // namespace

ObjectiveResult clip_objective(const AdvantageBatch& batch, const Trajectory& traj,
                               std::span<const std::size_t> indices,
                               const NetSpec& spec, const ParamVector& actor,
                               double clip_alpha) {
  check_aligned(batch, traj, indices);
  const ResolvedNet net(spec, actor, noise_of(traj));
  ObjectiveResult result;
  result.grads = actor.zeros_like();
  const double inv_n = 1.0 / static_cast<double>(indices.size());
  double total = 0.0;
  std::size_t clipped = 0;
  for (std::size_t i : indices) {
    const auto out = net.forward(traj.obs[i]);
    const PolicyDist dist = dist_from_outputs(spec, out.outputs, actor);
    const double logp = log_prob(dist, traj.actions[i]);
    const double ratio = std::exp(logp - traj.behavior_logp[i]);
    const double adv = batch.advantage[i];
    const double unclipped = ratio * adv;
    const double clipped_term = std::clamp(ratio, 1.0 - clip_alpha, 1.0 + clip_alpha) * adv;
    total += std::min(unclipped, clipped_term);
    if (std::abs(ratio - 1.0) > clip_alpha) ++clipped;
    result.mean_kl += traj.behavior_logp[i] - logp;
    // Gradient flows only through the unclipped branch when it is the min.
    if (unclipped <= clipped_term) {
      accumulate_dist_grad(net, out.cache, log_prob_grad(dist, traj.actions[i]),
                           -inv_n * unclipped, result.grads);
    }
  }
  result.loss = -total * inv_n;
  result.clip_frac = static_cast<double>(clipped) * inv_n;
  result.mean_kl *= inv_n;
  return result;
}

ObjectiveResult kl_penalty_objective(const AdvantageBatch& batch, const Trajectory& traj,
                                     std::span<const std::size_t> indices,
                                     const NetSpec& spec, const ParamVector& actor,
                                     double beta) {
  check_aligned(batch, traj, indices);
  if (traj.behavior_dists.size() != traj.size()) {
    throw ShapeError("trajectory lacks behavior distributions for the KL penalty");
  }
  const ResolvedNet net(spec, actor, noise_of(traj));
  ObjectiveResult result;
  result.grads = actor.zeros_like();
  const double inv_n = 1.0 / static_cast<double>(indices.size());
  double total = 0.0;
  for (std::size_t i : indices) {
    const auto out = net.forward(traj.obs[i]);
    const PolicyDist dist = dist_from_outputs(spec, out.outputs, actor);
    const PolicyDist& old = traj.behavior_dists[i];
    const double ratio = std::exp(log_prob(dist, traj.actions[i]) - traj.behavior_logp[i]);
    const double adv = batch.advantage[i];
    const double divergence = kl(old, dist);
    total += ratio * adv - beta * divergence;
    result.mean_kl += divergence;

    DistGrad g = log_prob_grad(dist, traj.actions[i]);
    const DistGrad gk = kl_grad_q(old, dist);
    for (std::size_t k = 0; k < g.d_outputs.size(); ++k) {
      g.d_outputs[k] = ratio * adv * g.d_outputs[k] - beta * gk.d_outputs[k];
    }
    for (std::size_t d = 0; d < g.d_log_std.size(); ++d) {
      g.d_log_std[d] = ratio * adv * g.d_log_std[d] - beta * gk.d_log_std[d];
    }
    accumulate_dist_grad(net, out.cache, g, -inv_n, result.grads);
  }
  result.loss = -total * inv_n;
  result.mean_kl *= inv_n;
  return result;
}

double adapt_beta(double measured_kl, double kl_target, double beta) {
  if (measured_kl > 1.5 * kl_target) return beta * 2.0;
  if (measured_kl < kl_target / 1.5) return beta / 2.0;
  return beta;
}

ObjectiveResult critic_loss(const AdvantageBatch& batch, const Trajectory& traj,
                            std::span<const std::size_t> indices,
                            const NetSpec& spec, const ParamVector& critic) {
  check_aligned(batch, traj, indices);
  const ResolvedNet net(spec, critic, nullptr);
  ObjectiveResult result;
  result.grads = critic.zeros_like();
  const double inv_n = 1.0 / static_cast<double>(indices.size());
  double total = 0.0;
  for (std::size_t i : indices) {
    const auto out = net.forward(traj.obs[i]);
    const double err = batch.returns_to_go[i] - out.outputs[0];
    total += err * err;
    const double d_value = -2.0 * err * inv_n;
    net.backward(out.cache, std::span<const double>(&d_value, 1), result.grads);
  }
  result.loss = total * inv_n;
  return result;
}

double measure_kl(const Trajectory& traj, const NetSpec& spec, const ParamVector& actor) {
  if (traj.size() == 0) return 0.0;
  const ResolvedNet net(spec, actor, noise_of(traj));
  double total = 0.0;
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const auto out = net.forward(traj.obs[i]);
    total += kl(traj.behavior_dists[i], dist_from_outputs(spec, out.outputs, actor));
  }
  return total / static_cast<double>(traj.size());
}

// ---- optimizer ----

void adam_step(ParamVector& params, const ParamVector& grads, AdamState& state, double lr) {
  if (grads.size() != params.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw ShapeError("adam_step: params " + std::to_string(params.size()) + ", grads " +
                     std::to_string(grads.size()) + ", moments " +
                     std::to_string(state.m.size()));
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(AdamState::kBeta1, t);
  const double correction2 = 1.0 - std::pow(AdamState::kBeta2, t);
  auto p = params.data();
  const auto g = grads.data();
  for (std::size_t i = 0; i < p.size(); ++i) {
    state.m[i] = AdamState::kBeta1 * state.m[i] + (1.0 - AdamState::kBeta1) * g[i];
    state.v[i] = AdamState::kBeta2 * state.v[i] + (1.0 - AdamState::kBeta2) * g[i] * g[i];
    const double m_hat = state.m[i] / correction1;
    const double v_hat = state.v[i] / correction2;
    p[i] -= lr * m_hat / (std::sqrt(v_hat) + AdamState::kEps);
  }
}

// ---- training loop ----

namespace {

void clip_grad_norm(ParamVector& grads, double max_norm) {
  if (max_norm <= 0.0) return;
  double sq = 0.0;
  for (double g : grads.data()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm <= max_norm) return;
  const double scale = max_norm / norm;
  for (double& g : grads.data()) g *= scale;
}

// Stream indices derived from the run seed.
enum StreamId : std::uint64_t {
  kActorInit = 0,
  kActions = 1,
  kNoise = 2,
  kEpisodes = 3,
  kShuffle = 4,
  kCriticInit = 5,
};

}  // namespace

PolicyNets make_policy_nets(const Environment& env, const PpoConfig& config,
                            std::uint64_t seed) {
  const ActionSpace space = env.action_space();
  const HeadKind head = space.discrete ? HeadKind::kCategorical : HeadKind::kGaussian;
  const RngStream root(seed);
  PolicyNets nets;
  nets.actor_spec = NetSpec::mlp(env.obs_dim(), config.hidden, space.size, head,
                                 layer_kind_for(config.noise_mode), config.activation);
  nets.critic_spec = NetSpec::mlp(env.obs_dim(), config.hidden, 1, HeadKind::kValue,
                                  LayerKind::kPlain, config.activation);
  RngStream actor_rng = root.derive(kActorInit);
  RngStream critic_rng = root.derive(kCriticInit);
  nets.actor = init_params(nets.actor_spec, actor_rng);
  nets.critic = init_params(nets.critic_spec, critic_rng);
  return nets;
}

PpoResult train_ppo(std::string_view env_name, const PpoConfig& config, std::uint64_t seed,
                    const ParamVector* initial_actor, const MetricsSink& sink,
                    const RolloutObserver& on_rollout) {
  config.validate();
  auto env = make_env(env_name);
  PpoResult result;
  result.nets = make_policy_nets(*env, config, seed);
  PolicyNets& nets = result.nets;
  if (initial_actor != nullptr) {
    if (initial_actor->layout() != nets.actor.layout()) {
      throw ConfigError("initial actor parameters do not match the actor layout");
    }
    nets.actor = *initial_actor;
  }
  if (config.zero_sigma) zero_sigma_blocks(nets.actor);

  const RngStream root(seed);
  RngStream action_rng = root.derive(kActions);
  RngStream noise_rng = root.derive(kNoise);
  RngStream shuffle_rng = root.derive(kShuffle);
  RolloutCursor cursor(*env, root.derive(kEpisodes).next_u64());

  AdamState actor_adam(nets.actor.size());
  AdamState critic_adam(nets.critic.size());
  double beta = config.beta;
  const auto start = std::chrono::steady_clock::now();

  std::uint64_t steps = 0;
  std::uint64_t update = 0;
  while (steps < config.total_env_steps) {
    const std::size_t rollout = static_cast<std::size_t>(
        std::min<std::uint64_t>(config.rollout_len, config.total_env_steps - steps));
    std::optional<NoiseDraw> noise;
    if (nets.actor_spec.has_noisy_layers()) noise = sample_noise(nets.actor_spec, noise_rng);
    const Trajectory traj =
        collect_rollout(cursor, nets, noise ? &*noise : nullptr, rollout, action_rng);
    steps += rollout;
    if (on_rollout) on_rollout(traj);

    AdvantageBatch batch = returns_to_go(traj, config.gamma);
    if (config.adv_normalize) normalize_advantages(batch);

    std::vector<std::size_t> order(traj.size());
    double actor_loss = 0.0, critic_loss_sum = 0.0, clip_frac = 0.0;
    std::size_t minibatches = 0;
    for (std::size_t epoch = 0; epoch < config.epochs_per_update; ++epoch) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      shuffle_indices(order, shuffle_rng);
      for (std::size_t begin = 0; begin < order.size(); begin += config.minibatch_size) {
        const std::size_t end = std::min(order.size(), begin + config.minibatch_size);
        const std::span<const std::size_t> mb(order.data() + begin, end - begin);

        ObjectiveResult actor_step =
            config.objective == Objective::kClip
                ? clip_objective(batch, traj, mb, nets.actor_spec, nets.actor,
                                 config.clip_alpha)
                : kl_penalty_objective(batch, traj, mb, nets.actor_spec, nets.actor, beta);
        clip_grad_norm(actor_step.grads, config.max_grad_norm);
        adam_step(nets.actor, actor_step.grads, actor_adam, config.actor_lr);
        clamp_sigma_blocks(nets.actor);
        if (config.zero_sigma) zero_sigma_blocks(nets.actor);

        ObjectiveResult critic_step = critic_loss(batch, traj, mb, nets.critic_spec, nets.critic);
        clip_grad_norm(critic_step.grads, config.max_grad_norm);
        adam_step(nets.critic, critic_step.grads, critic_adam, config.critic_lr);

        actor_loss += actor_step.loss;
        critic_loss_sum += critic_step.loss;
        clip_frac += actor_step.clip_frac;
        ++minibatches;
      }
    }
    const double measured_kl = measure_kl(traj, nets.actor_spec, nets.actor);
    if (config.objective == Objective::kKlPenalty) {
      beta = adapt_beta(measured_kl, config.kl_target, beta);
    }

    MetricsRecord record;
    record.index = update++;
    record.env_steps = steps;
    if (!traj.episode_returns.empty()) {
      const auto& r = traj.episode_returns;
      const double mean = std::accumulate(r.begin(), r.end(), 0.0) / static_cast<double>(r.size());
      double var = 0.0;
      for (double x : r) var += (x - mean) * (x - mean);
      record.mean_return = mean;
      record.return_std = std::sqrt(var / static_cast<double>(r.size()));
      record.max_return = *std::max_element(r.begin(), r.end());
    }
    const double inv_mb = 1.0 / static_cast<double>(minibatches);
    record.actor_loss = actor_loss * inv_mb;
    record.critic_loss = critic_loss_sum * inv_mb;
    record.clip_frac = clip_frac * inv_mb;
    record.kl = measured_kl;
    record.sigma_mean = mean_sigma(nets.actor);
    if (config.objective == Objective::kKlPenalty) record.beta = beta;
    record.wall_ms = std::chrono::duration<double, std::milli>(
                         std::chrono::steady_clock::now() - start)
                         .count();
    if (sink) sink(record);
    result.metrics.push_back(record);
  }
  result.final_beta = beta;
  return result;
}

}  // namespace nesppo
