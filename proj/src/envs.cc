#include "nesppo/envs.h"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace nesppo {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

double wrap_angle(double theta) {
  const double two_pi = 2.0 * std::numbers::pi;
  double wrapped = std::fmod(theta + std::numbers::pi, two_pi);
  if (wrapped < 0.0) wrapped += two_pi;
  return wrapped - std::numbers::pi;
}

double wrap_degrees(double deg) {
  double wrapped = std::fmod(deg, 360.0);
  if (wrapped < 0.0) wrapped += 360.0;
  return wrapped;
}

const std::vector<double>& continuous(const Action& action) {
  return std::get<std::vector<double>>(action);
}

}  // namespace

std::vector<double> Environment::reset(std::uint64_t seed) {
  rng_.emplace(seed);
  step_count_ = 0;
  terminal_ = false;
  return do_reset(*rng_);
}

Transition Environment::step(const Action& action) {
  if (!rng_) throw EnvError(name() + ": step() before reset()");
  if (terminal_) throw EnvError(name() + ": step() after the episode ended; call reset()");
  const ActionSpace space = action_space();
  if (space.discrete) {
    const auto* index = std::get_if<std::size_t>(&action);
    if (index == nullptr) throw EnvError(name() + ": expected a discrete action");
    if (*index >= space.size) {
      throw EnvError(name() + ": action " + std::to_string(*index) + " outside [0, " +
                     std::to_string(space.size) + ")");
    }
  } else {
    const auto* values = std::get_if<std::vector<double>>(&action);
    if (values == nullptr || values->size() != space.size) {
      throw EnvError(name() + ": expected a " + std::to_string(space.size) +
                     "-dimensional continuous action");
    }
    for (double v : *values) {
      if (!std::isfinite(v)) throw EnvError(name() + ": non-finite action");
    }
  }
  Transition t = do_step(action, *rng_);
  ++step_count_;
  if (step_count_ >= max_steps()) t.done = true;
  terminal_ = t.done;
  return t;
}

const std::vector<std::string>& env_names() {
  static const std::vector<std::string> names = {
      "pendulum", "rollerball", "tank-static", "tank-slow", "tank-fast", "cartpole"};
  return names;
}

std::unique_ptr<Environment> make_env(std::string_view name) {
  if (name == "pendulum") return std::make_unique<PendulumEnv>();
  if (name == "rollerball") return std::make_unique<RollerBallEnv>();
  if (name == "tank-static") return std::make_unique<TankEnv>(TankSpeed::kStatic);
  if (name == "tank-slow") return std::make_unique<TankEnv>(TankSpeed::kSlow);
  if (name == "tank-fast") return std::make_unique<TankEnv>(TankSpeed::kFast);
  if (name == "cartpole") return std::make_unique<CartPoleEnv>();
  throw ConfigError("unknown environment '" + std::string(name) + "'");
}

// ---- pendulum ----

void PendulumEnv::set_state(double theta, double theta_dot) {
  theta_ = theta;
  theta_dot_ = theta_dot;
}

std::vector<double> PendulumEnv::observation() const {
  return {std::cos(theta_), std::sin(theta_), theta_dot_};
}

std::vector<double> PendulumEnv::do_reset(RngStream& rng) {
  theta_ = rng.uniform(-std::numbers::pi, std::numbers::pi);
  theta_dot_ = rng.uniform(-1.0, 1.0);
  return observation();
}

Transition PendulumEnv::do_step(const Action& action, RngStream&) {
  const double u = std::clamp(continuous(action)[0], -kMaxTorque, kMaxTorque);
  const double th = wrap_angle(theta_);
  const double cost = th * th + 0.1 * theta_dot_ * theta_dot_ + 0.001 * u * u;

  const double accel = 3.0 * kGravity / (2.0 * kLength) * std::sin(theta_) +
                       3.0 / (kMass * kLength * kLength) * u;
  theta_dot_ = std::clamp(theta_dot_ + accel * kDt, -kMaxSpeed, kMaxSpeed);
  theta_ = theta_ + theta_dot_ * kDt;
  return {observation(), -cost, false};
}

// ---- rollerball ----

std::vector<double> RollerBallEnv::observation() const {
  return {state_.x,  state_.y, state_.vx, state_.vy, state_.target_x - state_.x,
          state_.target_y - state_.y};
}

void RollerBallEnv::respawn_target(RngStream& rng) {
  const double lo = kHitRadius;
  const double hi = kPlaneSize - kHitRadius;
  do {
    state_.target_x = rng.uniform(lo, hi);
    state_.target_y = rng.uniform(lo, hi);
  } while (std::hypot(state_.target_x - state_.x, state_.target_y - state_.y) <
           2.0 * kHitRadius);
}

std::vector<double> RollerBallEnv::do_reset(RngStream& rng) {
  state_ = State{};
  state_.x = kPlaneSize / 2.0;
  state_.y = kPlaneSize / 2.0;
  respawn_target(rng);
  return observation();
}

Transition RollerBallEnv::do_step(const Action& action, RngStream& rng) {
  const auto& a = continuous(action);
  state_.vx += kAccel * std::clamp(a[0], -1.0, 1.0);
  state_.vy += kAccel * std::clamp(a[1], -1.0, 1.0);
  const double speed = std::hypot(state_.vx, state_.vy);
  if (speed > kMaxSpeed) {
    state_.vx *= kMaxSpeed / speed;
    state_.vy *= kMaxSpeed / speed;
  }
  state_.x += state_.vx * kDt;
  state_.y += state_.vy * kDt;

  if (state_.x < 0.0 || state_.x > kPlaneSize || state_.y < 0.0 || state_.y > kPlaneSize) {
    return {observation(), kFallReward, true};
  }
  if (std::hypot(state_.target_x - state_.x, state_.target_y - state_.y) < kHitRadius) {
    respawn_target(rng);
    return {observation(), kHitReward, false};
  }
  return {observation(), kStepReward, false};
}

// ---- tank ----

std::string TankEnv::name() const {
  switch (speed_) {
    case TankSpeed::kStatic:
      return "tank-static";
    case TankSpeed::kSlow:
      return "tank-slow";
    case TankSpeed::kFast:
      return "tank-fast";
  }
  return "tank";
}

double TankEnv::speed_units() const {
  switch (speed_) {
    case TankSpeed::kStatic:
      return 0.0;
    case TankSpeed::kSlow:
      return 0.5;
    case TankSpeed::kFast:
      return 1.0;
  }
  return 0.0;
}

bool TankEnv::ray_hits(const State& s, double angle_deg, double* distance) {
  const double target = s.target_angle_deg * kDegToRad;
  const double px = s.radius * std::cos(target);
  const double py = s.radius * std::sin(target);
  const double ray = angle_deg * kDegToRad;
  const double dx = std::cos(ray);
  const double dy = std::sin(ray);
  const double along = px * dx + py * dy;
  const double across = std::abs(px * dy - py * dx);
  if (along <= 0.0 || along > kRayLength || across > kTargetRadius) return false;
  if (distance != nullptr) *distance = along;
  return true;
}

std::vector<double> TankEnv::ray_observation(const State& s) {
  std::vector<double> obs;
  obs.reserve(2 * kRays);
  for (std::size_t k = 0; k < kRays; ++k) {
    const double relative = kRaySpacingDeg * static_cast<double>(k);
    double distance = 0.0;
    if (ray_hits(s, s.heading_deg - 90.0 + relative, &distance)) {
      obs.push_back(1.0);
      obs.push_back(distance / kRayLength);
    } else {
      obs.push_back(0.0);
      obs.push_back(1.0);
    }
  }
  return obs;
}

std::vector<double> TankEnv::observation() const {
  std::vector<double> obs = ray_observation(state_);
  obs.push_back(speed_ == TankSpeed::kStatic ? 0.0 : static_cast<double>(state_.direction));
  obs.push_back(state_.fired_last ? 1.0 : 0.0);
  return obs;
}

std::vector<double> TankEnv::do_reset(RngStream& rng) {
  state_ = State{};
  state_.radius = static_cast<double>(rng.uniform_int(3, 19));
  state_.target_angle_deg = kRaySpacingDeg * static_cast<double>(rng.uniform_int(0, 71));
  state_.direction = rng.uniform_int(0, 1) == 0 ? -1 : 1;
  return observation();
}

Transition TankEnv::do_step(const Action& action, RngStream&) {
  const std::size_t move = std::get<std::size_t>(action);
  double reward = kTimePenalty;
  bool done = false;
  if (move == kTurnLeft) state_.heading_deg = wrap_degrees(state_.heading_deg + kTurnDeg);
  if (move == kTurnRight) state_.heading_deg = wrap_degrees(state_.heading_deg - kTurnDeg);
  if (move == kFire) {
    if (ray_hits(state_, state_.heading_deg, nullptr)) {
      reward += kHitReward;
      done = true;
    } else {
      reward += kMissReward;
    }
  }
  state_.fired_last = move == kFire;
  state_.target_angle_deg = wrap_degrees(
      state_.target_angle_deg + state_.direction * speed_units() * kAngularUnitDeg);
  return {observation(), reward, done};
}

// ---- cartpole ----

std::vector<double> CartPoleEnv::do_reset(RngStream& rng) {
  for (double& v : state_) v = rng.uniform(-0.05, 0.05);
  return {state_.begin(), state_.end()};
}

Transition CartPoleEnv::do_step(const Action& action, RngStream&) {
  constexpr double kGravity = 9.8;
  constexpr double kCartMass = 1.0;
  constexpr double kPoleMass = 0.1;
  constexpr double kTotalMass = kCartMass + kPoleMass;
  constexpr double kHalfLength = 0.5;
  constexpr double kPoleMassLength = kPoleMass * kHalfLength;
  constexpr double kForce = 10.0;
  constexpr double kTau = 0.02;

  auto& [x, x_dot, theta, theta_dot] = state_;
  const double force = std::get<std::size_t>(action) == 1 ? kForce : -kForce;
  const double cos_t = std::cos(theta);
  const double sin_t = std::sin(theta);
  const double temp = (force + kPoleMassLength * theta_dot * theta_dot * sin_t) / kTotalMass;
  const double theta_acc =
      (kGravity * sin_t - cos_t * temp) /
      (kHalfLength * (4.0 / 3.0 - kPoleMass * cos_t * cos_t / kTotalMass));
  const double x_acc = temp - kPoleMassLength * theta_acc * cos_t / kTotalMass;
  x += kTau * x_dot;
  x_dot += kTau * x_acc;
  theta += kTau * theta_dot;
  theta_dot += kTau * theta_acc;

  const bool failed = x < -kXLimit || x > kXLimit || theta < -kThetaLimit || theta > kThetaLimit;
  return {{state_.begin(), state_.end()}, 1.0, failed};
}

}  // namespace nesppo
