#ifndef NESPPO_ENVS_H_
#define NESPPO_ENVS_H_

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nesppo/nnet.h"
#include "nesppo/numerics.h"

namespace nesppo {

struct ActionSpace {
  bool discrete = true;
  std::size_t size = 0;  // choices (discrete) or dimensions (continuous)
  double low = 0.0;      // continuous bounds; actions are clipped into them
  double high = 0.0;
};

struct Transition {
  std::vector<double> obs;
  double reward = 0.0;
  bool done = false;
};

// Seedable single-owner environment. reset() must precede the first step();
// stepping a finished episode throws EnvError.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual std::string name() const = 0;
  virtual std::size_t obs_dim() const = 0;
  virtual ActionSpace action_space() const = 0;
  virtual std::size_t max_steps() const = 0;

  std::vector<double> reset(std::uint64_t seed);
  Transition step(const Action& action);

  std::size_t step_count() const { return step_count_; }
  bool terminal() const { return terminal_; }

 protected:
  virtual std::vector<double> do_reset(RngStream& rng) = 0;
  // Advances one tick. Sets `done` only for terminal events; the step cap
  // is applied by step().
  virtual Transition do_step(const Action& action, RngStream& rng) = 0;

 private:
  std::optional<RngStream> rng_;
  std::size_t step_count_ = 0;
  bool terminal_ = true;
};

// pendulum | rollerball | tank-static | tank-slow | tank-fast | cartpole
std::unique_ptr<Environment> make_env(std::string_view name);
const std::vector<std::string>& env_names();

// Classic torque-limited swing-up. theta = 0 is upright.
class PendulumEnv : public Environment {
 public:
  static constexpr double kGravity = 10.0;
  static constexpr double kMass = 1.0;
  static constexpr double kLength = 1.0;
  static constexpr double kDt = 0.05;
  static constexpr double kMaxTorque = 2.0;
  static constexpr double kMaxSpeed = 8.0;

  std::string name() const override { return "pendulum"; }
  std::size_t obs_dim() const override { return 3; }
  ActionSpace action_space() const override { return {false, 1, -kMaxTorque, kMaxTorque}; }
  std::size_t max_steps() const override { return 200; }

  double theta() const { return theta_; }
  double theta_dot() const { return theta_dot_; }
  // Overrides the state of a reset episode.
  void set_state(double theta, double theta_dot);
  std::vector<double> observation() const;

 protected:
  std::vector<double> do_reset(RngStream& rng) override;
  Transition do_step(const Action& action, RngStream& rng) override;

 private:
  double theta_ = 0.0;
  double theta_dot_ = 0.0;
};

// Ball on a 10x10 plane chasing a target that respawns on every hit.
class RollerBallEnv : public Environment {
 public:
  static constexpr double kPlaneSize = 10.0;
  static constexpr double kHitRadius = 0.5;
  static constexpr double kMaxSpeed = 1.0;
  static constexpr double kAccel = 0.2;  // velocity change per tick at |a| = 1
  static constexpr double kDt = 0.2;
  static constexpr double kHitReward = 1.0;
  static constexpr double kFallReward = -10.0;
  static constexpr double kStepReward = -0.01;

  std::string name() const override { return "rollerball"; }
  std::size_t obs_dim() const override { return 6; }
  ActionSpace action_space() const override { return {false, 2, -1.0, 1.0}; }
  std::size_t max_steps() const override { return 500; }

  struct State {
    double x = 0, y = 0, vx = 0, vy = 0, target_x = 0, target_y = 0;
  };
  const State& state() const { return state_; }
  void set_state(const State& s) { state_ = s; }
  std::vector<double> observation() const;

 protected:
  std::vector<double> do_reset(RngStream& rng) override;
  Transition do_step(const Action& action, RngStream& rng) override;

 private:
  void respawn_target(RngStream& rng);
  State state_;
};

enum class TankSpeed { kStatic, kSlow, kFast };

// Turret fixed at the plane centre; a target disc orbits it.
class TankEnv : public Environment {
 public:
  static constexpr std::size_t kRays = 37;
  static constexpr double kRaySpacingDeg = 5.0;
  static constexpr double kRayLength = 20.0;
  static constexpr double kTargetRadius = 0.5;
  static constexpr double kTurnDeg = 5.0;
  // One angular unit of target motion is one ray spacing.
  static constexpr double kAngularUnitDeg = 5.0;
  static constexpr double kHitReward = 1.0;
  static constexpr double kMissReward = -0.5;
  static constexpr double kTimePenalty = -0.0005;

  enum Move : std::size_t { kTurnLeft = 0, kTurnRight = 1, kStay = 2, kFire = 3 };

  struct State {
    double heading_deg = 90.0;       // world angle of the turret
    double target_angle_deg = 90.0;  // world angle of the target
    double radius = 10.0;
    int direction = 1;               // +1 counterclockwise, -1 clockwise
    bool fired_last = false;
  };

  explicit TankEnv(TankSpeed speed) : speed_(speed) {}

  std::string name() const override;
  std::size_t obs_dim() const override { return 2 * kRays + 2; }
  ActionSpace action_space() const override { return {true, 4, 0.0, 0.0}; }
  std::size_t max_steps() const override { return 300; }

  // Target motion per tick, in angular units.
  double speed_units() const;
  const State& state() const { return state_; }
  void set_state(const State& s) { state_ = s; }
  std::vector<double> observation() const;

  // (hit, normalized distance) for each of the 37 rays, relative heading
  // 0..180 degrees with 90 straight ahead.
  static std::vector<double> ray_observation(const State& s);
  // Whether the ray at world angle `angle_deg` hits the target; `distance`
  // receives the along-ray distance when it does.
  static bool ray_hits(const State& s, double angle_deg, double* distance);

 protected:
  std::vector<double> do_reset(RngStream& rng) override;
  Transition do_step(const Action& action, RngStream& rng) override;

 private:
  TankSpeed speed_;
  State state_;
};

// Cart-pole balancing with the usual constants, +1 per tick.
class CartPoleEnv : public Environment {
 public:
  static constexpr double kThetaLimit = 12.0 * 2.0 * 3.14159265358979323846 / 360.0;
  static constexpr double kXLimit = 2.4;

  std::string name() const override { return "cartpole"; }
  std::size_t obs_dim() const override { return 4; }
  ActionSpace action_space() const override { return {true, 2, 0.0, 0.0}; }
  std::size_t max_steps() const override { return 500; }

  const std::array<double, 4>& state() const { return state_; }
  void set_state(const std::array<double, 4>& s) { state_ = s; }

 protected:
  std::vector<double> do_reset(RngStream& rng) override;
  Transition do_step(const Action& action, RngStream& rng) override;

 private:
  std::array<double, 4> state_{};  // x, x_dot, theta, theta_dot
};

}  // namespace nesppo

#endif  // NESPPO_ENVS_H_
