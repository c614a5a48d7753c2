#ifndef RDQN_ENVS_HPP
#define RDQN_ENVS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "rdqn/error.hpp"

namespace rdqn {

using Observation = std::vector<double>;

enum class ObservationKind { Continuous, Discrete };

struct EnvSpec {
  std::string name;
  ObservationKind observation_kind;
  std::size_t observation_dim;  // continuous: vector length; discrete: 1
  std::size_t num_states;       // discrete only, 0 otherwise
  std::size_t num_actions;
  std::size_t max_episode_steps;
};

/// `terminal` means the task ended (bootstrap with 0); `truncated` means the
/// step cap was hit in a non-terminal state (bootstrap as usual).
struct StepResult {
  Observation next_state;
  double reward;
  bool terminal;
  bool truncated;
};

using EnvRng = std::mt19937_64;

/// Episodic task with a discrete action set.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual const EnvSpec& spec() const = 0;

  Observation reset(EnvRng& rng) {
    steps_ = 0;
    done_ = false;
    return do_reset(rng);
  }

  StepResult step(std::size_t action) {
    if (done_) throw ContractViolation(spec().name + ": step called on a finished episode");
    if (action >= spec().num_actions) throw InvalidInput(spec().name + ": action out of range");
    StepResult r = do_step(action);
    ++steps_;
    if (!r.terminal && steps_ >= spec().max_episode_steps) r.truncated = true;
    done_ = r.terminal || r.truncated;
    return r;
  }

  std::size_t steps() const noexcept { return steps_; }
  bool done() const noexcept { return done_; }

 protected:
  virtual Observation do_reset(EnvRng& rng) = 0;
  virtual StepResult do_step(std::size_t action) = 0;

  // For tests that place the system in a chosen state.
  void resume() noexcept { done_ = false; }

 private:
  std::size_t steps_ = 0;
  bool done_ = true;
};

/// Cart-pole balancing with Euler integration. Action 0 pushes left, 1 right.
/// "cartpole-v1" caps episodes at 500 steps, "cartpole-v2" at 1000.
class CartPole final : public Environment {
 public:
  static constexpr double kGravity = 9.8;
  static constexpr double kCartMass = 1.0;
  static constexpr double kPoleMass = 0.1;
  static constexpr double kTotalMass = kCartMass + kPoleMass;
  static constexpr double kHalfLength = 0.5;
  static constexpr double kPoleMassLength = kPoleMass * kHalfLength;
  static constexpr double kForce = 10.0;
  static constexpr double kTau = 0.02;
  static constexpr double kXThreshold = 2.4;
  static constexpr double kThetaThreshold = 12.0 * 2.0 * std::numbers::pi / 360.0;

  explicit CartPole(std::size_t max_steps = 500, std::string name = "cartpole-v1")
      : spec_{std::move(name), ObservationKind::Continuous, 4, 0, 2, max_steps} {}

  static CartPole v1() { return CartPole(500, "cartpole-v1"); }
  static CartPole v2() { return CartPole(1000, "cartpole-v2"); }

  const EnvSpec& spec() const override { return spec_; }

  /// (x, x_dot, theta, theta_dot); resumes the episode.
  void set_state(const Observation& s) {
    if (s.size() != 4) throw InvalidInput("cart-pole state has 4 components");
    state_ = s;
    resume();
  }
  const Observation& state() const noexcept { return state_; }

 protected:
  Observation do_reset(EnvRng& rng) override {
    std::uniform_real_distribution<double> u(-0.05, 0.05);
    state_.resize(4);
    for (auto& v : state_) v = u(rng);
    return state_;
  }

  StepResult do_step(std::size_t action) override {
    double x = state_[0], x_dot = state_[1], theta = state_[2], theta_dot = state_[3];
    const double force = action == 1 ? kForce : -kForce;
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
    state_ = {x, x_dot, theta, theta_dot};
    const bool failed = x < -kXThreshold || x > kXThreshold || theta < -kThetaThreshold ||
                        theta > kThetaThreshold;
    return {state_, 1.0, failed, false};
  }

 private:
  EnvSpec spec_;
  Observation state_ = Observation(4, 0.0);
};

/// Under-powered car in a valley. Actions: 0 push left, 1 coast, 2 push right.
/// Observation is (position, velocity).
class MountainCar final : public Environment {
 public:
  static constexpr double kMinPosition = -1.2;
  static constexpr double kMaxPosition = 0.6;
  static constexpr double kMaxSpeed = 0.07;
  static constexpr double kGoalPosition = 0.5;
  static constexpr double kForce = 0.001;
  static constexpr double kGravity = 0.0025;

  explicit MountainCar(std::size_t max_steps = 1000)
      : spec_{"mountaincar", ObservationKind::Continuous, 2, 0, 3, max_steps} {}

  const EnvSpec& spec() const override { return spec_; }

  void set_state(double position, double velocity) {
    position_ = position;
    velocity_ = velocity;
    resume();
  }
  double position() const noexcept { return position_; }
  double velocity() const noexcept { return velocity_; }

 protected:
  Observation do_reset(EnvRng& rng) override {
    std::uniform_real_distribution<double> u(-0.6, -0.4);
    position_ = u(rng);
    velocity_ = 0.0;
    return {position_, velocity_};
  }

  StepResult do_step(std::size_t action) override {
    velocity_ += (static_cast<double>(action) - 1.0) * kForce - kGravity * std::cos(3.0 * position_);
    velocity_ = std::clamp(velocity_, -kMaxSpeed, kMaxSpeed);
    position_ += velocity_;
    position_ = std::clamp(position_, kMinPosition, kMaxPosition);
    if (position_ == kMinPosition && velocity_ < 0.0) velocity_ = 0.0;
    const bool reached = position_ >= kGoalPosition;
    return {{position_, velocity_}, -1.0, reached, false};
  }

 private:
  EnvSpec spec_;
  double position_ = -0.5;
  double velocity_ = 0.0;
};

/// 4 x 12 grid. Start (3, 0), goal (3, 11), cliff (3, 1..10). Actions:
/// 0 up, 1 right, 2 down, 3 left; moves are clamped at the walls. Every step
/// costs -1; entering the cliff costs -100 and returns the agent to the start
/// without ending the episode. Observation is {row * 12 + col}.
class CliffWalking final : public Environment {
 public:
  static constexpr std::size_t kRows = 4;
  static constexpr std::size_t kCols = 12;
  static constexpr std::size_t kStart = 3 * kCols + 0;
  static constexpr std::size_t kGoal = 3 * kCols + 11;

  enum Action : std::size_t { Up = 0, Right = 1, Down = 2, Left = 3 };

  explicit CliffWalking(std::size_t max_steps = 500)
      : spec_{"cliffwalking", ObservationKind::Discrete, 1, kRows * kCols, 4, max_steps} {}

  const EnvSpec& spec() const override { return spec_; }

  static constexpr std::size_t index(std::size_t row, std::size_t col) { return row * kCols + col; }
  static constexpr bool is_cliff(std::size_t cell) {
    return cell / kCols == 3 && cell % kCols >= 1 && cell % kCols <= 10;
  }

  void set_cell(std::size_t cell) {
    if (cell >= kRows * kCols) throw InvalidInput("cliff-walking cell out of range");
    cell_ = cell;
    resume();
  }
  std::size_t cell() const noexcept { return cell_; }

  /// Deterministic transition: (next cell, reward, terminal).
  struct Move {
    std::size_t cell;
    double reward;
    bool terminal;
  };
  static Move transition(std::size_t cell, std::size_t action) {
    std::size_t row = cell / kCols, col = cell % kCols;
    switch (action) {
      case Up: row = row == 0 ? 0 : row - 1; break;
      case Right: col = std::min(col + 1, kCols - 1); break;
      case Down: row = std::min(row + 1, kRows - 1); break;
      case Left: col = col == 0 ? 0 : col - 1; break;
      default: throw InvalidInput("cliff-walking action out of range");
    }
    const std::size_t next = index(row, col);
    if (is_cliff(next)) return {kStart, -100.0, false};
    return {next, -1.0, next == kGoal};
  }

 protected:
  Observation do_reset(EnvRng&) override {
    cell_ = kStart;
    return {static_cast<double>(cell_)};
  }

  StepResult do_step(std::size_t action) override {
    const Move m = transition(cell_, action);
    cell_ = m.cell;
    return {{static_cast<double>(cell_)}, m.reward, m.terminal, false};
  }

 private:
  EnvSpec spec_;
  std::size_t cell_ = kStart;
};

/// Known names: cartpole-v1, cartpole-v2, mountaincar, cliffwalking.
/// `max_steps` of 0 keeps the environment's default cap.
inline std::unique_ptr<Environment> make_environment(const std::string& name,
                                                     std::size_t max_steps = 0) {
  if (name == "cartpole-v1" || name == "cartpole") {
    return std::make_unique<CartPole>(max_steps ? max_steps : 500, "cartpole-v1");
  }
  if (name == "cartpole-v2") {
    return std::make_unique<CartPole>(max_steps ? max_steps : 1000, "cartpole-v2");
  }
  if (name == "mountaincar") return std::make_unique<MountainCar>(max_steps ? max_steps : 1000);
  if (name == "cliffwalking") return std::make_unique<CliffWalking>(max_steps ? max_steps : 500);
  throw InvalidInput("unknown environment '" + name + "'");
}

// ---------------------------------------------------------------------------
// Feature maps from observations to approximator inputs.

/// Mountain-car (position, velocity) scaled linearly onto [-1, 1]^2.
inline std::vector<double> normalize_mountain_car(const Observation& obs) {
  auto scale = [](double v, double lo, double hi) { return 2.0 * (v - lo) / (hi - lo) - 1.0; };
  return {scale(obs[0], MountainCar::kMinPosition, MountainCar::kMaxPosition),
          scale(obs[1], -MountainCar::kMaxSpeed, MountainCar::kMaxSpeed)};
}

/// Uniform grid over a box; maps a continuous observation to a cell index
/// (row-major over the dimensions, first dimension slowest).
class GridDiscretizer {
 public:
  GridDiscretizer(std::vector<double> low, std::vector<double> high, std::vector<std::size_t> bins)
      : low_(std::move(low)), high_(std::move(high)), bins_(std::move(bins)) {
    if (low_.size() != high_.size() || low_.size() != bins_.size() || low_.empty()) {
      throw InvalidInput("discretizer bounds and bins must have equal, nonzero length");
    }
    for (std::size_t d = 0; d < bins_.size(); ++d) {
      if (bins_[d] == 0 || !(high_[d] > low_[d])) throw InvalidInput("bad discretizer dimension");
    }
  }

  static GridDiscretizer mountain_car(std::size_t position_bins = 40, std::size_t velocity_bins = 40) {
    return GridDiscretizer({MountainCar::kMinPosition, -MountainCar::kMaxSpeed},
                           {MountainCar::kMaxPosition, MountainCar::kMaxSpeed},
                           {position_bins, velocity_bins});
  }

  std::size_t num_cells() const {
    std::size_t n = 1;
    for (auto b : bins_) n *= b;
    return n;
  }

  std::size_t operator()(const Observation& obs) const {
    if (obs.size() != bins_.size()) throw InvalidInput("discretizer: dimension mismatch");
    std::size_t index = 0;
    for (std::size_t d = 0; d < bins_.size(); ++d) {
      const double t = (obs[d] - low_[d]) / (high_[d] - low_[d]);
      auto cell = static_cast<std::ptrdiff_t>(std::floor(t * static_cast<double>(bins_[d])));
      cell = std::clamp<std::ptrdiff_t>(cell, 0, static_cast<std::ptrdiff_t>(bins_[d]) - 1);
      index = index * bins_[d] + static_cast<std::size_t>(cell);
    }
    return index;
  }

 private:
  std::vector<double> low_;
  std::vector<double> high_;
  std::vector<std::size_t> bins_;
};

}  // namespace rdqn

#endif  // RDQN_ENVS_HPP
