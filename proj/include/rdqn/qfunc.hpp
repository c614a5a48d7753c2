#ifndef RDQN_QFUNC_HPP
#define RDQN_QFUNC_HPP

#include <array>
#include <bit>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "rdqn/error.hpp"

namespace rdqn {

/// An action-value approximator trained by per-sample gradient steps.
///
/// `train_step` descends on (1/2)(y - Q(s, a))^2, i.e. applies
/// theta -= lr * (Q - y) * grad Q, and returns the squared error (y - Q)^2
/// measured before the step.
template <typename Q>
concept QFunction = std::copyable<Q> && requires(Q q, const Q& cq, const typename Q::state_type& s,
                                                 std::size_t a, double y) {
  typename Q::state_type;
  { cq.predict(s) } -> std::same_as<std::vector<double>>;
  { cq.num_actions() } -> std::convertible_to<std::size_t>;
  { q.train_step(s, a, y) } -> std::same_as<double>;
  { cq.parameters() } -> std::convertible_to<std::span<const double>>;
};

inline void check_finite_target(double y) {
  if (!std::isfinite(y)) throw InvalidInput("training target is not finite");
}

/// Dense [num_states x num_actions] table.
class TabularQ {
 public:
  using state_type = std::size_t;
  static constexpr std::uint32_t kSnapshotKind = 1;

  TabularQ(std::size_t num_states, std::size_t num_actions, double learning_rate = 0.1,
           double initial_value = 0.0)
      : num_states_(num_states), num_actions_(num_actions), learning_rate_(learning_rate),
        table_(num_states * num_actions, initial_value) {
    if (num_states == 0 || num_actions < 2) {
      throw InvalidInput("tabular Q needs at least one state and two actions");
    }
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
      throw InvalidInput("learning rate must be finite and non-negative");
    }
    if (!std::isfinite(initial_value)) throw InvalidInput("initial value must be finite");
  }

  std::size_t num_states() const noexcept { return num_states_; }
  std::size_t num_actions() const noexcept { return num_actions_; }
  double learning_rate() const noexcept { return learning_rate_; }

  std::vector<double> predict(std::size_t s) const {
    check_state(s);
    const auto* row = table_.data() + s * num_actions_;
    return std::vector<double>(row, row + num_actions_);
  }

  double value(std::size_t s, std::size_t a) const {
    check_state(s);
    check_action(a);
    return table_[s * num_actions_ + a];
  }

  void set(std::size_t s, std::size_t a, double v) {
    check_state(s);
    check_action(a);
    if (!std::isfinite(v)) throw InvalidInput("table entries must be finite");
    table_[s * num_actions_ + a] = v;
  }

  double train_step(std::size_t s, std::size_t a, double y) {
    check_finite_target(y);
    check_state(s);
    check_action(a);
    double& q = table_[s * num_actions_ + a];
    const double err = y - q;
    q += learning_rate_ * err;
    return err * err;
  }

  std::span<const double> parameters() const noexcept { return table_; }
  std::span<double> mutable_parameters() noexcept { return table_; }
  std::vector<std::uint64_t> shape() const { return {num_states_, num_actions_}; }

 private:
  void check_state(std::size_t s) const {
    if (s >= num_states_) throw InvalidInput("state index " + std::to_string(s) + " out of range");
  }
  void check_action(std::size_t a) const {
    if (a >= num_actions_) throw InvalidInput("action index out of range");
  }

  std::size_t num_states_;
  std::size_t num_actions_;
  double learning_rate_;
  std::vector<double> table_;
};

/// input -> dense(hidden) -> ReLU -> dense(num_actions).
///
/// Parameters live in one flat vector laid out as W1 (hidden x input, row
/// major), b1 (hidden), W2 (actions x hidden, row major), b2 (actions).
class MlpQ {
 public:
  using state_type = std::vector<double>;
  static constexpr std::uint32_t kSnapshotKind = 2;

  /// Zero-initialized network.
  MlpQ(std::size_t input_dim, std::size_t hidden_dim, std::size_t num_actions,
       double learning_rate = 1e-3)
      : input_(input_dim), hidden_(hidden_dim), actions_(num_actions),
        learning_rate_(learning_rate), params_(parameter_count(input_dim, hidden_dim, num_actions)) {
    if (input_dim == 0 || hidden_dim == 0 || num_actions < 2) {
      throw InvalidInput("MLP needs positive input/hidden sizes and at least two actions");
    }
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
      throw InvalidInput("learning rate must be finite and non-negative");
    }
  }

  /// Weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  template <typename Rng>
  MlpQ(std::size_t input_dim, std::size_t hidden_dim, std::size_t num_actions,
       double learning_rate, Rng& rng)
      : MlpQ(input_dim, hidden_dim, num_actions, learning_rate) {
    const double r1 = 1.0 / std::sqrt(static_cast<double>(input_));
    const double r2 = 1.0 / std::sqrt(static_cast<double>(hidden_));
    std::uniform_real_distribution<double> u1(-r1, r1);
    std::uniform_real_distribution<double> u2(-r2, r2);
    for (std::size_t i = 0; i < w2_offset(); ++i) params_[i] = u1(rng);
    for (std::size_t i = w2_offset(); i < params_.size(); ++i) params_[i] = u2(rng);
  }

  static std::size_t parameter_count(std::size_t in, std::size_t hidden, std::size_t actions) {
    return hidden * in + hidden + actions * hidden + actions;
  }

  std::size_t input_dim() const noexcept { return input_; }
  std::size_t hidden_dim() const noexcept { return hidden_; }
  std::size_t num_actions() const noexcept { return actions_; }
  double learning_rate() const noexcept { return learning_rate_; }

  std::vector<double> predict(const std::vector<double>& x) const {
    std::vector<double> hidden(hidden_);
    return forward(x, hidden);
  }

  /// d Q(x, action) / d theta, in parameter layout order.
  std::vector<double> value_gradient(const std::vector<double>& x, std::size_t action) const {
    std::vector<double> grad(params_.size(), 0.0);
    accumulate_value_gradient(x, action, 1.0, grad);
    return grad;
  }

  /// Gradient of (1/2)(y - Q(x, action))^2, which is (Q - y) grad Q.
  std::vector<double> loss_gradient(const std::vector<double>& x, std::size_t action,
                                    double y) const {
    check_action(action);
    const double q = predict(x)[action];
    std::vector<double> grad(params_.size(), 0.0);
    accumulate_value_gradient(x, action, q - y, grad);
    return grad;
  }

  double train_step(const std::vector<double>& x, std::size_t action, double y) {
    check_finite_target(y);
    check_action(action);
    std::vector<double> hidden(hidden_);
    const double q = forward(x, hidden)[action];
    const double err = y - q;
    const double step = learning_rate_ * err;  // theta += lr (y - Q) grad Q

    const double* w2 = params_.data() + w2_offset() + action * hidden_;
    double* w1 = params_.data();
    double* b1 = params_.data() + b1_offset();
    for (std::size_t j = 0; j < hidden_; ++j) {
      if (hidden[j] <= 0.0) continue;  // ReLU gate closed
      const double g = step * w2[j];
      double* row = w1 + j * input_;
      for (std::size_t i = 0; i < input_; ++i) row[i] += g * x[i];
      b1[j] += g;
    }
    double* w2_row = params_.data() + w2_offset() + action * hidden_;
    for (std::size_t j = 0; j < hidden_; ++j) w2_row[j] += step * hidden[j];
    params_[b2_offset() + action] += step;

    for (double p : params_) {
      if (!std::isfinite(p)) throw DomainError("MLP parameters diverged to a non-finite value");
    }
    return err * err;
  }

  std::span<const double> parameters() const noexcept { return params_; }
  std::span<double> mutable_parameters() noexcept { return params_; }
  std::vector<std::uint64_t> shape() const { return {input_, hidden_, actions_}; }

 private:
  std::size_t b1_offset() const noexcept { return hidden_ * input_; }
  std::size_t w2_offset() const noexcept { return b1_offset() + hidden_; }
  std::size_t b2_offset() const noexcept { return w2_offset() + actions_ * hidden_; }

  void check_input(const std::vector<double>& x) const {
    if (x.size() != input_) {
      throw InvalidInput("MLP input has dimension " + std::to_string(x.size()) + ", expected " +
                         std::to_string(input_));
    }
  }
  void check_action(std::size_t a) const {
    if (a >= actions_) throw InvalidInput("action index out of range");
  }

  // Fills `hidden` with post-activation values and returns the outputs.
  std::vector<double> forward(const std::vector<double>& x, std::vector<double>& hidden) const {
    check_input(x);
    const double* w1 = params_.data();
    const double* b1 = params_.data() + b1_offset();
    for (std::size_t j = 0; j < hidden_; ++j) {
      double z = b1[j];
      const double* row = w1 + j * input_;
      for (std::size_t i = 0; i < input_; ++i) z += row[i] * x[i];
      hidden[j] = z > 0.0 ? z : 0.0;
    }
    const double* w2 = params_.data() + w2_offset();
    const double* b2 = params_.data() + b2_offset();
    std::vector<double> out(actions_);
    for (std::size_t a = 0; a < actions_; ++a) {
      double q = b2[a];
      const double* row = w2 + a * hidden_;
      for (std::size_t j = 0; j < hidden_; ++j) q += row[j] * hidden[j];
      out[a] = q;
    }
    return out;
  }

  void accumulate_value_gradient(const std::vector<double>& x, std::size_t action, double scale,
                                 std::vector<double>& grad) const {
    check_action(action);
    std::vector<double> hidden(hidden_);
    forward(x, hidden);
    const double* w2 = params_.data() + w2_offset() + action * hidden_;
    for (std::size_t j = 0; j < hidden_; ++j) {
      if (hidden[j] <= 0.0) continue;
      const double g = scale * w2[j];
      for (std::size_t i = 0; i < input_; ++i) grad[j * input_ + i] += g * x[i];
      grad[b1_offset() + j] += g;
    }
    for (std::size_t j = 0; j < hidden_; ++j) {
      grad[w2_offset() + action * hidden_ + j] += scale * hidden[j];
    }
    grad[b2_offset() + action] += scale;
  }

  std::size_t input_;
  std::size_t hidden_;
  std::size_t actions_;
  double learning_rate_;
  std::vector<double> params_;
};

/// Online approximator plus a periodically synchronized frozen copy.
template <QFunction Q>
class TargetPair {
 public:
  TargetPair(Q online, std::uint64_t sync_period)
      : online_(std::move(online)), target_(online_), sync_period_(sync_period) {
    if (sync_period == 0) throw InvalidInput("sync period must be positive");
  }

  const Q& online() const noexcept { return online_; }
  const Q& target() const noexcept { return target_; }
  Q& mutable_online() noexcept { return online_; }
  std::uint64_t sync_period() const noexcept { return sync_period_; }

  double train_step(const typename Q::state_type& s, std::size_t action, double y) {
    return online_.train_step(s, action, y);
  }

  /// Copies online into target when `global_step` is a multiple of the period.
  bool maybe_sync(std::uint64_t global_step) {
    if (global_step % sync_period_ != 0) return false;
    target_ = online_;
    return true;
  }

 private:
  Q online_;
  Q target_;
  std::uint64_t sync_period_;
};

// ---------------------------------------------------------------------------
// Parameter snapshots.
//
// Binary layout, all integers and reals little-endian:
//
//   offset  size        field
//   0       8           magic "RDQNPAR1"
//   8       4           uint32 kind (1 = tabular, 2 = MLP)
//   12      4           uint32 ndims
//   16      8 * ndims   uint64 dims (tabular: states, actions;
//                                    MLP: input, hidden, actions)
//   ...     8           uint64 parameter count
//   ...     8 * count   float64 parameters in the approximator's layout order

inline constexpr std::array<char, 8> kSnapshotMagic = {'R', 'D', 'Q', 'N', 'P', 'A', 'R', '1'};

namespace detail {

template <typename UInt>
void write_le(std::ostream& os, UInt v) {
  unsigned char bytes[sizeof(UInt)];
  for (std::size_t i = 0; i < sizeof(UInt); ++i) bytes[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(bytes), sizeof bytes);
}

template <typename UInt>
UInt read_le(std::istream& is) {
  unsigned char bytes[sizeof(UInt)];
  if (!is.read(reinterpret_cast<char*>(bytes), sizeof bytes)) {
    throw InvalidInput("snapshot truncated");
  }
  UInt v = 0;
  for (std::size_t i = 0; i < sizeof(UInt); ++i) v |= static_cast<UInt>(bytes[i]) << (8 * i);
  return v;
}

}  // namespace detail

template <QFunction Q>
void save_snapshot(std::ostream& os, const Q& q) {
  os.write(kSnapshotMagic.data(), kSnapshotMagic.size());
  detail::write_le<std::uint32_t>(os, Q::kSnapshotKind);
  const auto dims = q.shape();
  detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(dims.size()));
  for (auto d : dims) detail::write_le<std::uint64_t>(os, d);
  const auto params = q.parameters();
  detail::write_le<std::uint64_t>(os, params.size());
  for (double p : params) detail::write_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(p));
  if (!os) throw std::runtime_error("failed writing parameter snapshot");
}

/// Overwrites the parameters of `q`; kind and dimensions must match.
template <QFunction Q>
void load_snapshot(std::istream& is, Q& q) {
  std::array<char, 8> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kSnapshotMagic) {
    throw InvalidInput("not a parameter snapshot (bad magic)");
  }
  if (detail::read_le<std::uint32_t>(is) != Q::kSnapshotKind) {
    throw InvalidInput("snapshot holds a different approximator kind");
  }
  const auto ndims = detail::read_le<std::uint32_t>(is);
  std::vector<std::uint64_t> dims(ndims);
  for (auto& d : dims) d = detail::read_le<std::uint64_t>(is);
  if (dims != q.shape()) throw InvalidInput("snapshot dimensions do not match");
  const auto count = detail::read_le<std::uint64_t>(is);
  auto params = q.mutable_parameters();
  if (count != params.size()) throw InvalidInput("snapshot parameter count does not match");
  std::vector<double> loaded(count);
  for (auto& p : loaded) {
    p = std::bit_cast<double>(detail::read_le<std::uint64_t>(is));
    if (!std::isfinite(p)) throw InvalidInput("snapshot contains a non-finite parameter");
  }
  std::copy(loaded.begin(), loaded.end(), params.begin());
}

template <QFunction Q>
void save_snapshot(const std::string& path, const Q& q) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  save_snapshot(os, q);
}

template <QFunction Q>
void load_snapshot(const std::string& path, Q& q) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  load_snapshot(is, q);
}

}  // namespace rdqn

#endif  // RDQN_QFUNC_HPP
