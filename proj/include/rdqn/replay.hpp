#ifndef RDQN_REPLAY_HPP
#define RDQN_REPLAY_HPP

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "rdqn/error.hpp"
#include "rdqn/policy.hpp"

namespace rdqn {

/// One environment step plus the behavior distribution the action was drawn from.
template <typename State>
struct Transition {
  State state;
  std::size_t action;
  double reward;
  State next_state;
  bool terminal;
  PolicyDistribution behavior;
  std::int64_t episode_id;
};

/// Throws unless the behavior distribution could have produced the action.
template <typename State>
void validate_transition(const Transition<State>& t) {
  if (t.action >= t.behavior.size()) {
    throw InvalidInput("transition action " + std::to_string(t.action) +
                       " outside behavior distribution of size " +
                       std::to_string(t.behavior.size()));
  }
  if (!(t.behavior[t.action] > 0.0)) {
    throw InvalidInput("transition action has zero behavior probability");
  }
  if (!std::isfinite(t.reward)) throw InvalidInput("transition reward is not finite");
}

template <typename State>
class ReplayMemory;

/// A run of consecutive transitions inside a ReplayMemory, addressed by
/// logical index (0 = oldest). Invalidated by the next push.
template <typename State>
class SegmentView {
 public:
  SegmentView(const ReplayMemory<State>& memory, std::size_t start, std::size_t length)
      : memory_(&memory), start_(start), length_(length) {}

  std::size_t size() const noexcept { return length_; }
  bool empty() const noexcept { return length_ == 0; }
  std::size_t start() const noexcept { return start_; }
  const Transition<State>& operator[](std::size_t i) const { return memory_->at(start_ + i); }

 private:
  const ReplayMemory<State>* memory_;
  std::size_t start_;
  std::size_t length_;
};

/// Fixed-capacity FIFO ring buffer of transitions.
template <typename State>
class ReplayMemory {
 public:
  explicit ReplayMemory(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw InvalidInput("replay capacity must be positive");
    storage_.reserve(std::min<std::size_t>(capacity, 1 << 16));
  }

  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t size() const noexcept { return storage_.size(); }
  bool empty() const noexcept { return storage_.empty(); }

  /// Total pushes since construction; the insertion index of the next push.
  std::uint64_t total_pushed() const noexcept { return total_pushed_; }

  void push(Transition<State> t) {
    validate_transition(t);
    if (storage_.size() < capacity_) {
      storage_.push_back(std::move(t));
    } else {
      storage_[head_] = std::move(t);
      head_ = (head_ + 1) % capacity_;
    }
    ++total_pushed_;
  }

  /// Logical access: 0 is the oldest retained transition.
  const Transition<State>& at(std::size_t i) const {
    if (i >= storage_.size()) throw InvalidInput("replay index out of range");
    return storage_[(head_ + i) % storage_.size()];
  }

  /// Longest run starting at logical index `start` with at most `k` elements
  /// that stays inside one episode: it ends after a terminal transition, before
  /// an episode_id change, or at the newest transition.
  SegmentView<State> segment_at(std::size_t start, std::size_t k) const {
    if (k == 0) throw InvalidInput("segment length must be at least 1");
    if (start >= size()) throw InvalidInput("segment start out of range");
    const auto episode = at(start).episode_id;
    std::size_t length = 1;
    while (length < k && start + length < size()) {
      if (at(start + length - 1).terminal) break;
      if (at(start + length).episode_id != episode) break;
      ++length;
    }
    return SegmentView<State>(*this, start, length);
  }

  /// `batch` segments with start indices drawn uniformly over the buffer.
  /// Overlapping segments are allowed.
  template <typename Rng>
  std::vector<SegmentView<State>> sample_segments(std::size_t batch, std::size_t k,
                                                  Rng& rng) const {
    if (empty()) throw EmptyMemory("cannot sample segments from an empty replay memory");
    if (k == 0) throw InvalidInput("segment length must be at least 1");
    std::uniform_int_distribution<std::size_t> pick(0, size() - 1);
    std::vector<SegmentView<State>> out;
    out.reserve(batch);
    for (std::size_t b = 0; b < batch; ++b) out.push_back(segment_at(pick(rng), k));
    return out;
  }

 private:
  std::size_t capacity_;
  std::vector<Transition<State>> storage_;
  std::size_t head_ = 0;  // logical index 0 once the buffer is full
  std::uint64_t total_pushed_ = 0;
};

// ---------------------------------------------------------------------------
// Text dump / load.
//
// One record per line, comma-separated:
//
//   episode_id,action,reward,terminal,state,next_state,behavior
//
// `terminal` is 0 or 1. Vector states and the behavior distribution are
// semicolon-joined lists; integer states are written as plain integers. Reals
// use 17 significant digits so a load reproduces every bit. Lines starting
// with '#' are comments.

namespace detail {

inline void append_real(std::string& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out += buf;
}

inline void append_list(std::string& out, std::span<const double> values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ';';
    append_real(out, values[i]);
  }
}

inline double parse_real(const std::string& s) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw InvalidInput("not a number: '" + s + "'");
  }
  if (used != s.size()) throw InvalidInput("not a number: '" + s + "'");
  return v;
}

inline std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ';')) out.push_back(parse_real(item));
  return out;
}

template <typename Int>
Int parse_integer(const std::string& s) {
  Int v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw InvalidInput("not an integer: '" + s + "'");
  }
  return v;
}

}  // namespace detail

/// How a state type is written in the replay dump.
template <typename State>
struct StateCodec;

template <>
struct StateCodec<std::size_t> {
  static void write(std::string& out, std::size_t s) { out += std::to_string(s); }
  static std::size_t read(const std::string& s) { return detail::parse_integer<std::size_t>(s); }
};

template <>
struct StateCodec<std::vector<double>> {
  static void write(std::string& out, const std::vector<double>& s) { detail::append_list(out, s); }
  static std::vector<double> read(const std::string& s) { return detail::parse_list(s); }
};

template <typename State>
void dump_replay(std::ostream& os, const ReplayMemory<State>& memory) {
  os << "# episode_id,action,reward,terminal,state,next_state,behavior\n";
  std::string line;
  for (std::size_t i = 0; i < memory.size(); ++i) {
    const auto& t = memory.at(i);
    line.clear();
    line += std::to_string(t.episode_id);
    line += ',';
    line += std::to_string(t.action);
    line += ',';
    detail::append_real(line, t.reward);
    line += t.terminal ? ",1," : ",0,";
    StateCodec<State>::write(line, t.state);
    line += ',';
    StateCodec<State>::write(line, t.next_state);
    line += ',';
    detail::append_list(line, t.behavior.probs());
    os << line << '\n';
  }
}

/// Appends every record in `is` to `memory`. Errors name the 1-based line.
template <typename State>
void load_replay(std::istream& is, ReplayMemory<State>& memory) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 7) {
      throw ParseError(line_no, "expected 7 comma-separated fields, got " +
                                    std::to_string(fields.size()));
    }
    try {
      if (fields[3] != "0" && fields[3] != "1") throw InvalidInput("terminal must be 0 or 1");
      Transition<State> t{StateCodec<State>::read(fields[4]),
                          detail::parse_integer<std::size_t>(fields[1]),
                          detail::parse_real(fields[2]),
                          StateCodec<State>::read(fields[5]),
                          fields[3] == "1",
                          PolicyDistribution(detail::parse_list(fields[6])),
                          detail::parse_integer<std::int64_t>(fields[0])};
      memory.push(std::move(t));
    } catch (const InvalidInput& e) {
      throw ParseError(line_no, e.what());
    }
  }
}

}  // namespace rdqn

#endif  // RDQN_REPLAY_HPP
