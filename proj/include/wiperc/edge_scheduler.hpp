#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "wiperc/error.hpp"

namespace wiperc {

struct ScheduleConfig {
  double frame_period_s = 1.0;
  double per_link_s = 0.1;
  double skeleton_s = 0.05;
  double per_step_s = 0.02;
  int n_links_max = 16;
  int min_steps = 1;
  int dwell_frames = 3;
  int initial_links = 5;

  void validate() const {
    if (!(frame_period_s > 0 && per_link_s > 0 && skeleton_s > 0 && per_step_s > 0))
      throw ConfigError("schedule times must be positive");
    if (n_links_max < 1) throw ConfigError("n_links_max must be at least 1");
    if (min_steps < 1) throw ConfigError("min_steps must be at least 1");
    if (dwell_frames < 0) throw ConfigError("dwell_frames must be non-negative");
    if (!(per_link_s + skeleton_s < frame_period_s)) throw ConfigError("one link does not fit in the frame period");
  }
};

inline void to_json(nlohmann::json& j, const ScheduleConfig& c) {
  j = {{"frame_period_s", c.frame_period_s}, {"per_link_s", c.per_link_s},     {"skeleton_s", c.skeleton_s},
       {"per_step_s", c.per_step_s},         {"n_links_max", c.n_links_max},   {"min_steps", c.min_steps},
       {"dwell_frames", c.dwell_frames},     {"initial_links", c.initial_links}};
}

inline void from_json(const nlohmann::json& j, ScheduleConfig& c) {
  const ScheduleConfig d;
  c.frame_period_s = j.value("frame_period_s", d.frame_period_s);
  c.per_link_s = j.value("per_link_s", d.per_link_s);
  c.skeleton_s = j.value("skeleton_s", d.skeleton_s);
  c.per_step_s = j.value("per_step_s", d.per_step_s);
  c.n_links_max = j.value("n_links_max", d.n_links_max);
  c.min_steps = j.value("min_steps", d.min_steps);
  c.dwell_frames = j.value("dwell_frames", d.dwell_frames);
  c.initial_links = j.value("initial_links", d.initial_links);
}

struct Budget {
  double aigc_time_s = 0.0;
  int steps = 0;
};

namespace detail {
// Absorbs binary round-off in expressions like 0.45 / 0.02.
inline constexpr double kBudgetSlack = 1e-9;

inline Budget raw_budget(int n_links, const ScheduleConfig& cfg) {
  Budget b;
  b.aigc_time_s = cfg.frame_period_s - n_links * cfg.per_link_s - cfg.skeleton_s;
  b.steps = static_cast<int>(std::floor(b.aigc_time_s / cfg.per_step_s + kBudgetSlack));
  return b;
}

inline bool feasible(int n_links, const ScheduleConfig& cfg) {
  return n_links >= 1 && n_links <= cfg.n_links_max &&
         raw_budget(n_links, cfg).aigc_time_s + kBudgetSlack >= cfg.min_steps * cfg.per_step_s;
}
}  // namespace detail

struct FeasibleRange {
  int n_min = 1;
  int n_max = 1;
};

inline FeasibleRange feasible_range(const ScheduleConfig& cfg) {
  cfg.validate();
  FeasibleRange r;
  r.n_max = 0;
  while (r.n_max < cfg.n_links_max && detail::feasible(r.n_max + 1, cfg)) ++r.n_max;
  if (r.n_max < 1) throw ConfigError("no link count fits the frame budget");
  return r;
}

inline Budget budget(int n_links, const ScheduleConfig& cfg) {
  cfg.validate();
  if (n_links < 1 || n_links > cfg.n_links_max)
    throw InputError("n_links " + std::to_string(n_links) + " outside [1, " + std::to_string(cfg.n_links_max) + "]");
  if (!detail::feasible(n_links, cfg)) {
    const auto r = feasible_range(cfg);
    throw InfeasibleError("n_links " + std::to_string(n_links) + " leaves no time for " + std::to_string(cfg.min_steps) +
                              " inference steps",
                          r.n_max);
  }
  return detail::raw_budget(n_links, cfg);
}

enum class FeedbackKind { ok, posture_mismatch, quality_low };

inline std::string to_string(FeedbackKind k) {
  switch (k) {
    case FeedbackKind::posture_mismatch: return "posture_mismatch";
    case FeedbackKind::quality_low: return "quality_low";
    default: return "ok";
  }
}

inline FeedbackKind feedback_from_string(const std::string& s) {
  if (s == "ok") return FeedbackKind::ok;
  if (s == "posture_mismatch") return FeedbackKind::posture_mismatch;
  if (s == "quality_low") return FeedbackKind::quality_low;
  throw InputError("unknown feedback kind '" + s + "'");
}

struct Feedback {
  FeedbackKind kind = FeedbackKind::ok;
  double timestamp_s = 0.0;
};

struct ScheduleState {
  static constexpr std::size_t kHistory = 16;

  int n_links = 1;
  int steps = 0;
  int dwell_counter = 0;
  bool saturated = false;
  std::deque<Feedback> history;
};

inline ScheduleState initial_state(const ScheduleConfig& cfg) {
  const auto r = feasible_range(cfg);
  ScheduleState s;
  s.n_links = std::clamp(cfg.initial_links, r.n_min, r.n_max);
  s.steps = budget(s.n_links, cfg).steps;
  return s;
}

// The dwell counter ticks down once per event; a change is only allowed once
// it has reached zero, and each change re-arms it.
inline ScheduleState feedback_step(ScheduleState state, const Feedback& fb, const ScheduleConfig& cfg) {
  state.history.push_back(fb);
  while (state.history.size() > ScheduleState::kHistory) state.history.pop_front();
  if (state.dwell_counter > 0) --state.dwell_counter;
  state.saturated = false;
  int target = state.n_links;
  if (fb.kind == FeedbackKind::posture_mismatch) {
    if (detail::feasible(state.n_links + 1, cfg))
      target = state.n_links + 1;
    else
      state.saturated = true;
  } else if (fb.kind == FeedbackKind::quality_low) {
    if (state.n_links > 1)
      target = state.n_links - 1;
    else
      state.saturated = true;
  }
  if (target != state.n_links && state.dwell_counter == 0) {
    state.n_links = target;
    state.dwell_counter = cfg.dwell_frames;
  }
  state.steps = budget(state.n_links, cfg).steps;
  return state;
}

struct QualitySample {
  double similarity = 0.0;
  double tv = 0.0;
  double naturalness = 0.0;
};

using QualityModel = std::function<QualitySample(int n_links, int steps, std::mt19937_64& rng)>;

// similarity = s_max (1 - exp(-n / k)); tv and naturalness fall as 1/steps.
struct ParametricQuality {
  double s_max = 0.9;
  double k = 2.0;
  double tv_floor = 0.02;
  double tv_gain = 0.5;
  double nat_floor = 1.0;
  double nat_gain = 20.0;
  double noise = 0.0;

  QualitySample operator()(int n, int steps, std::mt19937_64& rng) const {
    QualitySample q;
    q.similarity = s_max * (1.0 - std::exp(-n / k));
    q.tv = tv_floor + tv_gain / steps;
    q.naturalness = nat_floor + nat_gain / steps;
    if (noise > 0.0) {
      std::normal_distribution<double> g(0.0, noise);
      q.similarity += g(rng);
      q.tv = std::max(0.0, q.tv + g(rng));
      q.naturalness = std::max(0.0, q.naturalness + g(rng));
    }
    return q;
  }
};

inline void to_json(nlohmann::json& j, const ParametricQuality& q) {
  j = {{"s_max", q.s_max},         {"k", q.k},       {"tv_floor", q.tv_floor}, {"tv_gain", q.tv_gain},
       {"nat_floor", q.nat_floor}, {"nat_gain", q.nat_gain}, {"noise", q.noise}};
}

inline void from_json(const nlohmann::json& j, ParametricQuality& q) {
  const ParametricQuality d;
  q.s_max = j.value("s_max", d.s_max);
  q.k = j.value("k", d.k);
  q.tv_floor = j.value("tv_floor", d.tv_floor);
  q.tv_gain = j.value("tv_gain", d.tv_gain);
  q.nat_floor = j.value("nat_floor", d.nat_floor);
  q.nat_gain = j.value("nat_gain", d.nat_gain);
  q.noise = j.value("noise", d.noise);
}

// Quality measured offline per link count, e.g. from pipeline runs. Steps are
// implied by the link count through the budget, so they are ignored here.
struct EmpiricalQuality {
  std::map<int, QualitySample> table;

  QualitySample operator()(int n, int, std::mt19937_64&) const {
    const auto it = table.find(n);
    if (it == table.end()) throw InputError("no empirical quality for n_links " + std::to_string(n));
    return it->second;
  }
};

struct FrameRecord {
  int frame = 0;
  int n_links = 0;
  int steps = 0;
  QualitySample quality;
  FeedbackKind feedback = FeedbackKind::ok;
  bool saturated = false;
};

using FeedbackPolicy = std::function<FeedbackKind(const FrameRecord&)>;

// Complains about posture when similarity is below target. Otherwise asks
// for better imagery (fewer links) unless the next lower count is already
// known to miss the target.
class ThresholdPolicy {
 public:
  explicit ThresholdPolicy(double target) : target_(target) {}

  FeedbackKind operator()(const FrameRecord& r) {
    if (r.quality.similarity < target_) {
      bad_->insert(r.n_links);
      return FeedbackKind::posture_mismatch;
    }
    if (r.n_links > 1 && !bad_->count(r.n_links - 1)) return FeedbackKind::quality_low;
    return FeedbackKind::ok;
  }

 private:
  double target_;
  std::shared_ptr<std::set<int>> bad_ = std::make_shared<std::set<int>>();
};

inline FeedbackPolicy always(FeedbackKind k) {
  return [k](const FrameRecord&) { return k; };
}

struct Trace {
  std::vector<FrameRecord> frames;

  std::string csv() const {
    std::ostringstream os;
    os.precision(10);
    os << "frame,n_links,steps,similarity,tv,naturalness,feedback,saturated\n";
    for (const auto& f : frames)
      os << f.frame << ',' << f.n_links << ',' << f.steps << ',' << f.quality.similarity << ',' << f.quality.tv << ','
         << f.quality.naturalness << ',' << to_string(f.feedback) << ',' << (f.saturated ? 1 : 0) << '\n';
    return os.str();
  }
};

// Each frame: record the quality at the current allocation, collect the
// user's feedback on it, then let the controller react for the next frame.
inline Trace simulate(const ScheduleConfig& cfg, const QualityModel& quality, FeedbackPolicy policy, int n_frames,
                      std::uint64_t seed) {
  if (n_frames < 0) throw InputError("n_frames must be non-negative");
  std::mt19937_64 rng(seed);
  auto state = initial_state(cfg);
  Trace t;
  for (int i = 0; i < n_frames; ++i) {
    FrameRecord r;
    r.frame = i;
    r.n_links = state.n_links;
    r.steps = state.steps;
    r.quality = quality(state.n_links, state.steps, rng);
    r.feedback = policy(r);
    state = feedback_step(state, {r.feedback, i * cfg.frame_period_s}, cfg);
    r.saturated = state.saturated;
    t.frames.push_back(r);
  }
  return t;
}

}  // namespace wiperc
