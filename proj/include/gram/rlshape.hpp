#pragma once

#include <cstddef>
#include <deque>
#include <map>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "gram/datagen.hpp"
#include "gram/model.hpp"
#include "gram/trainkit.hpp"

namespace gram::rl {

// Ring buffer of the most recent 1000 raw reward values, used to
// standardize incoming scores.
class RewardQueue {
 public:
  static constexpr std::size_t kCapacity = 1000;

  // Pushes r, then returns (r - mean) / max(std, 1e-8) over the buffer
  // including r. With fewer than two values the raw value is returned.
  double standardize(double r);

  std::size_t size() const { return buffer_.size(); }
  std::size_t total_pushed() const { return count_; }
  const std::deque<double>& values() const { return buffer_; }

 private:
  std::deque<double> buffer_;
  std::size_t count_ = 0;
};

struct ShapingConfig {
  double gamma = 10.0;
  double alpha = 0.05;  // KL coefficient
  std::size_t cold_start_steps = 30;

  void validate() const;
};

// Per-sample maximization target gamma * r - alpha * kl.
double shaped_objective(double r, double kl, const ShapingConfig& cfg);

// Realized-token KL estimate: sum over response positions of
// log pi_policy(token) - log pi_ref(token).
double seq_kl(const lm::ModelParams& policy, const lm::ModelParams& reference,
              std::string_view x, std::string_view y);

// false while step < cold_start_steps.
bool is_policy_update(std::size_t step, const ShapingConfig& cfg);

struct DemoStepStats {
  std::size_t step = 0;
  double raw_reward_mean = 0.0;
  double standardized_mean = 0.0;
  double kl_mean = 0.0;
  double oracle_utility_mean = 0.0;
  bool policy_updated = false;
};

// Minimal score-function policy-gradient demonstration consuming
// rl_reward, standardize, shaped_objective and seq_kl. y_ref comes from
// the frozen reference policy so the reward stays stationary.
class PgDemo {
 public:
  PgDemo(lm::ModelParams policy, const lm::ModelParams& reference,
         const lm::ModelParams& reward_model, const data::UtilitySpec& oracle,
         ShapingConfig shaping, train::RunConfig train_cfg);

  DemoStepStats step(const std::vector<std::string>& inputs);

  const lm::ModelParams& policy() const { return policy_; }
  RewardQueue& queue() { return queue_; }

 private:
  lm::ModelParams policy_;
  const lm::ModelParams& reference_;
  const lm::ModelParams& reward_model_;
  data::UtilitySpec oracle_;
  ShapingConfig shaping_;
  train::RunConfig cfg_;
  train::AdamState state_;
  RewardQueue queue_;
  std::mt19937_64 rng_;
  std::size_t step_count_ = 0;
  std::map<std::string, std::string> ref_cache_;  // x -> greedy y_ref
};

}  // namespace gram::rl
