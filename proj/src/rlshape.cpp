#include "gram/rlshape.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gram/objectives.hpp"
#include "gram/scoring.hpp"

namespace gram::rl {

using lm::ModelParams;
using num::Graph;
using num::TensorPtr;

double RewardQueue::standardize(double r) {
  buffer_.push_back(r);
  ++count_;
  if (buffer_.size() > kCapacity) buffer_.pop_front();
  const std::size_t n = buffer_.size();
  if (n < 2) return r;
  const auto [lo, hi] = std::minmax_element(buffer_.begin(), buffer_.end());
  if (*lo == *hi) return 0.0;  // zero deviation, exact
  const double mean =
      std::accumulate(buffer_.begin(), buffer_.end(), 0.0) / static_cast<double>(n);
  double var = 0.0;
  for (double v : buffer_) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);
  const double sd = std::max(std::sqrt(var), 1e-8);
  return (r - mean) / sd;
}

void ShapingConfig::validate() const {
  if (gamma <= 0.0) throw ContractError("shaping: gamma must be positive");
  if (alpha < 0.0) throw ContractError("shaping: alpha must be non-negative");
}

double shaped_objective(double r, double kl, const ShapingConfig& cfg) {
  cfg.validate();
  if (kl < 0.0) throw ContractError("shaped_objective: negative KL estimate");
  return cfg.gamma * r - cfg.alpha * kl;
}

bool is_policy_update(std::size_t step, const ShapingConfig& cfg) {
  return step >= cfg.cold_start_steps;
}

namespace {

// Response token ids plus terminator appended to the decode prompt.
struct ResponseEncoding {
  std::vector<int> ids;                 // full sequence, prompt + response
  std::vector<std::size_t> positions;   // positions predicting response tokens
  std::vector<int> targets;
};

ResponseEncoding encode_rollout(const lm::Vocab& v, std::string_view x,
                                std::string_view y, std::size_t max_len) {
  ResponseEncoding enc;
  enc.ids.push_back(lm::tok::kBos);
  const auto xi = v.encode(x);
  enc.ids.insert(enc.ids.end(), xi.begin(), xi.end());
  enc.ids.push_back(lm::tok::kSepRespA);
  const std::size_t prompt_len = enc.ids.size();
  const auto yi = v.encode(y);
  enc.ids.insert(enc.ids.end(), yi.begin(), yi.end());
  enc.ids.push_back(lm::tok::kSepRespB);
  if (enc.ids.size() > max_len) {
    throw TruncationError("rollout encoding exceeds context length");
  }
  for (std::size_t p = prompt_len; p < enc.ids.size(); ++p) {
    enc.positions.push_back(p - 1);
    enc.targets.push_back(enc.ids[p]);
  }
  return enc;
}

double rollout_logprob(const ModelParams& p, const ResponseEncoding& enc) {
  Graph g(false);
  TensorPtr logp = lm::forward_lm(g, p, enc.ids);
  double total = 0.0;
  const std::size_t vsz = logp->cols();
  for (std::size_t i = 0; i < enc.positions.size(); ++i) {
    total += logp->data[enc.positions[i] * vsz + static_cast<std::size_t>(enc.targets[i])];
  }
  return total;
}

}  // namespace

double seq_kl(const ModelParams& policy, const ModelParams& reference,
              std::string_view x, std::string_view y) {
  const lm::Vocab v;
  const auto enc = encode_rollout(v, x, y, policy.cfg.context_len);
  return rollout_logprob(policy, enc) - rollout_logprob(reference, enc);
}

PgDemo::PgDemo(ModelParams policy, const ModelParams& reference,
               const ModelParams& reward_model, const data::UtilitySpec& oracle,
               ShapingConfig shaping, train::RunConfig train_cfg)
    : policy_(std::move(policy)),
      reference_(reference),
      reward_model_(reward_model),
      oracle_(oracle),
      shaping_(shaping),
      cfg_(std::move(train_cfg)),
      state_(train::AdamState::init(policy_)),
      rng_(cfg_.seed) {
  shaping_.validate();
  cfg_.validate();
}

DemoStepStats PgDemo::step(const std::vector<std::string>& inputs) {
  if (inputs.empty()) throw ContractError("pg step: empty input batch");
  const lm::Vocab vocab;
  lm::SampleConfig decode;
  decode.max_new_tokens = cfg_.max_gen_len;

  struct Sample {
    ResponseEncoding enc;
    double advantage = 0.0;
  };
  std::vector<Sample> batch;
  DemoStepStats stats;
  stats.step = step_count_;

  for (const auto& x : inputs) {
    std::string y_hat = lm::sample_response(policy_, vocab, x, decode, rng_);
    if (y_hat.empty()) y_hat = " ";
    auto ref_it = ref_cache_.find(x);
    if (ref_it == ref_cache_.end()) {
      std::string y_ref = lm::greedy_response(reference_, vocab, x, decode);
      if (y_ref.empty()) y_ref = " ";
      ref_it = ref_cache_.emplace(x, std::move(y_ref)).first;
    }
    const auto score = score::generative_reward(reward_model_, obj::kJudgePrompt, x,
                                                y_hat, ref_it->second);
    const double kl_raw = seq_kl(policy_, reference_, x, y_hat);
    // the realized-token estimate is unbiased but can go negative; clamp
    const double kl = std::max(kl_raw, 0.0);
    const double standardized = queue_.standardize(score.value);
    const double objective = shaped_objective(standardized, kl, shaping_);
    stats.raw_reward_mean += score.value;
    stats.standardized_mean += standardized;
    stats.kl_mean += kl_raw;
    stats.oracle_utility_mean += data::oracle_utility(oracle_, x, y_hat);
    batch.push_back({encode_rollout(vocab, x, y_hat, policy_.cfg.context_len), objective});
  }
  const double inv_n = 1.0 / static_cast<double>(inputs.size());
  stats.raw_reward_mean *= inv_n;
  stats.standardized_mean *= inv_n;
  stats.kl_mean *= inv_n;
  stats.oracle_utility_mean *= inv_n;

  stats.policy_updated = is_policy_update(step_count_, shaping_);
  if (stats.policy_updated) {
    for (const auto& s : batch) {
      Graph g;
      TensorPtr logp = lm::forward_lm(g, policy_, s.enc.ids);
      // score-function estimator: minimize -objective * log pi(y_hat | x)
      std::vector<double> w(s.enc.targets.size(), s.advantage);
      TensorPtr loss = g.pick_nll(logp, s.enc.positions, s.enc.targets, w);
      g.backward(loss);
    }
    for (const auto& [name, t] : policy_.named()) {
      if (!t->grad.empty()) {
        for (double& gv : t->grad) gv *= inv_n;
      }
    }
    train::optimizer_step(policy_, state_, cfg_, cfg_.lr_stage2);
  } else {
    // cold start only fills the reward queue; discard any stale gradients
    for (const auto& [name, t] : policy_.named()) t->zero_grad();
  }
  ++step_count_;
  return stats;
}

}  // namespace gram::rl
