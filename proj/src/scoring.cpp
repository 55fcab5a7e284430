#include "gram/scoring.hpp"

#include <cmath>

namespace gram::score {

std::pair<double, double> preference_prob(const lm::ModelParams& p, std::string_view c,
                                          std::string_view x, std::string_view first,
                                          std::string_view second) {
  lm::Vocab v;
  const lm::JudgeInput s =
      lm::encode_judge(v, c, x, first, second, false, p.cfg.context_len);
  const auto [z_a, z_b] = lm::label_logits(p, s);
  const double p_a = 1.0 / (1.0 + std::exp(z_b - z_a));
  return {p_a, 1.0 - p_a};
}

RewardScore generative_reward(const lm::ModelParams& p, std::string_view c,
                              std::string_view x, std::string_view y,
                              std::string_view y_ref, bool both_orderings) {
  RewardScore rs;
  rs.kind = Kind::Generative;
  rs.ref_response = std::string(y_ref);
  const double p_a = preference_prob(p, c, x, y, y_ref).first;
  if (!both_orderings) {
    rs.value = p_a;
    rs.orderings_used = 1;
    return rs;
  }
  const double p_b = preference_prob(p, c, x, y_ref, y).second;
  rs.value = 0.5 * (p_a + p_b);
  rs.orderings_used = 2;
  return rs;
}

RewardScore discriminative_reward(const lm::ModelParams& p, std::string_view x,
                                  std::string_view y) {
  RewardScore rs;
  rs.kind = Kind::Discriminative;
  rs.orderings_used = 1;
  rs.value = lm::forward_scalar(p, x, y);
  return rs;
}

RewardScore rl_reward(const lm::ModelParams& reward_model, const lm::ModelParams& policy,
                      std::string_view c, std::string_view x, std::string_view y_hat,
                      const lm::SampleConfig& decode_cfg) {
  lm::Vocab v;
  std::string y_ref = lm::greedy_response(policy, v, x, decode_cfg);
  if (y_ref.empty()) y_ref = " ";  // judge encoding rejects empty responses
  return generative_reward(reward_model, c, x, y_hat, y_ref);
}

}  // namespace gram::score
