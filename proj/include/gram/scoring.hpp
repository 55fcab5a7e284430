#pragma once

#include <optional>
#include <string>
#include <utility>

#include "gram/model.hpp"
#include "gram/objectives.hpp"

namespace gram::score {

enum class Kind { Generative, Discriminative };

// A reward value tagged with how it was produced. Generative scores lie in
// [0,1]; discriminative scores are unbounded reals.
struct RewardScore {
  double value = 0.0;
  Kind kind = Kind::Generative;
  std::optional<std::string> ref_response;  // generative only
  int orderings_used = 2;
};

// Softmax over the two label logits at the preference slot, renormalized
// over the label vocabulary: p_a + p_b == 1 exactly.
std::pair<double, double> preference_prob(const lm::ModelParams& p, std::string_view c,
                                          std::string_view x, std::string_view first,
                                          std::string_view second);

// Order-swapped generative reward: average of p(A | [c,x,y,y_ref]) and
// p(B | [c,x,y_ref,y]). both_orderings=false reads only the first form
// (positional-bias ablation).
RewardScore generative_reward(const lm::ModelParams& p, std::string_view c,
                              std::string_view x, std::string_view y,
                              std::string_view y_ref, bool both_orderings = true);

// Scalar-head reward r(x, y).
RewardScore discriminative_reward(const lm::ModelParams& p, std::string_view x,
                                  std::string_view y);

// Greedily decodes y_ref from the given policy, then scores y_hat against
// it with the generative reward.
RewardScore rl_reward(const lm::ModelParams& reward_model, const lm::ModelParams& policy,
                      std::string_view c, std::string_view x, std::string_view y_hat,
                      const lm::SampleConfig& decode_cfg = {});

}  // namespace gram::score
