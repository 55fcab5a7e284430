#pragma once

#include <string_view>
#include <vector>

#include "gram/model.hpp"
#include "gram/record.hpp"
#include "gram/tensor.hpp"

namespace gram::obj {

// Fixed judge instruction prepended to every preference-scoring input.
inline constexpr std::string_view kJudgePrompt =
    "Impartial judge: pick the better response.";

struct SmoothingConfig {
  double epsilon = 0.1;
  std::size_t label_vocab_size = 2;

  void validate() const;
};

struct LossValue {
  double value = 0.0;
  // Filled by regularized_bt_form only.
  double bt_term = 0.0;
  double reg_term = 0.0;
  bool has_breakdown = false;
};

// -log sigmoid(x), numerically stable for large |x|.
double neg_log_sigmoid(double x);

// Pairwise ranking loss -log sigma(r_a - r_b); r_a belongs to the
// preferred response.
LossValue bt_loss(double r_a, double r_b);

// Two-class cross entropy over the label logits.
LossValue generative_ce_loss(double z_a, double z_b, data::Label true_label);

// Two-class label smoothing: -[(1-eps) log p(true) + eps log p(other)].
LossValue label_smoothed_loss(double z_a, double z_b, data::Label true_label,
                              const SmoothingConfig& cfg);

// General form over a logit vector, smoothing mass eps/(|V_l|-1) per
// incorrect class.
double label_smoothed_loss_general(const std::vector<double>& logits,
                                   std::size_t true_index, const SmoothingConfig& cfg);

// Equivalent regularized form -log sigma(z_a - z_b) + eps * (z_a - z_b),
// with the two terms reported separately.
LossValue regularized_bt_form(double z_a, double z_b, double epsilon);

// ---------------------------------------------------------- pre-training

// Token layout of one response-pair generation example:
// [BOS, x, SEP_RESP_A, y_a, SEP_RESP_B, y_b, PAD]. Targets cover the
// response tokens plus each response's closing token; x is context only.
struct PretrainExample {
  std::vector<int> ids;
  std::vector<std::size_t> positions;  // positions whose next token is a target
  std::vector<int> targets;
  std::vector<bool> is_first_response;  // per target: belongs to y_a block
};

PretrainExample encode_pretrain(const lm::Vocab& v, std::string_view x,
                                std::string_view y_a, std::string_view y_b,
                                std::size_t max_len);

// Sequence NLL of [y_a, SEP, y_b] given x; mask_first/mask_second drop one
// response's loss positions (ablation variants).
num::TensorPtr pretrain_loss_node(num::Graph& g, const lm::ModelParams& p,
                                  std::string_view x, std::string_view y_a,
                                  std::string_view y_b, bool mask_first = false,
                                  bool mask_second = false);
LossValue pretrain_loss(const lm::ModelParams& p, std::string_view x,
                        std::string_view y_a, std::string_view y_b);

// The two factored terms: NLL(y_a|x) and NLL(y_b|x,y_a), computed from
// independent forward passes over the respective prefixes.
double nll_first_response(const lm::ModelParams& p, std::string_view x,
                          std::string_view y_a);
double nll_second_response(const lm::ModelParams& p, std::string_view x,
                           std::string_view y_a, std::string_view y_b);

// ----------------------------------------------------------- fine-tuning

// Label-smoothed preference loss on the judge encoding; augment_swap also
// scores the transposed encoding with the flipped label and averages.
num::TensorPtr finetune_loss_node(num::Graph& g, const lm::ModelParams& p,
                                  const data::PreferenceRecord& rec,
                                  const SmoothingConfig& cfg, bool augment_swap,
                                  std::string_view prompt = kJudgePrompt);
LossValue finetune_loss(const lm::ModelParams& p, const data::PreferenceRecord& rec,
                        const SmoothingConfig& cfg, bool augment_swap,
                        std::string_view prompt = kJudgePrompt);

}  // namespace gram::obj
