#include "gram/objectives.hpp"

#include <cmath>

namespace gram::obj {

using data::Label;
using num::Graph;
using num::TensorPtr;

void SmoothingConfig::validate() const {
  if (!(epsilon >= 0.0) || !(epsilon < 0.5)) {
    throw ContractError("SmoothingConfig: epsilon must lie in [0, 0.5)");
  }
  if (label_vocab_size < 2) {
    throw ContractError("SmoothingConfig: label vocabulary needs at least 2 classes");
  }
}

double neg_log_sigmoid(double x) {
  // -log sigma(x) = softplus(-x)
  if (x > 0.0) return std::log1p(std::exp(-x));
  return -x + std::log1p(std::exp(x));
}

LossValue bt_loss(double r_a, double r_b) {
  return {neg_log_sigmoid(r_a - r_b)};
}

LossValue generative_ce_loss(double z_a, double z_b, Label true_label) {
  const double d = true_label == Label::A ? z_a - z_b : z_b - z_a;
  return {neg_log_sigmoid(d)};
}

LossValue label_smoothed_loss(double z_a, double z_b, Label true_label,
                              const SmoothingConfig& cfg) {
  cfg.validate();
  const double d = true_label == Label::A ? z_a - z_b : z_b - z_a;
  // -[(1-eps) log p(true) + eps log p(other)]
  return {(1.0 - cfg.epsilon) * neg_log_sigmoid(d) + cfg.epsilon * neg_log_sigmoid(-d)};
}

double label_smoothed_loss_general(const std::vector<double>& logits,
                                   std::size_t true_index, const SmoothingConfig& cfg) {
  cfg.validate();
  if (logits.size() != cfg.label_vocab_size || true_index >= logits.size()) {
    throw ContractError("label_smoothed_loss_general: bad logits/true_index");
  }
  double mx = logits[0];
  for (double z : logits) mx = std::max(mx, z);
  double lse = 0.0;
  for (double z : logits) lse += std::exp(z - mx);
  lse = mx + std::log(lse);
  const double off = cfg.epsilon / static_cast<double>(cfg.label_vocab_size - 1);
  double loss = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double w = i == true_index ? 1.0 - cfg.epsilon : off;
    loss -= w * (logits[i] - lse);
  }
  return loss;
}

LossValue regularized_bt_form(double z_a, double z_b, double epsilon) {
  LossValue lv;
  lv.bt_term = neg_log_sigmoid(z_a - z_b);
  lv.reg_term = epsilon * (z_a - z_b);
  lv.value = lv.bt_term + lv.reg_term;
  lv.has_breakdown = true;
  return lv;
}

// ---------------------------------------------------------- pre-training

PretrainExample encode_pretrain(const lm::Vocab& v, std::string_view x,
                                std::string_view y_a, std::string_view y_b,
                                std::size_t max_len) {
  if (y_a.empty() || y_b.empty()) {
    throw ContractError("encode_pretrain: empty response rejected");
  }
  PretrainExample ex;
  auto& ids = ex.ids;
  ids.push_back(lm::tok::kBos);
  for (char c : x) ids.push_back(v.byte_to_id(c));
  ids.push_back(lm::tok::kSepRespA);
  const std::size_t first_start = ids.size() - 1;  // predicts y_a's first token
  for (char c : y_a) ids.push_back(v.byte_to_id(c));
  ids.push_back(lm::tok::kSepRespB);
  const std::size_t second_start = ids.size() - 1;
  for (char c : y_b) ids.push_back(v.byte_to_id(c));
  ids.push_back(lm::tok::kPad);  // closes the pair
  if (ids.size() > max_len) {
    throw TruncationError("encode_pretrain: length " + std::to_string(ids.size()) +
                          " exceeds context " + std::to_string(max_len));
  }
  for (std::size_t t = first_start; t + 1 < ids.size(); ++t) {
    ex.positions.push_back(t);
    ex.targets.push_back(ids[t + 1]);
    ex.is_first_response.push_back(t < second_start);
  }
  return ex;
}

TensorPtr pretrain_loss_node(Graph& g, const lm::ModelParams& p, std::string_view x,
                             std::string_view y_a, std::string_view y_b,
                             bool mask_first, bool mask_second) {
  lm::Vocab v;
  PretrainExample ex = encode_pretrain(v, x, y_a, y_b, p.cfg.context_len);
  std::vector<double> w(ex.positions.size(), 1.0);
  for (std::size_t i = 0; i < w.size(); ++i) {
    if ((ex.is_first_response[i] && mask_first) ||
        (!ex.is_first_response[i] && mask_second)) {
      w[i] = 0.0;
    }
  }
  TensorPtr logp = lm::forward_lm(g, p, ex.ids);
  return g.pick_nll(logp, ex.positions, ex.targets, w);
}

LossValue pretrain_loss(const lm::ModelParams& p, std::string_view x,
                        std::string_view y_a, std::string_view y_b) {
  Graph g(false);
  return {pretrain_loss_node(g, p, x, y_a, y_b)->data[0]};
}

namespace {

// Sum of target log-probs over [begin,end) positions of a sequence.
double span_nll(const lm::ModelParams& p, const std::vector<int>& ids,
                std::size_t pos_begin, std::size_t pos_end) {
  Graph g(false);
  TensorPtr logp = lm::forward_lm(g, p, ids);
  const std::size_t vsz = p.cfg.vocab_size;
  double nll = 0.0;
  for (std::size_t t = pos_begin; t < pos_end; ++t) {
    nll -= logp->data[t * vsz + static_cast<std::size_t>(ids[t + 1])];
  }
  return nll;
}

}  // namespace

double nll_first_response(const lm::ModelParams& p, std::string_view x,
                          std::string_view y_a) {
  lm::Vocab v;
  std::vector<int> ids{lm::tok::kBos};
  for (char c : x) ids.push_back(v.byte_to_id(c));
  ids.push_back(lm::tok::kSepRespA);
  const std::size_t start = ids.size() - 1;
  for (char c : y_a) ids.push_back(v.byte_to_id(c));
  ids.push_back(lm::tok::kSepRespB);
  if (ids.size() > p.cfg.context_len) {
    throw TruncationError("nll_first_response: sequence exceeds context");
  }
  return span_nll(p, ids, start, ids.size() - 1);
}

double nll_second_response(const lm::ModelParams& p, std::string_view x,
                           std::string_view y_a, std::string_view y_b) {
  lm::Vocab v;
  std::vector<int> ids{lm::tok::kBos};
  for (char c : x) ids.push_back(v.byte_to_id(c));
  ids.push_back(lm::tok::kSepRespA);
  for (char c : y_a) ids.push_back(v.byte_to_id(c));
  ids.push_back(lm::tok::kSepRespB);
  const std::size_t start = ids.size() - 1;
  for (char c : y_b) ids.push_back(v.byte_to_id(c));
  ids.push_back(lm::tok::kPad);
  if (ids.size() > p.cfg.context_len) {
    throw TruncationError("nll_second_response: sequence exceeds context");
  }
  return span_nll(p, ids, start, ids.size() - 1);
}

// ----------------------------------------------------------- fine-tuning

namespace {

TensorPtr smoothed_loss_from_logits(Graph& g, const TensorPtr& z, Label true_label,
                                    double epsilon) {
  TensorPtr lp = g.softmax_logprob(z, 0);
  std::vector<double> w(2);
  const std::size_t ti = true_label == Label::A ? 0 : 1;
  w[ti] = -(1.0 - epsilon);
  w[1 - ti] = -epsilon;
  return g.weighted_sum(lp, std::move(w));
}

}  // namespace

TensorPtr finetune_loss_node(Graph& g, const lm::ModelParams& p,
                             const data::PreferenceRecord& rec,
                             const SmoothingConfig& cfg, bool augment_swap,
                             std::string_view prompt) {
  cfg.validate();
  if (!rec.label) {
    throw ContractError("finetune_loss: record " + rec.id + " has no label");
  }
  lm::Vocab v;
  const lm::JudgeInput s = lm::encode_judge(v, prompt, rec.input, rec.response_a,
                                            rec.response_b, false, p.cfg.context_len);
  TensorPtr loss = smoothed_loss_from_logits(g, lm::label_logits_node(g, p, s),
                                             *rec.label, cfg.epsilon);
  if (!augment_swap) return loss;
  // transposed encoding: positions swapped, so the correct label flips
  const lm::JudgeInput st = lm::encode_judge(v, prompt, rec.input, rec.response_a,
                                             rec.response_b, true, p.cfg.context_len);
  TensorPtr loss_t = smoothed_loss_from_logits(g, lm::label_logits_node(g, p, st),
                                               data::label_flip(*rec.label), cfg.epsilon);
  return g.scale(g.add(loss, loss_t), 0.5);
}

LossValue finetune_loss(const lm::ModelParams& p, const data::PreferenceRecord& rec,
                        const SmoothingConfig& cfg, bool augment_swap,
                        std::string_view prompt) {
  Graph g(false);
  return {finetune_loss_node(g, p, rec, cfg, augment_swap, prompt)->data[0]};
}

}  // namespace gram::obj
