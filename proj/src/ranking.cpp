#include "gram/ranking.hpp"

#include <cmath>
#include <random>

namespace gram::rank {

using data::Label;
using data::PreferenceRecord;
using score::RewardScore;

Verdict rank_pair(const RewardScore& a, const RewardScore& b) {
  if (a.kind != b.kind) {
    throw ContractError("rank_pair: cannot compare scores of different kinds");
  }
  if (a.value > b.value) return Verdict::APreferred;
  if (b.value > a.value) return Verdict::BPreferred;
  return Verdict::Tie;
}

Comparator model_comparator(const lm::ModelParams& p, std::string_view prompt,
                            const CandidateList& list) {
  // Each comparison scores i with j as reference and vice versa.
  const std::string c(prompt);
  const std::string x = list.input;
  const auto responses = list.responses;
  return [&, c, x, responses](std::size_t i, std::size_t j) {
    RewardScore ri = score::generative_reward(p, c, x, responses[i], responses[j]);
    RewardScore rj = score::generative_reward(p, c, x, responses[j], responses[i]);
    return rank_pair(ri, rj);
  };
}

Comparator utility_comparator(const std::vector<double>& utilities) {
  return [utilities](std::size_t i, std::size_t j) {
    if (utilities[i] > utilities[j]) return Verdict::APreferred;
    if (utilities[j] > utilities[i]) return Verdict::BPreferred;
    return Verdict::Tie;
  };
}

namespace {

double verdict_credit(Verdict v, Label truth) {
  if (v == Verdict::Tie) return 0.5;
  const bool said_a = v == Verdict::APreferred;
  return said_a == (truth == Label::A) ? 1.0 : 0.0;
}

}  // namespace

PairwiseOutcome pairwise_eval(const lm::ModelParams& p,
                              const std::vector<PreferenceRecord>& records,
                              std::string_view prompt) {
  if (records.empty()) throw ContractError("pairwise_eval: empty dataset");
  PairwiseOutcome out;
  double credit = 0.0;
  for (const auto& rec : records) {
    if (!rec.label) throw ContractError("pairwise_eval: unlabeled record " + rec.id);
    // r(y_b) with y_a as reference equals 1 - r(y_a) by complementarity.
    RewardScore ra =
        score::generative_reward(p, prompt, rec.input, rec.response_a, rec.response_b);
    RewardScore rb = ra;
    rb.value = 1.0 - ra.value;
    rb.ref_response = rec.response_a;
    const Verdict v = rank_pair(ra, rb);
    out.verdicts.push_back(v);
    credit += verdict_credit(v, *rec.label);
  }
  out.accuracy = credit / static_cast<double>(records.size());
  return out;
}

PairwiseOutcome pairwise_eval_discriminative(const lm::ModelParams& p,
                                             const std::vector<PreferenceRecord>& records) {
  if (records.empty()) throw ContractError("pairwise_eval: empty dataset");
  PairwiseOutcome out;
  double credit = 0.0;
  for (const auto& rec : records) {
    if (!rec.label) throw ContractError("pairwise_eval: unlabeled record " + rec.id);
    RewardScore ra = score::discriminative_reward(p, rec.input, rec.response_a);
    RewardScore rb = score::discriminative_reward(p, rec.input, rec.response_b);
    const Verdict v = rank_pair(ra, rb);
    out.verdicts.push_back(v);
    credit += verdict_credit(v, *rec.label);
  }
  out.accuracy = credit / static_cast<double>(records.size());
  return out;
}

ListwiseResult listwise_scores(const lm::ModelParams& p, std::string_view prompt,
                               const CandidateList& list, std::uint64_t seed) {
  const std::size_t k = list.responses.size();
  if (k == 0) throw ContractError("listwise_scores: empty candidate list");
  ListwiseResult res;
  if (k == 1) {
    res.scores = {0.5};
    res.degenerate = true;
    return res;
  }
  std::mt19937_64 rng(seed);
  res.ref_index = std::uniform_int_distribution<std::size_t>(0, k - 1)(rng);
  const std::string& y_ref = list.responses[res.ref_index];
  res.scores.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    res.scores[i] = i == res.ref_index
                        ? 0.5
                        : score::generative_reward(p, prompt, list.input,
                                                   list.responses[i], y_ref)
                              .value;
  }
  return res;
}

std::size_t best_linear(const CandidateList& list, const Comparator& cmp) {
  if (list.responses.empty()) throw ContractError("best_linear: empty candidate list");
  std::size_t champion = 0;
  for (std::size_t i = 1; i < list.responses.size(); ++i) {
    if (cmp(champion, i) == Verdict::BPreferred) champion = i;
  }
  return champion;
}

std::size_t best_tournament(const CandidateList& list, const Comparator& cmp) {
  if (list.responses.empty()) throw ContractError("best_tournament: empty candidate list");
  std::vector<std::size_t> alive(list.responses.size());
  for (std::size_t i = 0; i < alive.size(); ++i) alive[i] = i;
  while (alive.size() > 1) {
    std::vector<std::size_t> next;
    for (std::size_t i = 0; i + 1 < alive.size(); i += 2) {
      const std::size_t a = alive[i], b = alive[i + 1];
      const Verdict v = cmp(a, b);
      // ties advance the lower index
      next.push_back(v == Verdict::BPreferred ? b : std::min(a, b));
    }
    if (alive.size() % 2 == 1) next.push_back(alive.back());
    alive = std::move(next);
  }
  return alive[0];
}

double bon_kl(long k) {
  if (k < 1) throw ContractError("bon_kl: k must be >= 1");
  const double kd = static_cast<double>(k);
  return std::log(kd) - (kd - 1.0) / kd;
}

CandidateList bon_sample(const lm::ModelParams& policy, std::string_view x, std::size_t k,
                         double top_p, double temperature, std::uint64_t seed,
                         std::size_t max_new_tokens) {
  if (k < 1) throw ContractError("bon_sample: k must be >= 1");
  lm::SampleConfig cfg;
  cfg.top_p = top_p;
  cfg.temperature = temperature;
  cfg.max_new_tokens = max_new_tokens;
  lm::Vocab v;
  std::mt19937_64 rng(seed);
  CandidateList list;
  list.input = std::string(x);
  constexpr int kMaxRetries = 5;
  for (std::size_t i = 0; i < k; ++i) {
    std::string y;
    int attempts = 0;
    for (;;) {
      try {
        y = lm::sample_response(policy, v, x, cfg, rng);
        if (!y.empty()) break;
      } catch (const GenerationError&) {
        // fall through to retry
      }
      if (++attempts >= kMaxRetries) {
        throw GenerationError("bon_sample: no valid sample for input after retries");
      }
    }
    list.responses.push_back(std::move(y));
  }
  return list;
}

}  // namespace gram::rank
