#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gram/record.hpp"
#include "gram/scoring.hpp"

namespace gram::rank {

enum class Verdict { APreferred, BPreferred, Tie };

// Strict comparison with exact-equality tie; both scores must share a kind.
Verdict rank_pair(const score::RewardScore& a, const score::RewardScore& b);

struct CandidateList {
  std::string input;
  std::vector<std::string> responses;
  // Ground-truth utilities, evaluation only (may be empty).
  std::vector<double> oracle_utilities;
};

// Verdict for responses (i, j); Tie on exact equality.
using Comparator = std::function<Verdict(std::size_t, std::size_t)>;

// Comparator backed by the order-swapped generative reward.
Comparator model_comparator(const lm::ModelParams& p, std::string_view prompt,
                            const CandidateList& list);
// Comparator induced by real-valued utilities (a total order).
Comparator utility_comparator(const std::vector<double>& utilities);

// ----------------------------------------------------------- evaluation

struct PairwiseOutcome {
  double accuracy = 0.0;  // ties score 0.5
  std::vector<Verdict> verdicts;
};

// Generative protocol: each response scored with the other as reference.
PairwiseOutcome pairwise_eval(const lm::ModelParams& p,
                              const std::vector<data::PreferenceRecord>& records,
                              std::string_view prompt);
// Scalar-head protocol.
PairwiseOutcome pairwise_eval_discriminative(
    const lm::ModelParams& p, const std::vector<data::PreferenceRecord>& records);

// ------------------------------------------------------------- listwise

struct ListwiseResult {
  std::vector<double> scores;
  std::size_t ref_index = 0;
  bool degenerate = false;  // k == 1
};

// Reference drawn from the seeded RNG gets the fixed score 0.5; all other
// responses are scored against it.
ListwiseResult listwise_scores(const lm::ModelParams& p, std::string_view prompt,
                               const CandidateList& list, std::uint64_t seed);

// Champion scan from index 0; ties keep the incumbent. Returns 0-based index.
std::size_t best_linear(const CandidateList& list, const Comparator& cmp);
// Balanced single-elimination bracket; ties advance the lower index.
std::size_t best_tournament(const CandidateList& list, const Comparator& cmp);

// KL_BoN = ln k - (k-1)/k.
double bon_kl(long k);

// k independent nucleus samples from the policy for input x; deterministic
// under seed. Length failures are retried a bounded number of times.
CandidateList bon_sample(const lm::ModelParams& policy, std::string_view x, std::size_t k,
                         double top_p, double temperature, std::uint64_t seed,
                         std::size_t max_new_tokens = 24);

}  // namespace gram::rank
