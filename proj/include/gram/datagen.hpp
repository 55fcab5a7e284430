#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gram/record.hpp"

namespace gram::data {

// Latent linear utility over response n-gram features; the ground-truth
// oracle behind every synthetic label.
struct UtilitySpec {
  std::string alphabet = "abcdefgh";
  std::vector<double> unigram;  // one weight per alphabet letter
  std::vector<double> bigram;   // row-major |A| x |A|
  double length_weight = 0.0;
  double bias = 0.0;
  std::string domain = "qa-like";

  enum class Noise { Deterministic, BradleyTerry };
  Noise noise = Noise::Deterministic;
  double beta = 2.0;    // BT-mode sharpness
  double margin = 0.5;  // deterministic-mode margin delta

  // Text-generator shape. Shifting these on the OOD spec adds a covariate
  // shift on top of the utility-weight shift.
  std::size_t topic_len = 3;      // letters in the input's topic suffix
  std::size_t resp_len_min = 6;
  std::size_t resp_len_max = 14;
  double resp_noise = 0.7;        // per-response logit noise scale
  double tilt_scale = 0.5;        // per-input letter-preference spread

  static UtilitySpec random(std::uint64_t seed, std::string domain);
  // Weights correlated rho with base; same alphabet, fresh domain tag, and a
  // shifted text generator (longer topics and responses) so the OOD split
  // differs in both labels and surface form.
  static UtilitySpec correlated(const UtilitySpec& base, double rho, std::uint64_t seed,
                                std::string domain);
};

double oracle_utility(const UtilitySpec& spec, std::string_view x, std::string_view y);

struct SplitSizes {
  std::size_t pretrain = 20000;
  std::size_t finetune = 10000;
  std::size_t adapt = 0;
  std::size_t test_id = 2000;
  std::size_t test_ood = 2000;
};

struct Corpus {
  std::vector<PreferenceRecord> records;

  std::vector<PreferenceRecord> split(std::string_view name) const;
};

// Pure function of (specs, sizes, seed). ID splits labeled by spec_id, the
// OOD test split by spec_ood; the pretrain split is ID-distributed with
// labels dropped. Passing unlabeled_spec widens the pretrain pool: records
// alternate between spec_id and unlabeled_spec, so the unlabeled text covers
// both surface forms (no label ever leaks, the split stays unlabeled).
Corpus generate_corpus(const UtilitySpec& spec_id, const UtilitySpec& spec_ood,
                       const SplitSizes& sizes, std::uint64_t seed,
                       const UtilitySpec* unlabeled_spec = nullptr);

// One JSON object per line; unknown fields and duplicate ids rejected;
// labeled splits must carry labels.
std::vector<PreferenceRecord> read_jsonl(const std::string& path);
void write_jsonl(const std::string& path, const std::vector<PreferenceRecord>& records);

// Writes one JSONL file per split plus manifest.json (specs, sizes, seed,
// per-file content hashes). Returns split -> file path.
std::map<std::string, std::string> write_corpus(const std::string& dir, const Corpus& corpus,
                                                const UtilitySpec& spec_id,
                                                const UtilitySpec& spec_ood,
                                                const SplitSizes& sizes, std::uint64_t seed);

}  // namespace gram::data
