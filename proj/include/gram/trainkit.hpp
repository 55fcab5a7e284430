#pragma once

#include <map>
#include <string>
#include <vector>

#include "gram/datagen.hpp"
#include "gram/model.hpp"
#include "gram/objectives.hpp"

namespace gram::train {

// Every training/eval hyperparameter; serializable as a flat key=value
// config file (see to_kv / from_kv for key names).
struct RunConfig {
  lm::ModelConfig arch;
  double lr_stage1 = 1e-3;
  double lr_stage2 = 3e-4;
  std::size_t epochs_stage1 = 1;
  std::size_t epochs_stage2 = 2;
  std::size_t batch_size = 32;
  double epsilon = 0.1;
  std::uint64_t seed = 1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.0;
  // gram | generative_baseline | discriminative_baseline | gram_v1..v4
  std::string method = "gram";
  bool augment_swap = true;
  double divergence_factor = 10.0;
  std::size_t max_gen_len = 24;

  void validate() const;
  std::string to_kv() const;
  void apply_kv(const std::string& key, const std::string& value);
  static RunConfig from_kv_text(const std::string& text);
  static RunConfig from_kv_file(const std::string& path);
  std::uint64_t config_hash() const;
};

struct AdamState {
  std::vector<std::vector<double>> m, v;
  std::size_t step = 0;

  static AdamState init(const lm::ModelParams& params);
};

// Adam with bias correction over the gradients currently stored in the
// parameter tensors; clears gradients afterwards. Deterministic.
void optimizer_step(lm::ModelParams& params, AdamState& state, const RunConfig& cfg,
                    double lr);

struct TrainReport {
  std::vector<double> losses;  // mean loss per optimizer step
  std::string checkpoint_path;
  std::map<std::string, double> metrics;
  double wall_clock_sec = 0.0;
};

// Stage 1: response-pair generation pre-training on the unlabeled split,
// with random order-swap augmentation. mask_first/mask_second drop one
// response's loss terms (ablation variants v3/v4).
TrainReport train_stage1(const RunConfig& cfg,
                         const std::vector<data::PreferenceRecord>& unlabeled,
                         lm::ModelParams& params, const std::string& checkpoint_path = "",
                         bool mask_first = false, bool mask_second = false);

// Stage 2: label-smoothed preference fine-tuning on a labeled split.
TrainReport train_stage2(const RunConfig& cfg,
                         const std::vector<data::PreferenceRecord>& labeled,
                         lm::ModelParams& params, const std::string& checkpoint_path = "");

// Scalar-head Bradley-Terry baseline.
TrainReport train_discriminative(const RunConfig& cfg,
                                 const std::vector<data::PreferenceRecord>& labeled,
                                 lm::ModelParams& params,
                                 const std::string& checkpoint_path = "");

// Pairwise accuracy per requested split ("test-id", "test-ood", ...);
// discriminative=true scores with the scalar head.
std::map<std::string, double> evaluate(const lm::ModelParams& params,
                                       const data::Corpus& corpus,
                                       const std::vector<std::string>& splits,
                                       bool discriminative = false);

struct AblationRow {
  std::string variant;
  double id_accuracy = 0.0;
  double ood_accuracy = 0.0;
  std::uint64_t config_hash = 0;
};

// Trains GRAM and its v1..v4 variants with shared data and seed.
std::vector<AblationRow> run_ablation_suite(const RunConfig& base,
                                            const data::Corpus& corpus);

}  // namespace gram::train
