#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "gram/tensor.hpp"
#include "gram/vocab.hpp"

namespace gram::lm {

struct ModelConfig {
  std::size_t n_layers = 2;
  std::size_t n_heads = 2;
  std::size_t d_model = 64;
  std::size_t context_len = 256;
  std::size_t vocab_size = Vocab::kSize;

  bool operator==(const ModelConfig&) const = default;
};

struct LayerParams {
  num::TensorPtr attn_gain, wq, wk, wv, wo;
  num::TensorPtr mlp_gain, w1, w2;
};

// All learnable arrays of the tiny transformer plus both heads. The same
// container serves pre-training, fine-tuning and policy roles.
struct ModelParams {
  ModelConfig cfg;
  num::TensorPtr tok_embed;  // [vocab, d]
  num::TensorPtr pos_embed;  // [T, d]
  std::vector<LayerParams> layers;
  num::TensorPtr final_gain;  // [d]
  num::TensorPtr lm_head;     // [d, vocab], zero-initialized
  num::TensorPtr scalar_head; // [d], zero-initialized

  // Parameters in declared (checkpoint) order.
  std::vector<std::pair<std::string, num::TensorPtr>> named() const;
  ModelParams clone() const;
};

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed);

// Final-norm hidden states [T,d]; the trunk is shared by both heads.
num::TensorPtr forward_hidden(num::Graph& g, const ModelParams& p,
                              const std::vector<int>& ids);

// Per-position log-probabilities over the full vocabulary [T,vocab].
num::TensorPtr forward_lm(num::Graph& g, const ModelParams& p,
                          const std::vector<int>& ids);

// Pre-softmax logits (Z_a, Z_b) for the two label tokens at the
// preference slot, as a length-2 tensor (differentiable).
num::TensorPtr label_logits_node(num::Graph& g, const ModelParams& p,
                                 const JudgeInput& s);
std::pair<double, double> label_logits(const ModelParams& p, const JudgeInput& s);

// Scalar-head score r(x, y) read at the final position (differentiable node
// and plain-value variants).
num::TensorPtr forward_scalar_node(num::Graph& g, const ModelParams& p,
                                   std::string_view x, std::string_view y);
double forward_scalar(const ModelParams& p, std::string_view x, std::string_view y);

// Token ids [BOS, x, SEP_RESP_A, y] used by the scalar head.
std::vector<int> encode_scalar_input(const Vocab& v, std::string_view x,
                                     std::string_view y, std::size_t max_len);

// ------------------------------------------------------------- sampling

struct SampleConfig {
  double top_p = 0.95;
  double temperature = 0.75;
  std::size_t max_new_tokens = 24;
  int terminator = tok::kSepRespB;
  // Restrict sampling to text tokens (+ terminator); specials stay banned.
  bool text_only = true;
};

// Nucleus sampling continuation of prompt_ids; deterministic under rng state.
std::vector<int> sample_tokens(const ModelParams& p, const std::vector<int>& prompt_ids,
                               const SampleConfig& cfg, std::mt19937_64& rng);
// Greedy argmax decode (temperature-0 limit).
std::vector<int> greedy_tokens(const ModelParams& p, const std::vector<int>& prompt_ids,
                               const SampleConfig& cfg);

// Decodes a response for input x: prompt [BOS, x, SEP_RESP_A], strip the
// terminator, detokenize.
std::string sample_response(const ModelParams& p, const Vocab& v, std::string_view x,
                            const SampleConfig& cfg, std::mt19937_64& rng);
std::string greedy_response(const ModelParams& p, const Vocab& v, std::string_view x,
                            const SampleConfig& cfg);

// ----------------------------------------------------------- checkpoints

// Versioned little-endian binary plus a sidecar text manifest
// (<path>.manifest.txt) listing shapes and the file's content hash.
void save_checkpoint(const ModelParams& p, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

}  // namespace gram::lm
