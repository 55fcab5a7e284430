#include "gram/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "gram/util.hpp"

namespace gram::lm {

using num::Graph;
using num::make_tensor;
using num::TensorPtr;

std::vector<std::pair<std::string, TensorPtr>> ModelParams::named() const {
  std::vector<std::pair<std::string, TensorPtr>> out;
  out.emplace_back("tok_embed", tok_embed);
  out.emplace_back("pos_embed", pos_embed);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string pre = "layer" + std::to_string(l) + ".";
    out.emplace_back(pre + "attn_gain", layers[l].attn_gain);
    out.emplace_back(pre + "wq", layers[l].wq);
    out.emplace_back(pre + "wk", layers[l].wk);
    out.emplace_back(pre + "wv", layers[l].wv);
    out.emplace_back(pre + "wo", layers[l].wo);
    out.emplace_back(pre + "mlp_gain", layers[l].mlp_gain);
    out.emplace_back(pre + "w1", layers[l].w1);
    out.emplace_back(pre + "w2", layers[l].w2);
  }
  out.emplace_back("final_gain", final_gain);
  out.emplace_back("lm_head", lm_head);
  out.emplace_back("scalar_head", scalar_head);
  return out;
}

ModelParams ModelParams::clone() const {
  ModelParams c;
  c.cfg = cfg;
  auto dup = [](const TensorPtr& t) {
    auto n = std::make_shared<num::Tensor>(*t);
    n->grad.clear();
    return n;
  };
  c.tok_embed = dup(tok_embed);
  c.pos_embed = dup(pos_embed);
  for (const auto& l : layers) {
    c.layers.push_back({dup(l.attn_gain), dup(l.wq), dup(l.wk), dup(l.wv), dup(l.wo),
                        dup(l.mlp_gain), dup(l.w1), dup(l.w2)});
  }
  c.final_gain = dup(final_gain);
  c.lm_head = dup(lm_head);
  c.scalar_head = dup(scalar_head);
  return c;
}

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 0.02);
  const std::size_t d = cfg.d_model;

  auto randn = [&](std::vector<std::size_t> shape, double scale) {
    auto t = make_tensor(std::move(shape), true);
    for (double& v : t->data) v = dist(rng) * scale;
    return t;
  };
  auto ones = [&](std::size_t n) {
    auto t = make_tensor({n}, true);
    std::fill(t->data.begin(), t->data.end(), 1.0);
    return t;
  };
  auto zeros = [&](std::vector<std::size_t> shape) {
    return make_tensor(std::move(shape), true);
  };

  ModelParams p;
  p.cfg = cfg;
  p.tok_embed = randn({cfg.vocab_size, d}, 1.0);
  p.pos_embed = randn({cfg.context_len, d}, 1.0);
  // residual projections scaled down with depth
  const double res = 1.0 / std::sqrt(2.0 * static_cast<double>(cfg.n_layers));
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    LayerParams lp;
    lp.attn_gain = ones(d);
    lp.wq = randn({d, d}, 1.0);
    lp.wk = randn({d, d}, 1.0);
    lp.wv = randn({d, d}, 1.0);
    lp.wo = randn({d, d}, res);
    lp.mlp_gain = ones(d);
    lp.w1 = randn({d, 4 * d}, 1.0);
    lp.w2 = randn({4 * d, d}, res);
    p.layers.push_back(std::move(lp));
  }
  p.final_gain = ones(d);
  p.lm_head = zeros({d, cfg.vocab_size});
  p.scalar_head = zeros({d});
  return p;
}

namespace {

void check_ids(const ModelParams& p, const std::vector<int>& ids) {
  if (ids.empty()) throw ContractError("forward: empty token sequence");
  if (ids.size() > p.cfg.context_len) {
    throw TruncationError("forward: sequence length " + std::to_string(ids.size()) +
                          " exceeds context " + std::to_string(p.cfg.context_len));
  }
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= p.cfg.vocab_size) {
      throw VocabError("forward: unknown token id " + std::to_string(id));
    }
  }
}

}  // namespace

TensorPtr forward_hidden(Graph& g, const ModelParams& p, const std::vector<int>& ids) {
  check_ids(p, ids);
  std::vector<int> pos(ids.size());
  std::iota(pos.begin(), pos.end(), 0);
  TensorPtr h = g.add(g.gather_rows(p.tok_embed, ids), g.gather_rows(p.pos_embed, pos));
  for (const auto& l : p.layers) {
    TensorPtr a = g.rmsnorm(h, l.attn_gain);
    TensorPtr att = g.causal_self_attention(g.matmul(a, l.wq), g.matmul(a, l.wk),
                                            g.matmul(a, l.wv), p.cfg.n_heads);
    h = g.add(h, g.matmul(att, l.wo));
    TensorPtr m = g.rmsnorm(h, l.mlp_gain);
    h = g.add(h, g.matmul(g.gelu(g.matmul(m, l.w1)), l.w2));
  }
  return g.rmsnorm(h, p.final_gain);
}

TensorPtr forward_lm(Graph& g, const ModelParams& p, const std::vector<int>& ids) {
  return g.softmax_logprob(g.matmul(forward_hidden(g, p, ids), p.lm_head), 1);
}

TensorPtr label_logits_node(Graph& g, const ModelParams& p, const JudgeInput& s) {
  TensorPtr hidden = forward_hidden(g, p, s.ids);
  TensorPtr logits = g.matmul(hidden, p.lm_head);
  const std::size_t v = p.cfg.vocab_size;
  const std::size_t base = s.slot() * v;
  return g.gather(logits, {base + tok::kLabelA, base + tok::kLabelB});
}

std::pair<double, double> label_logits(const ModelParams& p, const JudgeInput& s) {
  Graph g(false);
  TensorPtr z = label_logits_node(g, p, s);
  return {z->data[0], z->data[1]};
}

std::vector<int> encode_scalar_input(const Vocab& v, std::string_view x,
                                     std::string_view y, std::size_t max_len) {
  std::vector<int> ids{tok::kBos};
  for (char c : x) ids.push_back(v.byte_to_id(c));
  ids.push_back(tok::kSepRespA);
  for (char c : y) ids.push_back(v.byte_to_id(c));
  if (ids.size() > max_len) {
    throw TruncationError("encode_scalar_input: length " + std::to_string(ids.size()) +
                          " exceeds context " + std::to_string(max_len));
  }
  return ids;
}

TensorPtr forward_scalar_node(Graph& g, const ModelParams& p, std::string_view x,
                              std::string_view y) {
  Vocab v;
  const std::vector<int> ids = encode_scalar_input(v, x, y, p.cfg.context_len);
  TensorPtr hidden = forward_hidden(g, p, ids);
  return g.dotv(g.row(hidden, ids.size() - 1), p.scalar_head);
}

double forward_scalar(const ModelParams& p, std::string_view x, std::string_view y) {
  Graph g(false);
  return forward_scalar_node(g, p, x, y)->data[0];
}

// ------------------------------------------------------------- sampling

namespace {

std::vector<double> next_token_logits(const ModelParams& p, const std::vector<int>& ids) {
  Graph g(false);
  TensorPtr hidden = forward_hidden(g, p, ids);
  TensorPtr logits = g.matmul(hidden, p.lm_head);
  const std::size_t v = p.cfg.vocab_size;
  const double* last = logits->data.data() + (ids.size() - 1) * v;
  return std::vector<double>(last, last + v);
}

void ban_non_text(std::vector<double>& logits, int terminator) {
  for (std::size_t i = 0; i < static_cast<std::size_t>(tok::kNewline); ++i) {
    if (static_cast<int>(i) != terminator) logits[i] = -1e300;
  }
}

}  // namespace

std::vector<int> sample_tokens(const ModelParams& p, const std::vector<int>& prompt_ids,
                               const SampleConfig& cfg, std::mt19937_64& rng) {
  if (cfg.top_p <= 0.0 || cfg.top_p > 1.0) throw ContractError("sample: top_p out of (0,1]");
  if (cfg.temperature <= 0.0) throw ContractError("sample: temperature must be positive");
  std::vector<int> ids = prompt_ids;
  std::vector<int> out;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (std::size_t step = 0; step < cfg.max_new_tokens; ++step) {
    if (ids.size() >= p.cfg.context_len) {
      throw GenerationError("sample: prompt plus generation exceeds context window");
    }
    std::vector<double> logits = next_token_logits(p, ids);
    if (cfg.text_only) ban_non_text(logits, cfg.terminator);
    const std::size_t v = logits.size();
    double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> prob(v);
    double z = 0.0;
    for (std::size_t i = 0; i < v; ++i) {
      prob[i] = std::exp((logits[i] - mx) / cfg.temperature);
      z += prob[i];
    }
    for (double& q : prob) q /= z;
    // nucleus: smallest prefix of the sorted distribution with mass >= top_p
    std::vector<std::size_t> order(v);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return prob[a] > prob[b]; });
    double mass = 0.0;
    std::size_t keep = 0;
    while (keep < v) {
      mass += prob[order[keep]];
      ++keep;
      if (mass >= cfg.top_p) break;
    }
    const double r = unif(rng) * mass;
    double acc = 0.0;
    int chosen = static_cast<int>(order[keep - 1]);
    for (std::size_t i = 0; i < keep; ++i) {
      acc += prob[order[i]];
      if (r <= acc) {
        chosen = static_cast<int>(order[i]);
        break;
      }
    }
    if (chosen == cfg.terminator) return out;
    out.push_back(chosen);
    ids.push_back(chosen);
  }
  return out;
}

std::vector<int> greedy_tokens(const ModelParams& p, const std::vector<int>& prompt_ids,
                               const SampleConfig& cfg) {
  std::vector<int> ids = prompt_ids;
  std::vector<int> out;
  for (std::size_t step = 0; step < cfg.max_new_tokens; ++step) {
    if (ids.size() >= p.cfg.context_len) {
      throw GenerationError("greedy: prompt plus generation exceeds context window");
    }
    std::vector<double> logits = next_token_logits(p, ids);
    if (cfg.text_only) ban_non_text(logits, cfg.terminator);
    const int chosen = static_cast<int>(
        std::max_element(logits.begin(), logits.end()) - logits.begin());
    if (chosen == cfg.terminator) return out;
    out.push_back(chosen);
    ids.push_back(chosen);
  }
  return out;
}

namespace {
std::vector<int> response_prompt(const Vocab& v, std::string_view x) {
  std::vector<int> ids{tok::kBos};
  for (char c : x) ids.push_back(v.byte_to_id(c));
  ids.push_back(tok::kSepRespA);
  return ids;
}
}  // namespace

std::string sample_response(const ModelParams& p, const Vocab& v, std::string_view x,
                            const SampleConfig& cfg, std::mt19937_64& rng) {
  return v.decode(sample_tokens(p, response_prompt(v, x), cfg, rng));
}

std::string greedy_response(const ModelParams& p, const Vocab& v, std::string_view x,
                            const SampleConfig& cfg) {
  return v.decode(greedy_tokens(p, response_prompt(v, x), cfg));
}

// ----------------------------------------------------------- checkpoints

namespace {
constexpr char kMagic[8] = {'G', 'R', 'A', 'M', 'C', 'K', 'P', '1'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
std::uint32_t get_u32(const std::string& s, std::size_t& off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(s[off++])) << (8 * i);
  return v;
}
}  // namespace

void save_checkpoint(const ModelParams& p, const std::string& path) {
  std::string buf(kMagic, 8);
  put_u32(buf, kVersion);
  put_u32(buf, static_cast<std::uint32_t>(p.cfg.n_layers));
  put_u32(buf, static_cast<std::uint32_t>(p.cfg.n_heads));
  put_u32(buf, static_cast<std::uint32_t>(p.cfg.d_model));
  put_u32(buf, static_cast<std::uint32_t>(p.cfg.context_len));
  put_u32(buf, static_cast<std::uint32_t>(p.cfg.vocab_size));
  for (const auto& [name, t] : p.named()) {
    static_assert(sizeof(double) == 8);
    const char* raw = reinterpret_cast<const char*>(t->data.data());
    buf.append(raw, raw + t->data.size() * 8);
  }
  util::write_file(path, buf);

  std::ostringstream man;
  man << "format gram-checkpoint v" << kVersion << "\n";
  man << "arch layers=" << p.cfg.n_layers << " heads=" << p.cfg.n_heads
      << " d_model=" << p.cfg.d_model << " context=" << p.cfg.context_len
      << " vocab=" << p.cfg.vocab_size << "\n";
  for (const auto& [name, t] : p.named()) {
    man << "tensor " << name;
    for (std::size_t d : t->shape) man << " " << d;
    man << "\n";
  }
  man << "fnv1a64 " << util::to_hex(util::fnv1a64(buf)) << "\n";
  util::write_file(path + ".manifest.txt", man.str());
}

ModelParams load_checkpoint(const std::string& path) {
  const std::string buf = util::read_file(path);
  if (buf.size() < 8 + 6 * 4 || std::memcmp(buf.data(), kMagic, 8) != 0) {
    throw IntegrityError("checkpoint: bad magic in " + path);
  }
  // verify against the sidecar manifest when present
  const std::string manifest_path = path + ".manifest.txt";
  if (std::filesystem::exists(manifest_path)) {
    const std::string man = util::read_file(manifest_path);
    const auto tag = man.rfind("fnv1a64 ");
    if (tag != std::string::npos) {
      std::string recorded = man.substr(tag + 8);
      if (const auto nl = recorded.find('\n'); nl != std::string::npos) {
        recorded.resize(nl);
      }
      if (recorded != util::to_hex(util::fnv1a64(buf))) {
        throw IntegrityError("checkpoint: content hash mismatch for " + path);
      }
    }
  }
  std::size_t off = 8;
  if (get_u32(buf, off) != kVersion) {
    throw IntegrityError("checkpoint: unsupported version in " + path);
  }
  ModelConfig cfg;
  cfg.n_layers = get_u32(buf, off);
  cfg.n_heads = get_u32(buf, off);
  cfg.d_model = get_u32(buf, off);
  cfg.context_len = get_u32(buf, off);
  cfg.vocab_size = get_u32(buf, off);
  ModelParams p = init_params(cfg, 0);
  for (const auto& [name, t] : p.named()) {
    const std::size_t bytes = t->data.size() * 8;
    if (off + bytes > buf.size()) {
      throw IntegrityError("checkpoint: truncated tensor " + name + " in " + path);
    }
    std::memcpy(t->data.data(), buf.data() + off, bytes);
    off += bytes;
  }
  if (off != buf.size()) {
    throw IntegrityError("checkpoint: trailing bytes in " + path);
  }
  return p;
}

}  // namespace gram::lm
