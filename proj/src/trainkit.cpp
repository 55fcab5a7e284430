#include "gram/trainkit.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <sstream>

#include "gram/ranking.hpp"
#include "gram/util.hpp"

namespace gram::train {

using data::PreferenceRecord;
using lm::ModelParams;
using num::Graph;
using num::TensorPtr;

void RunConfig::validate() const {
  if (lr_stage1 <= 0.0 || lr_stage2 <= 0.0) throw ContractError("config: learning rates must be positive");
  if (!(epsilon >= 0.0 && epsilon < 0.5)) throw ContractError("config: epsilon must lie in [0, 0.5)");
  if (batch_size == 0) throw ContractError("config: batch_size must be positive");
}

std::string RunConfig::to_kv() const {
  std::ostringstream s;
  s.precision(17);
  s << "n_layers = " << arch.n_layers << "\n";
  s << "n_heads = " << arch.n_heads << "\n";
  s << "d_model = " << arch.d_model << "\n";
  s << "context_len = " << arch.context_len << "\n";
  s << "lr_stage1 = " << lr_stage1 << "\n";
  s << "lr_stage2 = " << lr_stage2 << "\n";
  s << "epochs_stage1 = " << epochs_stage1 << "\n";
  s << "epochs_stage2 = " << epochs_stage2 << "\n";
  s << "batch_size = " << batch_size << "\n";
  s << "epsilon = " << epsilon << "\n";
  s << "seed = " << seed << "\n";
  s << "beta1 = " << beta1 << "\n";
  s << "beta2 = " << beta2 << "\n";
  s << "adam_eps = " << adam_eps << "\n";
  s << "weight_decay = " << weight_decay << "\n";
  s << "method = " << method << "\n";
  s << "augment_swap = " << (augment_swap ? 1 : 0) << "\n";
  s << "divergence_factor = " << divergence_factor << "\n";
  s << "max_gen_len = " << max_gen_len << "\n";
  return s.str();
}

void RunConfig::apply_kv(const std::string& key, const std::string& value) {
  auto u = [&] { return static_cast<std::size_t>(std::stoull(value)); };
  auto d = [&] { return std::stod(value); };
  if (key == "n_layers") arch.n_layers = u();
  else if (key == "n_heads") arch.n_heads = u();
  else if (key == "d_model") arch.d_model = u();
  else if (key == "context_len") arch.context_len = u();
  else if (key == "lr_stage1") lr_stage1 = d();
  else if (key == "lr_stage2") lr_stage2 = d();
  else if (key == "epochs_stage1") epochs_stage1 = u();
  else if (key == "epochs_stage2") epochs_stage2 = u();
  else if (key == "batch_size") batch_size = u();
  else if (key == "epsilon") epsilon = d();
  else if (key == "seed") seed = std::stoull(value);
  else if (key == "beta1") beta1 = d();
  else if (key == "beta2") beta2 = d();
  else if (key == "adam_eps") adam_eps = d();
  else if (key == "weight_decay") weight_decay = d();
  else if (key == "method") method = value;
  else if (key == "augment_swap") augment_swap = value == "1" || value == "true";
  else if (key == "divergence_factor") divergence_factor = d();
  else if (key == "max_gen_len") max_gen_len = u();
  else throw IntegrityError("config: unknown key '" + key + "'");
}

RunConfig RunConfig::from_kv_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string();
      const auto e = s.find_last_not_of(" \t\r");
      return s.substr(b, e - b + 1);
    };
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw IntegrityError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    cfg.apply_kv(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  cfg.validate();
  return cfg;
}

RunConfig RunConfig::from_kv_file(const std::string& path) {
  return from_kv_text(util::read_file(path));
}

std::uint64_t RunConfig::config_hash() const { return util::fnv1a64(to_kv()); }

AdamState AdamState::init(const ModelParams& params) {
  AdamState st;
  for (const auto& [name, t] : params.named()) {
    st.m.emplace_back(t->size(), 0.0);
    st.v.emplace_back(t->size(), 0.0);
  }
  return st;
}

void optimizer_step(ModelParams& params, AdamState& state, const RunConfig& cfg,
                    double lr) {
  const auto named = params.named();
  if (state.m.size() != named.size()) {
    throw ContractError("optimizer_step: state does not match parameters");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t pi = 0; pi < named.size(); ++pi) {
    auto& tensor = *named[pi].second;
    if (tensor.grad.empty()) tensor.ensure_grad();
    auto& m = state.m[pi];
    auto& v = state.v[pi];
    for (std::size_t i = 0; i < tensor.size(); ++i) {
      const double g = tensor.grad[i];
      if (!std::isfinite(g)) {
        throw DivergenceError("optimizer_step: non-finite gradient in " + named[pi].first);
      }
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      tensor.data[i] -= lr * (mhat / (std::sqrt(vhat) + cfg.adam_eps) +
                              cfg.weight_decay * tensor.data[i]);
    }
    tensor.zero_grad();
  }
}

namespace {

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void kernels_scale(std::vector<double>& v, double s) {
  for (double& x : v) x *= s;
}

// Shared minibatch loop. loss_fn builds the per-sample loss node into the
// given graph; gradients accumulate across the batch and are averaged.
TrainReport run_training(
    const RunConfig& cfg, std::size_t n_records, std::size_t epochs, double lr,
    ModelParams& params, const std::string& checkpoint_path,
    const std::function<TensorPtr(Graph&, std::size_t, std::mt19937_64&)>& loss_fn) {
  cfg.validate();
  if (n_records == 0) throw ContractError("training: empty split");
  Timer timer;
  TrainReport report;
  AdamState state = AdamState::init(params);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(n_records);
  for (std::size_t i = 0; i < n_records; ++i) order[i] = i;
  double initial_loss = -1.0;
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n_records; start += cfg.batch_size) {
      const std::size_t stop = std::min(start + cfg.batch_size, n_records);
      double batch_loss = 0.0;
      for (std::size_t i = start; i < stop; ++i) {
        Graph g;
        TensorPtr loss = loss_fn(g, order[i], rng);
        batch_loss += loss->data[0];
        g.backward(loss);
      }
      const std::size_t n = stop - start;
      batch_loss /= static_cast<double>(n);
      // average gradients over the batch
      for (const auto& [name, t] : params.named()) {
        if (!t->grad.empty()) {
          kernels_scale(t->grad, 1.0 / static_cast<double>(n));
        }
      }
      if (!std::isfinite(batch_loss)) {
        throw DivergenceError("training: non-finite loss at step " +
                              std::to_string(report.losses.size()));
      }
      if (initial_loss < 0.0) initial_loss = std::max(batch_loss, 1e-12);
      if (batch_loss > cfg.divergence_factor * initial_loss) {
        throw DivergenceError("training: loss " + std::to_string(batch_loss) +
                              " exceeds divergence guard (initial " +
                              std::to_string(initial_loss) + ")");
      }
      optimizer_step(params, state, cfg, lr);
      report.losses.push_back(batch_loss);
    }
  }
  if (!checkpoint_path.empty()) {
    lm::save_checkpoint(params, checkpoint_path);
    report.checkpoint_path = checkpoint_path;
  }
  report.wall_clock_sec = timer.seconds();
  return report;
}

}  // namespace

TrainReport train_stage1(const RunConfig& cfg, const std::vector<PreferenceRecord>& unlabeled,
                         ModelParams& params, const std::string& checkpoint_path,
                         bool mask_first, bool mask_second) {
  return run_training(
      cfg, unlabeled.size(), cfg.epochs_stage1, cfg.lr_stage1, params, checkpoint_path,
      [&](Graph& g, std::size_t idx, std::mt19937_64& rng) {
        const PreferenceRecord& rec = unlabeled[idx];
        // response order carries no meaning in pre-training; swap randomly
        const bool swap = std::uniform_int_distribution<int>(0, 1)(rng) == 1;
        const std::string& first = swap ? rec.response_b : rec.response_a;
        const std::string& second = swap ? rec.response_a : rec.response_b;
        return obj::pretrain_loss_node(g, params, rec.input, first, second, mask_first,
                                       mask_second);
      });
}

TrainReport train_stage2(const RunConfig& cfg, const std::vector<PreferenceRecord>& labeled,
                         ModelParams& params, const std::string& checkpoint_path) {
  obj::SmoothingConfig sc{cfg.epsilon, 2};
  return run_training(
      cfg, labeled.size(), cfg.epochs_stage2, cfg.lr_stage2, params, checkpoint_path,
      [&](Graph& g, std::size_t idx, std::mt19937_64&) {
        return obj::finetune_loss_node(g, params, labeled[idx], sc, cfg.augment_swap);
      });
}

TrainReport train_discriminative(const RunConfig& cfg,
                                 const std::vector<PreferenceRecord>& labeled,
                                 ModelParams& params, const std::string& checkpoint_path) {
  return run_training(
      cfg, labeled.size(), cfg.epochs_stage2, cfg.lr_stage2, params, checkpoint_path,
      [&](Graph& g, std::size_t idx, std::mt19937_64&) {
        const PreferenceRecord& rec = labeled[idx];
        if (!rec.label) throw ContractError("train_discriminative: unlabeled record " + rec.id);
        const bool a_preferred = *rec.label == data::Label::A;
        TensorPtr r_pref = lm::forward_scalar_node(
            g, params, rec.input, a_preferred ? rec.response_a : rec.response_b);
        TensorPtr r_other = lm::forward_scalar_node(
            g, params, rec.input, a_preferred ? rec.response_b : rec.response_a);
        // -log sigma(r_pref - r_other)
        return g.softplus(g.scale(g.add(r_pref, g.scale(r_other, -1.0)), -1.0));
      });
}

std::map<std::string, double> evaluate(const ModelParams& params, const data::Corpus& corpus,
                                       const std::vector<std::string>& splits,
                                       bool discriminative) {
  std::map<std::string, double> metrics;
  for (const auto& name : splits) {
    const auto recs = corpus.split(name);
    if (recs.empty()) throw ContractError("evaluate: split '" + name + "' is empty");
    const auto outcome = discriminative
                             ? rank::pairwise_eval_discriminative(params, recs)
                             : rank::pairwise_eval(params, recs, obj::kJudgePrompt);
    metrics[name] = outcome.accuracy;
  }
  return metrics;
}

std::vector<AblationRow> run_ablation_suite(const RunConfig& base, const data::Corpus& corpus) {
  const auto unlabeled = corpus.split("pretrain-unlabeled");
  const auto labeled = corpus.split("finetune");
  const std::vector<std::string> variants = {"gram", "gram_v1", "gram_v2", "gram_v3",
                                             "gram_v4"};
  std::vector<AblationRow> rows;
  for (const auto& variant : variants) {
    RunConfig cfg = base;
    cfg.method = variant;
    ModelParams params = lm::init_params(cfg.arch, cfg.seed);
    const bool stage1 = variant != "gram_v1";
    const bool stage2 = variant != "gram_v2";
    if (stage1) {
      train_stage1(cfg, unlabeled, params, "", /*mask_first=*/variant == "gram_v3",
                   /*mask_second=*/variant == "gram_v4");
    }
    if (stage2) {
      train_stage2(cfg, labeled, params);
    }
    const auto metrics = evaluate(params, corpus, {"test-id", "test-ood"});
    rows.push_back({variant, metrics.at("test-id"), metrics.at("test-ood"),
                    cfg.config_hash()});
  }
  return rows;
}

}  // namespace gram::train
