#include "gram/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "gram/datagen.hpp"
#include "gram/model.hpp"
#include "gram/objectives.hpp"
#include "gram/ranking.hpp"
#include "gram/rlshape.hpp"
#include "gram/scoring.hpp"
#include "gram/trainkit.hpp"
#include "gram/util.hpp"

namespace gram::cli {

namespace {

using nlohmann::json;

std::string file_hash(const std::string& path) {
  return util::to_hex(util::fnv1a64(util::read_file(path)));
}

// Reproducibility record written beside every command's outputs.
void write_run_manifest(const std::string& out_dir, const std::string& command,
                        const train::RunConfig& cfg,
                        const std::map<std::string, std::string>& artifacts) {
  std::ostringstream s;
  s << "command = " << command << "\n";
  s << "config_hash = " << util::to_hex(cfg.config_hash()) << "\n";
  for (const auto& [name, path] : artifacts) {
    s << "artifact " << name << " = " << path << " fnv1a64:" << file_hash(path) << "\n";
  }
  s << "--- config ---\n" << cfg.to_kv();
  util::write_file(out_dir + "/run_manifest.txt", s.str());
}

struct ConfigFlags {
  std::string config_path;
  std::vector<std::string> sets;  // key=value overrides
  std::uint64_t seed = 0;
  bool seed_given = false;
};

void add_config_flags(CLI::App* cmd, ConfigFlags& f) {
  cmd->add_option("--config", f.config_path, "RunConfig key=value file");
  cmd->add_option("--set", f.sets, "override a RunConfig key, key=value (repeatable)");
  cmd->add_option("--seed", f.seed, "override the run seed")
      ->each([&f](const std::string&) { f.seed_given = true; });
}

train::RunConfig resolve_config(const ConfigFlags& f) {
  train::RunConfig cfg;
  if (!f.config_path.empty()) cfg = train::RunConfig::from_kv_file(f.config_path);
  for (const auto& kv : f.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw ContractError("--set expects key=value, got '" + kv + "'");
    }
    cfg.apply_kv(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (f.seed_given) cfg.seed = f.seed;
  cfg.validate();
  return cfg;
}

void write_report(const std::string& out_dir, const train::TrainReport& report) {
  json j{{"losses", report.losses},
         {"wall_clock_sec", report.wall_clock_sec},
         {"checkpoint", report.checkpoint_path},
         {"metrics", report.metrics}};
  util::write_file(out_dir + "/report.json", j.dump(2) + "\n");
}

std::vector<data::PreferenceRecord> load_split(const std::string& corpus_dir,
                                               const std::string& split) {
  return data::read_jsonl(corpus_dir + "/" + split + ".jsonl");
}

data::UtilitySpec spec_from_json(const json& j) {
  data::UtilitySpec s;
  s.alphabet = j.at("alphabet").get<std::string>();
  s.unigram = j.at("unigram").get<std::vector<double>>();
  s.bigram = j.at("bigram").get<std::vector<double>>();
  s.length_weight = j.at("length_weight").get<double>();
  s.bias = j.at("bias").get<double>();
  s.domain = j.at("domain").get<std::string>();
  s.noise = j.at("noise").get<std::string>() == "deterministic"
                ? data::UtilitySpec::Noise::Deterministic
                : data::UtilitySpec::Noise::BradleyTerry;
  s.beta = j.at("beta").get<double>();
  s.margin = j.at("margin").get<double>();
  s.topic_len = j.value("topic_len", s.topic_len);
  s.resp_len_min = j.value("resp_len_min", s.resp_len_min);
  s.resp_len_max = j.value("resp_len_max", s.resp_len_max);
  s.resp_noise = j.value("resp_noise", s.resp_noise);
  s.tilt_scale = j.value("tilt_scale", s.tilt_scale);
  return s;
}

// ------------------------------------------------------------- commands

int cmd_gen_corpus(const std::string& out_dir, std::uint64_t seed, data::SplitSizes sizes,
                   double rho, const std::string& noise, double beta, double margin) {
  auto spec_id = data::UtilitySpec::random(seed, "qa-like");
  auto spec_ood = data::UtilitySpec::correlated(spec_id, rho, seed + 101, "shifted");
  for (auto* s : {&spec_id, &spec_ood}) {
    s->noise = noise == "bradley_terry" ? data::UtilitySpec::Noise::BradleyTerry
                                        : data::UtilitySpec::Noise::Deterministic;
    s->beta = beta;
    s->margin = margin;
  }
  const auto corpus = data::generate_corpus(spec_id, spec_ood, sizes, seed);
  const auto paths = data::write_corpus(out_dir, corpus, spec_id, spec_ood, sizes, seed);
  for (const auto& [split, path] : paths) {
    std::cout << split << " -> " << path << "\n";
  }
  return 0;
}

int cmd_pretrain(const std::string& corpus_dir, const std::string& out_dir,
                 const std::string& init_ckpt, const train::RunConfig& cfg) {
  std::filesystem::create_directories(out_dir);
  const auto unlabeled = load_split(corpus_dir, "pretrain-unlabeled");
  lm::ModelParams params = init_ckpt.empty() ? lm::init_params(cfg.arch, cfg.seed)
                                             : lm::load_checkpoint(init_ckpt);
  const std::string ckpt = out_dir + "/stage1.ckpt";
  const auto report = train::train_stage1(cfg, unlabeled, params, ckpt);
  write_report(out_dir, report);
  write_run_manifest(out_dir, "pretrain", cfg, {{"stage1.ckpt", ckpt}});
  std::cout << "stage1 final loss " << report.losses.back() << " ("
            << report.wall_clock_sec << " s)\n";
  return 0;
}

int cmd_finetune(const std::string& corpus_dir, const std::string& out_dir,
                 const std::string& init_ckpt, const train::RunConfig& cfg) {
  std::filesystem::create_directories(out_dir);
  const auto labeled = load_split(corpus_dir, "finetune");
  lm::ModelParams params = init_ckpt.empty() ? lm::init_params(cfg.arch, cfg.seed)
                                             : lm::load_checkpoint(init_ckpt);
  const std::string ckpt = out_dir + "/stage2.ckpt";
  const auto report = train::train_stage2(cfg, labeled, params, ckpt);
  write_report(out_dir, report);
  write_run_manifest(out_dir, "finetune", cfg, {{"stage2.ckpt", ckpt}});
  std::cout << "stage2 final loss " << report.losses.back() << " ("
            << report.wall_clock_sec << " s)\n";
  return 0;
}

int cmd_train_baseline(const std::string& kind, const std::string& corpus_dir,
                       const std::string& out_dir, train::RunConfig cfg) {
  std::filesystem::create_directories(out_dir);
  const auto labeled = load_split(corpus_dir, "finetune");
  cfg.method = kind + "_baseline";
  lm::ModelParams params = lm::init_params(cfg.arch, cfg.seed);
  const std::string ckpt = out_dir + "/" + kind + ".ckpt";
  train::TrainReport report;
  if (kind == "generative") {
    cfg.epsilon = 0.0;  // plain cross entropy, no stage 1
    report = train::train_stage2(cfg, labeled, params, ckpt);
  } else {
    report = train::train_discriminative(cfg, labeled, params, ckpt);
  }
  write_report(out_dir, report);
  write_run_manifest(out_dir, "train-baseline", cfg, {{kind + ".ckpt", ckpt}});
  std::cout << kind << " baseline final loss " << report.losses.back() << "\n";
  return 0;
}

int cmd_eval(const std::string& corpus_dir, const std::string& ckpt,
             const std::string& splits_csv, bool discriminative,
             const std::string& out_dir) {
  const auto params = lm::load_checkpoint(ckpt);
  data::Corpus corpus;
  std::stringstream ss(splits_csv);
  std::vector<std::string> splits;
  for (std::string s; std::getline(ss, s, ',');) {
    if (s.empty()) continue;
    splits.push_back(s);
    auto recs = load_split(corpus_dir, s);
    corpus.records.insert(corpus.records.end(), recs.begin(), recs.end());
  }
  const auto metrics = train::evaluate(params, corpus, splits, discriminative);
  json j{{"checkpoint", ckpt},
         {"checkpoint_hash", file_hash(ckpt)},
         {"discriminative", discriminative},
         {"splits", metrics}};
  for (const auto& [name, acc] : metrics) {
    std::cout << name << " accuracy " << acc << "\n";
  }
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    util::write_file(out_dir + "/eval.json", j.dump(2) + "\n");
  }
  return 0;
}

int cmd_rank(const std::string& ckpt, const std::string& input,
             const std::vector<std::string>& responses, const std::string& mode,
             std::uint64_t seed) {
  if (responses.size() < 2) throw ContractError("rank: need at least two --response");
  const auto params = lm::load_checkpoint(ckpt);
  rank::CandidateList list{input, responses, {}};
  if (mode == "listwise") {
    const auto res = rank::listwise_scores(params, obj::kJudgePrompt, list, seed);
    for (std::size_t i = 0; i < res.scores.size(); ++i) {
      std::cout << i << (i == res.ref_index ? " (ref) " : " ") << res.scores[i] << "\n";
    }
    return 0;
  }
  const auto cmp = rank::model_comparator(params, obj::kJudgePrompt, list);
  const std::size_t best =
      mode == "tournament" ? rank::best_tournament(list, cmp) : rank::best_linear(list, cmp);
  std::cout << "best " << best << ": " << responses[best] << "\n";
  return 0;
}

int cmd_bon(long k, const std::string& ckpt, const std::string& reward_ckpt,
            const std::string& input, double top_p, double temperature,
            std::uint64_t seed) {
  std::cout << "kl_bon(" << k << ") = " << rank::bon_kl(k) << "\n";
  if (ckpt.empty()) return 0;
  if (input.empty()) throw ContractError("bon: --input required when sampling");
  const auto policy = lm::load_checkpoint(ckpt);
  const auto reward = reward_ckpt.empty() ? policy : lm::load_checkpoint(reward_ckpt);
  auto list = rank::bon_sample(policy, input, static_cast<std::size_t>(k), top_p,
                               temperature, seed);
  const auto cmp = rank::model_comparator(reward, obj::kJudgePrompt, list);
  const std::size_t best = rank::best_tournament(list, cmp);
  std::cout << "selected " << best << ": " << list.responses[best] << "\n";
  return 0;
}

int cmd_ablate(const std::string& corpus_dir, const std::string& out_dir,
               const train::RunConfig& cfg) {
  std::filesystem::create_directories(out_dir);
  data::Corpus corpus;
  for (const auto* split : {"pretrain-unlabeled", "finetune", "test-id", "test-ood"}) {
    auto recs = load_split(corpus_dir, split);
    corpus.records.insert(corpus.records.end(), recs.begin(), recs.end());
  }
  const auto rows = train::run_ablation_suite(cfg, corpus);
  std::ostringstream csv;
  csv << "variant,id_accuracy,ood_accuracy,config_hash\n";
  for (const auto& r : rows) {
    csv << r.variant << "," << r.id_accuracy << "," << r.ood_accuracy << ","
        << util::to_hex(r.config_hash) << "\n";
    std::cout << r.variant << " id " << r.id_accuracy << " ood " << r.ood_accuracy << "\n";
  }
  util::write_file(out_dir + "/ablation.csv", csv.str());
  write_run_manifest(out_dir, "ablate", cfg, {{"ablation.csv", out_dir + "/ablation.csv"}});
  return 0;
}

int cmd_rl_demo(const std::string& reward_ckpt, const std::string& policy_ckpt,
                const std::string& corpus_dir, const std::string& out_dir,
                std::size_t steps, std::size_t batch, std::size_t n_inputs,
                rl::ShapingConfig shaping, train::RunConfig cfg) {
  std::filesystem::create_directories(out_dir);
  const auto reward_model = lm::load_checkpoint(reward_ckpt);
  cfg.arch = reward_model.cfg;
  lm::ModelParams policy = policy_ckpt.empty() ? lm::init_params(cfg.arch, cfg.seed)
                                               : lm::load_checkpoint(policy_ckpt);
  const lm::ModelParams reference = policy.clone();

  data::UtilitySpec oracle = data::UtilitySpec::random(cfg.seed, "qa-like");
  if (!corpus_dir.empty()) {
    oracle = spec_from_json(
        json::parse(util::read_file(corpus_dir + "/manifest.json")).at("spec_id"));
  }
  // fixed toy input set, drawn once from the oracle alphabet
  std::mt19937_64 rng(cfg.seed ^ 0x726c64656d6fULL);
  std::vector<std::string> inputs;
  std::uniform_int_distribution<std::size_t> pick(0, oracle.alphabet.size() - 1);
  for (std::size_t i = 0; i < n_inputs; ++i) {
    std::string x;
    for (std::size_t j = 0; j < 8; ++j) x.push_back(oracle.alphabet[pick(rng)]);
    inputs.push_back(std::move(x));
  }

  rl::PgDemo demo(std::move(policy), reference, reward_model, oracle, shaping, cfg);
  std::ostringstream stats_out;
  for (std::size_t step = 0; step < steps; ++step) {
    std::vector<std::string> xs;
    for (std::size_t b = 0; b < batch; ++b) xs.push_back(inputs[(step * batch + b) % n_inputs]);
    const auto st = demo.step(xs);
    json line{{"step", st.step},
              {"raw_reward_mean", st.raw_reward_mean},
              {"standardized_mean", st.standardized_mean},
              {"kl_mean", st.kl_mean},
              {"oracle_utility_mean", st.oracle_utility_mean},
              {"policy_updated", st.policy_updated}};
    stats_out << line.dump() << "\n";
    if (step % 20 == 0 || step + 1 == steps) {
      std::cout << "step " << st.step << " reward " << st.raw_reward_mean << " oracle "
                << st.oracle_utility_mean << (st.policy_updated ? "" : " (cold start)")
                << "\n";
    }
  }
  util::write_file(out_dir + "/rl_stats.jsonl", stats_out.str());
  const std::string ckpt = out_dir + "/policy.ckpt";
  lm::save_checkpoint(demo.policy(), ckpt);
  write_run_manifest(out_dir, "rl-demo", cfg,
                     {{"policy.ckpt", ckpt}, {"rl_stats.jsonl", out_dir + "/rl_stats.jsonl"}});
  return 0;
}

}  // namespace

bool verify_identities(std::ostream& out) {
  bool all_ok = true;
  auto report = [&](const std::string& name, bool ok) {
    out << (ok ? "PASS " : "FAIL ") << name << "\n";
    all_ok = all_ok && ok;
  };

  {  // label smoothing == regularized pairwise form
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-10.0, 10.0);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
      const double za = u(rng), zb = u(rng);
      for (double eps : {0.0, 0.01, 0.05, 0.1, 0.2, 0.3, 0.4}) {
        obj::SmoothingConfig sc{eps, 2};
        const double smoothed = obj::label_smoothed_loss(za, zb, data::Label::A, sc).value;
        const double reg = obj::regularized_bt_form(za, zb, eps).value;
        worst = std::max(worst, std::abs(smoothed - reg));
      }
    }
    report("label-smoothing equivalence (max |diff| " + std::to_string(worst) + ")",
           worst < 1e-9);
  }

  lm::ModelConfig micro{1, 2, 16, 128, lm::Vocab::kSize};
  lm::ModelParams p = lm::init_params(micro, 11);
  {  // give the zero-initialized LM head nontrivial logits
    std::mt19937_64 rng(13);
    std::normal_distribution<double> n(0.0, 0.05);
    for (double& w : p.lm_head->data) w = n(rng);
  }

  {  // order-swapped reward complementarity
    std::mt19937_64 rng(17);
    std::uniform_int_distribution<int> len(3, 10);
    std::uniform_int_distribution<int> ch('a', 'h');
    auto word = [&] {
      std::string s;
      for (int i = len(rng); i > 0; --i) s.push_back(static_cast<char>(ch(rng)));
      return s;
    };
    double worst = 0.0;
    for (int i = 0; i < 50; ++i) {
      const std::string x = word(), y = word(), yp = word();
      const double fwd = score::generative_reward(p, obj::kJudgePrompt, x, y, yp).value;
      const double rev = score::generative_reward(p, obj::kJudgePrompt, x, yp, y).value;
      worst = std::max(worst, std::abs(fwd + rev - 1.0));
    }
    report("order-swap complementarity (max |r+r'-1| " + std::to_string(worst) + ")",
           worst < 1e-12);
  }

  {  // pre-training loss factorizes into the two conditional terms
    std::mt19937_64 rng(19);
    std::uniform_int_distribution<int> len(3, 10);
    std::uniform_int_distribution<int> ch('a', 'h');
    auto word = [&] {
      std::string s;
      for (int i = len(rng); i > 0; --i) s.push_back(static_cast<char>(ch(rng)));
      return s;
    };
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
      const std::string x = word(), ya = word(), yb = word();
      const double joint = obj::pretrain_loss(p, x, ya, yb).value;
      const double split = obj::nll_first_response(p, x, ya) +
                           obj::nll_second_response(p, x, ya, yb);
      worst = std::max(worst, std::abs(joint - split));
    }
    report("pre-training factorization (max |diff| " + std::to_string(worst) + ")",
           worst < 1e-9);
  }

  {  // best-of-n KL closed form
    bool ok = rank::bon_kl(1) == 0.0 && std::abs(rank::bon_kl(244) - 4.501) < 1e-3;
    double prev = rank::bon_kl(1);
    for (long k = 2; k <= 1024; ++k) {
      const double cur = rank::bon_kl(k);
      ok = ok && cur > prev;
      prev = cur;
    }
    report("best-of-n KL closed form", ok);
  }

  return all_ok;
}

void emit_curves(const std::string& results_dir) {
  const std::string points = results_dir + "/points.jsonl";
  if (!std::filesystem::exists(points)) {
    throw IntegrityError("emit_curves: missing " + points);
  }
  // curve name -> column layout
  const std::map<std::string, std::vector<std::string>> layouts = {
      {"bon", {"kl_bon", "proxy_score", "oracle_score"}},
      {"adapt", {"adapt_size", "accuracy"}},
      {"unlabeled", {"unlabeled_size", "accuracy"}},
      {"epsilon", {"epsilon", "id_acc", "ood_acc"}}};
  std::map<std::string, std::vector<std::vector<double>>> rows;
  std::istringstream in(util::read_file(points));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw IntegrityError("points.jsonl line " + std::to_string(line_no) + ": " + e.what());
    }
    const std::string curve = j.value("curve", "");
    const auto it = layouts.find(curve);
    if (it == layouts.end()) {
      throw IntegrityError("points.jsonl line " + std::to_string(line_no) +
                           ": unknown curve '" + curve + "'");
    }
    std::vector<double> row;
    for (const auto& col : it->second) {
      if (!j.contains(col)) {
        throw IntegrityError("points.jsonl line " + std::to_string(line_no) +
                             ": missing field '" + col + "'");
      }
      row.push_back(j.at(col).get<double>());
    }
    rows[curve].push_back(std::move(row));
  }
  if (rows.empty()) throw IntegrityError("emit_curves: no data points in " + points);
  for (auto& [curve, data] : rows) {
    std::stable_sort(data.begin(), data.end(),
                     [](const auto& a, const auto& b) { return a[0] < b[0]; });
    std::ostringstream csv;
    csv.precision(12);
    const auto& cols = layouts.at(curve);
    for (std::size_t i = 0; i < cols.size(); ++i) csv << (i ? "," : "") << cols[i];
    csv << "\n";
    for (const auto& row : data) {
      for (std::size_t i = 0; i < row.size(); ++i) csv << (i ? "," : "") << row[i];
      csv << "\n";
    }
    util::write_file(results_dir + "/" + curve + ".csv", csv.str());
  }
}

int dispatch(int argc, const char* const* argv) {
  CLI::App app{"reward-modeling toolkit: corpus generation, two-stage training, "
               "evaluation, ranking and reward shaping"};
  app.require_subcommand(1);

  // gen-corpus
  std::string gc_out;
  std::uint64_t gc_seed = 1;
  data::SplitSizes gc_sizes;
  double gc_rho = 0.7, gc_beta = 2.0, gc_margin = 0.5;
  std::string gc_noise = "deterministic";
  auto* gen = app.add_subcommand("gen-corpus", "generate a synthetic preference corpus");
  gen->add_option("--out", gc_out, "output directory")->required();
  gen->add_option("--seed", gc_seed, "generator seed");
  gen->add_option("--pretrain", gc_sizes.pretrain, "unlabeled pair count");
  gen->add_option("--finetune", gc_sizes.finetune, "labeled pair count");
  gen->add_option("--adapt", gc_sizes.adapt, "adaptation pair count");
  gen->add_option("--test-id", gc_sizes.test_id, "in-distribution test pairs");
  gen->add_option("--test-ood", gc_sizes.test_ood, "out-of-distribution test pairs");
  gen->add_option("--rho", gc_rho, "ID/OOD utility correlation");
  gen->add_option("--noise", gc_noise, "label noise: deterministic | bradley_terry")
      ->check(CLI::IsMember({"deterministic", "bradley_terry"}));
  gen->add_option("--beta", gc_beta, "Bradley-Terry sharpness");
  gen->add_option("--margin", gc_margin, "deterministic-mode utility margin");

  // pretrain / finetune / train-baseline / ablate share config flags
  std::string pt_corpus, pt_out, pt_init;
  ConfigFlags pt_flags;
  auto* pre = app.add_subcommand("pretrain", "stage 1: response-pair generation pre-training");
  pre->add_option("--corpus", pt_corpus, "corpus directory")->required();
  pre->add_option("--out", pt_out, "output directory")->required();
  pre->add_option("--init", pt_init, "initial checkpoint (default: fresh init)");
  add_config_flags(pre, pt_flags);

  std::string ft_corpus, ft_out, ft_init;
  ConfigFlags ft_flags;
  auto* fin = app.add_subcommand("finetune", "stage 2: label-smoothed preference tuning");
  fin->add_option("--corpus", ft_corpus, "corpus directory")->required();
  fin->add_option("--out", ft_out, "output directory")->required();
  fin->add_option("--init", ft_init, "stage-1 checkpoint (default: fresh init)");
  add_config_flags(fin, ft_flags);

  std::string bl_kind, bl_corpus, bl_out;
  ConfigFlags bl_flags;
  auto* base = app.add_subcommand("train-baseline", "single-stage baseline reward model");
  base->add_option("--kind", bl_kind, "generative | discriminative")
      ->required()
      ->check(CLI::IsMember({"generative", "discriminative"}));
  base->add_option("--corpus", bl_corpus, "corpus directory")->required();
  base->add_option("--out", bl_out, "output directory")->required();
  add_config_flags(base, bl_flags);

  std::string ev_corpus, ev_ckpt, ev_splits = "test-id,test-ood", ev_out;
  bool ev_disc = false;
  auto* ev = app.add_subcommand("eval", "pairwise accuracy on test splits");
  ev->add_option("--corpus", ev_corpus, "corpus directory")->required();
  ev->add_option("--ckpt", ev_ckpt, "model checkpoint")->required();
  ev->add_option("--splits", ev_splits, "comma-separated split names");
  ev->add_flag("--discriminative", ev_disc, "score with the scalar head");
  ev->add_option("--out", ev_out, "write eval.json here");

  std::string rk_ckpt, rk_input, rk_mode = "tournament";
  std::vector<std::string> rk_responses;
  std::uint64_t rk_seed = 1;
  auto* rk = app.add_subcommand("rank", "pick the best response from a list");
  rk->add_option("--ckpt", rk_ckpt, "model checkpoint")->required();
  rk->add_option("--input", rk_input, "input text")->required();
  rk->add_option("--response", rk_responses, "candidate response (repeat)")->required();
  rk->add_option("--mode", rk_mode, "linear | tournament | listwise")
      ->check(CLI::IsMember({"linear", "tournament", "listwise"}));
  rk->add_option("--seed", rk_seed, "listwise reference seed");

  long bo_k = 1;
  std::string bo_ckpt, bo_reward, bo_input;
  double bo_top_p = 0.95, bo_temp = 0.75;
  std::uint64_t bo_seed = 1;
  auto* bo = app.add_subcommand("bon", "best-of-n KL and optional sampling");
  bo->add_option("--k", bo_k, "number of samples")->required();
  bo->add_option("--ckpt", bo_ckpt, "policy checkpoint (enables sampling)");
  bo->add_option("--reward-ckpt", bo_reward, "reward model (defaults to --ckpt)");
  bo->add_option("--input", bo_input, "input text");
  bo->add_option("--top-p", bo_top_p, "nucleus mass");
  bo->add_option("--temperature", bo_temp, "sampling temperature");
  bo->add_option("--seed", bo_seed, "sampling seed");

  std::string ab_corpus, ab_out;
  ConfigFlags ab_flags;
  auto* ab = app.add_subcommand("ablate", "train and evaluate the ablation variants");
  ab->add_option("--corpus", ab_corpus, "corpus directory")->required();
  ab->add_option("--out", ab_out, "output directory")->required();
  add_config_flags(ab, ab_flags);

  std::string rl_reward, rl_policy, rl_corpus, rl_out;
  std::size_t rl_steps = 200, rl_batch = 4, rl_inputs = 8;
  rl::ShapingConfig rl_shaping;
  ConfigFlags rl_flags;
  auto* rld = app.add_subcommand("rl-demo", "policy-gradient demo with shaped rewards");
  rld->add_option("--reward-ckpt", rl_reward, "trained reward model")->required();
  rld->add_option("--policy-ckpt", rl_policy, "initial policy (default: fresh init)");
  rld->add_option("--corpus", rl_corpus, "corpus directory (oracle spec source)");
  rld->add_option("--out", rl_out, "output directory")->required();
  rld->add_option("--steps", rl_steps, "demo steps");
  rld->add_option("--batch", rl_batch, "rollouts per step");
  rld->add_option("--inputs", rl_inputs, "distinct toy inputs");
  rld->add_option("--gamma", rl_shaping.gamma, "reward scale");
  rld->add_option("--alpha", rl_shaping.alpha, "KL coefficient");
  rld->add_option("--cold-start", rl_shaping.cold_start_steps, "frozen-policy steps");
  add_config_flags(rld, rl_flags);

  auto* vi = app.add_subcommand("verify-identities", "run the analytic identity suites");

  std::string ec_results;
  auto* ec = app.add_subcommand("emit-curves", "tidy CSV tables from recorded points");
  ec->add_option("--results", ec_results, "results directory with points.jsonl")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (gen->parsed()) {
      std::filesystem::create_directories(gc_out);
      return cmd_gen_corpus(gc_out, gc_seed, gc_sizes, gc_rho, gc_noise, gc_beta, gc_margin);
    }
    if (pre->parsed()) return cmd_pretrain(pt_corpus, pt_out, pt_init, resolve_config(pt_flags));
    if (fin->parsed()) return cmd_finetune(ft_corpus, ft_out, ft_init, resolve_config(ft_flags));
    if (base->parsed()) {
      return cmd_train_baseline(bl_kind, bl_corpus, bl_out, resolve_config(bl_flags));
    }
    if (ev->parsed()) return cmd_eval(ev_corpus, ev_ckpt, ev_splits, ev_disc, ev_out);
    if (rk->parsed()) return cmd_rank(rk_ckpt, rk_input, rk_responses, rk_mode, rk_seed);
    if (bo->parsed()) {
      return cmd_bon(bo_k, bo_ckpt, bo_reward, bo_input, bo_top_p, bo_temp, bo_seed);
    }
    if (ab->parsed()) return cmd_ablate(ab_corpus, ab_out, resolve_config(ab_flags));
    if (rld->parsed()) {
      return cmd_rl_demo(rl_reward, rl_policy, rl_corpus, rl_out, rl_steps, rl_batch,
                         rl_inputs, rl_shaping, resolve_config(rl_flags));
    }
    if (vi->parsed()) return verify_identities(std::cout) ? 0 : 1;
    if (ec->parsed()) {
      emit_curves(ec_results);
      return 0;
    }
  } catch (const ContractError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return 4;
  } catch (const IntegrityError& e) {
    std::cerr << "integrity error: " << e.what() << "\n";
    return 3;
  } catch (const VocabError& e) {
    std::cerr << "integrity error: " << e.what() << "\n";
    return 3;
  } catch (const TruncationError& e) {
    std::cerr << "integrity error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace gram::cli
