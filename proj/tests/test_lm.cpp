#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include "gram/model.hpp"
#include "gram/objectives.hpp"

using namespace gram;
using lm::ModelConfig;
using lm::ModelParams;
using lm::Vocab;
using num::Graph;
using num::TensorPtr;

namespace {

ModelConfig micro() { return {1, 2, 16, 128, Vocab::kSize}; }

ModelParams perturbed(std::uint64_t seed) {
  ModelParams p = lm::init_params(micro(), seed);
  // the heads start at zero; give them signal for the forward-pass tests
  std::mt19937_64 rng(seed + 1);
  std::normal_distribution<double> n(0.0, 0.05);
  for (double& w : p.lm_head->data) w = n(rng);
  for (double& w : p.scalar_head->data) w = n(rng);
  return p;
}

}  // namespace

TEST_CASE("vocab round-trips every encodable string") {
  Vocab v;
  const std::string text = "Hello, world! 0123 #:~\nmixed CASE";
  CHECK(v.decode(v.encode(text)) == text);
  CHECK_THROWS_AS(v.encode(std::string(1, '\t')), VocabError);
  CHECK_THROWS_AS(v.encode(std::string(1, char(0x7f))), VocabError);
  CHECK(v.size() == Vocab::kSize);
}

TEST_CASE("judge encoding detokenizes to the template text") {
  Vocab v;
  const auto s = lm::encode_judge(v, "judge.", "in", "left", "right", false, 256);
  const std::string text = v.decode(s.ids);
  CHECK(text == s.template_text());
  CHECK(text.find("judge.") != std::string::npos);
  CHECK(text.find("left") != std::string::npos);
  // transposed swaps the responses but keeps prompt and input fixed
  const auto t = lm::encode_judge(v, "judge.", "in", "left", "right", true, 256);
  CHECK(t.transposed);
  const std::string ttext = v.decode(t.ids);
  CHECK(ttext.find("judge.") != std::string::npos);
  // the span still tracks the raw first response, now in the second slot
  CHECK(v.decode(std::vector<int>(t.ids.begin() + t.a_begin, t.ids.begin() + t.a_end)) ==
        "left");
  CHECK(ttext.find("right") < ttext.find("left"));
  CHECK_THROWS_AS(lm::encode_judge(v, "c", "x", "", "b", false, 256), ContractError);
  CHECK_THROWS_AS(lm::encode_judge(v, "c", "x", "a", "b", false, 10), TruncationError);
}

TEST_CASE("lm forward is causal") {
  ModelParams p = perturbed(3);
  Vocab v;
  std::vector<int> ids = v.encode("abcabc");
  ids.insert(ids.begin(), lm::tok::kBos);
  Graph g(false);
  TensorPtr lp = lm::forward_lm(g, p, ids);
  // changing the last token must leave earlier rows untouched
  auto ids2 = ids;
  ids2.back() = v.byte_to_id('z');
  Graph g2(false);
  TensorPtr lp2 = lm::forward_lm(g2, p, ids2);
  for (std::size_t t = 0; t + 1 < ids.size(); ++t)
    for (std::size_t c = 0; c < Vocab::kSize; ++c) CHECK(lp->at(t, c) == lp2->at(t, c));
}

TEST_CASE("zero-initialized heads give uniform label logits and zero reward") {
  ModelParams p = lm::init_params(micro(), 5);
  Vocab v;
  const auto s = lm::encode_judge(v, "c", "x", "aa", "bb", false, 128);
  const auto [za, zb] = lm::label_logits(p, s);
  CHECK(za == 0.0);
  CHECK(zb == 0.0);
  CHECK(lm::forward_scalar(p, "x", "aa") == 0.0);
}

TEST_CASE("both heads share the trunk") {
  ModelParams p = perturbed(7);
  // nudging a trunk weight changes both head outputs
  Vocab v;
  const auto s = lm::encode_judge(v, "c", "x", "aa", "bb", false, 128);
  const auto [za0, zb0] = lm::label_logits(p, s);
  const double r0 = lm::forward_scalar(p, "x", "aa");
  p.layers[0].wq->data[0] += 0.5;
  const auto [za1, zb1] = lm::label_logits(p, s);
  const double r1 = lm::forward_scalar(p, "x", "aa");
  CHECK(za0 != za1);
  CHECK(zb0 != zb1);
  CHECK(r0 != r1);
}

TEST_CASE("full model gradcheck through the label logits") {
  ModelParams p = perturbed(11);
  Vocab v;
  const auto s = lm::encode_judge(v, "c", "xy", "ab", "cd", false, 128);
  auto loss_value = [&] {
    const auto [za, zb] = lm::label_logits(p, s);
    return obj::label_smoothed_loss(za, zb, data::Label::A, {0.1, 2}).value;
  };
  Graph g;
  TensorPtr logits = lm::label_logits_node(g, p, s);
  TensorPtr loss =
      g.weighted_sum(g.softmax_logprob(logits, 0), {-(1.0 - 0.1), -0.1});
  g.backward(loss);

  std::mt19937_64 rng(13);
  const double h = 1e-5;
  for (const auto& [name, t] : p.named()) {
    if (t->grad.empty()) continue;
    // spot-check a few coordinates per tensor, full sweep is too slow here
    std::uniform_int_distribution<std::size_t> pick(0, t->size() - 1);
    for (int rep = 0; rep < 3; ++rep) {
      const std::size_t i = pick(rng);
      const double keep = t->data[i];
      t->data[i] = keep + h;
      const double up = loss_value();
      t->data[i] = keep - h;
      const double dn = loss_value();
      t->data[i] = keep;
      const double fd = (up - dn) / (2.0 * h);
      const double ad = t->grad[i];
      const double scale = std::max({1.0, std::abs(fd), std::abs(ad)});
      CHECK(std::abs(fd - ad) / scale < 1e-4);
    }
  }
}

TEST_CASE("sampling respects the terminator, bans, and determinism") {
  ModelParams p = perturbed(17);
  Vocab v;
  lm::SampleConfig cfg;
  cfg.max_new_tokens = 12;
  std::mt19937_64 r1(99), r2(99);
  const std::string s1 = lm::sample_response(p, v, "abc", cfg, r1);
  const std::string s2 = lm::sample_response(p, v, "abc", cfg, r2);
  CHECK(s1 == s2);
  for (char c : s1) CHECK(v.byte_to_id(c) >= lm::tok::kNewline);
  const std::string gr = lm::greedy_response(p, v, "abc", cfg);
  CHECK(gr.size() <= cfg.max_new_tokens);
}

TEST_CASE("checkpoint round-trip is bit-identical") {
  ModelParams p = perturbed(19);
  const std::string path = std::filesystem::temp_directory_path() / "gram_test_lm.ckpt";
  lm::save_checkpoint(p, path);
  ModelParams q = lm::load_checkpoint(path);
  CHECK(q.cfg == p.cfg);
  const auto pn = p.named();
  const auto qn = q.named();
  REQUIRE(pn.size() == qn.size());
  for (std::size_t i = 0; i < pn.size(); ++i) {
    CHECK(pn[i].first == qn[i].first);
    CHECK(pn[i].second->data == qn[i].second->data);
  }
  CHECK(std::filesystem::exists(path + ".manifest.txt"));
  // corrupting the payload must be detected on load
  {
    std::FILE* f = std::fopen(path.c_str(), "r+b");
    REQUIRE(f);
    std::fseek(f, -9, SEEK_END);
    const char junk = 0x5a;
    std::fwrite(&junk, 1, 1, f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(lm::load_checkpoint(path), IntegrityError);
  std::filesystem::remove(path);
  std::filesystem::remove(path + ".manifest.txt");
}

TEST_CASE("init is deterministic in the seed") {
  ModelParams a = lm::init_params(micro(), 23);
  ModelParams b = lm::init_params(micro(), 23);
  ModelParams c = lm::init_params(micro(), 24);
  CHECK(a.tok_embed->data == b.tok_embed->data);
  CHECK(a.tok_embed->data != c.tok_embed->data);
}
