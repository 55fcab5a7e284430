#include "gram/datagen.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "gram/errors.hpp"
#include "gram/util.hpp"

namespace gram::data {

using nlohmann::json;

UtilitySpec UtilitySpec::random(std::uint64_t seed, std::string domain) {
  UtilitySpec s;
  s.domain = std::move(domain);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  const std::size_t a = s.alphabet.size();
  s.unigram.resize(a);
  for (double& w : s.unigram) w = n(rng);
  s.bigram.resize(a * a);
  for (double& w : s.bigram) w = 0.3 * n(rng);
  s.length_weight = 0.1 * n(rng);
  s.bias = 0.0;
  return s;
}

UtilitySpec UtilitySpec::correlated(const UtilitySpec& base, double rho,
                                    std::uint64_t seed, std::string domain) {
  UtilitySpec s = base;
  s.domain = std::move(domain);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  const double mix = std::sqrt(std::max(0.0, 1.0 - rho * rho));
  for (double& w : s.unigram) w = rho * w + mix * n(rng);
  for (double& w : s.bigram) w = rho * w + mix * 0.3 * n(rng);
  s.length_weight = rho * s.length_weight + mix * 0.1 * n(rng);
  // the shifted domain also writes differently: longer topics and responses,
  // so the shift moves the text distribution and not just the label weights
  s.topic_len = base.topic_len + 5;
  s.resp_len_min = base.resp_len_min + 4;
  s.resp_len_max = base.resp_len_max + 4;
  return s;
}

double oracle_utility(const UtilitySpec& spec, std::string_view /*x*/, std::string_view y) {
  const std::size_t a = spec.alphabet.size();
  auto letter_index = [&](char c) -> int {
    const std::size_t pos = spec.alphabet.find(c);
    return pos == std::string::npos ? -1 : static_cast<int>(pos);
  };
  double u = spec.bias + spec.length_weight * static_cast<double>(y.size());
  int prev = -1;
  for (char c : y) {
    const int i = letter_index(c);
    if (i >= 0) {
      u += spec.unigram[static_cast<std::size_t>(i)];
      if (prev >= 0) {
        u += spec.bigram[static_cast<std::size_t>(prev) * a + static_cast<std::size_t>(i)];
      }
    }
    prev = i;
  }
  return u;
}

namespace {

constexpr int kPairBudget = 1000;

std::string make_input(std::mt19937_64& rng, const UtilitySpec& spec, std::size_t index) {
  std::uniform_int_distribution<std::size_t> pick(0, spec.alphabet.size() - 1);
  std::string topic;
  for (std::size_t i = 0; i < spec.topic_len; ++i) topic += spec.alphabet[pick(rng)];
  return "q" + std::to_string(index % 1000) + ":" + topic;
}

// Response letters follow a per-input categorical tilted by per-response
// noise, so pairs for one input are similar but not identical.
std::string make_response(std::mt19937_64& rng, const UtilitySpec& spec,
                          const std::vector<double>& input_tilt) {
  const std::string& alphabet = spec.alphabet;
  const std::size_t a = alphabet.size();
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> logits(a);
  for (std::size_t i = 0; i < a; ++i) logits[i] = input_tilt[i] + spec.resp_noise * n(rng);
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  std::vector<double> cdf(a);
  double z = 0.0;
  for (std::size_t i = 0; i < a; ++i) {
    z += std::exp(logits[i] - mx);
    cdf[i] = z;
  }
  std::uniform_int_distribution<std::size_t> len_dist(spec.resp_len_min, spec.resp_len_max);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const std::size_t len = len_dist(rng);
  std::string y;
  for (std::size_t i = 0; i < len; ++i) {
    const double r = unif(rng) * z;
    std::size_t j = 0;
    while (j + 1 < a && cdf[j] < r) ++j;
    y += alphabet[j];
  }
  return y;
}

std::vector<double> make_input_tilt(std::mt19937_64& rng, const UtilitySpec& spec) {
  std::normal_distribution<double> n(0.0, spec.tilt_scale);
  std::vector<double> tilt(spec.alphabet.size());
  for (double& t : tilt) t = n(rng);
  return tilt;
}

PreferenceRecord make_record(const UtilitySpec& spec, std::mt19937_64& rng,
                             const std::string& split, std::size_t index,
                             bool labeled) {
  PreferenceRecord rec;
  rec.id = split + "-" + std::to_string(index);
  rec.split = split;
  rec.domain = spec.domain;
  rec.input = make_input(rng, spec, index);
  const std::vector<double> tilt = make_input_tilt(rng, spec);

  for (int attempt = 0;; ++attempt) {
    if (attempt >= kPairBudget) {
      throw GenerationError("generate_corpus: margin filter exhausted budget at record " +
                            rec.id + " (margin " + std::to_string(spec.margin) + ")");
    }
    rec.response_a = make_response(rng, spec, tilt);
    rec.response_b = make_response(rng, spec, tilt);
    if (rec.response_a == rec.response_b) continue;
    const double du = oracle_utility(spec, rec.input, rec.response_a) -
                      oracle_utility(spec, rec.input, rec.response_b);
    if (spec.noise == UtilitySpec::Noise::Deterministic) {
      if (std::abs(du) < spec.margin) continue;
      rec.label = du > 0 ? Label::A : Label::B;
    } else {
      const double p_a = 1.0 / (1.0 + std::exp(-spec.beta * du));
      rec.label = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p_a ? Label::A
                                                                              : Label::B;
    }
    break;
  }
  if (!labeled) rec.label.reset();
  return rec;
}

}  // namespace

std::vector<PreferenceRecord> Corpus::split(std::string_view name) const {
  std::vector<PreferenceRecord> out;
  for (const auto& r : records) {
    if (r.split == name) out.push_back(r);
  }
  return out;
}

Corpus generate_corpus(const UtilitySpec& spec_id, const UtilitySpec& spec_ood,
                       const SplitSizes& sizes, std::uint64_t seed,
                       const UtilitySpec* unlabeled_spec) {
  if (spec_id.alphabet != spec_ood.alphabet) {
    throw ContractError("generate_corpus: specs must share an alphabet");
  }
  Corpus corpus;
  auto emit = [&](const std::string& split, std::size_t count, const UtilitySpec& spec,
                  bool labeled, std::uint64_t salt) {
    for (std::size_t i = 0; i < count; ++i) {
      // per-record derived seed keeps generation order-independent
      std::mt19937_64 rng(util::fnv1a64(split, seed ^ (salt * 0x9e3779b97f4a7c15ull)) ^ i);
      corpus.records.push_back(make_record(spec, rng, split, i, labeled));
    }
  };
  if (unlabeled_spec) {
    // broad unlabeled pool: alternate the two generators so the split
    // covers both surface forms (labels are dropped either way)
    for (std::size_t i = 0; i < sizes.pretrain; ++i) {
      std::mt19937_64 rng(
          util::fnv1a64("pretrain-unlabeled", seed ^ 0x9e3779b97f4a7c15ull) ^ i);
      const UtilitySpec& spec = i % 2 == 0 ? spec_id : *unlabeled_spec;
      corpus.records.push_back(make_record(spec, rng, "pretrain-unlabeled", i, false));
    }
  } else {
    emit("pretrain-unlabeled", sizes.pretrain, spec_id, false, 1);
  }
  emit("finetune", sizes.finetune, spec_id, true, 2);
  emit("adapt", sizes.adapt, spec_id, true, 3);
  emit("test-id", sizes.test_id, spec_id, true, 4);
  emit("test-ood", sizes.test_ood, spec_ood, true, 5);
  return corpus;
}

// ------------------------------------------------------------------ JSONL

namespace {

const std::set<std::string> kKnownFields = {"id",    "input",  "response_a", "response_b",
                                            "label", "domain", "split"};

bool split_requires_label(const std::string& split) {
  return split == "finetune" || split == "adapt" || split == "test-id" ||
         split == "test-ood";
}

json record_to_json(const PreferenceRecord& r) {
  json j{{"id", r.id},
         {"input", r.input},
         {"response_a", r.response_a},
         {"response_b", r.response_b},
         {"domain", r.domain},
         {"split", r.split}};
  if (r.label) j["label"] = std::string(1, label_char(*r.label));
  return j;
}

}  // namespace

void write_jsonl(const std::string& path, const std::vector<PreferenceRecord>& records) {
  std::ostringstream out;
  for (const auto& r : records) out << record_to_json(r).dump() << "\n";
  util::write_file(path, out.str());
}

std::vector<PreferenceRecord> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IntegrityError("cannot open corpus file: " + path);
  std::vector<PreferenceRecord> records;
  std::set<std::string> seen_ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw IntegrityError(path + ":" + std::to_string(line_no) +
                           ": malformed JSON: " + e.what());
    }
    for (const auto& [key, _] : j.items()) {
      if (!kKnownFields.count(key)) {
        throw IntegrityError(path + ":" + std::to_string(line_no) + ": unknown field '" +
                             key + "'");
      }
    }
    PreferenceRecord r;
    try {
      r.id = j.at("id").get<std::string>();
      r.input = j.at("input").get<std::string>();
      r.response_a = j.at("response_a").get<std::string>();
      r.response_b = j.at("response_b").get<std::string>();
      r.domain = j.at("domain").get<std::string>();
      r.split = j.at("split").get<std::string>();
    } catch (const json::exception& e) {
      throw IntegrityError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (j.contains("label")) {
      const std::string l = j["label"].get<std::string>();
      if (l == "A") {
        r.label = Label::A;
      } else if (l == "B") {
        r.label = Label::B;
      } else {
        throw IntegrityError(path + ":" + std::to_string(line_no) + ": bad label '" + l +
                             "'");
      }
    }
    if (!seen_ids.insert(r.id).second) {
      throw IntegrityError(path + ":" + std::to_string(line_no) + ": duplicate id '" +
                           r.id + "'");
    }
    if (split_requires_label(r.split) && !r.label) {
      throw IntegrityError(path + ":" + std::to_string(line_no) + ": record '" + r.id +
                           "' on split '" + r.split + "' is missing a label");
    }
    if (r.split == "pretrain-unlabeled" && r.label) {
      throw IntegrityError(path + ":" + std::to_string(line_no) + ": record '" + r.id +
                           "' on the unlabeled split carries a label");
    }
    records.push_back(std::move(r));
  }
  return records;
}

namespace {

json spec_to_json(const UtilitySpec& s) {
  return json{{"alphabet", s.alphabet},
              {"unigram", s.unigram},
              {"bigram", s.bigram},
              {"length_weight", s.length_weight},
              {"bias", s.bias},
              {"domain", s.domain},
              {"noise", s.noise == UtilitySpec::Noise::Deterministic ? "deterministic"
                                                                     : "bradley_terry"},
              {"beta", s.beta},
              {"margin", s.margin},
              {"topic_len", s.topic_len},
              {"resp_len_min", s.resp_len_min},
              {"resp_len_max", s.resp_len_max},
              {"resp_noise", s.resp_noise},
              {"tilt_scale", s.tilt_scale}};
}

}  // namespace

std::map<std::string, std::string> write_corpus(const std::string& dir, const Corpus& corpus,
                                                const UtilitySpec& spec_id,
                                                const UtilitySpec& spec_ood,
                                                const SplitSizes& sizes,
                                                std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  const std::vector<std::string> splits = {"pretrain-unlabeled", "finetune", "adapt",
                                           "test-id", "test-ood"};
  std::map<std::string, std::string> paths;
  json hashes;
  for (const auto& s : splits) {
    const auto recs = corpus.split(s);
    if (recs.empty()) continue;
    const std::string path = dir + "/" + s + ".jsonl";
    write_jsonl(path, recs);
    hashes[s + ".jsonl"] = util::to_hex(util::fnv1a64(util::read_file(path)));
    paths[s] = path;
  }
  json manifest{{"spec_id", spec_to_json(spec_id)},
                {"spec_ood", spec_to_json(spec_ood)},
                {"sizes",
                 {{"pretrain", sizes.pretrain},
                  {"finetune", sizes.finetune},
                  {"adapt", sizes.adapt},
                  {"test_id", sizes.test_id},
                  {"test_ood", sizes.test_ood}}},
                {"seed", seed},
                {"hashes", hashes}};
  util::write_file(dir + "/manifest.json", manifest.dump(2) + "\n");
  return paths;
}

}  // namespace gram::data
