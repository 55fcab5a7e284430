#pragma once

#include <optional>
#include <string>

namespace gram::data {

enum class Label { A, B };

inline char label_char(Label l) { return l == Label::A ? 'A' : 'B'; }
inline Label label_flip(Label l) { return l == Label::A ? Label::B : Label::A; }

// One (input, response pair, optional label) tuple; the unit of all corpora.
struct PreferenceRecord {
  std::string id;
  std::string input;
  std::string response_a;
  std::string response_b;
  std::optional<Label> label;  // absent on the unlabeled pre-training split
  std::string domain;
  std::string split;  // pretrain-unlabeled | finetune | adapt | test-id | test-ood
};

}  // namespace gram::data
