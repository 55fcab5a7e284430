#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "gram/errors.hpp"

namespace gram::lm {

// Byte-level vocabulary: a handful of reserved special tokens followed by
// newline and the printable ASCII range. encode/decode round-trips any
// corpus string exactly.
namespace tok {
constexpr int kPad = 0;
constexpr int kBos = 1;
constexpr int kSepInput = 2;
constexpr int kSepRespA = 3;
constexpr int kSepRespB = 4;
constexpr int kLabelA = 5;
constexpr int kLabelB = 6;
constexpr int kNewline = 7;
constexpr int kByteBase = 8;  // printable ASCII 0x20..0x7e
}  // namespace tok

class Vocab {
 public:
  static constexpr std::size_t kSize = tok::kByteBase + (0x7e - 0x20 + 1);

  std::size_t size() const { return kSize; }

  // Throws VocabError on bytes outside newline + printable ASCII.
  std::vector<int> encode(std::string_view text) const;
  // Inverse of encode; specials render as their fixed surface strings.
  std::string decode(const std::vector<int>& ids) const;
  std::string decode_one(int id) const;

  int byte_to_id(char c) const;
};

// Serialized judge prompt [c, x, y_a, y_b] with token-span bookkeeping.
// The final token is the preference slot: the next-token distribution
// there is read as the preference distribution.
struct JudgeInput {
  std::string prompt;      // c
  std::string input;       // x
  std::string response_a;  // y_a
  std::string response_b;  // y_b
  bool transposed = false;

  std::vector<int> ids;
  // Half-open token spans of where each raw response landed in ids.
  std::size_t a_begin = 0, a_end = 0;
  std::size_t b_begin = 0, b_end = 0;

  std::size_t slot() const { return ids.size() - 1; }
  // The exact template text the ids detokenize to.
  std::string template_text() const;
};

// Builds the deterministic judge template; transposed=true swaps the
// response texts (c and x stay fixed). Throws ContractError on empty
// responses and TruncationError when the encoding exceeds max_len.
JudgeInput encode_judge(const Vocab& vocab, std::string_view c, std::string_view x,
                        std::string_view y_a, std::string_view y_b, bool transposed,
                        std::size_t max_len);

// Surface strings the special tokens decode to.
std::string_view special_surface(int id);

}  // namespace gram::lm
