#include "gram/vocab.hpp"

namespace gram::lm {

std::string_view special_surface(int id) {
  switch (id) {
    case tok::kPad: return "";
    case tok::kBos: return "";
    case tok::kSepInput: return "\n[Input]\n";
    case tok::kSepRespA: return "\n[Response A]\n";
    case tok::kSepRespB: return "\n[Response B]\n";
    case tok::kLabelA: return "A";
    case tok::kLabelB: return "B";
    default: return "";
  }
}

int Vocab::byte_to_id(char c) const {
  if (c == '\n') return tok::kNewline;
  const unsigned char u = static_cast<unsigned char>(c);
  if (u >= 0x20 && u <= 0x7e) return tok::kByteBase + (u - 0x20);
  throw VocabError("byte outside vocabulary: code " + std::to_string(u));
}

std::vector<int> Vocab::encode(std::string_view text) const {
  std::vector<int> ids;
  ids.reserve(text.size());
  for (char c : text) ids.push_back(byte_to_id(c));
  return ids;
}

std::string Vocab::decode_one(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= kSize) {
    throw VocabError("token id out of range: " + std::to_string(id));
  }
  if (id == tok::kNewline) return "\n";
  if (id >= tok::kByteBase) {
    return std::string(1, static_cast<char>(0x20 + (id - tok::kByteBase)));
  }
  return std::string(special_surface(id));
}

std::string Vocab::decode(const std::vector<int>& ids) const {
  std::string out;
  for (int id : ids) out += decode_one(id);
  return out;
}

namespace {
constexpr std::string_view kPreferredMarker = "\n# Preferred:";
}

std::string JudgeInput::template_text() const {
  const std::string_view first = transposed ? response_b : response_a;
  const std::string_view second = transposed ? response_a : response_b;
  std::string s;
  s += prompt;
  s += special_surface(tok::kSepInput);
  s += input;
  s += special_surface(tok::kSepRespA);
  s += first;
  s += special_surface(tok::kSepRespB);
  s += second;
  s += kPreferredMarker;
  return s;
}

JudgeInput encode_judge(const Vocab& vocab, std::string_view c, std::string_view x,
                        std::string_view y_a, std::string_view y_b, bool transposed,
                        std::size_t max_len) {
  if (y_a.empty() || y_b.empty()) {
    throw ContractError("encode_judge: empty response rejected");
  }
  JudgeInput ji;
  ji.prompt = std::string(c);
  ji.input = std::string(x);
  ji.response_a = std::string(y_a);
  ji.response_b = std::string(y_b);
  ji.transposed = transposed;

  const std::string_view first = transposed ? y_b : y_a;
  const std::string_view second = transposed ? y_a : y_b;

  auto& ids = ji.ids;
  ids.push_back(tok::kBos);
  for (char ch : c) ids.push_back(vocab.byte_to_id(ch));
  ids.push_back(tok::kSepInput);
  for (char ch : x) ids.push_back(vocab.byte_to_id(ch));
  ids.push_back(tok::kSepRespA);
  const std::size_t first_begin = ids.size();
  for (char ch : first) ids.push_back(vocab.byte_to_id(ch));
  const std::size_t first_end = ids.size();
  ids.push_back(tok::kSepRespB);
  const std::size_t second_begin = ids.size();
  for (char ch : second) ids.push_back(vocab.byte_to_id(ch));
  const std::size_t second_end = ids.size();
  for (char ch : kPreferredMarker) ids.push_back(vocab.byte_to_id(ch));

  if (transposed) {
    ji.a_begin = second_begin;
    ji.a_end = second_end;
    ji.b_begin = first_begin;
    ji.b_end = first_end;
  } else {
    ji.a_begin = first_begin;
    ji.a_end = first_end;
    ji.b_begin = second_begin;
    ji.b_end = second_end;
  }

  if (ids.size() > max_len) {
    throw TruncationError("encode_judge: sequence length " + std::to_string(ids.size()) +
                          " exceeds context " + std::to_string(max_len));
  }
  return ji;
}

}  // namespace gram::lm
