#include "uzlm/vocab.hpp"

#include <fstream>
#include <stdexcept>

namespace uzlm::tok {

Vocabulary::Vocabulary() {
  for (const char* t : {kPadToken, kUnkToken, kClsToken, kSepToken, kMaskToken}) add(t);
}

int Vocabulary::add(const std::string& token) {
  if (token.empty()) throw std::invalid_argument("empty vocabulary token");
  const auto [it, inserted] = index_.emplace(token, static_cast<int>(tokens_.size()));
  if (!inserted) throw std::invalid_argument("duplicate vocabulary token: " + token);
  tokens_.push_back(token);
  return it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) {
    throw std::out_of_range("token id out of range: " + std::to_string(id));
  }
  return tokens_[static_cast<size_t>(id)];
}

std::optional<int> Vocabulary::id_of(std::string_view token) const {
  const auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

bool Vocabulary::is_continuation(std::string_view token) {
  return token.size() > 2 && token.substr(0, 2) == kContinuationPrefix;
}

void Vocabulary::save(const std::string& path,
                      const std::vector<std::string>& header_comments) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open vocab file for writing: " + path);
  for (const auto& comment : header_comments) out << "# " << comment << "\n";
  for (const auto& token : tokens_) out << token << "\n";
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open vocab file: " + path);
  Vocabulary vocab;
  std::string line;
  int token_index = 0;
  bool in_header = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    // Header comments are "# ..." lines; "##x" continuation tokens never
    // contain a space after the hashes, so this stays unambiguous.
    if (in_header && line.size() >= 2 && line[0] == '#' && line[1] == ' ') continue;
    in_header = false;
    if (line.empty()) throw std::runtime_error("blank token line in vocab file: " + path);
    if (token_index < kNumSpecialTokens) {
      if (line != vocab.token(token_index)) {
        throw std::runtime_error("vocab file must start with the special tokens [PAD],[UNK],[CLS],[SEP],[MASK]; line " +
                                 std::to_string(token_index) + " is '" + line + "'");
      }
    } else {
      vocab.add(line);
    }
    ++token_index;
  }
  if (token_index < kNumSpecialTokens) {
    throw std::runtime_error("vocab file is missing the special tokens: " + path);
  }
  return vocab;
}

}  // namespace uzlm::tok
