#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace uzlm::tok {

inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;
inline constexpr int kClsId = 2;
inline constexpr int kSepId = 3;
inline constexpr int kMaskId = 4;
inline constexpr int kNumSpecialTokens = 5;

inline constexpr const char* kPadToken = "[PAD]";
inline constexpr const char* kUnkToken = "[UNK]";
inline constexpr const char* kClsToken = "[CLS]";
inline constexpr const char* kSepToken = "[SEP]";
inline constexpr const char* kMaskToken = "[MASK]";

inline constexpr const char* kContinuationPrefix = "##";

// Ordered token list; the index is the token id. Ids 0..4 are always
// [PAD], [UNK], [CLS], [SEP], [MASK]. Immutable once built, safe to share.
class Vocabulary {
 public:
  // Constructs a vocabulary holding only the special tokens.
  Vocabulary();

  // Appends a token; throws std::invalid_argument on duplicates.
  int add(const std::string& token);

  int size() const { return static_cast<int>(tokens_.size()); }
  const std::string& token(int id) const;
  std::optional<int> id_of(std::string_view token) const;
  bool contains(std::string_view token) const { return id_of(token).has_value(); }

  static bool is_special_id(int id) { return id >= 0 && id < kNumSpecialTokens; }
  static bool is_continuation(std::string_view token);

  const std::vector<std::string>& tokens() const { return tokens_; }

  // File format: optional leading "# ..." comment lines, then one token per
  // line; the line index among token lines is the token id. The first five
  // token lines must be the special tokens in their fixed order.
  void save(const std::string& path, const std::vector<std::string>& header_comments = {}) const;
  static Vocabulary load(const std::string& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace uzlm::tok
