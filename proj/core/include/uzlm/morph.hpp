#pragma once

#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace uzlm::morph {

// One suffix transition. `canonical` is the morpheme label reported in
// parses; `surfaces` are the strings that realize it in a word (the label
// itself plus any allomorphs, e.g. нинг surfacing as инг after a stem-final н).
struct Suffix {
  std::string canonical;
  std::vector<std::string> surfaces;
};

// A stem lexicon plus a suffix-chain automaton: a word is accepted when it
// reads as stem followed by any number of suffix transitions ending exactly
// at the last character. All suffixes may repeat, which is what lets the
// да+ги+лар chain grow words without bound.
class SuffixFsm {
 public:
  void add_stem(std::string stem);
  void add_suffix(Suffix suffix);
  void add_cycle(std::vector<std::string> cycle);

  const std::set<std::string>& stems() const { return stems_; }
  const std::vector<Suffix>& suffixes() const { return suffixes_; }
  // Declared repeatable suffix sequences; every member must be a known
  // suffix (checked by add_cycle).
  const std::vector<std::vector<std::string>>& cycles() const { return cycles_; }

  // File format, UTF-8, one entry per line, '#' comments:
  //   [stems]     one stem per line
  //   [suffixes]  canonical form, optionally followed by allomorph surfaces
  //   [cycles]    space-separated suffix sequence
  static SuffixFsm load(const std::string& path);
  void save(const std::string& path) const;

 private:
  std::set<std::string> stems_;
  std::vector<Suffix> suffixes_;
  std::vector<std::vector<std::string>> cycles_;
};

struct MorphParse {
  // Canonical morpheme labels: stem first, then suffixes.
  std::vector<std::string> morphemes;
  // The matched substrings; concatenating them reproduces the word exactly.
  std::vector<std::string> surfaces;
};

// Longest-stem-first parse with longest-suffix-first chaining (backtracking
// over shorter alternatives when a greedy path dead-ends). Returns the first
// parse found, or nullopt when the word is not in the FSM's language.
std::optional<MorphParse> segment_morph(std::string_view word, const SuffixFsm& fsm);

// The stems and suffixes bundled with the toolkit (including the нинг/инг
// allomorph and the да-ги-лар cycle).
SuffixFsm default_suffix_fsm();

}  // namespace uzlm::morph
