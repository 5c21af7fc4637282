#include "uzlm/morph.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace uzlm::morph {

namespace {

std::string trim(std::string_view s) {
  size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::istringstream in(line);
  std::string field;
  while (in >> field) fields.push_back(field);
  return fields;
}

struct Candidate {
  const Suffix* suffix;
  const std::string* surface;
};

}  // namespace

void SuffixFsm::add_stem(std::string stem) {
  if (stem.empty()) throw std::invalid_argument("empty stem");
  stems_.insert(std::move(stem));
}

void SuffixFsm::add_suffix(Suffix suffix) {
  if (suffix.canonical.empty()) throw std::invalid_argument("empty suffix");
  for (const auto& existing : suffixes_) {
    if (existing.canonical == suffix.canonical) {
      throw std::invalid_argument("duplicate suffix: " + suffix.canonical);
    }
  }
  if (std::find(suffix.surfaces.begin(), suffix.surfaces.end(), suffix.canonical) ==
      suffix.surfaces.end()) {
    suffix.surfaces.insert(suffix.surfaces.begin(), suffix.canonical);
  }
  suffixes_.push_back(std::move(suffix));
}

void SuffixFsm::add_cycle(std::vector<std::string> cycle) {
  if (cycle.empty()) throw std::invalid_argument("empty cycle");
  for (const auto& name : cycle) {
    const bool known = std::any_of(suffixes_.begin(), suffixes_.end(),
                                   [&](const Suffix& s) { return s.canonical == name; });
    if (!known) throw std::invalid_argument("cycle references unknown suffix: " + name);
  }
  cycles_.push_back(std::move(cycle));
}

SuffixFsm SuffixFsm::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open FSM file: " + path);
  SuffixFsm fsm;
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']') {
      section = line.substr(1, line.size() - 2);
      if (section != "stems" && section != "suffixes" && section != "cycles") {
        throw std::runtime_error("unknown FSM section [" + section + "] at line " +
                                 std::to_string(line_no));
      }
      continue;
    }
    const auto fields = split_fields(line);
    if (section == "stems") {
      if (fields.size() != 1) {
        throw std::runtime_error("expected one stem per line at line " + std::to_string(line_no));
      }
      fsm.add_stem(fields[0]);
    } else if (section == "suffixes") {
      Suffix suffix;
      suffix.canonical = fields[0];
      suffix.surfaces.assign(fields.begin() + 1, fields.end());
      fsm.add_suffix(std::move(suffix));
    } else if (section == "cycles") {
      fsm.add_cycle(fields);
    } else {
      throw std::runtime_error("entry before any section header at line " +
                               std::to_string(line_no));
    }
  }
  return fsm;
}

void SuffixFsm::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open FSM file for writing: " + path);
  out << "[stems]\n";
  for (const auto& stem : stems_) out << stem << "\n";
  out << "\n[suffixes]\n";
  for (const auto& suffix : suffixes_) {
    out << suffix.canonical;
    for (const auto& surface : suffix.surfaces) {
      if (surface != suffix.canonical) out << " " << surface;
    }
    out << "\n";
  }
  out << "\n[cycles]\n";
  for (const auto& cycle : cycles_) {
    for (size_t i = 0; i < cycle.size(); ++i) out << (i ? " " : "") << cycle[i];
    out << "\n";
  }
}

namespace {

// Depth-first suffix chaining, longest surface first. Returns true when the
// remainder of `word` from `pos` parses to the end.
bool parse_suffix_chain(std::string_view word, size_t pos,
                        const std::vector<Candidate>& candidates, MorphParse& parse) {
  if (pos == word.size()) return true;
  for (const auto& candidate : candidates) {
    const std::string& surface = *candidate.surface;
    if (surface.size() > word.size() - pos) continue;
    if (word.compare(pos, surface.size(), surface) != 0) continue;
    parse.morphemes.push_back(candidate.suffix->canonical);
    parse.surfaces.push_back(surface);
    if (parse_suffix_chain(word, pos + surface.size(), candidates, parse)) return true;
    parse.morphemes.pop_back();
    parse.surfaces.pop_back();
  }
  return false;
}

}  // namespace

std::optional<MorphParse> segment_morph(std::string_view word, const SuffixFsm& fsm) {
  if (word.empty()) return std::nullopt;

  std::vector<Candidate> candidates;
  for (const auto& suffix : fsm.suffixes()) {
    for (const auto& surface : suffix.surfaces) {
      candidates.push_back({&suffix, &surface});
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    if (a.surface->size() != b.surface->size()) return a.surface->size() > b.surface->size();
    if (*a.surface != *b.surface) return *a.surface < *b.surface;
    return a.suffix->canonical < b.suffix->canonical;
  });

  // Longest matching stem first, backing off to shorter stems if the suffix
  // chain dead-ends.
  std::vector<const std::string*> stem_matches;
  for (const auto& stem : fsm.stems()) {
    if (stem.size() <= word.size() && word.compare(0, stem.size(), stem) == 0) {
      stem_matches.push_back(&stem);
    }
  }
  std::sort(stem_matches.begin(), stem_matches.end(),
            [](const std::string* a, const std::string* b) {
              if (a->size() != b->size()) return a->size() > b->size();
              return *a < *b;
            });

  for (const std::string* stem : stem_matches) {
    MorphParse parse;
    parse.morphemes.push_back(*stem);
    parse.surfaces.push_back(*stem);
    if (parse_suffix_chain(word, stem->size(), candidates, parse)) return parse;
  }
  return std::nullopt;
}

SuffixFsm default_suffix_fsm() {
  SuffixFsm fsm;
  for (const char* stem : {"мен", "уй", "ют"}) fsm.add_stem(stem);
  fsm.add_suffix({"нинг", {"инг"}});
  for (const char* suffix : {"ган", "лар", "дан", "ми", "сиз", "да", "ги"}) {
    fsm.add_suffix({suffix, {}});
  }
  fsm.add_cycle({"да", "ги", "лар"});
  return fsm;
}

}  // namespace uzlm::morph
