#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"

namespace semlogue {

enum class Speaker { kUser, kSystem };

std::string_view speaker_name(Speaker s);

struct Turn {
  Speaker speaker = Speaker::kUser;
  std::string text;
};

struct Dialogue {
  std::string dialogue_id;
  std::vector<std::string> domains;
  std::vector<Turn> turns;
};

// Bad input data: missing files, empty corpora, malformed records.
class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LoadIssue {
  std::size_t line = 0;
  std::string message;
};

struct LoadResult {
  std::vector<Dialogue> dialogues;
  std::vector<LoadIssue> issues;
};

// One JSON object per line. Malformed lines are skipped and reported; a file
// with no valid dialogue is a CorpusError.
LoadResult load_jsonl(const std::filesystem::path& path);
Dialogue dialogue_from_json(const nlohmann::json& j);
nlohmann::json dialogue_to_json(const Dialogue& d);
void write_jsonl(const std::filesystem::path& path, std::span<const Dialogue> dialogues);

namespace tags {
inline constexpr std::string_view kDomain = "<domain>";
inline constexpr std::string_view kHistory = "<history>";
inline constexpr std::string_view kUserOpen = "<u>";
inline constexpr std::string_view kUserClose = "</u>";
inline constexpr std::string_view kSystemOpen = "<s>";
inline constexpr std::string_view kSystemClose = "</s>";
inline constexpr std::string_view kStart = "STARTOFDIALOGUE";
}  // namespace tags

// Lowercases and splits on whitespace and punctuation; serialization tags,
// <unk> and STARTOFDIALOGUE survive as single tokens.
std::vector<std::string> tokenize(std::string_view text);
std::string detokenize(std::span<const std::string> tokens);
// Lowercase with all whitespace removed; detokenize(tokenize(s)) preserves it.
std::string normalize_for_compare(std::string_view text);
// Drops serialization tags and STARTOFDIALOGUE, keeping utterance words.
std::string strip_tags(std::string_view text);

// "<domain> d1, d2 <domain> <history> ... <history> <u> current </u>".
// The window counts utterances ending at the current one, so the history block
// holds at most window-1 earlier turns.
std::string serialize_context(const Dialogue& dialogue, std::size_t turn_index,
                              std::size_t window = 3);

struct TrainingExample {
  std::string context_text;
  std::string gold_text;
  std::string dialogue_id;
  std::size_t turn_index = 0;
};

// One example per system turn that has at least one preceding turn.
std::vector<TrainingExample> make_examples(std::span<const Dialogue> dialogues,
                                           std::size_t window = 3);

class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;
  static constexpr int kSep = 4;

  static const std::vector<std::string>& reserved_tokens();

  // Reserved entries only.
  Vocab();
  // Keeps the most frequent tokens with count >= min_freq, at most max_size of
  // them beyond the reserved block; ties break lexicographically.
  static Vocab build(std::span<const std::vector<std::string>> corpus, std::size_t max_size,
                     std::size_t min_freq);
  // Rebuilds from a full id-ordered token list (as stored in checkpoints).
  static Vocab from_tokens(std::vector<std::string> tokens);

  int id(std::string_view token) const;
  const std::string& token(int id) const;
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<int> encode(std::string_view text) const;
  // Skips pad/bos and stops at eos.
  std::string decode(std::span<const int> ids) const;
  std::uint64_t hash() const;

 private:
  void assign(std::vector<std::string> tokens);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

Vocab build_vocab(std::span<const TrainingExample> examples, std::size_t max_size = 8000,
                  std::size_t min_freq = 2);

struct CorpusSplit {
  std::vector<Dialogue> train;
  std::vector<Dialogue> validation;
  std::vector<Dialogue> test;
};

// 8:1:1 by dialogue count; each part keeps input order.
CorpusSplit split_dialogues(std::span<const Dialogue> dialogues, std::uint64_t seed);

// MultiWOZ 2.2 release: a JSON array of dialogues with "services" and turns
// carrying "speaker" (USER/SYSTEM) and "utterance".
std::vector<Dialogue> convert_multiwoz(const nlohmann::json& release);
// PersonaChat / ConvAI2 text release: "N text\tresponse\t\tcandidates" lines,
// numbering restarts at 1 for each dialogue; persona lines are dropped.
std::vector<Dialogue> convert_personachat(std::istream& in);

}  // namespace semlogue
