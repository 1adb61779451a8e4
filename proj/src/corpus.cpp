#include "semlogue/corpus.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>

#include "semlogue/rng.hpp"

namespace semlogue {

using nlohmann::json;

std::string_view speaker_name(Speaker s) { return s == Speaker::kUser ? "user" : "system"; }

Dialogue dialogue_from_json(const json& j) {
  if (!j.is_object()) throw CorpusError("record is not a JSON object");
  Dialogue d;
  if (!j.contains("dialogue_id") || !j["dialogue_id"].is_string()) {
    throw CorpusError("missing string field \"dialogue_id\"");
  }
  d.dialogue_id = j["dialogue_id"].get<std::string>();
  if (j.contains("domains")) {
    if (!j["domains"].is_array()) throw CorpusError("\"domains\" is not an array");
    for (const auto& dom : j["domains"]) {
      if (!dom.is_string()) throw CorpusError("\"domains\" entry is not a string");
      d.domains.push_back(dom.get<std::string>());
    }
  }
  if (!j.contains("turns")) throw CorpusError("missing field \"turns\"");
  if (!j["turns"].is_array() || j["turns"].empty()) throw CorpusError("\"turns\" must be a non-empty array");
  for (const auto& t : j["turns"]) {
    if (!t.is_object() || !t.contains("speaker") || !t.contains("text") || !t["speaker"].is_string() ||
        !t["text"].is_string()) {
      throw CorpusError("turn needs string fields \"speaker\" and \"text\"");
    }
    const auto speaker = t["speaker"].get<std::string>();
    Turn turn;
    if (speaker == "user") {
      turn.speaker = Speaker::kUser;
    } else if (speaker == "system") {
      turn.speaker = Speaker::kSystem;
    } else {
      throw CorpusError("unknown speaker \"" + speaker + "\"");
    }
    turn.text = t["text"].get<std::string>();
    d.turns.push_back(std::move(turn));
  }
  return d;
}

json dialogue_to_json(const Dialogue& d) {
  json turns = json::array();
  for (const auto& t : d.turns) {
    turns.push_back({{"speaker", std::string(speaker_name(t.speaker))}, {"text", t.text}});
  }
  return {{"dialogue_id", d.dialogue_id}, {"domains", d.domains}, {"turns", std::move(turns)}};
}

LoadResult load_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open corpus file " + path.string());
  LoadResult result;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); })) {
      continue;
    }
    try {
      result.dialogues.push_back(dialogue_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      result.issues.push_back({line_no, std::string("invalid JSON: ") + e.what()});
    } catch (const CorpusError& e) {
      result.issues.push_back({line_no, e.what()});
    }
  }
  if (result.dialogues.empty()) {
    throw CorpusError("no valid dialogues in " + path.string() + " (" +
                      std::to_string(result.issues.size()) + " malformed lines)");
  }
  return result;
}

void write_jsonl(const std::filesystem::path& path, std::span<const Dialogue> dialogues) {
  std::ofstream out(path);
  if (!out) throw CorpusError("cannot write " + path.string());
  for (const auto& d : dialogues) out << dialogue_to_json(d).dump() << '\n';
}

namespace {

constexpr std::array<std::string_view, 6> kBracketTags = {tags::kDomain,     tags::kHistory,
                                                          tags::kUserOpen,   tags::kUserClose,
                                                          tags::kSystemOpen, tags::kSystemClose};

bool is_word_char(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

bool is_tag(std::string_view tok) {
  if (tok == tags::kStart) return true;
  return std::find(kBracketTags.begin(), kBracketTags.end(), tok) != kBracketTags.end();
}

bool attaches_left(std::string_view tok) {
  return tok.size() == 1 && std::string_view(".,!?;:)]}%'").find(tok[0]) != std::string_view::npos;
}

bool attaches_right(std::string_view tok) {
  return tok.size() == 1 && std::string_view("([{$'").find(tok[0]) != std::string_view::npos;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const unsigned char c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      ++i;
      continue;
    }
    if (c == '<') {
      bool matched = false;
      for (auto tag : kBracketTags) {
        if (text.substr(i, tag.size()) == tag) {
          out.emplace_back(tag);
          i += tag.size();
          matched = true;
          break;
        }
      }
      if (matched) continue;
      if (text.substr(i, 5) == "<unk>") {
        out.emplace_back("<unk>");
        i += 5;
        continue;
      }
    }
    if (is_word_char(c)) {
      std::size_t j = i;
      while (j < text.size() && is_word_char(static_cast<unsigned char>(text[j]))) ++j;
      std::string word(text.substr(i, j - i));
      if (word != tags::kStart) {
        for (auto& ch : word) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
      }
      out.push_back(std::move(word));
      i = j;
      continue;
    }
    out.emplace_back(1, static_cast<char>(c));
    ++i;
  }
  return out;
}

std::string detokenize(std::span<const std::string> tokens) {
  std::string out;
  bool glue_next = true;
  for (const auto& tok : tokens) {
    if (!glue_next && !attaches_left(tok)) out.push_back(' ');
    out += tok;
    glue_next = attaches_right(tok);
  }
  return out;
}

std::string normalize_for_compare(std::string_view text) {
  std::string out;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) continue;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

std::string strip_tags(std::string_view text) {
  std::vector<std::string> kept;
  for (auto& tok : tokenize(text)) {
    if (!is_tag(tok)) kept.push_back(std::move(tok));
  }
  return detokenize(kept);
}

std::string serialize_context(const Dialogue& dialogue, std::size_t turn_index, std::size_t window) {
  if (turn_index == 0 || turn_index >= dialogue.turns.size()) {
    throw CorpusError("serialize_context: turn " + std::to_string(turn_index) +
                      " has no preceding utterance in dialogue " + dialogue.dialogue_id);
  }
  if (dialogue.turns[turn_index].speaker != Speaker::kSystem) {
    throw CorpusError("serialize_context: turn " + std::to_string(turn_index) + " of " +
                      dialogue.dialogue_id + " is not a system turn");
  }
  if (window == 0) throw CorpusError("serialize_context: window must be at least 1");

  auto wrap = [](const Turn& t) {
    const bool user = t.speaker == Speaker::kUser;
    std::string s(user ? tags::kUserOpen : tags::kSystemOpen);
    s += ' ';
    s += t.text;
    s += ' ';
    s += user ? tags::kUserClose : tags::kSystemClose;
    return s;
  };

  std::string out(tags::kDomain);
  out += ' ';
  for (std::size_t i = 0; i < dialogue.domains.size(); ++i) {
    if (i) out += ", ";
    out += dialogue.domains[i];
  }
  if (!dialogue.domains.empty()) out += ' ';
  out += tags::kDomain;
  out += ' ';
  out += tags::kHistory;

  const std::size_t current = turn_index - 1;
  const std::size_t first = turn_index > window ? turn_index - window : 0;
  if (first == current) {
    out += ' ';
    out += tags::kStart;
  } else {
    for (std::size_t i = first; i < current; ++i) {
      out += ' ';
      out += wrap(dialogue.turns[i]);
    }
  }
  out += ' ';
  out += tags::kHistory;
  out += ' ';
  out += wrap(dialogue.turns[current]);
  return out;
}

std::vector<TrainingExample> make_examples(std::span<const Dialogue> dialogues, std::size_t window) {
  std::vector<TrainingExample> out;
  for (const auto& d : dialogues) {
    for (std::size_t t = 1; t < d.turns.size(); ++t) {
      if (d.turns[t].speaker != Speaker::kSystem) continue;
      out.push_back({serialize_context(d, t, window), d.turns[t].text, d.dialogue_id, t});
    }
  }
  return out;
}

const std::vector<std::string>& Vocab::reserved_tokens() {
  static const std::vector<std::string> reserved = {
      "<pad>",
      "<unk>",
      "<bos>",
      "<eos>",
      "<sep>",
      std::string(tags::kDomain),
      std::string(tags::kHistory),
      std::string(tags::kUserOpen),
      std::string(tags::kUserClose),
      std::string(tags::kSystemOpen),
      std::string(tags::kSystemClose),
      std::string(tags::kStart),
  };
  return reserved;
}

Vocab::Vocab() { assign(reserved_tokens()); }

void Vocab::assign(std::vector<std::string> tokens) {
  const auto& reserved = reserved_tokens();
  if (tokens.size() < reserved.size() || !std::equal(reserved.begin(), reserved.end(), tokens.begin())) {
    throw CorpusError("vocabulary does not start with the reserved block");
  }
  std::unordered_map<std::string, int> index;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (!index.emplace(tokens[i], static_cast<int>(i)).second) {
      throw CorpusError("duplicate vocabulary entry \"" + tokens[i] + "\"");
    }
  }
  tokens_ = std::move(tokens);
  index_ = std::move(index);
}

Vocab Vocab::from_tokens(std::vector<std::string> tokens) {
  Vocab v;
  v.assign(std::move(tokens));
  return v;
}

Vocab Vocab::build(std::span<const std::vector<std::string>> corpus, std::size_t max_size,
                   std::size_t min_freq) {
  const auto& reserved = reserved_tokens();
  std::map<std::string, std::size_t> counts;
  for (const auto& doc : corpus) {
    for (const auto& tok : doc) {
      if (std::find(reserved.begin(), reserved.end(), tok) != reserved.end()) continue;
      ++counts[tok];
    }
  }
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (auto& [tok, n] : counts) {
    if (n >= min_freq) ranked.emplace_back(tok, n);
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (ranked.size() > max_size) ranked.resize(max_size);
  std::vector<std::string> tokens = reserved;
  for (auto& [tok, n] : ranked) tokens.push_back(tok);
  return from_tokens(std::move(tokens));
}

int Vocab::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw CorpusError("token id " + std::to_string(id) + " outside vocabulary");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocab::encode(std::string_view text) const {
  std::vector<int> ids;
  for (const auto& tok : tokenize(text)) ids.push_back(id(tok));
  return ids;
}

std::string Vocab::decode(std::span<const int> ids) const {
  std::vector<std::string> toks;
  for (int id : ids) {
    if (id == kEos) break;
    if (id == kPad || id == kBos || id == kSep) continue;
    toks.push_back(token(id));
  }
  return detokenize(toks);
}

std::uint64_t Vocab::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& tok : tokens_) {
    for (unsigned char c : tok) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    h ^= 0xff;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Vocab build_vocab(std::span<const TrainingExample> examples, std::size_t max_size,
                  std::size_t min_freq) {
  std::vector<std::vector<std::string>> docs;
  docs.reserve(examples.size() * 2);
  for (const auto& ex : examples) {
    docs.push_back(tokenize(ex.context_text));
    docs.push_back(tokenize(ex.gold_text));
  }
  return Vocab::build(docs, max_size, min_freq);
}

CorpusSplit split_dialogues(std::span<const Dialogue> dialogues, std::uint64_t seed) {
  const std::size_t n = dialogues.size();
  if (n < 10) throw CorpusError("split needs at least 10 dialogues, got " + std::to_string(n));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  const auto tenth = static_cast<std::size_t>(std::llround(static_cast<double>(n) / 10.0));
  const std::size_t n_train = n - 2 * tenth;
  auto take = [&](std::size_t from, std::size_t count) {
    std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(from),
                                 order.begin() + static_cast<std::ptrdiff_t>(from + count));
    std::sort(idx.begin(), idx.end());
    std::vector<Dialogue> part;
    part.reserve(idx.size());
    for (auto i : idx) part.push_back(dialogues[i]);
    return part;
  };
  CorpusSplit s;
  s.train = take(0, n_train);
  s.validation = take(n_train, tenth);
  s.test = take(n_train + tenth, tenth);
  return s;
}

std::vector<Dialogue> convert_multiwoz(const json& release) {
  if (!release.is_array()) throw CorpusError("MultiWOZ release must be a JSON array of dialogues");
  std::vector<Dialogue> out;
  for (const auto& raw : release) {
    if (!raw.is_object() || !raw.contains("turns")) continue;
    Dialogue d;
    d.dialogue_id = raw.value("dialogue_id", "multiwoz-" + std::to_string(out.size()));
    if (raw.contains("services") && raw["services"].is_array()) {
      for (const auto& s : raw["services"]) {
        if (s.is_string()) d.domains.push_back(s.get<std::string>());
      }
    }
    for (const auto& t : raw["turns"]) {
      if (!t.is_object()) continue;
      auto speaker = t.value("speaker", std::string());
      std::transform(speaker.begin(), speaker.end(), speaker.begin(),
                     [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
      if (speaker != "user" && speaker != "system") continue;
      d.turns.push_back({speaker == "user" ? Speaker::kUser : Speaker::kSystem,
                         t.value("utterance", std::string())});
    }
    if (!d.turns.empty()) out.push_back(std::move(d));
  }
  return out;
}

std::vector<Dialogue> convert_personachat(std::istream& in) {
  std::vector<Dialogue> out;
  Dialogue current;
  auto flush = [&] {
    if (!current.turns.empty()) {
      current.dialogue_id = "personachat-" + std::to_string(out.size());
      out.push_back(std::move(current));
    }
    current = Dialogue{};
  };
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto space = line.find(' ');
    if (space == std::string::npos) continue;
    const std::string number = line.substr(0, space);
    if (number.empty() || !std::all_of(number.begin(), number.end(), ::isdigit)) continue;
    if (number == "1") flush();
    std::string body = line.substr(space + 1);
    if (body.rfind("your persona:", 0) == 0 || body.rfind("partner's persona:", 0) == 0) continue;
    const auto tab = body.find('\t');
    if (tab == std::string::npos) continue;
    std::string user = body.substr(0, tab);
    std::string rest = body.substr(tab + 1);
    std::string system = rest.substr(0, rest.find('\t'));
    if (user != "__SILENCE__") current.turns.push_back({Speaker::kUser, user});
    current.turns.push_back({Speaker::kSystem, system});
  }
  flush();
  return out;
}

}  // namespace semlogue
