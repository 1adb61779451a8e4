#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "semlogue/corpus.hpp"
#include "semlogue/rng.hpp"

using namespace semlogue;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name, const std::string& content) {
  const auto path = fs::temp_directory_path() / ("semlogue_test_" + name);
  std::ofstream(path) << content;
  return path;
}

Dialogue five_turns() {
  Dialogue d;
  d.dialogue_id = "d1";
  d.domains = {"train", "hotel"};
  d.turns = {{Speaker::kUser, "I need a train."},
             {Speaker::kSystem, "Where to?"},
             {Speaker::kUser, "Cambridge, please."},
             {Speaker::kSystem, "Which day?"},
             {Speaker::kUser, "Friday."}};
  d.turns.push_back({Speaker::kSystem, "Booked."});
  return d;
}

std::size_t count(const std::string& s, const std::string& needle) {
  std::size_t n = 0;
  for (auto p = s.find(needle); p != std::string::npos; p = s.find(needle, p + 1)) ++n;
  return n;
}

}  // namespace

TEST_CASE("load_jsonl") {
  const std::string line =
      R"({"dialogue_id":"a","domains":["hotel"],"turns":[{"speaker":"user","text":"hi"},{"speaker":"system","text":"hello"}]})";
  SUBCASE("three valid lines") {
    auto r = load_jsonl(temp_file("ok.jsonl", line + "\n" + line + "\n" + line + "\n"));
    CHECK(r.dialogues.size() == 3);
    CHECK(r.issues.empty());
  }
  SUBCASE("missing turns is reported with its line number") {
    auto r = load_jsonl(temp_file("bad.jsonl", line + "\n{\"dialogue_id\":\"b\"}\n" + line + "\n"));
    CHECK(r.dialogues.size() == 2);
    REQUIRE(r.issues.size() == 1);
    CHECK(r.issues[0].line == 2);
  }
  SUBCASE("empty file") { CHECK_THROWS_AS(load_jsonl(temp_file("empty.jsonl", "")), CorpusError); }
  SUBCASE("missing file") { CHECK_THROWS_AS(load_jsonl("/nonexistent/x.jsonl"), CorpusError); }
}

TEST_CASE("jsonl round trip") {
  std::vector<Dialogue> ds{five_turns()};
  const auto path = fs::temp_directory_path() / "semlogue_rt.jsonl";
  write_jsonl(path, ds);
  auto back = load_jsonl(path).dialogues;
  REQUIRE(back.size() == 1);
  CHECK(dialogue_to_json(back[0]) == dialogue_to_json(ds[0]));
}

TEST_CASE("serialize_context") {
  const Dialogue d = five_turns();
  SUBCASE("target turn 1 starts the dialogue") {
    CHECK(serialize_context(d, 1) ==
          "<domain> train, hotel <domain> <history> STARTOFDIALOGUE <history> <u> I need a train. </u>");
  }
  SUBCASE("window 3 holds the three utterances before the target") {
    // 1-based: target turn 4, history turns 1-3
    CHECK(serialize_context(d, 3, 3) ==
          "<domain> train, hotel <domain> <history> <u> I need a train. </u> <s> Where to? </s> "
          "<history> <u> Cambridge, please. </u>");
    const auto s = serialize_context(d, 5, 3);
    CHECK(s == "<domain> train, hotel <domain> <history> <u> Cambridge, please. </u> "
               "<s> Which day? </s> <history> <u> Friday. </u>");
    CHECK(s.find("Where to") == std::string::npos);
  }
  SUBCASE("empty domains") {
    Dialogue e = d;
    e.domains.clear();
    CHECK(serialize_context(e, 1).rfind("<domain> <domain> <history>", 0) == 0);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(serialize_context(d, 0), CorpusError);
    CHECK_THROWS_AS(serialize_context(d, 2), CorpusError);
    CHECK_THROWS_AS(serialize_context(d, 9), CorpusError);
  }
}

TEST_CASE("examples hold at most window utterances") {
  Dialogue d;
  d.dialogue_id = "long";
  for (int i = 0; i < 20; ++i) {
    d.turns.push_back({i % 2 ? Speaker::kSystem : Speaker::kUser, "utt " + std::to_string(i)});
  }
  std::vector<Dialogue> ds{d};
  for (std::size_t window : {1u, 2u, 3u, 5u}) {
    for (const auto& ex : make_examples(ds, window)) {
      const auto n = count(ex.context_text, "<u>") + count(ex.context_text, "<s>");
      CHECK(n <= window + 1);
      CHECK(d.turns[ex.turn_index].speaker == Speaker::kSystem);
    }
  }
  CHECK(make_examples(ds).size() == 10);
}

TEST_CASE("tokenize and detokenize") {
  CHECK(tokenize("Hello, World!") == std::vector<std::string>{"hello", ",", "world", "!"});
  CHECK(tokenize("<u> hi </u> STARTOFDIALOGUE") ==
        std::vector<std::string>{"<u>", "hi", "</u>", "STARTOFDIALOGUE"});
  CHECK(tokenize("a <unk> b") == std::vector<std::string>{"a", "<unk>", "b"});
  CHECK(detokenize(tokenize("I'd like a table for 2 (tonight), please.")) ==
        "i'd like a table for 2 (tonight), please.");

  Rng rng(4);
  const std::string alphabet = "abcXYZ019 ,.!?'()-:;\"$%\t";
  for (int i = 0; i < 500; ++i) {
    std::string s;
    const auto len = rng.below(40);
    for (std::size_t k = 0; k < len; ++k) s += alphabet[rng.below(alphabet.size())];
    CHECK(normalize_for_compare(detokenize(tokenize(s))) == normalize_for_compare(s));
  }
}

TEST_CASE("strip_tags") {
  CHECK(strip_tags("<domain> hotel <domain> <history> STARTOFDIALOGUE <history> <u> hi there </u>") ==
        "hotel hi there");
}

TEST_CASE("vocab") {
  SUBCASE("decode drops structural ids and stops at eos") {
    const Vocab v = Vocab::build(std::vector<std::vector<std::string>>{{"hi", "there"}}, 10, 1);
    const std::vector<int> ids{Vocab::kBos, v.id("hi"), Vocab::kSep, Vocab::kUnk, v.id("there"), Vocab::kEos,
                               v.id("hi")};
    CHECK(v.decode(ids) == "hi <unk> there");
  }
  SUBCASE("three distinct tokens") {
    std::vector<std::vector<std::string>> corpus{{"b", "a"}, {"c"}};
    auto v = Vocab::build(corpus, 10, 1);
    CHECK(v.size() == 3 + Vocab::reserved_tokens().size());
  }
  SUBCASE("min_freq") {
    std::vector<std::vector<std::string>> corpus{{"x", "x", "y"}};
    auto v = Vocab::build(corpus, 10, 2);
    CHECK(v.id("y") == Vocab::kUnk);
    CHECK(v.id("x") != Vocab::kUnk);
  }
  SUBCASE("ties break lexicographically, size cap") {
    std::vector<std::vector<std::string>> corpus{{"zeta", "alpha", "mid", "mid"}};
    auto v = Vocab::build(corpus, 2, 1);
    const auto base = static_cast<int>(Vocab::reserved_tokens().size());
    CHECK(v.token(base) == "mid");
    CHECK(v.token(base + 1) == "alpha");
    CHECK(v.id("zeta") == Vocab::kUnk);
  }
  SUBCASE("deterministic, checkpoint form") {
    std::vector<std::vector<std::string>> corpus{{"q", "r", "r", "s"}};
    auto a = Vocab::build(corpus, 10, 1), b = Vocab::build(corpus, 10, 1);
    CHECK(a.tokens() == b.tokens());
    CHECK(a.hash() == b.hash());
    CHECK(Vocab::from_tokens(a.tokens()).hash() == a.hash());
    CHECK_THROWS(Vocab::from_tokens({"a", "b"}));
  }
  SUBCASE("encode and decode") {
    std::vector<std::vector<std::string>> corpus{{"hello", "there", "."}};
    auto v = Vocab::build(corpus, 10, 1);
    auto ids = v.encode("Hello there.");
    CHECK(ids.size() == 3);
    ids.insert(ids.begin(), Vocab::kBos);
    ids.push_back(Vocab::kEos);
    ids.push_back(v.id("hello"));
    CHECK(v.decode(ids) == "hello there.");
  }
  SUBCASE("reserved ids fixed") {
    Vocab v;
    CHECK(v.token(Vocab::kPad) == "<pad>");
    CHECK(v.token(Vocab::kEos) == "<eos>");
    CHECK(v.id("<u>") > Vocab::kSep);
  }
}

TEST_CASE("split_dialogues") {
  auto make = [](std::size_t n) {
    std::vector<Dialogue> ds(n);
    for (std::size_t i = 0; i < n; ++i) {
      ds[i].dialogue_id = "d" + std::to_string(i);
      ds[i].turns = {{Speaker::kUser, "x"}};
    }
    return ds;
  };
  auto ids = [](const std::vector<Dialogue>& ds) {
    std::vector<std::string> out;
    for (const auto& d : ds) out.push_back(d.dialogue_id);
    return out;
  };
  const auto hundred = make(100);
  auto s = split_dialogues(hundred, 7);
  CHECK(s.train.size() == 80);
  CHECK(s.validation.size() == 10);
  CHECK(s.test.size() == 10);
  auto again = split_dialogues(hundred, 7);
  CHECK(ids(again.train) == ids(s.train));
  CHECK(ids(again.test) == ids(s.test));

  std::set<std::string> all;
  for (const auto* part : {&s.train, &s.validation, &s.test}) {
    for (const auto& d : *part) CHECK(all.insert(d.dialogue_id).second);
  }
  CHECK(all.size() == 100);

  const auto ten = make(10);
  auto t = split_dialogues(ten, 1);
  CHECK(t.train.size() == 8);
  CHECK(t.validation.size() == 1);
  CHECK(t.test.size() == 1);
  const auto nine = make(9);
  CHECK_THROWS_AS(split_dialogues(nine, 1), CorpusError);
}

TEST_CASE("converters") {
  SUBCASE("multiwoz") {
    auto release = nlohmann::json::parse(R"([{"dialogue_id":"PMUL1.json","services":["hotel","taxi"],
      "turns":[{"speaker":"USER","utterance":"need a hotel","frames":[]},
               {"speaker":"SYSTEM","utterance":"which area?"}]}])");
    auto ds = convert_multiwoz(release);
    REQUIRE(ds.size() == 1);
    CHECK(ds[0].dialogue_id == "PMUL1.json");
    CHECK(ds[0].domains == std::vector<std::string>{"hotel", "taxi"});
    CHECK(ds[0].turns[1].speaker == Speaker::kSystem);
    CHECK(ds[0].turns[1].text == "which area?");
  }
  SUBCASE("personachat") {
    std::istringstream in(
        "1 your persona: i like cats.\n"
        "2 hi , how are you ?\ti am good .\t\ta|b|c\n"
        "3 cool .\tyes .\n"
        "1 __SILENCE__\thello there\n");
    auto ds = convert_personachat(in);
    REQUIRE(ds.size() == 2);
    CHECK(ds[0].turns.size() == 4);
    CHECK(ds[0].turns[0].text == "hi , how are you ?");
    CHECK(ds[0].turns[1].speaker == Speaker::kSystem);
    CHECK(ds[1].turns.size() == 1);
    CHECK(ds[1].turns[0].speaker == Speaker::kSystem);
  }
}
