#include "disent/corpus.h"

#include <random>
#include <sstream>

#include "doctest.h"

using namespace disent;

TEST_CASE("parse_log_line handles user, system and minimal lines") {
  auto u = parse_log_line(
      "[02:26] <zelot> hi, where can i get some help in regards to issues "
      "with mount?");
  REQUIRE(u.has_value());
  CHECK(u->hour == 2);
  CHECK(u->minute == 26);
  CHECK(u->speaker == "zelot");
  CHECK_FALSE(u->is_system);

  auto sys = parse_log_line("[02:26] === zelot joined the channel");
  REQUIRE(sys.has_value());
  CHECK(sys->hour == 2);
  CHECK(sys->minute == 26);
  CHECK(sys->speaker == kSystemSpeaker);
  CHECK(sys->is_system);
  CHECK(sys->raw_text == "zelot joined the channel");

  auto min = parse_log_line("[00:00] <a> x");
  REQUIRE(min.has_value());
  CHECK(min->hour == 0);
  CHECK(min->minute == 0);
  CHECK(min->speaker == "a");
  CHECK(min->raw_text == "x");
}

TEST_CASE("parse_log_line rejects malformed lines and skips blanks") {
  CHECK_FALSE(parse_log_line("").has_value());
  CHECK_FALSE(parse_log_line("   \t").has_value());
  CHECK_THROWS_AS(parse_log_line("[2x:26] <a> hi", 7), DataError);
  CHECK_THROWS_AS(parse_log_line("[24:00] <a> hi", 7), DataError);
  CHECK_THROWS_AS(parse_log_line("[02:61] <a> hi", 7), DataError);
  CHECK_THROWS_AS(parse_log_line("no timestamp here", 3), DataError);
  CHECK_THROWS_AS(parse_log_line("[02:26] zelot hi", 3), DataError);
  CHECK_THROWS_AS(parse_log_line("[02:26] <> hi", 3), DataError);
  // line number is carried in the error message
  try {
    parse_log_line("[02:26] broken", 42);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("42") != std::string::npos);
  }
}

TEST_CASE("tokenize lowercases, splits, and peels punctuation") {
  CHECK(tokenize("TuxThePenguin, try booting") ==
        std::vector<std::string>{"tuxthepenguin", ",", "try", "booting"});
  CHECK(tokenize("") == std::vector<std::string>{});
  CHECK(tokenize("A  B") == std::vector<std::string>{"a", "b"});
  CHECK(tokenize("(hi!)") == std::vector<std::string>{"(", "hi", "!", ")"});
  CHECK(tokenize("don't stop") == std::vector<std::string>{"don't", "stop"});
  CHECK(tokenize("zelot: ok") == std::vector<std::string>{"zelot", ":", "ok"});
  CHECK(tokenize("...") == std::vector<std::string>{".", ".", "."});
  CHECK(tokenize("?") == std::vector<std::string>{"?"});
}

TEST_CASE("load_annotations applies offset, dedups, and validates") {
  AnnotationOptions opts;
  opts.index_offset = 1000;
  auto links = load_annotations("1002 1005 -\n", opts);
  REQUIRE(links.size() == 1);
  CHECK(links[0].child == 5);
  CHECK(links[0].parent == 2);

  auto self = load_annotations("7 7 -\n");
  REQUIRE(self.size() == 1);
  CHECK(self[0].is_self());
  CHECK(self[0].child == 7);

  CHECK_THROWS_AS(load_annotations("3 1 -\n"), DataError);
  CHECK_THROWS_AS(load_annotations("a b -\n"), DataError);

  auto dedup = load_annotations("1 2 -\n1 2 -\n1 3 -\n");
  CHECK(dedup.size() == 2);

  AnnotationOptions swapped;
  swapped.child_first = true;
  auto sw = load_annotations("5 2 -\n", swapped);
  REQUIRE(sw.size() == 1);
  CHECK(sw[0].child == 5);
  CHECK(sw[0].parent == 2);
}

namespace {

Corpus toy_corpus() {
  ChatFile f;
  f.name = "toy";
  auto add = [&](int h, int m, const std::string& spk, const std::string& text,
                 bool sys = false) {
    Utterance u;
    u.index = static_cast<int>(f.utterances.size());
    u.hour = h;
    u.minute = m;
    u.speaker = sys ? kSystemSpeaker : spk;
    u.raw_text = text;
    u.is_system = sys;
    u.tokens = tokenize(text);
    f.utterances.push_back(u);
  };
  add(2, 26, "", "zelot joined the channel", true);
  add(2, 26, "zelot", "hi, where can i get some help with mount?");
  add(2, 26, "TuxThePenguin", "After taking it out");
  add(2, 27, "Bashing-om", "zelot: if you are on a supported release");
  add(2, 27, "pnunn", "TuxThePenguin, sounds like there is on board graphics");
  Corpus c;
  c.files.push_back(f);
  return c;
}

}  // namespace

TEST_CASE("build_vocabulary keeps speakers and reserves unk/pad") {
  Corpus corpus = toy_corpus();
  Vocabulary vocab = build_vocabulary(corpus, 2);

  CHECK(vocab.token(Vocabulary::kUnknown) == std::string("<unk>"));
  CHECK(vocab.lookup("<unk>") == Vocabulary::kUnknown);
  CHECK(vocab.lookup("<pad>") == Vocabulary::kPadding);

  // speakers survive min_count and are case-folded
  CHECK(vocab.lookup("tuxthepenguin") != Vocabulary::kUnknown);
  CHECK(vocab.lookup("bashing-om") != Vocabulary::kUnknown);
  CHECK(vocab.lookup("zelot") != Vocabulary::kUnknown);
  // a once-off message word dies below min_count 2
  CHECK(vocab.lookup("graphics") == Vocabulary::kUnknown);
  // mention detection by id equality is possible
  Utterance mention = corpus.files[0].utterances[3];
  auto ids = token_ids(mention, vocab);
  CHECK(ids[0] == vocab.lookup("zelot"));
}

TEST_CASE("build_vocabulary orders by frequency then lexicographically") {
  ChatFile f;
  f.name = "t";
  Utterance u;
  u.index = 0;
  u.speaker = "s";
  u.raw_text = "bb aa bb aa cc";
  u.tokens = tokenize(u.raw_text);
  f.utterances.push_back(u);
  Corpus c;
  c.files.push_back(f);
  Vocabulary vocab = build_vocabulary(c, 1);
  // aa and bb tie at 2, lexicographically smaller first
  CHECK(vocab.lookup("aa") < vocab.lookup("bb"));
  CHECK(vocab.lookup("bb") < vocab.lookup("cc"));
  CHECK(vocab.lookup("aa") == 2);
}

TEST_CASE("vocabulary growth appends fresh ids") {
  Vocabulary vocab;
  int before = vocab.size();
  int id = vocab.lookup_or_grow("newspeaker");
  CHECK(id == before);
  CHECK(vocab.size() == before + 1);
  CHECK(vocab.lookup_or_grow("newspeaker") == id);
}

TEST_CASE("corpus_stats on tiny fixtures") {
  SUBCASE("single utterance with self-link") {
    ChatFile f;
    f.name = "one";
    Utterance u;
    u.index = 0;
    u.speaker = "a";
    u.raw_text = "x";
    u.tokens = tokenize("x");
    f.utterances.push_back(u);
    f.links.push_back({0, 0});
    auto s = corpus_stats(f);
    CHECK(s.total_links == 1);
    CHECK(s.total_conversations == 1);
    CHECK(s.avg_link_distance == doctest::Approx(0.0));
    CHECK(s.avg_parents_per_utterance == doctest::Approx(1.0));
  }
  SUBCASE("chain 0<-1<-2") {
    ChatFile f;
    f.name = "chain";
    for (int i = 0; i < 3; ++i) {
      Utterance u;
      u.index = i;
      u.speaker = "a";
      u.raw_text = "x";
      u.tokens = tokenize("x");
      f.utterances.push_back(u);
    }
    f.links.push_back({1, 0});
    f.links.push_back({2, 1});
    auto s = corpus_stats(f);
    CHECK(s.total_conversations == 1);
    CHECK(s.avg_utterances_per_conversation == doctest::Approx(3.0));
    CHECK(s.total_links == 2);
    CHECK(s.median_link_distance == 1);
  }
  SUBCASE("self-links start their own component unless later linked") {
    ChatFile f;
    f.name = "mix";
    for (int i = 0; i < 4; ++i) {
      Utterance u;
      u.index = i;
      u.speaker = "a";
      u.raw_text = "x";
      u.tokens = tokenize("x");
      f.utterances.push_back(u);
    }
    f.links.push_back({0, 0});
    f.links.push_back({1, 1});
    f.links.push_back({2, 0});  // joins 0's thread
    f.links.push_back({3, 3});
    auto s = corpus_stats(f);
    CHECK(s.total_conversations == 3);
    CHECK(s.total_links == 4);
  }
  SUBCASE("lower median for even counts") {
    ChatFile f;
    f.name = "even";
    for (int i = 0; i < 5; ++i) {
      Utterance u;
      u.index = i;
      u.speaker = "a";
      u.raw_text = "x";
      u.tokens = tokenize("x");
      f.utterances.push_back(u);
    }
    f.links.push_back({1, 0});  // distance 1
    f.links.push_back({4, 1});  // distance 3
    auto s = corpus_stats(f);
    CHECK(s.median_link_distance == 1);
  }
  SUBCASE("dangling index is an integrity error") {
    ChatFile f;
    f.name = "bad";
    Utterance u;
    u.index = 0;
    u.speaker = "a";
    u.raw_text = "x";
    u.tokens = tokenize("x");
    f.utterances.push_back(u);
    f.links.push_back({5, 0});
    CHECK_THROWS_AS(corpus_stats(f), DataError);
  }
}

TEST_CASE("jsonl round-trips parsed utterances") {
  std::mt19937_64 rng(11);
  std::vector<Utterance> utterances;
  const char* texts[] = {"hello there", "try: sudo apt update",
                         "TuxThePenguin, it's fine :)", "", "=== weird ==="};
  for (int i = 0; i < 40; ++i) {
    Utterance u;
    u.index = i;
    u.hour = static_cast<int>(rng() % 24);
    u.minute = static_cast<int>(rng() % 60);
    bool sys = rng() % 7 == 0;
    u.is_system = sys;
    u.speaker = sys ? kSystemSpeaker : ("user" + std::to_string(rng() % 9));
    u.raw_text = texts[rng() % 5];
    u.tokens = tokenize(u.raw_text);
    utterances.push_back(u);
  }
  std::stringstream buf;
  write_jsonl(buf, utterances);
  auto back = read_jsonl(buf, "roundtrip");
  CHECK(back == utterances);

  // and a second serialization is byte-identical
  std::stringstream buf2;
  write_jsonl(buf2, back);
  CHECK(buf2.str() == buf.str());
}

TEST_CASE("read_raw_log tolerates release quirks") {
  std::stringstream in(
      "[02:26] === zelot joined the channel\n"
      "[02:26] <zelot> hi\n"
      "=== netsplit happened\n"
      "[02:27] * pnunn nods quietly\n"
      "\n"
      "[02:28] <TuxThePenguin> back\n");
  auto utterances = read_raw_log(in, "quirks");
  REQUIRE(utterances.size() == 5);
  CHECK(utterances[0].is_system);
  CHECK(utterances[2].is_system);
  CHECK(utterances[2].hour == 2);
  CHECK(utterances[2].minute == 26);  // carried over
  CHECK(utterances[3].speaker == "pnunn");
  CHECK(utterances[3].raw_text == "nods quietly");
  CHECK(utterances[4].index == 4);
}

TEST_CASE("every annotation respects parent <= child at load time") {
  // property: any generated in-order pair loads; any reversed pair throws
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    int a = static_cast<int>(rng() % 100);
    int b = a + static_cast<int>(rng() % 20);
    std::string good = std::to_string(a) + " " + std::to_string(b) + " -";
    auto links = load_annotations(good);
    REQUIRE(links.size() == 1);
    CHECK(links[0].parent <= links[0].child);
    if (a != b) {
      std::string bad = std::to_string(b) + " " + std::to_string(a) + " -";
      CHECK_THROWS_AS(load_annotations(bad), DataError);
    }
  }
}
