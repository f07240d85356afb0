#include "disent/corpus.h"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

namespace disent {
namespace {

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(),
                     [](unsigned char c) { return std::isspace(c); });
}

std::string_view lstrip(std::string_view s) {
  std::size_t i = 0;
  while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
  return s.substr(i);
}

std::string_view rstrip(std::string_view s) {
  std::size_t n = s.size();
  while (n > 0 && std::isspace(static_cast<unsigned char>(s[n - 1]))) --n;
  return s.substr(0, n);
}

[[noreturn]] void parse_fail(int line_number, const std::string& what) {
  throw DataError("line " + std::to_string(line_number) + ": " + what);
}

// Parses "[HH:MM]" at the front of `s`; advances `s` past it. Returns
// false when `s` does not start with '['; throws on a malformed stamp.
bool take_timestamp(std::string_view& s, int line_number, int& hour,
                    int& minute) {
  if (s.empty() || s[0] != '[') return false;
  std::size_t close = s.find(']');
  std::size_t colon = s.find(':');
  if (close == std::string_view::npos || colon == std::string_view::npos ||
      colon > close)
    parse_fail(line_number, "malformed timestamp");
  auto digits = [&](std::string_view part, int& out) {
    if (part.empty() || part.size() > 2) return false;
    out = 0;
    for (char c : part) {
      if (!std::isdigit(static_cast<unsigned char>(c))) return false;
      out = out * 10 + (c - '0');
    }
    return true;
  };
  if (!digits(s.substr(1, colon - 1), hour) ||
      !digits(s.substr(colon + 1, close - colon - 1), minute) || hour > 23 ||
      minute > 59)
    parse_fail(line_number, "malformed timestamp");
  s.remove_prefix(close + 1);
  s = lstrip(s);
  return true;
}

}  // namespace

std::optional<Utterance> parse_log_line(std::string_view line,
                                        int line_number) {
  line = rstrip(line);
  if (is_blank(line)) return std::nullopt;
  std::string_view s = lstrip(line);

  Utterance u;
  if (!take_timestamp(s, line_number, u.hour, u.minute))
    parse_fail(line_number, "malformed timestamp");

  if (s.rfind("===", 0) == 0) {
    u.is_system = true;
    u.speaker = kSystemSpeaker;
    u.raw_text = std::string(lstrip(s.substr(3)));
  } else if (!s.empty() && s[0] == '<') {
    std::size_t close = s.find('>');
    if (close == std::string_view::npos || close == 1)
      parse_fail(line_number, "missing speaker field");
    u.speaker = std::string(s.substr(1, close - 1));
    u.raw_text = std::string(lstrip(s.substr(close + 1)));
  } else {
    parse_fail(line_number, "missing speaker field");
  }
  u.tokens = tokenize(u.raw_text);
  return u;
}

std::vector<std::string> tokenize(std::string_view raw_text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < raw_text.size()) {
    while (i < raw_text.size() &&
           std::isspace(static_cast<unsigned char>(raw_text[i])))
      ++i;
    std::size_t j = i;
    while (j < raw_text.size() &&
           !std::isspace(static_cast<unsigned char>(raw_text[j])))
      ++j;
    if (j == i) break;
    std::string word;
    word.reserve(j - i);
    for (std::size_t k = i; k < j; ++k)
      word.push_back(static_cast<char>(
          std::tolower(static_cast<unsigned char>(raw_text[k]))));

    // Peel leading/trailing punctuation into their own tokens; a token
    // that is entirely punctuation ends up as single characters.
    std::size_t b = 0, e = word.size();
    std::vector<char> leading, trailing;
    auto punct = [&](char c) {
      return std::ispunct(static_cast<unsigned char>(c));
    };
    while (e - b > 1 && punct(word[b])) leading.push_back(word[b++]);
    while (e - b > 1 && punct(word[e - 1])) trailing.push_back(word[--e]);
    for (char c : leading) out.emplace_back(1, c);
    out.push_back(word.substr(b, e - b));
    for (auto it = trailing.rbegin(); it != trailing.rend(); ++it)
      out.emplace_back(1, *it);
    i = j;
  }
  return out;
}

std::string fold_speaker(std::string_view name) {
  std::string out;
  out.reserve(name.size());
  for (char c : name)
    out.push_back(
        static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  return out;
}

// --- annotations ------------------------------------------------------------

std::vector<LinkAnnotation> load_annotations(std::string_view text,
                                             const AnnotationOptions& opts) {
  std::vector<LinkAnnotation> links;
  std::set<std::pair<int, int>> seen;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (is_blank(line)) continue;
    std::istringstream fields(line);
    long a = 0, b = 0;
    if (!(fields >> a >> b))
      parse_fail(line_number, "expected two integer fields");
    if (opts.child_first) std::swap(a, b);
    if (a > b) parse_fail(line_number, "parent exceeds child");
    LinkAnnotation link{static_cast<int>(b - opts.index_offset),
                       static_cast<int>(a - opts.index_offset)};
    if (seen.insert({link.parent, link.child}).second) links.push_back(link);
  }
  return links;
}

// --- vocabulary ------------------------------------------------------------

Vocabulary::Vocabulary() {
  add("<unk>");
  add("<pad>");
}

int Vocabulary::lookup(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnknown : it->second;
}

bool Vocabulary::contains(const std::string& token) const {
  return token_to_id_.count(token) > 0;
}

int Vocabulary::lookup_or_grow(const std::string& token) {
  auto it = token_to_id_.find(token);
  if (it != token_to_id_.end()) return it->second;
  return add(token);
}

int Vocabulary::add(const std::string& token) {
  int id = size();
  auto [it, inserted] = token_to_id_.emplace(token, id);
  if (!inserted) throw std::logic_error("vocabulary token added twice");
  id_to_token_.push_back(token);
  return id;
}

Vocabulary build_vocabulary(const Corpus& corpus, int min_count) {
  if (min_count < 1) throw std::invalid_argument("min_count must be >= 1");
  // std::map keeps the lexicographic tie-break deterministic.
  std::map<std::string, long> freq;
  std::set<std::string> speakers;
  for (const auto& file : corpus.files) {
    for (const auto& u : file.utterances) {
      for (const auto& t : u.tokens) ++freq[t];
      std::string s = fold_speaker(u.speaker);
      ++freq[s];
      speakers.insert(s);
    }
  }
  std::vector<std::pair<std::string, long>> entries(freq.begin(), freq.end());
  std::stable_sort(entries.begin(), entries.end(),
                   [](const auto& a, const auto& b) {
                     if (a.second != b.second) return a.second > b.second;
                     return a.first < b.first;
                   });
  Vocabulary vocab;
  for (const auto& [token, count] : entries)
    if (count >= min_count || speakers.count(token)) vocab.add(token);
  return vocab;
}

std::vector<int> token_ids(const Utterance& u, const Vocabulary& vocab) {
  std::vector<int> ids;
  ids.reserve(u.tokens.size());
  for (const auto& t : u.tokens) ids.push_back(vocab.lookup(t));
  return ids;
}

// --- statistics ------------------------------------------------------------

namespace {

struct StatsAccumulator {
  std::vector<long> distances;
  std::vector<long> conversation_sizes;
  long links = 0;
  long children = 0;

  void add_file(const ChatFile& file) {
    const long n = static_cast<long>(file.utterances.size());
    std::set<int> members;
    std::set<int> kids;
    for (const auto& link : file.links) {
      if (link.parent < 0 || link.child >= n)
        throw DataError(file.name + ": link index out of range (" +
                        std::to_string(link.parent) + "," +
                        std::to_string(link.child) + ")");
      ++links;
      distances.push_back(link.child - link.parent);
      members.insert(link.child);
      members.insert(link.parent);
      kids.insert(link.child);
    }
    children += static_cast<long>(kids.size());

    // Connected components over link members; self-links add no edge.
    std::map<int, int> root;
    for (int m : members) root[m] = m;
    std::function<int(int)> find = [&](int x) {
      while (root[x] != x) x = root[x] = root[root[x]];
      return x;
    };
    for (const auto& link : file.links)
      if (!link.is_self()) root[find(link.parent)] = find(link.child);
    std::map<int, long> size_of;
    for (int m : members) ++size_of[find(m)];
    for (const auto& [r, size] : size_of) conversation_sizes.push_back(size);
  }

  CorpusStats finish() const {
    CorpusStats s;
    s.total_links = links;
    s.total_conversations = static_cast<long>(conversation_sizes.size());
    auto lower_median = [](std::vector<long> xs) -> long {
      if (xs.empty()) return 0;
      std::size_t k = (xs.size() - 1) / 2;
      std::nth_element(xs.begin(), xs.begin() + k, xs.end());
      return xs[k];
    };
    auto mean = [](const std::vector<long>& xs) -> double {
      if (xs.empty()) return 0.0;
      long sum = 0;
      for (long x : xs) sum += x;
      return static_cast<double>(sum) / static_cast<double>(xs.size());
    };
    s.avg_link_distance = mean(distances);
    s.median_link_distance = lower_median(distances);
    s.avg_parents_per_utterance =
        children == 0 ? 0.0
                      : static_cast<double>(links) / static_cast<double>(children);
    s.avg_utterances_per_conversation = mean(conversation_sizes);
    s.median_utterances_per_conversation = lower_median(conversation_sizes);
    return s;
  }
};

}  // namespace

CorpusStats corpus_stats(const ChatFile& file) {
  StatsAccumulator acc;
  acc.add_file(file);
  return acc.finish();
}

CorpusStats corpus_stats(const Corpus& corpus) {
  StatsAccumulator acc;
  for (const auto& file : corpus.files) acc.add_file(file);
  return acc.finish();
}

// --- file I/O ---------------------------------------------------------------

std::vector<Utterance> read_jsonl(std::istream& in, const std::string& name) {
  std::vector<Utterance> out;
  std::string line;
  int line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (is_blank(line)) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(name + " line " + std::to_string(line_number) + ": " +
                      e.what());
    }
    Utterance u;
    u.index = j.at("i").get<int>();
    u.hour = j.at("h").get<int>();
    u.minute = j.at("m").get<int>();
    u.speaker = j.at("s").get<std::string>();
    u.is_system = j.at("sys").get<bool>();
    u.raw_text = j.at("text").get<std::string>();
    u.tokens = tokenize(u.raw_text);
    if (u.index != static_cast<int>(out.size()))
      throw DataError(name + " line " + std::to_string(line_number) +
                      ": non-consecutive utterance index");
    out.push_back(std::move(u));
  }
  return out;
}

void write_jsonl(std::ostream& out, const std::vector<Utterance>& utterances) {
  for (const auto& u : utterances) {
    nlohmann::json j;
    j["i"] = u.index;
    j["h"] = u.hour;
    j["m"] = u.minute;
    j["s"] = u.speaker;
    j["sys"] = u.is_system;
    j["text"] = u.raw_text;
    out << j.dump() << '\n';
  }
}

void write_links(std::ostream& out, const std::vector<LinkAnnotation>& links) {
  for (const auto& link : links)
    out << link.parent << ' ' << link.child << " -\n";
}

std::vector<Utterance> read_raw_log(std::istream& in, const std::string& name) {
  std::vector<Utterance> out;
  std::string line;
  int line_number = 0;
  int last_hour = 0, last_minute = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (is_blank(line)) continue;
    std::string_view s = lstrip(line);

    Utterance u;
    if (s.rfind("===", 0) == 0) {
      // Release files carry system lines without timestamps.
      u.is_system = true;
      u.speaker = kSystemSpeaker;
      u.hour = last_hour;
      u.minute = last_minute;
      u.raw_text = std::string(lstrip(s.substr(3)));
      u.tokens = tokenize(u.raw_text);
    } else {
      std::string_view rest = s;
      int hour = 0, minute = 0;
      if (!take_timestamp(rest, line_number, hour, minute))
        parse_fail(line_number, name + ": malformed timestamp");
      if (rest.rfind("* ", 0) == 0) {
        // "/me" action lines: first token after '*' is the nick.
        std::string_view body = lstrip(rest.substr(1));
        std::size_t sp = body.find(' ');
        u.hour = hour;
        u.minute = minute;
        u.speaker = std::string(body.substr(0, sp));
        u.raw_text =
            sp == std::string_view::npos ? "" : std::string(lstrip(body.substr(sp)));
        u.tokens = tokenize(u.raw_text);
        if (u.speaker.empty()) parse_fail(line_number, name + ": missing speaker");
      } else {
        auto parsed = parse_log_line(line, line_number);
        if (!parsed) continue;
        u = std::move(*parsed);
      }
    }
    last_hour = u.hour;
    last_minute = u.minute;
    u.index = static_cast<int>(out.size());
    out.push_back(std::move(u));
  }
  return out;
}

namespace {

const char* const kLogSuffixes[] = {".jsonl", ".ascii.txt", ".txt", ".log"};

std::optional<std::string> log_basename(const std::string& filename) {
  for (const char* suffix : kLogSuffixes) {
    std::size_t len = std::string(suffix).size();
    if (filename.size() > len &&
        filename.compare(filename.size() - len, len, suffix) == 0)
      return filename.substr(0, filename.size() - len);
  }
  return std::nullopt;
}

}  // namespace

Corpus load_corpus_dir(const std::filesystem::path& dir,
                       const AnnotationOptions& opts) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir))
    throw DataError("not a directory: " + dir.string());

  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file()) names.push_back(entry.path().filename().string());
  std::sort(names.begin(), names.end());

  Corpus corpus;
  for (const auto& filename : names) {
    auto base = log_basename(filename);
    if (!base) continue;
    if (filename.size() > 15 &&
        filename.compare(filename.size() - 15, 15, ".annotation.txt") == 0)
      continue;  // sidecar, not a log

    fs::path log_path = dir / filename;
    fs::path ann_path = dir / (*base + ".links");
    if (!fs::exists(ann_path)) ann_path = dir / (*base + ".annotation.txt");
    if (!fs::exists(ann_path)) continue;

    ChatFile file;
    file.name = *base;
    std::ifstream log_in(log_path);
    if (!log_in) throw DataError("cannot open " + log_path.string());
    if (log_path.extension() == ".jsonl")
      file.utterances = read_jsonl(log_in, filename);
    else
      file.utterances = read_raw_log(log_in, filename);

    std::ifstream ann_in(ann_path);
    if (!ann_in) throw DataError("cannot open " + ann_path.string());
    std::stringstream buffer;
    buffer << ann_in.rdbuf();
    file.links = load_annotations(buffer.str(), opts);

    const int n = static_cast<int>(file.utterances.size());
    for (const auto& link : file.links)
      if (link.parent < 0 || link.child >= n)
        throw DataError(file.name + ": annotation index out of range");
    corpus.files.push_back(std::move(file));
  }
  if (corpus.files.empty())
    throw DataError("no log/annotation pairs found in " + dir.string());
  return corpus;
}

}  // namespace disent
