#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "disent/common.h"

namespace disent {

// Speaker name used for "=== ..." channel/system lines. Never collides
// with a real nick (angle brackets are stripped from real speakers).
inline constexpr const char* kSystemSpeaker = "<system>";

struct Utterance {
  int index = 0;
  int hour = 0;
  int minute = 0;
  std::string speaker;  // original casing; kSystemSpeaker for system lines
  std::vector<std::string> tokens;
  std::string raw_text;
  bool is_system = false;

  bool operator==(const Utterance&) const = default;
};

// parent <= child always; parent == child encodes a self-link.
struct LinkAnnotation {
  int child = 0;
  int parent = 0;

  bool operator==(const LinkAnnotation&) const = default;
  bool is_self() const { return child == parent; }
};

// Shared word + speaker vocabulary. Ids 0 and 1 are reserved.
class Vocabulary {
 public:
  static constexpr int kUnknown = 0;
  static constexpr int kPadding = 1;

  Vocabulary();

  // kUnknown when the token is absent.
  int lookup(const std::string& token) const;
  bool contains(const std::string& token) const;

  // Appends a fresh id when absent (streaming speaker growth).
  int lookup_or_grow(const std::string& token);

  // Token must be absent; returns its new id.
  int add(const std::string& token);

  int size() const { return static_cast<int>(id_to_token_.size()); }
  const std::string& token(int id) const { return id_to_token_.at(id); }

 private:
  std::unordered_map<std::string, int> token_to_id_;
  std::vector<std::string> id_to_token_;
};

struct CorpusStats {
  long total_links = 0;
  long total_conversations = 0;
  double avg_link_distance = 0.0;
  long median_link_distance = 0;
  double avg_parents_per_utterance = 0.0;
  double avg_utterances_per_conversation = 0.0;
  long median_utterances_per_conversation = 0;
};

struct ChatFile {
  std::string name;
  std::vector<Utterance> utterances;
  std::vector<LinkAnnotation> links;
};

struct Corpus {
  std::vector<ChatFile> files;

  std::size_t total_utterances() const {
    std::size_t n = 0;
    for (const auto& f : files) n += f.utterances.size();
    return n;
  }
};

// --- line-level parsing ---------------------------------------------------

// Strict `[HH:MM] <speaker> text` / `[HH:MM] === text` parser.
// Returns nullopt for blank lines; throws DataError otherwise on a
// malformed line, with line_number in the message. The returned
// Utterance has index 0; callers assign stream positions.
std::optional<Utterance> parse_log_line(std::string_view line,
                                        int line_number = 0);

// Lowercase, split on whitespace, peel leading/trailing punctuation into
// their own tokens ("TuxThePenguin," -> "tuxthepenguin" ",").
std::vector<std::string> tokenize(std::string_view raw_text);

// Speakers are case-folded before vocabulary insertion so mentions match
// message tokens by id.
std::string fold_speaker(std::string_view name);

// --- annotation loading ----------------------------------------------------

struct AnnotationOptions {
  int index_offset = 0;   // subtracted from both columns
  bool child_first = false;  // public releases differ; default parent child
};

// Parses `parent child [ignored...]` lines; dedups; validates parent <= child.
std::vector<LinkAnnotation> load_annotations(std::string_view text,
                                             const AnnotationOptions& opts = {});

// --- vocabulary ------------------------------------------------------------

// Ids by descending frequency, then lexicographic. Speakers always kept
// regardless of min_count.
Vocabulary build_vocabulary(const Corpus& corpus, int min_count = 1);

std::vector<int> token_ids(const Utterance& u, const Vocabulary& vocab);

// --- statistics ------------------------------------------------------------

// Link distance = child - parent; conversations = connected components
// under link union (self-links add no edge). Throws DataError on indices
// outside the utterance range.
CorpusStats corpus_stats(const ChatFile& file);
CorpusStats corpus_stats(const Corpus& corpus);

// --- file I/O ---------------------------------------------------------------

// Canonical JSON-lines: {"i":int,"h":int,"m":int,"s":str,"sys":bool,"text":str}
std::vector<Utterance> read_jsonl(std::istream& in, const std::string& name);
void write_jsonl(std::ostream& out, const std::vector<Utterance>& utterances);
void write_links(std::ostream& out, const std::vector<LinkAnnotation>& links);

// Ingestion adapter for raw IRC ascii logs. Tolerates two release quirks
// the strict parser rejects: bare "=== ..." lines without a timestamp
// (timestamp carried over from the previous line) and "[HH:MM] * nick
// action" lines (nick becomes the speaker).
std::vector<Utterance> read_raw_log(std::istream& in, const std::string& name);

// Loads every log in `dir` (.jsonl canonical or .txt/.log/.ascii.txt raw)
// together with its annotation sidecar (<base>.links or
// <base>.annotation.txt). Files sorted by name.
Corpus load_corpus_dir(const std::filesystem::path& dir,
                       const AnnotationOptions& opts = {});

}  // namespace disent
