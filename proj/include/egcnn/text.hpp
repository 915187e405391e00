#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace egcnn::text {

inline constexpr int kPad = 0;
inline constexpr int kUnk = 1;
inline constexpr int kDatasetFormatVersion = 1;

// Lowercases and splits on maximal runs of non-alphanumeric characters.
// Bytes >= 0x80 count as word characters so UTF-8 letters stay inside tokens.
std::vector<std::string> tokenize(std::string_view text);

// Token <-> id map. Ids 0 and 1 are PAD and UNK; corpus tokens start at 2.
class Vocab {
 public:
  Vocab();

  // Keeps tokens seen at least min_count times, ordered by (count desc, token asc).
  static Vocab build(const std::vector<std::vector<std::string>>& corpus, int min_count);
  // Tokens in id order starting at id 2.
  static Vocab from_tokens(const std::vector<std::string>& tokens);

  int id(std::string_view token) const;
  const std::string& token(int id) const;
  std::size_t size() const { return tokens_.size(); }
  // Corpus tokens only (ids >= 2).
  std::vector<std::string> corpus_tokens() const;
  std::string hash() const;

 private:
  void add(const std::string& token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

// Character (byte) vocabulary: PAD=0, UNK=1, observed bytes from 2 in ascending order.
class CharVocab {
 public:
  CharVocab();

  static CharVocab build(const std::vector<std::vector<std::string>>& corpus);
  static CharVocab from_chars(std::string_view chars);

  int id(char c) const;
  std::size_t size() const { return chars_.size() + 2; }
  const std::string& chars() const { return chars_; }
  std::string hash() const;

 private:
  std::string chars_;
  std::array<int, 256> index_{};
};

struct ReviewRecord {
  std::string text;
  std::int64_t helpful_yes = 0;
  std::int64_t helpful_total = 0;
  std::string domain;
};

struct EncodedReview {
  std::vector<int> word_ids;     // exactly m
  std::vector<int> char_ids;     // m * max_word_len, row-major per word
  int domain_id = 0;
  double target = 0.0;
  std::vector<std::string> tokens;  // the kept (non-PAD) tokens, <= m
};

struct EncodeShape {
  int m = 100;
  int max_word_len = 16;
};

// Encodes pre-tokenized text with an explicit target in [0, 1].
EncodedReview encode_tokens(const std::vector<std::string>& tokens, double target, int domain_id,
                            const Vocab& vocab, const CharVocab& chars, EncodeShape shape);

// target = helpful_yes / helpful_total; throws LabelError when helpful_total == 0.
EncodedReview encode_review(const ReviewRecord& record, int domain_id, const Vocab& vocab,
                            const CharVocab& chars, EncodeShape shape);

struct IngestStats {
  std::size_t lines = 0;
  std::size_t kept = 0;
  std::size_t malformed = 0;
  std::size_t missing_field = 0;
  std::size_t inconsistent = 0;  // helpful_yes > helpful_total
  std::size_t below_votes = 0;

  std::size_t skipped() const { return malformed + missing_field + inconsistent; }
};

// Reads newline-delimited JSON objects with `reviewText` and `helpful` [a, b];
// keeps records with b > min_votes in file order.
std::vector<ReviewRecord> ingest_reviews(const std::filesystem::path& path,
                                         const std::string& domain, int min_votes = 5,
                                         IngestStats* stats = nullptr);

enum class Split { train = 0, dev = 1, test = 2 };
const char* split_name(Split s);
Split parse_split(std::string_view name);

struct SplitRatios {
  double train = 0.8;
  double dev = 0.1;
  double test = 0.1;
};

template <typename T>
struct Splits {
  std::array<std::vector<T>, 3> parts;

  std::vector<T>& operator[](Split s) { return parts[static_cast<int>(s)]; }
  const std::vector<T>& operator[](Split s) const { return parts[static_cast<int>(s)]; }
};

// Per-domain seeded shuffle followed by contiguous slicing. Domains appear in
// first-seen order; records keep their domain.
Splits<ReviewRecord> split_dataset(const std::vector<ReviewRecord>& records, SplitRatios ratios,
                                   std::uint64_t seed, std::vector<std::string>* warnings = nullptr);

struct Dataset {
  EncodeShape shape;
  Vocab vocab;
  CharVocab chars;
  std::vector<std::string> domains;
  Splits<EncodedReview> splits;

  std::size_t num_domains() const { return domains.size(); }
  int domain_id(std::string_view name) const;
};

struct DatasetOptions {
  EncodeShape shape;
  int min_count = 2;
};

// Builds vocabularies over the train split and encodes every split.
Dataset make_dataset(const Splits<ReviewRecord>& splits, const DatasetOptions& options);

// Same as make_dataset for already-tokenized texts with real-valued targets.
struct LabeledText {
  std::vector<std::string> tokens;
  double target = 0.0;
  int domain_id = 0;
};
Dataset make_dataset(const Splits<LabeledText>& splits, std::vector<std::string> domains,
                     const DatasetOptions& options);

// Dataset cache. Records store their kept tokens and targets; ids are
// recomputed on load and the stored vocab hashes are verified.
// run_config is embedded verbatim (JSON text) for provenance.
void save_dataset(const Dataset& ds, const std::filesystem::path& path,
                  const std::string& run_config = "{}");
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace egcnn::text
