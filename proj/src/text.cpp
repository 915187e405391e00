#include "egcnn/text.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <random>

#include "egcnn/errors.hpp"
#include "egcnn/hash.hpp"
#include "json.hpp"

namespace egcnn::text {

using nlohmann::json;

namespace {

bool is_word_byte(unsigned char c) { return c >= 0x80 || std::isalnum(c); }

const std::string kPadToken = "<pad>";
const std::string kUnkToken = "<unk>";

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (is_word_byte(c)) {
      cur.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

// ---- Vocab ----------------------------------------------------------------

Vocab::Vocab() : tokens_{kPadToken, kUnkToken} {}

void Vocab::add(const std::string& token) {
  index_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(token);
}

Vocab Vocab::build(const std::vector<std::vector<std::string>>& corpus, int min_count) {
  if (min_count < 1) throw ContractError("min_count must be >= 1");
  std::map<std::string, std::int64_t> counts;
  for (const auto& doc : corpus)
    for (const auto& t : doc) ++counts[t];
  std::vector<std::pair<std::string, std::int64_t>> kept;
  for (auto& [tok, n] : counts)
    if (n >= min_count) kept.emplace_back(tok, n);
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocab v;
  for (const auto& [tok, n] : kept) v.add(tok);
  return v;
}

Vocab Vocab::from_tokens(const std::vector<std::string>& tokens) {
  Vocab v;
  for (const auto& t : tokens) {
    if (v.index_.count(t)) throw FormatError("duplicate vocabulary token '" + t + "'");
    v.add(t);
  }
  return v;
}

int Vocab::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw IndexError("vocabulary id " + std::to_string(id) + " out of range");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<std::string> Vocab::corpus_tokens() const {
  return {tokens_.begin() + 2, tokens_.end()};
}

std::string Vocab::hash() const {
  Fnv1a h;
  for (std::size_t i = 2; i < tokens_.size(); ++i) {
    h.update(tokens_[i]);
    h.update(std::string_view("\n"));
  }
  h.update(static_cast<std::uint64_t>(tokens_.size()));
  return h.hex();
}

// ---- CharVocab --------------------------------------------------------------

CharVocab::CharVocab() { index_.fill(kUnk); }

CharVocab CharVocab::build(const std::vector<std::vector<std::string>>& corpus) {
  std::array<bool, 256> seen{};
  for (const auto& doc : corpus)
    for (const auto& t : doc)
      for (unsigned char c : t) seen[c] = true;
  std::string chars;
  for (int c = 0; c < 256; ++c)
    if (seen[static_cast<std::size_t>(c)]) chars.push_back(static_cast<char>(c));
  return from_chars(chars);
}

CharVocab CharVocab::from_chars(std::string_view chars) {
  CharVocab v;
  for (unsigned char c : chars) {
    if (v.index_[c] != kUnk) throw FormatError("duplicate character in char vocabulary");
    v.index_[c] = static_cast<int>(v.chars_.size()) + 2;
    v.chars_.push_back(static_cast<char>(c));
  }
  return v;
}

int CharVocab::id(char c) const { return index_[static_cast<unsigned char>(c)]; }

std::string CharVocab::hash() const {
  Fnv1a h;
  h.update(chars_);
  h.update(static_cast<std::uint64_t>(chars_.size()));
  return h.hex();
}

// ---- encoding -------------------------------------------------------------

EncodedReview encode_tokens(const std::vector<std::string>& tokens, double target, int domain_id,
                            const Vocab& vocab, const CharVocab& chars, EncodeShape shape) {
  if (shape.m < 1 || shape.max_word_len < 1) {
    throw ContractError("sentence length and max word length must be >= 1");
  }
  const auto m = static_cast<std::size_t>(shape.m);
  const auto lc = static_cast<std::size_t>(shape.max_word_len);
  EncodedReview out;
  out.domain_id = domain_id;
  out.target = target;
  out.word_ids.assign(m, kPad);
  out.char_ids.assign(m * lc, kPad);
  const std::size_t n = std::min(m, tokens.size());
  out.tokens.assign(tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(n));
  for (std::size_t i = 0; i < n; ++i) {
    out.word_ids[i] = vocab.id(tokens[i]);
    const std::string& t = tokens[i];
    for (std::size_t j = 0; j < std::min(lc, t.size()); ++j) out.char_ids[i * lc + j] = chars.id(t[j]);
  }
  return out;
}

EncodedReview encode_review(const ReviewRecord& record, int domain_id, const Vocab& vocab,
                            const CharVocab& chars, EncodeShape shape) {
  if (record.helpful_total <= 0) {
    throw LabelError("review has zero helpfulness votes; its score is undefined");
  }
  if (record.helpful_yes < 0 || record.helpful_yes > record.helpful_total) {
    throw LabelError("helpful votes " + std::to_string(record.helpful_yes) + " of " +
                     std::to_string(record.helpful_total) + " are inconsistent");
  }
  const double target =
      static_cast<double>(record.helpful_yes) / static_cast<double>(record.helpful_total);
  return encode_tokens(tokenize(record.text), target, domain_id, vocab, chars, shape);
}

// ---- ingestion ------------------------------------------------------------

std::vector<ReviewRecord> ingest_reviews(const std::filesystem::path& path,
                                         const std::string& domain, int min_votes,
                                         IngestStats* stats) {
  std::ifstream in(path);
  if (!in) throw ContractError("cannot open review file " + path.string());
  IngestStats local;
  IngestStats& st = stats ? *stats : local;
  st = IngestStats{};
  std::vector<ReviewRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ++st.lines;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      ++st.malformed;
      continue;
    }
    auto text = j.find("reviewText");
    auto helpful = j.find("helpful");
    if (text == j.end() || helpful == j.end()) {
      ++st.missing_field;
      continue;
    }
    if (!text->is_string() || !helpful->is_array() || helpful->size() != 2 ||
        !(*helpful)[0].is_number_integer() || !(*helpful)[1].is_number_integer()) {
      ++st.malformed;
      continue;
    }
    ReviewRecord r;
    r.text = text->get<std::string>();
    r.helpful_yes = (*helpful)[0].get<std::int64_t>();
    r.helpful_total = (*helpful)[1].get<std::int64_t>();
    r.domain = domain;
    if (r.helpful_yes < 0 || r.helpful_yes > r.helpful_total) {
      ++st.inconsistent;
      continue;
    }
    if (r.helpful_total <= min_votes) {
      ++st.below_votes;
      continue;
    }
    out.push_back(std::move(r));
  }
  st.kept = out.size();
  return out;
}

// ---- splitting ------------------------------------------------------------

const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::dev: return "dev";
    case Split::test: return "test";
  }
  return "?";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "dev") return Split::dev;
  if (name == "test") return Split::test;
  throw ContractError("unknown split '" + std::string(name) + "'");
}

namespace {

// Returns the slice sizes (train, dev, test) for n records.
std::array<std::size_t, 3> slice_sizes(std::size_t n, SplitRatios r, const std::string& domain,
                                       std::vector<std::string>* warnings) {
  if (n < 3) {
    if (warnings) {
      warnings->push_back("domain '" + domain + "' has " + std::to_string(n) +
                          " records; all assigned to train");
    }
    return {n, 0, 0};
  }
  const auto dev = static_cast<std::size_t>(std::llround(static_cast<double>(n) * r.dev));
  const auto test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * r.test));
  if (dev + test >= n) return {n, 0, 0};
  return {n - dev - test, dev, test};
}

void check_ratios(SplitRatios r) {
  if (r.train <= 0 || r.dev < 0 || r.test < 0 || std::abs(r.train + r.dev + r.test - 1.0) > 1e-9) {
    throw ContractError("split ratios must be positive and sum to 1");
  }
}

}  // namespace

Splits<ReviewRecord> split_dataset(const std::vector<ReviewRecord>& records, SplitRatios ratios,
                                   std::uint64_t seed, std::vector<std::string>* warnings) {
  check_ratios(ratios);
  std::vector<std::string> order;
  std::map<std::string, std::vector<std::size_t>> by_domain;
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto [it, fresh] = by_domain.try_emplace(records[i].domain);
    if (fresh) order.push_back(records[i].domain);
    it->second.push_back(i);
  }
  Splits<ReviewRecord> out;
  for (std::size_t d = 0; d < order.size(); ++d) {
    auto& idx = by_domain[order[d]];
    std::mt19937_64 rng(seed * 1000003ULL + d);
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto sizes = slice_sizes(idx.size(), ratios, order[d], warnings);
    std::size_t pos = 0;
    for (int s = 0; s < 3; ++s)
      for (std::size_t k = 0; k < sizes[static_cast<std::size_t>(s)]; ++k)
        out.parts[static_cast<std::size_t>(s)].push_back(records[idx[pos++]]);
  }
  return out;
}

int Dataset::domain_id(std::string_view name) const {
  auto it = std::find(domains.begin(), domains.end(), name);
  if (it == domains.end()) throw ContractError("unknown domain '" + std::string(name) + "'");
  return static_cast<int>(it - domains.begin());
}

Dataset make_dataset(const Splits<LabeledText>& splits, std::vector<std::string> domains,
                     const DatasetOptions& options) {
  std::vector<std::vector<std::string>> corpus;
  for (const auto& r : splits[Split::train]) corpus.push_back(r.tokens);
  Dataset ds;
  ds.shape = options.shape;
  ds.vocab = Vocab::build(corpus, options.min_count);
  ds.chars = CharVocab::build(corpus);
  ds.domains = std::move(domains);
  for (int s = 0; s < 3; ++s) {
    for (const auto& r : splits.parts[static_cast<std::size_t>(s)]) {
      if (r.domain_id < 0 || static_cast<std::size_t>(r.domain_id) >= ds.domains.size()) {
        throw ContractError("record domain id " + std::to_string(r.domain_id) + " out of range");
      }
      if (!(r.target >= 0.0 && r.target <= 1.0)) {
        throw LabelError("target " + std::to_string(r.target) + " outside [0, 1]");
      }
      ds.splits.parts[static_cast<std::size_t>(s)].push_back(
          encode_tokens(r.tokens, r.target, r.domain_id, ds.vocab, ds.chars, ds.shape));
    }
  }
  return ds;
}

Dataset make_dataset(const Splits<ReviewRecord>& splits, const DatasetOptions& options) {
  Splits<LabeledText> labeled;
  std::vector<std::string> domains;
  for (int s = 0; s < 3; ++s) {
    for (const auto& r : splits.parts[static_cast<std::size_t>(s)]) {
      if (r.helpful_total <= 0) {
        throw LabelError("review has zero helpfulness votes; filter before encoding");
      }
      auto it = std::find(domains.begin(), domains.end(), r.domain);
      int d = static_cast<int>(it - domains.begin());
      if (it == domains.end()) domains.push_back(r.domain);
      labeled.parts[static_cast<std::size_t>(s)].push_back(
          {tokenize(r.text),
           static_cast<double>(r.helpful_yes) / static_cast<double>(r.helpful_total), d});
    }
  }
  return make_dataset(labeled, std::move(domains), options);
}

// ---- cache ------------------------------------------------------------------

void save_dataset(const Dataset& ds, const std::filesystem::path& path,
                  const std::string& run_config) {
  json j;
  j["format"] = "egcnn-dataset";
  j["version"] = kDatasetFormatVersion;
  j["m"] = ds.shape.m;
  j["max_word_len"] = ds.shape.max_word_len;
  j["vocab_hash"] = ds.vocab.hash();
  j["char_vocab_hash"] = ds.chars.hash();
  j["domains"] = ds.domains;
  j["vocab"] = ds.vocab.corpus_tokens();
  std::vector<int> char_codes;
  for (unsigned char c : ds.chars.chars()) char_codes.push_back(c);
  j["chars"] = char_codes;
  json records = json::array();
  for (int s = 0; s < 3; ++s) {
    for (const auto& r : ds.splits.parts[static_cast<std::size_t>(s)]) {
      records.push_back({{"split", split_name(static_cast<Split>(s))},
                         {"domain", r.domain_id},
                         {"target", r.target},
                         {"tokens", r.tokens}});
    }
  }
  j["records"] = std::move(records);
  j["run_config"] = json::parse(run_config);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ContractError("cannot write dataset cache " + path.string());
  out << j.dump() << '\n';
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ContractError("cannot open dataset cache " + path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object() || j.value("format", "") != "egcnn-dataset") {
    throw FormatError(path.string() + " is not a dataset cache");
  }
  if (j.value("version", -1) != kDatasetFormatVersion) {
    throw FormatError("dataset cache version " + std::to_string(j.value("version", -1)) +
                      " is not supported (expected " + std::to_string(kDatasetFormatVersion) + ")");
  }
  Dataset ds;
  ds.shape.m = j.at("m").get<int>();
  ds.shape.max_word_len = j.at("max_word_len").get<int>();
  ds.vocab = Vocab::from_tokens(j.at("vocab").get<std::vector<std::string>>());
  std::string chars;
  for (int c : j.at("chars").get<std::vector<int>>()) chars.push_back(static_cast<char>(c));
  ds.chars = CharVocab::from_chars(chars);
  if (ds.vocab.hash() != j.at("vocab_hash").get<std::string>() ||
      ds.chars.hash() != j.at("char_vocab_hash").get<std::string>()) {
    throw FormatError("dataset cache " + path.string() + " fails its vocabulary hash check");
  }
  ds.domains = j.at("domains").get<std::vector<std::string>>();
  for (const auto& r : j.at("records")) {
    const Split s = parse_split(r.at("split").get<std::string>());
    const int d = r.at("domain").get<int>();
    if (d < 0 || static_cast<std::size_t>(d) >= ds.domains.size()) {
      throw FormatError("record domain id out of range in " + path.string());
    }
    ds.splits[s].push_back(encode_tokens(r.at("tokens").get<std::vector<std::string>>(),
                                         r.at("target").get<double>(), d, ds.vocab, ds.chars,
                                         ds.shape));
  }
  return ds;
}

}  // namespace egcnn::text
