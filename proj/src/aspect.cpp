#include "egcnn/aspect.hpp"

#include <algorithm>
#include <fstream>
#include <random>

#include "egcnn/errors.hpp"
#include "egcnn/hash.hpp"
#include "egcnn/text.hpp"
#include "json.hpp"

namespace egcnn::aspect {

using nlohmann::json;

LdaFit fit_aspects(const std::vector<std::vector<int>>& docs, std::size_t vocab_size,
                   const LdaConfig& config) {
  if (config.aspects < 1 || config.beta <= 0.0 || config.iterations < 1) {
    throw ContractError("LDA needs aspects >= 1, beta > 0 and iterations >= 1");
  }
  const auto A = static_cast<std::size_t>(config.aspects);
  const double alpha = config.resolved_alpha();
  const double beta = config.beta;
  const double vbeta = static_cast<double>(vocab_size) * beta;

  // Token stream without PAD/UNK.
  std::vector<std::vector<int>> words(docs.size());
  std::size_t n_tokens = 0;
  for (std::size_t d = 0; d < docs.size(); ++d) {
    for (int w : docs[d]) {
      if (w < 0 || static_cast<std::size_t>(w) >= vocab_size) {
        throw IndexError("word id " + std::to_string(w) + " in document " + std::to_string(d) +
                         " outside vocabulary of " + std::to_string(vocab_size));
      }
      if (w == text::kPad || w == text::kUnk) continue;
      words[d].push_back(w);
    }
    n_tokens += words[d].size();
  }
  if (n_tokens == 0) throw ContractError("cannot fit aspects on an empty corpus");

  std::vector<std::int64_t> topic_word(A * vocab_size, 0), topic_total(A, 0);
  std::vector<std::vector<std::int64_t>> doc_topic(docs.size(), std::vector<std::int64_t>(A, 0));
  std::vector<std::vector<std::size_t>> assign(docs.size());

  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (std::size_t d = 0; d < words.size(); ++d) {
    assign[d].resize(words[d].size());
    for (std::size_t i = 0; i < words[d].size(); ++i) {
      const std::size_t z = static_cast<std::size_t>(unif(rng) * static_cast<double>(A)) % A;
      assign[d][i] = z;
      ++topic_word[z * vocab_size + static_cast<std::size_t>(words[d][i])];
      ++topic_total[z];
      ++doc_topic[d][z];
    }
  }

  std::vector<double> cdf(A);
  for (int it = 0; it < config.iterations; ++it) {
    for (std::size_t d = 0; d < words.size(); ++d) {
      for (std::size_t i = 0; i < words[d].size(); ++i) {
        const auto w = static_cast<std::size_t>(words[d][i]);
        std::size_t z = assign[d][i];
        --topic_word[z * vocab_size + w];
        --topic_total[z];
        --doc_topic[d][z];
        double acc = 0.0;
        for (std::size_t k = 0; k < A; ++k) {
          acc += (static_cast<double>(doc_topic[d][k]) + alpha) *
                 (static_cast<double>(topic_word[k * vocab_size + w]) + beta) /
                 (static_cast<double>(topic_total[k]) + vbeta);
          cdf[k] = acc;
        }
        const double u = unif(rng) * acc;
        z = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
        if (z >= A) z = A - 1;
        assign[d][i] = z;
        ++topic_word[z * vocab_size + w];
        ++topic_total[z];
        ++doc_topic[d][z];
      }
    }
  }

  LdaFit fit;
  fit.phi = Tensor({A, vocab_size});
  for (std::size_t a = 0; a < A; ++a) {
    const double denom = static_cast<double>(topic_total[a]) + vbeta;
    for (std::size_t v = 0; v < vocab_size; ++v) {
      fit.phi.at(a, v) = (static_cast<double>(topic_word[a * vocab_size + v]) + beta) / denom;
    }
  }
  fit.topic_word = std::move(topic_word);
  fit.topic_total = std::move(topic_total);
  return fit;
}

Tensor word_aspect_rep(const Tensor& phi) {
  if (phi.rank() != 2) throw ShapeError("phi must be a matrix, got " + shape_str(phi.shape()));
  const std::size_t A = phi.dim(0), V = phi.dim(1);
  Tensor out({V, A});
  for (std::size_t v = 0; v < V; ++v) {
    double s = 0.0;
    for (std::size_t a = 0; a < A; ++a) s += phi.at(a, v);
    for (std::size_t a = 0; a < A; ++a) {
      out.at(v, a) = s > 0.0 ? phi.at(a, v) / s : 1.0 / static_cast<double>(A);
    }
  }
  return out;
}

AspectTable::AspectTable(Tensor rows, std::string vocab_hash)
    : rows_(std::move(rows)), vocab_hash_(std::move(vocab_hash)) {
  if (rows_.rank() != 2) throw ShapeError("aspect table must be a matrix");
  const double u = 1.0 / static_cast<double>(rows_.dim(1));
  for (int id : {text::kPad, text::kUnk}) {
    if (static_cast<std::size_t>(id) < rows_.dim(0)) {
      for (auto& x : rows_.row(static_cast<std::size_t>(id))) x = u;
    }
  }
}

AspectTable AspectTable::from_phi(const Tensor& phi, std::string vocab_hash) {
  return AspectTable(word_aspect_rep(phi), std::move(vocab_hash));
}

AspectTable AspectTable::uniform(std::size_t vocab_size, std::size_t aspects,
                                 std::string vocab_hash) {
  return AspectTable(Tensor({vocab_size, aspects}, 1.0 / static_cast<double>(aspects)),
                     std::move(vocab_hash));
}

std::span<const double> AspectTable::lookup(int word_id) const {
  if (word_id < 0 || static_cast<std::size_t>(word_id) >= rows_.dim(0)) {
    throw IndexError("aspect lookup id " + std::to_string(word_id) + " outside table of " +
                     std::to_string(rows_.dim(0)) + " words");
  }
  return rows_.row(static_cast<std::size_t>(word_id));
}

std::string AspectTable::hash() const {
  Fnv1a h;
  h.update(static_cast<std::uint64_t>(rows_.dim(0)));
  h.update(static_cast<std::uint64_t>(rows_.dim(1)));
  h.update(rows_.data());
  return h.hex();
}

void AspectTable::save(const std::filesystem::path& path, const std::string& run_config) const {
  json j;
  j["format"] = "egcnn-aspects";
  j["version"] = 1;
  j["aspects"] = aspects();
  j["vocab_size"] = vocab_size();
  j["vocab_hash"] = vocab_hash_;
  j["hash"] = hash();
  j["rows"] = rows_.storage();
  j["run_config"] = json::parse(run_config);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ContractError("cannot write aspect table " + path.string());
  out << j.dump() << '\n';
}

AspectTable AspectTable::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ContractError("cannot open aspect table " + path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded() || j.value("format", "") != "egcnn-aspects" || j.value("version", 0) != 1) {
    throw FormatError(path.string() + " is not an aspect table");
  }
  const auto A = j.at("aspects").get<std::size_t>();
  const auto V = j.at("vocab_size").get<std::size_t>();
  AspectTable t(Tensor({V, A}, j.at("rows").get<std::vector<double>>()),
                j.at("vocab_hash").get<std::string>());
  if (t.hash() != j.at("hash").get<std::string>()) {
    throw FormatError("aspect table " + path.string() + " fails its content hash check");
  }
  return t;
}

}  // namespace egcnn::aspect
