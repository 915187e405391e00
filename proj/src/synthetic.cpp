#include "egcnn/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "egcnn/errors.hpp"
#include "json.hpp"

namespace egcnn::synthetic {

namespace {

int per_domain(const std::vector<int>& v, int k, const char* what) {
  if (v.size() == 1) return v[0];
  if (static_cast<int>(v.size()) <= k) {
    throw ContractError(std::string(what) + " lists fewer counts than domains");
  }
  return v[static_cast<std::size_t>(k)];
}

std::vector<int> groups_of(const SyntheticSpec& spec) {
  const int K = spec.domains;
  std::vector<int> group(static_cast<std::size_t>(K), -1);
  int next = 0;
  for (int a = 0; a < K; ++a) {
    if (group[static_cast<std::size_t>(a)] >= 0) continue;
    group[static_cast<std::size_t>(a)] = next;
    for (int b = a + 1; b < K; ++b) {
      if (!spec.related.empty() &&
          spec.related[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)]) {
        group[static_cast<std::size_t>(b)] = next;
      }
    }
    ++next;
  }
  return group;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (domains < 1) throw ContractError("synthetic spec needs at least one domain");
  if (signal_tokens < 1) throw ContractError("synthetic spec needs at least one signal token");
  if (signal_tokens >= vocab_size) {
    throw ContractError("synthetic spec has " + std::to_string(signal_tokens) +
                        " signal tokens but a vocabulary of only " + std::to_string(vocab_size));
  }
  if (min_len < 0 || max_len < min_len) throw ContractError("invalid document length range");
  if (!(signal_prob > 0.0 && signal_prob < 1.0)) throw ContractError("signal_prob must be in (0,1)");
  if (noise < 0.0) throw ContractError("noise must be non-negative");
  for (const auto* v : {&train_docs, &dev_docs, &test_docs}) {
    if (v->empty() || (v->size() != 1 && static_cast<int>(v->size()) != domains)) {
      throw ContractError("document counts must have 1 or K entries");
    }
    for (int n : *v)
      if (n < 0) throw ContractError("document counts must be non-negative");
  }
  if (!related.empty()) {
    const auto K = static_cast<std::size_t>(domains);
    if (related.size() != K) throw ContractError("relatedness matrix must be K x K");
    for (const auto& row : related)
      if (row.size() != K) throw ContractError("relatedness matrix must be K x K");
    for (std::size_t a = 0; a < K; ++a) {
      for (std::size_t b = 0; b < K; ++b) {
        if (related[a][b] != related[b][a]) throw ContractError("relatedness must be symmetric");
        for (std::size_t c = 0; c < K; ++c) {
          if (a != c && related[a][b] && related[b][c] && !related[a][c]) {
            throw ContractError("relatedness must be transitive (domains " + std::to_string(a) +
                                ", " + std::to_string(b) + ", " + std::to_string(c) + ")");
          }
        }
      }
    }
  }
  const auto g = groups_of(*this);
  const int n_groups = *std::max_element(g.begin(), g.end()) + 1;
  if (signal_tokens < n_groups) {
    throw ContractError("need at least one signal token per unrelated domain group (" +
                        std::to_string(n_groups) + ")");
  }
}

double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return a.dot(b) / (a.norm() * b.norm());
}

SyntheticData generate(const SyntheticSpec& spec) {
  spec.validate();
  const int K = spec.domains;
  const int S = spec.signal_tokens;
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  SyntheticData data;
  for (int k = 0; k < K; ++k) data.domains.push_back("domain" + std::to_string(k + 1));
  for (int s = 0; s < S; ++s) data.signal_tokens.push_back("s" + std::to_string(s));
  for (int f = 0; f < spec.vocab_size - S; ++f) data.filler_tokens.push_back("f" + std::to_string(f));

  data.groups = groups_of(spec);
  const int G = *std::max_element(data.groups.begin(), data.groups.end()) + 1;
  Eigen::MatrixXd gauss(S, S);
  for (int i = 0; i < S; ++i)
    for (int j = 0; j < S; ++j) gauss(i, j) = normal(rng);
  const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(gauss).householderQ();
  const bool perturb = S >= G + K;
  data.heads.resize(K, S);
  for (int k = 0; k < K; ++k) {
    Eigen::VectorXd beta = q.col(data.groups[static_cast<std::size_t>(k)]);
    if (perturb) beta += 0.2 * q.col(G + k);
    data.heads.row(k) = beta.normalized().transpose();
  }
  for (int a = 0; a < K; ++a) {
    for (int b = a + 1; b < K; ++b) {
      const double c = cosine(data.heads.row(a).transpose(), data.heads.row(b).transpose());
      const bool rel = data.groups[static_cast<std::size_t>(a)] == data.groups[static_cast<std::size_t>(b)];
      if ((rel && c < 0.95) || (!rel && std::abs(c) > 0.05)) {
        throw ContractError("generated heads violate the relatedness structure");
      }
    }
  }

  std::uniform_int_distribution<int> len(spec.min_len, spec.max_len);
  std::uniform_int_distribution<std::size_t> filler(0, data.filler_tokens.size() - 1);
  std::bernoulli_distribution present(spec.signal_prob);
  for (int k = 0; k < K; ++k) {
    for (int s = 0; s < 3; ++s) {
      const std::vector<int>& counts =
          s == 0 ? spec.train_docs : (s == 1 ? spec.dev_docs : spec.test_docs);
      const int n = per_domain(counts, k, "document counts");
      for (int d = 0; d < n; ++d) {
        std::vector<std::string> tokens;
        const int l = len(rng);
        for (int i = 0; i < l; ++i) tokens.push_back(data.filler_tokens[filler(rng)]);
        double z = 0.0;
        for (int j = 0; j < S; ++j) {
          const bool on = present(rng);
          if (on) tokens.push_back(data.signal_tokens[static_cast<std::size_t>(j)]);
          z += data.heads(k, j) * ((on ? 1.0 : 0.0) - spec.signal_prob);
        }
        std::shuffle(tokens.begin(), tokens.end(), rng);
        double eta = spec.head_scale * z;
        if (spec.noise > 0.0) eta += spec.noise * normal(rng);
        data.splits.parts[static_cast<std::size_t>(s)].push_back(
            {std::move(tokens), 1.0 / (1.0 + std::exp(-eta)), k});
      }
    }
  }
  return data;
}

double score(const SyntheticData& data, const SyntheticSpec& spec, int domain,
             const std::vector<std::string>& tokens) {
  double z = 0.0;
  for (std::size_t j = 0; j < data.signal_tokens.size(); ++j) {
    const bool on = std::find(tokens.begin(), tokens.end(), data.signal_tokens[j]) != tokens.end();
    z += data.heads(domain, static_cast<Eigen::Index>(j)) * ((on ? 1.0 : 0.0) - spec.signal_prob);
  }
  return 1.0 / (1.0 + std::exp(-spec.head_scale * z));
}

void save_ground_truth(const SyntheticData& data, const SyntheticSpec& spec,
                       const std::filesystem::path& path) {
  nlohmann::json j;
  j["format"] = "egcnn-synthetic-truth";
  j["domains"] = data.domains;
  j["signal_tokens"] = data.signal_tokens;
  j["groups"] = data.groups;
  nlohmann::json heads = nlohmann::json::array();
  for (Eigen::Index k = 0; k < data.heads.rows(); ++k) {
    std::vector<double> row(static_cast<std::size_t>(data.heads.cols()));
    for (Eigen::Index s = 0; s < data.heads.cols(); ++s) row[static_cast<std::size_t>(s)] = data.heads(k, s);
    heads.push_back(row);
  }
  j["heads"] = heads;
  j["spec"] = {{"domains", spec.domains},         {"vocab_size", spec.vocab_size},
               {"signal_tokens", spec.signal_tokens}, {"related", spec.related},
               {"train_docs", spec.train_docs},   {"dev_docs", spec.dev_docs},
               {"test_docs", spec.test_docs},     {"min_len", spec.min_len},
               {"max_len", spec.max_len},         {"signal_prob", spec.signal_prob},
               {"head_scale", spec.head_scale},   {"noise", spec.noise},
               {"seed", spec.seed}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ContractError("cannot write " + path.string());
  out << j.dump() << '\n';
}

}  // namespace egcnn::synthetic
