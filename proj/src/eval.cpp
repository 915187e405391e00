#include "egcnn/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "egcnn/hash.hpp"
#include "json.hpp"

namespace egcnn::eval {

double pearson(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size()) {
    throw ShapeError("pearson inputs differ in length: " + std::to_string(pred.size()) + " vs " +
                     std::to_string(truth.size()));
  }
  const std::size_t n = pred.size();
  if (n < 2) throw UndefinedCorrelation("correlation needs at least 2 points");
  const double dn = static_cast<double>(n);
  const double mp = std::accumulate(pred.begin(), pred.end(), 0.0) / dn;
  const double mt = std::accumulate(truth.begin(), truth.end(), 0.0) / dn;
  double cov = 0.0, vp = 0.0, vt = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = pred[i] - mp;
    const double b = truth[i] - mt;
    cov += a * b;
    vp += a * a;
    vt += b * b;
  }
  if (vp <= 0.0 || vt <= 0.0) throw UndefinedCorrelation("correlation of a constant sequence");
  const double r = (cov / dn) / (std::sqrt(vp / dn) * std::sqrt(vt / dn));
  return std::clamp(r, -1.0, 1.0);
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size()) throw ShapeError("spearman inputs differ in length");
  const auto rp = average_ranks(pred);
  const auto rt = average_ranks(truth);
  return pearson(rp, rt);
}

const char* correlation_name(Correlation c) {
  return c == Correlation::pearson ? "pearson" : "spearman";
}

std::vector<double> predict_all(multidomain::Model& model, const aspect::AspectTable& aspects,
                                std::span<const text::EncodedReview> reviews) {
  std::vector<double> out;
  out.reserve(reviews.size());
  for (const auto& r : reviews) out.push_back(multidomain::predict(model, aspects, r));
  return out;
}

EvalReport evaluate(multidomain::Model& model, const text::Dataset& ds,
                    const aspect::AspectTable& aspects, text::Split split, Correlation metric,
                    const std::string& checkpoint_digest) {
  model.check_compatible(ds, aspects);
  EvalReport rep;
  rep.mode = multidomain::mode_name(model.mode);
  rep.split = text::split_name(split);
  rep.metric = correlation_name(metric);
  rep.config_digest = fnv1a_hex(model.run_config);
  rep.checkpoint_digest = checkpoint_digest;
  const auto& records = ds.splits[split];
  const auto preds = predict_all(model, aspects, records);
  for (std::size_t d = 0; d < ds.num_domains(); ++d) {
    if (model.mode == multidomain::Mode::target_only &&
        static_cast<int>(d) != model.target_domain) {
      continue;
    }
    std::vector<double> p, t;
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (records[i].domain_id != static_cast<int>(d)) continue;
      p.push_back(preds[i]);
      t.push_back(records[i].target);
    }
    DomainScore row{ds.domains[d], p.size(), std::nullopt};
    try {
      row.r = metric == Correlation::pearson ? pearson(p, t) : spearman(p, t);
    } catch (const UndefinedCorrelation&) {
    }
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

std::string EvalReport::table() const {
  std::size_t w = 6;
  for (const auto& r : rows) w = std::max(w, r.domain.size());
  std::ostringstream out;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-*s  %8s  %9s\n", static_cast<int>(w), "domain", "n",
                metric.c_str());
  out << buf;
  for (const auto& r : rows) {
    if (r.r) {
      std::snprintf(buf, sizeof buf, "%-*s  %8zu  %9.4f\n", static_cast<int>(w), r.domain.c_str(),
                    r.n, *r.r);
    } else {
      std::snprintf(buf, sizeof buf, "%-*s  %8zu  %9s\n", static_cast<int>(w), r.domain.c_str(),
                    r.n, "n/a");
    }
    out << buf;
  }
  out << "mode=" << mode << " split=" << split << " config=" << config_digest;
  if (!checkpoint_digest.empty()) out << " checkpoint=" << checkpoint_digest;
  out << '\n';
  return out.str();
}

std::string EvalReport::records_jsonl() const {
  std::string out;
  for (const auto& r : rows) {
    nlohmann::json j = {{"domain", r.domain}, {"n", r.n}, {"mode", mode}};
    j[metric] = r.r ? nlohmann::json(*r.r) : nlohmann::json(nullptr);
    out += j.dump() + '\n';
  }
  return out;
}

}  // namespace egcnn::eval
