#include "egcnn/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "egcnn/aspect.hpp"
#include "egcnn/errors.hpp"
#include "egcnn/eval.hpp"
#include "egcnn/hash.hpp"
#include "egcnn/model.hpp"
#include "egcnn/multidomain.hpp"
#include "egcnn/synthetic.hpp"
#include "egcnn/text.hpp"
#include "json.hpp"

namespace egcnn::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string with_commas(std::size_t n) {
  std::string s = std::to_string(n);
  for (int i = static_cast<int>(s.size()) - 3; i > 0; i -= 3) s.insert(static_cast<std::size_t>(i), ",");
  return s;
}

std::string file_digest(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ContractError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return fnv1a_hex(ss.str());
}

void require_file(const fs::path& p, const char* what) {
  if (p.empty()) throw ContractError(std::string("missing ") + what + " path");
  if (!fs::is_regular_file(p)) {
    throw ContractError(std::string(what) + " '" + p.string() + "' does not exist");
  }
}

void check_writable(const fs::path& p, bool force) {
  if (p.empty()) throw ContractError("--out is required");
  if (fs::exists(p) && !force) {
    throw ContractError("refusing to overwrite '" + p.string() + "' (pass --force to replace it)");
  }
}

std::vector<std::string> split_list(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) {
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

std::vector<int> parse_ints(const std::string& s, const char* flag) {
  std::vector<int> out;
  for (const auto& part : split_list(s)) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw ContractError(std::string(flag) + ": '" + part + "' is not an integer");
    }
  }
  if (out.empty()) throw ContractError(std::string(flag) + " needs at least one value");
  return out;
}

// Options that only name outputs are left out so identical runs writing to
// different places embed the same config.
bool is_output_option(const std::string& name) {
  return name == "help" || name == "out" || name == "log" || name == "force";
}

std::string resolved_config(const CLI::App& sub) {
  json opts = json::object();
  for (const CLI::Option* o : sub.get_options()) {
    const std::string name = o->get_single_name();
    if (name.empty() || is_output_option(name)) continue;
    if (o->count() > 0) {
      const auto& r = o->results();
      opts[name] = r.size() == 1 ? json(r.front()) : json(r);
    } else {
      opts[name] = o->get_default_str();
    }
  }
  return json{{"command", sub.get_name()}, {"options", opts}}.dump();
}

int resolve_domain(const text::Dataset& ds, const std::string& name) {
  const auto named = std::find(ds.domains.begin(), ds.domains.end(), name);
  if (named != ds.domains.end()) return static_cast<int>(named - ds.domains.begin());
  try {
    std::size_t used = 0;
    const int k = std::stoi(name, &used);
    if (used == name.size() && k >= 1 && static_cast<std::size_t>(k) <= ds.num_domains()) {
      return k - 1;
    }
  } catch (const std::exception&) {
  }
  std::string known;
  for (const auto& d : ds.domains) known += (known.empty() ? "" : ", ") + d;
  throw ContractError("unknown domain '" + name + "' (dataset has: " + known + ")");
}

struct Loaded {
  text::Dataset ds;
  aspect::AspectTable aspects;
};

Loaded load_inputs(const fs::path& data, const fs::path& phi) {
  require_file(data, "dataset");
  require_file(phi, "aspect table");
  Loaded l{text::load_dataset(data), aspect::AspectTable::load(phi)};
  if (l.aspects.vocab_hash() != l.ds.vocab.hash() || l.aspects.vocab_size() != l.ds.vocab.size()) {
    throw ContractError("aspect table '" + phi.string() + "' was fitted on a different vocabulary than '" +
                        data.string() + "'; rerun fit-aspects on this dataset");
  }
  return l;
}

// ---- ingest -----------------------------------------------------------------

struct IngestArgs {
  std::vector<std::string> data;
  std::string domains;
  int min_votes = 5;
  int m = 100;
  int max_word_len = 16;
  int min_count = 2;
  std::uint64_t seed = 1;
  std::string out;
  bool force = false;
};

int cmd_ingest(const IngestArgs& a, const CLI::App& sub, std::ostream& out, std::ostream& err) {
  std::vector<std::string> names = split_list(a.domains);
  if (!names.empty() && names.size() != a.data.size()) {
    throw ContractError("--domains lists " + std::to_string(names.size()) + " names for " +
                        std::to_string(a.data.size()) + " --data files");
  }
  check_writable(a.out, a.force);
  std::vector<text::ReviewRecord> all;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const fs::path p = a.data[i];
    require_file(p, "review file");
    const std::string domain = names.empty() ? p.stem().string() : names[i];
    text::IngestStats st;
    auto recs = text::ingest_reviews(p, domain, a.min_votes, &st);
    out << domain << ": kept " << with_commas(st.kept) << " / " << with_commas(st.lines) << "\n";
    if (st.kept == 0) err << "warning: " << domain << ": no reviews kept\n";
    if (st.skipped() > 0 || st.kept == 0) {
      err << "warning: " << domain << ": skipped " << with_commas(st.skipped()) << " records ("
          << st.malformed << " malformed, " << st.missing_field << " missing fields, "
          << st.inconsistent << " inconsistent votes), " << with_commas(st.below_votes)
          << " below the vote threshold\n";
    }
    all.insert(all.end(), std::make_move_iterator(recs.begin()), std::make_move_iterator(recs.end()));
  }
  std::vector<std::string> warnings;
  auto splits = text::split_dataset(all, {}, a.seed, &warnings);
  for (const auto& w : warnings) err << "warning: " << w << "\n";
  text::DatasetOptions opt;
  opt.shape = {a.m, a.max_word_len};
  opt.min_count = a.min_count;
  const auto ds = text::make_dataset(splits, opt);
  text::save_dataset(ds, a.out, resolved_config(sub));
  out << "train " << ds.splits[text::Split::train].size() << ", dev "
      << ds.splits[text::Split::dev].size() << ", test " << ds.splits[text::Split::test].size()
      << ", vocab " << ds.vocab.size() << "\n";
  out << "wrote " << a.out << " (digest " << file_digest(a.out) << ")\n";
  return kOk;
}

// ---- gen-synthetic ------------------------------------------------------------

struct SynthArgs {
  int domains = 3;
  int vocab = 60;
  int signal = 6;
  std::string related;
  std::string train_docs = "64";
  std::string dev_docs = "0";
  std::string test_docs = "0";
  int min_len = 6;
  int max_len = 12;
  double signal_prob = 0.3;
  double head_scale = 3.0;
  double noise = 0.0;
  std::uint64_t seed = 1;
  int m = 0;
  int max_word_len = 16;
  std::string out;
  bool force = false;
};

std::vector<std::vector<bool>> relatedness(const std::string& spec, int k) {
  std::vector<int> parent(static_cast<std::size_t>(k));
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[static_cast<std::size_t>(x)] != x) x = parent[static_cast<std::size_t>(x)];
    return x;
  };
  for (const auto& pair : split_list(spec)) {
    const auto ends = parse_ints(std::string(pair).replace(pair.find(':') == std::string::npos
                                                                ? pair.size()
                                                                : pair.find(':'),
                                                            1, ","),
                                 "--related");
    if (ends.size() != 2) throw ContractError("--related expects pairs like 1:2, got '" + pair + "'");
    for (int e : ends) {
      if (e < 1 || e > k) throw ContractError("--related domain " + std::to_string(e) + " out of 1.." + std::to_string(k));
    }
    parent[static_cast<std::size_t>(find(ends[0] - 1))] = find(ends[1] - 1);
  }
  std::vector<std::vector<bool>> r(static_cast<std::size_t>(k), std::vector<bool>(static_cast<std::size_t>(k)));
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) r[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = find(i) == find(j);
  return r;
}

int cmd_gen_synthetic(const SynthArgs& a, const CLI::App& sub, std::ostream& out) {
  synthetic::SyntheticSpec spec;
  spec.domains = a.domains;
  spec.vocab_size = a.vocab;
  spec.signal_tokens = a.signal;
  if (a.domains >= 1) spec.related = relatedness(a.related, a.domains);
  spec.train_docs = parse_ints(a.train_docs, "--train-docs");
  spec.dev_docs = parse_ints(a.dev_docs, "--dev-docs");
  spec.test_docs = parse_ints(a.test_docs, "--test-docs");
  spec.min_len = a.min_len;
  spec.max_len = a.max_len;
  spec.signal_prob = a.signal_prob;
  spec.head_scale = a.head_scale;
  spec.noise = a.noise;
  spec.seed = a.seed;
  spec.validate();
  const fs::path truth = a.out + ".truth.json";
  check_writable(a.out, a.force);
  check_writable(truth, a.force);

  const auto data = synthetic::generate(spec);
  text::DatasetOptions opt;
  opt.shape = {a.m > 0 ? a.m : a.max_len + a.signal, a.max_word_len};
  opt.min_count = 1;
  const auto ds = text::make_dataset(data.splits, data.domains, opt);
  text::save_dataset(ds, a.out, resolved_config(sub));
  synthetic::save_ground_truth(data, spec, truth);
  out << "generated " << ds.splits[text::Split::train].size() << " train, "
      << ds.splits[text::Split::dev].size() << " dev, " << ds.splits[text::Split::test].size()
      << " test reviews over " << ds.num_domains() << " domains\n";
  for (int i = 0; i < a.domains; ++i) {
    for (int j = i + 1; j < a.domains; ++j) {
      double c = synthetic::cosine(data.heads.row(i).transpose(), data.heads.row(j).transpose());
      if (std::abs(c) < 5e-5) c = 0.0;  // no "-0.0000"
      out << "cos(h" << i + 1 << ", h" << j + 1 << ") = " << std::fixed << std::setprecision(4) << c
          << "\n";
    }
  }
  out.unsetf(std::ios::floatfield);
  out << "wrote " << a.out << " and " << truth.string() << "\n";
  return kOk;
}

// ---- fit-aspects ------------------------------------------------------------

struct FitArgs {
  std::string data;
  int aspects = 100;
  double alpha = 0.0;
  double beta = 0.01;
  int iterations = 200;
  std::uint64_t seed = 1;
  std::string out;
  bool force = false;
};

int cmd_fit_aspects(const FitArgs& a, const CLI::App& sub, std::ostream& out) {
  require_file(a.data, "dataset");
  check_writable(a.out, a.force);
  const auto ds = text::load_dataset(a.data);
  std::vector<std::vector<int>> docs;
  for (const auto& r : ds.splits[text::Split::train]) docs.push_back(r.word_ids);
  aspect::LdaConfig cfg{a.aspects, a.alpha, a.beta, a.iterations, a.seed};
  const auto fit = aspect::fit_aspects(docs, ds.vocab.size(), cfg);
  const auto table = aspect::AspectTable::from_phi(fit.phi, ds.vocab.hash());
  table.save(a.out, resolved_config(sub));
  out << "fitted " << a.aspects << " aspects over " << with_commas(docs.size()) << " reviews, vocab "
      << with_commas(ds.vocab.size()) << "\nwrote " << a.out << " (hash " << table.hash() << ")\n";
  return kOk;
}

// ---- train ------------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string phi;
  int dim = 100;
  int char_dim = 16;
  int char_width = 3;
  int char_features = 50;
  int aspects = 0;
  int channels = 128;
  std::string widths = "2,3,4,5";
  double lr = 0.08;
  double lambda1 = 0.01;
  double lambda2 = 1e-4;
  double ridge_eps = 1e-6;
  int batch = 32;
  int epochs = 10;
  std::uint64_t seed = 1;
  std::string mode = "full";
  std::string target_domain;
  std::string glove;
  int omega_every = 1;
  bool check_finite = false;
  std::string out;
  std::string log;
  bool force = false;
};

int cmd_train(const TrainArgs& a, const CLI::App& sub, std::ostream& out, std::ostream& err) {
  const auto mode = multidomain::parse_mode(a.mode);
  const fs::path log_path = a.log.empty() ? fs::path(a.out + ".log.jsonl") : fs::path(a.log);
  check_writable(a.out, a.force);
  check_writable(log_path, a.force);
  if (!a.glove.empty()) require_file(a.glove, "word vector file");
  auto in = load_inputs(a.data, a.phi);
  if (a.aspects > 0 && static_cast<std::size_t>(a.aspects) != in.aspects.aspects()) {
    throw ContractError("--aspects " + std::to_string(a.aspects) + " does not match the " +
                        std::to_string(in.aspects.aspects()) + " aspects in " + a.phi);
  }
  int target = -1;
  if (mode == multidomain::Mode::target_only) {
    if (a.target_domain.empty()) throw ContractError("--mode target-only needs --target-domain");
    target = resolve_domain(in.ds, a.target_domain);
  }

  model::ModelConfig cfg;
  cfg.m = in.ds.shape.m;
  cfg.max_word_len = in.ds.shape.max_word_len;
  cfg.dim = a.dim;
  cfg.char_dim = a.char_dim;
  cfg.char_width = a.char_width;
  cfg.char_features = a.char_features;
  cfg.aspects = static_cast<int>(in.aspects.aspects());
  cfg.channels = a.channels;
  cfg.widths = parse_ints(a.widths, "--widths");
  cfg.validate();

  multidomain::TrainConfig tc;
  tc.epochs = a.epochs;
  tc.batch = a.batch;
  tc.lr = a.lr;
  tc.loss = {a.lambda1, a.lambda2, a.ridge_eps};
  tc.seed = a.seed;
  tc.omega_every = a.omega_every;
  tc.check_finite = a.check_finite;

  auto md = multidomain::init_model(cfg, in.ds, in.aspects, mode, target, a.seed);
  md.run_config = resolved_config(sub);
  if (!a.glove.empty()) {
    const auto n = model::load_word_vectors(a.glove, in.ds.vocab, md.encoder.word_emb);
    out << "loaded " << with_commas(n) << " pretrained word vectors\n";
  }

  std::ofstream log(log_path, std::ios::binary);
  if (!log) throw ContractError("cannot write training log " + log_path.string());
  log << json{{"run_config", json::parse(md.run_config)}}.dump() << "\n";
  const auto records = multidomain::training_records(md, in.ds);
  out << "training " << multidomain::mode_name(mode) << " on " << with_commas(records.size())
      << " reviews for " << a.epochs << " epochs\n";
  try {
    multidomain::train(md, in.ds, in.aspects, tc, [&](const multidomain::EpochLog& e) {
      log << multidomain::epoch_log_json(e) << "\n";
      out << "epoch " << e.epoch << "  sq_err " << e.mse << "  trace " << e.trace << "  reg "
          << e.reg << (e.omega_updated ? "  omega updated" : "") << "\n";
    });
  } catch (const TrainingError& e) {
    log.flush();
    err << "error: " << e.what() << "\n";
    return kTrainingError;
  }
  multidomain::save_checkpoint(md, a.out);
  out << "wrote " << a.out << " (digest " << file_digest(a.out) << ") and " << log_path.string()
      << "\n";
  return kOk;
}

// ---- evaluate / predict / inspect-gates ------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string phi;
  std::string split = "test";
  std::string metric = "pearson";
  std::string out;
  bool force = false;
};

int cmd_evaluate(const EvalArgs& a, const CLI::App& sub, std::ostream& out) {
  require_file(a.checkpoint, "checkpoint");
  if (!a.out.empty()) check_writable(a.out, a.force);
  auto in = load_inputs(a.data, a.phi);
  auto md = multidomain::load_checkpoint(a.checkpoint);
  md.check_compatible(in.ds, in.aspects);
  eval::Correlation metric;
  if (a.metric == "pearson") {
    metric = eval::Correlation::pearson;
  } else if (a.metric == "spearman") {
    metric = eval::Correlation::spearman;
  } else {
    throw ContractError("--metric must be pearson or spearman, got '" + a.metric + "'");
  }
  const auto report = eval::evaluate(md, in.ds, in.aspects, text::parse_split(a.split), metric,
                                     file_digest(a.checkpoint));
  out << report.table();
  if (!a.out.empty()) {
    json records = json::array();
    std::istringstream lines(report.records_jsonl());
    for (std::string line; std::getline(lines, line);) {
      if (!line.empty()) records.push_back(json::parse(line));
    }
    std::ofstream f(a.out, std::ios::binary);
    if (!f) throw ContractError("cannot write report " + a.out);
    f << json{{"run_config", json::parse(resolved_config(sub))},
              {"checkpoint_digest", report.checkpoint_digest},
              {"records", records}}
             .dump()
      << "\n";
    out << "wrote " << a.out << "\n";
  }
  return kOk;
}

struct PredictArgs {
  std::string checkpoint;
  std::string data;
  std::string phi;
  std::string input;
  std::string text;
  std::string domain;
};

struct Query {
  std::string text;
  std::string domain;
};

std::vector<Query> read_queries(const PredictArgs& a) {
  std::vector<Query> q;
  if (!a.text.empty()) q.push_back({a.text, a.domain});
  if (!a.input.empty()) {
    require_file(a.input, "input");
    std::ifstream in(a.input);
    std::size_t lineno = 0;
    for (std::string line; std::getline(in, line);) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      json j = json::parse(line, nullptr, false);
      if (j.is_discarded() || !j.is_object() || !j.contains("reviewText") ||
          !j["reviewText"].is_string()) {
        throw FormatError(a.input + ":" + std::to_string(lineno) + ": expected an object with reviewText");
      }
      std::string dom = a.domain;
      for (const char* key : {"domain", "category"}) {
        if (j.contains(key) && j[key].is_string()) dom = j[key].get<std::string>();
      }
      q.push_back({j["reviewText"].get<std::string>(), dom});
    }
  }
  if (q.empty()) throw ContractError("predict needs --text or --input");
  return q;
}

int cmd_predict(const PredictArgs& a, std::ostream& out) {
  require_file(a.checkpoint, "checkpoint");
  auto in = load_inputs(a.data, a.phi);
  auto md = multidomain::load_checkpoint(a.checkpoint);
  md.check_compatible(in.ds, in.aspects);
  for (const auto& q : read_queries(a)) {
    int k = md.mode == multidomain::Mode::target_only ? md.target_domain : 0;
    if (!q.domain.empty()) {
      k = resolve_domain(in.ds, q.domain);
    } else if (md.uses_domain_heads() && md.num_domains() > 1) {
      throw ContractError("this checkpoint has per-domain heads; pass --domain");
    }
    const auto r = text::encode_tokens(text::tokenize(q.text), 0.0, k, in.ds.vocab, in.ds.chars,
                                       in.ds.shape);
    out << in.ds.domains[static_cast<std::size_t>(k)] << "\t" << std::setprecision(6)
        << multidomain::predict(md, in.aspects, r) << "\n";
  }
  return kOk;
}

struct GatesArgs {
  std::string checkpoint;
  std::string data;
  std::string phi;
  std::string text;
  std::string split = "test";
  int index = 0;
};

int cmd_inspect_gates(const GatesArgs& a, std::ostream& out) {
  require_file(a.checkpoint, "checkpoint");
  auto in = load_inputs(a.data, a.phi);
  auto md = multidomain::load_checkpoint(a.checkpoint);
  md.check_compatible(in.ds, in.aspects);
  text::EncodedReview r;
  if (!a.text.empty()) {
    r = text::encode_tokens(text::tokenize(a.text), 0.0, 0, in.ds.vocab, in.ds.chars, in.ds.shape);
  } else {
    const auto& part = in.ds.splits[text::parse_split(a.split)];
    if (a.index < 0 || static_cast<std::size_t>(a.index) >= part.size()) {
      throw ContractError("--index " + std::to_string(a.index) + " outside the " + a.split +
                          " split of " + std::to_string(part.size()) + " reviews");
    }
    r = part[static_cast<std::size_t>(a.index)];
  }
  for (const auto& [tok, g] : model::inspect_gates(md.encoder, in.aspects, md.config, r)) {
    out << tok << "\t" << std::fixed << std::setprecision(6) << g << "\n";
  }
  out.unsetf(std::ios::floatfield);
  return kOk;
}

// ---- grad-check -------------------------------------------------------------

struct GradArgs {
  int instances = 5;
  GradCheckSetup setup;
  double tol = 1e-4;
};

int cmd_grad_check(const GradArgs& a, std::ostream& out) {
  if (a.instances < 1) throw ContractError("--instances must be >= 1");
  const auto start = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (int i = 0; i < a.instances; ++i) {
    GradCheckSetup s = a.setup;
    s.seed = a.setup.seed + static_cast<std::uint64_t>(i);
    const auto r = full_model_grad_check(s);
    worst = std::max(worst, r.max_rel_error);
    out << "instance " << i + 1 << " (seed " << s.seed << "): max rel err " << std::scientific
        << std::setprecision(3) << r.max_rel_error << " over " << r.checked << " coordinates ("
        << r.skipped << " skipped at kinks), worst " << r.worst << "\n";
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const bool ok = worst < a.tol;
  out << "max rel. err " << std::scientific << std::setprecision(3) << worst
      << (ok ? " < " : " >= ") << a.tol << (ok ? " ok" : " FAILED") << " (" << std::fixed
      << std::setprecision(1) << secs << " s)\n";
  out.unsetf(std::ios::floatfield);
  return ok ? kOk : kVerificationFailed;
}

}  // namespace

GradCheckResult full_model_grad_check(const GradCheckSetup& setup) {
  if (setup.domains < 1 || setup.reviews < 1) throw ContractError("grad check needs domains and reviews");
  synthetic::SyntheticSpec spec;
  spec.domains = setup.domains;
  spec.signal_tokens = 4;
  spec.vocab_size = 20;
  spec.min_len = std::max(1, setup.m / 3);
  spec.max_len = std::max(spec.min_len, setup.m - spec.signal_tokens);
  spec.train_docs = {(setup.reviews + setup.domains - 1) / setup.domains};
  spec.signal_prob = 0.5;
  spec.seed = setup.seed;
  const auto data = synthetic::generate(spec);
  text::DatasetOptions opt;
  opt.shape = {setup.m, setup.max_word_len};
  opt.min_count = 1;
  const auto ds = text::make_dataset(data.splits, data.domains, opt);

  std::mt19937_64 rng(setup.seed * 7919 + 3);
  std::uniform_real_distribution<double> unif(-0.5, 0.5);
  const std::size_t A = static_cast<std::size_t>(setup.aspects);
  Tensor rows({ds.vocab.size(), A});
  for (std::size_t v = 0; v < ds.vocab.size(); ++v) {
    double s = 0.0;
    for (std::size_t k = 0; k < A; ++k) s += rows.at(v, k) = 0.05 + unif(rng) + 0.5;
    for (std::size_t k = 0; k < A; ++k) rows.at(v, k) /= s;
  }
  const aspect::AspectTable aspects(std::move(rows), ds.vocab.hash());

  model::ModelConfig cfg;
  cfg.m = setup.m;
  cfg.dim = setup.dim;
  cfg.char_dim = setup.char_dim;
  cfg.char_width = setup.char_width;
  cfg.char_features = setup.char_features;
  cfg.aspects = setup.aspects;
  cfg.channels = setup.channels;
  cfg.max_word_len = setup.max_word_len;
  cfg.widths = setup.widths;
  auto md = multidomain::init_model(cfg, ds, aspects, multidomain::Mode::full, -1, setup.seed);
  for (Parameter* p : md.all_params()) {
    auto v = p->value.data();
    const std::size_t w = p->row_width();
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = p->is_frozen_row(i / w) ? 0.0 : unif(rng);
    }
  }
  const auto K = static_cast<Eigen::Index>(setup.domains);
  Eigen::MatrixXd b(K, K);
  for (Eigen::Index i = 0; i < K; ++i)
    for (Eigen::Index j = 0; j < K; ++j) b(i, j) = unif(rng);
  Eigen::MatrixXd omega = b * b.transpose() + 0.1 * Eigen::MatrixXd::Identity(K, K);
  md.omega = omega / omega.trace();

  std::vector<const text::EncodedReview*> batch;
  const auto& train = ds.splits[text::Split::train];
  // Round-robin over domains so every head sees the squared-error term.
  std::vector<std::vector<const text::EncodedReview*>> by_domain(ds.num_domains());
  for (const auto& r : train) by_domain[static_cast<std::size_t>(r.domain_id)].push_back(&r);
  for (std::size_t i = 0; batch.size() < static_cast<std::size_t>(setup.reviews); ++i) {
    const auto& d = by_domain[i % by_domain.size()];
    if (i / by_domain.size() >= train.size()) break;
    if (i / by_domain.size() < d.size()) batch.push_back(d[i / by_domain.size()]);
  }
  const multidomain::LossConfig lc{setup.lambda1, setup.lambda2, 1e-6};
  auto params = md.trainable();
  return grad_check(
      [&](Tape& t) { return multidomain::loss_full(t, md, aspects, batch, lc).total; }, params,
      setup.options);
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Embedding-gated CNN helpfulness regression", "egcnn"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);

  IngestArgs ia;
  auto* ingest = app.add_subcommand("ingest", "Read review files into a dataset cache");
  ingest->add_option("--data", ia.data, "Review file (repeatable)")->required();
  ingest->add_option("--domains", ia.domains, "Comma-separated domain names, one per --data");
  ingest->add_option("--min-votes", ia.min_votes, "Keep reviews with more total votes than this");
  ingest->add_option("--m", ia.m, "Sentence length limit");
  ingest->add_option("--max-word-len", ia.max_word_len, "Characters kept per word");
  ingest->add_option("--min-count", ia.min_count, "Minimum token count for the vocabulary");
  ingest->add_option("--seed", ia.seed, "Split seed");
  ingest->add_option("--out", ia.out, "Dataset cache to write")->required();
  ingest->add_flag("--force", ia.force, "Overwrite existing outputs");

  SynthArgs sa;
  auto* gen = app.add_subcommand("gen-synthetic", "Generate a synthetic multi-domain dataset");
  gen->add_option("--num-domains", sa.domains, "Number of domains K");
  gen->add_option("--vocab", sa.vocab, "Filler plus signal tokens");
  gen->add_option("--signal", sa.signal, "Signal tokens");
  gen->add_option("--related", sa.related, "Related domain pairs, e.g. 1:2,3:4");
  gen->add_option("--train-docs", sa.train_docs, "Train reviews per domain (one value or K)");
  gen->add_option("--dev-docs", sa.dev_docs, "Dev reviews per domain");
  gen->add_option("--test-docs", sa.test_docs, "Test reviews per domain");
  gen->add_option("--min-len", sa.min_len, "Minimum filler tokens per review");
  gen->add_option("--max-len", sa.max_len, "Maximum filler tokens per review");
  gen->add_option("--signal-prob", sa.signal_prob, "Probability each signal token appears");
  gen->add_option("--head-scale", sa.head_scale, "Logit scale of the generating heads");
  gen->add_option("--noise", sa.noise, "Logit noise standard deviation");
  gen->add_option("--seed", sa.seed, "Generator seed");
  gen->add_option("--m", sa.m, "Sentence length limit (0 = max-len + signal)");
  gen->add_option("--max-word-len", sa.max_word_len, "Characters kept per word");
  gen->add_option("--out", sa.out, "Dataset cache to write")->required();
  gen->add_flag("--force", sa.force, "Overwrite existing outputs");

  FitArgs fa;
  auto* fit = app.add_subcommand("fit-aspects", "Fit LDA aspects on the train split");
  fit->add_option("--data", fa.data, "Dataset cache")->required();
  fit->add_option("--aspects", fa.aspects, "Number of aspects");
  fit->add_option("--alpha", fa.alpha, "Document-aspect prior (<= 0 uses 50 / aspects)");
  fit->add_option("--beta", fa.beta, "Aspect-word prior");
  fit->add_option("--lda-iters", fa.iterations, "Gibbs sweeps");
  fit->add_option("--seed", fa.seed, "Sampler seed");
  fit->add_option("--out", fa.out, "Aspect table to write")->required();
  fit->add_flag("--force", fa.force, "Overwrite existing outputs");

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train a model");
  tr->add_option("--data", ta.data, "Dataset cache")->required();
  tr->add_option("--phi", ta.phi, "Aspect table from fit-aspects")->required();
  tr->add_option("--dim", ta.dim, "Word embedding size");
  tr->add_option("--char-dim", ta.char_dim, "Character embedding size");
  tr->add_option("--char-width", ta.char_width, "Character convolution width");
  tr->add_option("--char-features", ta.char_features, "Character feature size");
  tr->add_option("--aspects", ta.aspects, "Expected aspect count (0 = take from --phi)");
  tr->add_option("--channels", ta.channels, "Channels per filter width");
  tr->add_option("--widths", ta.widths, "Filter widths");
  tr->add_option("--lr", ta.lr, "AdaGrad learning rate");
  tr->add_option("--lambda1", ta.lambda1, "Trace penalty weight");
  tr->add_option("--lambda2", ta.lambda2, "L2 penalty weight");
  tr->add_option("--ridge-eps", ta.ridge_eps, "Ridge added before inverting Omega");
  tr->add_option("--batch", ta.batch, "Minibatch size");
  tr->add_option("--epochs", ta.epochs, "Epochs");
  tr->add_option("--seed", ta.seed, "Initialization and shuffling seed");
  tr->add_option("--mode", ta.mode, "full, fully-shared, target-only or per-domain-heads");
  tr->add_option("--target-domain", ta.target_domain, "Domain name or 1-based index");
  tr->add_option("--glove", ta.glove, "Pretrained word vectors (text format)");
  tr->add_option("--omega-every", ta.omega_every, "Epochs between Omega updates");
  tr->add_flag("--check-finite", ta.check_finite, "Stop at the first non-finite value");
  tr->add_option("--out", ta.out, "Checkpoint to write")->required();
  tr->add_option("--log", ta.log, "Epoch log (default <out>.log.jsonl)");
  tr->add_flag("--force", ta.force, "Overwrite existing outputs");

  EvalArgs ea;
  auto* ev = app.add_subcommand("evaluate", "Per-domain correlation on a split");
  ev->add_option("--checkpoint", ea.checkpoint, "Checkpoint")->required();
  ev->add_option("--data", ea.data, "Dataset cache")->required();
  ev->add_option("--phi", ea.phi, "Aspect table")->required();
  ev->add_option("--split", ea.split, "train, dev or test");
  ev->add_option("--metric", ea.metric, "pearson or spearman");
  ev->add_option("--out", ea.out, "JSON report to write");
  ev->add_flag("--force", ea.force, "Overwrite existing outputs");

  PredictArgs pa;
  auto* pr = app.add_subcommand("predict", "Score review texts");
  pr->add_option("--checkpoint", pa.checkpoint, "Checkpoint")->required();
  pr->add_option("--data", pa.data, "Dataset cache holding the vocabularies")->required();
  pr->add_option("--phi", pa.phi, "Aspect table")->required();
  pr->add_option("--input", pa.input, "Newline-delimited JSON with reviewText");
  pr->add_option("--text", pa.text, "A single review text");
  pr->add_option("--domain", pa.domain, "Domain name or 1-based index");

  GatesArgs gg;
  auto* gates = app.add_subcommand("inspect-gates", "Per-word gate values of one review");
  gates->add_option("--checkpoint", gg.checkpoint, "Checkpoint")->required();
  gates->add_option("--data", gg.data, "Dataset cache")->required();
  gates->add_option("--phi", gg.phi, "Aspect table")->required();
  gates->add_option("--text", gg.text, "Review text (otherwise --split/--index)");
  gates->add_option("--split", gg.split, "Split to take the review from");
  gates->add_option("--index", gg.index, "Review index within the split");

  GradArgs ga;
  std::string grad_widths = "2,3,4,5";
  auto* gc = app.add_subcommand("grad-check", "Finite-difference check of the full loss");
  gc->add_option("--instances", ga.instances, "Random instances");
  gc->add_option("--seed", ga.setup.seed, "Seed of the first instance");
  gc->add_option("--m", ga.setup.m, "Sentence length");
  gc->add_option("--dim", ga.setup.dim, "Word embedding size");
  gc->add_option("--char-features", ga.setup.char_features, "Character feature size");
  gc->add_option("--aspects", ga.setup.aspects, "Aspects");
  gc->add_option("--channels", ga.setup.channels, "Channels per width");
  gc->add_option("--widths", grad_widths, "Filter widths");
  gc->add_option("--domains", ga.setup.domains, "Domains K");
  gc->add_option("--reviews", ga.setup.reviews, "Reviews in the batch");
  gc->add_option("--eps", ga.setup.options.eps, "Finite-difference step");
  gc->add_option("--tol", ga.tol, "Maximum accepted relative error");

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kContractError;
  }

  try {
    if (ingest->parsed()) return cmd_ingest(ia, *ingest, out, err);
    if (gen->parsed()) return cmd_gen_synthetic(sa, *gen, out);
    if (fit->parsed()) return cmd_fit_aspects(fa, *fit, out);
    if (tr->parsed()) return cmd_train(ta, *tr, out, err);
    if (ev->parsed()) return cmd_evaluate(ea, *ev, out);
    if (pr->parsed()) return cmd_predict(pa, out);
    if (gates->parsed()) return cmd_inspect_gates(gg, out);
    if (gc->parsed()) {
      ga.setup.widths = parse_ints(grad_widths, "--widths");
      return cmd_grad_check(ga, out);
    }
  } catch (const TrainingError& e) {
    err << "error: " << e.what() << "\n";
    return kTrainingError;
  } catch (const ContractError& e) {
    err << "error: " << e.what() << "\n";
    return kContractError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kFailure;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, out, err);
}

}  // namespace egcnn::cli
