// Acceptance suite: one PASS/FAIL line per criterion.
//
//   egcnn_acceptance            run everything
//   egcnn_acceptance 3 6        run selected criteria

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "egcnn/aspect.hpp"
#include "egcnn/cli.hpp"
#include "egcnn/eval.hpp"
#include "egcnn/model.hpp"
#include "egcnn/multidomain.hpp"
#include "egcnn/synthetic.hpp"
#include "egcnn/text.hpp"

namespace fs = std::filesystem;
using namespace egcnn;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Small model used by the synthetic experiments.
model::ModelConfig small_config(const text::Dataset& ds, std::size_t aspects) {
  model::ModelConfig c;
  c.m = ds.shape.m;
  c.max_word_len = ds.shape.max_word_len;
  c.dim = 8;
  c.char_dim = 4;
  c.char_width = 3;
  c.char_features = 4;
  c.aspects = static_cast<int>(aspects);
  c.channels = 8;
  return c;
}

struct Task {
  synthetic::SyntheticData data;
  text::Dataset ds;
  aspect::AspectTable aspects;
};

Task make_task(const synthetic::SyntheticSpec& spec, int lda_aspects = 4) {
  Task t;
  t.data = synthetic::generate(spec);
  text::DatasetOptions opt;
  opt.shape = {spec.max_len + spec.signal_tokens, 8};
  opt.min_count = 1;
  t.ds = text::make_dataset(t.data.splits, t.data.domains, opt);
  std::vector<std::vector<int>> docs;
  for (const auto& r : t.ds.splits[text::Split::train]) docs.push_back(r.word_ids);
  aspect::LdaConfig lda;
  lda.aspects = lda_aspects;
  lda.iterations = 30;
  lda.seed = spec.seed;
  t.aspects = aspect::AspectTable::from_phi(aspect::fit_aspects(docs, t.ds.vocab.size(), lda).phi,
                                            t.ds.vocab.hash());
  return t;
}

std::vector<std::vector<bool>> related_pairs(int k, std::initializer_list<std::pair<int, int>> pairs) {
  std::vector<std::vector<bool>> r(static_cast<std::size_t>(k), std::vector<bool>(static_cast<std::size_t>(k)));
  for (int i = 0; i < k; ++i) r[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] = true;
  for (auto [a, b] : pairs) {
    r[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] = true;
    r[static_cast<std::size_t>(b)][static_cast<std::size_t>(a)] = true;
  }
  return r;
}

double domain_pearson(multidomain::Model& md, const Task& t, text::Split split, int domain) {
  const auto report = eval::evaluate(md, t.ds, t.aspects, split);
  for (const auto& row : report.rows) {
    if (row.domain == t.ds.domains[static_cast<std::size_t>(domain)] && row.r) return *row.r;
  }
  return 0.0;
}

// ---- 1 --------------------------------------------------------------------

Outcome gradient_soundness() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::size_t checked = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    cli::GradCheckSetup s;  // m=12, D=8, d_c=4, A=6, C=8, K=3
    s.seed = seed;
    const auto r = cli::full_model_grad_check(s);
    worst = std::max(worst, r.max_rel_error);
    checked += r.checked;
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && checked > 0 && secs < 60.0,
          fmt("5 instances, %zu coordinates, max rel err %.2e (< 1e-4), %.1f s (< 60 s)", checked,
              worst, secs)};
}

// ---- 2 --------------------------------------------------------------------

Eigen::MatrixXd random_feasible_omega(std::mt19937_64& rng, Eigen::Index k) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd a(k, k);
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = 0; j < k; ++j) a(i, j) = n(rng);
  Eigen::MatrixXd o = a * a.transpose();
  return o / o.trace();
}

Outcome omega_validity() {
  const auto t0 = std::chrono::steady_clock::now();
  synthetic::SyntheticSpec spec;
  spec.related = related_pairs(3, {{0, 1}});
  spec.train_docs = {64};
  spec.seed = 11;
  const auto task = make_task(spec);
  auto md = multidomain::init_model(small_config(task.ds, task.aspects.aspects()), task.ds,
                                    task.aspects, multidomain::Mode::full, -1, 11);
  multidomain::TrainConfig tc;
  tc.epochs = 50;
  tc.seed = 11;
  int updates = 0, valid = 0;
  multidomain::train(md, task.ds, task.aspects, tc, [&](const multidomain::EpochLog& e) {
    if (!e.omega_updated) return;
    ++updates;
    if (multidomain::check_omega(e.omega).ok(1e-10)) ++valid;
  });

  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> kd(2, 5), hd(1, 16);
  std::normal_distribution<double> n(0.0, 1.0);
  const double ridge = 1e-6;
  int wins = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const int k = kd(rng), h = hd(rng);
    Eigen::MatrixXd w(h, k);
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < k; ++j) w(i, j) = n(rng);
    const double best = multidomain::trace_term(w, multidomain::omega_update(w, ridge), ridge);
    bool beaten = false;
    for (int r = 0; r < 1000 && !beaten; ++r) {
      beaten = multidomain::trace_term(w, random_feasible_omega(rng, k), ridge) < best;
    }
    if (!beaten) ++wins;
  }
  const double secs = seconds_since(t0);
  return {updates == 50 && valid == updates && wins == 20 && secs < 30.0,
          fmt("%d/%d updates valid; closed form optimal on %d/20 W vs 1000 random feasible; %.1f s",
              valid, updates, wins, secs)};
}

// ---- 3 --------------------------------------------------------------------

Outcome hand_values() {
  Eigen::MatrixXd w(2, 2);
  w << 2, 0, 0, 1;  // W^T W = diag(4, 1)
  const Eigen::MatrixXd omega = multidomain::omega_update(w, 0.0);
  Eigen::MatrixXd expect(2, 2);
  expect << 2.0 / 3.0, 0, 0, 1.0 / 3.0;
  const double omega_err = (omega - expect).cwiseAbs().maxCoeff();
  const double trace = multidomain::trace_term(w, omega, 0.0);
  const std::vector<double> a{1, 2, 3}, b{1, 2, 4};
  const double r = eval::pearson(a, b);
  const double r_err = std::abs(r - 6.0 / std::sqrt(42.0));
  // Definition evaluated by hand: deviations (-1,0,1) and (-4/3,-1/3,5/3)
  // give cov 3, sums of squares 2 and 42/9, so r = 9 / sqrt(84).
  const double oracle_err = std::abs(r - 9.0 / std::sqrt(84.0));
  return {omega_err <= 1e-10 && std::abs(trace - 9.0) <= 1e-9 && r_err <= 1e-9,
          fmt("omega err %.1e, trace %.12f (9), pearson %.12f vs required 6/sqrt(42) = %.12f "
              "(err %.1e); definition gives 9/sqrt(84) (err %.1e)",
              omega_err, trace, r, 6.0 / std::sqrt(42.0), r_err, oracle_err)};
}

// ---- 4 --------------------------------------------------------------------

Outcome gate_degeneracy() {
  const auto t0 = std::chrono::steady_clock::now();
  synthetic::SyntheticSpec spec;
  spec.domains = 1;
  spec.vocab_size = 80;
  spec.train_docs = {100};
  spec.seed = 5;
  const auto task = make_task(spec, 6);
  auto cfg = small_config(task.ds, task.aspects.aspects());
  auto params = model::EncoderParams::init(cfg, task.ds.vocab.size(), task.ds.chars.size(), 5);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (Parameter* p : params.all()) {
    auto v = p->value.data();
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!p->is_frozen_row(i / p->row_width())) v[i] = u(rng);
    }
  }
  double worst = 0.0;
  const auto& reviews = task.ds.splits[text::Split::train];
  for (const auto& r : reviews) {
    Tape tape;
    model::BoundEncoder enc(tape, params, task.aspects, cfg);
    const Tensor a = enc.encode(r, model::GateMode::forced_one).value();
    const Tensor b = enc.encode(r, model::GateMode::disabled).value();
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  }
  const double secs = seconds_since(t0);
  return {reviews.size() == 100 && worst <= 1e-12 && secs < 10.0,
          fmt("%zu reviews, max |h_forced - h_ungated| = %.1e, %.2f s", reviews.size(), worst, secs)};
}

// ---- 5 --------------------------------------------------------------------

Outcome overfit() {
  const auto t0 = std::chrono::steady_clock::now();
  synthetic::SyntheticSpec spec;
  spec.domains = 1;
  spec.train_docs = {64};
  spec.seed = 3;
  const auto task = make_task(spec);
  auto md = multidomain::init_model(small_config(task.ds, task.aspects.aspects()), task.ds,
                                    task.aspects, multidomain::Mode::target_only, 0, 3);
  multidomain::TrainConfig tc;
  tc.epochs = 200;
  tc.lr = 0.08;
  tc.seed = 3;
  multidomain::train(md, task.ds, task.aspects, tc);
  const double r = domain_pearson(md, task, text::Split::train, 0);
  const double secs = seconds_since(t0);
  return {r >= 0.95 && secs < 300.0,
          fmt("train Pearson %.4f (>= 0.95) after 200 epochs, %.1f s", r, secs)};
}

// ---- 6 and 7 share the 20 seeded three-domain runs ---------------------------

struct RelationRun {
  Eigen::MatrixXd omega;
  double signal_gate = 0.0;
  double filler_gate = 0.0;
};

std::vector<RelationRun>& relation_runs(double* secs) {
  static std::vector<RelationRun> runs;
  static double elapsed = 0.0;
  if (runs.empty()) {
    const auto t0 = std::chrono::steady_clock::now();
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      synthetic::SyntheticSpec spec;
      spec.related = related_pairs(3, {{0, 1}});
      spec.train_docs = {400};
      spec.noise = 0.0;
      spec.seed = seed;
      const auto task = make_task(spec);
      auto md = multidomain::init_model(small_config(task.ds, task.aspects.aspects()), task.ds,
                                        task.aspects, multidomain::Mode::full, -1, seed);
      multidomain::TrainConfig tc;
      tc.epochs = 50;
      tc.seed = seed;
      multidomain::train(md, task.ds, task.aspects, tc);

      RelationRun run;
      run.omega = md.omega;
      double sg = 0, fg = 0;
      std::size_t sn = 0, fn = 0;
      for (const auto& r : task.ds.splits[text::Split::train]) {
        for (const auto& [tok, g] : model::inspect_gates(md.encoder, task.aspects, md.config, r)) {
          if (tok[0] == 's') {
            sg += g;
            ++sn;
          } else {
            fg += g;
            ++fn;
          }
        }
      }
      run.signal_gate = sn ? sg / static_cast<double>(sn) : 0.0;
      run.filler_gate = fn ? fg / static_cast<double>(fn) : 0.0;
      runs.push_back(run);
    }
    elapsed = seconds_since(t0);
  }
  if (secs) *secs = elapsed;
  return runs;
}

Outcome relationship_recovery() {
  double secs = 0.0;
  const auto& runs = relation_runs(&secs);
  int wins = 0;
  for (const auto& r : runs) {
    if (r.omega(0, 1) > std::max(r.omega(0, 2), r.omega(1, 2))) ++wins;
  }
  return {wins >= 18 && secs < 1200.0,
          fmt("Omega12 > max(Omega13, Omega23) in %d/20 runs (>= 18), %.1f s", wins, secs)};
}

Outcome gate_interpretability() {
  const auto& runs = relation_runs(nullptr);
  int wins = 0;
  double sg = 0, fg = 0;
  for (const auto& r : runs) {
    if (r.signal_gate > r.filler_gate) ++wins;
    sg += r.signal_gate;
    fg += r.filler_gate;
  }
  return {wins >= 18, fmt("signal gate > filler gate in %d/20 runs (>= 18); means %.4f vs %.4f",
                          wins, sg / 20.0, fg / 20.0)};
}

// ---- 8 --------------------------------------------------------------------

Outcome cross_domain_benefit() {
  const auto t0 = std::chrono::steady_clock::now();
  double gain = 0.0;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    synthetic::SyntheticSpec spec;
    spec.related = related_pairs(3, {{0, 1}, {0, 2}, {1, 2}});
    spec.train_docs = {100, 2000, 2000};  // domain1 is the target
    spec.test_docs = {500, 0, 0};
    spec.seed = seed;
    const auto task = make_task(spec);
    const auto cfg = small_config(task.ds, task.aspects.aspects());

    auto full = multidomain::init_model(cfg, task.ds, task.aspects, multidomain::Mode::full, -1, seed);
    multidomain::TrainConfig tc;
    tc.epochs = 20;
    tc.seed = seed;
    multidomain::train(full, task.ds, task.aspects, tc);

    auto target = multidomain::init_model(cfg, task.ds, task.aspects, multidomain::Mode::target_only, 0, seed);
    multidomain::TrainConfig tt = tc;
    tt.epochs = 200;
    multidomain::train(target, task.ds, task.aspects, tt);

    const double rf = domain_pearson(full, task, text::Split::test, 0);
    const double rt = domain_pearson(target, task, text::Split::test, 0);
    gain += rf - rt;
    per_seed += fmt(" %+.3f", rf - rt);
  }
  gain /= 10.0;
  const double secs = seconds_since(t0);
  return {gain >= 0.02,
          fmt("mean test Pearson gain full - target-only %.4f (>= 0.02), %.1f s; per seed%s", gain,
              secs, per_seed.c_str())};
}

// ---- 9 --------------------------------------------------------------------

Outcome pipeline_invariants() {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::string> failures;
  auto expect = [&](bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  };

  const std::string sample = "It's GREAT -- works well, 10/10!  Caf\xc3\xa9 ok";
  const auto toks = text::tokenize(sample);
  expect(toks == text::tokenize(sample), "tokenize determinism");
  expect(toks == std::vector<std::string>{"it", "s", "great", "works", "well", "10", "10",
                                          "caf\xc3\xa9", "ok"},
         "tokenize output");

  std::vector<std::vector<std::string>> corpus{toks, {"alpha", "beta"}};
  const auto vocab = text::Vocab::build(corpus, 1);
  const auto chars = text::CharVocab::build(corpus);
  for (int n : {0, 3, 7, 40}) {
    std::vector<std::string> words(static_cast<std::size_t>(n), "supercalifragilistic");
    const auto r = text::encode_tokens(words, 0.5, 0, vocab, chars, {7, 5});
    expect(r.word_ids.size() == 7 && r.char_ids.size() == 35 &&
               r.tokens.size() == static_cast<std::size_t>(std::min(n, 7)),
           "encode length contract n=" + std::to_string(n));
  }

  const fs::path dir = fs::temp_directory_path() / "egcnn_acceptance_ingest";
  fs::create_directories(dir);
  {
    std::ofstream f(dir / "votes.json");
    for (int b = 0; b <= 9; ++b) {
      f << "{\"reviewText\": \"review " << b << "\", \"helpful\": [0, " << b << "]}\n";
    }
  }
  const auto kept = text::ingest_reviews(dir / "votes.json", "d");
  bool filter_ok = kept.size() == 4;
  for (const auto& r : kept) filter_ok = filter_ok && r.helpful_total > 5;
  expect(filter_ok, "ingestion keeps exactly helpful_total > 5");
  fs::remove_all(dir);

  std::vector<std::vector<int>> docs{{2, 3, 4, 2}, {5, 6, 5}, {2, 6, 7, 3, 3}};
  aspect::LdaConfig lda;
  lda.aspects = 3;
  lda.iterations = 20;
  const auto fit = aspect::fit_aspects(docs, 9, lda);
  double phi_err = 0.0, rep_err = 0.0;
  for (std::size_t a = 0; a < fit.phi.dim(0); ++a) {
    double s = 0;
    for (double v : fit.phi.row(a)) s += v;
    phi_err = std::max(phi_err, std::abs(s - 1.0));
  }
  const Tensor rep = aspect::word_aspect_rep(fit.phi);
  for (std::size_t v = 0; v < rep.dim(0); ++v) {
    double s = 0;
    for (double x : rep.row(v)) s += x;
    rep_err = std::max(rep_err, std::abs(s - 1.0));
  }
  expect(phi_err <= 1e-9 && rep_err <= 1e-9, "phi / phi' row-stochastic");

  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> p(50), y(50), q(50);
  for (std::size_t i = 0; i < 50; ++i) {
    p[i] = n(rng);
    y[i] = n(rng);
    q[i] = 3.5 * p[i] - 2.0;
  }
  expect(std::abs(eval::pearson(p, y) - eval::pearson(q, y)) <= 1e-12, "pearson affine invariance");

  const double secs = seconds_since(t0);
  std::string detail = failures.empty() ? "all invariants hold" : "failed:";
  for (const auto& f : failures) detail += " [" + f + "]";
  return {failures.empty() && secs < 60.0, detail + fmt(", %.2f s", secs)};
}

// ---- 10 -------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism() {
  const fs::path dir = fs::temp_directory_path() / "egcnn_acceptance_determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string data = (dir / "syn.json").string(), phi = (dir / "phi.json").string();
  std::ostringstream out, err;
  int rc = cli::run({"gen-synthetic", "--related", "1:2", "--train-docs", "48", "--seed", "4",
                     "--out", data},
                    out, err);
  rc |= cli::run({"fit-aspects", "--data", data, "--aspects", "4", "--lda-iters", "20", "--out", phi},
                 out, err);
  std::vector<std::string> train{"train", "--data", data, "--phi", phi, "--dim", "8",
                                 "--char-dim", "4", "--char-features", "4", "--channels", "8",
                                 "--epochs", "5", "--seed", "7", "--out"};
  auto a = train, b = train;
  a.push_back((dir / "a.ckpt").string());
  b.push_back((dir / "b.ckpt").string());
  rc |= cli::run(a, out, err);
  rc |= cli::run(b, out, err);
  const bool same_ckpt = slurp(dir / "a.ckpt") == slurp(dir / "b.ckpt");
  const bool same_log = slurp(dir / "a.ckpt.log.jsonl") == slurp(dir / "b.ckpt.log.jsonl");
  const bool nonempty = !slurp(dir / "a.ckpt").empty();
  fs::remove_all(dir);
  return {rc == 0 && same_ckpt && same_log && nonempty,
          fmt("exit %d, checkpoints %s, logs %s", rc, same_ckpt ? "identical" : "differ",
              same_log ? "identical" : "differ") +
              (rc ? " (" + err.str() + ")" : std::string())};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient soundness", gradient_soundness},
      {"omega validity and optimality", omega_validity},
      {"hand-check values", hand_values},
      {"gate degeneracy", gate_degeneracy},
      {"overfit capability", overfit},
      {"domain-relationship recovery", relationship_recovery},
      {"gate interpretability", gate_interpretability},
      {"cross-domain benefit", cross_domain_benefit},
      {"pipeline invariants", pipeline_invariants},
      {"determinism", determinism},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << id << ". " << criteria[i].first << ": "
              << o.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
