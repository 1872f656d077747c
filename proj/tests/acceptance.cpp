// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

#include "fixtures.hpp"
#include "jabberprobe/baselines.hpp"
#include "jabberprobe/detail/file_io.hpp"
#include "jabberprobe/experiment.hpp"
#include "jabberprobe/metrics.hpp"
#include "jabberprobe/probes.hpp"
#include "jabberprobe/substitute.hpp"

using namespace jabberprobe;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string data_path(const char* name) { return std::string(JABBERPROBE_TEST_DATA) + "/" + name; }

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

std::string num(double v, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << std::fixed << v;
  return s.str();
}

Outcome tree_counting() {
  bool ok = count_trees(5) == 125 && count_labeled_directed(5, 36) == BigInt("1049760000");
  std::string sizes;
  for (int n = 1; n <= 8; ++n) {
    std::size_t expected = 1;
    for (int k = 0; k < n - 2; ++k) expected *= static_cast<std::size_t>(n);
    auto got = enumerate_trees(n).size();
    ok = ok && got == expected;
    sizes += (n > 1 ? "," : "") + std::to_string(got);
  }
  return {ok, "count_trees(5)=" + count_trees(5).str() + " count_labeled_directed(5,36)=" + count_labeled_directed(5, 36).str() +
                  " |enumerate_trees(1..8)|=" + sizes};
}

Outcome mst_oracle() {
  detail::Rng rng(20240501);
  int agree = 0;
  double worst = 0.0;
  for (int i = 0; i < 500; ++i) {
    int n = static_cast<int>(rng.integer(2, 6));
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
    for (int a = 0; a < n; ++a)
      for (int b = a + 1; b < n; ++b) w(a, b) = w(b, a) = rng.bernoulli(0.3) ? static_cast<double>(rng.integer(0, 3)) : rng.uniform(-5, 5);
    double best = std::numeric_limits<double>::infinity();
    for_each_tree(n, [&](const UndirectedTree& t) { best = std::min(best, tree_weight(w, t)); });
    double got = tree_weight(w, mst_prim(w));
    worst = std::max(worst, std::abs(got - best));
    agree += std::abs(got - best) <= 1e-9;
  }
  return {agree == 500, std::to_string(agree) + "/500 optimal, max weight gap " + sci(worst)};
}

Outcome majority_oracle() {
  detail::Rng rng(77);
  int checked = 0, agree = 0;
  for (int c = 0; c < 50; ++c) {
    std::vector<UndirectedTree> corpus;
    auto size = rng.integer(1, 40);
    for (long long i = 0; i < size; ++i) corpus.push_back(fixtures::uniform_tree(static_cast<int>(rng.integer(1, 6)), rng));
    auto m = majority_fit(corpus);
    for (int n = 2; n <= 6; ++n) {
      Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(n, n);
      bool seen = false;
      for (const auto& t : corpus)
        if (t.n == n) {
          seen = true;
          for (auto [a, b] : t.edges) counts(a - 1, b - 1) += 1, counts(b - 1, a - 1) += 1;
        }
      if (!seen) continue;
      double best = -1;
      for_each_tree(n, [&](const UndirectedTree& t) { best = std::max(best, tree_weight(counts, t)); });
      ++checked;
      agree += tree_weight(counts, majority_predict(m, n)) == best;
    }
  }
  return {checked > 0 && agree == checked, std::to_string(agree) + "/" + std::to_string(checked) + " (corpus, length) pairs at the brute-force maximum"};
}

// Ranks by direct counting: rank = #smaller + (#equal + 1) / 2.
double spearman_oracle(const std::vector<double>& x, const std::vector<double>& y) {
  auto ranks = [](const std::vector<double>& v) {
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      double less = 0, equal = 0;
      for (double w : v) less += w < v[i], equal += w == v[i];
      r[i] = less + (equal + 1) / 2;
    }
    return r;
  };
  auto rx = ranks(x), ry = ranks(y);
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) mx += rx[i], my += ry[i];
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

Outcome metric_fixtures() {
  double u = uuas(path_tree(6), make_tree(6, fixtures::fig2_edges()));

  detail::Rng rng(5);
  double dspr_min = 1.0, dspr_max = 1.0;
  const std::vector<std::function<double(double)>> transforms{[](double d) { return std::exp(d); }, [](double d) { return d * d * d; },
                                                              [](double d) { return std::log1p(d); }, [](double d) { return 2 * d + 7; }};
  for (int i = 0; i < 100; ++i) {
    auto t = fixtures::uniform_tree(static_cast<int>(rng.integer(3, 15)), rng);
    auto gold = distance_matrix(t);
    for (const auto& f : transforms) {
      Eigen::MatrixXd pred = to_real(gold).unaryExpr(f);
      auto v = dspr(std::vector<Eigen::MatrixXd>{pred}, std::vector<DistanceMatrix>{gold}).value;
      dspr_min = std::min(dspr_min, v);
      dspr_max = std::max(dspr_max, v);
    }
  }

  double tie_err = 0.0;
  for (int i = 0; i < 500; ++i) {
    auto n = static_cast<std::size_t>(rng.integer(2, 12));
    std::vector<double> x(n), y(n);
    for (std::size_t k = 0; k < n; ++k) x[k] = static_cast<double>(rng.integer(0, 3)), y[k] = static_cast<double>(rng.integer(0, 4));
    if (detail::is_constant(x) || detail::is_constant(y)) continue;
    tie_err = std::max(tie_err, std::abs(spearman_rank(x, y) - spearman_oracle(x, y)));
  }
  bool ok = u == 0.6 && std::abs(dspr_min - 1.0) <= 1e-12 && std::abs(dspr_max - 1.0) <= 1e-12 && tie_err < 1e-12;
  std::ostringstream d;
  d << "UUAS(Path, Fig. 2)=" << u << ", DSpr under monotone transforms in [" << num(dspr_min, 15) << ", " << num(dspr_max, 15)
    << "], max tie deviation from average-rank oracle " << sci(tie_err);
  return {ok, d.str()};
}

Outcome gradient_checks() {
  detail::Rng rng(1234);
  std::string detail;
  bool ok = true;
  for (auto kind : {ProbeKind::structural, ProbeKind::perceptron}) {
    int valid = 0;
    double worst = 0.0;
    for (int attempt = 0; attempt < 2000 && valid < 200; ++attempt) {
      auto inst = fixtures::random_gradient_instance(kind, rng);
      auto err = fixtures::gradient_check(kind, inst.params, inst.embeddings, inst.gold);
      if (!err) continue;
      ++valid;
      worst = std::max(worst, *err);
    }
    ok = ok && valid >= 50 && worst < 1e-3;
    detail += std::string(detail.empty() ? "" : "; ") + to_string(kind) + ": " + std::to_string(valid) + " instances, max rel error " + sci(worst);
  }
  return {ok, detail};
}

// Edge-indicator corpus: uniformly random labeled trees, each word the 0/1
// indicator of the edges on its path from word 1, padded to d = 11. Train,
// test and a separate dev set for checkpoint selection are drawn from one
// stream in that order.
Outcome planted_learning() {
  detail::Rng rng(0);
  const Eigen::Index dim = 11;
  auto train = fixtures::planted_dataset(200, 5, 12, dim, rng, "train-");
  auto test = fixtures::planted_dataset(50, 5, 12, dim, rng, "test-");
  auto dev = fixtures::planted_dataset(50, 5, 12, dim, rng, "dev-");

  TrainConfig cfg;
  cfg.learning_rate = 0.01;
  cfg.batch_size = 8;
  cfg.max_epochs = 20;
  cfg.seed = 3;
  auto started = std::chrono::steady_clock::now();
  auto s = train_probe(ProbeKind::structural, train, dev, cfg);
  auto p = train_probe(ProbeKind::perceptron, train, dev, cfg);
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

  std::vector<Eigen::MatrixXd> pred;
  std::vector<DistanceMatrix> gold;
  std::vector<UndirectedTree> pt, gt;
  for (const auto& ex : test) {
    pred.push_back(predict_distances(s.params, ex.embeddings));
    gold.push_back(ex.gold_distances);
    pt.push_back(predict_tree(p.params, ex.embeddings));
    gt.push_back(ex.gold_tree);
  }
  double d = dspr(pred, gold).value;
  double u = uuas(pt, gt).value;

  // Reference point: gold distances plus tiny i.i.d. noise. Gold ties are
  // broken at random by any inexact predictor, which caps DSpr below 1.
  detail::Rng noise(99);
  std::vector<Eigen::MatrixXd> jitter;
  for (const auto& g : gold) {
    Eigen::MatrixXd m = to_real(g);
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = i + 1; j < m.cols(); ++j) m(i, j) = m(j, i) = m(i, j) + noise.uniform(-1e-6, 1e-6);
    jitter.push_back(m);
  }
  double ceiling = dspr(jitter, gold).value;

  bool ok = d >= 0.95 && u >= 0.90 && secs < 120.0;
  return {ok, "structural DSpr " + num(d) + " (>= 0.95; gold-with-noise reference " + num(ceiling) + "), perceptron UUAS " + num(u) +
                  " (>= 0.90), " + std::to_string(s.history.steps) + "+" + std::to_string(p.history.steps) + " steps in " + num(secs, 1) + " s"};
}

Outcome jabberwocky_generation() {
  const auto text = detail::read_file(data_path("fixture.conllu"));
  auto corpus = parse_conllu(text);
  auto table = inflection_table(load_lexicon(data_path("lexicon.tsv")).entries);
  SubstitutionPlan plan;
  plan.seed = 2021;
  auto a = substitute_corpus(corpus, table, plan);
  auto b = substitute_corpus(corpus, table, plan);
  std::size_t same_distances = 0;
  for (std::size_t i = 0; i < corpus.size(); ++i) same_distances += distance_matrix(corpus[i]) == distance_matrix(a.corpus[i]);
  bool identical = write_conllu(a.corpus) == write_conllu(b.corpus);
  bool restored = write_conllu(strip_substitutions(parse_conllu(write_conllu(a.corpus)))) == text;
  bool ok = same_distances == corpus.size() && identical && restored && !a.log.empty();
  return {ok, std::to_string(same_distances) + "/" + std::to_string(corpus.size()) + " distance matrices equal, " + std::to_string(a.log.size()) +
                  " substitutions, same-seed output " + (identical ? "byte-identical" : "DIFFERS") + ", strip " +
                  (restored ? "restores the input byte-exactly" : "does NOT restore the input")};
}

Outcome baseline_blindness() {
  auto corpus = parse_conllu(detail::read_file(data_path("fixture.conllu")));
  auto table = inflection_table(load_lexicon(data_path("lexicon.tsv")).entries);
  auto jabber = substitute_corpus(corpus, table, {}).corpus;
  auto model = majority_fit(std::vector<Sentence>(corpus.begin(), corpus.begin() + 150));
  bool ok = true;
  std::string detail;
  for (const char* name : {"path", "majority"}) {
    auto scores = [&](const std::vector<Sentence>& c) {
      std::vector<UndirectedTree> trees;
      std::vector<Eigen::MatrixXd> dists;
      for (const auto& s : c) {
        int n = static_cast<int>(s.size());
        trees.push_back(std::string(name) == "path" ? path_tree(n) : majority_predict(model, n));
        dists.push_back(to_real(distance_matrix(trees.back())));
      }
      return score_predictions(c, trees, dists, {});
    };
    auto x = scores(corpus), y = scores(jabber);
    bool same = x.uuas.value == y.uuas.value && x.dspr.value == y.dspr.value && x.uuas.sentences == y.uuas.sentences;
    ok = ok && same;
    detail += std::string(detail.empty() ? "" : "; ") + name + " UUAS " + num(x.uuas.value, 6) + "/" + num(y.uuas.value, 6) + " DSpr " +
              num(x.dspr.value, 6) + "/" + num(y.dspr.value, 6);
  }
  return {ok, detail + " (normal/jabberwocky)"};
}

Outcome train_determinism() {
  auto dir = fs::temp_directory_path() / "jabberprobe_acceptance_determinism";
  fs::remove_all(dir);
  auto corpus = parse_conllu(detail::read_file(data_path("fixture.conllu")));
  detail::write_file(dir / "train.conllu", write_conllu(std::vector<Sentence>(corpus.begin(), corpus.begin() + 120)));
  detail::write_file(dir / "dev.conllu", write_conllu(std::vector<Sentence>(corpus.begin() + 120, corpus.begin() + 160)));
  const std::string text =
      "seed = 5\n[data]\ntrain = train.conllu\ndev = dev.conllu\n[models]\nnames = stub\n"
      "[model.stub]\ntype = embeddings\ndir = emb\nlayers = 0, 4\n[train]\nmax_epochs = 3\nbatch_size = 16\ndropout = 0.2\n";
  for (const char* split : {"train", "dev"}) {
    StubOptions o;
    o.corpus = dir / (std::string(split) + ".conllu");
    o.out_dir = dir / "emb";
    o.split = split;
    o.layers = {0, 4};
    cmd_extract_stub(o);
  }
  auto a = parse_config(text, dir, {"output_dir=run_a"});
  auto b = parse_config(text, dir, {"output_dir=run_b"});
  cmd_train(a);
  cmd_train(b);
  int files = 0, same = 0;
  for (int layer : {0, 4})
    for (auto kind : {ProbeKind::structural, ProbeKind::perceptron}) {
      ++files;
      same += detail::read_file(probe_artifact(a, "stub", layer, kind).params) == detail::read_file(probe_artifact(b, "stub", layer, kind).params);
    }
  fs::remove_all(dir);
  return {files == 4 && same == files, std::to_string(same) + "/" + std::to_string(files) + " probe parameter files bit-identical across two runs"};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    double limit_seconds;  // 0 = no runtime bound
    Outcome (*run)();
  };
  const Criterion criteria[] = {
      {"tree counting", 5, tree_counting},
      {"MST oracle equivalence", 30, mst_oracle},
      {"Majority oracle equivalence", 30, majority_oracle},
      {"metric fixtures", 0, metric_fixtures},
      {"gradient checks", 0, gradient_checks},
      {"planted-solution learning", 120, planted_learning},
      {"Jabberwocky generation", 0, jabberwocky_generation},
      {"baseline blindness", 0, baseline_blindness},
      {"determinism", 0, train_determinism},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    auto started = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    bool in_time = c.limit_seconds == 0 || secs < c.limit_seconds;
    bool pass = o.pass && in_time;
    failed += !pass;
    std::cout << (pass ? "PASS" : "FAIL") << "  " << c.name << ": " << o.detail << " [" << num(secs, 2) << " s"
              << (c.limit_seconds > 0 ? ", limit " + num(c.limit_seconds, 0) + " s" : "") << "]\n";
  }
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << "\n";
  return failed == 0 ? 0 : 1;
}
