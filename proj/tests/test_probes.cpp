#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"
#include "jabberprobe/probes.hpp"

using namespace jabberprobe;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> xs) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

TrainConfig planted_config() {
  TrainConfig cfg;
  cfg.learning_rate = 0.01;
  cfg.batch_size = 8;
  cfg.max_epochs = 20;
  cfg.seed = 3;
  return cfg;
}

struct Scores {
  double dspr;
  double uuas;
};

Scores evaluate(const ProbeParams& p, const ProbeDataset& data) {
  std::vector<Eigen::MatrixXd> pred;
  std::vector<DistanceMatrix> gold;
  std::vector<UndirectedTree> pt, gt;
  for (const auto& ex : data) {
    pred.push_back(predict_distances(p, ex.embeddings));
    gold.push_back(ex.gold_distances);
    pt.push_back(predict_tree(p, ex.embeddings));
    gt.push_back(ex.gold_tree);
  }
  return {dspr(pred, gold).value, uuas(pt, gt).value};
}

}  // namespace

TEST(SquaredDistance, Examples) {
  ProbeParams one{ProbeKind::structural, Eigen::MatrixXd::Identity(1, 1)};
  EXPECT_DOUBLE_EQ(squared_distance(one, vec({3}), vec({1})), 4.0);
  ProbeParams zero{ProbeKind::structural, Eigen::MatrixXd::Zero(2, 3)};
  EXPECT_DOUBLE_EQ(squared_distance(zero, vec({1, 2, 3}), vec({-4, 0, 9})), 0.0);
  ProbeParams diag{ProbeKind::structural, Eigen::MatrixXd(2, 2)};
  diag.B << 1, 0, 0, 2;
  EXPECT_DOUBLE_EQ(squared_distance(diag, vec({1, 1}), vec({0, 0})), 5.0);
  EXPECT_THROW(squared_distance(diag, vec({1}), vec({0, 0})), DataError);
}

TEST(SquaredDistance, ScaleEquivariance) {
  detail::Rng rng(17);
  for (int i = 0; i < 100; ++i) {
    auto g = fixtures::random_gradient_instance(ProbeKind::perceptron, rng);
    const double c = rng.uniform(0.1, 10.0);
    ProbeParams scaled{g.params.kind, c * g.params.B};
    Eigen::MatrixXd d = predict_distances(g.params, g.embeddings);
    Eigen::MatrixXd ds = predict_distances(scaled, g.embeddings);
    EXPECT_TRUE(ds.isApprox(c * c * d, 1e-12) || d.isZero());
    EXPECT_EQ(predict_tree(g.params, g.embeddings).edges, predict_tree(scaled, g.embeddings).edges);
  }
}

TEST(StructuralLoss, Examples) {
  auto chain = make_tree(2, {{1, 2}});
  ProbeParams zero{ProbeKind::structural, Eigen::MatrixXd::Zero(1, 1)};
  Eigen::MatrixXd h(2, 1);
  h << 0, 1;
  auto r = structural_loss(zero, h, distance_matrix(chain));
  EXPECT_DOUBLE_EQ(r.loss, 0.5);

  detail::Rng rng(2);
  auto t = fixtures::uniform_tree(7, rng);
  ProbeParams id{ProbeKind::structural, Eigen::MatrixXd::Identity(6, 6)};
  auto exact = structural_loss(id, fixtures::planted_embeddings(t, 6), distance_matrix(t));
  EXPECT_EQ(exact.loss, 0.0);
  EXPECT_TRUE(exact.grad.isZero());
  EXPECT_THROW(structural_loss(id, Eigen::MatrixXd::Zero(1, 6), distance_matrix(UndirectedTree{1, {}})), DataError);
}

TEST(PerceptronLoss, Examples) {
  // points (0,0), (1,0), (2,1): squared distances 1, 2, 5
  Eigen::MatrixXd h(3, 2);
  h << 0, 0, 1, 0, 2, 1;
  ProbeParams id{ProbeKind::perceptron, Eigen::MatrixXd::Identity(2, 2)};
  auto r = perceptron_loss(id, h, make_tree(3, {{1, 3}, {2, 3}}));
  EXPECT_DOUBLE_EQ(r.loss, 4.0);
  EXPECT_EQ(predict_tree(id, h).edges, (std::vector<Edge>{{1, 2}, {2, 3}}));
  auto ok = perceptron_loss(id, h, make_tree(3, {{1, 2}, {2, 3}}));
  EXPECT_EQ(ok.loss, 0.0);
  EXPECT_TRUE(ok.grad.isZero());
}

TEST(PerceptronLoss, NonnegativeOnRandomInstances) {
  detail::Rng rng(23);
  for (int i = 0; i < 1000; ++i) {
    auto g = fixtures::random_gradient_instance(ProbeKind::perceptron, rng);
    EXPECT_GE(perceptron_loss(g.params, g.embeddings, g.gold).loss, 0.0);
  }
}

TEST(GradientCheck, BothLosses) {
  for (auto kind : {ProbeKind::structural, ProbeKind::perceptron}) {
    detail::Rng rng(kind == ProbeKind::structural ? 101 : 202);
    int checked = 0;
    double worst = 0.0;
    for (int attempt = 0; attempt < 400 && checked < 60; ++attempt) {
      auto g = fixtures::random_gradient_instance(kind, rng);
      if (auto err = fixtures::gradient_check(kind, g.params, g.embeddings, g.gold)) {
        worst = std::max(worst, *err);
        ++checked;
      }
    }
    EXPECT_GE(checked, 50) << to_string(kind);
    EXPECT_LT(worst, 1e-3) << to_string(kind);
  }
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Adam adam;
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(1, 3);
  Eigen::MatrixXd g(1, 3);
  g << 2.0, -0.5, 0.0;
  adam.step(p, g, 0.1);
  EXPECT_NEAR(p(0, 0), -0.1, 1e-8);
  EXPECT_NEAR(p(0, 1), 0.1, 1e-8);
  EXPECT_EQ(p(0, 2), 0.0);
  EXPECT_EQ(adam.step_count, 1);
}

TEST(Planted, EmbeddingsReproduceTreeDistances) {
  detail::Rng rng(9);
  for (int i = 0; i < 100; ++i) {
    auto t = fixtures::uniform_tree(static_cast<int>(rng.integer(1, 12)), rng);
    ProbeParams id{ProbeKind::structural, Eigen::MatrixXd::Identity(11, 11)};
    Eigen::MatrixXd d = predict_distances(id, fixtures::planted_embeddings(t, 11));
    EXPECT_TRUE(d.isApprox(to_real(distance_matrix(t))) || t.n == 1);
  }
}

TEST(TrainProbe, LearnsPlantedSolution) {
  detail::Rng rng(0);
  auto train = fixtures::planted_dataset(200, 5, 12, 11, rng, "train-");
  auto dev = fixtures::planted_dataset(50, 5, 12, 11, rng, "dev-");
  auto structural = train_probe(ProbeKind::structural, train, dev, planted_config());
  EXPECT_LT(structural.history.best_dev_loss, 0.05);
  // ties among gold distances cap DSpr below 1 for any inexact predictor
  EXPECT_GT(evaluate(structural.params, dev).dspr, 0.9);
  auto perceptron = train_probe(ProbeKind::perceptron, train, dev, planted_config());
  EXPECT_GE(evaluate(perceptron.params, dev).uuas, 0.9);
}

TEST(TrainProbe, DeterministicAndReturnsBest) {
  detail::Rng rng(4);
  auto train = fixtures::planted_dataset(40, 4, 8, 7, rng, "t");
  auto dev = fixtures::planted_dataset(10, 4, 8, 7, rng, "d");
  auto cfg = planted_config();
  cfg.dropout = 0.3;
  cfg.checkpoint_every = 7;
  cfg.max_epochs = 5;
  auto a = train_probe(ProbeKind::structural, train, dev, cfg);
  auto b = train_probe(ProbeKind::structural, train, dev, cfg);
  EXPECT_EQ(a.history, b.history);
  EXPECT_EQ(serialize_probe(a.params), serialize_probe(b.params));
  EXPECT_DOUBLE_EQ(mean_loss(ProbeKind::structural, a.params, dev), a.history.best_dev_loss);
  for (std::size_t i = 1; i < a.history.checkpoints.size(); ++i)
    EXPECT_GT(a.history.checkpoints[i].step, a.history.checkpoints[i - 1].step);
  cfg.dropout_site = DropoutSite::projection;
  auto c = train_probe(ProbeKind::structural, train, dev, cfg);
  EXPECT_NE(serialize_probe(c.params), serialize_probe(a.params));
  cfg.seed = 4;
  EXPECT_NE(serialize_probe(train_probe(ProbeKind::structural, train, dev, cfg).params), serialize_probe(c.params));
}

TEST(TrainProbe, PatienceZeroStopsAtFirstNonImprovingCheckpoint) {
  detail::Rng rng(5);
  auto train = fixtures::planted_dataset(30, 4, 8, 7, rng, "t");
  auto dev = fixtures::planted_dataset(10, 4, 8, 7, rng, "d");
  TrainConfig cfg;
  cfg.learning_rate = 5e-3;
  cfg.batch_size = 1;
  cfg.checkpoint_every = 1;
  cfg.patience = 0;
  cfg.max_epochs = 50;
  auto r = train_probe(ProbeKind::perceptron, train, dev, cfg);
  ASSERT_EQ(r.history.stop_reason, "early_stopping");
  const auto& cps = r.history.checkpoints;
  ASSERT_GE(cps.size(), 2u);
  EXPECT_GE(cps.back().dev_loss, r.history.best_dev_loss);
  for (std::size_t i = 1; i + 1 < cps.size(); ++i) EXPECT_LT(cps[i].dev_loss, cps[i - 1].dev_loss) << i;
}

TEST(TrainProbe, Validation) {
  detail::Rng rng(6);
  auto data = fixtures::planted_dataset(5, 3, 5, 4, rng, "x");
  TrainConfig cfg;
  EXPECT_THROW(train_probe(ProbeKind::structural, {}, data, cfg), DataError);
  cfg.rank = 5;
  EXPECT_THROW(train_probe(ProbeKind::structural, data, data, cfg), ConfigError);
  cfg.rank = 0;
  cfg.dropout = 1.0;
  EXPECT_THROW(train_probe(ProbeKind::structural, data, data, cfg), ConfigError);
  cfg.dropout = 0.0;
  cfg.learning_rate = 1e300;
  cfg.init_range = 1e200;
  EXPECT_THROW(train_probe(ProbeKind::structural, data, data, cfg), NumericalError);
}

TEST(Search, SampledConfigsInRange) {
  SearchSpace space;
  auto trials = sample_trials(space, TrainConfig{}, 8, 200, 1024, 42);
  ASSERT_EQ(trials.size(), 200u);
  for (const auto& c : trials) {
    EXPECT_GE(c.learning_rate, 5e-5);
    EXPECT_LE(c.learning_rate, 5e-3);
    EXPECT_GE(c.rank, 1);
    EXPECT_LE(c.rank, 1024);
    EXPECT_GE(c.dropout, 0.1);
    EXPECT_LE(c.dropout, 0.8);
  }
  EXPECT_EQ(sample_trials(space, TrainConfig{}, 8, 200, 1024, 42), trials);
  EXPECT_NE(sample_trials(space, TrainConfig{}, 4, 1, 1024, 42)[0], trials[0]);
  EXPECT_EQ(sweep_layers(24), (std::vector<int>{0, 4, 8, 12, 16, 20, 24}));
  EXPECT_EQ(sweep_layers(12).size(), 4u);
}

TEST(Search, SingleTrialAndLayers) {
  detail::Rng rng(8);
  auto train = fixtures::planted_dataset(20, 4, 7, 6, rng, "t");
  auto dev = fixtures::planted_dataset(6, 4, 7, 6, rng, "d");
  TrainConfig base;
  base.max_epochs = 2;
  base.batch_size = 4;
  int loads = 0;
  auto load = [&](int) {
    ++loads;
    return LayerData{train, dev};
  };
  std::vector<TrialRecord> seen;
  auto one = random_search(ProbeKind::structural, load, {0}, {}, base, 1, 11, [&](const TrialRecord& r) { seen.push_back(r); });
  ASSERT_EQ(one.trials.size(), 1u);
  ASSERT_EQ(seen.size(), 1u);
  auto direct = train_probe(ProbeKind::structural, train, dev, one.trials[0].config);
  EXPECT_EQ(serialize_probe(direct.params), serialize_probe(one.best_params));
  EXPECT_EQ(direct.history, one.best_history);

  auto many = random_search(ProbeKind::structural, load, {0, 4, 8}, {}, base, 3, 11);
  EXPECT_EQ(many.trials.size(), 9u);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& t : many.trials) best = std::min(best, t.history.best_dev_loss);
  EXPECT_EQ(many.best_history.best_dev_loss, best);
  EXPECT_EQ(loads, 4);
}

TEST(Jprb, RoundTripAndErrors) {
  detail::Rng rng(12);
  for (int i = 0; i < 20; ++i) {
    auto g = fixtures::random_gradient_instance(i % 2 ? ProbeKind::perceptron : ProbeKind::structural, rng);
    auto bytes = serialize_probe(g.params);
    EXPECT_EQ(bytes.size(), 4u + 4 + 1 + 4 + 4 + 8 * static_cast<std::size_t>(g.params.B.size()));
    auto back = deserialize_probe(bytes);
    EXPECT_EQ(back.kind, g.params.kind);
    EXPECT_EQ(back.B, g.params.B);
  }
  ProbeParams p{ProbeKind::perceptron, Eigen::MatrixXd::Ones(1, 2)};
  auto good = serialize_probe(p);
  EXPECT_EQ(static_cast<int>(good[8]), 1);
  EXPECT_THROW(deserialize_probe("XPRB" + good.substr(4)), FormatError);
  EXPECT_THROW(deserialize_probe(good.substr(0, good.size() - 1)), FormatError);
  EXPECT_THROW(deserialize_probe(good + '\0'), FormatError);
  auto bad_kind = good;
  bad_kind[8] = 7;
  EXPECT_THROW(deserialize_probe(bad_kind), FormatError);
}

TEST(Json, ConfigAndHistoryRoundTrip) {
  TrainConfig c;
  c.learning_rate = 3.25e-4;
  c.rank = 17;
  c.dropout = 0.4;
  c.dropout_site = DropoutSite::projection;
  c.seed = 0xfedcba9876543210ull;
  EXPECT_EQ(nlohmann::json(c).get<TrainConfig>(), c);
  TrainHistory h;
  h.checkpoints = {{100, 1, 0.5}, {200, 2, 0.25}};
  h.steps = 250;
  h.best_step = 200;
  h.best_epoch = 2;
  h.best_dev_loss = 0.25;
  h.stop_reason = "max_epochs";
  EXPECT_EQ(nlohmann::json(h).get<TrainHistory>(), h);
  EXPECT_EQ(parse_probe_kind("perceptron"), ProbeKind::perceptron);
  EXPECT_THROW(parse_probe_kind("mlp"), ConfigError);
}
