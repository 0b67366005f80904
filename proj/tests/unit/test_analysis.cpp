#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "eswm/analysis.h"
#include "eswm/model/model.h"

using namespace eswm;

namespace {

// Confidence falls with the integration path through the bank.
class PathAware final : public Predictor {
 public:
  explicit PathAware(const Environment& env) : gt_(env, true), env_(env) {}
  std::vector<Prediction> predict(const MemoryBank& bank, std::span<const MaskedQuery> qs,
                                  bool = false) const override {
    auto out = gt_.predict(bank, qs);
    for (std::size_t i = 0; i < qs.size(); ++i) {
      const Transition& t = qs[i].transition;
      const auto len = integration_path_length(bank, t.source, t.end);
      const double eps = len ? *len / (*len + 1.0) : 0.99;
      Prediction& p = out[i];
      for (double& x : p.probs) x = (1.0 - eps) * x + eps / p.probs.size();
      finalize_prediction(p, qs[i].mask == Mask::Action ? action_idk_class() : state_idk_class());
    }
    return out;
  }
  int state_vocab() const override { return env_.vocab_size(); }
  bool has_idk() const override { return true; }

 private:
  GroundTruthPredictor gt_;
  const Environment& env_;
};

class Uniform final : public Predictor {
 public:
  explicit Uniform(int action_classes = 7) : action_classes_(action_classes) {}
  std::vector<Prediction> predict(const MemoryBank&, std::span<const MaskedQuery> qs,
                                  bool = false) const override {
    std::vector<Prediction> out;
    for (const auto& q : qs) {
      Prediction p;
      p.mask = q.mask;
      const int k = q.mask == Mask::Action ? action_classes_ : 20;
      p.probs.assign(k, 1.0 / k);
      finalize_prediction(p, k - 1);
      out.push_back(p);
    }
    return out;
  }
  int state_vocab() const override { return 19; }
  bool has_idk() const override { return true; }

 private:
  int action_classes_;
};

std::vector<double> upper_triangle(const Eigen::MatrixXd& m) {
  std::vector<double> v;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = i + 1; j < m.cols(); ++j) v.push_back(m(i, j));
  return v;
}

}  // namespace

TEST_CASE("wilson interval") {
  const Interval w = wilson_interval(8, 10);
  CHECK(w.lo == doctest::Approx(0.49016247153664183).epsilon(1e-9));
  CHECK(w.hi == doctest::Approx(0.9433178485456247).epsilon(1e-9));
  const Interval none = wilson_interval(0, 0);
  CHECK(none.lo == 0.0);
  CHECK(none.hi == 1.0);
  CHECK(wilson_interval(0, 50).lo == doctest::Approx(0.0));
  CHECK(wilson_interval(50, 50).hi == doctest::Approx(1.0));
}

TEST_CASE("binomial tail against a direct sum") {
  for (int n : {1, 10, 57}) {
    for (double p : {0.05, 0.3, 0.9}) {
      for (int k = 0; k <= n + 1; ++k) {
        double direct = 0.0;
        for (int j = k; j <= n; ++j) direct += std::exp(std::lgamma(n + 1.0) - std::lgamma(j + 1.0) -
                                                        std::lgamma(n - j + 1.0) + j * std::log(p) +
                                                        (n - j) * std::log1p(-p));
        CHECK(binomial_upper_tail(k, n, p) == doctest::Approx(std::min(1.0, direct)).epsilon(1e-9));
      }
    }
  }
  CHECK(binomial_upper_tail(25, 100, 0.05) == doctest::Approx(1.8159668438289814e-11).epsilon(1e-6));
}

TEST_CASE("spearman") {
  std::vector<double> x{1, 2, 3, 4, 5, 6, 7, 8, 9, 10}, y{2, 1, 4, 3, 6, 5, 8, 7, 10, 9};
  Correlation c = spearman(x, y);
  CHECK(c.rho == doctest::Approx(0.9393939393939393));
  CHECK(c.p_value == doctest::Approx(5.484052998513666e-05).epsilon(1e-6));
  // Ties use average ranks.
  c = spearman({1, 2, 2, 3, 5}, {1, 3, 2, 2, 4});
  CHECK(c.rho == doctest::Approx(0.7631578947368421));
  CHECK(c.p_value == doctest::Approx(0.1333391195318063).epsilon(1e-6));
  // Naive formula without ties.
  Rng rng(3);
  std::vector<double> a(40), b(40);
  for (int i = 0; i < 40; ++i) {
    a[i] = i;
    b[i] = i;
  }
  std::shuffle(b.begin(), b.end(), rng);
  double d2 = 0.0;
  for (int i = 0; i < 40; ++i) d2 += (a[i] - b[i]) * (a[i] - b[i]);
  CHECK(spearman(a, b).rho == doctest::Approx(1.0 - 6.0 * d2 / (40.0 * (1600.0 - 1.0))));
  CHECK(spearman({1, 2, 3}, {5, 5, 5}).degenerate);
  CHECK_THROWS_AS(spearman({1, 2}, {1}), std::invalid_argument);
}

TEST_CASE("welch t-test") {
  const TTest t = two_sample_t_test({1, 2, 3, 4, 5}, {2, 4, 6, 8, 10});
  CHECK(t.t == doctest::Approx(-1.8973665961010275));
  CHECK(t.df == doctest::Approx(5.882352941176471));
  CHECK(t.p_value == doctest::Approx(0.10753119493062718).epsilon(1e-6));
  CHECK(t.mean_a == 3.0);
  CHECK(t.mean_b == 6.0);
  const TTest same = two_sample_t_test({1, 1, 1}, {1, 1});
  CHECK(same.p_value == 1.0);
  CHECK_THROWS_AS(two_sample_t_test({1}, {1, 2}), std::invalid_argument);
}

TEST_CASE("linear fit and kl") {
  LinearFit f = linear_fit({0, 1, 2, 3}, {1, 3, 5, 7});
  CHECK(f.slope == doctest::Approx(2.0));
  CHECK(f.intercept == doctest::Approx(1.0));
  CHECK(f.r2 == doctest::Approx(1.0));
  f = linear_fit({1, 2, 3, 4}, {1, 3, 2, 4});
  CHECK(f.slope == doctest::Approx(0.8));
  CHECK(f.r2 == doctest::Approx(0.64));

  CHECK(kl_divergence({0.2, 0.8}, {0.2, 0.8}) == doctest::Approx(0.0));
  CHECK(kl_divergence({0.5, 0.5}, {0.25, 0.75}) ==
        doctest::Approx(0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0)));
  CHECK(kl_divergence({1.0, 0.0}, {0.5, 0.5}) == doctest::Approx(std::log(2.0)));
}

TEST_CASE("classical MDS recovers a Euclidean configuration") {
  Rng rng(9);
  std::normal_distribution<float> nd;
  std::vector<Eigen::VectorXf> pts;
  for (int i = 0; i < 25; ++i) {
    Eigen::VectorXf v(3);
    v << nd(rng), nd(rng), nd(rng);
    pts.push_back(v);
  }
  const Eigen::MatrixXd d = pairwise_distances(pts, Metric::Euclidean);
  const Eigen::MatrixXd x = classical_mds(d, 3);
  for (int i = 0; i < 25; ++i)
    for (int j = 0; j < 25; ++j) CHECK((x.row(i) - x.row(j)).norm() == doctest::Approx(d(i, j)).epsilon(1e-6));
}

TEST_CASE("isomap on a lattice") {
  const int side = 12, dim = 50;
  Rng rng(21);
  std::normal_distribution<double> nd;
  Eigen::MatrixXd g(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) g(i, j) = nd(rng);
  const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();
  std::vector<Eigen::VectorXf> pts;
  std::vector<Eigen::Vector2d> lattice;
  for (int a = 0; a < side; ++a)
    for (int b = 0; b < side; ++b) {
      Eigen::VectorXd v = Eigen::VectorXd::Zero(dim);
      v[0] = a;
      v[1] = b;
      pts.push_back((q * v).cast<float>());
      lattice.push_back({static_cast<double>(a), static_cast<double>(b)});
    }
  const EmbeddingResult r = isomap_embed(pts, 8, 3, Metric::Euclidean);
  CHECK(r.dropped == 0);
  CHECK(r.neighbor_count == 8);
  REQUIRE(r.coords.rows() == side * side);
  const int n = side * side;
  Eigen::MatrixXd emb(n, n), truth(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      emb(i, j) = (r.coords.row(i) - r.coords.row(j)).norm();
      truth(i, j) = (lattice[i] - lattice[j]).norm();
    }
  CHECK(pearson(upper_triangle(emb), upper_triangle(truth)) >= 0.95);
  // Shortest-path metric.
  const Eigen::MatrixXd& geo = r.geodesic;
  for (int i = 0; i < n; i += 7) {
    CHECK(geo(i, i) == 0.0);
    for (int j = 0; j < n; j += 5) {
      CHECK(geo(i, j) == doctest::Approx(geo(j, i)));
      for (int k = 0; k < n; k += 11) CHECK(geo(i, j) <= geo(i, k) + geo(k, j) + 1e-9);
    }
  }
}

TEST_CASE("isomap corner cases") {
  Rng rng(5);
  std::normal_distribution<float> nd;
  std::vector<Eigen::VectorXf> pts;
  for (int i = 0; i < 6; ++i) {
    Eigen::VectorXf v(4);
    v << nd(rng), nd(rng), nd(rng), nd(rng);
    pts.push_back(v);
  }
  // n = neighbors + 1: complete graph, geodesics are the direct distances.
  const Eigen::MatrixXd d = pairwise_distances(pts, Metric::Euclidean);
  EmbeddingResult r = isomap_embed(pts, 5, 3, Metric::Euclidean);
  CHECK((r.geodesic - d).cwiseAbs().maxCoeff() < 1e-9);
  CHECK_THROWS_AS(isomap_embed(pts, 6, 3, Metric::Euclidean), std::invalid_argument);

  // Duplicates stay at distance zero.
  pts.push_back(pts[0]);
  r = isomap_embed(pts, 3, 3, Metric::Euclidean);
  CHECK(r.geodesic(0, 6) == 0.0);
  CHECK((r.coords.row(0) - r.coords.row(6)).norm() < 1e-6);

  // Two far clusters with few neighbours: the smaller one is dropped.
  std::vector<Eigen::VectorXf> two;
  for (int i = 0; i < 10; ++i) two.push_back(Eigen::VectorXf::Constant(3, 0.01f * i));
  for (int i = 0; i < 4; ++i) two.push_back(Eigen::VectorXf::Constant(3, 100.0f + 0.01f * i));
  r = isomap_embed(two, 2, 2, Metric::Euclidean);
  CHECK(r.dropped == 4);
  CHECK(r.kept.size() == 10);
  CHECK(r.coords.rows() == 10);
}

TEST_CASE("accuracy of a layout oracle") {
  const EvalSampler sampler;
  // Reads the true layout, limited to the bank's states.
  class Reader final : public Predictor {
   public:
    std::vector<Prediction> predict(const MemoryBank& bank, std::span<const MaskedQuery> qs,
                                    bool) const override {
      return BankOracle(*env_).predict(bank, qs);
    }
    int state_vocab() const override { return 19; }
    bool has_idk() const override { return true; }
    const Environment* env_ = nullptr;
  };
  Reader reader;
  // Drive the reader with each trial's own environment.
  AccuracyReport report;
  for (int i = 0; i < 300; ++i) {
    const Episode ep = sample_episode(sampler, i);
    reader.env_ = &ep.env;
    Rng rng = trial_rng(sampler, i, "query");
    const Query q = sample_query(ep.env, ep.bank, query_candidates(ep.env, ep.bank), sampler.mix, rng);
    // An observable cell walled off from every other one has no memories.
    const auto known = ep.bank.unique_states();
    if (q.kind != QueryKind::Unsolvable &&
        std::find(known.begin(), known.end(), q.transition.source) == known.end()) {
      continue;
    }
    const Prediction p = reader.predict_one(ep.bank, {q.transition, Mask::End});
    Tally& cell = report.at(q.kind, Mask::End);
    ++cell.total;
    cell.correct += q.kind == QueryKind::Unsolvable ? p.idk : p.top == q.transition.end;
  }
  CHECK(report.kind(QueryKind::Seen).rate() == 1.0);
  CHECK(report.kind(QueryKind::Unseen).rate() == 1.0);
  CHECK(report.kind(QueryKind::Unsolvable).rate() == 1.0);
  CHECK(report.kind(QueryKind::Unseen).total > 150);
}

TEST_CASE("eval_accuracy bookkeeping") {
  const EvalSampler sampler;
  const Uniform uniform;
  const AccuracyReport r = eval_accuracy(uniform, sampler, 600);
  int total = 0;
  for (Mask m : {Mask::Source, Mask::Action, Mask::End}) total += r.task(m).total;
  CHECK(total == 600);
  // A uniform output ties everywhere; argmax falls on class 0, never IDK.
  CHECK(r.kind(QueryKind::Unsolvable).correct == 0);
  const Tally action = r.task(Mask::Action);
  CHECK(action.rate() < 0.35);
  const AccuracyReport e = eval_accuracy(uniform, sampler, 100, Mask::End);
  CHECK(e.task(Mask::End).total == 100);
  const AccuracyReport seen = eval_accuracy(uniform, sampler, 100, Mask::End, QueryMix{0, 1, 0});
  CHECK(seen.kind(QueryKind::Seen).total == 100);
  CHECK_THROWS_AS(eval_accuracy(uniform, sampler, 0), std::invalid_argument);
}

TEST_CASE("integration trends on synthetic predictors") {
  const EvalSampler sampler;
  const EntropyTrend flat = entropy_vs_integration(Uniform(20), sampler, 200);
  CHECK(flat.correlation.degenerate);
  const EntropyTrend mixed = entropy_vs_integration(Uniform(), sampler, 400);
  CHECK(std::abs(mixed.correlation.rho) < 0.15);
  CHECK(flat.entropy.size() == flat.path_length.size());

  // Entropy grows with the path by construction.
  class PerEpisode final : public Predictor {
   public:
    std::vector<Prediction> predict(const MemoryBank& bank, std::span<const MaskedQuery> qs,
                                    bool) const override {
      return PathAware(*env).predict(bank, qs);
    }
    int state_vocab() const override { return 19; }
    bool has_idk() const override { return true; }
    const Environment* env = nullptr;
  };
  PerEpisode model;
  std::vector<double> len, ent;
  for (int i = 0; i < 300; ++i) {
    const Episode ep = sample_episode(sampler, i);
    model.env = &ep.env;
    Rng rng = trial_rng(sampler, i, "query");
    QueryMix mix{0.8, 0.2, 0.0};
    const Query q = sample_query(ep.env, ep.bank, query_candidates(ep.env, ep.bank), mix, rng);
    const auto l = integration_path_length(ep.bank, q);
    if (!l) continue;
    len.push_back(*l);
    ent.push_back(model.predict_one(ep.bank, {q.transition, q.mask}).entropy);
  }
  const Correlation c = spearman(len, ent);
  CHECK(c.rho > 0.8);
  CHECK(c.p_value < 0.01);
}

TEST_CASE("shortcut memories move a path-aware predictor") {
  // Single fixed environment so the predictor can hold a reference.
  EvalSampler sampler;
  sampler.env = EnvConfig::random_wall(3);
  sampler.env.vocab_size = 37;
  const Episode ep = sample_episode(sampler, 0);
  const PathAware model(ep.env);
  // KL is zero whenever the path is unchanged.
  const QueryCandidates cand = query_candidates(ep.env, ep.bank);
  int checked = 0;
  for (int e : cand.unseen) {
    const Transition t = directed_transition(ep.env, e);
    const auto base = integration_path_length(ep.bank, t.source, t.end);
    MemoryBank dup = ep.bank;
    dup.transitions.push_back(ep.bank.transitions.front());
    const auto p0 = model.predict_one(ep.bank, {t, Mask::End});
    const auto p1 = model.predict_one(dup, {t, Mask::End});
    CHECK(kl_divergence(p0.probs, p1.probs) == doctest::Approx(0.0));
    if (base && *base >= 3) ++checked;
  }
  CHECK(checked > 0);
}

TEST_CASE("kl_shortcut and density_sweep run end to end") {
  EvalSampler sampler;
  sampler.env = EnvConfig::random_wall(3);
  const Uniform uniform;
  const KlShortcut k = kl_shortcut(uniform, sampler, 60);
  CHECK(k.informative.size() == k.non_informative.size());
  CHECK(k.informative.size() == 60);
  for (double v : k.informative) CHECK(v == doctest::Approx(0.0));

  const DensitySweep d = density_sweep(uniform, EvalSampler{}, {0.0, 0.5, 1.0}, 50);
  REQUIRE(d.points.size() == 3);
  CHECK(d.points[0].mean_bank_size < d.points[1].mean_bank_size);
  CHECK(d.points[1].mean_bank_size < d.points[2].mean_bank_size);
  CHECK_THROWS_AS(density_sweep(uniform, EvalSampler{}, {1.5}, 5), std::invalid_argument);
}

TEST_CASE("latent correlation with the true distance table") {
  const EvalSampler sampler;
  const LatentCorrelation c = latent_distance_correlation(
      sampler, 10, 20, [](const Environment& env, const MemoryBank& bank) {
        return ground_truth_table(env, bank);
      });
  CHECK(c.latent.size() + c.excluded == 200);
  CHECK(c.fit.r2 == doctest::Approx(1.0));
  CHECK(c.fit.slope == doctest::Approx(1.0));
}

TEST_CASE("distance probe") {
  // Linearly separable synthetic data.
  Rng rng(2);
  std::normal_distribution<double> nd;
  auto make = [&](int n) {
    ProbeData d;
    d.x.resize(n, 6);
    d.y.resize(n);
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < 6; ++k) d.x(i, k) = nd(rng);
      d.y[i] = d.x(i, 0) - 0.5 * d.x(i, 3) > 0 ? 1.0 : 0.0;
    }
    return d;
  };
  const ProbeData tr = make(1000), te = make(400);
  ProbeConfig cfg;
  cfg.runs = 3;
  const ProbeResult fit = train_probe(tr, te, cfg);
  CHECK(fit.accuracies.size() == 3);
  CHECK(fit.mean > 0.95);
  cfg.shuffle_labels = true;
  cfg.runs = 5;
  const ProbeResult shuffled = train_probe(tr, te, cfg);
  CHECK(std::abs(shuffled.mean - 0.5) < 0.1);

  // Triplets from true coordinates: labels agree with the hex-centre geometry.
  const EvalSampler sampler;
  const ProbeData coords = probe_triplets(sampler, 0, 200, coordinate_features());
  REQUIRE(coords.x.rows() == 200);
  REQUIRE(coords.x.cols() == 6);
  for (int i = 0; i < 200; ++i) {
    const double ab = std::hypot(coords.x(i, 0) - coords.x(i, 2), coords.x(i, 1) - coords.x(i, 3));
    const double ac = std::hypot(coords.x(i, 0) - coords.x(i, 4), coords.x(i, 1) - coords.x(i, 5));
    CHECK((ab > ac) == (coords.y[i] > 0.5));
  }
}

TEST_CASE("activation records") {
  ModelConfig mc = ModelConfig::desk_random_wall(2);
  mc.embed_dim = 12;
  mc.heads = 2;
  mc.ff_dim = 16;
  const Network<float> net(mc, 3);
  const ModelPredictor model(net);
  const EvalSampler sampler;
  CHECK(default_activation_layer(2, Mask::Action) == 1);
  CHECK(default_activation_layer(2, Mask::End) == 2);
  const auto recs = collect_activations(model, sampler, 3, Mask::Source, 2);
  std::size_t expected = 0;
  for (int i = 0; i < 3; ++i) expected += sample_episode(sampler, i).bank.size();
  REQUIRE(recs.size() == expected);
  const Episode ep = sample_episode(sampler, 0);
  const Transition& t = ep.bank.transitions.front();
  CHECK(recs.front().anchor == ep.env.graph().coord(ep.env.loc_of_state(t.end)));
  CHECK(recs.front().vector.size() == 12);
  CHECK(recs.front().layer == 2);
  CHECK_THROWS_AS(collect_activations(model, sampler, 1, Mask::End, 3), std::invalid_argument);
  const ProbeData d = probe_triplets(sampler, 0, 5, activation_features(model, 1));
  CHECK(d.x.cols() == 36);
}
