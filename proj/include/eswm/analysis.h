#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <string_view>
#include <vector>

#include "eswm/agents.h"
#include "eswm/episodic.h"
#include "eswm/predictor.h"
#include "eswm/rng.h"

namespace eswm {

// ---------------------------------------------------------------------------
// Statistics

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
};

/// Wilson score interval for a binomial proportion (95% by default).
Interval wilson_interval(int successes, int n, double z = 1.959963984540054);

/// P(X >= k) for X ~ Binomial(n, p).
double binomial_upper_tail(int k, int n, double p);

struct Correlation {
  double rho = 0.0;
  double p_value = 1.0;  // two-sided
  int n = 0;
  bool degenerate = false;  // a constant input; rho is undefined
};

/// Spearman rank correlation (average ranks for ties); the p-value uses the
/// t approximation with n - 2 degrees of freedom.
Correlation spearman(const std::vector<double>& x, const std::vector<double>& y);
double pearson(const std::vector<double>& x, const std::vector<double>& y);

struct TTest {
  double t = 0.0;
  double df = 0.0;
  double p_value = 1.0;  // two-sided
  double mean_a = 0.0;
  double mean_b = 0.0;
};

/// Independent two-sample t-test without the equal-variance assumption
/// (Welch).
TTest two_sample_t_test(const std::vector<double>& a, const std::vector<double>& b);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  int n = 0;
};

/// Ordinary least squares of y on x.
LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y);

/// KL(p || q) in nats; q is floored at 1e-12.
double kl_divergence(const std::vector<double>& p, const std::vector<double>& q);

// ---------------------------------------------------------------------------
// Trial sampling

/// Fresh (environment, bank, query) draws, each a pure function of
/// (seed, trial index).
struct EvalSampler {
  EnvConfig env = EnvConfig::random_wall(2);
  QueryMix mix = QueryMix::random_wall();
  std::uint64_t seed = 1;
};

struct Episode {
  Environment env;
  MemoryBank bank;
};

Episode sample_episode(const EvalSampler& sampler, int trial);
Rng trial_rng(const EvalSampler& sampler, int trial, std::string_view stream);

// ---------------------------------------------------------------------------
// Accuracy

struct Tally {
  int correct = 0;
  int total = 0;
  double rate() const { return total ? static_cast<double>(correct) / total : 0.0; }
  Interval wilson() const { return wilson_interval(correct, total); }
  Tally& operator+=(const Tally& o) {
    correct += o.correct;
    total += o.total;
    return *this;
  }
};

/// Counts per (query kind, masked component). A solvable query is correct
/// when the argmax matches; an unsolvable one when the answer is IDK.
struct AccuracyReport {
  Tally cells[3][3];
  Tally& at(QueryKind k, Mask m) { return cells[static_cast<int>(k)][static_cast<int>(m) - 1]; }
  const Tally& at(QueryKind k, Mask m) const {
    return cells[static_cast<int>(k)][static_cast<int>(m) - 1];
  }
  Tally task(Mask m) const;
  Tally kind(QueryKind k) const;
};

/// `mask` forces every query's masked component; otherwise it is uniform.
/// `mix` overrides the sampler's query mix.
AccuracyReport eval_accuracy(const Predictor& model, const EvalSampler& sampler, int n,
                             std::optional<Mask> mask = std::nullopt,
                             std::optional<QueryMix> mix = std::nullopt);

// ---------------------------------------------------------------------------
// Memory integration

struct EntropyTrend {
  std::vector<double> path_length;
  std::vector<double> entropy;
  Correlation correlation;
};

/// Entropy of the masked head against the integration path length, over
/// solvable queries.
EntropyTrend entropy_vs_integration(const Predictor& model, const EvalSampler& sampler, int n);

struct KlShortcut {
  std::vector<double> informative;
  std::vector<double> non_informative;
  TTest test;
  int skipped = 0;
};

/// n completed trials. Per trial, an unseen query with integration path >= min_path; KL(before ||
/// after) of the masked-head distribution when a memory that shortens the
/// path is added, and when one that leaves it unchanged is added.
KlShortcut kl_shortcut(const Predictor& model, const EvalSampler& sampler, int n,
                       int min_path = 3);

struct DensityPoint {
  double fraction = 0.0;  // share of the unseen plausible edges added
  double mean_bank_size = 0.0;
  Tally accuracy;
};

struct DensitySweep {
  std::vector<DensityPoint> points;
  Correlation correlation;  // accuracy against fraction
};

/// Adds a fraction of the bank's unseen plausible edges and scores the
/// originally unseen queries. Fraction 0 is the minimal bank, 1 every edge.
DensitySweep density_sweep(const Predictor& model, const EvalSampler& sampler,
                           const std::vector<double>& fractions, int n);

// ---------------------------------------------------------------------------
// Latent geometry

struct ActivationRecord {
  Eigen::VectorXf vector;
  int layer = 1;
  HexCoord anchor;
  Mask task = Mask::End;
};

/// Layer 1 for the action task, the last layer for state tasks.
int default_activation_layer(int layers, Mask task);

/// One record per bank memory, queried with `task` masked, over `banks`
/// sampled episodes. The anchor is the source location for action and end
/// tasks and the end location for the source task.
std::vector<ActivationRecord> collect_activations(const Predictor& model, const EvalSampler& sampler,
                                                  int banks, Mask task, int layer);

enum class Metric { Cosine, Euclidean };

Eigen::MatrixXd pairwise_distances(const std::vector<Eigen::VectorXf>& points, Metric metric);

/// Classical MDS: top eigenvectors of the double-centred squared distances,
/// scaled by the root eigenvalues.
Eigen::MatrixXd classical_mds(const Eigen::MatrixXd& distances, int dims,
                              Eigen::VectorXd* eigenvalues = nullptr);

struct EmbeddingResult {
  Eigen::MatrixXd coords;    // kept x dims
  std::vector<int> kept;     // input indices that were embedded
  int dropped = 0;           // points outside the largest component
  int neighbor_count = 0;
  Eigen::MatrixXd geodesic;  // kept x kept
  Eigen::VectorXd eigenvalues;
  double residual = 0.0;  // share of positive spectrum outside the kept dims
};

EmbeddingResult isomap_from_distances(const Eigen::MatrixXd& distances, int neighbors, int dims = 3);
EmbeddingResult isomap_embed(const std::vector<Eigen::VectorXf>& points, int neighbors,
                             int dims = 3, Metric metric = Metric::Cosine);

using LatentTableFn = std::function<HeuristicTable(const Environment&, const MemoryBank&)>;

struct LatentCorrelation {
  LinearFit fit;  // physical ~ latent
  std::vector<double> latent;
  std::vector<double> physical;
  int excluded = 0;  // pairs unreachable in the latent graph
};

/// True shortest-path length against the latent geodesic distance between
/// bank states, `pairs_per_env` pairs in each of `environments` episodes.
LatentCorrelation latent_distance_correlation(const EvalSampler& sampler, int environments,
                                              int pairs_per_env, const LatentTableFn& table);

// ---------------------------------------------------------------------------
// Distance probe

struct ProbeData {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;  // 1 when d(A, B) > d(A, C)
};

/// Feature vector for a state of an episode.
using StateFeatures =
    std::function<Eigen::VectorXd(const Environment&, const MemoryBank&, StateId)>;

/// Query-token activation of an action-masked query on a bank memory
/// starting at the state.
StateFeatures activation_features(const Predictor& model, int layer);
/// Hex-centre coordinates of the state's cell.
StateFeatures coordinate_features();

/// One triplet (A, B, C) of distinct bank source states per episode, trials
/// [first, first + count); features are concatenated. Ties in distance are
/// redrawn.
ProbeData probe_triplets(const EvalSampler& sampler, int first, int count,
                         const StateFeatures& features);

struct ProbeConfig {
  int train = 3000;
  int test = 1000;
  int runs = 10;
  int epochs = 500;
  double lr = 0.01;
  double l2 = 1e-4;
  bool shuffle_labels = false;
  std::uint64_t seed = 1;
};

struct ProbeResult {
  std::vector<double> accuracies;
  double mean = 0.0;
  double sd = 0.0;
};

/// Logistic regression on standardised features, one fit per run from a
/// fresh initialisation; accuracy on the test set. With shuffle_labels the
/// training labels are permuted.
ProbeResult train_probe(const ProbeData& train, const ProbeData& test, const ProbeConfig& cfg);

ProbeResult distance_probe(const Predictor& model, const EvalSampler& sampler, int layer,
                           const ProbeConfig& cfg);

}  // namespace eswm
