#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <set>
#include <stdexcept>

#include "eswm/analysis.h"

namespace eswm {

int default_activation_layer(int layers, Mask task) { return task == Mask::Action ? 1 : layers; }

std::vector<ActivationRecord> collect_activations(const Predictor& model, const EvalSampler& sampler,
                                                  int banks, Mask task, int layer) {
  std::vector<ActivationRecord> out;
  for (int i = 0; i < banks; ++i) {
    const Episode ep = sample_episode(sampler, i);
    std::vector<MaskedQuery> queries;
    for (const Transition& t : ep.bank.transitions) queries.push_back({t, task});
    const auto preds = model.predict(ep.bank, queries, true);
    for (std::size_t k = 0; k < preds.size(); ++k) {
      const auto& acts = preds[k].activations;
      if (layer < 1 || layer > static_cast<int>(acts.size())) {
        throw std::invalid_argument("activation layer out of range");
      }
      const StateId anchor_state =
          task == Mask::Source ? queries[k].transition.end : queries[k].transition.source;
      out.push_back({acts[layer - 1], layer, ep.env.graph().coord(ep.env.loc_of_state(anchor_state)),
                     task});
    }
  }
  return out;
}

Eigen::MatrixXd pairwise_distances(const std::vector<Eigen::VectorXf>& points, Metric metric) {
  if (metric == Metric::Cosine) return cosine_distances(points);
  const int n = static_cast<int>(points.size());
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      d(i, j) = d(j, i) = (points[i] - points[j]).cast<double>().norm();
  return d;
}

Eigen::MatrixXd classical_mds(const Eigen::MatrixXd& distances, int dims, Eigen::VectorXd* eigenvalues) {
  const Eigen::Index n = distances.rows();
  if (distances.cols() != n) throw std::invalid_argument("distance matrix must be square");
  if (dims < 1) throw std::invalid_argument("mds needs dims >= 1");
  const Eigen::MatrixXd sq = distances.array().square().matrix();
  const Eigen::MatrixXd centre =
      Eigen::MatrixXd::Identity(n, n) - Eigen::MatrixXd::Constant(n, n, 1.0 / n);
  const Eigen::MatrixXd b = -0.5 * centre * sq * centre;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(b);
  const Eigen::VectorXd vals = solver.eigenvalues().reverse();
  const Eigen::MatrixXd vecs = solver.eigenvectors().rowwise().reverse();
  if (eigenvalues) *eigenvalues = vals;
  Eigen::MatrixXd coords = Eigen::MatrixXd::Zero(n, dims);
  for (int k = 0; k < dims && k < n; ++k) coords.col(k) = vecs.col(k) * std::sqrt(std::max(0.0, vals[k]));
  return coords;
}

EmbeddingResult isomap_from_distances(const Eigen::MatrixXd& distances, int neighbors, int dims) {
  const int n = static_cast<int>(distances.rows());
  if (neighbors < 1) throw std::invalid_argument("isomap needs neighbors >= 1");
  if (n < neighbors + 1) throw std::invalid_argument("isomap needs at least neighbors + 1 points");

  // Symmetrised k-nearest-neighbour graph.
  std::vector<std::vector<std::pair<int, double>>> adj(n);
  for (int i = 0; i < n; ++i) {
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    order.erase(order.begin() + i);
    std::partial_sort(order.begin(), order.begin() + neighbors, order.end(),
                      [&](int a, int b) { return distances(i, a) < distances(i, b); });
    for (int k = 0; k < neighbors; ++k) {
      const int j = order[k];
      adj[i].push_back({j, distances(i, j)});
      adj[j].push_back({i, distances(i, j)});
    }
  }

  // Largest connected component.
  std::vector<int> comp(n, -1);
  int best = -1, best_size = 0, ncomp = 0;
  for (int s = 0; s < n; ++s) {
    if (comp[s] >= 0) continue;
    int size = 0;
    std::queue<int> q;
    q.push(s);
    comp[s] = ncomp;
    while (!q.empty()) {
      const int u = q.front();
      q.pop();
      ++size;
      for (auto [v, w] : adj[u])
        if (comp[v] < 0) {
          comp[v] = ncomp;
          q.push(v);
        }
    }
    if (size > best_size) {
      best_size = size;
      best = ncomp;
    }
    ++ncomp;
  }
  EmbeddingResult r;
  r.neighbor_count = neighbors;
  std::vector<int> local(n, -1);
  for (int i = 0; i < n; ++i)
    if (comp[i] == best) {
      local[i] = static_cast<int>(r.kept.size());
      r.kept.push_back(i);
    }
  r.dropped = n - static_cast<int>(r.kept.size());

  // Graph geodesics by Dijkstra from every kept point.
  const int m = static_cast<int>(r.kept.size());
  r.geodesic = Eigen::MatrixXd::Constant(m, m, kInf);
  using Item = std::pair<double, int>;
  for (int a = 0; a < m; ++a) {
    std::vector<double> dist(n, kInf);
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    dist[r.kept[a]] = 0.0;
    pq.push({0.0, r.kept[a]});
    while (!pq.empty()) {
      const auto [d, u] = pq.top();
      pq.pop();
      if (d > dist[u]) continue;
      for (auto [v, w] : adj[u])
        if (d + w < dist[v]) {
          dist[v] = d + w;
          pq.push({dist[v], v});
        }
    }
    for (int b = 0; b < m; ++b) r.geodesic(a, b) = dist[r.kept[b]];
  }
  // Symmetrise against floating-point path-order differences.
  r.geodesic = 0.5 * (r.geodesic + r.geodesic.transpose()).eval();

  r.coords = classical_mds(r.geodesic, dims, &r.eigenvalues);
  double pos = 0.0, top = 0.0;
  for (Eigen::Index k = 0; k < r.eigenvalues.size(); ++k) {
    if (r.eigenvalues[k] <= 0.0) continue;
    pos += r.eigenvalues[k];
    if (k < dims) top += r.eigenvalues[k];
  }
  r.residual = pos > 0.0 ? 1.0 - top / pos : 0.0;
  return r;
}

EmbeddingResult isomap_embed(const std::vector<Eigen::VectorXf>& points, int neighbors, int dims,
                             Metric metric) {
  return isomap_from_distances(pairwise_distances(points, metric), neighbors, dims);
}

LatentCorrelation latent_distance_correlation(const EvalSampler& sampler, int environments,
                                              int pairs_per_env, const LatentTableFn& table_fn) {
  LatentCorrelation out;
  for (int i = 0; i < environments; ++i) {
    const Episode ep = sample_episode(sampler, i);
    const HeuristicTable table = table_fn(ep.env, ep.bank);
    const std::vector<StateId> states = ep.bank.unique_states();
    if (states.size() < 2) continue;
    Rng rng = trial_rng(sampler, i, "latent-pairs");
    for (int k = 0; k < pairs_per_env; ++k) {
      const StateId a = states[uniform_int(rng, 0, static_cast<int>(states.size()) - 1)];
      StateId b = a;
      while (b == a) b = states[uniform_int(rng, 0, static_cast<int>(states.size()) - 1)];
      const int physical = bfs_distances(ep.env, ep.env.loc_of_state(a))[ep.env.loc_of_state(b)];
      const double latent = table.state_distance(a, b);
      if (physical < 0 || !std::isfinite(latent)) {
        ++out.excluded;
        continue;
      }
      out.latent.push_back(latent);
      out.physical.push_back(physical);
    }
  }
  if (out.latent.size() >= 2) out.fit = linear_fit(out.latent, out.physical);
  return out;
}

StateFeatures activation_features(const Predictor& model, int layer) {
  return [&model, layer](const Environment&, const MemoryBank& bank, StateId s) -> Eigen::VectorXd {
    for (const Transition& t : bank.transitions) {
      if (t.source != s) continue;
      const auto p = model.predict(bank, std::vector<MaskedQuery>{{t, Mask::Action}}, true).front();
      if (layer < 1 || layer > static_cast<int>(p.activations.size())) {
        throw std::invalid_argument("activation layer out of range");
      }
      return p.activations[layer - 1].cast<double>();
    }
    throw std::invalid_argument("state has no outgoing memory");
  };
}

StateFeatures coordinate_features() {
  return [](const Environment& env, const MemoryBank&, StateId s) -> Eigen::VectorXd {
    const auto [x, y] = cell_center(env.graph().coord(env.loc_of_state(s)));
    Eigen::VectorXd v(2);
    v << x, y;
    return v;
  };
}

ProbeData probe_triplets(const EvalSampler& sampler, int first, int count,
                         const StateFeatures& features) {
  std::vector<Eigen::VectorXd> rows;
  std::vector<double> labels;
  for (int i = first; static_cast<int>(rows.size()) < count; ++i) {
    if (i - first > 20 * count + 100) throw std::runtime_error("could not draw enough probe triplets");
    const Episode ep = sample_episode(sampler, i);
    std::set<StateId> source_set;
    for (const Transition& t : ep.bank.transitions) source_set.insert(t.source);
    const std::vector<StateId> sources(source_set.begin(), source_set.end());
    if (sources.size() < 3) continue;
    Rng rng = trial_rng(sampler, i, "triplet");
    auto centre = [&](StateId s) { return cell_center(ep.env.graph().coord(ep.env.loc_of_state(s))); };
    auto dist = [&](StateId a, StateId b) {
      const auto [ax, ay] = centre(a);
      const auto [bx, by] = centre(b);
      return std::hypot(ax - bx, ay - by);
    };
    for (int attempt = 0; attempt < 100; ++attempt) {
      std::vector<StateId> pick = sources;
      std::shuffle(pick.begin(), pick.end(), rng);
      const StateId a = pick[0], b = pick[1], c = pick[2];
      const double ab = dist(a, b), ac = dist(a, c);
      if (std::abs(ab - ac) < 1e-9) continue;
      const Eigen::VectorXd fa = features(ep.env, ep.bank, a), fb = features(ep.env, ep.bank, b),
                            fc = features(ep.env, ep.bank, c);
      Eigen::VectorXd row(fa.size() + fb.size() + fc.size());
      row << fa, fb, fc;
      rows.push_back(row);
      labels.push_back(ab > ac ? 1.0 : 0.0);
      break;
    }
  }
  ProbeData d;
  d.x.resize(count, rows.empty() ? 0 : rows.front().size());
  d.y.resize(count);
  for (int i = 0; i < count; ++i) {
    d.x.row(i) = rows[i].transpose();
    d.y[i] = labels[i];
  }
  return d;
}

ProbeResult train_probe(const ProbeData& train, const ProbeData& test, const ProbeConfig& cfg) {
  if (train.x.rows() == 0 || train.x.cols() != test.x.cols()) {
    throw std::invalid_argument("probe data is empty or mismatched");
  }
  const Eigen::Index dim = train.x.cols();
  const Eigen::RowVectorXd mu = train.x.colwise().mean();
  Eigen::RowVectorXd sd =
      ((train.x.rowwise() - mu).array().square().colwise().sum() / train.x.rows()).sqrt();
  for (Eigen::Index k = 0; k < dim; ++k)
    if (sd[k] < 1e-12) sd[k] = 1.0;
  const Eigen::MatrixXd xtr = (train.x.rowwise() - mu).array().rowwise() / sd.array();
  const Eigen::MatrixXd xte = (test.x.rowwise() - mu).array().rowwise() / sd.array();

  ProbeResult res;
  Rng rng(derive_seed(cfg.seed, "probe"));
  for (int run = 0; run < cfg.runs; ++run) {
    Eigen::VectorXd y = train.y;
    if (cfg.shuffle_labels) std::shuffle(y.data(), y.data() + y.size(), rng);
    std::normal_distribution<double> init(0.0, 0.01);
    Eigen::VectorXd w(dim);
    for (Eigen::Index k = 0; k < dim; ++k) w[k] = init(rng);
    double b = 0.0;
    // Full-batch Adam on the mean logistic loss.
    Eigen::VectorXd mw = Eigen::VectorXd::Zero(dim), vw = Eigen::VectorXd::Zero(dim);
    double mb = 0.0, vb = 0.0;
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
      const Eigen::VectorXd z = (xtr * w).array() + b;
      const Eigen::VectorXd p = z.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
      const Eigen::VectorXd err = p - y;
      const Eigen::VectorXd gw = xtr.transpose() * err / xtr.rows() + cfg.l2 * w;
      const double gb = err.mean();
      mw = b1 * mw + (1 - b1) * gw;
      vw = b2 * vw + (1 - b2) * gw.cwiseProduct(gw);
      mb = b1 * mb + (1 - b1) * gb;
      vb = b2 * vb + (1 - b2) * gb * gb;
      const double c1 = 1.0 - std::pow(b1, epoch), c2 = 1.0 - std::pow(b2, epoch);
      w -= (cfg.lr * (mw / c1).array() / ((vw / c2).array().sqrt() + eps)).matrix();
      b -= cfg.lr * (mb / c1) / (std::sqrt(vb / c2) + eps);
    }
    const Eigen::VectorXd z = (xte * w).array() + b;
    int correct = 0;
    for (Eigen::Index i = 0; i < z.size(); ++i) correct += (z[i] > 0.0) == (test.y[i] > 0.5);
    res.accuracies.push_back(static_cast<double>(correct) / z.size());
  }
  res.mean = std::accumulate(res.accuracies.begin(), res.accuracies.end(), 0.0) / res.accuracies.size();
  double ss = 0.0;
  for (double a : res.accuracies) ss += (a - res.mean) * (a - res.mean);
  res.sd = res.accuracies.size() > 1 ? std::sqrt(ss / (res.accuracies.size() - 1)) : 0.0;
  return res;
}

ProbeResult distance_probe(const Predictor& model, const EvalSampler& sampler, int layer,
                           const ProbeConfig& cfg) {
  const StateFeatures f = activation_features(model, layer);
  const ProbeData train = probe_triplets(sampler, 0, cfg.train, f);
  // Test episodes start well past the training ones.
  const ProbeData test = probe_triplets(sampler, 1000000, cfg.test, f);
  return train_probe(train, test, cfg);
}

}  // namespace eswm
