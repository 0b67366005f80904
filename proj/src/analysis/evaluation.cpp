#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "eswm/analysis.h"

namespace eswm {

namespace {

int masked_truth(const Transition& t, Mask m) {
  switch (m) {
    case Mask::Source: return t.source;
    case Mask::Action: return t.action;
    default: return t.end;
  }
}

Mask random_mask(Rng& rng) { return static_cast<Mask>(1 + uniform_int(rng, 0, 2)); }

std::optional<int> path_with(const MemoryBank& bank, const Transition& t) {
  return integration_path_length(bank, t.source, t.end);
}

}  // namespace

Episode sample_episode(const EvalSampler& sampler, int trial) {
  Episode e;
  e.env = generate_environment(sampler.env, derive_seed(derive_seed(sampler.seed, "env"), trial));
  e.bank = sample_memory_bank(e.env, derive_seed(derive_seed(sampler.seed, "bank"), trial));
  return e;
}

Rng trial_rng(const EvalSampler& sampler, int trial, std::string_view stream) {
  return Rng(derive_seed(derive_seed(sampler.seed, stream), trial));
}

Tally AccuracyReport::task(Mask m) const {
  Tally t;
  for (int k = 0; k < 3; ++k) t += at(static_cast<QueryKind>(k), m);
  return t;
}

Tally AccuracyReport::kind(QueryKind k) const {
  Tally t;
  for (Mask m : {Mask::Source, Mask::Action, Mask::End}) t += at(k, m);
  return t;
}

AccuracyReport eval_accuracy(const Predictor& model, const EvalSampler& sampler, int n,
                             std::optional<Mask> mask, std::optional<QueryMix> mix) {
  if (n < 1) throw std::invalid_argument("eval_accuracy needs n >= 1");
  AccuracyReport report;
  for (int i = 0; i < n; ++i) {
    const Episode ep = sample_episode(sampler, i);
    Rng rng = trial_rng(sampler, i, "query");
    Query q = sample_query(ep.env, ep.bank, query_candidates(ep.env, ep.bank),
                           mix.value_or(sampler.mix), rng);
    if (mask) q.mask = *mask;
    const Prediction p = model.predict_one(ep.bank, {q.transition, q.mask});
    Tally& cell = report.at(q.kind, q.mask);
    ++cell.total;
    if (q.kind == QueryKind::Unsolvable) cell.correct += p.idk;
    else cell.correct += !p.idk && p.top == masked_truth(q.transition, q.mask);
  }
  return report;
}

EntropyTrend entropy_vs_integration(const Predictor& model, const EvalSampler& sampler, int n) {
  EntropyTrend out;
  QueryMix solvable = sampler.mix;
  solvable.unsolvable = 0.0;
  const double total = solvable.seen + solvable.unseen;
  if (total <= 0.0) throw std::invalid_argument("entropy_vs_integration needs solvable queries");
  solvable.seen /= total;
  solvable.unseen /= total;
  for (int i = 0; i < n; ++i) {
    const Episode ep = sample_episode(sampler, i);
    Rng rng = trial_rng(sampler, i, "query");
    const Query q = sample_query(ep.env, ep.bank, query_candidates(ep.env, ep.bank), solvable, rng);
    const auto len = integration_path_length(ep.bank, q);
    if (!len) continue;
    const Prediction p = model.predict_one(ep.bank, {q.transition, q.mask});
    out.path_length.push_back(*len);
    out.entropy.push_back(p.entropy);
  }
  out.correlation = spearman(out.path_length, out.entropy);
  return out;
}

KlShortcut kl_shortcut(const Predictor& model, const EvalSampler& sampler, int n, int min_path) {
  KlShortcut out;
  // Draw episodes until n trials complete; episodes without a usable query are skipped.
  for (int i = 0; static_cast<int>(out.informative.size()) < n; ++i) {
    if (i >= 20 * n + 100) throw std::runtime_error("could not draw enough shortcut trials");
    const Episode ep = sample_episode(sampler, i);
    Rng rng = trial_rng(sampler, i, "shortcut");
    const QueryCandidates cand = query_candidates(ep.env, ep.bank);
    std::vector<int> unseen = cand.unseen;
    std::shuffle(unseen.begin(), unseen.end(), rng);

    std::optional<Transition> query;
    int base = 0;
    for (int e : unseen) {
      const Transition t = directed_transition(ep.env, e);
      const auto len = path_with(ep.bank, t);
      if (len && *len >= min_path) {
        query = t;
        base = *len;
        break;
      }
    }
    if (!query) {
      ++out.skipped;
      continue;
    }
    std::vector<Transition> shortcuts, neutral;
    for (int e : unseen) {
      const Transition t = directed_transition(ep.env, e);
      if (t == *query) continue;
      MemoryBank trial = ep.bank;
      trial.transitions.push_back(t);
      const auto len = path_with(trial, *query);
      if (len && *len < base) shortcuts.push_back(t);
      else if (len && *len == base) neutral.push_back(t);
    }
    if (shortcuts.empty()) {
      ++out.skipped;
      continue;
    }
    if (neutral.empty()) {
      neutral.push_back(ep.bank.transitions[uniform_int(rng, 0, static_cast<int>(ep.bank.size()) - 1)]);
    }
    const Mask mask = random_mask(rng);
    const MaskedQuery mq{*query, mask};
    const Prediction before = model.predict_one(ep.bank, mq);
    auto after = [&](const std::vector<Transition>& pool) {
      MemoryBank bank = ep.bank;
      const Transition t = pool[uniform_int(rng, 0, static_cast<int>(pool.size()) - 1)];
      const int pos = uniform_int(rng, 0, static_cast<int>(bank.size()));
      bank.transitions.insert(bank.transitions.begin() + pos, t);
      return kl_divergence(before.probs, model.predict_one(bank, mq).probs);
    };
    out.informative.push_back(after(shortcuts));
    out.non_informative.push_back(after(neutral));
  }
  if (out.informative.size() >= 2) out.test = two_sample_t_test(out.informative, out.non_informative);
  return out;
}

DensitySweep density_sweep(const Predictor& model, const EvalSampler& sampler,
                           const std::vector<double>& fractions, int n) {
  for (double f : fractions)
    if (f < 0.0 || f > 1.0) throw std::invalid_argument("density fractions must lie in [0, 1]");
  DensitySweep out;
  for (double f : fractions) out.points.push_back({f, 0.0, {}});
  for (int i = 0; i < n; ++i) {
    const Episode ep = sample_episode(sampler, i);
    Rng rng = trial_rng(sampler, i, "density");
    const QueryCandidates cand = query_candidates(ep.env, ep.bank);
    if (cand.unseen.empty()) continue;
    std::vector<int> extra = cand.unseen;
    std::shuffle(extra.begin(), extra.end(), rng);
    const Transition query = directed_transition(ep.env, extra[uniform_int(rng, 0, static_cast<int>(extra.size()) - 1)]);
    const Mask mask = random_mask(rng);
    const std::uint64_t order_seed = rng();
    for (DensityPoint& point : out.points) {
      MemoryBank bank = ep.bank;
      const int k = static_cast<int>(std::lround(point.fraction * extra.size()));
      for (int j = 0; j < k; ++j) bank.transitions.push_back(directed_transition(ep.env, extra[j]));
      Rng order(order_seed);
      std::shuffle(bank.transitions.begin(), bank.transitions.end(), order);
      const Prediction p = model.predict_one(bank, {query, mask});
      point.mean_bank_size += bank.size();
      ++point.accuracy.total;
      point.accuracy.correct += !p.idk && p.top == masked_truth(query, mask);
    }
  }
  std::vector<double> xs, ys;
  for (DensityPoint& point : out.points) {
    if (point.accuracy.total) point.mean_bank_size /= point.accuracy.total;
    xs.push_back(point.fraction);
    ys.push_back(point.accuracy.rate());
  }
  out.correlation = spearman(xs, ys);
  return out;
}

}  // namespace eswm
