#pragma once

// Federated orchestration: broadcast -> parallel local training ->
// aggregation, for FedAvg and FedProx, with optional server-side (global) or
// client-side (local) Gaussian noise and a per-round privacy accountant.
// Local-only and centralized baselines share the same client training loop.

#include <algorithm>
#include <cstddef>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "dp2nilm/core/error.hpp"
#include "dp2nilm/core/rng.hpp"
#include "dp2nilm/data/dataset.hpp"
#include "dp2nilm/dp/accountant.hpp"
#include "dp2nilm/dp/mechanism.hpp"
#include "dp2nilm/fl/parallel.hpp"
#include "dp2nilm/metrics/scores.hpp"
#include "dp2nilm/nn/network.hpp"
#include "dp2nilm/nn/optim.hpp"

namespace dp2nilm::fl {

enum class Strategy { kFedAvg, kFedProx };
enum class Aggregation { kUniform, kWeighted };

inline const char* strategy_name(Strategy s) { return s == Strategy::kFedAvg ? "fedavg" : "fedprox"; }
inline const char* aggregation_name(Aggregation a) {
  return a == Aggregation::kUniform ? "uniform" : "weighted";
}

struct FLConfig {
  std::size_t global_rounds = 10;
  std::size_t local_epochs = 8;
  std::size_t batch_size = 32;
  double lr = 1e-4;
  double momentum = 0.5;
  double mu = 0.01;
  Aggregation aggregation = Aggregation::kUniform;
  Strategy strategy = Strategy::kFedAvg;
  std::size_t centralized_epochs = 80;

  friend bool operator==(const FLConfig&, const FLConfig&) = default;
};

inline void validate(const FLConfig& c) {
  if (c.global_rounds < 1) throw ConfigError("global_rounds must be at least 1");
  if (c.local_epochs < 1) throw ConfigError("local_epochs must be at least 1");
  if (c.batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (c.centralized_epochs < 1) throw ConfigError("centralized_epochs must be at least 1");
  if (!(c.lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(c.momentum >= 0.0 && c.momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(c.mu >= 0.0)) throw ConfigError("mu must be non-negative");
}

struct ClientState {
  std::size_t client_id = 0;
  nn::ModelParams params;
  nn::OptimState opt;
  const data::ClientDataset* dataset = nullptr;
  Seed seed = 0;        // batch order and dropout
  Seed noise_seed = 0;  // client-side privacy noise
};

struct RoundRecord {
  std::size_t round = 0;
  std::vector<std::pair<std::size_t, double>> client_train_loss;
  double val_loss = 0.0;
  double val_f1 = 0.0;
  double epsilon_spent = 0.0;
};

struct GlobalState {
  std::size_t round = 0;
  nn::ModelParams params;
  std::vector<RoundRecord> history;
};

/// Transforms one batch gradient; receives a per-batch seed.
using GradientHook = std::function<nn::Gradient(nn::Gradient, Seed)>;

struct LocalResult {
  std::size_t client_id = 0;
  nn::ModelParams params;
  double mean_loss = 0.0;
  std::size_t sample_count = 0;
  std::size_t steps = 0;
};

/// Copies the global parameters into every client and zeroes its momentum.
inline void broadcast(const GlobalState& global, std::vector<ClientState>& clients) {
  for (auto& c : clients) {
    if (!c.params.values.empty()) nn::require_same_manifest(c.params, global.params);
    c.params = global.params;
    c.opt.velocity.assign(global.params.values.size(), 0.0);
  }
}

namespace detail {

inline Seed shuffle_seed(Seed s, std::size_t round, std::size_t epoch) {
  return derive_seed(derive_seed(s, "shuffle"), round, epoch);
}
inline Seed dropout_seed(Seed s, std::size_t round, std::size_t epoch, std::size_t batch) {
  return derive_seed(derive_seed(s, "dropout"), round, epoch, batch);
}
inline Seed batch_noise_seed(Seed s, std::size_t round, std::size_t epoch, std::size_t batch) {
  return derive_seed(derive_seed(s, "batch-noise"), round, epoch, batch);
}

}  // namespace detail

/// g += mu * (w - anchor), coordinate-wise.
inline void add_proximal_term(nn::Gradient& g, const nn::ModelParams& w,
                              const nn::ModelParams& anchor, double mu) {
  nn::require_aligned(w, g);
  nn::require_same_manifest(w, anchor);
  for (std::size_t i = 0; i < g.values.size(); ++i) {
    g.values[i] += mu * (w.values[i] - anchor.values[i]);
  }
}

/// `epochs` passes of mini-batch SGD over the client's training split in a
/// seeded shuffled order (partial last batch kept). With an anchor and mu > 0
/// the proximal term mu * (w - anchor) is added to each batch gradient; the
/// hook, when present, transforms the batch gradient first.
inline LocalResult local_train(ClientState& client, const nn::NetworkSpec& spec,
                               std::size_t epochs, std::size_t batch_size, std::size_t round,
                               double mu = 0.0, const nn::ModelParams* anchor = nullptr,
                               const GradientHook* hook = nullptr) {
  if (!client.dataset) throw ConfigError("client has no dataset");
  const auto& train = client.dataset->split.train;
  if (train.empty()) {
    throw DataError("client " + std::to_string(client.client_id) + " has an empty training split");
  }
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  if (anchor) nn::require_same_manifest(client.params, *anchor);
  if (client.opt.velocity.size() != client.params.values.size()) {
    client.opt.velocity.assign(client.params.values.size(), 0.0);
  }
  LocalResult result;
  result.client_id = client.client_id;
  result.sample_count = train.size();
  double loss_sum = 0.0;
  std::vector<std::size_t> order(train.begin(), train.end());
  for (std::size_t e = 0; e < epochs; ++e) {
    Rng rng(detail::shuffle_seed(client.seed, round, e));
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t b = 0;
    for (std::size_t start = 0; start < order.size(); start += batch_size, ++b) {
      const std::span<const std::size_t> rows(order.data() + start,
                                              std::min(batch_size, order.size() - start));
      const nn::Tensor x = nn::gather_rows(client.dataset->aggregate, rows);
      const nn::Tensor y = nn::gather_rows(client.dataset->states, rows);
      auto lg = nn::loss_and_grad(client.params, spec, x, y,
                                  {true, detail::dropout_seed(client.seed, round, e, b)});
      nn::Gradient g = std::move(lg.grad);
      if (hook && *hook) {
        g = (*hook)(std::move(g), detail::batch_noise_seed(client.noise_seed, round, e, b));
      }
      if (anchor && mu != 0.0) add_proximal_term(g, client.params, *anchor, mu);
      nn::sgd_step_inplace(client.params, g, client.opt);
      loss_sum += lg.loss;
      ++result.steps;
    }
  }
  result.mean_loss = result.steps ? loss_sum / static_cast<double>(result.steps) : 0.0;
  result.params = client.params;
  return result;
}

inline LocalResult local_train_fedavg(ClientState& client, const nn::NetworkSpec& spec,
                                      std::size_t epochs, std::size_t batch_size,
                                      std::size_t round = 0, const GradientHook* hook = nullptr) {
  return local_train(client, spec, epochs, batch_size, round, 0.0, nullptr, hook);
}

inline LocalResult local_train_fedprox(ClientState& client, const nn::NetworkSpec& spec,
                                       std::size_t epochs, std::size_t batch_size, double mu,
                                       const nn::ModelParams& anchor, std::size_t round = 0,
                                       const GradientHook* hook = nullptr) {
  return local_train(client, spec, epochs, batch_size, round, mu, &anchor, hook);
}

namespace detail {

// Pairwise sum of rows[lo, hi) into a fresh vector.
inline std::vector<double> pairwise_sum(const std::vector<std::vector<double>>& rows,
                                        std::size_t lo, std::size_t hi) {
  if (hi - lo == 1) return rows[lo];
  const std::size_t mid = lo + (hi - lo) / 2;
  auto a = pairwise_sum(rows, lo, mid);
  const auto b = pairwise_sum(rows, mid, hi);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  return a;
}

}  // namespace detail

/// Averages client parameters into the next global state (round + 1).
/// Results are ordered by client id, and the mean is taken as
/// ref + sum_i(w_i - ref) / N with ref the lowest-id client, so the outcome is
/// independent of input order and N identical inputs reproduce that input
/// exactly. Weighted mode uses |L^n| / |L| and reduces to the uniform mean
/// when all sample counts are equal.
inline GlobalState aggregate(const GlobalState& global, std::vector<LocalResult> results,
                             Aggregation mode = Aggregation::kUniform) {
  if (results.empty()) throw ConfigError("aggregation needs at least one client result");
  std::stable_sort(results.begin(), results.end(),
                   [](const LocalResult& a, const LocalResult& b) { return a.client_id < b.client_id; });
  for (const auto& r : results) nn::require_same_manifest(r.params, global.params);
  const auto& ref = results.front().params.values;
  const std::size_t n = results.size();
  bool equal_counts = true;
  std::size_t total = 0;
  for (const auto& r : results) {
    equal_counts = equal_counts && r.sample_count == results.front().sample_count;
    total += r.sample_count;
  }
  const bool weighted = mode == Aggregation::kWeighted && !equal_counts;
  if (weighted && total == 0) throw ConfigError("weighted aggregation needs sample counts");
  std::vector<std::vector<double>> diffs(n, std::vector<double>(ref.size()));
  for (std::size_t c = 0; c < n; ++c) {
    const double w = weighted ? static_cast<double>(results[c].sample_count) /
                                    static_cast<double>(total)
                              : 1.0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
      const double d = results[c].params.values[i] - ref[i];
      diffs[c][i] = weighted ? w * d : d;
    }
  }
  const auto sum = detail::pairwise_sum(diffs, 0, n);
  GlobalState out;
  out.round = global.round + 1;
  out.history = global.history;
  out.params = global.params;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    out.params.values[i] = ref[i] + (weighted ? sum[i] : sum[i] / static_cast<double>(n));
  }
  return out;
}

struct ClientSetup {
  const data::ClientDataset* dataset = nullptr;
  Seed train_seed = 0;
  Seed noise_seed = 0;
};

struct RunOptions {
  bool sequential = false;
  std::size_t workers = 0;  // 0 = hardware concurrency
  bool evaluate_rounds = true;
  // Called after each aggregation with the raw client results and the new
  // global state (after any server noise).
  std::function<void(std::size_t, const std::vector<LocalResult>&, const GlobalState&)> observer;
};

struct FederatedRun {
  GlobalState global;
  dp::PrivacyLedger ledger;
  std::size_t rounds_completed = 0;
  bool halted = false;
};

/// Mean validation loss and mean F1 (over clients and appliances).
inline std::pair<double, double> validation_summary(const nn::ModelParams& params,
                                                    const nn::NetworkSpec& spec,
                                                    const std::vector<ClientSetup>& clients) {
  double loss = 0.0, f1 = 0.0;
  std::size_t counted = 0;
  for (const auto& c : clients) {
    const auto& rows = c.dataset->split.val;
    if (rows.empty()) continue;
    auto [x, y] = data::split_tensors(*c.dataset, rows);
    const auto per = nn::per_window_loss(params, spec, x, y);
    loss += std::accumulate(per.begin(), per.end(), 0.0) / static_cast<double>(per.size());
    const auto counts = metrics::evaluate_counts(params, spec, x, y);
    double client_f1 = 0.0;
    for (const auto& cc : counts) client_f1 += metrics::scores(cc).f1;
    f1 += client_f1 / static_cast<double>(counts.size());
    ++counted;
  }
  if (counted == 0) return {0.0, 0.0};
  return {loss / static_cast<double>(counted), f1 / static_cast<double>(counted)};
}

/// R rounds of broadcast -> local training -> aggregation. In global privacy
/// mode the server adds N(0, (C sigma)^2) to each aggregate; in local mode each
/// client clips and perturbs every batch gradient. With a positive sigma the
/// accountant is consulted before each round and the run stops, returning the
/// current global model, at the first round whose cumulative spend exceeds the
/// budget.
inline FederatedRun run_federated(const FLConfig& config, const nn::NetworkSpec& spec,
                                  const std::vector<ClientSetup>& setups,
                                  const nn::ModelParams& initial, const dp::PrivacyConfig& privacy,
                                  Seed server_seed, const RunOptions& options = {}) {
  validate(config);
  dp::validate(privacy);
  if (setups.empty()) throw ConfigError("federated run needs at least one client");
  const std::size_t n = setups.size();
  const double sigma =
      privacy.mode == dp::PrivacyMode::kNone ? 0.0 : dp::effective_sigma(privacy);
  const bool accounting = privacy.mode != dp::PrivacyMode::kNone && sigma > 0.0;

  FederatedRun run;
  run.global.params = initial;
  run.ledger.epsilon_budget = privacy.epsilon;
  run.ledger.max_rounds = privacy.max_rounds;
  run.ledger.heuristic = privacy.mode == dp::PrivacyMode::kLocal;

  std::vector<ClientState> clients(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!setups[i].dataset) throw ConfigError("client setup without dataset");
    clients[i].client_id = setups[i].dataset->client_id;
    clients[i].dataset = setups[i].dataset;
    clients[i].seed = setups[i].train_seed;
    clients[i].noise_seed = setups[i].noise_seed;
    clients[i].opt = nn::OptimState{{}, config.lr, config.momentum};
  }
  GradientHook local_hook;
  if (privacy.mode == dp::PrivacyMode::kLocal) {
    local_hook = [&privacy, n](nn::Gradient g, Seed s) {
      return dp::ldpfl_gradient_hook(std::move(g), privacy, n, s);
    };
  }
  const Seed server_noise = derive_seed(server_seed, "server-noise");
  const std::size_t workers = options.sequential ? 1 : options.workers;

  for (std::size_t r = 1; r <= config.global_rounds; ++r) {
    if (accounting) {
      dp::privacy_account(run.ledger, privacy.delta, sigma, r);
      run.ledger.entries.back().noise_std = privacy.mode == dp::PrivacyMode::kGlobal
                                                ? dp::global_noise_std(privacy)
                                                : dp::local_noise_std(privacy, n);
      if (run.ledger.exhausted()) {
        run.halted = true;
        break;
      }
    }
    broadcast(run.global, clients);
    const nn::ModelParams anchor = run.global.params;
    std::vector<LocalResult> results(n);
    parallel_for(n, workers, [&](std::size_t i) {
      const GradientHook* hook = local_hook ? &local_hook : nullptr;
      if (config.strategy == Strategy::kFedProx && config.mu != 0.0) {
        results[i] = local_train_fedprox(clients[i], spec, config.local_epochs, config.batch_size,
                                         config.mu, anchor, r, hook);
      } else {
        results[i] = local_train_fedavg(clients[i], spec, config.local_epochs, config.batch_size,
                                        r, hook);
      }
    });
    GlobalState next = aggregate(run.global, results, config.aggregation);
    if (privacy.mode == dp::PrivacyMode::kGlobal && sigma > 0.0) {
      next.params = dp::gdpfl_aggregate_hook(std::move(next.params), privacy,
                                             derive_seed(server_noise, r));
    }
    RoundRecord rec;
    rec.round = r;
    for (const auto& res : results) rec.client_train_loss.emplace_back(res.client_id, res.mean_loss);
    if (options.evaluate_rounds) {
      std::tie(rec.val_loss, rec.val_f1) = validation_summary(next.params, spec, setups);
    }
    rec.epsilon_spent = run.ledger.cumulative();
    next.history.push_back(std::move(rec));
    run.global = std::move(next);
    ++run.rounds_completed;
    if (options.observer) options.observer(r, results, run.global);
  }
  return run;
}

/// Training windows of all clients pooled into one dataset (client id 0).
inline data::ClientDataset pool_training_data(const std::vector<const data::ClientDataset*>& datasets) {
  if (datasets.empty()) throw DataError("cannot pool an empty set of clients");
  std::size_t total = 0;
  for (const auto* d : datasets) total += d->split.train.size();
  if (total == 0) throw DataError("pooled training set is empty");
  const auto& first = *datasets.front();
  nn::Shape xs = first.aggregate.shape, ys = first.states.shape;
  xs[0] = ys[0] = total;
  data::ClientDataset pooled;
  pooled.aggregate = nn::Tensor(xs);
  pooled.states = nn::Tensor(ys);
  const std::size_t xstride = first.aggregate.size() / first.aggregate.dim(0);
  const std::size_t ystride = first.states.size() / first.states.dim(0);
  std::size_t row = 0;
  for (const auto* d : datasets) {
    if (d->aggregate.size() / d->aggregate.dim(0) != xstride ||
        d->states.size() / d->states.dim(0) != ystride) {
      throw ShapeError("clients disagree on window or appliance layout");
    }
    for (std::size_t k : d->split.train) {
      auto x = d->aggregate.row(k);
      auto y = d->states.row(k);
      std::copy(x.begin(), x.end(), pooled.aggregate.data.begin() + row * xstride);
      std::copy(y.begin(), y.end(), pooled.states.data.begin() + row * ystride);
      pooled.split.train.push_back(row++);
    }
  }
  return pooled;
}

/// Single-model training on the union of client training splits for
/// config.centralized_epochs epochs.
inline nn::ModelParams run_centralized(const FLConfig& config, const nn::NetworkSpec& spec,
                                       const std::vector<const data::ClientDataset*>& datasets,
                                       const nn::ModelParams& initial, Seed seed) {
  validate(config);
  const data::ClientDataset pooled = pool_training_data(datasets);
  ClientState state;
  state.dataset = &pooled;
  state.params = initial;
  state.seed = seed;
  state.opt = nn::OptimState::for_params(initial, config.lr, config.momentum);
  return local_train_fedavg(state, spec, config.centralized_epochs, config.batch_size).params;
}

/// One household trained alone; no parameters are exchanged.
inline nn::ModelParams run_local(const FLConfig& config, const nn::NetworkSpec& spec,
                                 const data::ClientDataset& dataset,
                                 const nn::ModelParams& initial, Seed seed) {
  return run_centralized(config, spec, {&dataset}, initial, seed);
}

}  // namespace dp2nilm::fl
