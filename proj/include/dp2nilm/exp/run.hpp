#pragma once

// Scenario orchestration: build client datasets, train per scenario, score on
// the test splits, attack, and collect everything in a hashed RunReport.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "dp2nilm/attack/membership.hpp"
#include "dp2nilm/core/hash.hpp"
#include "dp2nilm/data/csv.hpp"
#include "dp2nilm/exp/config.hpp"
#include "dp2nilm/metrics/scores.hpp"

namespace dp2nilm::exp {

struct RunSettings {
  bool sequential = false;
  std::size_t workers = 0;  // 0 = hardware concurrency
};

struct ClientAttack {
  std::size_t client_id = 0;
  attack::AttackResult result;
};

struct RunReport {
  Json config;
  std::string scenario;
  double epsilon = 0.0;  // 0 when the scenario is not private
  std::vector<std::string> appliances;
  std::vector<fl::RoundRecord> rounds;
  std::size_t rounds_completed = 0;
  bool halted = false;
  std::vector<std::size_t> client_ids;
  std::vector<std::vector<metrics::Scores>> client_scores;  // [client][appliance], test split
  std::vector<metrics::Scores> average;                     // per appliance
  std::string attack_target;
  std::vector<ClientAttack> attacks;
  attack::AttackResult attack_mean;
  dp::PrivacyLedger ledger;
  std::vector<std::vector<double>> final_params;  // one model, or one per client for local
  double wall_time_s = 0.0;
  std::string hash;
};

/// Hash over every numeric output; the config echo and wall time are excluded.
inline std::string report_hash(const RunReport& r) {
  ContentHasher h;
  h.add(static_cast<std::uint64_t>(r.rounds.size()));
  for (const auto& rec : r.rounds) {
    h.add(static_cast<std::uint64_t>(rec.round));
    for (const auto& [id, loss] : rec.client_train_loss) {
      h.add(static_cast<std::uint64_t>(id));
      h.add(loss);
    }
    h.add(rec.val_loss);
    h.add(rec.val_f1);
    h.add(rec.epsilon_spent);
  }
  h.add(static_cast<std::uint64_t>(r.rounds_completed));
  h.add(static_cast<std::uint64_t>(r.halted ? 1 : 0));
  for (const auto& client : r.client_scores) {
    for (const auto& s : client) {
      for (double v : {s.accuracy, s.precision, s.recall, s.f1}) h.add(v);
    }
  }
  for (const auto& a : r.attacks) {
    h.add(static_cast<std::uint64_t>(a.client_id));
    for (double v : {a.result.tpr, a.result.fpr, a.result.asr, a.result.avg_train_loss}) h.add(v);
  }
  for (const auto& e : r.ledger.entries) {
    h.add(e.delta_eps);
    h.add(e.cumulative_eps);
    h.add(e.noise_std);
    h.add(static_cast<std::uint64_t>(e.exhausted ? 1 : 0));
  }
  for (const auto& p : r.final_params) h.add(std::span<const double>(p));
  return h.hex();
}

namespace detail {

// Trims series to their common time span; starts must lie on a shared grid.
inline void align_series(std::vector<data::TimeSeries*> series) {
  std::int64_t start = std::numeric_limits<std::int64_t>::min();
  for (auto* s : series) start = std::max(start, s->start_epoch_s);
  std::size_t len = std::numeric_limits<std::size_t>::max();
  for (auto* s : series) {
    const double offset = static_cast<double>(start - s->start_epoch_s) / s->sample_period_s;
    if (std::abs(offset - std::round(offset)) > 1e-9) {
      throw DataError("csv series start times are not on a common sample grid");
    }
    const auto skip = static_cast<std::size_t>(std::llround(offset));
    if (skip >= s->values.size()) throw DataError("csv series do not overlap in time");
    s->values.erase(s->values.begin(), s->values.begin() + static_cast<std::ptrdiff_t>(skip));
    s->start_epoch_s = start;
    len = std::min(len, s->values.size());
  }
  for (auto* s : series) s->values.resize(len);
}

}  // namespace detail

inline std::vector<data::ClientDataset> build_datasets(const ExperimentConfig& cfg, Seed data_seed,
                                                       std::size_t workers) {
  if (cfg.data.source == "synthetic") {
    return build_synthetic_clients(cfg.data.cohort, cfg.data.appliances, cfg.data.prep, data_seed,
                                   workers);
  }
  std::vector<data::ClientDataset> out;
  const double period = cfg.data.cohort.sample_period_s;
  for (std::size_t i = 0; i < cfg.data.csv_clients.size(); ++i) {
    const auto& cc = cfg.data.csv_clients[i];
    auto agg = data::ingest_csv(cc.aggregate, period);
    std::vector<data::TimeSeries> traces;
    for (const auto& a : cfg.data.appliances) {
      traces.push_back(data::ingest_csv(cc.appliances.at(a.name), period, a.max_power_w));
    }
    std::vector<data::TimeSeries*> all{&agg};
    for (auto& t : traces) all.push_back(&t);
    detail::align_series(all);
    out.push_back(data::prepare_client(i, agg, traces, cfg.data.appliances, cfg.data.prep));
  }
  return out;
}

inline attack::Records split_records(const data::ClientDataset& ds,
                                     const std::vector<std::size_t>& rows) {
  auto [x, y] = data::split_tensors(ds, rows);
  return {std::move(x), std::move(y)};
}

inline std::vector<metrics::Scores> test_scores(const nn::ModelParams& params,
                                                const nn::NetworkSpec& spec,
                                                const data::ClientDataset& ds) {
  if (ds.split.test.empty()) throw DataError("client has an empty test split");
  auto [x, y] = data::split_tensors(ds, ds.split.test);
  std::vector<metrics::Scores> out;
  for (const auto& c : metrics::evaluate_counts(params, spec, x, y)) out.push_back(metrics::scores(c));
  return out;
}

/// Runs one scenario end to end. `datasets` may be supplied to reuse data
/// across runs; otherwise it is built from the config.
inline RunReport run_scenario(const ExperimentConfig& cfg, const RunSettings& settings = {},
                              const std::vector<data::ClientDataset>* datasets = nullptr) {
  validate(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t workers = settings.sequential ? 1 : settings.workers;
  const std::size_t n_clients =
      cfg.data.source == "synthetic" ? cfg.data.cohort.clients : cfg.data.csv_clients.size();
  const SeedStreams seeds = derive_seeds(cfg.master_seed, n_clients);

  std::vector<data::ClientDataset> owned;
  if (!datasets) {
    owned = build_datasets(cfg, seeds.data, workers);
    datasets = &owned;
  }
  const auto& ds = *datasets;
  if (ds.empty()) throw DataError("no client datasets");

  RunReport report;
  report.config = config_to_json(cfg);
  report.scenario = scenario_name(cfg.scenario);
  report.epsilon = cfg.privacy.mode == dp::PrivacyMode::kNone ? 0.0 : cfg.privacy.epsilon;
  for (const auto& a : cfg.data.appliances) report.appliances.push_back(a.name);
  report.attack_target = cfg.attack.target;

  const nn::ModelParams initial = nn::build_network(cfg.net, seeds.init);
  // Model used for scoring and attacking each client.
  std::vector<nn::ModelParams> client_models(ds.size());
  std::vector<nn::ModelParams> attack_models;

  if (cfg.scenario == Scenario::kLocal) {
    fl::parallel_for(ds.size(), workers, [&](std::size_t i) {
      client_models[i] = fl::run_local(cfg.fl, cfg.net, ds[i], initial, seeds.client_train[i]);
    });
    for (const auto& m : client_models) report.final_params.push_back(m.values);
  } else if (cfg.scenario == Scenario::kCentralized) {
    std::vector<const data::ClientDataset*> ptrs;
    for (const auto& d : ds) ptrs.push_back(&d);
    const auto model = fl::run_centralized(cfg.fl, cfg.net, ptrs, initial, seeds.server);
    std::fill(client_models.begin(), client_models.end(), model);
    report.final_params.push_back(model.values);
  } else {
    std::vector<fl::ClientSetup> setups;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      setups.push_back({&ds[i], seeds.client_train[i], seeds.client_noise[i]});
    }
    fl::RunOptions opt;
    opt.sequential = settings.sequential;
    opt.workers = settings.workers;
    std::vector<fl::LocalResult> last_uploads;
    opt.observer = [&](std::size_t, const std::vector<fl::LocalResult>& rs, const fl::GlobalState&) {
      last_uploads = rs;
    };
    const auto run = fl::run_federated(cfg.fl, cfg.net, setups, initial, cfg.privacy,
                                       seeds.server, opt);
    std::fill(client_models.begin(), client_models.end(), run.global.params);
    report.rounds = run.global.history;
    report.rounds_completed = run.rounds_completed;
    report.halted = run.halted;
    report.ledger = run.ledger;
    report.final_params.push_back(run.global.params.values);
    if (cfg.attack.target == "uploads" && !last_uploads.empty()) {
      attack_models.resize(ds.size());
      for (std::size_t i = 0; i < ds.size(); ++i) {
        for (const auto& u : last_uploads) {
          if (u.client_id == ds[i].client_id) attack_models[i] = u.params;
        }
      }
    }
  }
  if (attack_models.empty()) attack_models = client_models;

  report.client_scores.resize(ds.size());
  std::vector<ClientAttack> attacks(ds.size());
  fl::parallel_for(ds.size(), workers, [&](std::size_t i) {
    report.client_scores[i] = test_scores(client_models[i], cfg.net, ds[i]);
    if (cfg.attack.enabled) {
      attacks[i].client_id = ds[i].client_id;
      attacks[i].result = attack::membership_attack(
          attack_models[i], cfg.net, split_records(ds[i], ds[i].split.train),
          split_records(ds[i], ds[i].split.test), derive_seed(seeds.attack, ds[i].client_id));
    }
  });
  for (const auto& d : ds) report.client_ids.push_back(d.client_id);
  report.average = metrics::average_scores(report.client_scores);
  if (cfg.attack.enabled) {
    report.attacks = attacks;
    for (const auto& a : attacks) {
      report.attack_mean.tpr += a.result.tpr;
      report.attack_mean.fpr += a.result.fpr;
      report.attack_mean.member_count += a.result.member_count;
      report.attack_mean.nonmember_count += a.result.nonmember_count;
      report.attack_mean.avg_train_loss += a.result.avg_train_loss;
    }
    const double n = static_cast<double>(attacks.size());
    report.attack_mean.tpr /= n;
    report.attack_mean.fpr /= n;
    report.attack_mean.avg_train_loss /= n;
    report.attack_mean.asr = report.attack_mean.tpr - report.attack_mean.fpr;
  }
  report.hash = report_hash(report);
  report.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

namespace detail {

inline Json scores_json(const metrics::Scores& s) {
  return Json{{"accuracy", s.accuracy}, {"f1", s.f1}, {"precision", s.precision}, {"recall", s.recall}};
}

inline std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p);
  if (!out) throw IoError("cannot write " + p.string());
  out << text;
  if (!out) throw IoError("failed writing " + p.string());
}

}  // namespace detail

inline Json report_to_json(const RunReport& r) {
  Json rounds = Json::array();
  for (const auto& rec : r.rounds) {
    Json losses = Json::array();
    for (const auto& [id, loss] : rec.client_train_loss) {
      losses.push_back({{"client_id", id}, {"train_loss", loss}});
    }
    rounds.push_back({{"round", rec.round},
                      {"client_train_loss", losses},
                      {"val_loss", rec.val_loss},
                      {"val_f1", rec.val_f1},
                      {"epsilon_spent", rec.epsilon_spent}});
  }
  Json per_client = Json::array();
  for (std::size_t c = 0; c < r.client_scores.size(); ++c) {
    Json apps = Json::object();
    for (std::size_t a = 0; a < r.appliances.size(); ++a) {
      apps[r.appliances[a]] = detail::scores_json(r.client_scores[c][a]);
    }
    per_client.push_back({{"client_id", r.client_ids[c]}, {"appliances", apps}});
  }
  Json average = Json::object();
  for (std::size_t a = 0; a < r.appliances.size(); ++a) {
    average[r.appliances[a]] = detail::scores_json(r.average[a]);
  }
  Json attacks = Json::array();
  for (const auto& a : r.attacks) {
    attacks.push_back({{"client_id", a.client_id},
                       {"asr", a.result.asr},
                       {"tpr", a.result.tpr},
                       {"fpr", a.result.fpr},
                       {"threshold", a.result.avg_train_loss},
                       {"members", a.result.member_count},
                       {"nonmembers", a.result.nonmember_count}});
  }
  Json ledger = Json::array();
  for (const auto& e : r.ledger.entries) {
    ledger.push_back({{"round", e.round},
                      {"delta_eps", e.delta_eps},
                      {"cumulative_eps", e.cumulative_eps},
                      {"exhausted", e.exhausted},
                      {"noise_std", e.noise_std}});
  }
  return Json{{"scenario", r.scenario},
              {"epsilon", r.epsilon},
              {"hash", r.hash},
              {"wall_time_s", r.wall_time_s},
              {"rounds_completed", r.rounds_completed},
              {"halted", r.halted},
              {"appliances", r.appliances},
              {"rounds", rounds},
              {"scores", {{"average", average}, {"per_client", per_client}}},
              {"attack",
               {{"target", r.attack_target},
                {"asr", r.attack_mean.asr},
                {"tpr", r.attack_mean.tpr},
                {"fpr", r.attack_mean.fpr},
                {"per_client", attacks}}},
              {"ledger",
               {{"epsilon_budget", r.ledger.epsilon_budget},
                {"heuristic", r.ledger.heuristic},
                {"entries", ledger}}},
              {"config", r.config}};
}

inline std::string rounds_csv(const RunReport& r) {
  using detail::num;
  std::ostringstream os;
  os << "round,client_id,train_loss,val_loss,val_f1,epsilon_spent\n";
  for (const auto& rec : r.rounds) {
    double mean = 0.0;
    for (const auto& [id, loss] : rec.client_train_loss) {
      os << rec.round << ',' << id << ',' << num(loss) << ",,," << num(rec.epsilon_spent) << '\n';
      mean += loss;
    }
    if (!rec.client_train_loss.empty()) mean /= static_cast<double>(rec.client_train_loss.size());
    os << rec.round << ",global," << num(mean) << ',' << num(rec.val_loss) << ','
       << num(rec.val_f1) << ',' << num(rec.epsilon_spent) << '\n';
  }
  return os.str();
}

/// One row per (model, appliance): the cross-client average first, then each client.
inline std::string scores_csv(const RunReport& r) {
  using detail::num;
  std::ostringstream os;
  os << "model,appliance,accuracy,f1,precision,recall\n";
  auto row = [&](const std::string& model, const std::vector<metrics::Scores>& s) {
    for (std::size_t a = 0; a < r.appliances.size(); ++a) {
      os << model << ',' << r.appliances[a] << ',' << num(s[a].accuracy) << ',' << num(s[a].f1)
         << ',' << num(s[a].precision) << ',' << num(s[a].recall) << '\n';
    }
  };
  row("average", r.average);
  for (std::size_t c = 0; c < r.client_scores.size(); ++c) {
    row("client-" + std::to_string(r.client_ids[c]), r.client_scores[c]);
  }
  return os.str();
}

inline std::string attack_csv(const RunReport& r) {
  using detail::num;
  std::ostringstream os;
  os << "scenario,epsilon,client_id,asr,tpr,fpr,threshold\n";
  for (const auto& a : r.attacks) {
    os << r.scenario << ',' << num(r.epsilon) << ',' << a.client_id << ',' << num(a.result.asr)
       << ',' << num(a.result.tpr) << ',' << num(a.result.fpr) << ','
       << num(a.result.avg_train_loss) << '\n';
  }
  if (!r.attacks.empty()) {
    os << r.scenario << ',' << num(r.epsilon) << ",mean," << num(r.attack_mean.asr) << ','
       << num(r.attack_mean.tpr) << ',' << num(r.attack_mean.fpr) << ','
       << num(r.attack_mean.avg_train_loss) << '\n';
  }
  return os.str();
}

inline std::string ledger_csv(const RunReport& r) {
  using detail::num;
  std::ostringstream os;
  os << "round,delta_eps,cumulative_eps,exhausted,noise_std,heuristic\n";
  for (const auto& e : r.ledger.entries) {
    os << e.round << ',' << num(e.delta_eps) << ',' << num(e.cumulative_eps) << ','
       << (e.exhausted ? "true" : "false") << ',' << num(e.noise_std) << ','
       << (r.ledger.heuristic ? "true" : "false") << '\n';
  }
  return os.str();
}

enum class OutputFormat { kAll, kCsv, kJson };

inline OutputFormat parse_format(const std::string& s) {
  if (s == "all") return OutputFormat::kAll;
  if (s == "csv") return OutputFormat::kCsv;
  if (s == "json") return OutputFormat::kJson;
  throw ConfigError("format must be csv, json or all");
}

inline void write_report(const RunReport& r, const std::filesystem::path& dir,
                         OutputFormat format = OutputFormat::kAll) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  if (format != OutputFormat::kCsv) {
    detail::write_text(dir / "report.json", report_to_json(r).dump(2) + "\n");
  }
  if (format != OutputFormat::kJson) {
    detail::write_text(dir / "rounds.csv", rounds_csv(r));
    detail::write_text(dir / "scores.csv", scores_csv(r));
    detail::write_text(dir / "attack.csv", attack_csv(r));
    detail::write_text(dir / "ledger.csv", ledger_csv(r));
  }
}

/// Sets one numeric field named by `axis` and revalidates.
inline ExperimentConfig apply_axis(ExperimentConfig cfg, const std::string& axis, double value) {
  if (axis == "epsilon") cfg.privacy.epsilon = value;
  else if (axis == "sigma") cfg.privacy.sigma = value;
  else if (axis == "clip_norm") cfg.privacy.clip_norm = value;
  else if (axis == "mu") cfg.fl.mu = value;
  else if (axis == "lr") cfg.fl.lr = value;
  else throw ConfigError("unsupported sweep axis '" + axis + "' (epsilon, sigma, clip_norm, mu, lr)");
  validate(cfg);
  return cfg;
}

/// Switches scenario and the settings tied to it (strategy, privacy mode).
inline ExperimentConfig with_scenario(ExperimentConfig cfg, Scenario s) {
  cfg.scenario = s;
  cfg.fl.strategy = s == Scenario::kFedProx ? fl::Strategy::kFedProx : fl::Strategy::kFedAvg;
  cfg.privacy.mode = required_mode(s);
  if (cfg.privacy.mode != dp::PrivacyMode::kNone && !(cfg.privacy.epsilon > 0.0)) {
    throw ConfigError(std::string("scenario '") + scenario_name(s) + "' needs privacy.epsilon");
  }
  if (!is_federated(s)) cfg.attack.target = "global";
  return cfg;
}

struct SweepRow {
  std::string scenario;
  double value = 0.0;
  std::size_t rounds_completed = 0;
  std::vector<metrics::Scores> average;
  attack::AttackResult attack;
  std::string hash;
};

struct SweepResult {
  std::string axis;
  std::vector<std::string> appliances;
  std::vector<SweepRow> rows;
  std::vector<RunReport> reports;
};

/// One run per (scenario, value); the client data is built once and shared.
inline SweepResult sweep(const ExperimentConfig& base, const std::string& axis,
                         const std::vector<double>& values, std::vector<Scenario> scenarios = {},
                         const RunSettings& settings = {}) {
  if (values.empty()) throw ConfigError("sweep needs at least one axis value");
  if (scenarios.empty()) scenarios.push_back(base.scenario);
  std::vector<ExperimentConfig> configs;
  for (auto s : scenarios) {
    for (double v : values) configs.push_back(apply_axis(with_scenario(base, s), axis, v));
  }
  const std::size_t n_clients =
      base.data.source == "synthetic" ? base.data.cohort.clients : base.data.csv_clients.size();
  const auto datasets = build_datasets(base, derive_seeds(base.master_seed, n_clients).data,
                                       settings.sequential ? 1 : settings.workers);
  SweepResult out;
  out.axis = axis;
  for (const auto& a : base.data.appliances) out.appliances.push_back(a.name);
  for (std::size_t i = 0; i < configs.size(); ++i) {
    auto report = run_scenario(configs[i], settings, &datasets);
    SweepRow row;
    row.scenario = report.scenario;
    row.value = values[i % values.size()];
    row.rounds_completed = report.rounds_completed;
    row.average = report.average;
    row.attack = report.attack_mean;
    row.hash = report.hash;
    out.rows.push_back(std::move(row));
    out.reports.push_back(std::move(report));
  }
  return out;
}

inline std::string sweep_csv(const SweepResult& s) {
  using detail::num;
  std::ostringstream os;
  os << "scenario," << s.axis;
  for (const auto& a : s.appliances) {
    os << ',' << a << "_accuracy," << a << "_f1," << a << "_precision," << a << "_recall";
  }
  os << ",asr,tpr,fpr,rounds_completed,hash\n";
  for (const auto& r : s.rows) {
    os << r.scenario << ',' << num(r.value);
    for (const auto& sc : r.average) {
      os << ',' << num(sc.accuracy) << ',' << num(sc.f1) << ',' << num(sc.precision) << ','
         << num(sc.recall);
    }
    os << ',' << num(r.attack.asr) << ',' << num(r.attack.tpr) << ',' << num(r.attack.fpr) << ','
       << r.rounds_completed << ',' << r.hash << '\n';
  }
  return os.str();
}

inline std::string asr_series_csv(const SweepResult& s) {
  using detail::num;
  std::ostringstream os;
  os << "scenario," << s.axis << ",asr\n";
  for (const auto& r : s.rows) os << r.scenario << ',' << num(r.value) << ',' << num(r.attack.asr) << '\n';
  return os.str();
}

inline void write_sweep(const SweepResult& s, const std::filesystem::path& dir,
                        OutputFormat format = OutputFormat::kAll) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  for (std::size_t i = 0; i < s.reports.size(); ++i) {
    write_report(s.reports[i],
                 dir / (s.rows[i].scenario + "_" + s.axis + "_" + detail::num(s.rows[i].value)),
                 format);
  }
  detail::write_text(dir / "sweep.csv", sweep_csv(s));
  detail::write_text(dir / ("asr_vs_" + s.axis + ".csv"), asr_series_csv(s));
  if (format != OutputFormat::kCsv) {
    Json rows = Json::array();
    for (const auto& r : s.rows) {
      Json avg = Json::object();
      for (std::size_t a = 0; a < s.appliances.size(); ++a) {
        avg[s.appliances[a]] = detail::scores_json(r.average[a]);
      }
      rows.push_back({{"scenario", r.scenario},
                      {s.axis, r.value},
                      {"scores", avg},
                      {"asr", r.attack.asr},
                      {"rounds_completed", r.rounds_completed},
                      {"hash", r.hash}});
    }
    detail::write_text(dir / "sweep.json", Json{{"axis", s.axis}, {"rows", rows}}.dump(2) + "\n");
  }
}

}  // namespace dp2nilm::exp
