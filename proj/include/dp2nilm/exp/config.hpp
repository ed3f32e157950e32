#pragma once

// Experiment configuration: JSON in, validated ExperimentConfig out, and back.
// Every object rejects keys it does not know; absent keys take the defaults
// of the corresponding struct.

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "dp2nilm/core/error.hpp"
#include "dp2nilm/core/rng.hpp"
#include "dp2nilm/data/dataset.hpp"
#include "dp2nilm/dp/mechanism.hpp"
#include "dp2nilm/exp/cohort.hpp"
#include "dp2nilm/fl/engine.hpp"
#include "dp2nilm/nn/network.hpp"

namespace dp2nilm::exp {

using Json = nlohmann::ordered_json;

enum class Scenario { kLocal, kCentralized, kFedAvg, kFedProx, kGdpfl, kLdpfl };

inline const char* scenario_name(Scenario s) {
  switch (s) {
    case Scenario::kLocal: return "local";
    case Scenario::kCentralized: return "centralized";
    case Scenario::kFedAvg: return "fedavg";
    case Scenario::kFedProx: return "fedprox";
    case Scenario::kGdpfl: return "gdpfl";
    case Scenario::kLdpfl: return "ldpfl";
  }
  return "?";
}

inline Scenario parse_scenario(const std::string& s) {
  for (auto sc : {Scenario::kLocal, Scenario::kCentralized, Scenario::kFedAvg, Scenario::kFedProx,
                  Scenario::kGdpfl, Scenario::kLdpfl}) {
    if (s == scenario_name(sc)) return sc;
  }
  throw ConfigError("unknown scenario '" + s +
                    "' (expected local, centralized, fedavg, fedprox, gdpfl or ldpfl)");
}

/// Privacy mode a scenario requires.
inline dp::PrivacyMode required_mode(Scenario s) {
  if (s == Scenario::kGdpfl) return dp::PrivacyMode::kGlobal;
  if (s == Scenario::kLdpfl) return dp::PrivacyMode::kLocal;
  return dp::PrivacyMode::kNone;
}

inline bool is_federated(Scenario s) {
  return s != Scenario::kLocal && s != Scenario::kCentralized;
}

struct CsvClient {
  std::string aggregate;                         // path to epoch,watts rows
  std::map<std::string, std::string> appliances;  // appliance name -> path

  friend bool operator==(const CsvClient&, const CsvClient&) = default;
};

struct DataConfig {
  std::string source = "synthetic";  // synthetic | csv
  SyntheticCohort cohort;
  std::vector<CsvClient> csv_clients;
  std::vector<data::ApplianceSpec> appliances = data::default_appliances();
  data::PreprocessOptions prep;

  friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

struct AttackConfig {
  bool enabled = true;
  std::string target = "global";  // global | uploads

  friend bool operator==(const AttackConfig&, const AttackConfig&) = default;
};

struct ExperimentConfig {
  Scenario scenario = Scenario::kFedAvg;
  DataConfig data;
  nn::NetworkSpec net;
  fl::FLConfig fl;
  dp::PrivacyConfig privacy;
  AttackConfig attack;
  Seed master_seed = 0;
  std::string output_dir = "runs";

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

/// Checks scenario/privacy consistency and every sub-config.
inline void validate(const ExperimentConfig& c) {
  const auto need = required_mode(c.scenario);
  if (c.privacy.mode != need) {
    throw ConfigError(std::string("scenario '") + scenario_name(c.scenario) +
                      "' requires privacy mode '" + dp::mode_name(need) + "', got '" +
                      dp::mode_name(c.privacy.mode) + "'");
  }
  dp::validate(c.privacy);
  fl::validate(c.fl);
  nn::validate(c.net);
  if (c.fl.strategy != (c.scenario == Scenario::kFedProx ? fl::Strategy::kFedProx
                                                          : fl::Strategy::kFedAvg)) {
    throw ConfigError("strategy does not match scenario");
  }
  if (c.data.appliances.empty()) throw ConfigError("data.appliances must not be empty");
  for (const auto& a : c.data.appliances) data::validate(a);
  if (c.net.appliance_count != c.data.appliances.size() ||
      c.net.window_len != c.data.prep.window_len) {
    throw ConfigError("network shape does not match data.window_len / data.appliances");
  }
  if (c.data.prep.window_len == 0 || c.data.prep.stride == 0) {
    throw ConfigError("data.window_len and data.stride must be positive");
  }
  if (c.data.source == "synthetic") {
    if (c.data.cohort.clients == 0) throw ConfigError("data.clients must be at least 1");
    if (c.data.cohort.days == 0) throw ConfigError("data.days must be at least 1");
    if (c.data.cohort.profiles.empty()) throw ConfigError("data.profiles must not be empty");
    for (const auto& p : c.data.cohort.profiles) {
      for (const auto& [name, model] : p.models) {
        bool known = false;
        for (const auto& a : c.data.appliances) {
          if (a.name == name) {
            data::validate_model(model, a);
            known = true;
          }
        }
        if (!known) throw ConfigError("profile models unknown appliance '" + name + "'");
      }
    }
  } else if (c.data.source == "csv") {
    if (c.data.csv_clients.empty()) throw ConfigError("data.csv_clients must not be empty");
    for (const auto& cc : c.data.csv_clients) {
      for (const auto& a : c.data.appliances) {
        if (!cc.appliances.count(a.name)) {
          throw ConfigError("csv client lacks a trace for appliance '" + a.name + "'");
        }
      }
    }
  } else {
    throw ConfigError("data.source must be 'synthetic' or 'csv', got '" + c.data.source + "'");
  }
  if (c.attack.target != "global" && c.attack.target != "uploads") {
    throw ConfigError("attack.target must be 'global' or 'uploads'");
  }
  if (c.attack.target == "uploads" && !is_federated(c.scenario)) {
    throw ConfigError("attack.target 'uploads' needs a federated scenario");
  }
}

namespace detail {

inline void check_keys(const Json& j, std::initializer_list<std::string_view> allowed,
                       const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <class T>
void read(const Json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(where + "." + key + " has the wrong type");
  }
}

inline data::ApplianceModel parse_model(const Json& j, const std::string& where) {
  if (!j.is_object() || !j.contains("type")) throw ConfigError(where + " needs a 'type'");
  const auto type = j.at("type").get<std::string>();
  if (type == "cyclic") {
    check_keys(j, {"type", "period_s", "duty", "on_power_w", "jitter"}, where);
    data::CyclicModel m;
    read(j, "period_s", m.period_s, where);
    read(j, "duty", m.duty, where);
    read(j, "on_power_w", m.on_power_w, where);
    read(j, "jitter", m.jitter, where);
    return m;
  }
  if (type == "activation") {
    check_keys(j, {"type", "rate_per_day", "phase_powers_w", "phase_durations_s", "first_hour",
                   "last_hour"},
               where);
    data::ActivationModel m;
    read(j, "rate_per_day", m.rate_per_day, where);
    read(j, "phase_powers_w", m.phase_powers_w, where);
    read(j, "phase_durations_s", m.phase_durations_s, where);
    read(j, "first_hour", m.first_hour, where);
    read(j, "last_hour", m.last_hour, where);
    return m;
  }
  throw ConfigError(where + ".type must be 'cyclic' or 'activation'");
}

inline Json emit_model(const data::ApplianceModel& model) {
  if (const auto* c = std::get_if<data::CyclicModel>(&model)) {
    return Json{{"type", "cyclic"},
                {"period_s", c->period_s},
                {"duty", c->duty},
                {"on_power_w", c->on_power_w},
                {"jitter", c->jitter}};
  }
  const auto& a = std::get<data::ActivationModel>(model);
  return Json{{"type", "activation"},
              {"rate_per_day", a.rate_per_day},
              {"phase_powers_w", a.phase_powers_w},
              {"phase_durations_s", a.phase_durations_s},
              {"first_hour", a.first_hour},
              {"last_hour", a.last_hour}};
}

inline data::SynthProfile parse_profile(const Json& j, const std::string& where) {
  check_keys(j, {"models", "base_load_w", "residual_noise_w", "spikes"}, where);
  data::SynthProfile p;
  read(j, "base_load_w", p.base_load_w, where);
  read(j, "residual_noise_w", p.residual_noise_w, where);
  if (j.contains("spikes")) {
    const auto& s = j.at("spikes");
    check_keys(s, {"rate_per_day", "power_w", "duration_s"}, where + ".spikes");
    read(s, "rate_per_day", p.spikes.rate_per_day, where + ".spikes");
    read(s, "power_w", p.spikes.power_w, where + ".spikes");
    read(s, "duration_s", p.spikes.duration_s, where + ".spikes");
  }
  if (j.contains("models")) {
    const auto& m = j.at("models");
    if (!m.is_object()) throw ConfigError(where + ".models must be an object");
    for (const auto& [name, model] : m.items()) {
      p.models[name] = parse_model(model, where + ".models." + name);
    }
  }
  return p;
}

inline Json emit_profile(const data::SynthProfile& p) {
  Json models = Json::object();
  for (const auto& [name, m] : p.models) models[name] = emit_model(m);
  return Json{{"models", models},
              {"base_load_w", p.base_load_w},
              {"residual_noise_w", p.residual_noise_w},
              {"spikes",
               {{"rate_per_day", p.spikes.rate_per_day},
                {"power_w", p.spikes.power_w},
                {"duration_s", p.spikes.duration_s}}}};
}

inline data::ApplianceSpec parse_appliance(const Json& j, const std::string& where) {
  if (j.is_string()) return data::default_appliance(j.get<std::string>());
  check_keys(j, {"name", "max_power_w", "power_threshold_w", "min_on_s", "min_off_s"}, where);
  if (!j.contains("name")) throw ConfigError(where + " needs a name");
  data::ApplianceSpec a;
  read(j, "name", a.name, where);
  // Known names start from their standard thresholds; listed fields override.
  for (const auto& d : data::default_appliances()) {
    if (d.name == a.name) a = d;
  }
  read(j, "max_power_w", a.max_power_w, where);
  read(j, "power_threshold_w", a.power_threshold_w, where);
  read(j, "min_on_s", a.min_on_s, where);
  read(j, "min_off_s", a.min_off_s, where);
  return a;
}

}  // namespace detail

/// Builds a config from parsed JSON. Paths in data.csv_clients are resolved
/// against base_dir when relative.
inline ExperimentConfig config_from_json(const Json& j,
                                         const std::filesystem::path& base_dir = {}) {
  using detail::check_keys;
  using detail::read;
  check_keys(j, {"scenario", "master_seed", "output_dir", "data", "net", "fl", "privacy", "attack"},
             "config");
  ExperimentConfig c;
  if (!j.contains("scenario")) throw ConfigError("config needs a 'scenario'");
  c.scenario = parse_scenario(j.at("scenario").get<std::string>());
  read(j, "master_seed", c.master_seed, "config");
  read(j, "output_dir", c.output_dir, "config");

  if (!j.contains("data")) throw ConfigError("config needs a 'data' block describing the clients");
  const auto& d = j.at("data");
  check_keys(d, {"source", "clients", "days", "sample_period_s", "profiles", "csv_clients",
                 "appliances", "target_period_s", "window_len", "stride"},
             "data");
  read(d, "source", c.data.source, "data");
  read(d, "clients", c.data.cohort.clients, "data");
  read(d, "days", c.data.cohort.days, "data");
  read(d, "sample_period_s", c.data.cohort.sample_period_s, "data");
  read(d, "target_period_s", c.data.prep.target_period_s, "data");
  read(d, "window_len", c.data.prep.window_len, "data");
  read(d, "stride", c.data.prep.stride, "data");
  if (d.contains("profiles")) {
    c.data.cohort.profiles.clear();
    std::size_t i = 0;
    for (const auto& p : d.at("profiles")) {
      c.data.cohort.profiles.push_back(
          detail::parse_profile(p, "data.profiles[" + std::to_string(i++) + "]"));
    }
  }
  if (d.contains("appliances")) {
    c.data.appliances.clear();
    std::size_t i = 0;
    for (const auto& a : d.at("appliances")) {
      c.data.appliances.push_back(
          detail::parse_appliance(a, "data.appliances[" + std::to_string(i++) + "]"));
    }
  }
  if (d.contains("csv_clients")) {
    std::size_t i = 0;
    for (const auto& cc : d.at("csv_clients")) {
      const std::string where = "data.csv_clients[" + std::to_string(i++) + "]";
      check_keys(cc, {"aggregate", "appliances"}, where);
      CsvClient client;
      auto resolve = [&](const std::string& p) {
        const std::filesystem::path path(p);
        return (path.is_relative() && !base_dir.empty() ? base_dir / path : path).string();
      };
      if (!cc.contains("aggregate")) throw ConfigError(where + " needs an aggregate path");
      client.aggregate = resolve(cc.at("aggregate").get<std::string>());
      if (cc.contains("appliances")) {
        for (const auto& [name, path] : cc.at("appliances").items()) {
          client.appliances[name] = resolve(path.get<std::string>());
        }
      }
      c.data.csv_clients.push_back(std::move(client));
    }
  }

  c.net.window_len = c.data.prep.window_len;
  c.net.appliance_count = c.data.appliances.size();
  if (j.contains("net")) {
    const auto& n = j.at("net");
    check_keys(n, {"encoder_channels", "encoder_downsample", "pooling_bins", "kernel_size",
                   "decoder_channels", "dropout", "activation"},
               "net");
    read(n, "encoder_channels", c.net.encoder_channels, "net");
    read(n, "encoder_downsample", c.net.encoder_downsample, "net");
    read(n, "pooling_bins", c.net.pooling_bins, "net");
    read(n, "kernel_size", c.net.kernel_size, "net");
    read(n, "decoder_channels", c.net.decoder_channels, "net");
    read(n, "dropout", c.net.dropout_p, "net");
    read(n, "activation", c.net.activation, "net");
  }

  if (j.contains("fl")) {
    const auto& f = j.at("fl");
    check_keys(f, {"global_rounds", "local_epochs", "batch_size", "lr", "momentum", "mu",
                   "aggregation", "centralized_epochs"},
               "fl");
    read(f, "global_rounds", c.fl.global_rounds, "fl");
    read(f, "local_epochs", c.fl.local_epochs, "fl");
    read(f, "batch_size", c.fl.batch_size, "fl");
    read(f, "lr", c.fl.lr, "fl");
    read(f, "momentum", c.fl.momentum, "fl");
    read(f, "mu", c.fl.mu, "fl");
    read(f, "centralized_epochs", c.fl.centralized_epochs, "fl");
    if (f.contains("aggregation")) {
      const auto a = f.at("aggregation").get<std::string>();
      if (a == "uniform") c.fl.aggregation = fl::Aggregation::kUniform;
      else if (a == "weighted") c.fl.aggregation = fl::Aggregation::kWeighted;
      else throw ConfigError("fl.aggregation must be 'uniform' or 'weighted'");
    }
  }
  c.fl.strategy = c.scenario == Scenario::kFedProx ? fl::Strategy::kFedProx : fl::Strategy::kFedAvg;

  c.privacy.mode = required_mode(c.scenario);
  c.privacy.max_rounds = c.fl.global_rounds;
  bool has_epsilon = false;
  if (j.contains("privacy")) {
    const auto& p = j.at("privacy");
    check_keys(p, {"mode", "epsilon", "delta", "clip_norm", "sigma", "max_rounds"}, "privacy");
    if (p.contains("mode")) c.privacy.mode = dp::parse_mode(p.at("mode").get<std::string>());
    has_epsilon = p.contains("epsilon");
    read(p, "epsilon", c.privacy.epsilon, "privacy");
    read(p, "delta", c.privacy.delta, "privacy");
    read(p, "clip_norm", c.privacy.clip_norm, "privacy");
    read(p, "max_rounds", c.privacy.max_rounds, "privacy");
    if (p.contains("sigma") && !p.at("sigma").is_null()) {
      double s = 0.0;
      read(p, "sigma", s, "privacy");
      c.privacy.sigma = s;
    }
  }
  if (c.privacy.mode != dp::PrivacyMode::kNone && !has_epsilon) {
    throw ConfigError(std::string("scenario '") + scenario_name(c.scenario) +
                      "' needs privacy.epsilon");
  }

  if (j.contains("attack")) {
    const auto& a = j.at("attack");
    check_keys(a, {"enabled", "target"}, "attack");
    read(a, "enabled", c.attack.enabled, "attack");
    read(a, "target", c.attack.target, "attack");
  }
  validate(c);
  return c;
}

inline Json config_to_json(const ExperimentConfig& c) {
  Json data{{"source", c.data.source},
            {"clients", c.data.cohort.clients},
            {"days", c.data.cohort.days},
            {"sample_period_s", c.data.cohort.sample_period_s},
            {"target_period_s", c.data.prep.target_period_s},
            {"window_len", c.data.prep.window_len},
            {"stride", c.data.prep.stride}};
  Json apps = Json::array();
  for (const auto& a : c.data.appliances) {
    apps.push_back({{"name", a.name},
                    {"max_power_w", a.max_power_w},
                    {"power_threshold_w", a.power_threshold_w},
                    {"min_on_s", a.min_on_s},
                    {"min_off_s", a.min_off_s}});
  }
  data["appliances"] = apps;
  Json profiles = Json::array();
  for (const auto& p : c.data.cohort.profiles) profiles.push_back(detail::emit_profile(p));
  data["profiles"] = profiles;
  if (!c.data.csv_clients.empty()) {
    Json cc = Json::array();
    for (const auto& client : c.data.csv_clients) {
      Json a = Json::object();
      for (const auto& [name, path] : client.appliances) a[name] = path;
      cc.push_back({{"aggregate", client.aggregate}, {"appliances", a}});
    }
    data["csv_clients"] = cc;
  }
  Json privacy{{"mode", dp::mode_name(c.privacy.mode)},
               {"epsilon", c.privacy.epsilon},
               {"delta", c.privacy.delta},
               {"clip_norm", c.privacy.clip_norm},
               {"max_rounds", c.privacy.max_rounds}};
  if (c.privacy.sigma) privacy["sigma"] = *c.privacy.sigma;
  return Json{{"scenario", scenario_name(c.scenario)},
              {"master_seed", c.master_seed},
              {"output_dir", c.output_dir},
              {"data", data},
              {"net",
               {{"encoder_channels", c.net.encoder_channels},
                {"encoder_downsample", c.net.encoder_downsample},
                {"pooling_bins", c.net.pooling_bins},
                {"kernel_size", c.net.kernel_size},
                {"decoder_channels", c.net.decoder_channels},
                {"dropout", c.net.dropout_p},
                {"activation", c.net.activation}}},
              {"fl",
               {{"global_rounds", c.fl.global_rounds},
                {"local_epochs", c.fl.local_epochs},
                {"batch_size", c.fl.batch_size},
                {"lr", c.fl.lr},
                {"momentum", c.fl.momentum},
                {"mu", c.fl.mu},
                {"aggregation", fl::aggregation_name(c.fl.aggregation)},
                {"centralized_epochs", c.fl.centralized_epochs}}},
              {"privacy", privacy},
              {"attack", {{"enabled", c.attack.enabled}, {"target", c.attack.target}}}};
}

inline ExperimentConfig parse_config_text(const std::string& text,
                                          const std::filesystem::path& base_dir = {}) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return config_from_json(j, base_dir);
}

inline ExperimentConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return parse_config_text(text, path.parent_path());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

/// Independent seed streams. Client seeds depend only on (master, index), so
/// adding clients never changes the seeds of existing ones.
struct SeedStreams {
  Seed data = 0;
  Seed init = 0;
  Seed server = 0;
  Seed attack = 0;
  std::vector<Seed> client_train;
  std::vector<Seed> client_noise;
};

inline SeedStreams derive_seeds(Seed master, std::size_t clients) {
  SeedStreams s;
  s.data = derive_seed(master, "data");
  s.init = derive_seed(master, "init");
  s.server = derive_seed(master, "server");
  s.attack = derive_seed(master, "attack");
  const Seed train = derive_seed(master, "client-train");
  const Seed noise = derive_seed(master, "client-noise");
  for (std::size_t i = 0; i < clients; ++i) {
    s.client_train.push_back(derive_seed(train, i));
    s.client_noise.push_back(derive_seed(noise, i));
  }
  return s;
}

}  // namespace dp2nilm::exp
