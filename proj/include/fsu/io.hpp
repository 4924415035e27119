#pragma once

// JSON documents: experiment configs, model artifacts and run reports.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

#include "fsu/error.hpp"
#include "fsu/experiment.hpp"
#include "fsu/metrics.hpp"
#include "fsu/model.hpp"
#include "fsu/unlearning.hpp"

namespace fsu {

using json = nlohmann::json;

namespace detail {

inline void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& block) {
  if (!j.is_object()) throw ConfigError(block + ": expected an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items())
    if (!ok.count(key)) throw ConfigError(block + ": unknown key '" + key + "'");
}

template <class T>
void read_opt(const json& j, const char* key, T& out, const std::string& block) {
  if (!j.contains(key) || j.at(key).is_null()) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(block + "." + key + ": " + e.what());
  }
}

inline std::string hex64(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Config

inline ExperimentConfig config_from_json(const json& j) {
  using detail::check_keys;
  using detail::read_opt;
  ExperimentConfig c;
  check_keys(j, {"seed", "data", "split", "model", "pretrain", "unlearn", "sweep", "resolved_seeds"}, "config");
  read_opt(j, "seed", c.seed, "config");

  if (j.contains("data")) {
    const json& d = j.at("data");
    check_keys(d, {"synth", "csv", "class_count"}, "data");
    read_opt(d, "class_count", c.data.class_count, "data");
    if (d.contains("csv") && d.contains("synth")) throw ConfigError("data: give either synth or csv, not both");
    if (d.contains("csv")) {
      c.data.csv = d.at("csv").get<std::string>();
      c.data.synth.reset();
    } else if (d.contains("synth")) {
      const json& s = d.at("synth");
      check_keys(s, {"class_count", "group_count", "samples_per_group_per_class", "feature_dim", "separation",
                     "within_std", "group_std", "rotate"}, "data.synth");
      SynthSpec spec;
      read_opt(s, "class_count", spec.class_count, "data.synth");
      read_opt(s, "group_count", spec.group_count, "data.synth");
      read_opt(s, "samples_per_group_per_class", spec.samples_per_group_per_class, "data.synth");
      read_opt(s, "feature_dim", spec.feature_dim, "data.synth");
      read_opt(s, "separation", spec.separation, "data.synth");
      read_opt(s, "within_std", spec.within_std, "data.synth");
      read_opt(s, "group_std", spec.group_std, "data.synth");
      read_opt(s, "rotate", spec.rotate, "data.synth");
      spec.validate();
      c.data.synth = spec;
    }
  }
  if (j.contains("split")) {
    const json& s = j.at("split");
    check_keys(s, {"train_fraction", "val_fraction", "test_fraction"}, "split");
    read_opt(s, "train_fraction", c.split.train_fraction, "split");
    read_opt(s, "val_fraction", c.split.val_fraction, "split");
    read_opt(s, "test_fraction", c.split.test_fraction, "split");
    c.split.validate();
  }
  if (j.contains("model")) {
    const json& m = j.at("model");
    check_keys(m, {"hidden"}, "model");
    read_opt(m, "hidden", c.model.hidden, "model");
  }
  if (j.contains("pretrain")) {
    const json& p = j.at("pretrain");
    check_keys(p, {"epochs", "batch_size", "lr", "setting"}, "pretrain");
    read_opt(p, "epochs", c.pretrain.epochs, "pretrain");
    read_opt(p, "batch_size", c.pretrain.batch_size, "pretrain");
    read_opt(p, "lr", c.pretrain.lr, "pretrain");
    if (p.contains("setting")) c.pretrain.setting = parse_setting(p.at("setting").get<std::string>());
    if (c.pretrain.batch_size == 0) throw ConfigError("pretrain: batch_size must be >= 1");
    if (!(c.pretrain.lr > 0.0)) throw ConfigError("pretrain: lr must be positive");
  }
  if (j.contains("unlearn")) {
    const json& u = j.at("unlearn");
    check_keys(u, {"strategy", "forget_count", "epochs", "batch_size", "lr", "weights", "attack"}, "unlearn");
    if (u.contains("strategy")) c.unlearn.strategy = parse_strategy(u.at("strategy").get<std::string>());
    read_opt(u, "forget_count", c.unlearn.forget_count, "unlearn");
    read_opt(u, "epochs", c.unlearn.epochs, "unlearn");
    read_opt(u, "batch_size", c.unlearn.batch_size, "unlearn");
    read_opt(u, "lr", c.unlearn.lr, "unlearn");
    if (u.contains("weights")) {
      const json& w = u.at("weights");
      check_keys(w, {"lambda1", "lambda2", "lambda3"}, "unlearn.weights");
      read_opt(w, "lambda1", c.unlearn.weights.mis, "unlearn.weights");
      read_opt(w, "lambda2", c.unlearn.weights.adv, "unlearn.weights");
      read_opt(w, "lambda3", c.unlearn.weights.ewc, "unlearn.weights");
    }
    if (u.contains("attack")) {
      const json& a = u.at("attack");
      check_keys(a, {"tau", "sigma", "steps", "per_sample_count", "direction", "clip"}, "unlearn.attack");
      read_opt(a, "tau", c.unlearn.attack.tau, "unlearn.attack");
      if (a.contains("sigma") && !a.at("sigma").is_null()) c.unlearn.attack.sigma = a.at("sigma").get<double>();
      read_opt(a, "steps", c.unlearn.attack.steps, "unlearn.attack");
      read_opt(a, "per_sample_count", c.unlearn.attack.per_sample_count, "unlearn.attack");
      if (a.contains("direction")) {
        const auto d = a.at("direction").get<std::string>();
        if (d == "descend") c.unlearn.attack.direction = StepDirection::descend;
        else if (d == "ascend") c.unlearn.attack.direction = StepDirection::ascend;
        else throw ConfigError("unlearn.attack.direction: expected descend or ascend");
      }
      if (a.contains("clip")) {
        const auto m = a.at("clip").get<std::string>();
        if (m == "every_step") c.unlearn.attack.clip = ClipMode::every_step;
        else if (m == "final_only") c.unlearn.attack.clip = ClipMode::final_only;
        else throw ConfigError("unlearn.attack.clip: expected every_step or final_only");
      }
    }
    c.unlearn.validate();
  }
  if (j.contains("sweep")) {
    const json& s = j.at("sweep");
    check_keys(s, {"taus", "forget_counts", "strategies", "seeds"}, "sweep");
    read_opt(s, "taus", c.sweep.taus, "sweep");
    read_opt(s, "forget_counts", c.sweep.forget_counts, "sweep");
    read_opt(s, "seeds", c.sweep.seeds, "sweep");
    if (s.contains("strategies")) {
      c.sweep.strategies.clear();
      for (const auto& v : s.at("strategies")) c.sweep.strategies.push_back(parse_strategy(v.get<std::string>()));
    }
    c.sweep.validate();
  }
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config " + path);
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
  try {
    return config_from_json(j);
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

/// Full resolved configuration, including the fanned-out seeds.
inline json config_to_json(const ExperimentConfig& c) {
  json j;
  j["seed"] = c.seed;
  if (c.data.csv) {
    j["data"] = {{"csv", *c.data.csv}, {"class_count", c.data.class_count}};
  } else if (c.data.synth) {
    const SynthSpec& s = *c.data.synth;
    j["data"]["synth"] = {{"class_count", s.class_count},
                          {"group_count", s.group_count},
                          {"samples_per_group_per_class", s.samples_per_group_per_class},
                          {"feature_dim", s.feature_dim},
                          {"separation", s.separation},
                          {"within_std", s.within_std},
                          {"group_std", s.group_std},
                          {"rotate", s.rotate}};
  }
  j["split"] = {{"train_fraction", c.split.train_fraction},
                {"val_fraction", c.split.val_fraction},
                {"test_fraction", c.split.test_fraction}};
  j["model"] = {{"hidden", c.model.hidden}};
  j["pretrain"] = {{"epochs", c.pretrain.epochs},
                   {"batch_size", c.pretrain.batch_size},
                   {"lr", c.pretrain.lr},
                   {"setting", to_string(c.pretrain.setting)}};
  const AttackConfig& a = c.unlearn.attack;
  j["unlearn"] = {{"strategy", to_string(c.unlearn.strategy)},
                  {"forget_count", c.unlearn.forget_count},
                  {"epochs", c.unlearn.epochs},
                  {"batch_size", c.unlearn.batch_size},
                  {"lr", c.unlearn.lr},
                  {"weights",
                   {{"lambda1", c.unlearn.weights.mis},
                    {"lambda2", c.unlearn.weights.adv},
                    {"lambda3", c.unlearn.weights.ewc}}},
                  {"attack",
                   {{"tau", a.tau},
                    {"sigma", a.sigma ? json(*a.sigma) : json(nullptr)},
                    {"steps", a.steps},
                    {"per_sample_count", a.per_sample_count},
                    {"direction", a.direction == StepDirection::descend ? "descend" : "ascend"},
                    {"clip", a.clip == ClipMode::every_step ? "every_step" : "final_only"}}}};
  json strategies = json::array();
  for (Strategy s : c.sweep.strategies) strategies.push_back(to_string(s));
  j["sweep"] = {{"taus", c.sweep.taus},
                {"forget_counts", c.sweep.forget_counts},
                {"strategies", strategies},
                {"seeds", c.sweep.seeds}};
  const SeedPlan sp = SeedPlan::from(c.seed);
  j["resolved_seeds"] = {{"data", sp.data},       {"split", sp.split},   {"init", sp.init},
                         {"shuffle", sp.pretrain_shuffle}, {"forget", sp.forget},
                         {"relabel", sp.unlearn}, {"attack", sp.attack}};
  return j;
}

// ---------------------------------------------------------------------------
// Model artifact

inline constexpr int kModelFormatVersion = 1;

inline std::string model_checksum(const Classifier& m) { return detail::hex64(checksum(m.parameter_view())); }

/// Architecture, flat parameters (round-trip exact), checksum and the seeds
/// that produced it.
inline json model_to_json(const Classifier& m, const json& meta = json::object()) {
  json j;
  j["format"] = "fsu-classifier";
  j["version"] = kModelFormatVersion;
  j["input_dim"] = m.input_dim();
  j["class_count"] = m.class_count();
  j["hidden"] = m.hidden_widths();
  j["activation"] = "tanh";
  j["parameter_order"] = "layers in forward order; each layer: weights row-major (out x in), then bias";
  j["parameters"] = std::vector<double>(m.parameter_view().begin(), m.parameter_view().end());
  j["checksum"] = model_checksum(m);
  j["meta"] = meta;
  return j;
}

inline Classifier model_from_json(const json& j) {
  try {
    if (j.at("format") != "fsu-classifier") throw ParseError("not a classifier artifact");
    if (j.at("version").get<int>() != kModelFormatVersion)
      throw ParseError("unsupported artifact version " + j.at("version").dump());
    if (j.at("activation") != "tanh") throw ParseError("unsupported activation");
    Classifier m(j.at("input_dim").get<std::size_t>(), j.at("hidden").get<std::vector<std::size_t>>(),
                 j.at("class_count").get<std::size_t>());
    m.set_parameters(j.at("parameters").get<std::vector<double>>());
    if (j.contains("checksum") && j.at("checksum").get<std::string>() != model_checksum(m))
      throw ParseError("parameter checksum mismatch");
    return m;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed model artifact: ") + e.what());
  } catch (const ShapeError& e) {
    throw ParseError(std::string("malformed model artifact: ") + e.what());
  }
}

inline void write_json(const json& j, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os << j.dump(2) << '\n';
  if (!os) throw IoError("failed writing " + path);
}

inline json read_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path);
  try {
    return json::parse(is);
  } catch (const json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
}

inline void save_model(const Classifier& m, const std::string& path, const json& meta = json::object()) {
  write_json(model_to_json(m, meta), path);
}

inline Classifier load_model(const std::string& path) {
  try {
    return model_from_json(read_json(path));
  } catch (const ParseError& e) {
    throw e.with_context(path);
  }
}

// ---------------------------------------------------------------------------
// Reports

inline json to_json(const EvalReport& r) {
  json recalls = json::array();
  for (double v : r.per_class_recall) recalls.push_back(std::isnan(v) ? json(nullptr) : json(v));
  json confusion = json::array();
  const std::size_t c = r.confusion.class_count();
  for (std::size_t t = 0; t < c; ++t) {
    json row = json::array();
    for (std::size_t p = 0; p < c; ++p) row.push_back(r.confusion.at(t, p));
    confusion.push_back(row);
  }
  return {{"split", r.split_name}, {"uar", r.uar},        {"n_samples", r.n_samples},
          {"per_class_recall", recalls}, {"confusion", confusion}};
}

inline json to_json(const UnlearnReport& r) {
  json epochs = json::array();
  for (const EpochLosses& e : r.epochs)
    epochs.push_back({{"epoch", e.epoch}, {"L_mis", e.mis}, {"L_adv", e.adv}, {"L_ewc", e.ewc},
                      {"L_remain", e.remain}, {"L_total", e.total}});
  return {{"strategy", to_string(r.strategy)},
          {"epochs", epochs},
          {"forget_count", r.forget_count},
          {"adversarial_count", r.adversarial_count},
          {"remain_count", r.remain_count},
          {"seeds", {{"relabel", r.relabel_seed}, {"shuffle", r.shuffle_seed}, {"attack", r.attack_seed}}},
          {"checksums",
           {{"adversarial_before", detail::hex64(r.adversarial_checksum_before)},
            {"adversarial_after", detail::hex64(r.adversarial_checksum_after)},
            {"fisher_before", detail::hex64(r.fisher_checksum_before)},
            {"fisher_after", detail::hex64(r.fisher_checksum_after)}}}};
}

}  // namespace fsu
