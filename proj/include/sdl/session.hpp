#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdl/dataset.hpp"
#include "sdl/error.hpp"
#include "sdl/evaluator.hpp"
#include "sdl/learner.hpp"
#include "sdl/manifest.hpp"
#include "sdl/network.hpp"
#include "sdl/report.hpp"

namespace sdl {

class NotFoundError : public InputError {
 public:
  using InputError::InputError;
};

// Interactive tuning state kept in a directory:
//   network.json  dataset.jsonl  config.json   initial inputs, never rewritten
//   journal.jsonl                              one committed mutation per line
//   rounds/round_NNN.json                      round reports
// Opening a session replays the journal on top of the initial inputs.
class Session {
 public:
  static constexpr const char* kNetwork = "network.json";
  static constexpr const char* kDataset = "dataset.jsonl";
  static constexpr const char* kConfig = "config.json";
  static constexpr const char* kJournal = "journal.jsonl";

  // Populate an empty state directory from input files.
  static void init(const std::filesystem::path& dir, const std::string& network, const std::string& dataset,
                   const std::optional<std::string>& config) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    if (fs::exists(dir / kNetwork)) throw InputError("state directory '" + dir.string() + "' is already initialized");
    load_network(network);
    if (config) load_learner_config(*config);
    fs::copy_file(network, dir / kNetwork);
    fs::copy_file(dataset, dir / kDataset);
    if (config)
      fs::copy_file(*config, dir / kConfig);
    else
      std::ofstream(dir / kConfig) << learner_config_to_json(LearnerConfig{}).dump(2) << '\n';
  }

  static bool initialized(const std::filesystem::path& dir) { return std::filesystem::exists(dir / kNetwork); }

  explicit Session(std::filesystem::path dir) : dir_(std::move(dir)) {
    namespace fs = std::filesystem;
    if (!initialized(dir_)) throw InputError("no network.json in state directory '" + dir_.string() + "'");
    net_ = load_network((dir_ / kNetwork).string());
    ds_ = load_dataset((dir_ / kDataset).string());
    if (fs::exists(dir_ / kConfig)) cfg_ = load_learner_config((dir_ / kConfig).string());
    net_ = with_bins(net_, cfg_);
    rounds_.push_back({0, net_, std::nullopt});
    history_.push_back({{"entry", 0}, {"op", "start"}, {"round", 0}});
    replay();
    refresh();
  }

  const NetworkSpec& network() const { return net_; }
  const Dataset& dataset() const { return ds_; }
  const LearnerConfig& config() const { return cfg_; }
  const DecisionLog& log() const { return log_; }
  const std::set<std::string>& vetoes() const { return vetoes_; }
  int last_round() const { return static_cast<int>(rounds_.size()) - 1; }

  nlohmann::ordered_json state() const {
    nlohmann::ordered_json j;
    j["round"] = last_round();
    j["network"] = network_to_json(net_);
    j["vetoes"] = vetoes_;
    j["summary"] = log_summary(log_.counts(), cfg_.weights);
    j["history"] = history_;
    return j;
  }

  nlohmann::ordered_json params() const {
    auto out = nlohmann::ordered_json::array();
    for (const auto& v : analysis_) out.push_back(param_json(v));
    return out;
  }

  nlohmann::ordered_json curve(const std::string& id) const { return param_json(analysis_.at(index_of(id))); }

  nlohmann::ordered_json round_report(int k) const {
    if (k < 1 || k > last_round()) throw NotFoundError("no round " + std::to_string(k));
    return round_view_to_json(*rounds_[static_cast<std::size_t>(k)].report);
  }

  nlohmann::ordered_json rounds() const {
    auto out = nlohmann::ordered_json::array();
    for (const auto& r : rounds_) {
      nlohmann::ordered_json j{{"round", r.round}};
      if (r.report) {
        j["error_before"] = r.report->error_before;
        j["error_after"] = r.report->error_after;
        int applied = 0;
        for (const auto& p : r.report->params) applied += p.applied ? 1 : 0;
        j["applied"] = applied;
      }
      out.push_back(std::move(j));
    }
    return out;
  }

  // Manual edit of one parameter: any of value, tol, tol_neg, tol_pos, veto.
  nlohmann::ordered_json edit(const std::string& id, const nlohmann::json& body) {
    index_of(id);
    if (!body.is_object()) throw InputError("edit: body must be a JSON object");
    static const std::set<std::string> known{"value", "tol", "tol_neg", "tol_pos", "veto"};
    for (const auto& [k, v] : body.items())
      if (!known.count(k)) throw InputError("edit: unknown field '" + k + "'");
    NetworkSpec next = net_;
    try {
      if (body.contains("value")) {
        next = substitute_param(next, id, body.at("value").get<double>());
      }
      ParamSpec& q = next.param(id);
      if (body.contains("tol")) q.tol_neg = q.tol_pos = body.at("tol").get<double>();
      if (body.contains("tol_neg")) q.tol_neg = body.at("tol_neg").get<double>();
      if (body.contains("tol_pos")) q.tol_pos = body.at("tol_pos").get<double>();
      next.validate();
    } catch (const nlohmann::json::exception& e) {
      throw InputError(std::string("edit: ") + e.what());
    }
    std::optional<bool> veto;
    if (body.contains("veto")) {
      if (!body.at("veto").is_boolean()) throw InputError("edit: veto must be true or false");
      veto = body.at("veto").get<bool>();
    }
    const ParamSpec& q = next.param(id);
    nlohmann::ordered_json entry{{"op", "edit"}, {"param", id}};
    entry["value"] = q.value;
    entry["tol_neg"] = q.tol_neg;
    entry["tol_pos"] = q.tol_pos;
    if (veto) entry["veto"] = *veto;
    commit(entry);
    apply_edit(entry);
    refresh();
    return curve(id);
  }

  // One learning round on the current network, honoring vetoes.
  nlohmann::ordered_json run_round() {
    const int k = last_round() + 1;
    RoundResult res = tune_round(net_, ds_, cfg_, vetoes_, &log_, k);
    RoundView view = view_of(res.report);
    namespace fs = std::filesystem;
    fs::create_directories(dir_ / "rounds");
    {
      auto tmp = dir_ / "rounds" / (round_file(k) + ".tmp");
      std::ofstream(tmp) << round_view_to_json(view).dump() << '\n';
      fs::rename(tmp, dir_ / "rounds" / round_file(k));
    }
    commit({{"op", "round"}, {"round", k}, {"network", network_to_json(res.net)}});
    net_ = std::move(res.net);
    log_ = std::move(res.log);
    rounds_.push_back({k, net_, std::move(view)});
    history_.push_back(round_history(*rounds_.back().report));
    analysis_ = views(analyze_params(net_, log_, cfg_, vetoes_));
    return round_report(k);
  }

  // Return to the network as it was after round k (0 = start). History keeps
  // growing; the rollback is an entry of its own.
  nlohmann::ordered_json rollback(int k) {
    if (k < 0 || k > last_round()) throw NotFoundError("no round " + std::to_string(k));
    commit({{"op", "rollback"}, {"round", k}});
    net_ = rounds_[static_cast<std::size_t>(k)].net;
    history_.push_back({{"entry", history_.size()}, {"op", "rollback"}, {"round", k}});
    refresh();
    return state();
  }

  // Frames with their outcome and suspect, optionally filtered by class.
  nlohmann::ordered_json frames(std::optional<Outcome> cls, std::size_t offset, std::size_t limit) const {
    nlohmann::ordered_json out;
    auto items = nlohmann::ordered_json::array();
    std::size_t total = 0;
    for (std::size_t i = 0; i < log_.entries.size(); ++i) {
      const auto& e = log_.entries[i];
      if (cls && e.outcome != *cls) continue;
      if (total++ < offset || items.size() >= limit) continue;
      nlohmann::ordered_json f;
      f["index"] = i;
      f["frame_id"] = e.frame_id;
      f["decision"] = e.decision;
      f["label"] = e.label;
      f["class"] = to_string(e.outcome);
      f["score"] = e.score;
      if (e.attribution) {
        f["suspect"] = e.attribution->param;
        f["alternate"] = e.attribution->alternate;
        f["margin"] = e.attribution->margin;
        f["rotated"] = e.attribution->rotated;
      } else {
        f["suspect"] = nullptr;
      }
      f["frame"] = frame_to_json(ds_, ds_.frames[i]);
      items.push_back(std::move(f));
    }
    out["total"] = total;
    out["offset"] = offset;
    out["limit"] = limit;
    out["frames"] = std::move(items);
    return out;
  }

 private:
  struct RoundEntry {
    int round = 0;
    NetworkSpec net;
    std::optional<RoundView> report;
  };

  static std::string round_file(int k) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "round_%03d.json", k);
    return buf;
  }

  std::size_t index_of(const std::string& id) const {
    auto i = net_.find_param(id);
    if (!i) throw NotFoundError("unknown parameter '" + id + "'");
    return static_cast<std::size_t>(*i);
  }

  nlohmann::ordered_json param_json(const ParamView& v) const {
    auto j = param_view_to_json(v);
    j["vetoed"] = vetoes_.count(v.id) > 0;
    return j;
  }

  static std::vector<ParamView> views(const std::vector<ParamReport>& reports) {
    std::vector<ParamView> out;
    for (const auto& r : reports) out.push_back(view_of(r));
    return out;
  }

  void refresh() {
    log_ = eval_dataset(net_, ds_);
    analysis_ = views(analyze_params(net_, log_, cfg_, vetoes_));
  }

  nlohmann::ordered_json round_history(const RoundView& r) const {
    return {{"entry", history_.size()},
            {"op", "round"},
            {"round", r.round},
            {"error_before", r.error_before},
            {"error_after", r.error_after}};
  }

  void commit(const nlohmann::ordered_json& entry) {
    std::ofstream out(dir_ / kJournal, std::ios::app | std::ios::binary);
    if (!out) throw InputError("cannot append to journal in '" + dir_.string() + "'");
    out << entry.dump() << '\n';
    out.flush();
    if (!out) throw InputError("journal write failed in '" + dir_.string() + "'");
  }

  void apply_edit(const nlohmann::ordered_json& e) {
    const std::string id = e.at("param").get<std::string>();
    ParamSpec& p = net_.param(id);
    p.value = e.at("value").get<double>();
    p.tol_neg = e.at("tol_neg").get<double>();
    p.tol_pos = e.at("tol_pos").get<double>();
    net_.validate();
    if (e.contains("veto")) {
      if (e.at("veto").get<bool>())
        vetoes_.insert(id);
      else
        vetoes_.erase(id);
    }
    history_.push_back({{"entry", history_.size()}, {"op", "edit"}, {"param", id}});
  }

  // Apply committed journal lines. A final line without its newline was never
  // committed and is ignored.
  void replay() {
    namespace fs = std::filesystem;
    const auto path = dir_ / kJournal;
    if (!fs::exists(path)) return;
    std::string text = read_file(path.string());
    std::size_t pos = 0, line = 0;
    while (pos < text.size()) {
      auto nl = text.find('\n', pos);
      if (nl == std::string::npos) break;
      ++line;
      std::string_view s(text.data() + pos, nl - pos);
      pos = nl + 1;
      if (s.empty()) continue;
      const std::string at = path.string() + ":" + std::to_string(line);
      try {
        auto e = nlohmann::ordered_json::parse(s);
        const std::string op = e.at("op").get<std::string>();
        if (op == "edit") {
          index_of(e.at("param").get<std::string>());
          apply_edit(e);
        } else if (op == "round") {
          const int k = e.at("round").get<int>();
          if (k != last_round() + 1) throw CorruptLogError("round " + std::to_string(k) + " out of order");
          auto file = dir_ / "rounds" / round_file(k);
          if (!fs::exists(file)) throw CorruptLogError("missing " + file.string());
          net_ = network_from_json(e.at("network"));
          rounds_.push_back({k, net_, round_view_from_json(nlohmann::ordered_json::parse(read_file(file.string())))});
          history_.push_back(round_history(*rounds_.back().report));
        } else if (op == "rollback") {
          const int k = e.at("round").get<int>();
          if (k < 0 || k > last_round()) throw CorruptLogError("rollback to unknown round " + std::to_string(k));
          net_ = rounds_[static_cast<std::size_t>(k)].net;
          history_.push_back({{"entry", history_.size()}, {"op", "rollback"}, {"round", k}});
        } else {
          throw CorruptLogError("unknown op '" + op + "'");
        }
      } catch (const CorruptLogError& err) {
        throw CorruptLogError(at + ": " + err.what());
      } catch (const std::exception& err) {
        throw CorruptLogError(at + ": " + err.what());
      }
    }
  }

  std::filesystem::path dir_;
  NetworkSpec net_;
  Dataset ds_;
  LearnerConfig cfg_;
  std::set<std::string> vetoes_;
  DecisionLog log_;
  std::vector<ParamView> analysis_;
  std::vector<RoundEntry> rounds_;
  nlohmann::ordered_json history_ = nlohmann::ordered_json::array();
};

}  // namespace sdl
