#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sdl/dataset.hpp"
#include "sdl/error.hpp"
#include "sdl/evaluator.hpp"
#include "sdl/learner.hpp"
#include "sdl/manifest.hpp"
#include "sdl/network.hpp"
#include "sdl/report.hpp"
#include "sdl/serve.hpp"
#include "sdl/session.hpp"
#include "sdl/synth.hpp"

namespace sdl::cli {

namespace fs = std::filesystem;

enum Exit : int { kOk = 0, kNoImprovement = 1, kInputError = 2, kInternalError = 3 };

struct EvalArgs {
  std::string net, data;
  std::optional<std::string> config;
  std::string out;
};

struct TuneArgs {
  std::string net, data;
  std::optional<std::string> config;
  std::string out;
  std::optional<int> max_rounds;
};

struct SynthArgs {
  std::string scenario;
  // Overrides the scenario's network.
  std::optional<std::string> net;
  std::uint64_t seed = 1;
  std::string out;
};

struct ReportArgs {
  std::string in;
  std::string out;
};

struct ServeArgs {
  std::string state;
  std::optional<std::string> net, data, config;
  int port = 8080;
  std::optional<std::string> www;
};

namespace detail {

inline fs::path make_out(const std::string& out) {
  if (out.empty()) throw InputError("--out is required");
  fs::create_directories(out);
  return fs::path(out);
}

inline void write_text(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw InputError("cannot write '" + p.string() + "'");
  out << text;
}

template <class Fn>
inline void write_stream(const fs::path& p, Fn&& fn) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw InputError("cannot write '" + p.string() + "'");
  fn(out);
}

inline LearnerConfig config_from(const std::optional<std::string>& path) {
  return path ? load_learner_config(*path) : LearnerConfig{};
}

inline std::string round_dir(int k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "round_%02d", k);
  return buf;
}

// Curves and summary for one round, under `dir`.
inline void write_round_tables(const fs::path& dir, const RoundView& v) {
  write_stream(dir / "summary.csv", [&](std::ostream& o) { write_summary_csv(o, v); });
  for (const auto& p : v.params)
    write_stream(dir / "curves" / (p.id + ".csv"), [&](std::ostream& o) { write_curve_csv(o, p); });
}

}  // namespace detail

inline int cmd_eval(const EvalArgs& a, std::ostream& out) {
  NetworkSpec net = load_network(a.net);
  Dataset ds = load_dataset(a.data);
  LearnerConfig cfg = detail::config_from(a.config);
  net = with_bins(net, cfg);
  auto dir = detail::make_out(a.out);
  DecisionLog log = eval_dataset(net, ds);
  detail::write_stream(dir / "log.csv", [&](std::ostream& o) { write_log_csv(o, log); });
  auto summary = log_summary(log.counts(), cfg.weights);
  detail::write_text(dir / "summary.json", summary.dump(2) + "\n");
  RunManifest m;
  m.command = "eval";
  m.add_input("network", a.net);
  m.add_input("dataset", a.data);
  if (a.config) m.add_input("config", *a.config);
  write_manifest(dir, m);
  out << "frames " << summary["frames"] << "  TP " << summary["tp"] << "  FP " << summary["fp"] << "  FN "
      << summary["fn"] << "  TN " << summary["tn"] << "  weighted error " << fmt_num(summary["weighted_error"])
      << "\n";
  return kOk;
}

inline int cmd_tune(const TuneArgs& a, std::ostream& out) {
  NetworkSpec net = load_network(a.net);
  Dataset ds = load_dataset(a.data);
  LearnerConfig cfg = detail::config_from(a.config);
  if (a.max_rounds) {
    cfg.max_rounds = *a.max_rounds;
    cfg.validate();
  }
  auto dir = detail::make_out(a.out);
  TuneResult r = tune(net, ds, cfg);

  int applied = 0;
  for (const auto& rep : r.rounds) {
    RoundView v = view_of(rep);
    auto rd = dir / "rounds" / detail::round_dir(rep.round);
    detail::write_text(rd / "report.json", round_view_to_json(v).dump() + "\n");
    detail::write_round_tables(rd, v);
    applied += rep.applied() > 0 ? 1 : 0;
  }
  detail::write_text(dir / "best_network.json", dump_network(r.best));
  detail::write_stream(dir / "best_log.csv", [&](std::ostream& o) { write_log_csv(o, r.best_log); });

  nlohmann::ordered_json s;
  s["rounds_run"] = r.rounds.size();
  s["rounds_applied"] = applied;
  s["max_rounds"] = cfg.max_rounds;
  s["best_round"] = r.best_round;
  s["start_error"] = r.errors.front();
  s["best_error"] = r.errors[static_cast<std::size_t>(r.best_round)];
  s["errors"] = r.errors;
  s["start"] = log_summary(r.rounds.empty() ? r.best_log.counts() : r.rounds.front().before, cfg.weights);
  s["best"] = log_summary(r.best_log.counts(), cfg.weights);
  detail::write_text(dir / "summary.json", s.dump(2) + "\n");

  RunManifest m;
  m.command = "tune";
  m.add_input("network", a.net);
  m.add_input("dataset", a.data);
  if (a.config) m.add_input("config", *a.config);
  m.parameters["max_rounds"] = a.max_rounds ? nlohmann::ordered_json(*a.max_rounds) : nlohmann::ordered_json(nullptr);
  write_manifest(dir, m);

  out << applied << " rounds applied; weighted error " << fmt_num(r.errors.front()) << " -> "
      << fmt_num(r.errors[static_cast<std::size_t>(r.best_round)]) << " (best round " << r.best_round << ")\n";
  return r.best_round > 0 ? kOk : kNoImprovement;
}

inline int cmd_synth(const SynthArgs& a, std::ostream& out) {
  ScenarioConfig sc = load_scenario(a.scenario);
  std::string net_path;
  if (a.net) {
    net_path = *a.net;
  } else if (!sc.network.empty()) {
    fs::path p(sc.network);
    net_path = (p.is_absolute() ? p : fs::path(a.scenario).parent_path() / p).string();
  } else {
    throw InputError("scenario names no network; pass --net");
  }
  NetworkSpec ref = load_network(net_path);
  auto dir = detail::make_out(a.out);
  SynthResult r = synth_dataset(ref, sc, a.seed);
  detail::write_stream(dir / "dataset.jsonl", [&](std::ostream& o) { write_dataset(o, r.dataset); });
  detail::write_text(dir / "reference.json", dump_network(r.reference));
  if (r.perturbed)
    detail::write_text(dir / "perturbed.json", dump_network(*r.perturbed));
  else
    fs::remove(dir / "perturbed.json");

  nlohmann::ordered_json s;
  s["scenario"] = sc.name;
  s["seed"] = a.seed;
  s["episodes"] = r.dataset.episodes.size();
  s["frames"] = r.dataset.frames.size();
  s["positives"] = r.positives;
  s["noisy_labels"] = r.noisy_labels;
  auto pert = nlohmann::ordered_json::array();
  for (const auto& p : r.applied)
    pert.push_back({{"param", p.param},
                    {"fraction", p.fraction},
                    {"reference", r.reference.param(p.param).value},
                    {"perturbed", r.perturbed->param(p.param).value}});
  s["perturbations"] = std::move(pert);
  detail::write_text(dir / "synth.json", s.dump(2) + "\n");

  RunManifest m;
  m.command = "synth";
  m.add_input("scenario", a.scenario);
  m.add_input("network", net_path);
  m.seed = a.seed;
  write_manifest(dir, m);
  out << r.dataset.frames.size() << " frames in " << r.dataset.episodes.size() << " episodes, " << r.positives
      << " positive, " << r.applied.size() << " parameters perturbed\n";
  return kOk;
}

// Round reports under `in`: either a tune output directory or its rounds/.
inline std::vector<fs::path> find_round_reports(const fs::path& in) {
  std::vector<fs::path> out;
  for (const auto& base : {in / "rounds", in}) {
    if (!fs::is_directory(base)) continue;
    for (const auto& e : fs::directory_iterator(base))
      if (e.is_directory() && e.path().filename().string().rfind("round_", 0) == 0 &&
          fs::exists(e.path() / "report.json"))
        out.push_back(e.path() / "report.json");
    if (!out.empty()) break;
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline int cmd_report(const ReportArgs& a, std::ostream& out) {
  if (!fs::is_directory(a.in)) throw InputError("no report directory '" + a.in + "'");
  auto files = find_round_reports(a.in);
  if (files.empty()) throw InputError("no round reports under '" + a.in + "'");
  std::vector<RoundView> views;
  for (const auto& f : files) {
    try {
      views.push_back(round_view_from_json(nlohmann::ordered_json::parse(read_file(f.string()))));
    } catch (const nlohmann::json::parse_error& e) {
      throw InputError(f.string() + ": " + e.what());
    } catch (const InputError& e) {
      throw InputError(f.string() + ": " + e.what());
    }
  }
  auto dir = detail::make_out(a.out);
  RunManifest m;
  m.command = "report";
  m.parameters["in"] = fs::absolute(a.in).lexically_normal().string();
  std::size_t plots = 0;
  for (std::size_t i = 0; i < views.size(); ++i) {
    const RoundView& v = views[i];
    auto rd = dir / detail::round_dir(v.round);
    detail::write_round_tables(rd, v);
    for (const auto& p : v.params) {
      detail::write_text(rd / "plots" / (p.id + ".svg"), curve_svg(p));
      ++plots;
    }
    m.add_input("report." + detail::round_dir(v.round), files[i].string());
  }
  write_manifest(dir, m);
  out << views.size() << " rounds rendered, " << plots << " plots\n";
  return kOk;
}

inline int cmd_serve(const ServeArgs& a, std::ostream& out) {
  if (a.state.empty()) throw InputError("--state is required");
  if (!Session::initialized(a.state)) {
    if (!a.net || !a.data) throw InputError("state directory '" + a.state + "' is empty; pass --net and --data");
    Session::init(a.state, *a.net, *a.data, a.config);
  } else if (a.net || a.data || a.config) {
    throw InputError("state directory '" + a.state + "' is already initialized; drop --net/--data/--config");
  }
  Session s(a.state);
  ServeOptions opt;
  opt.port = a.port;
  if (a.www) opt.www = *a.www;
  serve(s, opt, [&](int port) { out << "serving " << a.state << " on http://127.0.0.1:" << port << "/" << std::endl; });
  return kOk;
}

// Re-run a command from its manifest into a new output directory.
inline int cmd_rerun(const std::string& manifest_path, const std::string& out_dir, std::ostream& out) {
  RunManifest m = load_manifest(manifest_path);
  auto stale = stale_inputs(m);
  if (!stale.empty()) {
    std::string list;
    for (const auto& s : stale) list += (list.empty() ? "" : ", ") + s;
    throw InputError("inputs changed since the manifest was written: " + list);
  }
  auto input = [&](const std::string& role) -> std::string {
    auto it = m.inputs.find(role);
    if (it == m.inputs.end()) throw InputError("manifest lacks input '" + role + "'");
    return it->second.path;
  };
  auto optional_input = [&](const std::string& role) -> std::optional<std::string> {
    auto it = m.inputs.find(role);
    if (it == m.inputs.end()) return std::nullopt;
    return it->second.path;
  };
  if (m.command == "eval") return cmd_eval({input("network"), input("dataset"), optional_input("config"), out_dir}, out);
  if (m.command == "tune") {
    TuneArgs a{input("network"), input("dataset"), optional_input("config"), out_dir, std::nullopt};
    if (m.parameters.contains("max_rounds") && !m.parameters["max_rounds"].is_null())
      a.max_rounds = m.parameters["max_rounds"].get<int>();
    return cmd_tune(a, out);
  }
  if (m.command == "synth") {
    if (!m.seed) throw InputError("manifest lacks a seed");
    return cmd_synth({input("scenario"), input("network"), *m.seed, out_dir}, out);
  }
  if (m.command == "report") {
    if (!m.parameters.contains("in")) throw InputError("manifest lacks parameter 'in'");
    return cmd_report({m.parameters["in"].get<std::string>(), out_dir}, out);
  }
  throw InputError("manifest command '" + m.command + "' cannot be re-run");
}

// Parse argv and dispatch. Errors go to `err` with a nonzero exit code.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Soft-threshold decision networks: evaluate, tune, synthesize, report, serve"};
  app.require_subcommand(1);

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "Evaluate a network on a dataset");
  eval->add_option("--net", ev.net, "Network JSON")->required();
  eval->add_option("--data,--in", ev.data, "Dataset JSONL")->required();
  eval->add_option("--config", ev.config, "Learner config JSON (class weights)");
  eval->add_option("--out", ev.out, "Output directory")->required();

  TuneArgs tu;
  auto* tun = app.add_subcommand("tune", "Run learning rounds and keep the best network");
  tun->add_option("--net", tu.net, "Starting network JSON")->required();
  tun->add_option("--data,--in", tu.data, "Dataset JSONL")->required();
  tun->add_option("--config", tu.config, "Learner config JSON");
  tun->add_option("--out", tu.out, "Output directory")->required();
  tun->add_option("--max-rounds", tu.max_rounds, "Override max_rounds");

  SynthArgs sy;
  auto* syn = app.add_subcommand("synth", "Generate a synthetic labeled dataset");
  syn->add_option("--config,--scenario", sy.scenario, "Scenario JSON")->required();
  syn->add_option("--net", sy.net, "Reference network (overrides the scenario's)");
  syn->add_option("--seed", sy.seed, "Random seed");
  syn->add_option("--out", sy.out, "Output directory")->required();

  ReportArgs re;
  auto* rep = app.add_subcommand("report", "Render round reports as CSV and SVG");
  rep->add_option("--in,--data", re.in, "Tune output directory")->required();
  rep->add_option("--out", re.out, "Output directory")->required();

  ServeArgs se;
  auto* srv = app.add_subcommand("serve", "Serve the workbench API on 127.0.0.1");
  srv->add_option("--state", se.state, "State directory")->required();
  srv->add_option("--net", se.net, "Network JSON (initializes an empty state directory)");
  srv->add_option("--data,--in", se.data, "Dataset JSONL (initializes an empty state directory)");
  srv->add_option("--config", se.config, "Learner config JSON");
  srv->add_option("--port", se.port, "TCP port, 0 for any free one")->check(CLI::Range(0, 65535));
  srv->add_option("--www", se.www, "Static files to serve at /");

  std::string manifest, rerun_out;
  auto* rer = app.add_subcommand("rerun", "Repeat a run from its manifest");
  rer->add_option("manifest", manifest, "manifest.json of an earlier run")->required();
  rer->add_option("--out", rerun_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? kOk : kInputError;
  }

  try {
    if (*eval) return cmd_eval(ev, out);
    if (*tun) return cmd_tune(tu, out);
    if (*syn) return cmd_synth(sy, out);
    if (*rep) return cmd_report(re, out);
    if (*srv) return cmd_serve(se, out);
    if (*rer) return cmd_rerun(manifest, rerun_out, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kInternalError;
  }
  return kInternalError;
}

}  // namespace sdl::cli
