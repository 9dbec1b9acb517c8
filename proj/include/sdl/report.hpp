#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdl/error.hpp"
#include "sdl/evaluator.hpp"
#include "sdl/learner.hpp"
#include "sdl/network.hpp"

namespace sdl {

// Shortest decimal text that reads back to the same double.
inline std::string fmt_num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

struct CurveRow {
  int bin = 0;
  double value = 0.0;
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
  double b = 0.0;
  double c = 0.0;
  std::int64_t fixed = 0;
  bool operator==(const CurveRow&) const = default;
};

struct ParamView {
  std::string id;
  ParamSpec before;
  ParamSpec after;
  std::vector<CurveRow> rows;
  std::optional<ValueProposal> value;
  std::optional<ToleranceProposal> tolerance;
  bool vetoed = false;
  bool applied = false;
  std::string rejected;
};

// What reports render: a round's learner output with no live objects.
struct RoundView {
  int round = 0;
  OutcomeCounts before;
  OutcomeCounts after;
  double error_before = 0.0;
  double error_after = 0.0;
  std::vector<ParamView> params;
};

inline ParamView view_of(const ParamReport& r) {
  ParamView v;
  v.id = r.id;
  v.before = r.before;
  v.after = r.after;
  v.value = r.value;
  v.tolerance = r.tolerance;
  v.vetoed = r.vetoed;
  v.applied = r.applied;
  v.rejected = r.rejected;
  const BinGrid& g = r.curve.grid;
  for (int k = g.min_bin(); k <= g.max_bin(); ++k) {
    CurveRow row;
    row.bin = k;
    row.value = g.value_at(k);
    row.tp = r.histogram.at(r.histogram.tp, k);
    row.fp = r.histogram.at(r.histogram.fp, k);
    row.fn = r.histogram.at(r.histogram.fn, k);
    row.tn = r.histogram.at(r.histogram.tn, k);
    row.b = r.curve.b(k);
    row.c = r.curve.c(k);
    row.fixed = r.curve.fixed_at(k);
    v.rows.push_back(row);
  }
  return v;
}

inline RoundView view_of(const RoundReport& r) {
  RoundView v;
  v.round = r.round;
  v.before = r.before;
  v.after = r.after;
  v.error_before = r.error_before;
  v.error_after = r.error_after;
  for (const auto& p : r.params) v.params.push_back(view_of(p));
  return v;
}

namespace detail {

inline nlohmann::ordered_json counts_json(const OutcomeCounts& c) {
  return {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"tn", c.tn}};
}

inline OutcomeCounts counts_from(const nlohmann::ordered_json& j) {
  OutcomeCounts c;
  c.tp = j.at("tp").get<std::int64_t>();
  c.fp = j.at("fp").get<std::int64_t>();
  c.fn = j.at("fn").get<std::int64_t>();
  c.tn = j.at("tn").get<std::int64_t>();
  return c;
}

inline nlohmann::ordered_json opt_int(const std::optional<int>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

inline std::optional<int> int_from(const nlohmann::ordered_json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<int>();
}

}  // namespace detail

inline nlohmann::ordered_json param_view_to_json(const ParamView& v) {
  nlohmann::ordered_json j;
  j["id"] = v.id;
  j["before"] = param_to_json(v.before);
  j["after"] = param_to_json(v.after);
  if (v.value)
    j["proposal"] = {{"bin", v.value->bin},
                     {"value", v.value->value},
                     {"benefit", v.value->benefit},
                     {"fixed", v.value->fixed}};
  else
    j["proposal"] = nullptr;
  if (v.tolerance)
    j["tolerance"] = {{"peak", v.tolerance->peak},
                      {"drop_neg", detail::opt_int(v.tolerance->drop_neg)},
                      {"drop_pos", detail::opt_int(v.tolerance->drop_pos)},
                      {"tol_neg", v.tolerance->tol_neg},
                      {"tol_pos", v.tolerance->tol_pos}};
  else
    j["tolerance"] = nullptr;
  j["vetoed"] = v.vetoed;
  j["applied"] = v.applied;
  j["rejected"] = v.rejected;
  auto rows = nlohmann::ordered_json::array();
  for (const auto& r : v.rows)
    rows.push_back({r.bin, r.value, r.tp, r.fp, r.fn, r.tn, r.b, r.c, r.fixed});
  j["curve_columns"] = {"bin", "value", "tp", "fp", "fn", "tn", "b", "c", "fixed"};
  j["curve"] = std::move(rows);
  return j;
}

inline ParamView param_view_from_json(const nlohmann::ordered_json& j) {
  ParamView v;
  v.id = j.at("id").get<std::string>();
  v.before = detail::parse_param(v.id, j.at("before"));
  v.after = detail::parse_param(v.id, j.at("after"));
  if (const auto& p = j.at("proposal"); !p.is_null())
    v.value = ValueProposal{p.at("bin").get<int>(), p.at("value").get<double>(), p.at("benefit").get<double>(),
                            p.at("fixed").get<std::int64_t>()};
  if (const auto& t = j.at("tolerance"); !t.is_null())
    v.tolerance = ToleranceProposal{t.at("peak").get<int>(), detail::int_from(t.at("drop_neg")),
                                    detail::int_from(t.at("drop_pos")), t.at("tol_neg").get<double>(),
                                    t.at("tol_pos").get<double>()};
  v.vetoed = j.at("vetoed").get<bool>();
  v.applied = j.at("applied").get<bool>();
  v.rejected = j.at("rejected").get<std::string>();
  for (const auto& r : j.at("curve")) {
    if (!r.is_array() || r.size() != 9) throw InputError("round report: curve rows need 9 columns");
    v.rows.push_back({r[0].get<int>(), r[1].get<double>(), r[2].get<std::int64_t>(), r[3].get<std::int64_t>(),
                      r[4].get<std::int64_t>(), r[5].get<std::int64_t>(), r[6].get<double>(), r[7].get<double>(),
                      r[8].get<std::int64_t>()});
  }
  return v;
}

inline nlohmann::ordered_json round_view_to_json(const RoundView& v) {
  nlohmann::ordered_json j;
  j["round"] = v.round;
  j["before"] = detail::counts_json(v.before);
  j["after"] = detail::counts_json(v.after);
  j["error_before"] = v.error_before;
  j["error_after"] = v.error_after;
  auto params = nlohmann::ordered_json::array();
  for (const auto& p : v.params) params.push_back(param_view_to_json(p));
  j["params"] = std::move(params);
  return j;
}

inline RoundView round_view_from_json(const nlohmann::ordered_json& j) {
  RoundView v;
  try {
    v.round = j.at("round").get<int>();
    v.before = detail::counts_from(j.at("before"));
    v.after = detail::counts_from(j.at("after"));
    v.error_before = j.at("error_before").get<double>();
    v.error_after = j.at("error_after").get<double>();
    for (const auto& p : j.at("params")) v.params.push_back(param_view_from_json(p));
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("round report: ") + e.what());
  } catch (const ConfigError& e) {
    throw InputError(std::string("round report: ") + e.what());
  }
  return v;
}

// CSV writers. Numbers use the shortest round-trip form.

inline void write_curve_csv(std::ostream& out, const ParamView& v) {
  out << "bin,value,tp,fp,fn,tn,b,c,fixed\n";
  for (const auto& r : v.rows)
    out << r.bin << ',' << fmt_num(r.value) << ',' << r.tp << ',' << r.fp << ',' << r.fn << ',' << r.tn << ','
        << fmt_num(r.b) << ',' << fmt_num(r.c) << ',' << r.fixed << '\n';
}

inline void write_summary_csv(std::ostream& out, const RoundView& v) {
  out << "param,old_value,new_value,predicted_benefit,fixed,old_tol_neg,old_tol_pos,new_tol_neg,new_tol_pos,"
         "proposed_value,proposed_tol_neg,proposed_tol_pos,vetoed,applied,rejected\n";
  for (const auto& p : v.params) {
    out << p.id << ',' << fmt_num(p.before.value) << ',' << fmt_num(p.after.value) << ','
        << (p.value ? fmt_num(p.value->benefit) : "0") << ',' << (p.value ? p.value->fixed : 0) << ','
        << fmt_num(p.before.tol_neg) << ',' << fmt_num(p.before.tol_pos) << ',' << fmt_num(p.after.tol_neg) << ','
        << fmt_num(p.after.tol_pos) << ',' << (p.value ? fmt_num(p.value->value) : "") << ','
        << (p.tolerance ? fmt_num(p.tolerance->tol_neg) : "") << ','
        << (p.tolerance ? fmt_num(p.tolerance->tol_pos) : "") << ',' << (p.vetoed ? 1 : 0) << ','
        << (p.applied ? 1 : 0) << ',' << p.rejected << '\n';
  }
}

inline void write_log_csv(std::ostream& out, const DecisionLog& log) {
  out << "frame_id,decision,label,class,suspect_param,alternate,margin\n";
  for (const auto& e : log.entries) {
    out << e.frame_id << ',' << (e.decision ? 1 : 0) << ',' << (e.label ? 1 : 0) << ',' << to_string(e.outcome)
        << ',';
    if (e.attribution)
      out << e.attribution->param << ',' << fmt_num(e.attribution->alternate) << ','
          << fmt_num(e.attribution->margin);
    else
      out << ",,";
    out << '\n';
  }
}

// Error counts, weighted error and rates per 1000 frames.
inline nlohmann::ordered_json log_summary(const OutcomeCounts& c, const ClassWeights& w) {
  const double per = c.total() > 0 ? 1000.0 / static_cast<double>(c.total()) : 0.0;
  nlohmann::ordered_json j;
  j["frames"] = c.total();
  j["tp"] = c.tp;
  j["fp"] = c.fp;
  j["fn"] = c.fn;
  j["tn"] = c.tn;
  j["errors"] = c.errors();
  j["weighted_error"] = c.weighted_error(w);
  j["w_fp"] = w.w_fp;
  j["w_fn"] = w.w_fn;
  j["fp_per_1000"] = static_cast<double>(c.fp) * per;
  j["fn_per_1000"] = static_cast<double>(c.fn) * per;
  j["errors_per_1000"] = static_cast<double>(c.errors()) * per;
  return j;
}

// Benefit-curve plot: bars for B, a line for C, and markers for the origin,
// the peak of C, the proposed value and the proposed band edges.
inline std::string curve_svg(const ParamView& v) {
  constexpr double W = 640, H = 320, L = 60, R = 20, T = 30, B = 40;
  std::ostringstream s;
  auto f = [](double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", x);
    return std::string(buf);
  };
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
    << ' ' << H << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << L << "\" y=\"18\" font-family=\"sans-serif\" font-size=\"13\">" << v.id << " = "
    << fmt_num(v.before.value) << "</text>\n";

  double xlo = v.before.value - v.before.tol_neg, xhi = v.before.value + v.before.tol_pos;
  for (const auto& r : v.rows) {
    xlo = std::min(xlo, r.value);
    xhi = std::max(xhi, r.value);
  }
  if (!(xhi > xlo)) xhi = xlo + 1;
  double ylo = 0, yhi = 0;
  for (const auto& r : v.rows) {
    ylo = std::min({ylo, r.b, r.c});
    yhi = std::max({yhi, r.b, r.c});
  }
  const bool flat = ylo == yhi;
  if (flat) {
    ylo = -1;
    yhi = 1;
  }
  auto px = [&](double x) { return L + (x - xlo) / (xhi - xlo) * (W - L - R); };
  auto py = [&](double y) { return T + (yhi - y) / (yhi - ylo) * (H - T - B); };

  s << "<line x1=\"" << L << "\" y1=\"" << f(py(0)) << "\" x2=\"" << W - R << "\" y2=\"" << f(py(0))
    << "\" stroke=\"#888\"/>\n";
  s << "<text x=\"" << L << "\" y=\"" << H - 12 << "\" font-family=\"sans-serif\" font-size=\"11\">" << fmt_num(xlo)
    << "</text>\n";
  s << "<text x=\"" << W - R << "\" y=\"" << H - 12
    << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">" << fmt_num(xhi) << "</text>\n";
  s << "<text x=\"" << L - 6 << "\" y=\"" << f(py(yhi) + 4)
    << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">" << fmt_num(yhi) << "</text>\n";
  s << "<text x=\"" << L - 6 << "\" y=\"" << f(py(ylo) + 4)
    << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">" << fmt_num(ylo) << "</text>\n";

  // Origin bracket.
  const double ox = px(v.before.value);
  s << "<line class=\"origin\" x1=\"" << f(ox) << "\" y1=\"" << T << "\" x2=\"" << f(ox) << "\" y2=\"" << H - B
    << "\" stroke=\"#444\" stroke-dasharray=\"4 3\"/>\n";

  if (flat) {
    s << "<polyline class=\"c\" fill=\"none\" stroke=\"#1f77b4\" points=\"" << f(px(xlo)) << ',' << f(py(0)) << ' '
      << f(px(xhi)) << ',' << f(py(0)) << "\"/>\n";
    s << "<text x=\"" << f(W / 2) << "\" y=\"" << f(T + 20)
      << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">no defeasible events</text>\n";
    s << "</svg>\n";
    return s.str();
  }

  const double bar = std::max(1.0, (W - L - R) / static_cast<double>(v.rows.size() + 1) * 0.8);
  for (const auto& r : v.rows) {
    if (r.b == 0) continue;
    double y0 = py(0), y1 = py(r.b);
    s << "<rect class=\"b\" x=\"" << f(px(r.value) - bar / 2) << "\" y=\"" << f(std::min(y0, y1)) << "\" width=\""
      << f(bar) << "\" height=\"" << f(std::abs(y1 - y0)) << "\" fill=\"" << (r.b > 0 ? "#2ca02c" : "#d62728")
      << "\" opacity=\"0.6\"/>\n";
  }

  std::vector<std::pair<double, double>> pts;
  for (const auto& r : v.rows) pts.emplace_back(r.value, r.c);
  s << "<polyline class=\"c\" fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"";
  for (std::size_t i = 0; i < pts.size(); ++i)
    s << (i ? " " : "") << f(px(pts[i].first)) << ',' << f(py(pts[i].second));
  s << "\"/>\n";

  auto value_of = [&](int bin) -> std::optional<std::pair<double, double>> {
    for (const auto& r : v.rows)
      if (r.bin == bin) return std::make_pair(r.value, r.c);
    return std::nullopt;
  };
  // Peak: the tolerance proposal's when present, otherwise argmax C.
  std::optional<int> peak;
  if (v.tolerance) {
    peak = v.tolerance->peak;
  } else {
    double best = 0;
    for (const auto& r : v.rows)
      if (r.c > best) {
        best = r.c;
        peak = r.bin;
      }
  }
  if (peak)
    if (auto p = value_of(*peak))
      s << "<circle class=\"peak\" cx=\"" << f(px(p->first)) << "\" cy=\"" << f(py(p->second))
        << "\" r=\"5\" fill=\"#ff7f0e\"/>\n";
  if (v.value)
    s << "<line class=\"proposal\" x1=\"" << f(px(v.value->value)) << "\" y1=\"" << T << "\" x2=\""
      << f(px(v.value->value)) << "\" y2=\"" << H - B << "\" stroke=\"#d62728\" stroke-width=\"2\"/>\n";
  if (v.tolerance)
    for (const auto& d : {v.tolerance->drop_neg, v.tolerance->drop_pos})
      if (d)
        if (auto p = value_of(*d))
          s << "<line class=\"tolerance\" x1=\"" << f(px(p->first)) << "\" y1=\"" << T << "\" x2=\""
            << f(px(p->first)) << "\" y2=\"" << H - B << "\" stroke=\"#17becf\" stroke-dasharray=\"2 2\"/>\n";
  s << "</svg>\n";
  return s.str();
}

}  // namespace sdl
