#include "quickloc/calibrate.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <thread>

#include <json.hpp>

namespace quickloc {

namespace {

double err_metric(const ConfigReport& r) {
  return std::isfinite(r.error_m) ? r.error_m : 1.0 - r.accuracy;
}

// true when `a` beats `b` under the shared tie-break chain
bool tie_break_less(const ConfigReport& a, int ia, const ConfigReport& b, int ib) {
  if (a.enabled_count() != b.enabled_count())
    return a.enabled_count() < b.enabled_count();
  if (a.mean_ns != b.mean_ns) return a.mean_ns < b.mean_ns;
  return ia < ib;
}

}  // namespace

int ConfigReport::enabled_count() const {
  int n = 0;
  for (const auto& r : policy)
    if (r.enabled) ++n;
  return n;
}

ConfigSpace default_config_space(int exit_count, UncertaintyMethod method) {
  ExitGrid g;
  g.method = method;
  if (method == UncertaintyMethod::RatioOfConfidence)
    g.thetas = {1.5, 2.0, 3.0, 5.0, 10.0};
  else
    g.thetas = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  ConfigSpace space;
  space.per_exit.assign(exit_count, g);
  return space;
}

std::vector<ExitPolicy> enumerate_configs(const ConfigSpace& space) {
  const int n = static_cast<int>(space.per_exit.size());
  for (const auto& g : space.per_exit)
    for (double t : g.thetas) validate_theta(g.method, t);

  std::vector<ExitPolicy> configs;
  ExitPolicy off(n);
  for (int e = 0; e < n; ++e) {
    off[e].enabled = false;
    off[e].method = space.per_exit[e].method;
    off[e].theta = space.per_exit[e].method == UncertaintyMethod::RatioOfConfidence
                       ? 1.0
                       : 0.5;  // placeholder, never consulted while disabled
  }
  configs.push_back(off);

  for (unsigned mask = 1; mask < (1u << n); ++mask) {
    std::vector<int> on;
    for (int e = 0; e < n; ++e)
      if (mask & (1u << e)) {
        if (space.per_exit[e].thetas.empty())
          throw InvalidArgument("enumerate_configs: empty grid for enabled exit " +
                                std::to_string(e + 1));
        on.push_back(e);
      }
    std::vector<std::size_t> pick(on.size(), 0);
    while (true) {
      ExitPolicy p = off;
      for (std::size_t k = 0; k < on.size(); ++k) {
        p[on[k]].enabled = true;
        p[on[k]].theta = space.per_exit[on[k]].thetas[pick[k]];
      }
      configs.push_back(std::move(p));
      // odometer over the enabled exits' grids
      std::size_t k = 0;
      for (; k < on.size(); ++k) {
        if (++pick[k] < space.per_exit[on[k]].thetas.size()) break;
        pick[k] = 0;
      }
      if (k == on.size()) break;
    }
  }
  return configs;
}

std::uint64_t footprint_bytes(const MultiExitModel& m,
                              const std::vector<bool>& enabled) {
  if (enabled.size() != m.exits.size())
    throw InvalidArgument("footprint_bytes: switch count mismatch");
  std::int64_t params = baseline_params(m);
  for (std::size_t e = 0; e < enabled.size(); ++e)
    if (enabled[e]) params += branch_params(m, static_cast<int>(e));
  return static_cast<std::uint64_t>(params) * sizeof(Real);
}

ConfigReport evaluate_config(const MultiExitModel& m, const ExitPolicy& policy,
                             const LabeledDataset& calibration) {
  if (calibration.size() == 0)
    throw InvalidArgument("evaluate_config: empty calibration set");
  const EvalResult ev = evaluate_dataset(m, policy, calibration);
  ConfigReport r;
  r.policy = policy;
  r.accuracy = ev.accuracy;
  r.error_m = ev.error_m;
  r.mean_macs = ev.mean_macs;
  r.mean_ns = ev.mean_ns;
  r.exit_rates = ev.exit_rates;
  r.final_rate = ev.final_rate;
  std::vector<bool> enabled;
  for (const auto& rule : policy) enabled.push_back(rule.enabled);
  r.footprint_bytes = footprint_bytes(m, enabled);
  return r;
}

int select_config(const std::vector<ConfigReport>& reports,
                  const SelectionPolicy& policy, bool* feasible, bool* improved) {
  if (reports.empty()) throw InvalidArgument("select_config: no reports");
  const ConfigReport& base = reports.front();
  int best = -1;
  auto consider = [&](int i, auto better_than) {
    if (best < 0 || better_than(reports[i], i, reports[best], best)) best = i;
  };

  switch (policy.kind) {
    case SelectionKind::Default:
      for (int i = 0; i < static_cast<int>(reports.size()); ++i) {
        if (reports[i].accuracy < base.accuracy) continue;
        consider(i, [](const ConfigReport& a, int ia, const ConfigReport& b, int ib) {
          if (a.mean_macs != b.mean_macs) return a.mean_macs < b.mean_macs;
          return tie_break_less(a, ia, b, ib);
        });
      }
      break;
    case SelectionKind::LatencyTarget:
      for (int i = 0; i < static_cast<int>(reports.size()); ++i) {
        if (reports[i].mean_macs > policy.target) continue;
        consider(i, [](const ConfigReport& a, int ia, const ConfigReport& b, int ib) {
          if (err_metric(a) != err_metric(b)) return err_metric(a) < err_metric(b);
          if (a.mean_macs != b.mean_macs) return a.mean_macs < b.mean_macs;
          return tie_break_less(a, ia, b, ib);
        });
      }
      break;
    case SelectionKind::ErrorTarget:
      for (int i = 0; i < static_cast<int>(reports.size()); ++i) {
        if (err_metric(reports[i]) > policy.target) continue;
        consider(i, [](const ConfigReport& a, int ia, const ConfigReport& b, int ib) {
          if (a.mean_macs != b.mean_macs) return a.mean_macs < b.mean_macs;
          return tie_break_less(a, ia, b, ib);
        });
      }
      break;
  }

  const bool found = best >= 0;
  if (!found) best = 0;  // fall back to the all-off baseline
  if (feasible) *feasible = found;
  if (improved) *improved = found && reports[best].mean_macs < base.mean_macs;
  return best;
}

CalibrationResult calibrate_run(const MultiExitModel& m,
                                const LabeledDataset& calibration,
                                const ConfigSpace& space,
                                const SelectionPolicy& policy, bool parallel) {
  const auto configs = enumerate_configs(space);
  CalibrationResult result;
  result.reports.resize(configs.size());

  const unsigned workers =
      parallel ? std::max(1u, std::thread::hardware_concurrency()) : 1u;
  if (workers > 1 && configs.size() > 1) {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    std::exception_ptr first_error;
    std::mutex err_mu;
    for (unsigned t = 0; t < workers; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < configs.size();
             i = next.fetch_add(1)) {
          try {
            result.reports[i] = evaluate_config(m, configs[i], calibration);
          } catch (...) {
            std::lock_guard<std::mutex> lock(err_mu);
            if (!first_error) first_error = std::current_exception();
            return;
          }
        }
      });
    }
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
  } else {
    for (std::size_t i = 0; i < configs.size(); ++i)
      result.reports[i] = evaluate_config(m, configs[i], calibration);
  }

  result.selected =
      select_config(result.reports, policy, &result.feasible, &result.improved);
  return result;
}

namespace {

std::string switches_of(const ExitPolicy& p) {
  std::string s;
  for (const auto& r : p) s += r.enabled ? '1' : '0';
  return s;
}

nlohmann::json report_metrics_json(const ConfigReport& r) {
  nlohmann::json j;
  j["accuracy"] = r.accuracy;
  if (std::isfinite(r.error_m)) j["error_m"] = r.error_m;
  j["mean_macs"] = r.mean_macs;
  j["mean_ns"] = r.mean_ns;
  j["exit_rates"] = r.exit_rates;
  j["final_rate"] = r.final_rate;
  j["footprint_bytes"] = r.footprint_bytes;
  return j;
}

}  // namespace

void write_calibration_csv(const CalibrationResult& result, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw InvalidArgument("cannot write " + path);
  const std::size_t exits =
      result.reports.empty() ? 0 : result.reports.front().policy.size();
  f << "switches";
  for (std::size_t e = 0; e < exits; ++e) f << ",theta" << (e + 1);
  for (std::size_t e = 0; e < exits; ++e) f << ",method" << (e + 1);
  f << ",accuracy,error_m,mean_macs,mean_ns";
  for (std::size_t e = 0; e < exits; ++e) f << ",exit" << (e + 1) << "_rate";
  f << ",final_rate,footprint_bytes,selected\n";
  f.precision(10);
  for (std::size_t i = 0; i < result.reports.size(); ++i) {
    const auto& r = result.reports[i];
    f << switches_of(r.policy);
    for (const auto& rule : r.policy) {
      f << ',';
      if (rule.enabled) f << rule.theta;
    }
    for (const auto& rule : r.policy) f << ',' << method_name(rule.method);
    f << ',' << r.accuracy << ',';
    if (std::isfinite(r.error_m)) f << r.error_m;
    f << ',' << r.mean_macs << ',' << r.mean_ns;
    for (double rate : r.exit_rates) f << ',' << rate;
    f << ',' << r.final_rate << ',' << r.footprint_bytes << ','
      << (static_cast<int>(i) == result.selected ? 1 : 0) << '\n';
  }
}

void write_calibration_json(const CalibrationResult& result, const std::string& path) {
  const auto& sel = result.selected_report();
  nlohmann::json j;
  j["selected"] = {{"switches", switches_of(sel.policy)}};
  nlohmann::json rules = nlohmann::json::array();
  for (const auto& rule : sel.policy) {
    nlohmann::json jr;
    jr["enabled"] = rule.enabled;
    jr["method"] = method_name(rule.method);
    if (rule.enabled) jr["theta"] = rule.theta;
    rules.push_back(std::move(jr));
  }
  j["selected"]["exits"] = std::move(rules);
  j["selected"]["metrics"] = report_metrics_json(sel);
  j["baseline"] = report_metrics_json(result.baseline_report());
  j["feasible"] = result.feasible;
  j["improved"] = result.improved;
  j["configs_evaluated"] = result.reports.size();
  std::ofstream f(path);
  if (!f) throw InvalidArgument("cannot write " + path);
  f << j.dump(2) << '\n';
}

ExitPolicy load_policy_json(const std::string& path, int exit_count) {
  std::ifstream f(path);
  if (!f) throw ParseError("cannot open " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  const auto& rules = j.at("selected").at("exits");
  if (static_cast<int>(rules.size()) != exit_count)
    throw InvalidArgument(path + ": policy has " + std::to_string(rules.size()) +
                          " exits, model has " + std::to_string(exit_count));
  ExitPolicy p;
  for (const auto& jr : rules) {
    ExitRule rule;
    rule.enabled = jr.value("enabled", false);
    rule.method = method_from_name(jr.value("method", std::string("margin")));
    rule.theta = jr.value("theta", rule.method == UncertaintyMethod::RatioOfConfidence
                                       ? 1.0
                                       : 0.5);
    p.push_back(rule);
  }
  return p;
}

}  // namespace quickloc
