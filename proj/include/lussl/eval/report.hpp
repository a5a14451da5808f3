#pragma once

#include <compare>
#include <cstdio>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "lussl/core/error.hpp"
#include "lussl/data/dataset.hpp"
#include "lussl/eval/metrics.hpp"
#include "lussl/nnet/bundle.hpp"
#include "lussl/supervised/protocol.hpp"

namespace lussl::eval {

/// One (task, pretraining, protocol, test set) result.
struct CellKey {
  Task task = Task::view;
  std::string pretraining;
  std::string protocol;
  std::string dataset;
  auto operator<=>(const CellKey&) const = default;
};

struct CellMetrics {
  double auc = 0.0;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> specificity;
  std::size_t n = 0;
};

/// A mean-row entry: geometric mean of per-task AUCs.
struct MeanKey {
  std::string pretraining;
  std::string protocol;
  std::string dataset;
  auto operator<=>(const MeanKey&) const = default;
};

/// Axis order of the rendered table.
struct ReportLayout {
  std::vector<Task> tasks{Task::view, Task::ab, Task::pe};
  std::vector<std::string> pretrainings;
  std::vector<std::string> protocols{"LC", "FT", "NC"};
  std::vector<std::string> datasets{"local"};
};

struct EvalReport {
  ReportLayout layout;
  std::map<CellKey, CellMetrics> cells;
  std::map<MeanKey, double> means;
  std::map<std::string, std::string> provenance;
};

/// AUC plus precision/recall/specificity at the 0.5 operating point.
inline CellMetrics evaluate_scores(const std::vector<double>& probabilities, const std::vector<int>& labels) {
  CellMetrics m;
  m.auc = auc(probabilities, labels);
  const auto t = threshold_metrics(probabilities, labels, 0.5);
  m.precision = t.precision;
  m.recall = t.recall;
  m.specificity = t.specificity;
  m.n = labels.size();
  return m;
}

inline CellMetrics evaluate_cell(const nn::ModelBundle<float>& bundle, Task task, const Dataset& test) {
  const Dataset labelled = test.labelled(task);
  return evaluate_scores(supervised::predict_probabilities(bundle, task, labelled), supervised::task_labels(labelled, task));
}

inline std::string describe(const CellKey& k) {
  return std::string(task_name(k.task)) + "/" + k.pretraining + "/" + k.protocol + "/" + k.dataset;
}

/// Assembles the table for `layout`; every requested cell must be present.
inline EvalReport build_report(const std::map<CellKey, CellMetrics>& cells, const ReportLayout& layout) {
  EvalReport report;
  report.layout = layout;
  std::vector<std::string> missing;
  for (const auto& pre : layout.pretrainings)
    for (const auto& proto : layout.protocols)
      for (const auto& ds : layout.datasets) {
        std::vector<double> aucs;
        for (Task t : layout.tasks) {
          const CellKey key{t, pre, proto, ds};
          const auto it = cells.find(key);
          if (it == cells.end()) {
            missing.push_back(describe(key));
            continue;
          }
          if (!(it->second.auc >= 0.0 && it->second.auc <= 1.0))
            throw DataError("report cell " + describe(key) + " has AUC outside [0,1]");
          report.cells[key] = it->second;
          aucs.push_back(it->second.auc);
        }
        if (aucs.size() == layout.tasks.size()) report.means[{pre, proto, ds}] = geometric_mean(aucs);
      }
  if (!missing.empty()) {
    std::string msg = "report is missing " + std::to_string(missing.size()) + " cell(s):";
    for (const auto& m : missing) msg += " " + m;
    throw DataError(msg);
  }
  return report;
}

/// Text table: one row per (task, pretraining), one column per (dataset,
/// protocol), followed by the geometric-mean rows.
inline std::string render_table(const EvalReport& r) {
  std::ostringstream out;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%-6s %-14s", "Task", "Pretraining");
  out << buf;
  for (const auto& ds : r.layout.datasets)
    for (const auto& proto : r.layout.protocols) {
      std::snprintf(buf, sizeof buf, " %10s", (ds + ":" + proto).c_str());
      out << buf;
    }
  out << '\n';
  auto row = [&](const std::string& label, const std::string& pre, auto value_of) {
    std::snprintf(buf, sizeof buf, "%-6s %-14s", label.c_str(), pre.c_str());
    out << buf;
    for (const auto& ds : r.layout.datasets)
      for (const auto& proto : r.layout.protocols) {
        std::snprintf(buf, sizeof buf, " %10.3f", value_of(ds, proto));
        out << buf;
      }
    out << '\n';
  };
  for (Task t : r.layout.tasks)
    for (const auto& pre : r.layout.pretrainings)
      row(std::string(task_name(t)), pre,
          [&](const std::string& ds, const std::string& proto) { return r.cells.at({t, pre, proto, ds}).auc; });
  for (const auto& pre : r.layout.pretrainings)
    row("Mean", pre, [&](const std::string& ds, const std::string& proto) { return r.means.at({pre, proto, ds}); });
  return out.str();
}

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& [k, m] : r.cells) {
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json("n/a"); };
    cells.push_back({{"task", task_name(k.task)},
                     {"pretraining", k.pretraining},
                     {"protocol", k.protocol},
                     {"dataset", k.dataset},
                     {"auc", m.auc},
                     {"precision", opt(m.precision)},
                     {"recall", opt(m.recall)},
                     {"specificity", opt(m.specificity)},
                     {"n", m.n}});
  }
  nlohmann::json means = nlohmann::json::array();
  for (const auto& [k, v] : r.means)
    means.push_back({{"pretraining", k.pretraining}, {"protocol", k.protocol}, {"dataset", k.dataset}, {"geometric_mean_auc", v}});
  return {{"cells", cells}, {"means", means}, {"provenance", r.provenance}};
}

/// Reads cells from `{"cells": [{"task", "pretraining", "protocol", "dataset", "auc", ...}]}`.
inline std::map<CellKey, CellMetrics> cells_from_json(const nlohmann::json& j) {
  std::map<CellKey, CellMetrics> out;
  for (const auto& c : j.at("cells")) {
    CellKey key{parse_task(c.at("task").get<std::string>()), c.at("pretraining").get<std::string>(),
                c.at("protocol").get<std::string>(), c.value("dataset", std::string("local"))};
    CellMetrics m;
    m.auc = c.at("auc").get<double>();
    auto opt = [&](const char* name) -> std::optional<double> {
      if (!c.contains(name) || !c.at(name).is_number()) return std::nullopt;
      return c.at(name).get<double>();
    };
    m.precision = opt("precision");
    m.recall = opt("recall");
    m.specificity = opt("specificity");
    m.n = c.value("n", std::size_t{0});
    if (!out.emplace(key, m).second) throw DataError("duplicate report cell " + describe(key));
  }
  return out;
}

/// Layout whose axes are the distinct values found in `cells`, in first-seen order.
inline ReportLayout layout_from_json(const nlohmann::json& j) {
  ReportLayout layout;
  layout.tasks.clear();
  layout.protocols.clear();
  layout.datasets.clear();
  auto add = [](auto& v, const auto& x) {
    if (std::find(v.begin(), v.end(), x) == v.end()) v.push_back(x);
  };
  for (const auto& c : j.at("cells")) {
    add(layout.tasks, parse_task(c.at("task").get<std::string>()));
    add(layout.pretrainings, c.at("pretraining").get<std::string>());
    add(layout.protocols, c.at("protocol").get<std::string>());
    add(layout.datasets, c.value("dataset", std::string("local")));
  }
  return layout;
}

}  // namespace lussl::eval
