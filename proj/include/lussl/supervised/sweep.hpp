#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "lussl/data/dataset.hpp"
#include "lussl/eval/metrics.hpp"
#include "lussl/eval/report.hpp"
#include "lussl/supervised/protocol.hpp"

namespace lussl::supervised {

/// Shared settings of a label-efficiency sweep; each cell overrides
/// protocol, task, fraction and seed.
struct SweepConfig {
  std::vector<double> fractions{0.01, 0.1, 0.5, 1.0};
  std::vector<Task> tasks{Task::view, Task::ab, Task::pe};
  std::vector<Protocol> protocols{Protocol::FT, Protocol::NC};
  std::vector<std::uint64_t> seeds{0};
  ProtocolConfig base{};
};

struct SweepCell {
  std::string source;  ///< "pretrained" or "scratch"
  Protocol protocol = Protocol::FT;
  Task task = Task::view;
  double fraction = 1.0;
  std::uint64_t seed = 0;
  TrainRun run;
  eval::CellMetrics test;
};

struct SweepGrid {
  std::vector<SweepCell> cells;

  /// Mean test AUC over seeds for one (source, protocol, task, fraction).
  double mean_auc(const std::string& source, Protocol p, Task t, double fraction) const {
    double sum = 0.0;
    int n = 0;
    for (const auto& c : cells)
      if (c.source == source && c.protocol == p && c.task == t && c.fraction == fraction) {
        sum += c.test.auc;
        ++n;
      }
    if (n == 0) throw DataError("sweep grid has no cell for " + source + "/" + std::string(protocol_name(p)) + "/" +
                                std::string(task_name(t)));
    return sum / n;
  }
};

using SweepProgress = std::function<void(const SweepCell&)>;

/// Executes the Cartesian product sources x protocols x tasks x fractions x seeds.
inline SweepGrid run_label_efficiency_sweep(const std::map<std::string, nn::ModelBundle<float>>& sources,
                                            const Dataset& train, const Dataset& val, const Dataset& test,
                                            const SweepConfig& cfg, const SweepProgress& progress = {}) {
  SweepGrid grid;
  for (const auto& [name, bundle] : sources)
    for (Protocol p : cfg.protocols)
      for (Task t : cfg.tasks)
        for (double f : cfg.fractions)
          for (std::uint64_t seed : cfg.seeds) {
            ProtocolConfig pc = cfg.base;
            pc.protocol = p;
            pc.task = t;
            pc.label_fraction = f;
            pc.seed = seed;
            SweepCell cell;
            cell.source = name;
            cell.protocol = p;
            cell.task = t;
            cell.fraction = f;
            cell.seed = seed;
            cell.run = train_protocol(bundle, train, val, pc);
            cell.test = eval::evaluate_cell(cell.run.bundle, t, test);
            if (progress) progress(cell);
            grid.cells.push_back(std::move(cell));
          }
  return grid;
}

}  // namespace lussl::supervised
