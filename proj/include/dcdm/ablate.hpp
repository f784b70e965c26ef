#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dcdm/config.hpp"
#include "dcdm/trainer.hpp"

namespace dcdm {

struct AblationMember {
  std::string label;  // subdirectory name, csv key value, and series label
  RunConfig cfg;
};

struct AblationRow {
  std::string label;
  long long steps = 0;
  double final_nelbo = 0.0;
  double final_violation = 0.0;
};

struct AblationResult {
  std::vector<AblationRow> rows;
  std::string csv_path;
  std::string svg_path;
};

struct MetricsCurve {
  std::vector<double> step, nelbo, aux, violation, lr;
};

// Parses a training metrics csv back into columns (seconds dropped).
MetricsCurve read_metrics_csv(const std::string& path);

// Two-panel chart (loss and violation over steps) from labeled curves.
std::string metrics_chart(const std::vector<std::string>& labels,
                          const std::vector<MetricsCurve>& curves);

// Trains every member into out_dir/<label>/ with the same seed, then writes
// out_dir/summary.csv (header "<key_name>,steps,final_nelbo,final_violation")
// and out_dir/plots/curves.svg with a loss panel and a violation panel, one
// series per member read back from each run's metrics.
AblationResult run_ablation(const std::vector<AblationMember>& members,
                            const std::string& key_name,
                            const std::string& out_dir, std::uint64_t seed);

}  // namespace dcdm
