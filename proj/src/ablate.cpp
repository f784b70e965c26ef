#include "dcdm/ablate.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "dcdm/svg.hpp"

namespace dcdm {

namespace {

std::string format_row(const AblationRow& r) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%s,%lld,%.17g,%.17g", r.label.c_str(),
                r.steps, r.final_nelbo, r.final_violation);
  return buf;
}

}  // namespace

MetricsCurve read_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open metrics file: " + path);
  MetricsCurve curve;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (header) {  // "step,nelbo,aux,violation,lr,seconds"
      header = false;
      continue;
    }
    std::istringstream row(line);
    std::string field;
    std::vector<double> vals;
    while (std::getline(row, field, ',')) vals.push_back(std::stod(field));
    if (vals.size() != 6) {
      throw std::runtime_error("malformed metrics row in " + path + ": " + line);
    }
    curve.step.push_back(vals[0]);
    curve.nelbo.push_back(vals[1]);
    curve.aux.push_back(vals[2]);
    curve.violation.push_back(vals[3]);
    curve.lr.push_back(vals[4]);
  }
  if (curve.step.empty()) throw std::runtime_error("empty metrics file: " + path);
  return curve;
}

std::string metrics_chart(const std::vector<std::string>& labels,
                          const std::vector<MetricsCurve>& curves) {
  if (labels.size() != curves.size()) {
    throw std::invalid_argument("metrics_chart: labels and curves disagree");
  }
  Panel loss, violation;
  loss.title = "training loss";
  loss.x_label = "step";
  loss.y_label = "nelbo";
  violation.title = "load balance violation";
  violation.x_label = "step";
  violation.y_label = "violation";
  for (std::size_t i = 0; i < curves.size(); ++i) {
    Series s;
    s.label = labels[i];
    s.x = curves[i].step;
    s.y = curves[i].nelbo;
    loss.series.push_back(s);
    s.y = curves[i].violation;
    violation.series.push_back(s);
  }
  return render_line_chart({loss, violation});
}

AblationResult run_ablation(const std::vector<AblationMember>& members,
                            const std::string& key_name,
                            const std::string& out_dir, std::uint64_t seed) {
  if (members.empty()) throw std::invalid_argument("ablation needs at least one member");
  if (key_name.empty()) throw std::invalid_argument("ablation key name is empty");
  std::unordered_set<std::string> seen;
  for (const auto& m : members) {
    if (m.label.empty() || m.label.find('/') != std::string::npos) {
      throw std::invalid_argument("bad ablation label: '" + m.label + "'");
    }
    if (!seen.insert(m.label).second) {
      throw std::invalid_argument("duplicate ablation label: " + m.label);
    }
    m.cfg.validate();
  }

  std::filesystem::create_directories(out_dir + "/plots");

  AblationResult result;
  std::vector<std::string> labels;
  std::vector<MetricsCurve> curves;
  for (const auto& m : members) {
    TrainResult tr = train(m.cfg, out_dir + "/" + m.label, seed);
    result.rows.push_back({m.label, tr.opt_steps, tr.final_nelbo, tr.final_violation});
    labels.push_back(key_name + "=" + m.label);
    curves.push_back(read_metrics_csv(tr.metrics_path));
  }

  result.csv_path = out_dir + "/summary.csv";
  {
    std::ofstream out(result.csv_path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + result.csv_path);
    out << key_name << ",steps,final_nelbo,final_violation\n";
    for (const auto& r : result.rows) out << format_row(r) << "\n";
  }

  result.svg_path = out_dir + "/plots/curves.svg";
  write_svg(result.svg_path, metrics_chart(labels, curves));
  return result;
}

}  // namespace dcdm
