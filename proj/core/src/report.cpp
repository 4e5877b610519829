#include "dtlab/report.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dtlab {

void MetricReport::append(const MetricReport& other) {
  rows.insert(rows.end(), other.rows.begin(), other.rows.end());
}

std::string format_value(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return std::string(buf);
}

void MetricReport::write_csv(const std::filesystem::path& path,
                             const std::string& header_comment) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  if (!header_comment.empty()) out << "# " << header_comment << "\n";
  out << "metric,model_tag,layer_or_block,token_type,epoch,value,n_samples,seed\n";
  for (const auto& r : rows) {
    out << r.metric << ',' << r.model_tag << ',' << r.layer_or_block << ','
        << r.token_type << ',' << r.epoch << ',' << format_value(r.value) << ','
        << r.n_samples << ',' << r.seed << '\n';
  }
}

MetricReport MetricReport::read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  MetricReport report;
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {  // column header
      header_seen = true;
      continue;
    }
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 8)
      throw std::runtime_error("malformed report row in " + path.string());
    MetricRow row;
    row.metric = fields[0];
    row.model_tag = fields[1];
    row.layer_or_block = fields[2];
    row.token_type = fields[3];
    row.epoch = std::stoi(fields[4]);
    row.value = std::stod(fields[5]);
    row.n_samples = std::stoi(fields[6]);
    row.seed = std::stoull(fields[7]);
    report.rows.push_back(std::move(row));
  }
  return report;
}

nlohmann::json MetricReport::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows) {
    arr.push_back(nlohmann::json{{"metric", r.metric},
                                 {"model_tag", r.model_tag},
                                 {"layer_or_block", r.layer_or_block},
                                 {"token_type", r.token_type},
                                 {"epoch", r.epoch},
                                 {"value", r.value},
                                 {"n_samples", r.n_samples},
                                 {"seed", r.seed}});
  }
  return arr;
}

}  // namespace dtlab
