#ifndef DTLAB_REPORT_HPP
#define DTLAB_REPORT_HPP

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace dtlab {

// Long-format analysis output; one row per (metric, layer/block, value).
struct MetricRow {
  std::string metric;
  std::string model_tag;
  std::string layer_or_block;
  std::string token_type;
  int epoch = -1;
  double value = 0.0;
  int n_samples = 0;
  std::uint64_t seed = 0;
};

struct MetricReport {
  std::vector<MetricRow> rows;

  void add(MetricRow row) { rows.push_back(std::move(row)); }
  void append(const MetricReport& other);

  // CSV columns: metric,model_tag,layer_or_block,token_type,epoch,value,
  // n_samples,seed. Lines starting with '#' are comments.
  void write_csv(const std::filesystem::path& path,
                 const std::string& header_comment = "") const;
  static MetricReport read_csv(const std::filesystem::path& path);

  nlohmann::json to_json() const;
};

std::string format_value(double v);

}  // namespace dtlab

#endif
