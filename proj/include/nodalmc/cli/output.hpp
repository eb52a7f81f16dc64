#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "nodalmc/statistics.hpp"

namespace nodalmc::cli {

struct ResultRecord {
  std::string quantity;
  std::vector<double> value;
  std::vector<double> std_error;
  std::vector<double> covariance;  //!< row-major p×p, may be empty
  double n_effective = 0.0;
  std::uint64_t seed = 0;
  std::string config_digest;
  double walltime_s = 0.0;
  std::map<std::string, std::string> metadata;
};

inline ResultRecord make_record(std::string quantity, const EstimateWithError& e) {
  ResultRecord r;
  r.quantity = std::move(quantity);
  r.value = e.value;
  r.std_error = e.std_error;
  r.covariance = e.covariance;
  r.n_effective = e.n_effective;
  r.metadata = e.metadata;
  if (!e.method.empty()) r.metadata["method"] = e.method;
  for (std::size_t i = 0; i < e.warnings.size(); ++i) r.metadata["warning" + std::to_string(i)] = e.warnings[i];
  return r;
}

inline ResultRecord make_record(std::string quantity, double value, double err = 0.0, double n_eff = 0.0) {
  return make_record(std::move(quantity), EstimateWithError::scalar_estimate(value, err, n_eff, ""));
}

inline std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

//! One line per scalar; vector records expand to name[i] rows.
inline std::string render_csv(const std::vector<ResultRecord>& records) {
  std::ostringstream os;
  os << "quantity,value,stderr,n_eff,seed,config_digest,walltime_s\n";
  for (const auto& r : records) {
    for (std::size_t i = 0; i < r.value.size(); ++i) {
      const std::string name = r.value.size() == 1 ? r.quantity : r.quantity + "[" + std::to_string(i) + "]";
      os << csv_field(name) << ',' << format_number(r.value[i]) << ',' << format_number(i < r.std_error.size() ? r.std_error[i] : 0.0)
         << ',' << format_number(r.n_effective) << ',' << r.seed << ',' << r.config_digest << ',' << format_number(r.walltime_s) << '\n';
    }
  }
  return os.str();
}

inline std::string render_json(const std::vector<ResultRecord>& records) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["quantity"] = r.quantity;
    j["value"] = r.value;
    j["stderr"] = r.std_error;
    const std::size_t p = r.value.size();
    nlohmann::ordered_json cov = nlohmann::ordered_json::array();
    if (r.covariance.size() == p * p)
      for (std::size_t i = 0; i < p; ++i)
        cov.push_back(std::vector<double>(r.covariance.begin() + static_cast<std::ptrdiff_t>(i * p),
                                          r.covariance.begin() + static_cast<std::ptrdiff_t>((i + 1) * p)));
    j["covariance"] = cov;
    j["n_eff"] = r.n_effective;
    j["seed"] = r.seed;
    j["config_digest"] = r.config_digest;
    j["walltime_s"] = r.walltime_s;
    j["metadata"] = r.metadata;
    arr.push_back(j);
  }
  nlohmann::ordered_json root;
  root["records"] = arr;
  return root.dump(2) + "\n";
}

enum class OutputFormat { csv, json };

inline void write_outputs(const std::vector<ResultRecord>& records, OutputFormat format, const std::string& path) {
  if (records.empty()) throw UsageError("no records to write");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << (format == OutputFormat::csv ? render_csv(records) : render_json(records));
  if (!out) throw IoError("failed writing " + path);
}

}  // namespace nodalmc::cli
