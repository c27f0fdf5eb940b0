#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tlmest/experiments.hpp"

// File formats: vector datasets as CSV (columns y,x1..xp), matrix datasets in
// a small binary tensor container with a 16-byte header, replication records
// in a fixed-schema CSV, and JSON summaries/manifests.

namespace tlmest {

namespace detail {

// Shortest representation that round-trips a double exactly.
inline std::string fmt_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  std::string s = os.str();
  double back = std::stod(s);
  if (back == v) {
    std::ostringstream shorter;
    for (int prec = 6; prec < 17; ++prec) {
      shorter.str("");
      shorter << std::setprecision(prec) << v;
      if (std::stod(shorter.str()) == v) return shorter.str();
    }
  }
  return s;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

inline std::ofstream open_out(const std::string& path, std::ios::openmode mode = {}) {
  std::ofstream f(path, mode);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  return f;
}

inline std::ifstream open_in(const std::string& path, std::ios::openmode mode = {}) {
  std::ifstream f(path, mode);
  if (!f) throw std::runtime_error("cannot open for reading: " + path);
  return f;
}

}  // namespace detail

// ---- vector datasets as CSV ---------------------------------------------

inline void write_dataset_csv(const std::string& path, const Dataset& d) {
  if (!d.vector_shape())
    throw std::invalid_argument("write_dataset_csv: vector-shaped datasets only");
  std::ofstream f = detail::open_out(path);
  f << "y";
  for (Eigen::Index j = 0; j < d.dim(); ++j) f << ",x" << (j + 1);
  f << "\n";
  for (Eigen::Index i = 0; i < d.n(); ++i) {
    f << detail::fmt_double(d.responses[i]);
    for (Eigen::Index j = 0; j < d.dim(); ++j)
      f << "," << detail::fmt_double(d.covariates(i, j));
    f << "\n";
  }
}

inline Dataset read_dataset_csv(const std::string& path, LossFamily fam = {},
                                double weight = 1.0) {
  std::ifstream f = detail::open_in(path);
  std::string line;
  if (!std::getline(f, line)) throw std::runtime_error("read_dataset_csv: empty file " + path);
  std::vector<std::string> header = detail::split_csv_line(line);
  if (header.empty() || header[0] != "y")
    throw std::runtime_error("read_dataset_csv: first column must be y in " + path);
  const Eigen::Index p = static_cast<Eigen::Index>(header.size()) - 1;
  if (p < 1) throw std::runtime_error("read_dataset_csv: no covariate columns in " + path);
  std::vector<double> ys;
  std::vector<double> xs;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields = detail::split_csv_line(line);
    if (static_cast<Eigen::Index>(fields.size()) != p + 1)
      throw std::runtime_error("read_dataset_csv: ragged row in " + path);
    ys.push_back(std::stod(fields[0]));
    for (Eigen::Index j = 0; j < p; ++j) xs.push_back(std::stod(fields[j + 1]));
  }
  const Eigen::Index n = static_cast<Eigen::Index>(ys.size());
  if (n < 1) throw std::runtime_error("read_dataset_csv: no data rows in " + path);
  Eigen::MatrixXd X(n, p);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    y[i] = ys[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < p; ++j) X(i, j) = xs[static_cast<std::size_t>(i * p + j)];
  }
  return Dataset::from_vectors(std::move(X), std::move(y), fam, weight);
}

// ---- binary tensor container --------------------------------------------
//
// 16-byte little-endian header:
//   bytes 0-3   magic "TLMT"
//   byte  4     dtype (1 = float64)
//   byte  5     reserved (0)
//   bytes 6-7   d1 (uint16)
//   bytes 8-11  d2 (uint32)
//   bytes 12-15 n  (uint32)
// payload: n observations of d1*d2 float64 (column-major vec per observation),
// then n float64 responses.

inline constexpr std::uint32_t kTensorMagic = 0x544D4C54u;  // "TLMT" in LE bytes
inline constexpr std::uint8_t kTensorFloat64 = 1;

inline void write_dataset_bin(const std::string& path, const Dataset& d) {
  if (d.d1 > 0xFFFF || d.d2 > 0x7FFFFFFF || d.n() > 0x7FFFFFFF)
    throw std::invalid_argument("write_dataset_bin: dimensions exceed header range");
  std::ofstream f = detail::open_out(path, std::ios::binary);
  std::uint8_t header[16] = {};
  std::uint32_t magic = kTensorMagic;
  std::uint16_t d1 = static_cast<std::uint16_t>(d.d1);
  std::uint32_t d2 = static_cast<std::uint32_t>(d.d2);
  std::uint32_t n = static_cast<std::uint32_t>(d.n());
  std::memcpy(header, &magic, 4);
  header[4] = kTensorFloat64;
  std::memcpy(header + 6, &d1, 2);
  std::memcpy(header + 8, &d2, 4);
  std::memcpy(header + 12, &n, 4);
  f.write(reinterpret_cast<const char*>(header), 16);
  for (Eigen::Index i = 0; i < d.n(); ++i) {
    Eigen::VectorXd row = d.covariates.row(i);
    f.write(reinterpret_cast<const char*>(row.data()),
            static_cast<std::streamsize>(sizeof(double)) * row.size());
  }
  f.write(reinterpret_cast<const char*>(d.responses.data()),
          static_cast<std::streamsize>(sizeof(double)) * d.responses.size());
  if (!f) throw std::runtime_error("write_dataset_bin: write failed for " + path);
}

inline Dataset read_dataset_bin(const std::string& path, LossFamily fam = {},
                                double weight = 1.0) {
  std::ifstream f = detail::open_in(path, std::ios::binary);
  std::uint8_t header[16];
  if (!f.read(reinterpret_cast<char*>(header), 16))
    throw std::runtime_error("read_dataset_bin: truncated header in " + path);
  std::uint32_t magic, d2, n;
  std::uint16_t d1;
  std::memcpy(&magic, header, 4);
  std::memcpy(&d1, header + 6, 2);
  std::memcpy(&d2, header + 8, 4);
  std::memcpy(&n, header + 12, 4);
  if (magic != kTensorMagic) throw std::runtime_error("read_dataset_bin: bad magic in " + path);
  if (header[4] != kTensorFloat64)
    throw std::runtime_error("read_dataset_bin: unsupported dtype in " + path);
  if (d1 == 0 || d2 == 0 || n == 0)
    throw std::runtime_error("read_dataset_bin: empty dimensions in " + path);
  Dataset d;
  d.d1 = static_cast<Eigen::Index>(d1);
  d.d2 = static_cast<Eigen::Index>(d2);
  d.covariates.resize(static_cast<Eigen::Index>(n), d.d1 * d.d2);
  for (std::uint32_t i = 0; i < n; ++i) {
    Eigen::VectorXd row(d.d1 * d.d2);
    if (!f.read(reinterpret_cast<char*>(row.data()),
                static_cast<std::streamsize>(sizeof(double)) * row.size()))
      throw std::runtime_error("read_dataset_bin: truncated covariates in " + path);
    d.covariates.row(static_cast<Eigen::Index>(i)) = row;
  }
  d.responses.resize(static_cast<Eigen::Index>(n));
  if (!f.read(reinterpret_cast<char*>(d.responses.data()),
              static_cast<std::streamsize>(sizeof(double)) * d.responses.size()))
    throw std::runtime_error("read_dataset_bin: truncated responses in " + path);
  d.family = fam;
  d.weight = weight;
  d.validate();
  return d;
}

// ---- replication records as CSV -----------------------------------------
//
// Fixed schema; undefined fields are left blank. Timing is wall-clock and
// would break byte-identical reruns, so it is blank unless requested.

inline constexpr const char* kResultsHeader =
    "scenario,seed,estimator,err_l1,err_l2,err_nuc,err_fro,tpr,tnr,seconds";

inline void write_results_csv(const std::string& path,
                              const std::vector<ReplicationRecord>& records,
                              bool include_timings = false) {
  std::ofstream f = detail::open_out(path);
  f << kResultsHeader << "\n";
  auto field = [&](double v) { return std::isfinite(v) ? detail::fmt_double(v) : ""; };
  for (const ReplicationRecord& r : records) {
    f << r.scenario << "," << r.seed << "," << r.estimator << ",";
    if (r.failed) {
      f << ",,,,,,";
    } else {
      f << field(r.err.err_l1) << "," << field(r.err.err_l2) << "," << field(r.err.err_nuc)
        << "," << field(r.err.err_fro) << "," << field(r.rates.tpr) << ","
        << field(r.rates.tnr) << ",";
      if (include_timings) f << detail::fmt_double(r.seconds);
    }
    f << "\n";
  }
}

inline std::vector<ReplicationRecord> read_results_csv(const std::string& path) {
  std::ifstream f = detail::open_in(path);
  std::string line;
  if (!std::getline(f, line) || line != kResultsHeader)
    throw std::runtime_error("read_results_csv: unexpected header in " + path);
  auto num = [](const std::string& s) {
    return s.empty() ? std::numeric_limits<double>::quiet_NaN() : std::stod(s);
  };
  std::vector<ReplicationRecord> out;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<std::string> v = detail::split_csv_line(line);
    if (v.size() != 10) throw std::runtime_error("read_results_csv: ragged row in " + path);
    ReplicationRecord r;
    r.scenario = v[0];
    r.seed = std::stoull(v[1]);
    r.estimator = v[2];
    r.err.err_l1 = num(v[3]);
    r.err.err_l2 = num(v[4]);
    r.err.err_nuc = num(v[5]);
    r.err.err_fro = num(v[6]);
    r.rates.tpr = num(v[7]);
    r.rates.tnr = num(v[8]);
    r.seconds = v[9].empty() ? 0.0 : std::stod(v[9]);
    bool any = false;
    for (int i = 3; i <= 8; ++i) any = any || !v[static_cast<std::size_t>(i)].empty();
    r.failed = !any;
    out.push_back(r);
  }
  return out;
}

// ---- JSON summary and run manifest --------------------------------------

inline nlohmann::json summary_json(const ExperimentResult& result) {
  nlohmann::json j;
  j["scenario"] = result.scenario;
  j["replication_rows"] = result.records.size();
  j["metadata"] = result.metadata;
  nlohmann::json aggs = nlohmann::json::array();
  auto put = [](nlohmann::json& obj, const char* key, double v) {
    if (std::isfinite(v)) obj[key] = v;
  };
  for (const Aggregate& a : result.aggregates()) {
    nlohmann::json o;
    o["estimator"] = a.estimator;
    o["count"] = a.count;
    put(o, "mean_err_l1", a.mean.err_l1);
    put(o, "se_err_l1", a.stderr_.err_l1);
    put(o, "mean_err_l2", a.mean.err_l2);
    put(o, "se_err_l2", a.stderr_.err_l2);
    put(o, "mean_err_nuc", a.mean.err_nuc);
    put(o, "se_err_nuc", a.stderr_.err_nuc);
    put(o, "mean_err_fro", a.mean.err_fro);
    put(o, "se_err_fro", a.stderr_.err_fro);
    put(o, "mean_tpr", a.mean_rates.tpr);
    put(o, "mean_tnr", a.mean_rates.tnr);
    aggs.push_back(o);
  }
  j["aggregates"] = aggs;
  return j;
}

inline nlohmann::json sweep_json(const std::vector<HSweepPoint>& sweep) {
  nlohmann::json arr = nlohmann::json::array();
  for (const HSweepPoint& pt : sweep) {
    nlohmann::json o;
    o["h"] = pt.h;
    o["best_frequency"] = pt.best_frequency;
    o["mean_log_sq_err"] = pt.mean_log_sq_err;
    arr.push_back(o);
  }
  return arr;
}

// Everything needed to reproduce a run exactly: the effective config, the
// seed actually used, and the library version.
inline nlohmann::json manifest_json(const std::string& command, const nlohmann::json& config,
                                    std::uint64_t seed) {
  nlohmann::json m;
  m["command"] = command;
  m["config"] = config;
  m["seed"] = seed;
  m["version"] = kVersion;
  return m;
}

inline void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream f = detail::open_out(path);
  f << j.dump(2) << "\n";
}

inline nlohmann::json read_json(const std::string& path) {
  std::ifstream f = detail::open_in(path);
  return nlohmann::json::parse(f);
}

}  // namespace tlmest
