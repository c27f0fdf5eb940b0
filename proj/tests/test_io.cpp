#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "tlmest/io.hpp"

using namespace tlmest;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("tlmest_io_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

Dataset random_vector_dataset(std::uint64_t seed, Eigen::Index n, Eigen::Index p) {
  auto rng = substream(seed, 7);
  std::normal_distribution<double> gauss;
  Eigen::MatrixXd X(n, p);
  Eigen::VectorXd y(n);
  for (Eigen::Index j = 0; j < p; ++j)
    for (Eigen::Index i = 0; i < n; ++i) X(i, j) = gauss(rng);
  for (Eigen::Index i = 0; i < n; ++i) y[i] = gauss(rng);
  return Dataset::from_vectors(std::move(X), std::move(y));
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  return std::string(std::istreambuf_iterator<char>(f), {});
}

}  // namespace

TEST_CASE("vector dataset CSV round-trips exactly") {
  TempDir tmp;
  Dataset d = random_vector_dataset(1, 17, 5);
  write_dataset_csv(tmp.file("d.csv"), d);
  Dataset back = read_dataset_csv(tmp.file("d.csv"));
  REQUIRE(back.n() == d.n());
  REQUIRE(back.dim() == d.dim());
  REQUIRE((back.covariates - d.covariates).lpNorm<Eigen::Infinity>() == 0.0);
  REQUIRE((back.responses - d.responses).lpNorm<Eigen::Infinity>() == 0.0);

  std::string header;
  std::ifstream f(tmp.file("d.csv"));
  std::getline(f, header);
  REQUIRE(header == "y,x1,x2,x3,x4,x5");
}

TEST_CASE("CSV writes are byte-identical across repeats") {
  TempDir tmp;
  Dataset d = random_vector_dataset(2, 23, 4);
  write_dataset_csv(tmp.file("a.csv"), d);
  write_dataset_csv(tmp.file("b.csv"), d);
  REQUIRE(slurp(tmp.file("a.csv")) == slurp(tmp.file("b.csv")));
}

TEST_CASE("CSV rejects malformed inputs") {
  TempDir tmp;
  { std::ofstream(tmp.file("empty.csv")); }
  REQUIRE_THROWS_AS(read_dataset_csv(tmp.file("empty.csv")), std::runtime_error);
  {
    std::ofstream f(tmp.file("badhead.csv"));
    f << "z,x1\n1,2\n";
  }
  REQUIRE_THROWS_AS(read_dataset_csv(tmp.file("badhead.csv")), std::runtime_error);
  {
    std::ofstream f(tmp.file("ragged.csv"));
    f << "y,x1,x2\n1,2\n";
  }
  REQUIRE_THROWS_AS(read_dataset_csv(tmp.file("ragged.csv")), std::runtime_error);
  REQUIRE_THROWS_AS(read_dataset_csv(tmp.file("missing.csv")), std::runtime_error);
}

TEST_CASE("binary tensor container round-trips matrix datasets bit-exactly") {
  TempDir tmp;
  auto rng = substream(3, 9);
  std::normal_distribution<double> gauss;
  std::vector<Eigen::MatrixXd> Xs;
  Eigen::VectorXd y(6);
  for (int i = 0; i < 6; ++i) {
    Eigen::MatrixXd X(3, 4);
    for (Eigen::Index c = 0; c < 4; ++c)
      for (Eigen::Index r = 0; r < 3; ++r) X(r, c) = gauss(rng);
    Xs.push_back(X);
    y[i] = gauss(rng);
  }
  Dataset d = Dataset::from_matrices(Xs, y);
  write_dataset_bin(tmp.file("d.bin"), d);

  std::string raw = slurp(tmp.file("d.bin"));
  REQUIRE(raw.size() == 16 + sizeof(double) * (6 * 12 + 6));
  REQUIRE(raw.substr(0, 4) == "TLMT");
  REQUIRE(static_cast<unsigned char>(raw[4]) == 1);  // float64

  Dataset back = read_dataset_bin(tmp.file("d.bin"));
  REQUIRE(back.d1 == 3);
  REQUIRE(back.d2 == 4);
  REQUIRE(back.n() == 6);
  REQUIRE((back.covariates - d.covariates).lpNorm<Eigen::Infinity>() == 0.0);
  REQUIRE((back.responses - d.responses).lpNorm<Eigen::Infinity>() == 0.0);
  REQUIRE(back.observation(2) == d.observation(2));
}

TEST_CASE("binary reader rejects corrupted containers") {
  TempDir tmp;
  Dataset d = random_vector_dataset(4, 5, 3);
  write_dataset_bin(tmp.file("ok.bin"), d);
  std::string raw = slurp(tmp.file("ok.bin"));

  {
    std::ofstream f(tmp.file("magic.bin"), std::ios::binary);
    std::string bad = raw;
    bad[0] = 'X';
    f << bad;
  }
  REQUIRE_THROWS_AS(read_dataset_bin(tmp.file("magic.bin")), std::runtime_error);
  {
    std::ofstream f(tmp.file("trunc.bin"), std::ios::binary);
    f << raw.substr(0, raw.size() - 8);
  }
  REQUIRE_THROWS_AS(read_dataset_bin(tmp.file("trunc.bin")), std::runtime_error);
  {
    std::ofstream f(tmp.file("dtype.bin"), std::ios::binary);
    std::string bad = raw;
    bad[4] = 2;
    f << bad;
  }
  REQUIRE_THROWS_AS(read_dataset_bin(tmp.file("dtype.bin")), std::runtime_error);
}

TEST_CASE("results CSV keeps the fixed schema and blanks undefined fields") {
  TempDir tmp;
  ReplicationRecord a;
  a.scenario = "s1";
  a.seed = 42;
  a.estimator = "vanilla";
  a.err.err_l1 = 1.25;
  a.err.err_l2 = 0.5;
  ReplicationRecord b;
  b.scenario = "s1";
  b.seed = 43;
  b.estimator = "truncated";
  b.err.err_l1 = 2.0;
  b.err.err_l2 = 1.0;
  b.rates.tpr = 1.0;
  b.rates.tnr = 0.75;
  ReplicationRecord fail;
  fail.scenario = "s1";
  fail.seed = 44;
  fail.estimator = "vanilla";
  fail.failed = true;

  write_results_csv(tmp.file("r.csv"), {a, b, fail});
  std::string text = slurp(tmp.file("r.csv"));
  REQUIRE(text.find("scenario,seed,estimator,err_l1,err_l2,err_nuc,err_fro,tpr,tnr,seconds") ==
          0);
  REQUIRE(text.find("s1,42,vanilla,1.25,0.5,,,,,") != std::string::npos);
  REQUIRE(text.find("s1,43,truncated,2,1,,,1,0.75,") != std::string::npos);
  REQUIRE(text.find("s1,44,vanilla,,,,,,,") != std::string::npos);

  std::vector<ReplicationRecord> back = read_results_csv(tmp.file("r.csv"));
  REQUIRE(back.size() == 3);
  REQUIRE(back[0].err.err_l1 == 1.25);
  REQUIRE(std::isnan(back[0].err.err_nuc));
  REQUIRE(back[1].rates.tnr == 0.75);
  REQUIRE(back[2].failed);
  REQUIRE_FALSE(back[0].failed);
}

TEST_CASE("results CSV is byte-identical across reruns unless timings are on") {
  TempDir tmp;
  ReplicationRecord r;
  r.scenario = "s";
  r.seed = 1;
  r.estimator = "e";
  r.err.err_l2 = 0.25;
  r.seconds = 1.234;
  write_results_csv(tmp.file("a.csv"), {r});
  write_results_csv(tmp.file("b.csv"), {r});
  REQUIRE(slurp(tmp.file("a.csv")) == slurp(tmp.file("b.csv")));
  write_results_csv(tmp.file("t.csv"), {r}, true);
  REQUIRE(slurp(tmp.file("t.csv")).find("1.234") != std::string::npos);
  REQUIRE(slurp(tmp.file("a.csv")).find("1.234") == std::string::npos);
}

TEST_CASE("summary JSON is a pure function of the records") {
  ExperimentResult res;
  res.scenario = "demo";
  res.metadata["preset"] = "demo";
  for (double v : {1.0, 3.0}) {
    ReplicationRecord r;
    r.scenario = "demo";
    r.estimator = "e";
    r.err.err_l2 = v;
    res.records.push_back(r);
  }
  nlohmann::json j = summary_json(res);
  REQUIRE(j["scenario"] == "demo");
  REQUIRE(j["aggregates"].size() == 1);
  REQUIRE(j["aggregates"][0]["estimator"] == "e");
  REQUIRE(j["aggregates"][0]["mean_err_l2"] == Catch::Approx(2.0));
  REQUIRE_FALSE(j["aggregates"][0].contains("mean_err_nuc"));
  REQUIRE(summary_json(res) == j);
}

TEST_CASE("manifest records command, config, seed and version") {
  nlohmann::json cfg = {{"preset", "table2-desk"}, {"jobs", 2}};
  nlohmann::json m = manifest_json("experiment", cfg, 7);
  REQUIRE(m["command"] == "experiment");
  REQUIRE(m["config"]["preset"] == "table2-desk");
  REQUIRE(m["seed"] == 7);
  REQUIRE(m["version"] == kVersion);

  TempDir tmp;
  write_json(tmp.file("m.json"), m);
  REQUIRE(read_json(tmp.file("m.json")) == m);
}

TEST_CASE("sweep JSON mirrors the frequency tables") {
  HSweepPoint pt;
  pt.h = 0.1;
  pt.best_frequency["vanilla"] = 0.25;
  pt.best_frequency["pooled_cv"] = 0.75;
  pt.mean_log_sq_err["vanilla"] = -1.0;
  pt.mean_log_sq_err["pooled_cv"] = -2.5;
  nlohmann::json j = sweep_json({pt});
  REQUIRE(j.size() == 1);
  REQUIRE(j[0]["h"] == 0.1);
  REQUIRE(j[0]["best_frequency"]["pooled_cv"] == 0.75);
  REQUIRE(j[0]["mean_log_sq_err"]["vanilla"] == -1.0);
}
