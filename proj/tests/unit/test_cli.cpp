// Copyright 2026 The gmnf Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "cli.hpp"
#include "gmnf/cost_model.hpp"

using namespace gmnf;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = 0;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  Result r;
  r.code = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("gmnf_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

fs::path write_config(const fs::path& dir, const std::string& text) {
  const fs::path p = dir / "run.cfg";
  std::ofstream(p) << text;
  return p;
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

const char* kSmall = "dataset.samples = 48\ndataset.eval_samples = 32\ntrain.epochs = 2\n";

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("flops json equals the library call byte for byte") {
  for (auto [n, d, h] : {std::tuple{4, 4, 2}, std::tuple{7, 6, 3}, std::tuple{1, 1, 1}}) {
    const Result r = run({"flops", "--n", std::to_string(n), "--d", std::to_string(d), "--h",
                          std::to_string(h), "--json"});
    CHECK(r.code == 0);
    CHECK(r.out == flops_table(n, d, h).dump(2) + "\n");
    const auto j = nlohmann::ordered_json::parse(r.out);
    const Mechanism ms[] = {Mechanism::token_exchange, Mechanism::cross_attention,
                            Mechanism::pixelwise, Mechanism::geminifusion};
    for (std::size_t k = 0; k < 4; ++k) CHECK(j["reports"][k] == to_json(flops_for(ms[k], n, d, h)));
  }
}

TEST_CASE("flops headline and empty instance") {
  const Result r = run({"flops", "--n", "16384", "--d", "64", "--h", "8"});
  CHECK(r.code == 0);
  CHECK(r.out.find("reduction_vs_cross: 0.99591064453125") != std::string::npos);
  const Result z = run({"--json", "flops", "--n", "0"});
  const auto j = nlohmann::json::parse(z.out);
  for (const auto& rep : j["reports"]) {
    CHECK(rep["total_macs"] == 0);
    for (const auto& t : rep["terms"]) CHECK(t["macs"] == 0);
  }
}

TEST_CASE("gradcheck exit codes") {
  const Result ok = run({"gradcheck"});
  CHECK(ok.code == 0);
  CHECK(ok.out.find("PASS worst: op=") != std::string::npos);
  const Result bad = run({"gradcheck", "--inject-fault", "geminifusion"});
  CHECK(bad.code == 1);
  CHECK(bad.out.find("FAIL worst: op=geminifusion") != std::string::npos);
  const Result none = run({"gradcheck", "--instances", "0"});
  CHECK(none.code == 2);
  const auto j = nlohmann::json::parse(run({"gradcheck", "--json", "--instances", "21"}).out);
  CHECK(j["instances"] == 21);
  CHECK(j["worst"]["max_rel_error"].get<double>() < 1e-6);
}

TEST_CASE("usage and config errors exit 2 with the line number") {
  CHECK(run({}).code == 2);
  CHECK(run({"frobnicate"}).code == 2);
  CHECK(run({"flops", "--n", "abc"}).code == 2);
  const fs::path dir = scratch("errors");
  const auto cfg = write_config(dir, "seed = 1\n# comment\ntrain.epoch = 3\n");
  const Result r = run({"train", "--config", cfg.string(), "--out", dir.string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("run.cfg:3:") != std::string::npos);
  const auto cfg2 = write_config(dir, "model.fusion = concat\n");
  CHECK(run({"train", "--config", cfg2.string(), "--out", dir.string()}).err.find("run.cfg:1:") !=
        std::string::npos);
  const auto cfg3 = write_config(dir, "seed = 1\nmodel.theta = 2\n");
  const Result r3 = run({"sweep", "--config", cfg3.string(), "--out", dir.string()});
  CHECK(r3.code == 2);
  CHECK(r3.err.find("run.cfg:2:") != std::string::npos);
  CHECK(run({"train", "--config", (dir / "missing.cfg").string()}).code == 2);
  CHECK(run({"ckpt-verify", (dir / "missing.gmnf").string()}).code == 2);
}

TEST_CASE("train reruns are byte identical and leave a loadable checkpoint") {
  const fs::path a = scratch("train_a"), b = scratch("train_b");
  const auto cfg = write_config(a, kSmall);
  REQUIRE(run({"train", "--config", cfg.string(), "--out", a.string(), "--seed", "5"}).code == 0);
  REQUIRE(run({"--seed", "5", "train", "--config", cfg.string(), "--out", b.string()}).code == 0);
  for (const char* f : {"metrics.csv", "exchange_rates.csv", "summary.json", "model.gmnf",
                        "dataset.gmnf", "manifest.json"}) {
    CAPTURE(f);
    CHECK(slurp(a / f) == slurp(b / f));
  }
  const auto metrics = lines(slurp(a / "metrics.csv"));
  CHECK(metrics.front() == "epoch,train_loss");
  CHECK(metrics.size() == 4);
  const auto manifest = nlohmann::json::parse(slurp(a / "manifest.json"));
  CHECK(manifest["seed"] == 5);
  CHECK(manifest["config_hash"].get<std::string>().size() == 16);
  CHECK(manifest.dump().find("time") == std::string::npos);
  const Result v = run({"ckpt-verify", (a / "model.gmnf").string()});
  CHECK(v.code == 0);
  CHECK(v.out.rfind("OK ", 0) == 0);

  const Result other = run({"train", "--config", cfg.string(), "--out", b.string(), "--seed", "6"});
  REQUIRE(other.code == 0);
  CHECK(slurp(a / "metrics.csv") != slurp(b / "metrics.csv"));
}

TEST_CASE("ckpt-verify rejects corrupt files") {
  const fs::path dir = scratch("verify");
  const auto cfg = write_config(dir, kSmall);
  REQUIRE(run({"train", "--config", cfg.string(), "--out", dir.string()}).code == 0);
  const std::string bytes = slurp(dir / "model.gmnf");
  std::ofstream(dir / "cut.gmnf", std::ios::binary) << bytes.substr(0, bytes.size() - 5);
  const Result r = run({"ckpt-verify", (dir / "cut.gmnf").string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("truncated payload") != std::string::npos);
}

TEST_CASE("sweep writes two rows per seed and layer for two thetas") {
  const fs::path dir = scratch("sweep");
  const auto cfg = write_config(dir, std::string(kSmall) +
                                         "model.layers = 3\nsweep.theta_list = 0.02,1.0\n"
                                         "sweep.seeds = 4,5\nsweep.workers = 2\n");
  const Result r = run({"sweep", "--config", cfg.string(), "--out", dir.string()});
  REQUIRE(r.code == 0);
  const auto rows = lines(slurp(dir / "sweep.csv"));
  REQUIRE(rows.size() == 1 + 2 * 2 * 3);
  CHECK(rows[0] == "theta,seed,accuracy,layer,exchange_rate_mod1,exchange_rate_mod2");
  CHECK(rows[1].rfind("0.02,4,", 0) == 0);
  CHECK(rows.back().rfind("1,5,", 0) == 0);
  CHECK(rows.back().substr(rows.back().size() - 6) == ",2,1,1");
  const std::string first = slurp(dir / "sweep.csv");
  REQUIRE(run({"sweep", "--config", cfg.string(), "--out", dir.string()}).code == 0);
  CHECK(slurp(dir / "sweep.csv") == first);
}

TEST_CASE("trace on a 4-layer model gives 4 distribution rows") {
  const fs::path dir = scratch("trace");
  const auto cfg = write_config(dir, std::string(kSmall) + "model.layers = 4\n");
  const Result r = run({"trace", "--config", cfg.string(), "--out", dir.string()});
  REQUIRE(r.code == 0);
  const auto rows = lines(slurp(dir / "trace.csv"));
  REQUIRE(rows.size() == 5);
  CHECK(rows[0] == "layer,self_weight,cross_weight");
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto c1 = rows[i].find(','), c2 = rows[i].rfind(',');
    CHECK(std::stoul(rows[i].substr(0, c1)) == i - 1);
    const double s = std::stod(rows[i].substr(c1 + 1, c2 - c1 - 1));
    const double c = std::stod(rows[i].substr(c2 + 1));
    CHECK(std::abs(s + c - 1.0) <= 1e-12);
  }
  const std::string first = slurp(dir / "trace.csv");
  REQUIRE(run({"trace", "--config", cfg.string(), "--out", dir.string()}).code == 0);
  CHECK(slurp(dir / "trace.csv") == first);
}

TEST_CASE("bench writes CSV and JSON") {
  const fs::path dir = scratch("bench");
  const auto cfg = write_config(dir, "bench.ops = exchange\nbench.n_list = 16,32,64\nbench.d = 8\nbench.h = 2\n");
  const Result r = run({"bench", "--config", cfg.string(), "--out", dir.string()});
  REQUIRE(r.code == 0);
  const auto rows = lines(slurp(dir / "bench.csv"));
  REQUIRE(rows.size() == 4);
  CHECK(rows[0] == "op,n,d,h,median_ns,mad_ns");
  CHECK(rows[1].rfind("exchange,16,8,2,", 0) == 0);
  const auto j = nlohmann::json::parse(slurp(dir / "bench.json"));
  CHECK(j["curves"][0]["points"][2]["samples_ns"].size() == 5);
  CHECK(j["curves"][0].contains("slope"));
  const auto cap = write_config(dir, "bench.ops = exchange\nbench.n_list = 64\nbench.d = 8\nbench.memory_cap = 100\n");
  CHECK(run({"bench", "--config", cap.string(), "--out", dir.string()}).code == 2);
}

}  // TEST_SUITE
