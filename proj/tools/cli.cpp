// Copyright 2026 The gmnf Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "gmnf/bench.hpp"
#include "gmnf/checkpoint.hpp"
#include "gmnf/cost_model.hpp"
#include "gmnf/errors.hpp"
#include "gmnf/gradcheck.hpp"
#include "gmnf/toy_io.hpp"

namespace gmnf::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

// Runs fn and re-raises library errors as config errors located at `key`.
template <typename Fn>
auto at_key(const Config& cfg, std::string_view key, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    throw ConfigError(cfg.where(key) + e.what());
  }
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void write_file(const fs::path& path, std::string_view bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ResourceError("cannot open '" + path.string() + "' for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw ResourceError("write to '" + path.string() + "' failed");
}

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string config_path;
  bool json = false;
  std::string out_dir = ".";
};

Config load_config(const Globals& g) {
  Config cfg = g.config_path.empty() ? Config{} : Config::load(g.config_path);
  if (g.seed) cfg.set("seed", std::to_string(*g.seed));
  return cfg;
}

fs::path prepare_out(const Globals& g) {
  fs::path dir(g.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ResourceError("cannot create output directory '" + dir.string() + "'");
  return dir;
}

void write_manifest(const fs::path& dir, std::string_view command, const Config& cfg,
                    std::uint64_t seed, const std::vector<std::string>& outputs) {
  ordered_json j;
  j["tool"] = "gmnf";
  j["version"] = kVersion;
  j["command"] = command;
  j["seed"] = seed;
  j["config_hash"] = hex64(cfg.hash());
  j["config"] = cfg.canonical();
  j["outputs"] = outputs;
  write_file(dir / "manifest.json", j.dump(2) + "\n");
}

ordered_json rates_json(const std::vector<std::vector<double>>& rates) {
  ordered_json j = ordered_json::array();
  for (const auto& layer : rates) j.push_back(layer);
  return j;
}

// -- commands ----------------------------------------------------------------

int cmd_gradcheck(const Globals& g, std::size_t instances, const std::string& fault,
                  std::ostream& out) {
  const Config cfg = load_config(g);
  GradCheckOptions opt;
  opt.seed = cfg.get_u64("seed", 1);
  opt.instances = instances;
  opt.inject_fault = fault;
  const GradCheckReport rep = run_gradcheck(opt);
  const GradCheckEntry& w = rep.worst();
  if (g.json) {
    ordered_json j;
    j["instances"] = rep.instances;
    j["tolerance"] = rep.tolerance;
    j["passed"] = rep.passed();
    j["worst"] = {{"op", w.op}, {"parameter", w.parameter}, {"max_rel_error", w.max_rel_error}};
    auto entries = ordered_json::array();
    for (const auto& e : rep.entries) {
      entries.push_back({{"op", e.op},
                         {"parameter", e.parameter},
                         {"max_rel_error", e.max_rel_error},
                         {"max_abs_error", e.max_abs_error},
                         {"checked", e.checked}});
    }
    j["entries"] = std::move(entries);
    out << j.dump(2) << "\n";
  } else {
    out << "gradcheck: " << rep.instances << " instances, tolerance " << format_double(rep.tolerance)
        << "\n";
    for (const auto& e : rep.entries) {
      out << "  " << e.op << " " << e.parameter << " max_rel " << format_double(e.max_rel_error)
          << " max_abs " << format_double(e.max_abs_error) << "\n";
    }
    out << (rep.passed() ? "PASS" : "FAIL") << " worst: op=" << w.op << " parameter=" << w.parameter
        << " rel=" << format_double(w.max_rel_error) << "\n";
  }
  return rep.passed() ? kOk : kCheckFailed;
}

int cmd_flops(const Globals& g, std::size_t n, std::size_t d, std::size_t h, std::ostream& out) {
  const ordered_json table = flops_table(n, d, h);
  if (g.json) {
    out << table.dump(2) << "\n";
    return kOk;
  }
  out << "n=" << n << " d=" << d << " h=" << h << " (MACs, both directions)\n";
  for (const auto& r : table["reports"]) {
    out << r["mechanism"].get<std::string>() << ": total " << r["total_macs"].get<std::uint64_t>()
        << " core " << r["core_macs"].get<std::uint64_t>() << "\n";
    for (const auto& t : r["terms"]) {
      out << "  " << t["name"].get<std::string>() << " " << t["macs"].get<std::uint64_t>() << "\n";
    }
  }
  const CostReport cross = flops_cross_attention(n, d, h);
  const CostReport gem = flops_for(Mechanism::geminifusion, n, d, h);
  if (!cross.terms.empty()) {
    const CostTerm& dom = cross.dominant_term();
    out << "cross_attention dominant term: " << dom.name << " " << dom.macs << " (" << dom.macs / 2
        << " per direction)\n";
  }
  out << "reduction_vs_cross: " << format_double(gem.reduction_vs_cross) << "\n";
  out << "total_reduction_vs_cross: " << format_double(gem.total_reduction_vs_cross) << "\n";
  return kOk;
}

int cmd_bench(const Globals& g, std::ostream& out) {
  const Config cfg = load_config(g);
  BenchConfig bc;
  bc.seed = cfg.get_u64("seed", 1);
  bc.repeats = cfg.get_size("bench.repeats", 5);
  bc.memory_cap = cfg.get_size("bench.memory_cap", bc.memory_cap);
  const auto ops = cfg.get_string_list("bench.ops", bench_ops());
  const auto sizes = cfg.get_size_list("bench.n_list", default_scaling_sizes());
  const std::size_t d = cfg.get_size("bench.d", 64);
  const std::size_t h = cfg.get_size("bench.h", 8);
  for (const auto& op : ops) {
    if (std::find(bench_ops().begin(), bench_ops().end(), op) == bench_ops().end()) {
      throw ConfigError(cfg.where("bench.ops") + "unknown op '" + op + "'");
    }
  }
  if (bc.repeats < 5) throw ConfigError(cfg.where("bench.repeats") + "must be at least 5");

  const fs::path dir = prepare_out(g);
  std::vector<BenchResult> results;
  ordered_json j;
  j["d"] = d;
  j["h"] = h;
  j["curves"] = ordered_json::array();
  for (const auto& op : ops) {
    ordered_json curve;
    curve["op"] = op;
    curve["points"] = ordered_json::array();
    std::vector<double> xs, ys;
    for (std::size_t n : sizes) {
      BenchResult r = time_op(op, n, d, h, bc);
      if (r.load_warning) {
        out << "warning: " << op << " n=" << n << " MAD/median above "
            << format_double(bc.load_threshold) << "; machine may be loaded\n";
      }
      xs.push_back(std::log(static_cast<double>(n)));
      ys.push_back(std::log(std::max(r.median_ns, 1.0)));
      curve["points"].push_back(to_json(r));
      results.push_back(std::move(r));
    }
    if (sizes.size() >= 3) {
      const double slope = least_squares_slope(xs, ys);
      curve["slope"] = slope;
      out << op << " slope " << format_double(slope) << "\n";
    }
    j["curves"].push_back(std::move(curve));
  }
  write_file(dir / "bench.csv", bench_csv(results));
  write_file(dir / "bench.json", j.dump(2) + "\n");
  write_manifest(dir, "bench", cfg, bc.seed, {"bench.csv", "bench.json"});
  if (g.json) out << j.dump(2) << "\n";
  return kOk;
}

int cmd_train(const Globals& g, std::ostream& out) {
  const Config cfg = load_config(g);
  const Experiment ex = experiment_from_config(cfg, ToyFusion::geminifusion);
  const fs::path dir = prepare_out(g);
  ToyRun run = run_experiment(ex.data, ex.model, ex.train, ex.seed, ex.eval_samples);
  ToyDatasetConfig train_cfg = ex.data;
  train_cfg.seed = ex.seed;
  const auto rates = layer_exchange_rate(run);

  ordered_json summary;
  summary["seed"] = ex.seed;
  summary["accuracy"] = run.eval.accuracy;
  summary["mean_class_accuracy"] = run.eval.mean_class_accuracy;
  summary["eval_loss"] = run.eval.loss;
  summary["initial_loss"] = run.history.initial_loss;
  summary["final_loss"] =
      run.history.epoch_loss.empty() ? run.history.initial_loss : run.history.epoch_loss.back();
  summary["exchange_rates"] = rates_json(rates);
  summary["model"] = to_json(ex.model);
  summary["dataset"] = to_json(train_cfg);

  write_file(dir / "metrics.csv", train_metrics_csv(run.history));
  write_file(dir / "exchange_rates.csv", exchange_rates_csv(rates));
  write_file(dir / "summary.json", summary.dump(2) + "\n");
  save_checkpoint(dir / "model.gmnf", model_checkpoint(run.model));
  save_checkpoint(dir / "dataset.gmnf", dataset_checkpoint(generate_dataset(train_cfg)));
  write_manifest(dir, "train", cfg, ex.seed,
                 {"metrics.csv", "exchange_rates.csv", "summary.json", "model.gmnf", "dataset.gmnf"});
  if (g.json) {
    out << summary.dump(2) << "\n";
  } else {
    out << "accuracy " << format_double(run.eval.accuracy) << " mean_class_accuracy "
        << format_double(run.eval.mean_class_accuracy) << "\n";
    out << "wrote " << dir.string() << "\n";
  }
  return kOk;
}

int cmd_sweep(const Globals& g, std::ostream& out) {
  const Config cfg = load_config(g);
  const Experiment ex = experiment_from_config(cfg, ToyFusion::exchange);
  const auto thetas = cfg.get_double_list("sweep.theta_list", {0.02, 0.2, 0.5, 1.0});
  for (double t : thetas) {
    if (!(t >= 0.0 && t <= 1.0)) {
      throw ConfigError(cfg.where("sweep.theta_list") + "theta " + format_double(t) +
                        " outside [0, 1]");
    }
  }
  const auto seeds = cfg.get_u64_list("sweep.seeds", {ex.seed, ex.seed + 1, ex.seed + 2});
  if (seeds.empty()) throw ConfigError(cfg.where("sweep.seeds") + "empty seed list");
  const std::size_t workers = cfg.get_size("sweep.workers", 1);
  if (!ex.model.uses(ToyFusion::exchange)) {
    throw ConfigError(cfg.where("model.fusion") + "sweep needs at least one exchange layer");
  }
  const fs::path dir = prepare_out(g);
  const SweepResult res =
      threshold_sweep(ex.data, ex.model, ex.train, thetas, seeds, workers, ex.eval_samples);
  write_file(dir / "sweep.csv", sweep_csv(res, ex.data.modalities));
  write_file(dir / "sweep_summary.csv", sweep_summary_csv(res));
  write_manifest(dir, "sweep", cfg, ex.seed, {"sweep.csv", "sweep_summary.csv"});
  if (g.json) {
    ordered_json j = ordered_json::array();
    for (const auto& s : res.summary) j.push_back({{"theta", s.theta}, {"mean_accuracy", s.mean_accuracy}});
    out << j.dump(2) << "\n";
  } else {
    for (const auto& s : res.summary) {
      out << "theta " << format_double(s.theta) << " mean_accuracy " << format_double(s.mean_accuracy)
          << "\n";
    }
  }
  return kOk;
}

int cmd_trace(const Globals& g, std::ostream& out) {
  const Config cfg = load_config(g);
  const Experiment ex = experiment_from_config(cfg, ToyFusion::geminifusion);
  if (!ex.model.uses(ToyFusion::geminifusion)) {
    throw ConfigError(cfg.where("model.fusion") + "trace needs at least one geminifusion layer");
  }
  const fs::path dir = prepare_out(g);
  const ToyRun run = run_experiment(ex.data, ex.model, ex.train, ex.seed, ex.eval_samples);
  const std::string csv = trace_csv(run.eval.attention);
  write_file(dir / "trace.csv", csv);
  write_manifest(dir, "trace", cfg, ex.seed, {"trace.csv"});
  out << csv;
  return kOk;
}

int cmd_ckpt_verify(const Globals& g, const std::string& path, std::ostream& out) {
  if (!fs::exists(path)) throw ConfigError("no such file '" + path + "'");
  const Checkpoint ckpt = load_checkpoint(path);
  const std::string kind = ckpt.metadata.value("kind", "");
  if (kind == "toy_model") (void)model_from_checkpoint(ckpt);
  if (kind == "toy_dataset") (void)dataset_from_checkpoint(ckpt);
  if (g.json) {
    ordered_json j;
    j["path"] = path;
    j["version"] = ckpt.version;
    j["kind"] = kind;
    j["payload_bytes"] = ckpt.payload_bytes();
    j["tensors"] = ordered_json::array();
    for (const auto& t : ckpt.tensors) j["tensors"].push_back({{"name", t.name}, {"shape", t.tensor.shape()}});
    out << j.dump(2) << "\n";
  } else {
    out << "OK " << path << ": version " << ckpt.version << ", " << ckpt.tensors.size()
        << " tensors, " << ckpt.payload_bytes() << " payload bytes\n";
    for (const auto& t : ckpt.tensors) out << "  " << t.name << " " << shape_string(t.tensor.shape()) << "\n";
  }
  return kOk;
}

}  // namespace

Experiment experiment_from_config(const Config& cfg, ToyFusion fusion) {
  Experiment ex;
  ex.seed = cfg.get_u64("seed", 1);
  auto& d = ex.data;
  d.tokens = cfg.get_size("dataset.tokens", d.tokens);
  d.channels = cfg.get_size("dataset.channels", d.channels);
  d.samples = cfg.get_size("dataset.samples", d.samples);
  d.modalities = cfg.get_size("dataset.modalities", d.modalities);
  d.noise = cfg.get_double("dataset.noise", d.noise);
  d.rule = at_key(cfg, "dataset.rule", [&] { return parse_label_rule(cfg.get_string("dataset.rule", "xor")); });
  d.classes = cfg.get_size("dataset.classes", label_classes(d.rule));
  d.seed = ex.seed;
  ex.eval_samples = cfg.get_size("dataset.eval_samples", 512);
  if (ex.eval_samples < 1) throw ConfigError(cfg.where("dataset.eval_samples") + "must be positive");
  try {
    d.validate();
  } catch (const Error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }

  auto& m = ex.model;
  m.layers = cfg.get_size("model.layers", m.layers);
  m.dim = d.channels;
  m.tokens = d.tokens;
  m.classes = d.classes;
  m.modalities = d.modalities;
  m.heads = cfg.get_size("model.heads", m.heads);
  const auto names = cfg.get_string_list("model.fusion", {std::string(to_string(fusion))});
  m.fusion.clear();
  for (const auto& name : names) {
    m.fusion.push_back(at_key(cfg, "model.fusion", [&] { return parse_toy_fusion(name); }));
  }
  if (m.fusion.size() == 1) {
    m.fusion.assign(m.layers, m.fusion.front());
  } else if (m.fusion.size() != m.layers) {
    throw ConfigError(cfg.where("model.fusion") + std::to_string(m.fusion.size()) +
                      " entries for " + std::to_string(m.layers) + " layers");
  }
  m.theta = cfg.get_double("model.theta", m.theta);
  if (!(m.theta >= 0.0 && m.theta <= 1.0)) {
    throw ConfigError(cfg.where("model.theta") + "theta must lie in [0, 1]");
  }
  m.l1_weight = cfg.get_double("model.l1_weight", m.l1_weight);
  m.relation = at_key(cfg, "model.relation", [&] {
    return parse_relation_variant(cfg.get_string("model.relation", to_string(m.relation)));
  });
  m.gemini.noise = cfg.get_bool("model.noise", true);
  m.gemini.relation = cfg.get_bool("model.relation_enabled", true);
  m.gemini.self_entry = cfg.get_bool("model.self_entry", true);
  m.positional = cfg.get_bool("model.positional", m.positional);
  m.positional_init = cfg.get_double("model.positional_init", m.positional_init);
  try {
    m.validate();
  } catch (const Error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }

  auto& t = ex.train;
  t.lr = cfg.get_double("train.lr", t.lr);
  t.momentum = cfg.get_double("train.momentum", t.momentum);
  t.epochs = cfg.get_size("train.epochs", t.epochs);
  t.batch = cfg.get_size("train.batch", t.batch);
  if (t.batch < 1) throw ConfigError(cfg.where("train.batch") + "must be positive");
  if (!(t.lr >= 0.0)) throw ConfigError(cfg.where("train.lr") + "must be >= 0");
  return ex;
}

std::string train_metrics_csv(const TrainHistory& history) {
  std::string s = "epoch,train_loss\n0," + format_double(history.initial_loss) + "\n";
  for (std::size_t e = 0; e < history.epoch_loss.size(); ++e) {
    s += std::to_string(e + 1) + "," + format_double(history.epoch_loss[e]) + "\n";
  }
  return s;
}

std::string exchange_rates_csv(const std::vector<std::vector<double>>& rates) {
  const std::size_t mods = rates.empty() ? 2 : rates.front().size();
  std::string s = "layer";
  for (std::size_t m = 0; m < mods; ++m) s += ",exchange_rate_mod" + std::to_string(m + 1);
  s += "\n";
  for (std::size_t l = 0; l < rates.size(); ++l) {
    s += std::to_string(l);
    for (double r : rates[l]) s += "," + format_double(r);
    s += "\n";
  }
  return s;
}

std::string sweep_csv(const SweepResult& result, std::size_t modalities) {
  std::string s = "theta,seed,accuracy,layer";
  for (std::size_t m = 0; m < modalities; ++m) s += ",exchange_rate_mod" + std::to_string(m + 1);
  s += "\n";
  // Rows arrive ordered by (theta input order, seed, layer) regardless of the
  // worker count.
  for (const auto& r : result.rows) {
    s += format_double(r.theta) + "," + std::to_string(r.seed) + "," + format_double(r.accuracy) +
         "," + std::to_string(r.layer);
    for (double x : r.exchange_rate) s += "," + format_double(x);
    s += "\n";
  }
  return s;
}

std::string sweep_summary_csv(const SweepResult& result) {
  std::string s = "theta,mean_accuracy\n";
  for (const auto& r : result.summary) s += format_double(r.theta) + "," + format_double(r.mean_accuracy) + "\n";
  return s;
}

std::string trace_csv(const std::vector<LayerAttention>& trace) {
  std::string s = "layer,self_weight,cross_weight\n";
  for (const auto& a : trace) {
    s += std::to_string(a.layer) + "," + format_double(a.self_weight) + "," +
         format_double(a.cross_weight) + "\n";
  }
  return s;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"gmnf: fusion kernels, cost model and toy experiments"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Random seed (overrides the config)");
  app.add_option("--config", g.config_path, "Config file of key = value lines");
  app.add_flag("--json", g.json, "Machine-readable output");
  app.add_option("--out", g.out_dir, "Output directory");

  std::size_t instances = 24;
  std::string fault;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every backward pass");
  gc->add_option("--instances", instances, "Random instances");
  gc->add_option("--inject-fault", fault, "Perturb the gradient of this op (test hook)");

  std::size_t fn = 16384, fd = 64, fh = 8;
  auto* flops = app.add_subcommand("flops", "Analytic MAC counts of every mechanism");
  flops->set_help_flag("--help", "Print this help message and exit");
  flops->add_option("--n", fn, "Tokens");
  flops->add_option("--d", fd, "Channels");
  flops->add_option("--h", fh, "Heads");

  auto* bench = app.add_subcommand("bench", "Wall-clock scaling curves");
  auto* train = app.add_subcommand("train", "Train the toy model");
  auto* sweep = app.add_subcommand("sweep", "Exchange threshold sweep");
  auto* trace = app.add_subcommand("trace", "Per-layer GeminiFusion attention weights");

  std::string ckpt_path;
  auto* verify = app.add_subcommand("ckpt-verify", "Load and validate a checkpoint");
  verify->add_option("path", ckpt_path, "Checkpoint file")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return kOk;
    }
    err << "error: " << e.what() << "\n";
    return kUsage;
  }

  try {
    if (*gc) return cmd_gradcheck(g, instances, fault, out);
    if (*flops) return cmd_flops(g, fn, fd, fh, out);
    if (*bench) return cmd_bench(g, out);
    if (*train) return cmd_train(g, out);
    if (*sweep) return cmd_sweep(g, out);
    if (*trace) return cmd_trace(g, out);
    if (*verify) return cmd_ckpt_verify(g, ckpt_path, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const DomainError& e) {
    err << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const ResourceError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kCheckFailed;
  }
  return kUsage;
}

}  // namespace gmnf::cli
