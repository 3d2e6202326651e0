// Copyright 2026 The gmnf Authors
// SPDX-License-Identifier: Apache-2.0

#include "gmnf/bench.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstring>
#include <functional>
#include <optional>
#include <utility>

#ifdef __linux__
#include <pthread.h>
#include <sched.h>
#endif

#include "gmnf/cost_model.hpp"
#include "gmnf/errors.hpp"
#include "gmnf/exchange.hpp"
#include "gmnf/fusion.hpp"
#include "gmnf/rng.hpp"

namespace gmnf {

namespace {

std::atomic<bool> g_busy{false};

class BusyGuard {
 public:
  BusyGuard() {
    if (g_busy.exchange(true)) throw StateError("benchmark already running in this process");
  }
  ~BusyGuard() { g_busy.store(false); }
  BusyGuard(const BusyGuard&) = delete;
  BusyGuard& operator=(const BusyGuard&) = delete;
};

class CpuPin {
 public:
  explicit CpuPin(bool enable) {
#ifdef __linux__
    if (!enable) return;
    if (pthread_getaffinity_np(pthread_self(), sizeof(old_), &old_) != 0) return;
    const int cpu = sched_getcpu();
    if (cpu < 0) return;
    cpu_set_t one;
    CPU_ZERO(&one);
    CPU_SET(cpu, &one);
    pinned_ = pthread_setaffinity_np(pthread_self(), sizeof(one), &one) == 0;
#else
    (void)enable;
#endif
  }
  ~CpuPin() {
#ifdef __linux__
    if (pinned_) pthread_setaffinity_np(pthread_self(), sizeof(old_), &old_);
#endif
  }
  CpuPin(const CpuPin&) = delete;
  CpuPin& operator=(const CpuPin&) = delete;
  bool pinned() const { return pinned_; }

 private:
  bool pinned_ = false;
#ifdef __linux__
  cpu_set_t old_{};
#endif
};

void hash_into(std::uint64_t& h, const Tensor& t) {
  for (double v : t.values()) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xffu;
      h *= 0x100000001b3ull;
    }
  }
}

constexpr std::uint64_t kFnvBasis = 0xcbf29ce484222325ull;

}  // namespace

bool bench_in_progress() { return g_busy.load(); }

const std::vector<std::string>& bench_ops() {
  static const std::vector<std::string> ops = {"exchange", "cross_attention", "pixelwise",
                                               "geminifusion"};
  return ops;
}

double median(std::vector<double> xs) {
  if (xs.empty()) throw ConfigError("median of an empty sample");
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

double median_abs_deviation(const std::vector<double>& xs) {
  const double m = median(xs);
  std::vector<double> dev;
  dev.reserve(xs.size());
  for (double x : xs) dev.push_back(std::abs(x - m));
  return median(std::move(dev));
}

BenchResult time_op(std::string_view op, std::size_t n, std::size_t d, std::size_t h,
                    const BenchConfig& cfg) {
  const auto& ops = bench_ops();
  if (std::find(ops.begin(), ops.end(), op) == ops.end()) {
    throw ConfigError("unknown bench op '" + std::string(op) + "'");
  }
  if (cfg.repeats < 5) {
    throw ConfigError("bench repeats must be at least 5, got " + std::to_string(cfg.repeats));
  }
  if (n == 0 || d == 0) throw ConfigError("bench needs n >= 1 and d >= 1");
  if (h == 0 || d % h != 0) {
    throw ConfigError("bench heads must divide d (d=" + std::to_string(d) +
                      ", h=" + std::to_string(h) + ")");
  }
  if (d != 0 && n > cfg.memory_cap / d) {
    throw ResourceError("bench size n*d = " + std::to_string(n) + "*" + std::to_string(d) +
                        " exceeds the memory cap of " + std::to_string(cfg.memory_cap) +
                        " elements");
  }

  BusyGuard busy;

  Rng rng = Rng(cfg.seed).derive("bench");
  const Tensor x1 = rng_normal(rng, {n, d}, 0.0, 1.0);
  const Tensor x2 = rng_normal(rng, {n, d}, 0.0, 1.0);
  FusionParams params;
  ExchangeConfig ex;
  const bool is_exchange = op == "exchange";
  if (is_exchange) {
    ex = ExchangeConfig::init(d, 0.5, rng);
  } else {
    params = FusionParams::init(d, h, rng);
  }

  auto input_checksum = [&] {
    std::uint64_t c = kFnvBasis;
    hash_into(c, x1);
    hash_into(c, x2);
    if (is_exchange) {
      hash_into(c, ex.w1);
      hash_into(c, ex.b1);
      hash_into(c, ex.w2);
      hash_into(c, ex.b2);
    } else {
      for_each_tensor(std::as_const(params), [&](std::string_view, const Tensor& t) { hash_into(c, t); });
    }
    return c;
  };

  std::function<FusionOutput()> run;
  if (is_exchange) {
    run = [&] {
      const Tensor s1 = score_predict(x1, ex);
      const Tensor s2 = score_predict(x2, ex);
      return token_exchange(x1, x2, s1, s2, ex.theta);
    };
  } else if (op == "cross_attention") {
    run = [&] { return cross_attention(x1, x2, params, false); };
  } else if (op == "pixelwise") {
    run = [&] { return pixelwise_cross_attention(x1, x2, params, false); };
  } else {
    run = [&] { return geminifusion_forward(x1, x2, params, GeminiOptions{}, false); };
  }

  BenchResult r;
  r.op = std::string(op);
  r.n = n;
  r.d = d;
  r.h = h;
  r.repeats = cfg.repeats;
  r.warmup = cfg.warmup;
  r.input_checksum = input_checksum();

  CpuPin pin(cfg.pin_cpu);
  r.pinned = pin.pinned();

  std::optional<std::uint64_t> out_sum;
  auto check_output = [&](const FusionOutput& out) {
    std::uint64_t c = kFnvBasis;
    hash_into(c, out.y1);
    hash_into(c, out.y2);
    if (out_sum && *out_sum != c) throw StateError("bench " + r.op + ": output changed between runs");
    out_sum = c;
  };

  for (std::size_t i = 0; i < cfg.warmup; ++i) check_output(run());
  r.samples_ns.reserve(cfg.repeats);
  for (std::size_t i = 0; i < cfg.repeats; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    FusionOutput out = run();
    const auto t1 = std::chrono::steady_clock::now();
    r.samples_ns.push_back(
        static_cast<double>(std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count()));
    check_output(out);
  }
  if (input_checksum() != r.input_checksum) {
    throw StateError("bench " + r.op + ": inputs changed while timing");
  }
  r.output_checksum = *out_sum;
  r.median_ns = median(r.samples_ns);
  r.mad_ns = median_abs_deviation(r.samples_ns);
  r.load_warning = r.median_ns > 0 && r.mad_ns / r.median_ns > cfg.load_threshold;
  return r;
}

std::vector<std::size_t> default_scaling_sizes() { return {256, 512, 1024, 2048, 4096, 8192}; }

ScalingCurve scaling_curve(std::string_view op, std::size_t d, std::size_t h,
                           const std::vector<std::size_t>& n_list, const BenchConfig& cfg) {
  if (n_list.size() < 3) {
    throw ConfigError("scaling curve needs at least 3 sizes, got " + std::to_string(n_list.size()));
  }
  ScalingCurve curve;
  curve.op = std::string(op);
  curve.d = d;
  curve.h = h;
  std::vector<double> xs, ys;
  for (std::size_t n : n_list) {
    curve.points.push_back(time_op(op, n, d, h, cfg));
    xs.push_back(std::log(static_cast<double>(n)));
    ys.push_back(std::log(std::max(curve.points.back().median_ns, 1.0)));
  }
  curve.slope = least_squares_slope(xs, ys);
  return curve;
}

namespace {

void append_number(std::string& out, double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

}  // namespace

std::string bench_csv(const std::vector<BenchResult>& results) {
  std::string out = "op,n,d,h,median_ns,mad_ns\n";
  for (const auto& r : results) {
    out += r.op + "," + std::to_string(r.n) + "," + std::to_string(r.d) + "," + std::to_string(r.h) + ",";
    append_number(out, r.median_ns);
    out += ",";
    append_number(out, r.mad_ns);
    out += "\n";
  }
  return out;
}

nlohmann::ordered_json to_json(const BenchResult& r) {
  nlohmann::ordered_json j;
  j["op"] = r.op;
  j["n"] = r.n;
  j["d"] = r.d;
  j["h"] = r.h;
  j["repeats"] = r.repeats;
  j["warmup"] = r.warmup;
  j["samples_ns"] = r.samples_ns;
  j["median_ns"] = r.median_ns;
  j["mad_ns"] = r.mad_ns;
  j["load_warning"] = r.load_warning;
  j["pinned"] = r.pinned;
  return j;
}

}  // namespace gmnf
