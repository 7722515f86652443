#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "edgewise/advisor.hpp"
#include "edgewise/data.hpp"
#include "edgewise/fabric.hpp"
#include "edgewise/oracle.hpp"
#include "edgewise/posterior.hpp"
#include "edgewise/synth.hpp"

namespace edgewise::cli {

// Exit codes: 0 ok, 1 usage or bad input, 2 resource refusal, 3 internal failure.
inline constexpr int exit_ok = 0;
inline constexpr int exit_usage = 1;
inline constexpr int exit_resource = 2;
inline constexpr int exit_internal = 3;

namespace detail {

inline std::string fmt17(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline PriorSpec parse_prior(const std::string& score, const std::string& rho) {
  PriorSpec prior;
  if (score == "k2") {
    prior.score = ScoreKind::k2;
  } else if (score.rfind("bdeu", 0) == 0) {
    prior.score = ScoreKind::bdeu;
    if (score.size() > 4) {
      if (score[4] != ':') throw CLI::ValidationError("--score", "expected bdeu:<ess> or k2");
      prior.ess = std::stod(score.substr(5));
      if (!(prior.ess > 0)) throw CLI::ValidationError("--score", "ess must be positive");
    }
  } else {
    throw CLI::ValidationError("--score", "expected bdeu:<ess> or k2");
  }
  if (rho == "one")
    prior.rho = RhoKind::one;
  else if (rho == "uniform")
    prior.rho = RhoKind::uniform_cardinality;
  else
    throw CLI::ValidationError("--rho", "expected uniform or one");
  return prior;
}

inline int workers_to_k(std::uint64_t workers) {
  if (workers == 0 || (workers & (workers - 1)) != 0)
    throw CLI::ValidationError("--workers", "workers must be a power of two");
  int k = 0;
  while ((std::uint64_t{1} << k) < workers) ++k;
  return k;
}

inline Backend parse_backend(const std::string& name) {
  if (name == "sim") return Backend::simulated;
  if (name == "par") return Backend::parallel;
  throw CLI::ValidationError("--backend", "expected sim or par");
}

inline std::uint64_t effective_mem_limit(std::uint64_t flag_value) {
  if (const char* env = std::getenv("EDGEWISE_MEM_LIMIT")) {
    return std::strtoull(env, nullptr, 10);
  }
  return flag_value;
}

inline std::vector<int> parse_int_list(const std::string& text, const char* flag) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(std::stoi(item));
  }
  if (out.empty()) throw CLI::ValidationError(flag, "expected a comma-separated integer list");
  return out;
}

inline void write_tsv(std::ostream& os, const DataMatrix& data, const EdgePosteriorMatrix& m) {
  os << "# log P(D) = " << fmt17(m.log_p_data) << "\n";
  for (int v = 0; v < m.n; ++v) os << "\t" << data.names[v];
  os << "\n";
  for (int u = 0; u < m.n; ++u) {
    os << data.names[u];
    for (int v = 0; v < m.n; ++v) {
      os << "\t";
      if (u != v) os << fmt17(m.at(u, v));
    }
    os << "\n";
  }
}

inline void write_json(std::ostream& os, const DataMatrix& data, const EdgePosteriorMatrix& m) {
  nlohmann::json j;
  j["n"] = m.n;
  j["variables"] = data.names;
  j["log_p_data"] = m.log_p_data;
  nlohmann::json edges = nlohmann::json::array();
  std::vector<std::pair<int, int>> pairs;
  for (int u = 0; u < m.n; ++u)
    for (int v = 0; v < m.n; ++v)
      if (u != v) pairs.emplace_back(u, v);
  std::stable_sort(pairs.begin(), pairs.end(), [&](auto a, auto b) {
    const double pa = m.at(a.first, a.second), pb = m.at(b.first, b.second);
    if (pa != pb) return pa > pb;
    return a < b;
  });
  for (auto [u, v] : pairs) {
    edges.push_back({{"from", data.names[u]}, {"to", data.names[v]}, {"posterior", m.at(u, v)}});
  }
  j["edges"] = edges;
  os << j.dump(2) << "\n";
}

inline std::unique_ptr<std::ofstream> open_out(const std::string& path, std::ostream*& os) {
  if (path.empty() || path == "-") {
    os = &std::cout;
    return nullptr;
  }
  auto file = std::make_unique<std::ofstream>(path);
  if (!*file) throw std::runtime_error("cannot open output file: " + path);
  os = file.get();
  return file;
}

struct PosteriorsArgs {
  std::string data_path, out = "-", format = "tsv", score = "bdeu:1", rho = "uniform";
  std::string backend = "sim", counters;
  int d = 3;
  std::uint64_t workers = 1;
  std::uint64_t mem_limit = std::uint64_t{4} << 30;
  bool self_test = false;
};

inline int run_posteriors(const PosteriorsArgs& a) {
  const PriorSpec prior = parse_prior(a.score, a.rho);
  const int k = workers_to_k(a.workers);
  const DataMatrix data = load_csv(a.data_path);
  const int d = std::min(a.d, data.n - 1);
  AssembleOptions opts;
  opts.mem_limit_bytes = effective_mem_limit(a.mem_limit);

  Fabric fabric(k, parse_backend(a.backend));
  if (a.self_test) {
    opts.no_filter_self_test = true;
    const EdgePosteriorMatrix m = assemble_edge_posteriors(fabric, data, prior, d, opts);
    double worst = 0.0;
    for (int u = 0; u < m.n; ++u)
      for (int v = 0; v < m.n; ++v)
        if (u != v) worst = std::max(worst, std::abs(std::log(m.at(u, v))));
    const bool pass = worst <= 1e-10;
    std::cout << "all-edges trivial-feature posterior = 1.0: " << (pass ? "PASS" : "FAIL")
              << " (max |log ratio| = " << worst << ")\n";
    return pass ? exit_ok : exit_internal;
  }

  const EdgePosteriorMatrix m = assemble_edge_posteriors(fabric, data, prior, d, opts);
  std::ostream* os = nullptr;
  auto file = open_out(a.out, os);
  if (a.format == "tsv")
    write_tsv(*os, data, m);
  else if (a.format == "json")
    write_json(*os, data, m);
  else
    throw CLI::ValidationError("--format", "expected tsv or json");
  if (!a.counters.empty()) {
    std::ofstream cf(a.counters);
    cf << fabric.counters_json() << "\n";
  }
  return exit_ok;
}

struct BenchArgs {
  std::string n_list = "8", d_list = "2", k_list = "0,1,2", out = "-", backend = "sim";
  int samples = 500;
  std::uint64_t seed = 42;
  std::uint64_t mem_limit = std::uint64_t{4} << 30;
};

inline int run_bench(const BenchArgs& a) {
  const auto ns = parse_int_list(a.n_list, "--n-list");
  const auto ds = parse_int_list(a.d_list, "--d-list");
  const auto ks = parse_int_list(a.k_list, "--k-list");
  const Backend backend = parse_backend(a.backend);
  const std::uint64_t limit = effective_mem_limit(a.mem_limit);
  const PriorSpec prior;

  std::ostream* os = nullptr;
  auto file = open_out(a.out, os);
  *os << "n,d,k,wall_seconds,speedup,efficiency,peak_bytes_per_worker,msgs_per_worker\n";

  using clock = std::chrono::steady_clock;
  for (int n : ns) {
    for (int d : ds) {
      if (d > n - 1) continue;
      const DataMatrix data = synth_data({n, d, a.samples, a.seed, 2});
      const auto t0 = clock::now();
      const EdgePosteriorMatrix serial = assemble_serial(data, prior, d, false, limit);
      const double serial_wall = std::chrono::duration<double>(clock::now() - t0).count();
      (void)serial;
      for (int k : ks) {
        if (k > n) continue;
        if (estimate_worker_table_bytes(n, k) > limit)
          throw ResourceError("estimated " + std::to_string(estimate_worker_table_bytes(n, k)) +
                              " bytes per worker exceed the limit of " + std::to_string(limit));
        Fabric fabric(k, backend);
        const auto t1 = clock::now();
        const EdgePosteriorMatrix m = assemble_edge_posteriors(fabric, data, prior, d);
        const double wall = std::chrono::duration<double>(clock::now() - t1).count();
        (void)m;
        const double speedup = wall > 0 ? serial_wall / wall : 0.0;
        const double efficiency = speedup / static_cast<double>(std::uint64_t{1} << k);
        char row[256];
        std::snprintf(row, sizeof row, "%d,%d,%d,%.6f,%.4f,%.4f,%llu,%llu\n", n, d, k, wall,
                      speedup, efficiency,
                      static_cast<unsigned long long>(fabric.max_table_bytes_peak()),
                      static_cast<unsigned long long>(fabric.max_sent_msgs()));
        *os << row;
        os->flush();
      }
    }
  }
  return exit_ok;
}

struct CheckArgs {
  std::string data_path, score = "bdeu:1", rho = "uniform";
  int d = 2;
  std::uint64_t workers = 1;
};

inline int run_check(const CheckArgs& a) {
  const PriorSpec prior = parse_prior(a.score, a.rho);
  const DataMatrix data = load_csv(a.data_path);
  if (data.n > 7) {
    std::cerr << "check: order enumeration needs n <= 7, got n = " << data.n << "\n";
    return exit_usage;
  }
  const int d = std::min(a.d, data.n - 1);
  const int k = workers_to_k(a.workers);
  Fabric fabric(k, Backend::simulated);
  const EdgePosteriorMatrix dp = assemble_edge_posteriors(fabric, data, prior, d);
  const EdgePosteriorMatrix ref = oracle_edge_posteriors(data, prior, d);

  double worst = 0.0;
  for (int u = 0; u < data.n; ++u)
    for (int v = 0; v < data.n; ++v) {
      if (u == v) continue;
      const double got = dp.at(u, v), want = ref.at(u, v);
      worst = std::max(worst, std::abs(got - want) / std::max(1e-300, std::abs(want)));
    }
  const double ev_err = std::abs(dp.log_p_data - ref.log_p_data) /
                        std::max(1.0, std::abs(ref.log_p_data));
  const bool pass = worst <= 1e-9 && ev_err <= 1e-9;
  std::cout << "oracle cross-check over " << data.n * (data.n - 1)
            << " edges: max relative deviation = " << worst
            << ", evidence deviation = " << ev_err << " -> " << (pass ? "PASS" : "FAIL") << "\n";
  return pass ? exit_ok : exit_internal;
}

}  // namespace detail

inline int run(int argc, const char* const* argv) {
  CLI::App app{"exact all-edges Bayesian network posteriors on a hypercube fabric"};
  app.require_subcommand(1);

  detail::PosteriorsArgs pa;
  auto* post = app.add_subcommand("posteriors", "compute P(u->v|D) for all ordered pairs");
  post->add_option("--data", pa.data_path, "input CSV (header row, categorical cells)")
      ->required();
  post->add_option("--max-indegree", pa.d, "parent-set size bound d");
  post->add_option("--workers", pa.workers, "worker count, a power of two");
  post->add_option("--backend", pa.backend, "sim | par");
  post->add_option("--score", pa.score, "bdeu:<ess> | k2");
  post->add_option("--rho", pa.rho, "uniform | one");
  post->add_option("--out", pa.out, "output path (- for stdout)");
  post->add_option("--format", pa.format, "tsv | json");
  post->add_option("--mem-limit", pa.mem_limit, "per-worker score-table byte budget");
  post->add_option("--counters", pa.counters, "write fabric counters JSON here");
  post->add_flag("--self-test", pa.self_test, "verify the trivial-feature identity and exit");

  detail::BenchArgs ba;
  auto* bench = app.add_subcommand("bench", "synthetic-data speedup/efficiency report");
  bench->add_option("--n-list", ba.n_list, "comma list of variable counts");
  bench->add_option("--d-list", ba.d_list, "comma list of indegree bounds");
  bench->add_option("--k-list", ba.k_list, "comma list of worker exponents");
  bench->add_option("--samples", ba.samples, "sample count per data set");
  bench->add_option("--seed", ba.seed, "generator seed");
  bench->add_option("--backend", ba.backend, "sim | par");
  bench->add_option("--out", ba.out, "output CSV path (- for stdout)");
  bench->add_option("--mem-limit", ba.mem_limit, "per-worker score-table byte budget");

  detail::CheckArgs ca;
  auto* check = app.add_subcommand("check", "cross-check against order enumeration (n <= 7)");
  check->add_option("--data", ca.data_path, "input CSV")->required();
  check->add_option("--max-indegree", ca.d, "parent-set size bound d");
  check->add_option("--score", ca.score, "bdeu:<ess> | k2");
  check->add_option("--rho", ca.rho, "uniform | one");
  check->add_option("--workers", ca.workers, "worker count, a power of two");

  int kn = 0, kd = 0;
  auto* kstar = app.add_subcommand("kstar", "worker-count advisor");
  kstar->add_option("--n", kn, "variable count")->required();
  kstar->add_option("--d", kd, "indegree bound")->required();

  SynthSpec ss;
  std::string synth_out = "-";
  auto* synth = app.add_subcommand("synth", "emit a synthetic discrete data set as CSV");
  synth->add_option("--n", ss.n, "variable count");
  synth->add_option("--d", ss.d, "max indegree of the generating DAG");
  synth->add_option("--samples", ss.samples, "sample count");
  synth->add_option("--seed", ss.seed, "generator seed");
  synth->add_option("--arity", ss.arity, "category count per variable");
  synth->add_option("--out", synth_out, "output CSV path (- for stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? exit_ok : exit_usage;
  }

  try {
    if (post->parsed()) return detail::run_posteriors(pa);
    if (bench->parsed()) return detail::run_bench(ba);
    if (check->parsed()) return detail::run_check(ca);
    if (kstar->parsed()) {
      const double ks = k_star(kn, kd);
      char line[128];
      std::snprintf(line, sizeof line, "k* = %.3f (suggest k = %d, workers = %llu)\n", ks,
                    static_cast<int>(std::lround(ks)),
                    static_cast<unsigned long long>(std::uint64_t{1} << static_cast<int>(std::lround(ks))));
      std::cout << line;
      return exit_ok;
    }
    if (synth->parsed()) {
      std::ostream* os = nullptr;
      auto file = detail::open_out(synth_out, os);
      write_csv(synth_data(ss), *os);
      return exit_ok;
    }
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_usage;
  } catch (const ResourceError& e) {
    std::cerr << "refused: " << e.what() << " (process overhead excluded from the estimate)\n";
    return exit_resource;
  } catch (const CsvError& e) {
    std::cerr << "bad input: " << e.what() << "\n";
    return exit_usage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_usage;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return exit_internal;
  }
  return exit_usage;
}

}  // namespace edgewise::cli
