#include "mftg/cli.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "mftg/errors.hpp"
#include "mftg/json_io.hpp"
#include "mftg/learn.hpp"
#include "mftg/model.hpp"
#include "mftg/riccati.hpp"
#include "mftg/sim.hpp"
#include "mftg/threading.hpp"

namespace mftg {

namespace fs = std::filesystem;

namespace {

constexpr const char* kTraceHeader =
    "schema,algo,t,k,cost_estimate,err_K,err_L,grad_norm,proj_active,wall_ms,"
    "seed";
constexpr const char* kSummaryHeader =
    "algo,T,final_gap,budget_matched_gap,total_evals,wall_ms";
constexpr int kSchemaVersion = 1;

// Emitted next to every trace so results can be plotted offline.
constexpr const char* kPlotScript = R"PY(#!/usr/bin/env python3
"""Plot error traces emitted by the robust-mftg CLI.

Usage: plot_traces.py [trace.csv ...]
Without arguments, plots every trace_*.csv / trace.csv in this directory.
Writes one PNG per input next to the CSV.
"""
import csv
import glob
import os
import sys


def load(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def main():
    paths = sys.argv[1:]
    if not paths:
        here = os.path.dirname(os.path.abspath(__file__))
        paths = sorted(glob.glob(os.path.join(here, "trace*.csv")))
    if not paths:
        print("no trace CSVs found")
        return 1
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        print("matplotlib not available; install it to plot")
        return 1
    for path in paths:
        rows = load(path)
        if not rows:
            continue
        err = [float(r["err_K"]) for r in rows if r["err_K"] != ""]
        err_l = [float(r["err_L"]) for r in rows if r["err_L"] != ""]
        cost = [float(r["cost_estimate"]) for r in rows]
        fig, ax = plt.subplots(figsize=(7, 4))
        if err:
            ax.semilogy(err, label="err_K")
        if err_l:
            ax.semilogy(err_l, label="err_L")
        if not err and not err_l:
            ax.plot(cost, label="cost estimate")
        ax.set_xlabel("iteration (trace row)")
        ax.set_ylabel("error" if err else "cost")
        ax.set_title(os.path.basename(path))
        ax.legend()
        out = os.path.splitext(path)[0] + ".png"
        fig.tight_layout()
        fig.savefig(out, dpi=120)
        print("wrote", out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
)PY";

std::string csv_field(double v, bool present = true) {
  return present ? format_double(v) : std::string();
}

void write_trace_csv(const fs::path& path, const std::string& algo,
                     const std::vector<TraceRow>& rows, std::uint64_t seed,
                     bool timings) {
  std::ofstream out(path);
  if (!out) throw ConfigError(path.string(), "cannot open file for writing");
  out << kTraceHeader << '\n';
  for (const auto& row : rows) {
    out << kSchemaVersion << ',' << algo << ',' << row.t << ',' << row.k << ','
        << format_double(row.cost_estimate) << ','
        << csv_field(row.err_k, row.has_gap) << ','
        << csv_field(row.err_l, row.has_gap) << ','
        << format_double(row.grad_norm) << ',' << (row.proj_active ? 1 : 0)
        << ',' << format_double(timings ? row.wall_ms : 0.0) << ',' << seed
        << '\n';
  }
}

struct SummaryRow {
  std::string algo;
  int horizon = 0;
  double final_gap = 0.0;
  double budget_matched_gap = 0.0;
  double total_evals = 0.0;
  double wall_ms = 0.0;
};

void write_summary_csv(const fs::path& path,
                       const std::vector<SummaryRow>& rows, bool timings) {
  std::ofstream out(path);
  if (!out) throw ConfigError(path.string(), "cannot open file for writing");
  out << kSummaryHeader << '\n';
  for (const auto& r : rows) {
    out << r.algo << ',' << r.horizon << ',' << format_double(r.final_gap)
        << ',' << format_double(r.budget_matched_gap) << ','
        << format_double(r.total_evals) << ','
        << format_double(timings ? r.wall_ms : 0.0) << '\n';
  }
}

void write_manifest(const fs::path& dir, const std::string& command,
                    const std::string& model_path, std::uint64_t seed,
                    const Json& config) {
  Json manifest;
  manifest["tool_version"] = kToolVersion;
  manifest["command"] = command;
  manifest["model_path"] = model_path;
  manifest["seed"] = seed;
  manifest["output_dir"] = dir.string();
  manifest["config"] = config;
  write_json_file(dir / "manifest.json", manifest);
}

// Running Nash gap along a receding-horizon trace: timesteps not yet
// visited sit at their zero-gain value.
std::vector<double> running_gap(const std::vector<TraceRow>& rows,
                                const RiccatiSolution& oracle) {
  const int T = static_cast<int>(oracle.nash_gains.k1.size());
  const auto& gains = oracle.nash_gains;
  PolicyProfile zeros;
  zeros.k1.assign(T, Mat::Zero(gains.k1[0].rows(), gains.k1[0].cols()));
  zeros.l1 = zeros.k1;
  zeros.k2.assign(T, Mat::Zero(gains.k2[0].rows(), gains.k2[0].cols()));
  zeros.l2 = zeros.k2;
  const auto zero_gap = nash_gap(zeros, oracle);
  std::vector<double> per_t(T);
  for (int t = 0; t < T; ++t)
    per_t[t] = std::max(zero_gap.err_k[t], zero_gap.err_l[t]);
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& row : rows) {
    if (row.has_gap && row.t >= 0 && row.t < T)
      per_t[row.t] = std::max(row.err_k, row.err_l);
    double g = 0.0;
    for (double v : per_t) g = std::max(g, v);
    if (row.t < 0 && row.has_gap) g = std::max(row.err_k, row.err_l);
    out.push_back(g);
  }
  return out;
}

int resolve_threads(int flag_value) {
  if (const char* env = std::getenv("ROBUST_MFTG_THREADS")) {
    try {
      return std::max(1, std::stoi(env));
    } catch (...) {
      throw ConfigError("ROBUST_MFTG_THREADS", "not an integer");
    }
  }
  return flag_value;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"Robust linear-quadratic mean-field-type games: exact Riccati "
               "solutions, attenuation certificates, simulation, and "
               "receding-horizon learners"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads,
                 "worker cap for rollouts and batch evaluations");
  app.set_version_flag("--version", std::string(kToolVersion));

  // solve ------------------------------------------------------------
  auto* solve = app.add_subcommand(
      "solve", "solve the coupled Riccati recursions and write Nash gains");
  std::string solve_model, solve_out = ".";
  solve->add_option("model", solve_model, "model config path")->required();
  solve->add_option("--out", solve_out, "output directory");

  // check-gamma --------------------------------------------------------
  auto* check = app.add_subcommand(
      "check-gamma", "attenuation viability verdict or minimal-gamma search");
  std::string check_model, check_mode = "mf";
  int check_agents = 0;
  std::vector<double> bisect;
  double c_override = -1.0;
  std::string check_out = ".";
  check->add_option("model", check_model, "model config path")->required();
  check->add_option("--mode", check_mode, "mf | finite")
      ->check(CLI::IsMember({"mf", "finite"}));
  check->add_option("--agents", check_agents,
                    "population size N (finite mode)");
  check->add_option("--bisect", bisect,
                    "lo hi tol: search the minimal viable gamma")
      ->expected(3);
  check->add_option("--c-override", c_override,
                    "override the finite-population constant C");
  check->add_option("--out", check_out, "output directory");

  // learn --------------------------------------------------------------
  auto* learn = app.add_subcommand("learn", "run a learner and write traces");
  std::string learn_model, learn_algo = "ergda", learn_out = ".";
  int iters = 1000, batch = 100, agents = 100, rollouts = 1;
  double lr = 1e-3, radius = 0.1, proj_radius_sq = -1.0;
  std::uint64_t seed = 0;
  bool lr_decay = false, antithetic = false, baseline_shift = false;
  bool timings = false;
  learn->add_option("model", learn_model, "model config path")->required();
  learn->add_option("--algo", learn_algo, "rgda | ergda | baseline")
      ->check(CLI::IsMember({"rgda", "ergda", "baseline"}));
  learn->add_option("--iters", iters, "inner-loop iterations K");
  learn->add_option("--lr", lr, "learning rate eta");
  learn->add_flag("--lr-decay", lr_decay, "use eta_k = eta / (k+1)");
  learn->add_option("--batch", batch, "zero-order mini-batch N_b");
  learn->add_option("--radius", radius, "zero-order smoothing radius r");
  learn->add_option("--agents", agents, "simulated population size M");
  learn->add_option("--rollouts", rollouts, "rollouts per cost evaluation");
  learn->add_option("--seed", seed, "master seed");
  learn->add_option("--proj-radius-sq", proj_radius_sq,
                    "projection ball D (default: from the Riccati oracle)");
  learn->add_flag("--antithetic", antithetic, "antithetic rollout pairing");
  learn->add_flag("--baseline-shift", baseline_shift,
                  "subtract J(base) in the zero-order estimator");
  learn->add_flag("--timings", timings,
                  "record wall-clock in CSVs (breaks byte-identical reruns)");
  learn->add_option("--out", learn_out, "output directory");

  // compare --------------------------------------------------------------
  auto* compare = app.add_subcommand(
      "compare", "head-to-head E-RGDA vs baseline over a horizon sweep");
  std::string cmp_model, cmp_out = ".";
  std::vector<int> horizons{2, 3, 4, 5};
  int cmp_iters = 70;
  double cmp_lr = 0.025;
  std::uint64_t cmp_seed = 0;
  bool cmp_timings = false;
  compare->add_option("model", cmp_model, "model config path")->required();
  compare->add_option("--horizons", horizons, "horizon list");
  compare->add_option("--iters", cmp_iters, "iterations for both learners");
  compare->add_option("--lr", cmp_lr, "learning rate for both learners");
  compare->add_option("--seed", cmp_seed, "master seed");
  compare->add_flag("--timings", cmp_timings, "record wall-clock in CSVs");
  compare->add_option("--out", cmp_out, "output directory");

  try {
    std::vector<const char*> argv;
    argv.push_back("robust_mftg");
    for (const auto& a : args) argv.push_back(a.c_str());
    app.parse(static_cast<int>(argv.size()), argv.data());

    set_thread_count(resolve_threads(threads > 0 ? threads : thread_count()));

    if (*solve) {
      const auto model = load_model(solve_model);
      const auto sol = solve_riccati(model);
      fs::create_directories(solve_out);
      write_json_file(fs::path(solve_out) / "gains.json",
                      policy_to_json(sol.nash_gains));
      Json solution;
      solution["nash_value"] = sol.nash_value;
      solution["cond1_holds"] = sol.cond1_holds;
      solution["failure_time"] = sol.failure_time;
      solution["aborted"] = sol.aborted;
      if (!sol.aborted) {
        solution["m_seq"] = matrix_seq_to_json(sol.m_seq);
        solution["m_bar_seq"] = matrix_seq_to_json(sol.m_bar_seq);
        solution["lambda_seq"] = matrix_seq_to_json(sol.lambda_seq);
        solution["lambda_bar_seq"] = matrix_seq_to_json(sol.lambda_bar_seq);
        solution["n_seq"] = sol.n_seq;
        solution["n_bar_seq"] = sol.n_bar_seq;
      }
      write_json_file(fs::path(solve_out) / "solution.json", solution);
      Json config;
      config["out"] = solve_out;
      write_manifest(solve_out, "solve", solve_model, 0, config);
      out << "nash_value=" << format_double(sol.nash_value) << '\n';
      out << "cond1=" << (sol.cond1_holds ? "true" : "false");
      if (!sol.cond1_holds) out << " failure_time=" << sol.failure_time;
      out << '\n';
      out << "wrote " << (fs::path(solve_out) / "gains.json").string() << '\n';
      return kExitOk;
    }

    if (*check) {
      const auto model = load_model(check_model);
      if (check_mode == "finite" && check_agents < 1)
        throw ConfigError("--agents", "finite mode needs --agents >= 1");
      fs::create_directories(check_out);
      Json report;
      report["mode"] = check_mode;

      if (!bisect.empty()) {
        ViabilityMode mode;
        mode.kind = check_mode == "finite" ? ViabilityMode::kFinite
                                           : ViabilityMode::kMeanField;
        mode.n_agents = check_agents;
        if (c_override >= 0.0) mode.c_override = c_override;
        const auto res =
            find_min_viable_gamma(model, bisect[0], bisect[1], bisect[2], mode);
        if (!res.monotonic)
          err << "WARNING: viability was not monotone on evaluated gammas\n";
        report["monotonic"] = res.monotonic;
        if (res.gamma) {
          report["min_gamma"] = *res.gamma;
          out << "MIN-GAMMA " << format_double(*res.gamma) << '\n';
        } else {
          report["min_gamma"] = nullptr;
          out << "NONE-IN-RANGE\n";
        }
      } else {
        const auto sol = solve_riccati(model);
        Viability v;
        if (check_mode == "mf") {
          v = check_viability_mf(model, sol);
        } else {
          PopulationGapAnalysis gap;
          gap.horizon = model.horizon;
          gap.sigma_f = 1.0;
          gap.c1 = c_override >= 0.0 ? c_override
                                     : finite_population_constant(model, sol);
          v = check_viability_finite(model, sol, gap, check_agents);
        }
        report["gamma"] = model.gamma;
        report["viable"] = v.viable;
        report["margin"] = v.margin;
        out << (v.viable ? "VIABLE" : "NOT-VIABLE")
            << " margin=" << format_double(v.margin) << '\n';
      }
      write_json_file(fs::path(check_out) / "report.json", report);
      Json config;
      config["mode"] = check_mode;
      config["agents"] = check_agents;
      config["bisect"] = bisect;
      config["c_override"] = c_override;
      write_manifest(check_out, "check-gamma", check_model, 0, config);
      return kExitOk;
    }

    if (*learn) {
      const auto model = load_model(learn_model);
      const auto oracle = solve_riccati(model);
      const RiccatiSolution* oracle_ptr = oracle.aborted ? nullptr : &oracle;

      RgdaConfig cfg;
      cfg.inner_iters = iters;
      cfg.lr = lr;
      cfg.lr_decay = lr_decay;
      cfg.smoothing.radius = radius;
      cfg.smoothing.batch = batch;
      cfg.smoothing.baseline_shift = baseline_shift;
      cfg.sim.n_agents = agents;
      cfg.sim.n_rollouts = rollouts;
      cfg.sim.antithetic = antithetic;
      cfg.sim.seed = seed;
      cfg.seed = seed;
      cfg.proj_radius_sq = proj_radius_sq > 0.0
                               ? proj_radius_sq
                               : default_projection_radius_sq(oracle);
      cfg.gradient_mode = learn_algo == "rgda" ? GradientMode::kZeroOrder
                                               : GradientMode::kExact;

      LearnResult result;
      if (learn_algo == "baseline")
        result = baseline_gda(model, cfg, oracle_ptr);
      else
        result = rgda(model, cfg, oracle_ptr);

      fs::create_directories(learn_out);
      write_trace_csv(fs::path(learn_out) / "trace.csv", learn_algo,
                      result.trace.rows, seed, timings);
      write_json_file(fs::path(learn_out) / "gains.json",
                      policy_to_json(result.policy));
      write_text_file(fs::path(learn_out) / "plot_traces.py", kPlotScript);

      Json config;
      config["algo"] = learn_algo;
      config["iters"] = iters;
      config["lr"] = lr;
      config["lr_decay"] = lr_decay;
      config["batch"] = batch;
      config["radius"] = radius;
      config["agents"] = agents;
      config["rollouts"] = rollouts;
      config["proj_radius_sq"] = cfg.proj_radius_sq;
      config["antithetic"] = antithetic;
      config["baseline_shift"] = baseline_shift;
      config["timings"] = timings;
      config["threads"] = thread_count();
      write_manifest(learn_out, "learn", learn_model, seed, config);

      if (oracle_ptr != nullptr) {
        const auto gap = nash_gap(result.policy, oracle);
        out << "final_gap="
            << format_double(std::max(gap.max_err_k, gap.max_err_l)) << '\n';
      } else {
        out << "final_gap=absent (Riccati recursion aborted)\n";
      }
      out << "wrote " << (fs::path(learn_out) / "trace.csv").string() << '\n';
      return kExitOk;
    }

    if (*compare) {
      const auto base_model = load_model(cmp_model);
      fs::create_directories(cmp_out);
      std::vector<SummaryRow> summary;

      for (int T : horizons) {
        if (T < 1) throw ConfigError("--horizons", "horizons must be >= 1");
        // Rebroadcast the model's time-invariant template to this horizon.
        LqMftgModel model = base_model;
        model.horizon = T;
        model.a.assign(T, base_model.a[0]);
        model.a_bar.assign(T, base_model.a_bar[0]);
        model.b.assign(T, base_model.b[0]);
        model.b_bar.assign(T, base_model.b_bar[0]);
        model.q.assign(T + 1, base_model.q[0]);
        model.q.back() = base_model.q.back();
        model.q_bar.assign(T + 1, base_model.q_bar[0]);
        model.q_bar.back() = base_model.q_bar.back();

        const auto oracle = solve_riccati(model);
        const RiccatiSolution* oracle_ptr = oracle.aborted ? nullptr : &oracle;

        RgdaConfig cfg;
        cfg.inner_iters = cmp_iters;
        cfg.lr = cmp_lr;
        cfg.seed = cmp_seed;
        cfg.sim.seed = cmp_seed;
        cfg.gradient_mode = GradientMode::kExact;
        cfg.proj_radius_sq = default_projection_radius_sq(oracle);

        auto ergda_res = rgda(model, cfg, oracle_ptr);
        auto base_res = baseline_gda(model, cfg, oracle_ptr);

        write_trace_csv(fs::path(cmp_out) /
                            ("trace_ergda_T" + std::to_string(T) + ".csv"),
                        "ergda", ergda_res.trace.rows, cmp_seed, cmp_timings);
        write_trace_csv(fs::path(cmp_out) /
                            ("trace_baseline_T" + std::to_string(T) + ".csv"),
                        "baseline", base_res.trace.rows, cmp_seed,
                        cmp_timings);

        auto summarize = [&](const std::string& algo, const LearnResult& res,
                             double budget) {
          SummaryRow row;
          row.algo = algo;
          row.horizon = T;
          row.total_evals =
              res.trace.evals_per_row * static_cast<double>(res.trace.rows.size());
          row.wall_ms =
              res.trace.rows.empty() ? 0.0 : res.trace.rows.back().wall_ms;
          if (oracle_ptr != nullptr) {
            const auto gap = nash_gap(res.policy, oracle);
            row.final_gap = std::max(gap.max_err_k, gap.max_err_l);
            const auto gaps = running_gap(res.trace.rows, oracle);
            const auto limit = static_cast<std::size_t>(
                budget / res.trace.evals_per_row);
            const std::size_t idx =
                std::min(gaps.size(), std::max<std::size_t>(limit, 1)) - 1;
            row.budget_matched_gap = gaps.empty() ? 0.0 : gaps[idx];
          }
          return row;
        };

        const double budget =
            std::min(ergda_res.trace.evals_per_row *
                         static_cast<double>(ergda_res.trace.rows.size()),
                     base_res.trace.evals_per_row *
                         static_cast<double>(base_res.trace.rows.size()));
        summary.push_back(summarize("ergda", ergda_res, budget));
        summary.push_back(summarize("baseline", base_res, budget));
      }

      write_summary_csv(fs::path(cmp_out) / "summary.csv", summary,
                        cmp_timings);
      write_text_file(fs::path(cmp_out) / "plot_traces.py", kPlotScript);
      Json config;
      config["horizons"] = horizons;
      config["iters"] = cmp_iters;
      config["lr"] = cmp_lr;
      config["timings"] = cmp_timings;
      write_manifest(cmp_out, "compare", cmp_model, cmp_seed, config);
      out << "wrote " << (fs::path(cmp_out) / "summary.csv").string() << '\n';
      return kExitOk;
    }

    return kExitOk;
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kToolVersion << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
}

}  // namespace mftg
