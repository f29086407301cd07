// sympacool: dissipative-cooling simulator CLI.
//
// Subcommands map one-to-one onto the library's analyses: cool, sweep-delta,
// optimize, scale, transitions, spectrum. Standard output carries only the
// paths of written artifacts; progress goes to standard error. Exit codes:
// 0 ok, 2 config error, 3 numerical error.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sympacool/analysis.hpp"
#include "sympacool/observables.hpp"
#include "sympacool/protocol.hpp"
#include "sympacool/spectrum.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sympacool;

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Cli {
  std::string config_path;
  std::string out_dir = ".";
  int threads = 0;
  std::vector<std::string> overrides;  // key=value
  long long n_traj_flag = -1;
  long long seed_flag = -1;

  Config load() const {
    Config cfg = parse_config_file(config_path);
    for (const auto& s : overrides) {
      const auto eq = s.find('=');
      if (eq == std::string::npos)
        throw ValidationError("--set expects key=value, got '" + s + "'");
      cfg.set(s.substr(0, eq), s.substr(eq + 1));
    }
    if (n_traj_flag >= 0) cfg.set("n_traj", std::to_string(n_traj_flag));
    if (seed_flag >= 0) cfg.set("seed", std::to_string(seed_flag));
    return cfg;
  }

  int resolved_threads() const {
    if (threads > 0) return threads;
    if (const char* env = std::getenv("SYMPACOOL_THREADS"))
      if (const int t = std::atoi(env); t > 0) return t;
    return 0;  // engine default: hardware concurrency
  }
};

void add_common(CLI::App* cmd, Cli& cli) {
  cmd->add_option("-c,--config", cli.config_path, "config file (key = value)")
      ->required();
  cmd->add_option("-o,--out", cli.out_dir, "output directory");
  cmd->add_option("-t,--threads", cli.threads,
                  "worker threads (default: SYMPACOOL_THREADS or all cores)");
  cmd->add_option("--set", cli.overrides, "override a config key (key=value)");
  cmd->add_option("--n-traj", cli.n_traj_flag, "override n_traj");
  cmd->add_option("--seed", cli.seed_flag, "override seed");
}

class Manifest {
 public:
  Manifest(std::string command, const Cli& cli, const FullConfig& fc)
      : start_(std::chrono::steady_clock::now()), command_(std::move(command)),
        out_dir_(cli.out_dir), seed_(fc.seed) {
    for (const auto& e : run_to_config(fc).entries)
      config_[e.key] = e.value;
  }

  std::ofstream open(const std::string& name) {
    fs::create_directories(out_dir_);
    const fs::path p = fs::path(out_dir_) / name;
    std::ofstream os(p);
    if (!os) throw ValidationError("cannot write " + p.string());
    outputs_.push_back(p.string());
    return os;
  }

  void write_summary(const json& j) {
    auto os = open("summary.json");
    os << j.dump(2) << "\n";
  }

  // the manifest itself is written last, then all paths go to stdout
  void finish() {
    json j;
    j["command"] = command_;
    j["config"] = config_;
    j["code_version"] = SYMPACOOL_VERSION;
    j["master_seed"] = seed_;
    j["wall_time_s"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_)
            .count();
    j["outputs"] = outputs_;
    const fs::path p = fs::path(out_dir_) / "manifest.json";
    std::ofstream os(p);
    os << j.dump(2) << "\n";
    outputs_.push_back(p.string());
    for (const auto& o : outputs_) std::cout << o << "\n";
  }

 private:
  std::chrono::steady_clock::time_point start_;
  std::string command_;
  std::string out_dir_;
  std::uint64_t seed_;
  std::map<std::string, std::string> config_;
  std::vector<std::string> outputs_;
};

json spectrum_block(const SpectrumInfo& sp, double delta) {
  return {{"delta", delta},
          {"e0", sp.e0},
          {"gap", sp.gap},
          {"manifold_dim", sp.manifold_dim}};
}

int cmd_cool(const Cli& cli) {
  const FullConfig fc = config_to_run(cli.load());
  Manifest man("cool", cli, fc);
  std::cerr << "cool: " << to_string(fc.run.model.kind) << " N="
            << fc.run.model.n_sites << ", " << fc.n_traj << " trajectories\n";

  RunOptions opts;
  opts.threads = cli.resolved_threads();
  const auto cr = run_cooling(fc.run, fc.n_traj, fc.seed, opts);

  {
    auto os = man.open("timeseries.csv");
    os << "time,energy_mean,energy_sem,fidelity_mean,fidelity_sem,"
          "epsilon_mean,bath_up_population,cumulative_jumps_mean\n";
    const auto& e = cr.ens.at("energy");
    const auto& f = cr.ens.at("fidelity");
    const auto& eps = cr.ens.at("epsilon");
    const auto& up = cr.ens.at("bath_up");
    const auto& jc = cr.ens.at("jumps_cum");
    for (std::size_t i = 0; i < cr.ens.times.size(); ++i)
      os << fmt(cr.ens.times[i]) << "," << fmt(e.mean[i]) << ","
         << fmt(e.sem[i]) << "," << fmt(f.mean[i]) << "," << fmt(f.sem[i])
         << "," << fmt(eps.mean[i]) << "," << fmt(up.mean[i]) << ","
         << fmt(jc.mean[i]) << "\n";
  }

  const auto dis = cr.dissipation();
  json summary = spectrum_block(cr.spectrum, cr.delta);
  summary["final_energy"] = cr.final_mean("energy");
  summary["final_fidelity"] = cr.final_mean("fidelity");
  summary["final_epsilon"] = cr.final_mean("epsilon");
  summary["n_jump_count"] = dis.n_jump_count;
  summary["n_jump_integral"] = dis.n_jump_integral;
  summary["e_dis_count"] = dis.e_dis(DissipationMethod::DirectCount);
  summary["e_dis_integral"] = dis.e_dis(DissipationMethod::UpPopulationIntegral);
  if (auto t = first_crossing(cr.ens.times, cr.ens.at("epsilon").mean, 0.2, true))
    summary["t_p_eps_0.2"] = *t;
  man.write_summary(summary);
  man.finish();
  return 0;
}

int cmd_sweep(const Cli& cli, double frac_min, double frac_max, int points) {
  const FullConfig fc = config_to_run(cli.load());
  Manifest man("sweep-delta", cli, fc);

  RunSpec base = fc.run;
  base.bath.delta.reset();
  const double gap = resolve_delta(base);
  std::vector<double> grid;
  for (int i = 0; i < points; ++i)
    grid.push_back(gap * (frac_min + (frac_max - frac_min) * i / (points - 1)));
  std::cerr << "sweep-delta: " << points << " points in [" << grid.front()
            << ", " << grid.back() << "]\n";

  RunOptions opts;
  opts.threads = cli.resolved_threads();
  const auto sw = sweep_delta(base, grid, fc.n_traj, fc.seed, opts);

  {
    auto os = man.open("sweep.csv");
    os << "delta,final_energy,e_dis\n";
    for (std::size_t i = 0; i < grid.size(); ++i)
      os << fmt(sw.delta_grid[i]) << "," << fmt(sw.final_energy[i]) << ","
         << fmt(sw.e_dis[i]) << "\n";
  }
  json summary;
  summary["gap"] = sw.gap_reference;
  summary["argmin_delta"] = sw.argmin_energy;
  summary["argmin_delta_edis"] = sw.argmin_edis;
  summary["grid_step"] = grid[1] - grid[0];
  {
    const auto it = std::min_element(sw.final_energy.begin(), sw.final_energy.end());
    summary["fidelity_at_optimum"] =
        sw.final_fidelity[it - sw.final_energy.begin()];
  }
  man.write_summary(summary);
  man.finish();
  return 0;
}

int cmd_optimize(const Cli& cli, const std::string& objective, double eps_target,
                 int max_evals) {
  const FullConfig fc = config_to_run(cli.load());
  Manifest man("optimize", cli, fc);
  std::cerr << "optimize: objective=" << objective << "\n";

  OptimizeOptions opts;
  opts.run_opts.threads = cli.resolved_threads();
  opts.eps_target = eps_target;
  opts.nm.max_evals = max_evals;
  const ObjectiveKind kind = objective == "prep-time" ? ObjectiveKind::PrepTime
                                                      : ObjectiveKind::FinalEpsilon;
  const auto res = optimize_cooling(fc.run, kind, fc.n_traj, fc.seed, opts);

  {
    auto os = man.open("trace.csv");
    write_trace_csv(os, res);
  }
  json summary;
  summary["objective"] = objective;
  summary["best_objective"] = res.best_objective;
  summary["n_evaluations"] = res.n_evaluations;
  for (const auto& [name, value] : res.best_params)
    summary["best_params"][name] = value;
  man.write_summary(summary);
  man.finish();
  return 0;
}

int cmd_scale(const Cli& cli, int n_min, int n_max, double eps_target,
              int max_evals) {
  const FullConfig fc = config_to_run(cli.load());
  Manifest man("scale", cli, fc);
  if (n_max - n_min + 1 < 3)
    throw ValidationError("scale needs at least 3 sizes (--n-min/--n-max)");
  std::vector<int> sizes;
  for (int n = n_min; n <= n_max; ++n) sizes.push_back(n);
  std::cerr << "scale: N in [" << n_min << ", " << n_max << "]\n";

  ScalingOptions opts;
  opts.run_opts.threads = cli.resolved_threads();
  opts.nm.max_evals = max_evals;
  const auto res =
      scaling_study(fc.run.model, sizes, eps_target, fc.n_traj, fc.seed, opts);

  {
    auto os = man.open("scaling.csv");
    os << "n,t_p,g_sb,gamma\n";
    for (const auto& p : res.points)
      os << p.n << "," << fmt(p.t_p) << "," << fmt(p.params.at("g_sb")) << ","
         << fmt(p.params.at("gamma")) << "\n";
  }
  json summary;
  summary["alpha"] = res.alpha;
  summary["alpha_stderr"] = res.alpha_stderr;
  summary["intercept"] = res.intercept;
  if (res.intercept_odd) summary["intercept_odd"] = *res.intercept_odd;
  summary["eps_target"] = eps_target;
  man.write_summary(summary);
  man.finish();
  return 0;
}

int cmd_transitions(const Cli& cli) {
  const FullConfig fc = config_to_run(cli.load());
  Manifest man("transitions", cli, fc);

  const auto sp = exact_spectrum(build_system_hamiltonian(fc.run.model));
  const double delta = fc.run.bath.delta ? *fc.run.bath.delta : sp.gap;
  const auto graph = cooling_transition_graph(sp, delta, fc.run.bath.gamma);
  {
    auto os = man.open("transitions.txt");
    write_edge_list(os, graph);
  }
  int unreachable = 0;
  for (bool r : graph.reachable)
    if (!r) ++unreachable;
  json summary = spectrum_block(sp, delta);
  summary["gamma"] = fc.run.bath.gamma;
  summary["n_edges"] = graph.edges.size();
  summary["n_unreachable"] = unreachable;
  man.write_summary(summary);
  man.finish();
  return 0;
}

int cmd_spectrum(const Cli& cli) {
  const FullConfig fc = config_to_run(cli.load());
  Manifest man("spectrum", cli, fc);

  const auto sp = exact_spectrum(build_system_hamiltonian(fc.run.model));
  {
    auto os = man.open("spectrum.csv");
    os << "index,energy\n";
    for (int i = 0; i < sp.energies.size(); ++i)
      os << i << "," << fmt(sp.energies[i]) << "\n";
  }
  json summary = spectrum_block(sp, fc.run.bath.delta.value_or(sp.gap));
  man.write_summary(summary);
  man.finish();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sympathetic-cooling simulator"};
  app.require_subcommand(1);

  Cli cli;
  double frac_min = 0.5, frac_max = 1.5, eps_target = 0.2;
  int points = 11, max_evals = 150, n_min = 4, n_max = 8;
  std::string objective = "final-epsilon";

  auto* cool = app.add_subcommand("cool", "run one cooling experiment");
  add_common(cool, cli);
  auto* sweep = app.add_subcommand("sweep-delta", "sweep the bath splitting");
  add_common(sweep, cli);
  sweep->add_option("--frac-min", frac_min, "lowest delta as a fraction of the gap");
  sweep->add_option("--frac-max", frac_max, "highest delta as a fraction of the gap");
  sweep->add_option("--points", points, "grid size");
  auto* opt = app.add_subcommand("optimize", "optimize (g_sb, gamma)");
  add_common(opt, cli);
  opt->add_option("--objective", objective, "final-epsilon | prep-time")
      ->check(CLI::IsMember({"final-epsilon", "prep-time"}));
  opt->add_option("--eps-target", eps_target, "prep-time epsilon target");
  opt->add_option("--max-evals", max_evals, "evaluation budget");
  auto* scale = app.add_subcommand("scale", "preparation-time scaling study");
  add_common(scale, cli);
  scale->add_option("--n-min", n_min, "smallest system size");
  scale->add_option("--n-max", n_max, "largest system size");
  scale->add_option("--eps-target", eps_target, "epsilon target");
  scale->add_option("--max-evals", max_evals, "per-size evaluation budget");
  auto* trans = app.add_subcommand("transitions", "cooling transition graph");
  add_common(trans, cli);
  auto* spec = app.add_subcommand("spectrum", "exact spectrum of H_sys");
  add_common(spec, cli);

  CLI11_PARSE(app, argc, argv);

  try {
    if (cool->parsed()) return cmd_cool(cli);
    if (sweep->parsed()) return cmd_sweep(cli, frac_min, frac_max, points);
    if (opt->parsed()) return cmd_optimize(cli, objective, eps_target, max_evals);
    if (scale->parsed()) return cmd_scale(cli, n_min, n_max, eps_target, max_evals);
    if (trans->parsed()) return cmd_transitions(cli);
    if (spec->parsed()) return cmd_spectrum(cli);
  } catch (const ValidationError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const CapacityError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NotConvergedError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const IntegrationError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
