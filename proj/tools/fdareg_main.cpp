// Command-line front end: simulate | register | evaluate.
//
// Exit codes: 0 success, 1 runtime failure (bad inputs, fit errors),
// 2 usage errors.  Every command writes a manifest.json describing the run.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "fdareg/analysis.hpp"
#include "fdareg/avb.hpp"
#include "fdareg/csv_io.hpp"
#include "fdareg/manifest.hpp"
#include "fdareg/mcmc.hpp"
#include "fdareg/model.hpp"
#include "fdareg/simulate.hpp"
#include "fdareg/stats.hpp"
#include "fdareg/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fdareg;

namespace {

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << text;
}

json vec_json(const Eigen::VectorXd& v) {
  json arr = json::array();
  for (int k = 0; k < v.size(); ++k) arr.push_back(v(k));
  return arr;
}

// One array per column (per function).
json cols_json(const Eigen::MatrixXd& m) {
  json arr = json::array();
  for (int i = 0; i < m.cols(); ++i) arr.push_back(vec_json(m.col(i)));
  return arr;
}

Eigen::MatrixXd cols_from_json(const json& arr) {
  if (!arr.is_array() || arr.empty()) {
    throw std::runtime_error("expected a non-empty array of columns");
  }
  const int n = static_cast<int>(arr.size());
  const int p = static_cast<int>(arr[0].size());
  Eigen::MatrixXd m(p, n);
  for (int i = 0; i < n; ++i) {
    if (static_cast<int>(arr[i].size()) != p) {
      throw std::runtime_error("ragged column array in truth file");
    }
    for (int j = 0; j < p; ++j) m(j, i) = arr[i][j].get<double>();
  }
  return m;
}

// Collects run metadata and writes manifest.json exactly once, also on the
// failure path, so a run directory is always self-describing.
class ManifestWriter {
 public:
  ManifestWriter(std::string command, std::string out_dir)
      : out_dir_(std::move(out_dir)), start_(std::chrono::steady_clock::now()) {
    doc_["command"] = std::move(command);
    doc_["versions"] = {{"fdareg", version_string}};
  }

  json& doc() { return doc_; }

  void add_input(const std::string& path) { doc_["inputs"][path] = sha256_file(path); }
  void add_output(const std::string& name) {
    doc_["outputs"][name] = sha256_file((fs::path(out_dir_) / name).string());
  }

  void finish(bool ok, const std::string& error = "") {
    doc_["status"] = ok ? "ok" : "failed";
    if (!ok) doc_["error"] = error;
    doc_["wall_time_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    write_text((fs::path(out_dir_) / "manifest.json").string(), doc_.dump(2) + "\n");
  }

 private:
  std::string out_dir_;
  json doc_;
  std::chrono::steady_clock::time_point start_;
};

struct SimulateArgs {
  int set = 1;
  int n = 0;  // 0: per-set default (21 for set 1, 20 for set 2)
  int p = 61;
  std::uint64_t seed = 1;
  std::string out_dir = ".";
};

int cmd_simulate(const SimulateArgs& args) {
  fs::create_directories(args.out_dir);
  ManifestWriter manifest("simulate", args.out_dir);
  manifest.doc()["seed"] = args.seed;
  manifest.doc()["set"] = args.set;
  try {
    const int n = args.n > 0 ? args.n : (args.set == 1 ? 21 : 20);
    const SimDataset sim = args.set == 1 ? simulate_set1(n, args.p, args.seed)
                                         : simulate_set2(n, args.p, args.seed);

    const fs::path dir(args.out_dir);
    save_functions_csv((dir / "dataset.csv").string(), sim.data.grid, sim.data.values);

    json truth;
    truth["set"] = sim.set;
    truth["seed"] = sim.seed;
    truth["n_functions"] = sim.data.n_functions();
    truth["p"] = sim.data.grid.size();
    truth["t_start"] = sim.data.grid.t_start();
    truth["t_end"] = sim.data.grid.t_end();
    truth["warp_param"] = vec_json(sim.warp_param);
    if (args.set == 1) {
      truth["c1"] = vec_json(sim.c1);
      truth["c2"] = vec_json(sim.c2);
    } else {
      truth["z1"] = vec_json(sim.z1);
      truth["z2"] = vec_json(sim.z2);
      truth["group_labels"] = sim.group_labels;
    }
    truth["true_factors"] = cols_json(sim.true_factors);
    Eigen::MatrixXd warp_mat(sim.data.grid.size(), sim.data.n_functions());
    for (int i = 0; i < sim.data.n_functions(); ++i) warp_mat.col(i) = sim.true_warps[i].values;
    truth["true_warps"] = cols_json(warp_mat);
    truth["true_registered"] = cols_json(sim.true_registered);
    write_text((dir / "truth.json").string(), truth.dump(2) + "\n");

    manifest.add_output("dataset.csv");
    manifest.add_output("truth.json");
    manifest.finish(true);
    std::cout << "wrote " << (dir / "dataset.csv").string() << " (" << sim.data.grid.size()
              << " x " << sim.data.n_functions() << ") and truth.json\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    manifest.finish(false, e.what());
    return 1;
  }
}

struct RegisterArgs {
  std::string input;
  std::string config;
  std::string engine = "avb";
  std::uint64_t seed = 1;
  std::string out_dir = ".";
  int iters = 2000;        // MCMC iterations
  int thin = 1;
  int mcmc_reps = 1;       // warp Metropolis proposals per scan
  int avb_iters = 500;
  double tol = 1e-6;
  bool serial = false;
  bool discard_adapt = false;
  std::string group_mode = "quadrant";
  double z2_low = 0.0;
  double z2_high = 0.0;
};

struct FitSummary {
  Eigen::VectorXd f1, f2;
  Eigen::VectorXd z0, z1, z2;        // full length n (level closure applied)
  Eigen::VectorXd sd_z0, sd_z1, sd_z2;
  std::vector<Warp> warps;
  std::vector<double> criterion_trace;
};

FitSummary summarize_avb(const AvbResult& fit, int n) {
  FitSummary out;
  out.f1 = fit.q.mu_f1;
  out.f2 = fit.q.mu_f2;
  out.z0.resize(n);
  out.sd_z0.resize(n);
  for (int i = 0; i + 1 < n; ++i) {
    out.z0(i) = fit.q.mu_z0(i);
    out.sd_z0(i) = std::sqrt(fit.q.var_z0(i));
  }
  out.z0(n - 1) = -fit.q.mu_z0.sum();
  out.sd_z0(n - 1) = std::sqrt(fit.q.var_z0.sum());
  out.z1 = fit.q.mu_z1;
  out.z2 = fit.q.mu_z2;
  out.sd_z1 = fit.q.var_z1.cwiseSqrt();
  out.sd_z2 = fit.q.var_z2.cwiseSqrt();
  out.warps = fit.warps;
  for (const AvbIterRow& row : fit.diag.trace) out.criterion_trace.push_back(row.criterion);
  return out;
}

// Posterior means and deviations over the retained draws.  The second factor
// carries a joint sign symmetry with its weights, so each draw is aligned to
// a reference direction before averaging.
FitSummary summarize_chain(const ChainSamples& chain, const Dataset& data,
                           const McmcOptions& opts, bool discard_adapt,
                           const Eigen::VectorXd* f2_reference) {
  const int n = data.n_functions();
  const int p = data.grid.size();
  const int adapt_until = static_cast<int>(opts.adapt_fraction * opts.n_iter);

  std::vector<int> keep;
  for (std::size_t k = 0; k < chain.draws.size(); ++k) {
    const int iter = static_cast<int>(k + 1) * opts.thin;
    if (!discard_adapt || iter > adapt_until) keep.push_back(static_cast<int>(k));
  }
  if (keep.empty()) throw std::runtime_error("no retained draws after adaptation discard");

  const Eigen::VectorXd ref =
      f2_reference != nullptr ? *f2_reference : chain.draws[keep.front()].f2;

  FitSummary out;
  out.f1 = Eigen::VectorXd::Zero(p);
  out.f2 = Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd z_draws(n * 3, static_cast<int>(keep.size()));
  Eigen::MatrixXd base_sum = Eigen::MatrixXd::Zero(p - 1, n);
  for (std::size_t m = 0; m < keep.size(); ++m) {
    const LatentState& s = chain.draws[keep[m]];
    const double sign = s.f2.dot(ref) < 0.0 ? -1.0 : 1.0;
    out.f1 += s.f1;
    out.f2 += sign * s.f2;
    const Eigen::VectorXd z0 = s.z0_full();
    for (int i = 0; i < n; ++i) {
      z_draws(i, m) = z0(i);
      z_draws(n + i, m) = s.z1(i);
      z_draws(2 * n + i, m) = sign * s.z2(i);
      base_sum.col(i) += s.bases[i].values;
    }
  }
  const double m_count = static_cast<double>(keep.size());
  out.f1 /= m_count;
  out.f2 /= m_count;
  base_sum /= m_count;

  const Eigen::VectorXd zmean = z_draws.rowwise().mean();
  Eigen::VectorXd zsd(n * 3);
  for (int r = 0; r < n * 3; ++r) {
    const double dev = (z_draws.row(r).array() - zmean(r)).square().sum() /
                       std::max(1.0, m_count - 1.0);
    zsd(r) = std::sqrt(dev);
  }
  out.z0 = zmean.segment(0, n);
  out.z1 = zmean.segment(n, n);
  out.z2 = zmean.segment(2 * n, n);
  out.sd_z0 = zsd.segment(0, n);
  out.sd_z1 = zsd.segment(n, n);
  out.sd_z2 = zsd.segment(2 * n, n);

  out.warps.reserve(n);
  for (int i = 0; i < n; ++i) {
    out.warps.push_back(warp_from_base(BaseFunction{base_sum.col(i)}, data.grid));
  }
  out.criterion_trace = chain.log_joint_trace;
  return out;
}

GroupMode parse_group_mode(const std::string& name) {
  if (name == "quadrant") return GroupMode::quadrant_centered_both;
  if (name == "quadrant-z1") return GroupMode::quadrant_centered_z1_only;
  if (name == "z2-threshold") return GroupMode::z2_threshold;
  throw std::runtime_error("unknown group mode: " + name);
}

int cmd_register(const RegisterArgs& args) {
  fs::create_directories(args.out_dir);
  ManifestWriter manifest("register", args.out_dir);
  manifest.doc()["engine"] = args.engine;
  manifest.doc()["seed"] = args.seed;
  try {
    const FunctionTable table = load_functions_csv(args.input);
    manifest.add_input(args.input);
    Dataset data;
    data.grid = table.grid;
    data.values = table.values;
    data.validate();

    ModelConfig cfg;
    if (!args.config.empty()) {
      cfg = ModelConfig::from_json_string(read_text(args.config));
      manifest.add_input(args.config);
    }
    cfg.validate();
    manifest.doc()["config"] = json::parse(cfg.to_json_string());

    AvbOptions avb_opts;
    avb_opts.max_iters = args.avb_iters;
    avb_opts.tol = args.tol;
    avb_opts.parallel_w = !args.serial;

    McmcOptions mcmc_opts;
    mcmc_opts.n_iter = args.iters;
    mcmc_opts.thin = args.thin;
    mcmc_opts.seed = args.seed;

    FitSummary fit;
    if (args.engine == "avb") {
      const AvbResult avb = run_avb(data, cfg, avb_opts);
      fit = summarize_avb(avb, data.n_functions());
      manifest.doc()["avb_converged"] = avb.diag.converged;
      manifest.doc()["avb_iterations"] = avb.diag.iterations;
    } else if (args.engine == "mcmc") {
      const PenaltySet pen = build_penalty_set(data.grid);
      const PenaltySet pen_red = build_penalty_set(data.grid.truncated());
      Rng init_rng(args.seed + 1);
      const LatentState init = draw_prior_state(data, cfg, pen, pen_red, init_rng);
      const ChainSamples chain = run_chain(data, cfg, init, mcmc_opts);
      fit = summarize_chain(chain, data, mcmc_opts, args.discard_adapt, nullptr);
    } else if (args.engine == "avb+mcmc") {
      const AvbResult avb = run_avb(data, cfg, avb_opts);
      manifest.doc()["avb_converged"] = avb.diag.converged;
      manifest.doc()["avb_iterations"] = avb.diag.iterations;
      const LatentState init = state_from_q(avb.q);
      const ChainSamples chain = run_chain(data, cfg, init, mcmc_opts);
      fit = summarize_chain(chain, data, mcmc_opts, args.discard_adapt, &avb.q.mu_f2);
      // Keep the variational trace as well: it documents the warm start.
      json avb_trace = json::array();
      for (const AvbIterRow& row : avb.diag.trace) avb_trace.push_back(row.criterion);
      manifest.doc()["avb_criterion_trace"] = avb_trace;
    } else {
      throw std::runtime_error("unknown engine: " + args.engine);
    }

    const fs::path dir(args.out_dir);
    const Eigen::MatrixXd registered =
        warp_all(data.values, fit.warps, data.grid, cfg.interpolation);
    save_functions_csv((dir / "registered.csv").string(), data.grid, registered, table.names);

    Eigen::MatrixXd warp_mat(data.grid.size(), data.n_functions());
    for (int i = 0; i < data.n_functions(); ++i) warp_mat.col(i) = fit.warps[i].values;
    save_functions_csv((dir / "warps.csv").string(), data.grid, warp_mat, table.names);

    Eigen::MatrixXd factors(data.grid.size(), 2);
    factors.col(0) = fit.f1;
    factors.col(1) = fit.f2;
    save_functions_csv((dir / "factors.csv").string(), data.grid, factors, {"f1", "f2"});

    const int n = data.n_functions();
    Eigen::MatrixXd weights(n, 6);
    weights.col(0) = fit.z0;
    weights.col(1) = fit.z1;
    weights.col(2) = fit.z2;
    weights.col(3) = fit.sd_z0;
    weights.col(4) = fit.sd_z1;
    weights.col(5) = fit.sd_z2;
    save_table_csv((dir / "weights.csv").string(),
                   {"id", "z0", "z1", "z2", "sd_z0", "sd_z1", "sd_z2"}, table.names, weights);

    const std::vector<int> groups = group_by_weights(
        fit.z1, fit.z2, parse_group_mode(args.group_mode), args.z2_low, args.z2_high);
    Eigen::MatrixXd group_col(n, 1);
    for (int i = 0; i < n; ++i) group_col(i, 0) = groups[i];
    save_table_csv((dir / "groups.csv").string(), {"id", "group"}, table.names, group_col);

    json metrics;
    metrics["sls"] = sls(data.values, registered, data.grid);
    try {
      std::vector<int> skipped;
      metrics["sls_grouped"] = sls_grouped(data.values, registered, data.grid, groups, &skipped);
      if (!skipped.empty()) metrics["sls_grouped_skipped_labels"] = skipped;
    } catch (const degenerate_sample_error&) {
      // Every group too small: the grouped criterion is undefined.
    }
    metrics["criterion_trace"] = fit.criterion_trace;
    write_text((dir / "metrics.json").string(), metrics.dump(2) + "\n");

    for (const char* name : {"registered.csv", "warps.csv", "factors.csv", "weights.csv",
                             "groups.csv", "metrics.json"}) {
      manifest.add_output(name);
    }
    manifest.finish(true);
    std::cout << metrics.dump(2) << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    manifest.finish(false, e.what());
    return 1;
  }
}

struct EvaluateArgs {
  std::string original;
  std::string registered;
  std::string groups;
  std::string truth;
  std::string factors;
  std::string out_dir = ".";
};

std::vector<int> load_groups_csv(const std::string& path,
                                 const std::vector<std::string>& names) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("groups file is empty: " + path);
  std::map<std::string, int> by_name;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw std::runtime_error("groups file row " + std::to_string(row) +
                               ": expected 'id,group'");
    }
    by_name[line.substr(0, comma)] = std::stoi(line.substr(comma + 1));
  }
  std::vector<int> out;
  out.reserve(names.size());
  for (const std::string& name : names) {
    const auto it = by_name.find(name);
    if (it == by_name.end()) {
      throw std::runtime_error("groups file missing label for function: " + name);
    }
    out.push_back(it->second);
  }
  return out;
}

int cmd_evaluate(const EvaluateArgs& args) {
  fs::create_directories(args.out_dir);
  ManifestWriter manifest("evaluate", args.out_dir);
  try {
    const FunctionTable original = load_functions_csv(args.original);
    const FunctionTable registered = load_functions_csv(args.registered);
    manifest.add_input(args.original);
    manifest.add_input(args.registered);
    if (original.values.rows() != registered.values.rows() ||
        original.values.cols() != registered.values.cols()) {
      throw std::runtime_error("original and registered tables have different shapes");
    }
    if ((original.grid.points - registered.grid.points).lpNorm<Eigen::Infinity>() >
        1e-9 * (1.0 + std::abs(original.grid.span()))) {
      throw std::runtime_error("original and registered tables use different grids");
    }

    json metrics;
    metrics["sls"] = sls(original.values, registered.values, original.grid);

    if (!args.groups.empty()) {
      const std::vector<int> groups = load_groups_csv(args.groups, original.names);
      manifest.add_input(args.groups);
      std::vector<int> skipped;
      metrics["sls_grouped"] =
          sls_grouped(original.values, registered.values, original.grid, groups, &skipped);
      if (!skipped.empty()) metrics["sls_grouped_skipped_labels"] = skipped;
    }

    if (!args.truth.empty()) {
      if (args.factors.empty()) {
        throw std::runtime_error("--truth requires --factors (the estimated factor table)");
      }
      const json truth = json::parse(read_text(args.truth));
      manifest.add_input(args.truth);
      const FunctionTable est = load_functions_csv(args.factors);
      manifest.add_input(args.factors);
      const Eigen::MatrixXd truth_factors = cols_from_json(truth.at("true_factors"));
      bool rank_deficient = false;
      const Eigen::Vector2d score =
          factor_recovery_score(est.values, truth_factors, &rank_deficient);
      metrics["canonical_correlations"] = {score(0), score(1)};
      metrics["factor_estimate_rank_deficient"] = rank_deficient;
    }

    write_text((fs::path(args.out_dir) / "metrics.json").string(), metrics.dump(2) + "\n");
    manifest.add_output("metrics.json");
    manifest.finish(true);
    std::cout << metrics.dump(2) << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    manifest.finish(false, e.what());
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Curve registration with a two-factor hierarchical model"};
  app.require_subcommand(1);

  SimulateArgs sim;
  CLI::App* sim_cmd = app.add_subcommand("simulate", "Generate a synthetic dataset");
  sim_cmd->add_option("--set", sim.set, "Scenario: 1 (bimodal weights) or 2 (signed factors)")
      ->check(CLI::IsMember({1, 2}))
      ->required();
  sim_cmd->add_option("--n", sim.n, "Number of functions (default 21 for set 1, 20 for set 2)");
  sim_cmd->add_option("--p", sim.p, "Grid points");
  sim_cmd->add_option("--seed", sim.seed, "RNG seed");
  sim_cmd->add_option("--out-dir", sim.out_dir, "Output directory");

  RegisterArgs reg;
  CLI::App* reg_cmd = app.add_subcommand("register", "Register curves and fit the model");
  reg_cmd->add_option("--input", reg.input, "Dataset CSV (t,f1..fN)")->required();
  reg_cmd->add_option("--config", reg.config, "Model config JSON");
  reg_cmd->add_option("--engine", reg.engine, "avb | mcmc | avb+mcmc")
      ->check(CLI::IsMember({"avb", "mcmc", "avb+mcmc"}));
  reg_cmd->add_option("--seed", reg.seed, "RNG seed");
  reg_cmd->add_option("--out-dir", reg.out_dir, "Output directory");
  reg_cmd->add_option("--iters", reg.iters, "MCMC iterations");
  reg_cmd->add_option("--thin", reg.thin, "MCMC thinning");
  reg_cmd->add_option("--avb-iters", reg.avb_iters, "Variational iteration cap");
  reg_cmd->add_option("--tol", reg.tol, "Variational convergence tolerance");
  reg_cmd->add_flag("--serial", reg.serial, "Disable the parallel warp sweep");
  reg_cmd->add_flag("--discard-adapt", reg.discard_adapt,
                    "Drop adaptation-phase draws from MCMC summaries");
  reg_cmd->add_option("--group-mode", reg.group_mode, "quadrant | quadrant-z1 | z2-threshold")
      ->check(CLI::IsMember({"quadrant", "quadrant-z1", "z2-threshold"}));
  reg_cmd->add_option("--z2-lo", reg.z2_low, "Lower z2 threshold (z2-threshold mode)");
  reg_cmd->add_option("--z2-hi", reg.z2_high, "Upper z2 threshold (z2-threshold mode)");

  EvaluateArgs ev;
  CLI::App* ev_cmd = app.add_subcommand("evaluate", "Score a registration");
  ev_cmd->add_option("--original", ev.original, "Observed dataset CSV")->required();
  ev_cmd->add_option("--registered", ev.registered, "Registered dataset CSV")->required();
  ev_cmd->add_option("--groups", ev.groups, "groups.csv for the grouped criterion");
  ev_cmd->add_option("--truth", ev.truth, "truth.json from simulate");
  ev_cmd->add_option("--factors", ev.factors, "factors.csv with estimated f1, f2");
  ev_cmd->add_option("--out-dir", ev.out_dir, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (sim_cmd->parsed()) return cmd_simulate(sim);
  if (reg_cmd->parsed()) return cmd_register(reg);
  return cmd_evaluate(ev);
}
