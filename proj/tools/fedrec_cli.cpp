#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedrec/config.hpp"
#include "fedrec/evaluation.hpp"
#include "fedrec/synth.hpp"

namespace {

using namespace fedrec;

constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

ExperimentConfig load_with_overrides(const std::string& config_path,
                                     int workers, long seed,
                                     const std::string& output_dir) {
  ExperimentConfig config = load_config(config_path);
  if (const char* env = std::getenv("FEDREC_DATA_DIR");
      env && config.dataset.source != "synthetic") {
    const std::string base = env;
    config.dataset.data_path = base + "/" +
        std::filesystem::path(config.dataset.data_path).filename().string();
    config.dataset.profile_path = base + "/" +
        std::filesystem::path(config.dataset.profile_path).filename().string();
    if (!config.dataset.occupation_path.empty())
      config.dataset.occupation_path = base + "/" +
          std::filesystem::path(config.dataset.occupation_path)
              .filename()
              .string();
  }
  if (workers > 0) config.federation.workers = workers;
  if (seed >= 0) {
    config.master_seed = static_cast<std::uint64_t>(seed);
    config.federation.master_seed = config.master_seed;
  }
  if (!output_dir.empty()) config.output_dir = output_dir;
  config.validate();
  return config;
}

int cmd_train(const ExperimentConfig& config) {
  PreparedData data = prepare_data(config);
  std::cout << "loaded " << data.data.stats.num_users << " users, "
            << data.data.stats.num_items << " items, "
            << data.data.stats.num_interactions << " interactions\n";

  Rng init_rng(derive_seed(config.master_seed, "init"));
  ParamSet initial = init_params(config.federation.hyper.d,
                                 config.federation.hyper.d2, init_rng);
  TrainResult result =
      run_training(data.shards, data.items, initial, config.federation);

  std::filesystem::create_directories(config.output_dir);
  save_params(result.global, config.output_dir + "/checkpoint.bin",
              static_cast<int>(config.federation.rounds) - 1);
  save_archive(result.archive, config.output_dir + "/deltas.bin");
  save_train_log(result.log, config.output_dir + "/trainlog.csv");
  std::ofstream(config.output_dir + "/config.json")
      << config_to_json(config) << "\n";
  if (!result.log.rounds.empty())
    std::cout << "final round mean loss " << result.log.rounds.back().mean_loss
              << "\n";
  std::cout << "wrote checkpoint, archive and log to " << config.output_dir
            << "\n";
  return 0;
}

int cmd_eval(const ExperimentConfig& config, const std::string& checkpoint) {
  PreparedData data = prepare_data(config);
  Checkpoint ck = load_params(checkpoint);
  double hit =
      evaluate_recommender(ck.params, data.shards, data.items, config.hit_k);
  std::cout << "Hit@" << config.hit_k << " = " << hit << "\n";
  return 0;
}

int cmd_attack(const ExperimentConfig& config, const std::string& archive_path) {
  PreparedData data = prepare_data(config);
  DeltaArchive archive = load_archive(archive_path);
  auto rows =
      run_attacks(archive, data.shards, config.attack, config.master_seed);

  std::filesystem::create_directories(config.output_dir);
  std::ofstream csv(config.output_dir + "/attack_report.csv");
  csv << "attribute,attacker,component_mask,zeta,seed,f1\n";
  for (const auto& row : rows) {
    csv << row.attribute << "," << row.attacker << "," << row.mask << ","
        << row.zeta << "," << row.seed << "," << row.f1 << "\n";
    std::cout << row.attribute << " " << row.attacker << " " << row.mask
              << " seed=" << row.seed << " f1=" << row.f1 << "\n";
  }
  return 0;
}

int cmd_run(const ExperimentConfig& config) {
  ExperimentReport report = run_experiment(config);
  std::cout << "Hit@" << report.hit_k << " = " << report.hit << "\n";
  for (const auto& row : report.attack_rows) {
    std::cout << row.attribute << " " << row.attacker << " " << row.mask
              << " seed=" << row.seed << " f1=" << row.f1 << "\n";
  }
  std::cout << "report written to " << config.output_dir << "\n";
  return 0;
}

int cmd_sweep(const ExperimentConfig& base, const std::string& param,
              const std::string& values_csv) {
  std::vector<std::string> values;
  std::stringstream ss(values_csv);
  std::string v;
  while (std::getline(ss, v, ',')) values.push_back(v);
  if (values.empty()) {
    std::cerr << "sweep: no values given\n";
    return kExitConfig;
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    ExperimentConfig cell = base;
    if (param == "d") {
      cell.federation.hyper.d = std::stoul(values[i]);
      cell.federation.hyper.d2 = cell.federation.hyper.d;
    } else if (param == "lambda") {
      cell.federation.plan.mode = PrivacyMode::kFixed;
      cell.federation.plan.fixed_lambda = std::stod(values[i]);
    } else if (param == "zeta") {
      cell.attack.zeta = std::stod(values[i]);
    } else {
      std::cerr << "sweep: unknown parameter '" << param << "'\n";
      return kExitConfig;
    }
    cell.output_dir = base.output_dir + "/" + param + "-" + values[i];
    cell.validate();
    std::cout << "=== sweep cell " << param << "=" << values[i] << " ===\n";
    run_experiment(cell);
  }
  std::cout << "sweep complete: " << values.size() << " reports under "
            << base.output_dir << "\n";
  return 0;
}

bool check(const std::string& name, bool ok) {
  std::cout << (ok ? "PASS" : "FAIL") << "  " << name << "\n";
  return ok;
}

int cmd_selftest() {
  bool all = true;

  // Noise-scale table with the default plan.
  BudgetPlan plan;
  plan.mode = PrivacyMode::kAdaptive;
  plan.eps_min = 30.0;
  plan.eps_max = 60.0;
  plan.delta = 0.5;
  const double lu = noise_scale(ComponentTag::kUser, plan);
  const double l1 = noise_scale(ComponentTag::kMlp1, plan);
  const double l2 = noise_scale(ComponentTag::kMlp2, plan);
  const double li = noise_scale(ComponentTag::kItem, plan);
  all &= check("lambda table {1/30, 0.025, 0.020, 1/60}",
               std::abs(lu - 1.0 / 30) < 1e-12 && std::abs(l1 - 0.025) < 1e-12 &&
                   std::abs(l2 - 0.020) < 1e-12 &&
                   std::abs(li - 1.0 / 60) < 1e-12);

  // Laplace moments.
  {
    Rng rng(42);
    const double lambda = 0.025;
    const std::size_t n = 200000;
    double sum = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double x = sample_laplace(lambda, rng);
      sum += x;
      sq += x * x;
    }
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    all &= check("laplace sampler moments",
                 std::abs(mean) < 5e-4 &&
                     std::abs(var - 2 * lambda * lambda) <
                         0.05 * 2 * lambda * lambda);
  }

  // Full-model gradient check at d=8.
  {
    Rng rng(7);
    const std::size_t d = 8, d2 = 8;
    ParamSet ps = init_params(d, d2, rng);
    for (auto& view : ps.views()) {
      for (std::size_t i = 0; i < view.size; ++i) view.data[i] *= 0.3;
    }
    Vec x_u(FeatureLayout::kDim), xbar(d2);
    for (double& x : x_u) x = rng.uniform();
    for (double& x : xbar) x = rng.gauss();
    std::vector<Vec> item_feats(4, Vec(d2));
    std::vector<std::pair<const double*, int>> batch;
    for (std::size_t i = 0; i < item_feats.size(); ++i) {
      for (double& x : item_feats[i]) x = rng.gauss();
      batch.emplace_back(item_feats[i].data(), i % 2);
    }
    ParamSet tape(d, d2);
    batch_loss_and_grad(ps, x_u, xbar, batch, tape);
    auto pv = ps.views();
    auto gv = tape.views();
    auto report = finite_diff_check(pv, gv, [&] {
      ParamSet scratch(d, d2);
      return batch_loss_and_grad(ps, x_u, xbar, batch, scratch);
    });
    all &= check("full-model finite-difference gradients (d=8)",
                 report.max_rel_error < 1e-4);
  }

  std::cout << (all ? "selftest: all checks passed\n"
                    : "selftest: FAILURES\n");
  return all ? 0 : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated recommender privacy workbench"};
  app.require_subcommand(1);

  std::string config_path, checkpoint, archive_path, output_dir;
  std::string sweep_param, sweep_values;
  int workers = 0;
  long seed = -1;

  auto add_common = [&](CLI::App* cmd, bool need_config = true) {
    if (need_config)
      cmd->add_option("--config", config_path, "experiment config (JSON)")
          ->required();
    cmd->add_option("--workers", workers, "client-level parallelism");
    cmd->add_option("--seed", seed, "override master seed");
    cmd->add_option("--output", output_dir, "override output directory");
  };

  auto* train = app.add_subcommand("train", "run federated training");
  add_common(train);
  auto* eval = app.add_subcommand("eval", "Hit@K of a checkpoint");
  add_common(eval);
  eval->add_option("--checkpoint", checkpoint, "parameter checkpoint")
      ->required();
  auto* attack = app.add_subcommand("attack", "attack a delta archive");
  add_common(attack);
  attack->add_option("--archive", archive_path, "delta archive")->required();
  auto* run = app.add_subcommand("run", "full train+eval+attack pipeline");
  add_common(run);
  auto* sweep = app.add_subcommand("sweep", "grid over one parameter");
  add_common(sweep);
  sweep->add_option("--param", sweep_param, "d | lambda | zeta")->required();
  sweep->add_option("--values", sweep_values, "comma-separated values")
      ->required();
  auto* selftest =
      app.add_subcommand("selftest", "gradient, noise and budget checks");
  (void)selftest;

  CLI11_PARSE(app, argc, argv);

  try {
    if (selftest->parsed()) return cmd_selftest();
    ExperimentConfig config =
        load_with_overrides(config_path, workers, seed, output_dir);
    if (train->parsed()) return cmd_train(config);
    if (eval->parsed()) return cmd_eval(config, checkpoint);
    if (attack->parsed()) return cmd_attack(config, archive_path);
    if (run->parsed()) return cmd_run(config);
    if (sweep->parsed()) return cmd_sweep(config, sweep_param, sweep_values);
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
