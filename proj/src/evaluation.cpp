#include "fedrec/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "fedrec/synth.hpp"

namespace fedrec {

Mat precompute_item_embeddings(const ParamSet& ps,
                               const ItemFeatureTable& items) {
  const std::size_t n = items.num_items();
  const std::size_t d = ps.d();
  const std::size_t d2 = ps.d2();
  Mat z(n, d);
  for (std::size_t v = 0; v < n; ++v) {
    const double* x = items.row(static_cast<int>(v));
    double* out = z.a.data() + v * d;
    for (std::size_t r = 0; r < d; ++r) {
      const double* row = ps.e_item.a.data() + r * d2;
      double s = 0.0;
      for (std::size_t c = 0; c < d2; ++c) s += row[c] * x[c];
      out[r] = s;
    }
  }
  return z;
}

namespace {

double mlp_score(const ParamSet& ps, const Vec& z_star, const double* z_v) {
  const std::size_t d = ps.d();
  Vec h1(d);
  for (std::size_t r = 0; r < d; ++r) {
    const double* row = ps.mlp1.weights.a.data() + r * 2 * d;
    double s = ps.mlp1.bias[r];
    for (std::size_t c = 0; c < d; ++c) s += row[c] * z_star[c];
    for (std::size_t c = 0; c < d; ++c) s += row[d + c] * z_v[c];
    h1[r] = relu(s);
  }
  double s = ps.mlp2.bias[0];
  for (std::size_t c = 0; c < d; ++c) s += ps.mlp2.weights.a[c] * h1[c];
  return s;  // sigmoid is monotone; raw score ranks identically
}

}  // namespace

int hit_at_k(const ParamSet& ps, const UserShard& shard,
             const ItemFeatureTable& items, const Mat& item_embeddings,
             std::size_t k) {
  if (!shard.held_out_item)
    throw std::invalid_argument("hit_at_k: shard has no held-out item");
  const int held = *shard.held_out_item;

  UserPathCache cache;
  compute_user_path(ps, shard.features, shard.neighbor_feature_mean, cache);

  const std::size_t d = ps.d();
  const double held_score =
      mlp_score(ps, cache.z_star, item_embeddings.a.data() + static_cast<std::size_t>(held) * d);

  std::size_t rank = 1;
  for (std::size_t v = 0; v < items.num_items(); ++v) {
    if (static_cast<int>(v) == held) continue;
    if (shard.positives.count(static_cast<int>(v))) continue;
    const double s = mlp_score(ps, cache.z_star, item_embeddings.a.data() + v * d);
    if (s >= held_score) ++rank;  // ties count against the held-out item
    if (rank > k) return 0;
  }
  return rank <= k ? 1 : 0;
}

double evaluate_recommender(const ParamSet& ps,
                            const std::vector<UserShard>& shards,
                            const ItemFeatureTable& items, std::size_t k) {
  Mat z = precompute_item_embeddings(ps, items);
  std::size_t hits = 0, evaluable = 0;
  for (const auto& shard : shards) {
    if (!shard.held_out_item) continue;
    ++evaluable;
    hits += static_cast<std::size_t>(hit_at_k(ps, shard, items, z, k));
  }
  if (evaluable == 0)
    throw std::invalid_argument("evaluate_recommender: no evaluable shards");
  return static_cast<double>(hits) / static_cast<double>(evaluable);
}

double ExperimentReport::mean_f1(const std::string& attribute,
                                 const std::string& attacker,
                                 const std::string& mask) const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& row : attack_rows) {
    if (row.attribute == attribute && row.attacker == attacker &&
        row.mask == mask) {
      sum += row.f1;
      ++n;
    }
  }
  if (n == 0)
    throw std::invalid_argument("mean_f1: no rows for " + attribute + "/" +
                                attacker + "/" + mask);
  return sum / static_cast<double>(n);
}

PreparedData prepare_data(const ExperimentConfig& config) {
  PreparedData out;
  std::string data_path = config.dataset.data_path;
  std::string profile_path = config.dataset.profile_path;
  std::string occupation_path = config.dataset.occupation_path;
  MovielensFormat format = MovielensFormat::kMl100k;

  if (config.dataset.source == "synthetic") {
    const std::string dir = config.output_dir + "/synth-data";
    write_synthetic_ml100k(config.dataset.synth, dir);
    data_path = dir + "/u.data";
    profile_path = dir + "/u.user";
    occupation_path = dir + "/u.occupation";
  } else if (config.dataset.source == "ml1m") {
    format = MovielensFormat::kMl1m;
  }

  out.data = load_movielens(data_path, profile_path, format, occupation_path);
  if (!out.data.occupation_vocab.empty()) {
    std::filesystem::create_directories(config.output_dir);
    save_occupation_vocab(out.data.occupation_vocab,
                          config.output_dir + "/occupations.txt");
  }

  ShardOptions shard_opt;
  shard_opt.negative_ratio = config.federation.hyper.negative_ratio;
  out.shards = build_shards(out.data, shard_opt, config.master_seed);

  Rng item_rng(derive_seed(config.master_seed, "item_features"));
  out.items = make_item_features(out.data.stats.num_items,
                                 config.federation.hyper.d2, item_rng);
  fill_neighbor_means(out.shards, out.items);
  return out;
}

std::map<int, int> attribute_labels(const std::vector<UserShard>& shards,
                                    const std::string& attribute) {
  std::map<int, int> labels;
  for (const auto& s : shards) {
    labels[s.user_id] =
        attribute == "gender" ? s.labels.gender : s.labels.age_group;
  }
  return labels;
}

int attribute_classes(const std::string& attribute) {
  if (attribute == "gender") return 2;
  if (attribute == "age") return 3;
  throw std::invalid_argument("unknown attribute '" + attribute + "'");
}

std::vector<AttackResultRow> run_attacks(const DeltaArchive& archive,
                                         const std::vector<UserShard>& shards,
                                         const AttackConfig& attack,
                                         std::uint64_t master_seed) {
  std::vector<AttackResultRow> rows;
  for (const auto& attribute : attack.attributes) {
    const auto labels = attribute_labels(shards, attribute);
    const int C = attribute_classes(attribute);
    for (const auto& mask_str : attack.masks) {
      const ComponentMask mask = mask_from_string(mask_str);
      for (int seed = 0; seed < attack.num_seeds; ++seed) {
        const std::uint64_t cell =
            hash_tag(attribute + "/" + mask_str);

        // Re-derive the split seed on a degenerate draw (a class can be
        // missing from a tiny train fraction).
        AttackDataset ds;
        bool built = false;
        for (int attempt = 0; attempt < 8 && !built; ++attempt) {
          Rng split_rng(derive_seed(master_seed, "attack-split",
                                    static_cast<std::uint64_t>(seed * 8 + attempt),
                                    cell));
          try {
            ds = build_attack_dataset(archive, labels, C, mask, attack.zeta,
                                      split_rng);
            built = true;
          } catch (const std::runtime_error&) {
            if (attempt == 7) throw;
          }
        }

        const auto truth = test_labels(ds);
        for (const auto& attacker : attack.attackers) {
          AttackResultRow row;
          row.attribute = attribute;
          row.attacker = attacker;
          row.mask = mask_str;
          row.zeta = attack.zeta;
          row.seed = static_cast<std::uint64_t>(seed);
          if (attacker == "aia") {
            Rng train_rng(derive_seed(master_seed, "attack-train",
                                      static_cast<std::uint64_t>(seed), cell));
            AiaModel model = train_aia(ds, attack.aia, train_rng);
            row.f1 = f1_score(predict_all(model, ds.test), truth, C);
          } else if (attacker == "knn") {
            row.f1 = f1_score(knn_attack(ds, attack.knn_k), truth, C);
          } else {
            Rng rnd(derive_seed(master_seed, "attack-random",
                                static_cast<std::uint64_t>(seed), cell));
            row.f1 = f1_score(random_attack(ds, rnd), truth, C);
          }
          rows.push_back(std::move(row));
        }
      }
    }
  }
  return rows;
}

ExperimentReport run_experiment(const ExperimentConfig& config) {
  config.validate();
  std::filesystem::create_directories(config.output_dir);

  PreparedData data = prepare_data(config);

  Rng init_rng(derive_seed(config.master_seed, "init"));
  ParamSet initial = init_params(config.federation.hyper.d,
                                 config.federation.hyper.d2, init_rng);

  FederationConfig fed = config.federation;
  fed.master_seed = config.master_seed;
  TrainResult trained = run_training(data.shards, data.items, initial, fed);

  ExperimentReport report;
  report.config_echo = config_to_json(config);
  report.config_hash = config_hash(config);
  report.master_seed = config.master_seed;
  report.hit_k = config.hit_k;
  report.num_users = data.data.stats.num_users;
  report.num_items = data.data.stats.num_items;
  report.hit =
      evaluate_recommender(trained.global, data.shards, data.items, config.hit_k);
  if (config.federation.plan.mode == PrivacyMode::kAdaptive) {
    for (ComponentTag tag : kAllComponents) {
      report.lambda_by_component[component_name(tag)] =
          noise_scale(tag, config.federation.plan);
    }
  }

  report.attack_rows =
      run_attacks(trained.archive, data.shards, config.attack,
                  config.master_seed);

  save_params(trained.global, config.output_dir + "/checkpoint.bin",
              static_cast<int>(config.federation.rounds) - 1);
  save_archive(trained.archive, config.output_dir + "/deltas.bin");
  save_train_log(trained.log, config.output_dir + "/trainlog.csv");
  {
    std::ofstream f(config.output_dir + "/config.json");
    f << report.config_echo << "\n";
  }
  save_report(report, config.output_dir);
  return report;
}

void save_report(const ExperimentReport& report, const std::string& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json j;
  j["config_hash"] = report.config_hash;
  j["master_seed"] = report.master_seed;
  j["config"] = nlohmann::json::parse(report.config_echo);
  j["num_users"] = report.num_users;
  j["num_items"] = report.num_items;
  j["hit_k"] = report.hit_k;
  j["hit"] = report.hit;
  j["lambda_by_component"] = report.lambda_by_component;
  auto& rows = j["attack"] = nlohmann::json::array();
  for (const auto& row : report.attack_rows) {
    rows.push_back({{"attribute", row.attribute},
                    {"attacker", row.attacker},
                    {"mask", row.mask},
                    {"zeta", row.zeta},
                    {"seed", row.seed},
                    {"f1", row.f1}});
  }
  std::ofstream f(dir + "/report.json");
  if (!f) throw std::runtime_error("cannot write report to " + dir);
  f << j.dump(2) << "\n";

  std::ofstream csv(dir + "/attack_report.csv");
  csv << "attribute,attacker,component_mask,zeta,seed,f1\n";
  for (const auto& row : report.attack_rows) {
    csv << row.attribute << "," << row.attacker << "," << row.mask << ","
        << row.zeta << "," << row.seed << "," << row.f1 << "\n";
  }
}

}  // namespace fedrec
