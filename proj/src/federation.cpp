#include "fedrec/federation.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>
#include <thread>
#include <unordered_map>

namespace fedrec {

void save_train_log(const TrainLog& log, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << "round,mean_loss,seconds,bytes\n";
  for (const auto& r : log.rounds) {
    f << r.round << "," << r.mean_loss << "," << r.seconds << ","
      << r.upload_bytes << "\n";
  }
}

std::vector<int> sample_clients(const std::vector<int>& all_users,
                                double fraction, Rng& rng) {
  if (fraction <= 0.0 || fraction > 1.0)
    throw std::invalid_argument("sample_clients: fraction out of (0,1]");
  const std::size_t m = all_users.size();
  const std::size_t k = static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(m)));

  std::vector<int> pool = all_users;
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t j = i + rng.index(pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return pool;
}

ParamSet aggregate(const std::vector<ParamSet>& uploads) {
  if (uploads.empty()) throw std::invalid_argument("aggregate: no uploads");
  const std::size_t d = uploads[0].d();
  const std::size_t d2 = uploads[0].d2();
  Vec sum = flatten(uploads[0]);
  for (std::size_t i = 1; i < uploads.size(); ++i) {
    Vec f = flatten(uploads[i]);
    if (f.size() != sum.size())
      throw std::runtime_error("aggregate: shape mismatch");
    for (std::size_t j = 0; j < sum.size(); ++j) sum[j] += f[j];
  }
  const double inv = 1.0 / static_cast<double>(uploads.size());
  for (double& x : sum) x *= inv;
  return unflatten(sum, d, d2);
}

namespace {

ParamSet client_update(const UserShard& shard, const ParamSet& global,
                       const ItemFeatureTable& items,
                       const FederationConfig& config, int round,
                       double* mean_loss) {
  const std::uint64_t u = static_cast<std::uint64_t>(shard.user_id);
  const std::uint64_t t = static_cast<std::uint64_t>(round);
  Rng train_rng(derive_seed(config.master_seed, "client", t, u));
  Rng noise_rng(derive_seed(config.master_seed, "noise", t, u));

  const bool noised = config.plan.mode != PrivacyMode::kOff;
  if (config.perturb_per_epoch && noised) {
    Hyper one_epoch = config.hyper;
    one_epoch.local_epochs = 1;
    ParamSet theta = global;
    double loss_sum = 0.0;
    for (std::size_t e = 0; e < config.hyper.local_epochs; ++e) {
      double l = 0.0;
      theta = local_train(shard, theta, items, one_epoch, train_rng, &l);
      theta = perturb(theta, config.plan, noise_rng);
      loss_sum += l;
    }
    if (mean_loss)
      *mean_loss = loss_sum / static_cast<double>(config.hyper.local_epochs);
    return theta;
  }

  ParamSet theta =
      local_train(shard, global, items, config.hyper, train_rng, mean_loss);
  if (noised) theta = perturb(theta, config.plan, noise_rng);
  return theta;
}

}  // namespace

TrainResult run_training(
    const std::vector<UserShard>& shards, const ItemFeatureTable& items,
    const ParamSet& initial, const FederationConfig& config,
    const std::function<bool(int, const ParamSet&)>& should_stop) {
  config.plan.validate();

  std::unordered_map<int, const UserShard*> shard_by_user;
  std::vector<int> all_users;
  all_users.reserve(shards.size());
  for (const auto& s : shards) {
    shard_by_user[s.user_id] = &s;
    all_users.push_back(s.user_id);
  }
  std::sort(all_users.begin(), all_users.end());

  std::set<int> harvest(config.harvest_rounds.begin(),
                        config.harvest_rounds.end());
  if (harvest.empty() && config.rounds > 0)
    harvest.insert(static_cast<int>(config.rounds) - 1);

  TrainResult result;
  result.global = initial;
  result.archive.d = initial.d();
  result.archive.d2 = initial.d2();

  const int workers = std::max(1, config.workers);

  for (std::size_t t = 0; t < config.rounds; ++t) {
    const auto round_start = std::chrono::steady_clock::now();
    const int round = static_cast<int>(t);
    const bool harvest_now = harvest.count(round) > 0;

    std::vector<int> sampled;
    if (harvest_now && config.harvest_full_participation) {
      sampled = all_users;
    } else {
      Rng sample_rng(derive_seed(config.master_seed, "sampling", t));
      sampled = sample_clients(all_users, config.client_fraction, sample_rng);
    }

    std::vector<ParamSet> uploads(sampled.size());
    std::vector<double> losses(sampled.size(), 0.0);

    auto run_one = [&](std::size_t i) {
      const UserShard* shard = shard_by_user.at(sampled[i]);
      uploads[i] = client_update(*shard, result.global, items, config, round,
                                 &losses[i]);
    };
    if (workers == 1 || sampled.size() <= 1) {
      for (std::size_t i = 0; i < sampled.size(); ++i) run_one(i);
    } else {
      std::atomic<std::size_t> next{0};
      std::vector<std::thread> pool;
      const int n = std::min<int>(workers, static_cast<int>(sampled.size()));
      pool.reserve(n);
      for (int w = 0; w < n; ++w) {
        pool.emplace_back([&] {
          while (true) {
            std::size_t i = next.fetch_add(1);
            if (i >= sampled.size()) break;
            run_one(i);
          }
        });
      }
      for (auto& th : pool) th.join();
    }

    if (harvest_now) {
      for (std::size_t i = 0; i < sampled.size(); ++i) {
        result.archive.records.push_back(compute_delta(
            result.global, uploads[i], config.hyper.mu1, sampled[i], round));
      }
    }

    // uploads are already in ascending user id order
    ParamSet next_global = aggregate(uploads);
    for (const auto& v : next_global.views()) {
      for (std::size_t i = 0; i < v.size; ++i) {
        if (!std::isfinite(v.data[i]))
          throw std::runtime_error("run_training: non-finite aggregate at round " +
                                   std::to_string(round));
      }
    }
    result.global = std::move(next_global);

    RoundLog log;
    log.round = round;
    double sum = 0.0;
    for (double l : losses) sum += l;
    log.mean_loss = losses.empty() ? 0.0 : sum / static_cast<double>(losses.size());
    log.upload_bytes = sampled.size() * initial.flat_size() * sizeof(double);
    log.seconds = std::chrono::duration<double>(
                      std::chrono::steady_clock::now() - round_start)
                      .count();
    result.log.rounds.push_back(log);

    if (should_stop && should_stop(round, result.global)) break;
  }
  return result;
}

}  // namespace fedrec
