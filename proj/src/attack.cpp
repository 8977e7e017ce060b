#include "fedrec/attack.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

namespace fedrec {

std::string mask_name(const ComponentMask& mask) {
  if (mask.empty() || mask.size() == 4) return "full";
  std::string out;
  for (ComponentTag tag : mask) {
    if (!out.empty()) out += "+";
    out += component_name(tag);
  }
  return out;
}

Vec slice_delta(const Vec& full, const ComponentMask& mask, std::size_t d,
                std::size_t d2) {
  if (mask.empty()) return full;
  const auto spans = component_spans(d, d2);
  Vec out;
  for (ComponentTag tag : mask) {
    const auto [begin, end] = spans[static_cast<int>(tag)];
    if (end > full.size())
      throw std::invalid_argument("slice_delta: delta too short for mask");
    out.insert(out.end(), full.begin() + static_cast<long>(begin),
               full.begin() + static_cast<long>(end));
  }
  return out;
}

AttackDataset build_attack_dataset(const DeltaArchive& archive,
                                   const std::map<int, int>& labels,
                                   int num_classes, const ComponentMask& mask,
                                   double zeta, Rng& rng) {
  if (zeta <= 0.0 || zeta >= 1.0)
    throw std::invalid_argument("build_attack_dataset: zeta out of (0,1)");

  // Latest delta per labeled user.
  std::map<int, const DeltaRecord*> latest;
  for (const auto& rec : archive.records) {
    if (!labels.count(rec.user_id)) continue;
    auto it = latest.find(rec.user_id);
    if (it == latest.end() || rec.round > it->second->round)
      latest[rec.user_id] = &rec;
  }
  if (latest.empty())
    throw std::invalid_argument("build_attack_dataset: no labeled deltas");

  std::vector<int> users;
  users.reserve(latest.size());
  for (const auto& [user, rec] : latest) users.push_back(user);
  rng.shuffle(users);

  const std::size_t n_train = static_cast<std::size_t>(
      std::ceil(zeta * static_cast<double>(users.size())));

  AttackDataset ds;
  ds.num_classes = num_classes;
  ds.train_users.assign(users.begin(), users.begin() + static_cast<long>(n_train));
  ds.test_users.assign(users.begin() + static_cast<long>(n_train), users.end());

  auto make_rows = [&](const std::vector<int>& ids,
                       std::vector<std::pair<Vec, int>>& rows) {
    for (int u : ids) {
      rows.emplace_back(
          slice_delta(latest.at(u)->delta, mask, archive.d, archive.d2),
          labels.at(u));
    }
  };
  make_rows(ds.train_users, ds.train);
  make_rows(ds.test_users, ds.test);

  std::set<int> train_classes;
  for (const auto& [x, y] : ds.train) train_classes.insert(y);
  if (static_cast<int>(train_classes.size()) < num_classes)
    throw std::runtime_error(
        "build_attack_dataset: a class is absent from the train split; "
        "resample with a new seed");

  // Standardize with train statistics only.
  const std::size_t dim = ds.train[0].first.size();
  Vec mean(dim, 0.0), var(dim, 0.0);
  for (const auto& [x, y] : ds.train) axpy(1.0, x, mean);
  for (double& m : mean) m /= static_cast<double>(ds.train.size());
  for (const auto& [x, y] : ds.train) {
    for (std::size_t i = 0; i < dim; ++i) {
      const double c = x[i] - mean[i];
      var[i] += c * c;
    }
  }
  Vec inv_std(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    double sd = std::sqrt(var[i] / static_cast<double>(ds.train.size()));
    inv_std[i] = sd > 1e-12 ? 1.0 / sd : 1.0;
  }
  auto standardize = [&](std::vector<std::pair<Vec, int>>& rows) {
    for (auto& [x, y] : rows) {
      for (std::size_t i = 0; i < dim; ++i)
        x[i] = (x[i] - mean[i]) * inv_std[i];
    }
  };
  standardize(ds.train);
  standardize(ds.test);
  return ds;
}

namespace {

DenseLayer he_init(std::size_t out, std::size_t in, Rng& rng) {
  DenseLayer layer(out, in);
  const double scale = std::sqrt(2.0 / static_cast<double>(in));
  for (double& w : layer.weights.a) w = scale * rng.gauss();
  return layer;
}

void softmax(Vec& logits) {
  double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double& v : logits) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : logits) v /= sum;
}

struct AiaCache {
  Vec g1, h1, g2, h2, p;
};

void aia_forward(const AiaModel& m, const Vec& x, AiaCache& c) {
  dense_forward(m.l1, x, c.g1);
  relu(c.g1, c.h1);
  dense_forward(m.l2, c.h1, c.g2);
  relu(c.g2, c.h2);
  dense_forward(m.l3, c.h2, c.p);
  softmax(c.p);
}

}  // namespace

AiaModel train_aia(const AttackDataset& dataset, const AiaOptions& opt,
                   Rng& rng) {
  if (dataset.train.empty())
    throw std::invalid_argument("train_aia: empty train split");
  const std::size_t in_dim = dataset.train[0].first.size();
  const int C = dataset.num_classes;

  AiaModel m;
  m.num_classes = C;
  m.l1 = he_init(100, in_dim, rng);
  m.l2 = he_init(30, 100, rng);
  m.l3 = he_init(static_cast<std::size_t>(C), 30, rng);

  AiaModel tape;
  tape.l1 = DenseLayer(100, in_dim);
  tape.l2 = DenseLayer(30, 100);
  tape.l3 = DenseLayer(static_cast<std::size_t>(C), 30);

  std::vector<std::size_t> order(dataset.train.size());
  std::iota(order.begin(), order.end(), 0);

  AiaCache c;
  Vec dg2(30), dh1(100), dg1(100), dh2(30);

  auto zero_tape = [&] {
    tape.l1.weights.zero();
    std::fill(tape.l1.bias.begin(), tape.l1.bias.end(), 0.0);
    tape.l2.weights.zero();
    std::fill(tape.l2.bias.begin(), tape.l2.bias.end(), 0.0);
    tape.l3.weights.zero();
    std::fill(tape.l3.bias.begin(), tape.l3.bias.end(), 0.0);
  };

  for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += opt.batch) {
      const std::size_t end = std::min(start + opt.batch, order.size());
      zero_tape();
      double loss = 0.0;
      for (std::size_t i = start; i < end; ++i) {
        const auto& [x, y] = dataset.train[order[i]];
        aia_forward(m, x, c);
        loss += -std::log(clamp_prob(c.p[static_cast<std::size_t>(y)]));

        // dlogits = p - onehot(y)
        Vec dlog = c.p;
        dlog[static_cast<std::size_t>(y)] -= 1.0;
        add_outer(tape.l3.weights, dlog, c.h2);
        axpy(1.0, dlog, tape.l3.bias);
        std::fill(dh2.begin(), dh2.end(), 0.0);
        matvec_t_add(m.l3.weights, dlog, dh2);
        for (std::size_t j = 0; j < 30; ++j)
          dg2[j] = c.g2[j] > 0.0 ? dh2[j] : 0.0;
        add_outer(tape.l2.weights, dg2, c.h1);
        axpy(1.0, dg2, tape.l2.bias);
        std::fill(dh1.begin(), dh1.end(), 0.0);
        matvec_t_add(m.l2.weights, dg2, dh1);
        for (std::size_t j = 0; j < 100; ++j)
          dg1[j] = c.g1[j] > 0.0 ? dh1[j] : 0.0;
        add_outer(tape.l1.weights, dg1, x);
        axpy(1.0, dg1, tape.l1.bias);
      }
      if (!std::isfinite(loss))
        throw std::runtime_error("train_aia: non-finite loss (lr too high?)");
      const double step = opt.lr / static_cast<double>(end - start);
      auto upd = [&](DenseLayer& layer, const DenseLayer& g) {
        for (std::size_t i = 0; i < layer.weights.a.size(); ++i)
          layer.weights.a[i] -= step * g.weights.a[i];
        for (std::size_t i = 0; i < layer.bias.size(); ++i)
          layer.bias[i] -= step * g.bias[i];
      };
      upd(m.l1, tape.l1);
      upd(m.l2, tape.l2);
      upd(m.l3, tape.l3);
    }
  }
  return m;
}

Vec infer(const AiaModel& model, const Vec& delta) {
  AiaCache c;
  aia_forward(model, delta, c);
  return c.p;
}

std::vector<int> predict_all(const AiaModel& model,
                             const std::vector<std::pair<Vec, int>>& rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (const auto& [x, y] : rows) {
    Vec p = infer(model, x);
    out.push_back(static_cast<int>(
        std::max_element(p.begin(), p.end()) - p.begin()));
  }
  return out;
}

std::vector<int> knn_attack(const AttackDataset& dataset, int k) {
  if (k < 1) throw std::invalid_argument("knn_attack: k must be >= 1");
  const std::size_t kk =
      std::min(static_cast<std::size_t>(k), dataset.train.size());

  std::vector<int> out;
  out.reserve(dataset.test.size());
  std::vector<std::pair<double, int>> dist;  // (distance, label)
  for (const auto& [q, qy] : dataset.test) {
    dist.clear();
    for (const auto& [x, y] : dataset.train) {
      double d2 = 0.0;
      for (std::size_t i = 0; i < q.size(); ++i) {
        const double c = q[i] - x[i];
        d2 += c * c;
      }
      dist.emplace_back(d2, y);
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<long>(kk),
                      dist.end());
    std::map<int, std::pair<int, double>> votes;  // label -> (count, dist sum)
    for (std::size_t i = 0; i < kk; ++i) {
      auto& v = votes[dist[i].second];
      v.first += 1;
      v.second += std::sqrt(dist[i].first);
    }
    int best = -1;
    int best_count = -1;
    double best_mean = 0.0;
    for (const auto& [label, v] : votes) {
      const double mean = v.second / v.first;
      if (v.first > best_count ||
          (v.first == best_count && mean < best_mean)) {
        best = label;
        best_count = v.first;
        best_mean = mean;
      }
    }
    out.push_back(best);
  }
  return out;
}

std::vector<int> random_attack(const AttackDataset& dataset, Rng& rng) {
  std::vector<double> freq(static_cast<std::size_t>(dataset.num_classes), 0.0);
  for (const auto& [x, y] : dataset.train)
    freq[static_cast<std::size_t>(y)] += 1.0;
  double total = static_cast<double>(dataset.train.size());

  std::vector<int> out;
  out.reserve(dataset.test.size());
  for (std::size_t i = 0; i < dataset.test.size(); ++i) {
    double u = rng.uniform() * total;
    int label = 0;
    for (std::size_t cls = 0; cls < freq.size(); ++cls) {
      if (u < freq[cls]) {
        label = static_cast<int>(cls);
        break;
      }
      u -= freq[cls];
      label = static_cast<int>(cls);
    }
    out.push_back(label);
  }
  return out;
}

double f1_score(const std::vector<int>& predictions,
                const std::vector<int>& labels, int num_classes) {
  if (predictions.size() != labels.size())
    throw std::invalid_argument("f1_score: length mismatch");
  double macro = 0.0;
  for (int cls = 0; cls < num_classes; ++cls) {
    long tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const bool p = predictions[i] == cls;
      const bool a = labels[i] == cls;
      if (p && a) ++tp;
      else if (p) ++fp;
      else if (a) ++fn;
    }
    const double denom = static_cast<double>(2 * tp + fp + fn);
    macro += denom > 0.0 ? 2.0 * static_cast<double>(tp) / denom : 0.0;
  }
  return macro / static_cast<double>(num_classes);
}

std::vector<int> test_labels(const AttackDataset& dataset) {
  std::vector<int> out;
  out.reserve(dataset.test.size());
  for (const auto& [x, y] : dataset.test) out.push_back(y);
  return out;
}

}  // namespace fedrec
