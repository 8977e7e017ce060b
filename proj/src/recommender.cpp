#include "fedrec/recommender.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

namespace fedrec {

const char* component_name(ComponentTag tag) {
  switch (tag) {
    case ComponentTag::kUser: return "user";
    case ComponentTag::kItem: return "item";
    case ComponentTag::kMlp1: return "mlp1";
    case ComponentTag::kMlp2: return "mlp2";
  }
  return "?";
}

ComponentTag component_from_name(const std::string& name) {
  for (ComponentTag tag : kAllComponents) {
    if (name == component_name(tag)) return tag;
  }
  throw std::invalid_argument("unknown component '" + name + "'");
}

ParamSet::ParamSet(std::size_t d, std::size_t d2)
    : e_user(d, FeatureLayout::kDim),
      w1(d, d),
      w2(d, d),
      b(d, 0.0),
      e_item(d, d2),
      mlp1(d, 2 * d),
      mlp2(1, d) {}

std::size_t ParamSet::flat_size() const {
  return e_user.size() + w1.size() + w2.size() + b.size() + e_item.size() +
         mlp1.weights.size() + mlp1.bias.size() + mlp2.weights.size() +
         mlp2.bias.size();
}

std::vector<ParamView> ParamSet::views() {
  return {
      {"e_user", e_user.a.data(), e_user.size()},
      {"w1", w1.a.data(), w1.size()},
      {"w2", w2.a.data(), w2.size()},
      {"b", b.data(), b.size()},
      {"e_item", e_item.a.data(), e_item.size()},
      {"mlp1.w", mlp1.weights.a.data(), mlp1.weights.size()},
      {"mlp1.b", mlp1.bias.data(), mlp1.bias.size()},
      {"mlp2.w", mlp2.weights.a.data(), mlp2.weights.size()},
      {"mlp2.b", mlp2.bias.data(), mlp2.bias.size()},
  };
}

void ParamSet::zero() {
  for (auto& v : views()) std::memset(v.data, 0, v.size * sizeof(double));
}

std::array<std::pair<std::size_t, std::size_t>, 4> component_spans(
    std::size_t d, std::size_t d2) {
  const std::size_t user = d * FeatureLayout::kDim + 2 * d * d + d;
  const std::size_t item = d * d2;
  const std::size_t mlp1 = d * 2 * d + d;
  const std::size_t mlp2 = d + 1;
  std::array<std::pair<std::size_t, std::size_t>, 4> spans;
  std::size_t off = 0;
  spans[0] = {off, off + user};
  off += user;
  spans[1] = {off, off + item};
  off += item;
  spans[2] = {off, off + mlp1};
  off += mlp1;
  spans[3] = {off, off + mlp2};
  return spans;
}

Vec flatten(const ParamSet& ps) {
  Vec flat;
  flat.reserve(ps.flat_size());
  auto& mut = const_cast<ParamSet&>(ps);
  for (const auto& v : mut.views())
    flat.insert(flat.end(), v.data, v.data + v.size);
  return flat;
}

ParamSet unflatten(const Vec& flat, std::size_t d, std::size_t d2) {
  ParamSet ps(d, d2);
  if (flat.size() != ps.flat_size())
    throw std::invalid_argument("unflatten: length mismatch");
  std::size_t off = 0;
  for (auto& v : ps.views()) {
    std::memcpy(v.data, flat.data() + off, v.size * sizeof(double));
    off += v.size;
  }
  return ps;
}

ParamSet init_params(std::size_t d, std::size_t d2, Rng& rng) {
  if (d == 0 || d2 == 0) throw std::invalid_argument("init_params: zero dim");
  ParamSet ps(d, d2);
  for (auto& v : ps.views()) {
    for (std::size_t i = 0; i < v.size; ++i) v.data[i] = rng.gauss();
  }
  return ps;
}

ItemFeatureTable make_item_features(std::size_t num_items, std::size_t d2,
                                    Rng& rng) {
  ItemFeatureTable table;
  table.features = Mat(num_items, d2);
  for (double& x : table.features.a) x = rng.gauss();
  return table;
}

void fill_neighbor_means(std::vector<UserShard>& shards,
                         const ItemFeatureTable& items) {
  const std::size_t d2 = items.d2();
  for (auto& s : shards) {
    s.neighbor_feature_mean.assign(d2, 0.0);
    std::size_t n = 0;
    for (int v : s.positives) {
      if (s.held_out_item && v == *s.held_out_item) continue;
      const double* row = items.row(v);
      for (std::size_t j = 0; j < d2; ++j) s.neighbor_feature_mean[j] += row[j];
      ++n;
    }
    if (n > 0) {
      for (double& x : s.neighbor_feature_mean) x /= static_cast<double>(n);
    }
  }
}

Vec embed_user(const Mat& e_user, const Vec& x_u) {
  Vec z;
  matvec(e_user, x_u, z);
  return z;
}

Vec embed_item(const Mat& e_item, const Vec& x_v) {
  Vec z;
  matvec(e_item, x_v, z);
  return z;
}

Vec aggregate_neighbors(const std::vector<Vec>& neighbor_embeddings,
                        const Mat& w1) {
  Vec mean(w1.cols, 0.0);
  if (neighbor_embeddings.empty()) return Vec(w1.rows, 0.0);
  for (const Vec& z : neighbor_embeddings) axpy(1.0, z, mean);
  for (double& x : mean) x /= static_cast<double>(neighbor_embeddings.size());
  Vec out;
  matvec(w1, mean, out);
  return out;
}

Vec user_convolution(const Vec& z_u, const Vec& z_nb, const Mat& w2,
                     const Vec& b) {
  Vec h(z_u.size());
  for (std::size_t i = 0; i < h.size(); ++i) h[i] = z_u[i] + z_nb[i];
  Vec g;
  matvec(w2, h, g);
  Vec out(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) out[i] = relu(g[i] + b[i]);
  return out;
}

double score(const Vec& z_star, const Vec& z_v, const DenseLayer& mlp1,
             const DenseLayer& mlp2) {
  Vec a;
  a.reserve(z_star.size() + z_v.size());
  a.insert(a.end(), z_star.begin(), z_star.end());
  a.insert(a.end(), z_v.begin(), z_v.end());
  Vec g1, h1, s;
  dense_forward(mlp1, a, g1);
  relu(g1, h1);
  dense_forward(mlp2, h1, s);
  return sigmoid(s[0]);
}

void compute_user_path(const ParamSet& ps, const Vec& x_u, const Vec& xbar,
                       UserPathCache& cache) {
  matvec(ps.e_user, x_u, cache.z_u);
  matvec(ps.e_item, xbar, cache.t);
  matvec(ps.w1, cache.t, cache.z_nb);
  const std::size_t d = ps.d();
  cache.h.resize(d);
  for (std::size_t i = 0; i < d; ++i) cache.h[i] = cache.z_u[i] + cache.z_nb[i];
  matvec(ps.w2, cache.h, cache.g);
  cache.z_star.resize(d);
  for (std::size_t i = 0; i < d; ++i) {
    cache.g[i] += ps.b[i];
    cache.z_star[i] = relu(cache.g[i]);
  }
}

double score_with_cache(const ParamSet& ps, const UserPathCache& cache,
                        const double* x_v) {
  const std::size_t d = ps.d();
  const std::size_t d2 = ps.d2();
  Vec a(2 * d);
  // z_v = E_V x_v, written straight into the concat buffer
  for (std::size_t r = 0; r < d; ++r) {
    const double* row = ps.e_item.a.data() + r * d2;
    double s = 0.0;
    for (std::size_t c = 0; c < d2; ++c) s += row[c] * x_v[c];
    a[d + r] = s;
    a[r] = cache.z_star[r];
  }
  Vec g1, h1, s;
  dense_forward(ps.mlp1, a, g1);
  relu(g1, h1);
  dense_forward(ps.mlp2, h1, s);
  return sigmoid(s[0]);
}

double batch_loss_and_grad(
    const ParamSet& ps, const Vec& x_u, const Vec& xbar,
    const std::vector<std::pair<const double*, int>>& batch, ParamSet& tape) {
  const std::size_t d = ps.d();
  const std::size_t d2 = ps.d2();

  UserPathCache uc;
  compute_user_path(ps, x_u, xbar, uc);

  Vec a(2 * d), g1(d), h1(d), dg1(d), da(2 * d);
  Vec dz_star_acc(d, 0.0);
  Vec x_v_vec(d2);
  double loss = 0.0;

  for (const auto& [x_v, label] : batch) {
    // item embedding into the concat buffer
    for (std::size_t r = 0; r < d; ++r) {
      const double* row = ps.e_item.a.data() + r * d2;
      double s = 0.0;
      for (std::size_t c = 0; c < d2; ++c) s += row[c] * x_v[c];
      a[d + r] = s;
      a[r] = uc.z_star[r];
    }
    // mlp forward
    for (std::size_t r = 0; r < d; ++r) {
      const double* row = ps.mlp1.weights.a.data() + r * 2 * d;
      double s = ps.mlp1.bias[r];
      for (std::size_t c = 0; c < 2 * d; ++c) s += row[c] * a[c];
      g1[r] = s;
      h1[r] = relu(s);
    }
    double s = ps.mlp2.bias[0];
    for (std::size_t c = 0; c < d; ++c) s += ps.mlp2.weights.a[c] * h1[c];
    const double p = sigmoid(s);
    loss += bce_loss(p, label);

    // backward
    const bool interior = p > kProbClamp && p < 1.0 - kProbClamp;
    const double ds = interior ? p - static_cast<double>(label) : 0.0;
    if (ds != 0.0) {
      tape.mlp2.bias[0] += ds;
      for (std::size_t c = 0; c < d; ++c) {
        tape.mlp2.weights.a[c] += ds * h1[c];
        dg1[c] = g1[c] > 0.0 ? ds * ps.mlp2.weights.a[c] : 0.0;
      }
      std::fill(da.begin(), da.end(), 0.0);
      for (std::size_t r = 0; r < d; ++r) {
        const double gr = dg1[r];
        if (gr == 0.0) continue;
        tape.mlp1.bias[r] += gr;
        double* trow = tape.mlp1.weights.a.data() + r * 2 * d;
        const double* row = ps.mlp1.weights.a.data() + r * 2 * d;
        for (std::size_t c = 0; c < 2 * d; ++c) {
          trow[c] += gr * a[c];
          da[c] += gr * row[c];
        }
      }
      for (std::size_t i = 0; i < d; ++i) dz_star_acc[i] += da[i];
      // dE_V += dz_v x_v^T
      for (std::size_t r = 0; r < d; ++r) {
        const double dzv = da[d + r];
        if (dzv == 0.0) continue;
        double* trow = tape.e_item.a.data() + r * d2;
        for (std::size_t c = 0; c < d2; ++c) trow[c] += dzv * x_v[c];
      }
    }
  }

  // shared user path backward
  Vec dg(d);
  for (std::size_t i = 0; i < d; ++i)
    dg[i] = uc.g[i] > 0.0 ? dz_star_acc[i] : 0.0;
  add_outer(tape.w2, dg, uc.h);
  axpy(1.0, dg, tape.b);
  Vec dh(d, 0.0);
  matvec_t_add(ps.w2, dg, dh);
  add_outer(tape.e_user, dh, x_u);
  add_outer(tape.w1, dh, uc.t);
  // dt = W1^T dh, then dE_V += dt xbar^T
  Vec dt(d, 0.0);
  matvec_t_add(ps.w1, dh, dt);
  for (std::size_t r = 0; r < d; ++r) {
    const double v = dt[r];
    if (v == 0.0) continue;
    double* trow = tape.e_item.a.data() + r * d2;
    for (std::size_t c = 0; c < d2; ++c) trow[c] += v * xbar[c];
  }
  return loss;
}

ParamSet local_train(const UserShard& shard, const ParamSet& global,
                     const ItemFeatureTable& items, const Hyper& hyper,
                     Rng& rng, double* mean_loss_out) {
  if (shard.examples.empty())
    throw std::invalid_argument("local_train: shard has no examples");
  if (shard.neighbor_feature_mean.size() != global.d2())
    throw std::invalid_argument("local_train: neighbor means not filled");

  ParamSet theta = global;
  ParamSet tape(global.d(), global.d2());

  std::vector<std::size_t> order(shard.examples.size());
  std::iota(order.begin(), order.end(), 0);

  double total_loss = 0.0;
  std::size_t total_examples = 0;
  std::vector<std::pair<const double*, int>> batch;
  batch.reserve(hyper.batch);

  for (std::size_t epoch = 0; epoch < hyper.local_epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size();
         start += hyper.batch) {
      batch.clear();
      const std::size_t end = std::min(start + hyper.batch, order.size());
      for (std::size_t i = start; i < end; ++i) {
        const auto& [item, label] = shard.examples[order[i]];
        batch.emplace_back(items.row(item), label);
      }
      tape.zero();
      double loss = batch_loss_and_grad(theta, shard.features,
                                        shard.neighbor_feature_mean, batch,
                                        tape);
      if (!std::isfinite(loss))
        throw std::runtime_error("local_train: non-finite loss for user " +
                                 std::to_string(shard.user_id));
      total_loss += loss;
      total_examples += batch.size();
      auto pv = theta.views();
      auto gv = tape.views();
      sgd_step(pv, gv, hyper.mu1);
    }
  }
  if (mean_loss_out)
    *mean_loss_out =
        total_examples > 0 ? total_loss / static_cast<double>(total_examples)
                           : 0.0;
  return theta;
}

void save_params(const ParamSet& ps, const std::string& path, int round) {
  nlohmann::json header;
  header["format"] = "fedrec-params";
  header["d"] = ps.w1.rows;
  header["d2"] = ps.e_item.cols;
  header["flat_size"] = ps.flat_size();
  header["order"] = {"e_user", "w1",     "w2",     "b",     "e_item",
                     "mlp1.w", "mlp1.b", "mlp2.w", "mlp2.b"};
  if (round >= 0) header["round"] = round;

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << header.dump() << "\n";
  Vec flat = flatten(ps);
  f.write(reinterpret_cast<const char*>(flat.data()),
          static_cast<std::streamsize>(flat.size() * sizeof(double)));
  if (!f) throw std::runtime_error("write failed: " + path);
}

Checkpoint load_params(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(f, line))
    throw std::runtime_error("missing header: " + path);
  auto header = nlohmann::json::parse(line);
  if (header.value("format", "") != "fedrec-params")
    throw std::runtime_error("bad header: " + path);
  const std::size_t d = header.at("d");
  const std::size_t d2 = header.at("d2");
  Checkpoint ck;
  ck.round = header.value("round", -1);
  ParamSet shape(d, d2);
  Vec flat(shape.flat_size());
  f.read(reinterpret_cast<char*>(flat.data()),
         static_cast<std::streamsize>(flat.size() * sizeof(double)));
  if (f.gcount() !=
      static_cast<std::streamsize>(flat.size() * sizeof(double)))
    throw std::runtime_error("truncated payload: " + path);
  ck.params = unflatten(flat, d, d2);
  return ck;
}

}  // namespace fedrec
