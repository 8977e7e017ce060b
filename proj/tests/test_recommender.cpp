#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "fedrec/recommender.hpp"

using namespace fedrec;

namespace {

ParamSet random_params(std::size_t d, std::size_t d2, std::uint64_t seed,
                       double scale = 0.3) {
  Rng rng(seed);
  ParamSet ps = init_params(d, d2, rng);
  for (auto& view : ps.views())
    for (std::size_t i = 0; i < view.size; ++i) view.data[i] *= scale;
  return ps;
}

Vec random_vec(std::size_t n, Rng& rng) {
  Vec v(n);
  for (double& x : v) x = rng.gauss();
  return v;
}

}  // namespace

TEST_CASE("ParamSet layout") {
  SUBCASE("flat size d=64") {
    ParamSet ps(64, 64);
    // 64*44 + 64*64 + 64*64 + 64 + 64*64 + 64*128 + 64 + 64 + 1
    CHECK(ps.flat_size() == 23489);
  }
  SUBCASE("component spans partition the flat layout") {
    for (auto [d, d2] : {std::pair<std::size_t, std::size_t>{8, 8},
                         {16, 12}, {64, 64}}) {
      ParamSet ps(d, d2);
      auto spans = component_spans(d, d2);
      std::size_t covered = 0;
      std::size_t prev_end = 0;
      // contract order in the flat vector: user, item, mlp1, mlp2
      for (ComponentTag tag : {ComponentTag::kUser, ComponentTag::kItem,
                               ComponentTag::kMlp1, ComponentTag::kMlp2}) {
        auto [b, e] = spans[static_cast<int>(tag)];
        CHECK(b == prev_end);
        CHECK(e > b);
        covered += e - b;
        prev_end = e;
      }
      CHECK(covered == ps.flat_size());
    }
    auto spans = component_spans(64, 64);
    CHECK(spans[static_cast<int>(ComponentTag::kUser)].second == 11072);
    auto item = spans[static_cast<int>(ComponentTag::kItem)];
    CHECK(item.second - item.first == 4096);
    auto m2 = spans[static_cast<int>(ComponentTag::kMlp2)];
    CHECK(m2.second - m2.first == 65);
  }
  SUBCASE("flatten / unflatten round trip") {
    ParamSet ps = random_params(6, 5, 77);
    Vec flat = flatten(ps);
    REQUIRE(flat.size() == ps.flat_size());
    ParamSet back = unflatten(flat, 6, 5);
    CHECK(flatten(back) == flat);
    CHECK(back.mlp1.weights.a == ps.mlp1.weights.a);
    CHECK(back.b == ps.b);
  }
  SUBCASE("zero") {
    ParamSet ps = random_params(4, 4, 3);
    ps.zero();
    for (double v : flatten(ps)) CHECK(v == 0.0);
  }
}

TEST_CASE("init_params") {
  SUBCASE("deterministic per seed") {
    Rng a(9), b(9), c(10);
    CHECK(flatten(init_params(8, 8, a)) == flatten(init_params(8, 8, b)));
    CHECK(flatten(init_params(8, 8, c)) != flatten(init_params(8, 8, a)));
  }
  SUBCASE("standard normal moments") {
    Rng rng(123);
    ParamSet ps = init_params(32, 32, rng);
    Vec flat = flatten(ps);
    double mean = 0.0, sq = 0.0;
    for (double v : flat) {
      mean += v;
      sq += v * v;
    }
    mean /= flat.size();
    double var = sq / flat.size() - mean * mean;
    CHECK(std::abs(mean) < 0.05);
    CHECK(var == doctest::Approx(1.0).epsilon(0.05));
  }
}

TEST_CASE("embedding ops") {
  Rng rng(21);
  SUBCASE("embed_user loop oracle") {
    Mat e(3, 4);
    for (auto& w : e.a) w = rng.gauss();
    Vec x = random_vec(4, rng);
    Vec z = embed_user(e, x);
    for (std::size_t r = 0; r < 3; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < 4; ++c) s += e(r, c) * x[c];
      CHECK(z[r] == doctest::Approx(s));
    }
  }
  SUBCASE("zero input gives zero embedding") {
    Mat e(3, 4);
    for (auto& w : e.a) w = rng.gauss();
    Vec z = embed_item(e, Vec(4, 0.0));
    CHECK(z == Vec(3, 0.0));
  }
}

TEST_CASE("aggregate_neighbors") {
  Rng rng(31);
  Mat w1(3, 3);
  for (auto& w : w1.a) w = rng.gauss();

  SUBCASE("empty list is the zero vector") {
    CHECK(aggregate_neighbors({}, w1) == Vec(3, 0.0));
  }
  SUBCASE("single neighbor equals W1 z") {
    Vec z = random_vec(3, rng);
    Vec expect;
    matvec(w1, z, expect);
    CHECK(aggregate_neighbors({z}, w1) == expect);
  }
  SUBCASE("identity W1 gives the plain mean") {
    Mat id(3, 3);
    for (int i = 0; i < 3; ++i) id(i, i) = 1.0;
    Vec a = {1.0, 2.0, 3.0}, b = {3.0, 4.0, 5.0};
    Vec out = aggregate_neighbors({a, b}, id);
    CHECK(out[0] == doctest::Approx(2.0));
    CHECK(out[1] == doctest::Approx(3.0));
    CHECK(out[2] == doctest::Approx(4.0));
  }
  SUBCASE("permutation invariance") {
    std::vector<Vec> zs;
    for (int i = 0; i < 5; ++i) zs.push_back(random_vec(3, rng));
    Vec fwd = aggregate_neighbors(zs, w1);
    std::reverse(zs.begin(), zs.end());
    Vec rev = aggregate_neighbors(zs, w1);
    for (int i = 0; i < 3; ++i) CHECK(fwd[i] == doctest::Approx(rev[i]));
  }
}

TEST_CASE("user_convolution and score") {
  Rng rng(41);
  SUBCASE("user_convolution equals composed primitives") {
    Mat w2(4, 4);
    for (auto& w : w2.a) w = rng.gauss();
    Vec b = random_vec(4, rng);
    Vec z_u = random_vec(4, rng), z_nb = random_vec(4, rng);
    Vec z_star = user_convolution(z_u, z_nb, w2, b);
    Vec sum(4), pre, expect;
    for (int i = 0; i < 4; ++i) sum[i] = z_u[i] + z_nb[i];
    matvec(w2, sum, pre);
    for (int i = 0; i < 4; ++i) pre[i] += b[i];
    relu(pre, expect);
    CHECK(z_star == expect);
    for (double v : z_star) CHECK(v >= 0.0);
  }
  SUBCASE("all-zero parameters score 0.5") {
    DenseLayer m1(4, 8), m2(1, 4);
    CHECK(score(Vec(4, 0.0), Vec(4, 0.0), m1, m2) == doctest::Approx(0.5));
  }
  SUBCASE("monotone in the output bias") {
    DenseLayer m1(2, 4), m2(1, 2);
    Rng r2(5);
    for (auto& w : m1.weights.a) w = r2.gauss();
    for (auto& w : m2.weights.a) w = r2.gauss();
    Vec zs = random_vec(2, r2), zv = random_vec(2, r2);
    m2.bias[0] = -1.0;
    double lo = score(zs, zv, m1, m2);
    m2.bias[0] = 1.0;
    double hi = score(zs, zv, m1, m2);
    CHECK(hi > lo);
  }
  SUBCASE("in (0,1)") {
    DenseLayer m1(3, 6), m2(1, 3);
    for (auto& w : m1.weights.a) w = rng.gauss(0, 3);
    for (auto& w : m2.weights.a) w = rng.gauss(0, 3);
    double s = score(random_vec(3, rng), random_vec(3, rng), m1, m2);
    CHECK(s > 0.0);
    CHECK(s < 1.0);
  }
}

TEST_CASE("cached user path matches primitive composition") {
  Rng rng(55);
  const std::size_t d = 6, d2 = 5;
  ParamSet ps = random_params(d, d2, 17);
  Vec x_u(FeatureLayout::kDim);
  for (double& v : x_u) v = rng.uniform();

  // two raw item features; xbar is their mean, mimicking N(u) = {v1, v2}
  Vec f1 = random_vec(d2, rng), f2 = random_vec(d2, rng);
  Vec xbar(d2);
  for (std::size_t i = 0; i < d2; ++i) xbar[i] = 0.5 * (f1[i] + f2[i]);

  UserPathCache cache;
  compute_user_path(ps, x_u, xbar, cache);

  // oracle via the spec-surface ops: mean_v W1 E_V x_v == W1 E_V xbar
  Vec z_u = embed_user(ps.e_user, x_u);
  Vec z_nb = aggregate_neighbors({embed_item(ps.e_item, f1),
                                  embed_item(ps.e_item, f2)},
                                 ps.w1);
  Vec z_star = user_convolution(z_u, z_nb, ps.w2, ps.b);
  REQUIRE(cache.z_star.size() == d);
  for (std::size_t i = 0; i < d; ++i) {
    CHECK(cache.z_star[i] == doctest::Approx(z_star[i]).epsilon(1e-12));
  }

  Vec probe = random_vec(d2, rng);
  double fast = score_with_cache(ps, cache, probe.data());
  double slow = score(z_star, embed_item(ps.e_item, probe), ps.mlp1, ps.mlp2);
  CHECK(fast == doctest::Approx(slow).epsilon(1e-12));
}

TEST_CASE("batch_loss_and_grad") {
  Rng rng(66);
  const std::size_t d = 5, d2 = 4;
  ParamSet ps = random_params(d, d2, 18);
  Vec x_u(FeatureLayout::kDim);
  for (double& v : x_u) v = rng.uniform();
  Vec xbar = random_vec(d2, rng);
  std::vector<Vec> feats;
  std::vector<std::pair<const double*, int>> batch;
  for (int i = 0; i < 6; ++i) feats.push_back(random_vec(d2, rng));
  for (int i = 0; i < 6; ++i) batch.emplace_back(feats[i].data(), i % 2);

  SUBCASE("loss equals summed per-example bce over slow path") {
    ParamSet tape(d, d2);
    double loss = batch_loss_and_grad(ps, x_u, xbar, batch, tape);
    UserPathCache cache;
    compute_user_path(ps, x_u, xbar, cache);
    double expect = 0.0;
    for (auto& [fp, label] : batch)
      expect += bce_loss(score_with_cache(ps, cache, fp), label);
    CHECK(loss == doctest::Approx(expect).epsilon(1e-12));
  }
  SUBCASE("analytic gradients match finite differences") {
    ParamSet tape(d, d2);
    batch_loss_and_grad(ps, x_u, xbar, batch, tape);
    auto pv = ps.views();
    auto gv = tape.views();
    auto report = finite_diff_check(pv, gv, [&] {
      ParamSet scratch(d, d2);
      return batch_loss_and_grad(ps, x_u, xbar, batch, scratch);
    });
    INFO("worst block ", report.worst_block);
    CHECK(report.max_rel_error < 1e-5);
  }
  SUBCASE("empty batch: zero loss, zero gradient") {
    ParamSet tape(d, d2);
    CHECK(batch_loss_and_grad(ps, x_u, xbar, {}, tape) == 0.0);
    for (double v : flatten(tape)) CHECK(v == 0.0);
  }
}

TEST_CASE("local_train") {
  Rng rng(77);
  const std::size_t d = 6, d2 = 6;
  const int num_items = 20;
  Rng item_rng(derive_seed(12, "item_features"));
  ItemFeatureTable items = make_item_features(num_items, d2, item_rng);

  UserShard shard;
  shard.user_id = 0;
  shard.positives = {1, 3, 5, 7};
  for (int v : {1, 3, 5}) shard.examples.emplace_back(v, 1);
  for (int v : {2, 4, 6, 8, 10, 12}) shard.examples.emplace_back(v, 0);
  shard.features.assign(FeatureLayout::kDim, 0.0);
  shard.features[FeatureLayout::kCount] = 0.3;
  shard.features[FeatureLayout::kGender] = 1.0;
  shard.held_out_item = 7;
  std::vector<UserShard> shards = {shard};
  fill_neighbor_means(shards, items);

  ParamSet global = random_params(d, d2, 19);
  Hyper hy;
  hy.d = d;
  hy.d2 = d2;
  hy.batch = 4;
  hy.local_epochs = 3;

  SUBCASE("zero learning rate is the identity") {
    Hyper frozen = hy;
    frozen.mu1 = 0.0;
    Rng r(1);
    ParamSet out = local_train(shards[0], global, items, frozen, r);
    CHECK(flatten(out) == flatten(global));
  }
  SUBCASE("broadcast parameters are never mutated") {
    Vec before = flatten(global);
    Rng r(1);
    local_train(shards[0], global, items, hy, r);
    CHECK(flatten(global) == before);
  }
  SUBCASE("deterministic per rng seed") {
    Rng r1(4), r2(4);
    CHECK(flatten(local_train(shards[0], global, items, hy, r1)) ==
          flatten(local_train(shards[0], global, items, hy, r2)));
  }
  SUBCASE("training reduces mean loss on the shard") {
    Hyper long_run = hy;
    long_run.local_epochs = 40;
    long_run.mu1 = 0.05;
    Rng r(2);
    double final_loss = 0.0;
    ParamSet out = local_train(shards[0], global, items, long_run, r,
                               &final_loss);
    // loss of the untouched broadcast
    UserPathCache cache;
    compute_user_path(global, shards[0].features,
                      shards[0].neighbor_feature_mean, cache);
    double initial = 0.0;
    for (auto& [v, label] : shards[0].examples)
      initial += bce_loss(score_with_cache(global, cache, items.row(v)), label);
    initial /= shards[0].examples.size();
    CHECK(final_loss < initial);
  }
  SUBCASE("single example, one step equals a manual SGD step") {
    UserShard tiny = shards[0];
    tiny.examples = {{2, 1}};
    Hyper one = hy;
    one.local_epochs = 1;
    one.batch = 1;
    one.mu1 = 0.01;
    Rng r(9);
    ParamSet got = local_train(tiny, global, items, one, r);

    ParamSet expect = global;
    ParamSet tape(d, d2);
    Vec fx(items.row(2), items.row(2) + d2);
    batch_loss_and_grad(expect, tiny.features, tiny.neighbor_feature_mean,
                        {{fx.data(), 1}}, tape);
    auto pv = expect.views();
    auto gv = tape.views();
    sgd_step(pv, gv, 0.01);
    Vec a = flatten(got), b = flatten(expect);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i)
      CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
  }
}

TEST_CASE("fill_neighbor_means excludes the held-out item") {
  Rng item_rng(3);
  ItemFeatureTable items = make_item_features(6, 3, item_rng);
  UserShard s;
  s.user_id = 0;
  s.positives = {0, 2, 4};
  s.held_out_item = 4;
  std::vector<UserShard> shards = {s};
  fill_neighbor_means(shards, items);
  REQUIRE(shards[0].neighbor_feature_mean.size() == 3);
  for (int i = 0; i < 3; ++i) {
    double expect = 0.5 * (items.row(0)[i] + items.row(2)[i]);
    CHECK(shards[0].neighbor_feature_mean[i] == doctest::Approx(expect));
  }
}

TEST_CASE("parameter serialization round trip") {
  namespace fs = std::filesystem;
  auto path = (fs::temp_directory_path() / "fedrec-params-test.bin").string();
  ParamSet ps = random_params(7, 5, 91);
  save_params(ps, path, 12);
  Checkpoint ck = load_params(path);
  CHECK(ck.round == 12);
  CHECK(ck.params.d() == 7);
  CHECK(ck.params.d2() == 5);
  CHECK(flatten(ck.params) == flatten(ps));
  fs::remove(path);
}
