#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fedrec/dataset.hpp"
#include "fedrec/linalg.hpp"
#include "fedrec/nn_core.hpp"
#include "fedrec/rng.hpp"

namespace fedrec {

// The four resistance components of the local model.
enum class ComponentTag { kUser = 0, kItem = 1, kMlp1 = 2, kMlp2 = 3 };
constexpr std::array<ComponentTag, 4> kAllComponents = {
    ComponentTag::kUser, ComponentTag::kItem, ComponentTag::kMlp1,
    ComponentTag::kMlp2};
const char* component_name(ComponentTag tag);
ComponentTag component_from_name(const std::string& name);

// Trainable parameters of one local recommender. Flat serialization
// order: e_user, w1, w2, b, e_item, mlp1.W, mlp1.b, mlp2.W, mlp2.b.
// Component partition: User = {e_user, w1, w2, b}, Item = {e_item},
// Mlp1 = mlp1, Mlp2 = mlp2; each component is contiguous in the flat
// layout.
struct ParamSet {
  Mat e_user;        // d x 44
  Mat w1;            // d x d
  Mat w2;            // d x d
  Vec b;             // d
  Mat e_item;        // d x d2
  DenseLayer mlp1;   // d x 2d
  DenseLayer mlp2;   // 1 x d

  ParamSet() = default;
  ParamSet(std::size_t d, std::size_t d2);

  std::size_t d() const { return w1.rows; }
  std::size_t d2() const { return e_item.cols; }
  std::size_t flat_size() const;

  std::vector<ParamView> views();
  void zero();
};

// Half-open [begin, end) ranges into the flat layout, indexed by
// ComponentTag.
std::array<std::pair<std::size_t, std::size_t>, 4> component_spans(
    std::size_t d, std::size_t d2);

Vec flatten(const ParamSet& ps);
ParamSet unflatten(const Vec& flat, std::size_t d, std::size_t d2);

struct Hyper {
  std::size_t d = 64;
  std::size_t d2 = 64;
  double mu1 = 0.001;
  std::size_t batch = 32;
  std::size_t local_epochs = 5;
  int negative_ratio = 4;
};

// Every entry i.i.d. N(0,1) from the given stream.
ParamSet init_params(std::size_t d, std::size_t d2, Rng& rng);

// Frozen random item inputs; row v is item v's raw feature vector.
struct ItemFeatureTable {
  Mat features;  // num_items x d2
  const double* row(int v) const { return features.a.data() + static_cast<std::size_t>(v) * features.cols; }
  std::size_t d2() const { return features.cols; }
  std::size_t num_items() const { return features.rows; }
};

ItemFeatureTable make_item_features(std::size_t num_items, std::size_t d2,
                                    Rng& rng);

// Precomputes each shard's mean neighbor feature (over positives minus
// the held-out item). Must run before training or evaluation.
void fill_neighbor_means(std::vector<UserShard>& shards,
                         const ItemFeatureTable& items);

Vec embed_user(const Mat& e_user, const Vec& x_u);
Vec embed_item(const Mat& e_item, const Vec& x_v);

// Mean of W1 z_v over the given item embeddings; zero vector when the
// list is empty.
Vec aggregate_neighbors(const std::vector<Vec>& neighbor_embeddings,
                        const Mat& w1);

// z* = ReLU(W2 (z_u + z_nb) + b)
Vec user_convolution(const Vec& z_u, const Vec& z_nb, const Mat& w2,
                     const Vec& b);

// sigmoid(mlp2(ReLU(mlp1([z_star; z_v]))))
double score(const Vec& z_star, const Vec& z_v, const DenseLayer& mlp1,
             const DenseLayer& mlp2);

// User-side forward state, shared by every example of a minibatch.
struct UserPathCache {
  Vec z_u, t, z_nb, h, g, z_star;
};

void compute_user_path(const ParamSet& ps, const Vec& x_u, const Vec& xbar,
                       UserPathCache& cache);

double score_with_cache(const ParamSet& ps, const UserPathCache& cache,
                        const double* x_v);

// One minibatch: forward, summed BCE loss, analytic gradients
// accumulated into `tape`. Items are (raw item feature pointer, label).
double batch_loss_and_grad(
    const ParamSet& ps, const Vec& x_u, const Vec& xbar,
    const std::vector<std::pair<const double*, int>>& batch, ParamSet& tape);

// Algorithm: copy the broadcast parameters, run local_epochs epochs of
// shuffled minibatch SGD on the shard, return the updated copy. The
// broadcast set is never written. Throws on non-finite loss.
ParamSet local_train(const UserShard& shard, const ParamSet& global,
                     const ItemFeatureTable& items, const Hyper& hyper,
                     Rng& rng, double* mean_loss_out = nullptr);

// Flat little-endian float64 payload with a one-line JSON shape header.
void save_params(const ParamSet& ps, const std::string& path, int round = -1);
struct Checkpoint {
  ParamSet params;
  int round = -1;
};
Checkpoint load_params(const std::string& path);

}  // namespace fedrec
