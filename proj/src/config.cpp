#include "fedrec/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace fedrec {

using nlohmann::json;

namespace {

// Reject unknown keys so typos fail loudly instead of silently using a
// default.
void check_keys(const json& j, const std::set<std::string>& allowed,
                const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key))
      throw std::invalid_argument("config: unknown key '" + key + "' in " +
                                  where);
  }
}

ResistanceMap resistance_from_json(const json& j) {
  if (j.is_string()) {
    const std::string name = j.get<std::string>();
    if (name == "by_vulnerability") return ResistanceMap::by_vulnerability();
    if (name == "literal") return ResistanceMap::literal();
    throw std::invalid_argument("config: unknown resistance preset '" + name +
                                "'");
  }
  ResistanceMap map;
  check_keys(j, {"user", "item", "mlp1", "mlp2"}, "privacy.resistance");
  for (ComponentTag tag : kAllComponents)
    map.level[static_cast<int>(tag)] = j.at(component_name(tag)).get<int>();
  return map;
}

json resistance_to_json(const ResistanceMap& map) {
  json j;
  for (ComponentTag tag : kAllComponents)
    j[component_name(tag)] = map.of(tag);
  return j;
}

}  // namespace

ComponentMask mask_from_string(const std::string& name) {
  if (name == "full") return {};
  ComponentMask mask;
  std::stringstream ss(name);
  std::string part;
  while (std::getline(ss, part, '+'))
    mask.push_back(component_from_name(part));
  return mask;
}

void ExperimentConfig::validate() const {
  if (dataset.source != "synthetic" && dataset.source != "ml100k" &&
      dataset.source != "ml1m")
    throw std::invalid_argument("config: dataset.source must be "
                                "synthetic|ml100k|ml1m");
  if (dataset.source != "synthetic" &&
      (dataset.data_path.empty() || dataset.profile_path.empty()))
    throw std::invalid_argument("config: dataset paths required");
  if (federation.hyper.d == 0 || federation.hyper.d2 == 0)
    throw std::invalid_argument("config: d and d2 must be positive");
  if (federation.hyper.batch == 0)
    throw std::invalid_argument("config: batch must be positive");
  if (federation.client_fraction <= 0.0 || federation.client_fraction > 1.0)
    throw std::invalid_argument("config: client_fraction out of (0,1]");
  if (attack.zeta <= 0.0 || attack.zeta >= 1.0)
    throw std::invalid_argument("config: zeta out of (0,1)");
  if (attack.num_seeds < 1)
    throw std::invalid_argument("config: attack.num_seeds must be >= 1");
  for (const auto& a : attack.attributes) {
    if (a != "gender" && a != "age")
      throw std::invalid_argument("config: unknown attribute '" + a + "'");
  }
  for (const auto& a : attack.attackers) {
    if (a != "aia" && a != "knn" && a != "random")
      throw std::invalid_argument("config: unknown attacker '" + a + "'");
  }
  for (const auto& m : attack.masks) mask_from_string(m);
  federation.plan.validate();
}

ExperimentConfig config_from_json_text(const std::string& text) {
  json j = json::parse(text);
  ExperimentConfig c;
  check_keys(j,
             {"dataset", "hyper", "federation", "privacy", "attack",
              "hit_k", "output_dir", "master_seed"},
             "top level");

  if (j.contains("dataset")) {
    const auto& d = j["dataset"];
    check_keys(d,
               {"source", "data_path", "profile_path", "occupation_path",
                "num_users", "num_items", "mean_ratings_per_user", "seed"},
               "dataset");
    c.dataset.source = d.value("source", c.dataset.source);
    c.dataset.data_path = d.value("data_path", "");
    c.dataset.profile_path = d.value("profile_path", "");
    c.dataset.occupation_path = d.value("occupation_path", "");
    c.dataset.synth.num_users = d.value("num_users", c.dataset.synth.num_users);
    c.dataset.synth.num_items = d.value("num_items", c.dataset.synth.num_items);
    c.dataset.synth.mean_ratings_per_user =
        d.value("mean_ratings_per_user", c.dataset.synth.mean_ratings_per_user);
    c.dataset.synth.seed = d.value("seed", c.dataset.synth.seed);
  }

  if (j.contains("hyper")) {
    const auto& h = j["hyper"];
    check_keys(h, {"d", "d2", "mu1", "batch", "local_epochs", "negative_ratio"},
               "hyper");
    auto& hy = c.federation.hyper;
    hy.d = h.value("d", hy.d);
    hy.d2 = h.value("d2", hy.d);  // defaults to d
    hy.mu1 = h.value("mu1", hy.mu1);
    hy.batch = h.value("batch", hy.batch);
    hy.local_epochs = h.value("local_epochs", hy.local_epochs);
    hy.negative_ratio = h.value("negative_ratio", hy.negative_ratio);
  }

  if (j.contains("federation")) {
    const auto& f = j["federation"];
    check_keys(f,
               {"rounds", "client_fraction", "workers", "harvest_rounds",
                "harvest_full_participation"},
               "federation");
    c.federation.rounds = f.value("rounds", c.federation.rounds);
    c.federation.client_fraction =
        f.value("client_fraction", c.federation.client_fraction);
    c.federation.workers = f.value("workers", c.federation.workers);
    if (f.contains("harvest_rounds"))
      c.federation.harvest_rounds =
          f["harvest_rounds"].get<std::vector<int>>();
    c.federation.harvest_full_participation =
        f.value("harvest_full_participation",
                c.federation.harvest_full_participation);
  }

  if (j.contains("privacy")) {
    const auto& p = j["privacy"];
    check_keys(p,
               {"mode", "eps_min", "eps_max", "delta", "lambda", "sigma",
                "resistance", "perturb_per_epoch"},
               "privacy");
    auto& plan = c.federation.plan;
    plan.mode = privacy_mode_from_name(p.value("mode", "off"));
    plan.eps_min = p.value("eps_min", plan.eps_min);
    plan.eps_max = p.value("eps_max", plan.eps_max);
    plan.delta = p.value("delta", plan.delta);
    plan.fixed_lambda = p.value("lambda", plan.fixed_lambda);
    plan.gaussian_sigma = p.value("sigma", plan.gaussian_sigma);
    if (p.contains("resistance"))
      plan.resistance = resistance_from_json(p["resistance"]);
    c.federation.perturb_per_epoch =
        p.value("perturb_per_epoch", c.federation.perturb_per_epoch);
  }

  if (j.contains("attack")) {
    const auto& a = j["attack"];
    check_keys(a,
               {"attributes", "masks", "attackers", "zeta", "num_seeds",
                "aia_epochs", "aia_lr", "aia_batch", "knn_k"},
               "attack");
    if (a.contains("attributes"))
      c.attack.attributes = a["attributes"].get<std::vector<std::string>>();
    if (a.contains("masks"))
      c.attack.masks = a["masks"].get<std::vector<std::string>>();
    if (a.contains("attackers"))
      c.attack.attackers = a["attackers"].get<std::vector<std::string>>();
    c.attack.zeta = a.value("zeta", c.attack.zeta);
    c.attack.num_seeds = a.value("num_seeds", c.attack.num_seeds);
    c.attack.aia.epochs = a.value("aia_epochs", c.attack.aia.epochs);
    c.attack.aia.lr = a.value("aia_lr", c.attack.aia.lr);
    c.attack.aia.batch = a.value("aia_batch", c.attack.aia.batch);
    c.attack.knn_k = a.value("knn_k", c.attack.knn_k);
  }

  c.hit_k = j.value("hit_k", c.hit_k);
  c.output_dir = j.value("output_dir", c.output_dir);
  c.master_seed = j.value("master_seed", c.master_seed);
  c.federation.master_seed = c.master_seed;
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return config_from_json_text(ss.str());
}

std::string config_to_json(const ExperimentConfig& c) {
  json j;
  j["dataset"] = {{"source", c.dataset.source},
                  {"data_path", c.dataset.data_path},
                  {"profile_path", c.dataset.profile_path},
                  {"occupation_path", c.dataset.occupation_path},
                  {"num_users", c.dataset.synth.num_users},
                  {"num_items", c.dataset.synth.num_items},
                  {"mean_ratings_per_user", c.dataset.synth.mean_ratings_per_user},
                  {"seed", c.dataset.synth.seed}};
  const auto& hy = c.federation.hyper;
  j["hyper"] = {{"d", hy.d},
                {"d2", hy.d2},
                {"mu1", hy.mu1},
                {"batch", hy.batch},
                {"local_epochs", hy.local_epochs},
                {"negative_ratio", hy.negative_ratio}};
  j["federation"] = {
      {"rounds", c.federation.rounds},
      {"client_fraction", c.federation.client_fraction},
      {"workers", c.federation.workers},
      {"harvest_rounds", c.federation.harvest_rounds},
      {"harvest_full_participation", c.federation.harvest_full_participation}};
  const auto& plan = c.federation.plan;
  j["privacy"] = {{"mode", privacy_mode_name(plan.mode)},
                  {"eps_min", plan.eps_min},
                  {"eps_max", plan.eps_max},
                  {"delta", plan.delta},
                  {"lambda", plan.fixed_lambda},
                  {"sigma", plan.gaussian_sigma},
                  {"resistance", resistance_to_json(plan.resistance)},
                  {"perturb_per_epoch", c.federation.perturb_per_epoch}};
  j["attack"] = {{"attributes", c.attack.attributes},
                 {"masks", c.attack.masks},
                 {"attackers", c.attack.attackers},
                 {"zeta", c.attack.zeta},
                 {"num_seeds", c.attack.num_seeds},
                 {"aia_epochs", c.attack.aia.epochs},
                 {"aia_lr", c.attack.aia.lr},
                 {"aia_batch", c.attack.aia.batch},
                 {"knn_k", c.attack.knn_k}};
  j["hit_k"] = c.hit_k;
  j["output_dir"] = c.output_dir;
  j["master_seed"] = c.master_seed;
  return j.dump(2);
}

std::uint64_t config_hash(const ExperimentConfig& config) {
  return hash_tag(config_to_json(config));
}

}  // namespace fedrec
