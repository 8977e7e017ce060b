#include "fedrec/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace fedrec {
namespace {

std::vector<std::string> split(const std::string& line,
                               const std::string& sep) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    std::size_t next = line.find(sep, pos);
    if (next == std::string::npos) {
      out.push_back(line.substr(pos));
      break;
    }
    out.push_back(line.substr(pos, next - pos));
    pos = next + sep.size();
  }
  return out;
}

long parse_long(const std::string& s, const std::string& path, std::size_t ln) {
  try {
    std::size_t used = 0;
    long v = std::stol(s, &used);
    if (used != s.size()) throw std::invalid_argument("trailing chars");
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error(path + ":" + std::to_string(ln) +
                             ": malformed field '" + s + "'");
  }
}

}  // namespace

double rating_entropy(const std::array<long, 5>& level_counts) {
  long total = 0;
  for (long c : level_counts) {
    if (c < 0) throw std::invalid_argument("rating_entropy: negative count");
    total += c;
  }
  if (total == 0)
    throw std::invalid_argument("rating_entropy: all counts zero");
  double h = 0.0;
  for (long c : level_counts) {
    if (c == 0) continue;
    double p = static_cast<double>(c) / static_cast<double>(total);
    h -= p * std::log(p);
  }
  return h;
}

double rating_entropy(const std::vector<long>& level_counts) {
  if (level_counts.size() != 5)
    throw std::invalid_argument("rating_entropy: need 5 level counts");
  std::array<long, 5> a{};
  std::copy(level_counts.begin(), level_counts.end(), a.begin());
  return rating_entropy(a);
}

int age_bucket(int age) {
  if (age < 35) return 0;
  if (age <= 45) return 1;
  return 2;
}

Dataset load_movielens(const std::string& data_path,
                       const std::string& profile_path, MovielensFormat format,
                       const std::string& occupation_path) {
  const std::string sep = format == MovielensFormat::kMl100k ? "\t" : "::";

  std::ifstream data(data_path);
  if (!data) throw std::runtime_error("cannot open " + data_path);

  Dataset out;
  // raw (user,item) -> position in interactions; last write wins
  std::map<std::pair<long, long>, std::size_t> seen;
  std::vector<Interaction> raw;
  std::string line;
  std::size_t ln = 0;
  while (std::getline(data, line)) {
    ++ln;
    if (line.empty()) continue;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto f = split(line, sep);
    if (f.size() != 4)
      throw std::runtime_error(data_path + ":" + std::to_string(ln) +
                               ": expected 4 fields, got " +
                               std::to_string(f.size()));
    long user = parse_long(f[0], data_path, ln);
    long item = parse_long(f[1], data_path, ln);
    long rating = parse_long(f[2], data_path, ln);
    long ts = parse_long(f[3], data_path, ln);
    if (rating < 1 || rating > 5) {
      ++out.stats.rejected_ratings;
      continue;
    }
    Interaction it;
    it.user_id = static_cast<int>(user);
    it.item_id = static_cast<int>(item);
    it.rating = static_cast<int>(rating);
    it.timestamp = ts;
    auto key = std::make_pair(user, item);
    auto pos = seen.find(key);
    if (pos != seen.end()) {
      raw[pos->second] = it;
      ++out.stats.duplicates_dropped;
    } else {
      seen.emplace(key, raw.size());
      raw.push_back(it);
    }
  }

  // Profiles.
  std::ifstream prof(profile_path);
  if (!prof) throw std::runtime_error("cannot open " + profile_path);

  std::unordered_map<std::string, int> occ_index;
  if (!occupation_path.empty()) {
    std::ifstream occ(occupation_path);
    if (!occ) throw std::runtime_error("cannot open " + occupation_path);
    std::string name;
    while (std::getline(occ, name)) {
      if (!name.empty() && name.back() == '\r') name.pop_back();
      if (name.empty()) continue;
      occ_index.emplace(name, static_cast<int>(out.occupation_vocab.size()));
      out.occupation_vocab.push_back(name);
    }
  }

  struct RawProfile {
    long user;
    int age, gender, occupation;
  };
  std::vector<RawProfile> raw_profiles;
  ln = 0;
  while (std::getline(prof, line)) {
    ++ln;
    if (line.empty()) continue;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto f = split(line, format == MovielensFormat::kMl100k ? "|" : "::");
    if (f.size() < 4)
      throw std::runtime_error(profile_path + ":" + std::to_string(ln) +
                               ": expected >=4 fields");
    RawProfile p{};
    if (format == MovielensFormat::kMl100k) {
      // user|age|gender|occupation|zip
      p.user = parse_long(f[0], profile_path, ln);
      p.age = static_cast<int>(parse_long(f[1], profile_path, ln));
      p.gender = f[2] == "M" ? 1 : 0;
      auto it = occ_index.find(f[3]);
      if (it == occ_index.end()) {
        if (!occupation_path.empty())
          throw std::runtime_error(profile_path + ":" + std::to_string(ln) +
                                   ": unknown occupation '" + f[3] + "'");
        it = occ_index.emplace(f[3], static_cast<int>(out.occupation_vocab.size()))
                 .first;
        out.occupation_vocab.push_back(f[3]);
      }
      p.occupation = it->second;
    } else {
      // UserID::Gender::Age::Occupation::Zip
      p.user = parse_long(f[0], profile_path, ln);
      p.gender = f[1] == "M" ? 1 : 0;
      p.age = static_cast<int>(parse_long(f[2], profile_path, ln));
      p.occupation = static_cast<int>(parse_long(f[3], profile_path, ln));
    }
    if (p.occupation < 0 || p.occupation >= 21)
      throw std::runtime_error(profile_path + ":" + std::to_string(ln) +
                               ": occupation index out of range");
    raw_profiles.push_back(p);
  }

  // Contiguous reindexing, sorted by raw id for determinism.
  std::map<long, int> user_idx, item_idx;
  for (const auto& p : raw_profiles) user_idx.emplace(p.user, 0);
  for (const auto& it : raw) {
    user_idx.emplace(it.user_id, 0);
    item_idx.emplace(it.item_id, 0);
  }
  int next = 0;
  for (auto& [raw_id, idx] : user_idx) idx = next++;
  next = 0;
  for (auto& [raw_id, idx] : item_idx) idx = next++;

  out.interactions.reserve(raw.size());
  for (auto it : raw) {
    it.user_id = user_idx.at(it.user_id);
    it.item_id = item_idx.at(it.item_id);
    out.interactions.push_back(it);
  }
  out.profiles.reserve(raw_profiles.size());
  for (const auto& p : raw_profiles) {
    UserProfile up;
    up.user_id = user_idx.at(p.user);
    up.age = p.age;
    up.gender = p.gender;
    up.occupation = p.occupation;
    out.profiles.push_back(up);
  }
  std::sort(out.profiles.begin(), out.profiles.end(),
            [](const UserProfile& a, const UserProfile& b) {
              return a.user_id < b.user_id;
            });

  out.stats.num_users = user_idx.size();
  out.stats.num_items = item_idx.size();
  out.stats.num_interactions = out.interactions.size();
  return out;
}

void save_occupation_vocab(const std::vector<std::string>& vocab,
                           const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  for (const auto& name : vocab) f << name << "\n";
}

std::vector<double> extract_features(const std::vector<Interaction>& user_rows,
                                     const UserProfile& profile,
                                     std::size_t dataset_max_user_count) {
  if (user_rows.empty())
    throw std::invalid_argument("extract_features: user has no interactions");
  if (dataset_max_user_count == 0)
    throw std::invalid_argument("extract_features: zero max count");

  std::vector<double> x(FeatureLayout::kDim, 0.0);
  const double norm = static_cast<double>(dataset_max_user_count);
  const double total = static_cast<double>(user_rows.size());

  std::array<long, 5> counts{};
  std::vector<double> ratings;
  ratings.reserve(user_rows.size());
  for (const auto& it : user_rows) {
    counts[it.rating - 1]++;
    ratings.push_back(static_cast<double>(it.rating));
  }

  x[FeatureLayout::kCount] = total / norm;
  for (int r = 0; r < 5; ++r) {
    x[FeatureLayout::kLevelCounts + r] = static_cast<double>(counts[r]) / norm;
    x[FeatureLayout::kLevelPercents + r] =
        static_cast<double>(counts[r]) / total;
  }
  // high = {4,5}, low = {1,2}
  x[FeatureLayout::kPosNegRatio + 0] =
      static_cast<double>(counts[3] + counts[4]) / total;
  x[FeatureLayout::kPosNegRatio + 1] =
      static_cast<double>(counts[0] + counts[1]) / total;
  x[FeatureLayout::kEntropy] = rating_entropy(counts);

  std::sort(ratings.begin(), ratings.end());
  const std::size_t n = ratings.size();
  double median = n % 2 == 1 ? ratings[n / 2]
                             : 0.5 * (ratings[n / 2 - 1] + ratings[n / 2]);
  double mean = 0.0;
  for (double r : ratings) mean += r;
  mean /= total;
  x[FeatureLayout::kStats + 0] = median / 5.0;
  x[FeatureLayout::kStats + 1] = ratings.front() / 5.0;
  x[FeatureLayout::kStats + 2] = ratings.back() / 5.0;
  x[FeatureLayout::kStats + 3] = mean / 5.0;

  x[FeatureLayout::kGender + (profile.gender == 0 ? 0 : 1)] = 1.0;
  x[FeatureLayout::kOccupation + profile.occupation] = 1.0;
  x[FeatureLayout::kAgeGroup + age_bucket(profile.age)] = 1.0;
  return x;
}

std::map<int, int> leave_one_out_split(
    const std::vector<Interaction>& interactions) {
  std::map<int, std::vector<Interaction>> by_user;
  for (const auto& it : interactions) by_user[it.user_id].push_back(it);

  std::map<int, int> held;
  for (const auto& [user, rows] : by_user) {
    if (rows.size() < 2) continue;
    const Interaction* best = &rows[0];
    for (const auto& it : rows) {
      if (it.timestamp > best->timestamp ||
          (it.timestamp == best->timestamp && it.item_id > best->item_id)) {
        best = &it;
      }
    }
    held[user] = best->item_id;
  }
  return held;
}

std::vector<std::pair<int, int>> sample_negatives(const std::set<int>& positives,
                                                  int num_items,
                                                  std::size_t want, Rng& rng) {
  std::vector<int> pool;
  pool.reserve(num_items);
  for (int v = 0; v < num_items; ++v) {
    if (!positives.count(v)) pool.push_back(v);
  }
  std::vector<std::pair<int, int>> out;
  if (pool.empty()) return out;

  const std::size_t take = std::min(want, pool.size());
  // partial Fisher-Yates
  for (std::size_t i = 0; i < take; ++i) {
    std::size_t j = i + rng.index(pool.size() - i);
    std::swap(pool[i], pool[j]);
    out.emplace_back(pool[i], 0);
  }
  return out;
}

std::vector<UserShard> build_shards(const Dataset& data,
                                    const ShardOptions& opt,
                                    std::uint64_t master_seed) {
  if (opt.negative_ratio < 1)
    throw std::invalid_argument("build_shards: negative_ratio must be >= 1");

  std::map<int, std::vector<Interaction>> by_user;
  std::size_t max_count = 0;
  for (const auto& it : data.interactions) by_user[it.user_id].push_back(it);
  for (const auto& [user, rows] : by_user)
    max_count = std::max(max_count, rows.size());

  std::unordered_map<int, const UserProfile*> prof;
  for (const auto& p : data.profiles) prof[p.user_id] = &p;

  auto held = leave_one_out_split(data.interactions);

  std::vector<UserShard> shards;
  shards.reserve(by_user.size());
  for (const auto& [user, rows] : by_user) {
    auto pit = prof.find(user);
    if (pit == prof.end())
      throw std::runtime_error("missing profile for user " +
                               std::to_string(user));

    UserShard s;
    s.user_id = user;
    for (const auto& it : rows) s.positives.insert(it.item_id);
    auto hit = held.find(user);
    if (hit != held.end()) s.held_out_item = hit->second;

    std::size_t num_pos = 0;
    for (int v : s.positives) {
      if (s.held_out_item && v == *s.held_out_item) continue;
      s.examples.emplace_back(v, 1);
      ++num_pos;
    }
    Rng rng(derive_seed(master_seed, "negatives", static_cast<std::uint64_t>(user)));
    auto negs = sample_negatives(s.positives,
                                 static_cast<int>(data.stats.num_items),
                                 num_pos * static_cast<std::size_t>(opt.negative_ratio),
                                 rng);
    s.examples.insert(s.examples.end(), negs.begin(), negs.end());

    s.features = extract_features(rows, *pit->second, max_count);
    s.labels.age_group = age_bucket(pit->second->age);
    s.labels.gender = pit->second->gender;
    shards.push_back(std::move(s));
  }
  return shards;
}

}  // namespace fedrec
