#include "fedrec/delta.hpp"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace fedrec {

DeltaRecord compute_delta(const ParamSet& broadcast, const ParamSet& upload,
                          double mu1, int user_id, int round) {
  if (mu1 < 0.0) throw std::invalid_argument("compute_delta: mu1 < 0");
  Vec a = flatten(broadcast);
  Vec b = flatten(upload);
  if (a.size() != b.size())
    throw std::invalid_argument("compute_delta: shape mismatch");
  DeltaRecord rec;
  rec.user_id = user_id;
  rec.round = round;
  rec.delta.resize(a.size());
  // mu1 == 0 never moves the parameters; report the raw (zero) gap
  // instead of dividing by zero.
  const double inv = mu1 > 0.0 ? 1.0 / mu1 : 1.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    rec.delta[i] = (a[i] - b[i]) * inv;
  return rec;
}

void save_archive(const DeltaArchive& archive, const std::string& path) {
  std::size_t flat_size = 0;
  if (!archive.records.empty()) flat_size = archive.records[0].delta.size();

  nlohmann::json header;
  header["format"] = "fedrec-deltas";
  header["d"] = archive.d;
  header["d2"] = archive.d2;
  header["flat_size"] = flat_size;
  header["count"] = archive.records.size();
  header["mask"] = "full";

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << header.dump() << "\n";
  for (const auto& rec : archive.records) {
    if (rec.delta.size() != flat_size)
      throw std::runtime_error("save_archive: inconsistent record length");
    std::int64_t user = rec.user_id, round = rec.round;
    f.write(reinterpret_cast<const char*>(&user), sizeof(user));
    f.write(reinterpret_cast<const char*>(&round), sizeof(round));
    f.write(reinterpret_cast<const char*>(rec.delta.data()),
            static_cast<std::streamsize>(flat_size * sizeof(double)));
  }
  if (!f) throw std::runtime_error("write failed: " + path);
}

DeltaArchive load_archive(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(f, line))
    throw std::runtime_error("missing header: " + path);
  auto header = nlohmann::json::parse(line);
  if (header.value("format", "") != "fedrec-deltas")
    throw std::runtime_error("bad header: " + path);

  DeltaArchive archive;
  archive.d = header.at("d");
  archive.d2 = header.at("d2");
  const std::size_t flat_size = header.at("flat_size");
  const std::size_t count = header.at("count");
  archive.records.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    DeltaRecord rec;
    std::int64_t user = 0, round = 0;
    f.read(reinterpret_cast<char*>(&user), sizeof(user));
    f.read(reinterpret_cast<char*>(&round), sizeof(round));
    rec.user_id = static_cast<int>(user);
    rec.round = static_cast<int>(round);
    rec.delta.resize(flat_size);
    f.read(reinterpret_cast<char*>(rec.delta.data()),
           static_cast<std::streamsize>(flat_size * sizeof(double)));
    if (!f) throw std::runtime_error("truncated archive: " + path);
    archive.records.push_back(std::move(rec));
  }
  return archive;
}

}  // namespace fedrec
