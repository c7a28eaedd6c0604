#include "trajsurv/model.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "trajsurv/errors.hpp"

namespace trajsurv {

namespace {
constexpr char kMagic[] = "TRAJSURV.CKPT.v1\n";
}

ModelParams ModelParams::create(std::int64_t feature_dim, std::int64_t latent_dim,
                                std::int64_t hidden, std::int64_t head_hidden,
                                double field_scale, std::uint64_t seed) {
  ModelParams m;
  m.feature_dim = feature_dim;
  Rng rng(derive_seed(seed, 0x90de1u));
  m.encoder = EncoderParams::create(feature_dim + 1, latent_dim, hidden, rng, field_scale);
  m.head = RiskHeadParams::create(latent_dim, head_hidden, rng);
  return m;
}

std::vector<NamedParam> ModelParams::named_params() const {
  std::vector<NamedParam> out;
  append_ffn_params("g_phi", encoder.g_phi, out);
  append_ffn_params("f_theta", encoder.f_theta, out);
  append_ffn_params("g_eta", head.g_eta, out);
  return out;
}

std::vector<Tensor> ModelParams::param_tensors() const {
  std::vector<Tensor> out;
  for (auto& np : named_params()) out.push_back(np.tensor);
  return out;
}

std::vector<std::vector<double>> ModelParams::snapshot_values() const {
  std::vector<std::vector<double>> out;
  for (const auto& np : named_params()) out.push_back(np.tensor.data());
  return out;
}

void ModelParams::restore_values(const std::vector<std::vector<double>>& values) {
  auto params = named_params();
  if (values.size() != params.size()) {
    throw std::invalid_argument("restore_values: parameter count mismatch");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (values[i].size() != params[i].tensor.data().size()) {
      throw std::invalid_argument("restore_values: size mismatch for " + params[i].name);
    }
    params[i].tensor.data() = values[i];
  }
}

void save_checkpoint(const std::string& path, const ModelParams& model,
                     std::uint64_t config_hash) {
  const auto params = model.named_params();
  nlohmann::ordered_json manifest;
  manifest["version"] = 1;
  char hash_hex[24];
  std::snprintf(hash_hex, sizeof(hash_hex), "%016llx",
                static_cast<unsigned long long>(config_hash));
  manifest["config_hash"] = hash_hex;
  auto& plist = manifest["params"] = nlohmann::ordered_json::array();
  for (const auto& np : params) {
    nlohmann::ordered_json entry;
    entry["name"] = np.name;
    entry["shape"] = np.tensor.shape();
    plist.push_back(entry);
  }
  const std::string mtext = manifest.dump();

  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write checkpoint: " + path);
  f.write(kMagic, sizeof(kMagic) - 1);
  const std::uint64_t mlen = mtext.size();
  unsigned char lenbuf[8];
  for (int i = 0; i < 8; ++i) lenbuf[i] = static_cast<unsigned char>((mlen >> (8 * i)) & 0xff);
  f.write(reinterpret_cast<const char*>(lenbuf), 8);
  f.write(mtext.data(), static_cast<std::streamsize>(mtext.size()));
  for (const auto& np : params) {
    const auto& v = np.tensor.data();
    f.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
  }
}

namespace {

nlohmann::json read_manifest(std::ifstream& f, const std::string& path) {
  std::string magic(sizeof(kMagic) - 1, '\0');
  f.read(magic.data(), static_cast<std::streamsize>(magic.size()));
  if (!f || magic != kMagic) throw DataError("not a checkpoint file: " + path);
  unsigned char lenbuf[8];
  f.read(reinterpret_cast<char*>(lenbuf), 8);
  std::uint64_t mlen = 0;
  for (int i = 7; i >= 0; --i) mlen = (mlen << 8) | lenbuf[i];
  std::string mtext(mlen, '\0');
  f.read(mtext.data(), static_cast<std::streamsize>(mlen));
  if (!f) throw DataError("truncated checkpoint manifest: " + path);
  return nlohmann::json::parse(mtext);
}

}  // namespace

std::uint64_t checkpoint_config_hash(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open checkpoint: " + path);
  const auto manifest = read_manifest(f, path);
  return std::stoull(manifest.at("config_hash").get<std::string>(), nullptr, 16);
}

void load_checkpoint(const std::string& path, ModelParams& model,
                     std::uint64_t expected_config_hash) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open checkpoint: " + path);
  const auto manifest = read_manifest(f, path);
  const auto stored_hash =
      std::stoull(manifest.at("config_hash").get<std::string>(), nullptr, 16);
  if (stored_hash != expected_config_hash) {
    throw ConfigError("checkpoint config hash mismatch: checkpoint was trained with a "
                      "different configuration");
  }
  auto params = model.named_params();
  const auto& plist = manifest.at("params");
  if (plist.size() != params.size()) {
    throw ConfigError("checkpoint parameter count does not match model");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& entry = plist[i];
    if (entry.at("name").get<std::string>() != params[i].name) {
      throw ConfigError("checkpoint parameter order mismatch at " + params[i].name);
    }
    const auto shape = entry.at("shape").get<std::vector<std::int64_t>>();
    if (shape != params[i].tensor.shape()) {
      throw ConfigError("checkpoint shape mismatch for " + params[i].name);
    }
    auto& v = params[i].tensor.data();
    f.read(reinterpret_cast<char*>(v.data()),
           static_cast<std::streamsize>(v.size() * sizeof(double)));
    if (!f) throw DataError("truncated checkpoint payload: " + path);
  }
}

}  // namespace trajsurv
