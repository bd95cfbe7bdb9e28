#include <fstream>
#include <json.hpp>
#include <sstream>

#include "stwo/errors.hpp"
#include "stwo/training.hpp"

namespace stwo {

using nlohmann::json;

const char* to_string(ConfigId id) {
  switch (id) {
    case ConfigId::baseline: return "baseline";
    case ConfigId::A: return "A";
    case ConfigId::B: return "B";
    case ConfigId::C: return "C";
    case ConfigId::D: return "D";
    case ConfigId::stgan_wo: return "stgan_wo";
  }
  return "?";
}

ConfigId parse_config_id(const std::string& s) {
  for (auto id : {ConfigId::baseline, ConfigId::A, ConfigId::B, ConfigId::C, ConfigId::D, ConfigId::stgan_wo})
    if (s == to_string(id)) return id;
  throw ConfigError("unknown config_id '" + s + "' (expected baseline, A, B, C, D or stgan_wo)");
}

void apply_config_id(NetConfig& net, ConfigId id) {
  struct Row {
    ModScheme scheme;
    bool ortho;
    Arch arch;
  };
  static const Row rows[] = {
      {ModScheme::demod, false, Arch::msg_baseline},  // baseline
      {ModScheme::decomp, false, Arch::msg_baseline},  // A
      {ModScheme::decomp, true, Arch::msg_baseline},   // B
      {ModScheme::demod, false, Arch::stia},           // C
      {ModScheme::decomp, false, Arch::stia},          // D
      {ModScheme::decomp, true, Arch::stia},           // stgan_wo
  };
  const auto& row = rows[static_cast<int>(id)];
  net.scheme = row.scheme;
  net.ortho_coarse = row.ortho;
  net.arch = row.arch;
}

void TrainConfig::finalize() {
  apply_config_id(net, config_id);
  net.validate();
  if (!(lr_g >= 0) || !(lr_d >= 0)) throw ConfigError("learning rates must be >= 0");
  if (!(r1_gamma >= 0) || !(ortho_alpha >= 0)) throw ConfigError("r1_gamma and ortho_alpha must be >= 0");
  if (batch < 1) throw ConfigError("batch must be >= 1");
  if (steps < 0) throw ConfigError("steps must be >= 0");
  if (!(ema_beta >= 0 && ema_beta < 1)) throw ConfigError("ema_beta must be in [0, 1)");
  if (synthetic_images < 1) throw ConfigError("synthetic_images must be >= 1");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
}

namespace {

const char* factor_start_name(NetConfig::FactorStart f) {
  switch (f) {
    case NetConfig::FactorStart::follow_ortho: return "follow_ortho";
    case NetConfig::FactorStart::orthonormal: return "orthonormal";
    case NetConfig::FactorStart::gaussian: return "gaussian";
  }
  return "?";
}

NetConfig::FactorStart parse_factor_start(const std::string& s) {
  for (auto f : {NetConfig::FactorStart::follow_ortho, NetConfig::FactorStart::orthonormal, NetConfig::FactorStart::gaussian})
    if (s == factor_start_name(f)) return f;
  throw ConfigError("unknown factor_start '" + s + "'");
}

template <typename V>
void read(const json& j, const char* key, V& out) {
  if (auto it = j.find(key); it != j.end()) {
    try {
      out = it->template get<V>();
    } catch (const json::exception& e) {
      throw ConfigError(std::string("config key '") + key + "': " + e.what());
    }
  }
}

void reject_unknown(const json& j, std::initializer_list<const char*> known, const char* where) {
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok |= key == k;
    if (!ok) throw ConfigError(std::string("unknown ") + where + " key '" + key + "'");
  }
}

}  // namespace

std::string to_json(const TrainConfig& c) {
  json net = {{"n", c.net.n},
              {"r", c.net.r},
              {"z_dim", c.net.z_dim},
              {"w_dim", c.net.w_dim},
              {"ortho_trgb", c.net.ortho_trgb},
              {"factor_start", factor_start_name(c.net.factor_start)}};
  json channels = json::object();
  for (int res = 2; res <= c.net.n; ++res) channels[std::to_string(res)] = c.net.ch(res);
  net["channels"] = channels;
  json j = {{"config_id", to_string(c.config_id)},
            {"lr_g", c.lr_g},
            {"lr_d", c.lr_d},
            {"r1_gamma", c.r1_gamma},
            {"ortho_alpha", c.ortho_alpha},
            {"batch", c.batch},
            {"steps", c.steps},
            {"seed", c.seed},
            {"ema_beta", c.ema_beta},
            {"ema_enabled", c.ema_enabled},
            {"dataset", c.dataset},
            {"synthetic_images", c.synthetic_images},
            {"decomposition", c.decomposition == DecompMethod::rtv ? "rtv" : "blur"},
            {"out_dir", c.out_dir},
            {"checkpoint_every", c.checkpoint_every},
            {"net", net}};
  return j.dump(2);
}

TrainConfig parse_train_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  reject_unknown(j,
                 {"config_id", "lr_g", "lr_d", "r1_gamma", "ortho_alpha", "batch", "steps", "seed", "ema_beta",
                  "ema_enabled", "dataset", "synthetic_images", "decomposition", "out_dir", "checkpoint_every", "net"},
                 "config");
  TrainConfig c;
  std::string id = to_string(c.config_id), decomposition = "rtv";
  read(j, "config_id", id);
  c.config_id = parse_config_id(id);
  read(j, "lr_g", c.lr_g);
  read(j, "lr_d", c.lr_d);
  read(j, "r1_gamma", c.r1_gamma);
  read(j, "ortho_alpha", c.ortho_alpha);
  read(j, "batch", c.batch);
  read(j, "steps", c.steps);
  read(j, "seed", c.seed);
  read(j, "ema_beta", c.ema_beta);
  read(j, "ema_enabled", c.ema_enabled);
  read(j, "dataset", c.dataset);
  read(j, "synthetic_images", c.synthetic_images);
  read(j, "decomposition", decomposition);
  if (decomposition != "rtv" && decomposition != "blur") throw ConfigError("decomposition must be rtv or blur");
  c.decomposition = decomposition == "rtv" ? DecompMethod::rtv : DecompMethod::blur;
  read(j, "out_dir", c.out_dir);
  read(j, "checkpoint_every", c.checkpoint_every);
  if (auto it = j.find("net"); it != j.end()) {
    const json& n = *it;
    if (!n.is_object()) throw ConfigError("net must be an object");
    reject_unknown(n, {"n", "r", "z_dim", "w_dim", "ortho_trgb", "factor_start", "channels"}, "net");
    read(n, "n", c.net.n);
    read(n, "r", c.net.r);
    read(n, "z_dim", c.net.z_dim);
    read(n, "w_dim", c.net.w_dim);
    read(n, "ortho_trgb", c.net.ortho_trgb);
    std::string fs = factor_start_name(c.net.factor_start);
    read(n, "factor_start", fs);
    c.net.factor_start = parse_factor_start(fs);
    if (auto ch = n.find("channels"); ch != n.end()) {
      if (!ch->is_object()) throw ConfigError("net.channels must map resolution to channel count");
      for (const auto& [res, count] : ch->items()) {
        int r = 0;
        try {
          r = std::stoi(res);
        } catch (const std::exception&) {
          throw ConfigError("net.channels key '" + res + "' is not an integer");
        }
        if (!count.is_number_integer()) throw ConfigError("net.channels['" + res + "'] must be an integer");
        c.net.channels[r] = count.get<std::int64_t>();
      }
    }
  }
  c.finalize();
  return c;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_train_config(ss.str());
}

}  // namespace stwo
