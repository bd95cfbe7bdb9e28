#pragma once

#include <unistd.h>

#include <filesystem>
#include <string>

#include "stwo/training.hpp"

namespace stwo::testing {

inline TrainConfig tiny_train_config(ConfigId id = ConfigId::stgan_wo) {
  TrainConfig c;
  c.config_id = id;
  c.seed = 5;
  c.batch = 2;
  c.steps = 2;
  c.synthetic_images = 8;
  c.net.n = 4;
  c.net.r = 3;
  c.net.z_dim = c.net.w_dim = 8;
  for (int res = 2; res <= 4; ++res) c.net.channels[res] = 8;
  c.finalize();
  return c;
}

// A scratch directory removed on destruction.
struct ScratchDir {
  std::filesystem::path path;

  explicit ScratchDir(const std::string& tag)
      : path(std::filesystem::temp_directory_path() / ("stwo_" + tag + "_" + std::to_string(::getpid()))) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~ScratchDir() { std::filesystem::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

// Trains the tiny config for two steps and saves it.
inline std::string make_checkpoint(const ScratchDir& dir, ConfigId id = ConfigId::stgan_wo) {
  auto cfg = tiny_train_config(id);
  TrainState s(cfg);
  const auto data = prepare_real_data(synthetic_images(cfg.synthetic_images, cfg.net.n, 1), cfg.net, cfg.decomposition);
  train_step(s, data);
  train_step(s, data);
  const auto path = dir / (std::string(to_string(id)) + ".stwo");
  save_checkpoint(s, path);
  return path;
}

}  // namespace stwo::testing
