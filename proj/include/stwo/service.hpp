#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "stwo/app.hpp"

namespace stwo {

struct ServeOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::string cors_origin = "*";
  std::size_t direction_cache_limit = 4096;
};

// HTTP API over a frozen generator:
//   GET  /api/info
//   POST /api/generate   {seed1, seed2}
//   POST /api/edit       {seed1, seed2, dir_seed, alpha}
//   GET  /api/directions ?seed1=..&count=k
//   GET  /api/texture    ?seed1=..  (or a {seed1} body)
class EditService {
 public:
  EditService(LoadedModel model, ServeOptions opts);
  ~EditService();
  EditService(const EditService&) = delete;
  EditService& operator=(const EditService&) = delete;

  // Binds the socket and returns the port actually bound.
  int bind();
  // Serves until stop(); call bind() first.
  void listen();
  void stop();
  bool running() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Direction seeds offered for w1(seed1); deterministic and below 2^31.
std::vector<std::uint64_t> direction_seeds(std::uint64_t seed1, int count);

// FNV-1a over the bytes of w1, as 16 hex digits.
std::string latent_id(const Latent& w);

}  // namespace stwo
