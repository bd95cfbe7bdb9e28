#include "stwo/service.hpp"

#include <httplib.h>

#include <cmath>
#include <cstdio>
#include <json.hpp>
#include <map>
#include <mutex>

#include "stwo/errors.hpp"

namespace stwo {

using nlohmann::json;

std::vector<std::uint64_t> direction_seeds(std::uint64_t seed1, int count) {
  std::vector<std::uint64_t> out;
  for (int i = 0; i < count; ++i) {
    // splitmix64 of (seed1, i)
    std::uint64_t z = seed1 * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(i + 1) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    z ^= z >> 31;
    out.push_back(z & 0x7FFFFFFFull);
  }
  return out;
}

std::string latent_id(const Latent& w) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  const auto* p = reinterpret_cast<const unsigned char*>(w.data());
  for (std::size_t i = 0; i < w.size() * sizeof(double); ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

struct BadRequest : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) throw BadRequest("request body must be a JSON object");
  json j;
  try {
    j = json::parse(req.body);
  } catch (const json::parse_error& e) {
    throw BadRequest(std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw BadRequest("request body must be a JSON object");
  return j;
}

std::uint64_t seed_field(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw BadRequest(std::string("missing field '") + key + "'");
  if (it->is_number_unsigned()) return it->get<std::uint64_t>();
  if (it->is_number_integer() && it->get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(it->get<std::int64_t>());
  throw BadRequest(std::string("field '") + key + "' must be a non-negative integer");
}

double number_field(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw BadRequest(std::string("missing field '") + key + "'");
  if (!it->is_number()) throw BadRequest(std::string("field '") + key + "' must be a number");
  const double v = it->get<double>();
  if (!std::isfinite(v)) throw BadRequest(std::string("field '") + key + "' must be finite");
  return v;
}

std::uint64_t seed_param(const httplib::Request& req, const char* key) {
  if (!req.has_param(key)) throw BadRequest(std::string("missing query parameter '") + key + "'");
  const auto text = req.get_param_value(key);
  if (text.empty() || text.find_first_not_of("0123456789") != std::string::npos)
    throw BadRequest(std::string("query parameter '") + key + "' must be a non-negative integer");
  try {
    return std::stoull(text);
  } catch (const std::out_of_range&) {
    throw BadRequest(std::string("query parameter '") + key + "' is out of range");
  }
}

std::string base64(const std::vector<std::uint8_t>& bytes) {
  return httplib::detail::base64_encode(std::string(bytes.begin(), bytes.end()));
}

}  // namespace

struct EditService::Impl {
  LoadedModel loaded;
  ServeOptions opts;
  httplib::Server server;
  int port = -1;

  std::mutex cache_mutex;
  std::map<std::pair<std::string, std::uint64_t>, Latent> directions;

  const InferenceModel& model() const { return *loaded.model; }

  Latent direction(const Latent& w1, std::uint64_t seed) {
    const auto key = std::make_pair(latent_id(w1), seed);
    {
      std::lock_guard lock(cache_mutex);
      if (auto it = directions.find(key); it != directions.end()) return it->second;
    }
    auto d = sample_orthonormal_direction(w1, seed);
    std::lock_guard lock(cache_mutex);
    if (directions.size() >= opts.direction_cache_limit) directions.clear();
    directions.emplace(key, d);
    return d;
  }

  void routes();
};

void EditService::Impl::routes() {
  // Wraps a handler: BadRequest -> 400; anything else -> 500.
  auto guarded = [](auto fn) {
    return [fn](const httplib::Request& req, httplib::Response& res) {
      try {
        fn(req, res);
      } catch (const BadRequest& e) {
        reply(res, 400, {{"error", e.what()}});
      } catch (const std::exception& e) {
        reply(res, 500, {{"error", e.what()}});
      }
    };
  };

  server.Get("/api/info", guarded([this](const httplib::Request&, httplib::Response& res) {
    const auto& cfg = model().config();
    json sizes = json::array(), texture = json::array();
    for (int res_log = 3; res_log <= cfg.n; ++res_log) sizes.push_back(1 << res_log);
    if (cfg.arch == Arch::stia)
      for (int res_log = 3; res_log <= cfg.r; ++res_log) texture.push_back(1 << res_log);
    reply(res, 200,
          {{"resolutions", sizes},
           {"texture_resolutions", texture},
           {"r", cfg.r},
           {"n", cfg.n},
           {"w_dim", cfg.w_dim},
           {"config_id", to_string(loaded.config.config_id)}});
  }));

  server.Post("/api/generate", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const auto body = parse_body(req);
    const auto seed1 = seed_field(body, "seed1"), seed2 = seed_field(body, "seed2");
    const auto w1 = model().w1(seed1);
    const auto png = png_bytes(model().image(w1, model().w2(seed1, seed2)));
    reply(res, 200, {{"png_base64", base64(png)}, {"w1_id", latent_id(w1)}});
  }));

  server.Post("/api/edit", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const auto body = parse_body(req);
    const auto seed1 = seed_field(body, "seed1"), seed2 = seed_field(body, "seed2");
    const auto dir_seed = seed_field(body, "dir_seed");
    const double alpha = number_field(body, "alpha");
    const auto& m = model();
    const auto w1 = m.w1(seed1), w2 = m.w2(seed1, seed2);
    const auto moved = edit_latent({w1, direction(w1, dir_seed), alpha, w2});
    double sq = 0;
    for (std::size_t i = 0; i < w1.size(); ++i) sq += (moved[i] - w1[i]) * (moved[i] - w1[i]);
    const auto png = png_bytes(m.image(moved, m.config().arch == Arch::stia ? w2 : moved));
    reply(res, 200, {{"png_base64", base64(png)}, {"delta_norm", std::sqrt(sq)}});
  }));

  server.Get("/api/directions", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const auto seed1 = seed_param(req, "seed1");
    int count = 6;
    if (req.has_param("count")) {
      const auto c = seed_param(req, "count");
      if (c < 1 || c > 64) throw BadRequest("count must be between 1 and 64");
      count = static_cast<int>(c);
    }
    const auto w1 = model().w1(seed1);
    const auto seeds = direction_seeds(seed1, count);
    for (auto s : seeds) direction(w1, s);
    reply(res, 200, {{"seed1", seed1}, {"w1_id", latent_id(w1)}, {"dir_seeds", seeds}});
  }));

  server.Get("/api/texture", guarded([this](const httplib::Request& req, httplib::Response& res) {
    std::uint64_t seed1 = 0;
    if (req.has_param("seed1"))
      seed1 = seed_param(req, "seed1");
    else
      seed1 = seed_field(parse_body(req), "seed1");
    const auto& m = model();
    if (m.config().arch != Arch::stia) throw BadRequest("this model has no texture outputs");
    NoGradGuard ng;
    // Texture heads hang off the coarse half only, so w2 never enters.
    const auto heads = m.generator().coarse(latent_tensor(m.w1(seed1))).heads;
    json levels = json::array();
    for (const auto& [res_log, t] : heads)
      levels.push_back({{"res", res_log}, {"size", 1 << res_log}, {"png_base64", base64(png_bytes(t))}});
    reply(res, 200, {{"seed1", seed1}, {"levels", levels}});
  }));

  server.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  server.set_default_headers({{"Access-Control-Allow-Origin", opts.cors_origin},
                              {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                              {"Access-Control-Allow-Headers", "Content-Type"}});
}

EditService::EditService(LoadedModel model, ServeOptions opts) : impl_(std::make_unique<Impl>()) {
  if (!model.model) throw ContractError("EditService needs a loaded model");
  impl_->loaded = std::move(model);
  impl_->opts = std::move(opts);
  impl_->routes();
}

EditService::~EditService() { stop(); }

int EditService::bind() {
  auto& s = impl_->server;
  if (impl_->opts.port == 0) {
    impl_->port = s.bind_to_any_port(impl_->opts.host);
  } else {
    impl_->port = s.bind_to_port(impl_->opts.host, impl_->opts.port) ? impl_->opts.port : -1;
  }
  if (impl_->port < 0)
    throw std::runtime_error("cannot bind " + impl_->opts.host + ":" + std::to_string(impl_->opts.port));
  return impl_->port;
}

void EditService::listen() {
  if (impl_->port < 0) throw ContractError("EditService::listen before bind");
  impl_->server.listen_after_bind();
}

void EditService::stop() {
  if (impl_) impl_->server.stop();
}

bool EditService::running() const { return impl_->server.is_running(); }

}  // namespace stwo
