#include <httplib.h>

#include <cmath>
#include <json.hpp>
#include <set>
#include <thread>

#include "app/fixture.hpp"
#include "doctest.h"
#include "stwo/service.hpp"

using namespace stwo;
using nlohmann::json;
using stwo::testing::ScratchDir;

namespace {

// Runs an EditService on a free local port for the lifetime of the object.
struct LiveService {
  std::unique_ptr<EditService> service;
  std::thread thread;
  int port = 0;

  explicit LiveService(const std::string& ckpt, std::string origin = "*") {
    ServeOptions opts;
    opts.port = 0;
    opts.cors_origin = std::move(origin);
    service = std::make_unique<EditService>(load_model(ckpt), opts);
    port = service->bind();
    thread = std::thread([this] { service->listen(); });
    for (int i = 0; i < 200 && !service->running(); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  ~LiveService() {
    service->stop();
    thread.join();
  }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(60, 0);
    return c;
  }
};

json post(httplib::Client& c, const std::string& path, const json& body, int expect = 200) {
  auto res = c.Post(path, body.dump(), "application/json");
  REQUIRE(res);
  CHECK(res->status == expect);
  return json::parse(res->body);
}

json get(httplib::Client& c, const std::string& path, int expect = 200) {
  auto res = c.Get(path);
  REQUIRE(res);
  CHECK(res->status == expect);
  return json::parse(res->body);
}

struct Fixture {
  ScratchDir dir{"service"};
  std::string ckpt = stwo::testing::make_checkpoint(dir);
  LiveService live{ckpt, "http://localhost:5173"};
};

}  // namespace

TEST_CASE_FIXTURE(Fixture, "info describes the model") {
  auto c = live.client();
  auto j = get(c, "/api/info");
  CHECK(j["n"] == 4);
  CHECK(j["r"] == 3);
  CHECK(j["w_dim"] == 8);
  CHECK(j["config_id"] == "stgan_wo");
  CHECK(j["resolutions"] == json::array({8, 16}));
  CHECK(j["texture_resolutions"] == json::array({8}));
}

TEST_CASE_FIXTURE(Fixture, "generate and edit agree with the shared renderer") {
  auto c = live.client();
  const auto m = load_model(ckpt);
  auto g = post(c, "/api/generate", {{"seed1", 3}, {"seed2", 8}});
  const auto png = render_sample(*m.model, 3, 8);
  CHECK(g["png_base64"] == httplib::detail::base64_encode(std::string(png.begin(), png.end())));
  CHECK(g["w1_id"] == latent_id(m.model->w1(3)));

  auto e0 = post(c, "/api/edit", {{"seed1", 3}, {"seed2", 8}, {"dir_seed", 11}, {"alpha", 0}});
  CHECK(e0["png_base64"] == g["png_base64"]);
  CHECK(e0["delta_norm"].get<double>() == 0.0);

  for (double alpha : {-5.5, 0.25, 3.0}) {
    auto e = post(c, "/api/edit", {{"seed1", 3}, {"seed2", 8}, {"dir_seed", 11}, {"alpha", alpha}});
    CHECK(std::abs(e["delta_norm"].get<double>() - std::abs(alpha)) < 1e-6);
    CHECK(e["png_base64"] != g["png_base64"]);
    const auto direct = render_edit(*m.model, 3, 8, 11, alpha).png;
    CHECK(e["png_base64"] == httplib::detail::base64_encode(std::string(direct.begin(), direct.end())));
  }
}

TEST_CASE_FIXTURE(Fixture, "texture depends on seed1 only") {
  auto c = live.client();
  auto t = get(c, "/api/texture?seed1=6");
  REQUIRE(t["levels"].size() == 1);
  CHECK(t["levels"][0]["size"] == 8);

  // The full forward pass with two different w2 gives the same texture bytes.
  const auto m = load_model(ckpt);
  const auto w1 = m.model->w1(6);
  for (std::uint64_t seed2 : {1, 99}) {
    const auto pyr = m.model->pyramid(w1, m.model->w2(6, seed2));
    const auto png = png_bytes(pyr.texture.at(3));
    CHECK(t["levels"][0]["png_base64"] == httplib::detail::base64_encode(std::string(png.begin(), png.end())));
  }
  auto other = get(c, "/api/texture?seed1=7");
  CHECK(other["levels"][0]["png_base64"] != t["levels"][0]["png_base64"]);
}

TEST_CASE_FIXTURE(Fixture, "directions are deterministic seeds usable by edit") {
  auto c = live.client();
  auto d = get(c, "/api/directions?seed1=2&count=4");
  REQUIRE(d["dir_seeds"].size() == 4);
  CHECK(d["dir_seeds"] == get(c, "/api/directions?seed1=2&count=4")["dir_seeds"]);
  CHECK(get(c, "/api/directions?seed1=2")["dir_seeds"].size() == 6);
  std::set<std::uint64_t> unique;
  for (const auto& s : d["dir_seeds"]) {
    unique.insert(s.get<std::uint64_t>());
    CHECK(s.get<std::uint64_t>() < (1ull << 31));
    auto e = post(c, "/api/edit", {{"seed1", 2}, {"seed2", 0}, {"dir_seed", s}, {"alpha", 1.5}});
    CHECK(std::abs(e["delta_norm"].get<double>() - 1.5) < 1e-6);
  }
  CHECK(unique.size() == 4);
  CHECK(d["dir_seeds"] != get(c, "/api/directions?seed1=3&count=4")["dir_seeds"]);
}

TEST_CASE_FIXTURE(Fixture, "malformed requests get 400 with an error message") {
  auto c = live.client();
  for (const std::string body : {"", "{", "[1,2]", R"({"seed1": 1})", R"({"seed1": -1, "seed2": 0})",
                                 R"({"seed1": "1", "seed2": 0})", R"({"seed1": 1.5, "seed2": 0})"}) {
    auto res = c.Post("/api/generate", body, "application/json");
    REQUIRE(res);
    CAPTURE(body);
    CHECK(res->status == 400);
    CHECK(json::parse(res->body).contains("error"));
  }
  post(c, "/api/edit", {{"seed1", 1}, {"seed2", 0}, {"dir_seed", 1}}, 400);
  post(c, "/api/edit", {{"seed1", 1}, {"seed2", 0}, {"dir_seed", 1}, {"alpha", "big"}}, 400);
  get(c, "/api/directions", 400);
  get(c, "/api/directions?seed1=1&count=0", 400);
  get(c, "/api/directions?seed1=1&count=65", 400);
  get(c, "/api/directions?seed1=x", 400);
  get(c, "/api/texture", 400);
}

TEST_CASE_FIXTURE(Fixture, "CORS headers and preflight") {
  auto c = live.client();
  auto res = c.Get("/api/info");
  REQUIRE(res);
  CHECK(res->get_header_value("Access-Control-Allow-Origin") == "http://localhost:5173");
  auto pre = c.Options("/api/edit");
  REQUIRE(pre);
  CHECK(pre->status == 204);
  CHECK(pre->get_header_value("Access-Control-Allow-Methods").find("POST") != std::string::npos);
}

TEST_CASE_FIXTURE(Fixture, "concurrent identical requests get identical responses") {
  const json body = {{"seed1", 12}, {"seed2", 4}, {"dir_seed", 7}, {"alpha", 2.0}};
  std::vector<std::string> answers(6);
  std::vector<std::thread> workers;
  for (std::size_t i = 0; i < answers.size(); ++i)
    workers.emplace_back([&, i] {
      auto c = live.client();
      auto res = c.Post("/api/edit", body.dump(), "application/json");
      if (res && res->status == 200) answers[i] = res->body;
    });
  for (auto& w : workers) w.join();
  for (const auto& a : answers) {
    CHECK_FALSE(a.empty());
    CHECK(a == answers[0]);
  }
  auto c = live.client();
  // Edits never feed back into the model.
  auto before = post(c, "/api/generate", {{"seed1", 12}, {"seed2", 4}});
  for (int i = 0; i < 3; ++i) post(c, "/api/edit", {{"seed1", 12}, {"seed2", 4}, {"dir_seed", i}, {"alpha", 8}});
  CHECK(post(c, "/api/generate", {{"seed1", 12}, {"seed2", 4}}) == before);
}

TEST_CASE("single-latent models have no texture endpoint output") {
  ScratchDir dir("service_baseline");
  LiveService live(stwo::testing::make_checkpoint(dir, ConfigId::baseline));
  auto c = live.client();
  CHECK(get(c, "/api/info")["texture_resolutions"].empty());
  auto j = get(c, "/api/texture?seed1=1", 400);
  CHECK(j["error"].get<std::string>().find("texture") != std::string::npos);
  auto e = post(c, "/api/edit", {{"seed1", 1}, {"seed2", 2}, {"dir_seed", 3}, {"alpha", 0}});
  CHECK(e["png_base64"] == post(c, "/api/generate", {{"seed1", 1}, {"seed2", 2}})["png_base64"]);
}
