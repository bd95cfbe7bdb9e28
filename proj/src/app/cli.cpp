#include "stwo/cli.hpp"

#include <CLI11.hpp>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <json.hpp>

#include "stwo/app.hpp"
#include "stwo/errors.hpp"
#include "stwo/image_io.hpp"
#include "stwo/service.hpp"
#include "stwo/texdecomp.hpp"

namespace stwo {

namespace {

struct TrainArgs {
  std::string config, out;
  std::int64_t steps = -1, log_every = 10;
  std::uint64_t seed = 0;
  bool seed_set = false, resume = false;
};

struct ImageArgs {
  std::string ckpt, out;
  std::uint64_t seed1 = 0, seed2 = 0, dir_seed = 0;
  double alpha = 0;
};

struct MetricsArgs {
  std::string ckpt, space = "w1_orthogonal";
  std::int64_t paths = 256;
  double epsilon = 1e-4;
  std::uint64_t seed = 0;
  int levels = 3;
};

struct DecomposeArgs {
  std::string in, out_dir = ".", method = "rtv";
  DecompositionParams params;
};

struct VerifyArgs {
  int layers = 100;
  std::uint64_t seed = 0;
  std::string json_out;
};

struct ServeArgs {
  std::string ckpt, host = "127.0.0.1", cors = "*";
  int port = 8080;
};

void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("short write to " + path.string());
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
  auto cfg = load_train_config(a.config);
  if (a.steps >= 0) cfg.steps = a.steps;
  if (!a.out.empty()) cfg.out_dir = a.out;
  if (a.seed_set) cfg.seed = a.seed;
  if (cfg.out_dir.empty()) cfg.out_dir = std::string("runs/") + to_string(cfg.config_id);
  cfg.finalize();

  std::unique_ptr<TrainState> state;
  const auto ckpt = std::filesystem::path(cfg.out_dir) / "checkpoint.stwo";
  if (a.resume && std::filesystem::exists(ckpt)) {
    state = load_checkpoint(ckpt);
    state->cfg.steps = cfg.steps;
    out << "resuming " << ckpt.string() << " at step " << state->step << "\n";
  } else {
    state = std::make_unique<TrainState>(cfg);
  }
  const auto images = load_dataset(state->cfg);
  out << "config " << to_string(state->cfg.config_id) << ", " << images.dim(0) << " images at "
      << (1 << state->cfg.net.n) << "px, " << state->cfg.steps << " steps\n";
  const auto data = prepare_real_data(images, state->cfg.net, state->cfg.decomposition);
  train(*state, data, [&](const StepStats& s) {
    if (a.log_every > 0 && (s.step % static_cast<std::uint64_t>(a.log_every) == 0 || s.step == 1))
      out << "step " << s.step << "/" << state->cfg.steps << std::fixed << std::setprecision(4) << "  loss_g "
          << s.loss_g << "  loss_d " << s.loss_d << "  r1 " << s.r1 << "  ortho " << s.ortho << "  "
          << std::setprecision(3) << s.seconds << "s" << std::defaultfloat << "\n"
          << std::flush;
  });
  out << "wrote " << ckpt.string() << "\n";
  return 0;
}

int cmd_sample(const ImageArgs& a, std::ostream& out) {
  const auto m = load_model(a.ckpt);
  write_bytes(a.out, render_sample(*m.model, a.seed1, a.seed2));
  out << "wrote " << a.out << "\n";
  return 0;
}

int cmd_edit(const ImageArgs& a, std::ostream& out) {
  const auto m = load_model(a.ckpt);
  const auto r = render_edit(*m.model, a.seed1, a.seed2, a.dir_seed, a.alpha);
  write_bytes(a.out, r.png);
  out << "wrote " << a.out << " (|dw1| = " << r.delta_norm << ")\n";
  return 0;
}

int cmd_metrics(const MetricsArgs& a, std::ostream& out) {
  const auto m = load_model(a.ckpt);
  PplConfig cfg;
  cfg.epsilon = a.epsilon;
  cfg.num_paths = a.paths;
  cfg.space = parse_ppl_space(a.space);
  cfg.distance_levels = a.levels;
  cfg.seed = a.seed;
  const auto r = ppl(m.model->synthesizer(), cfg);
  nlohmann::json j = {{"config_id", to_string(m.config.config_id)},
                      {"space", to_string(cfg.space)},
                      {"epsilon", cfg.epsilon},
                      {"num_paths", cfg.num_paths},
                      {"value", r.value},
                      {"std_error", r.std_error}};
  out << j.dump(2) << "\n";
  return 0;
}

Tensor<double> planar_batch(const Planar& p, double scale) {
  Tensor<double> t({1, p.channels, p.height, p.width});
  auto d = t.mutable_data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = std::clamp(p.data[i] * scale, -1.0, 1.0);
  return t;
}

int cmd_decompose(const DecomposeArgs& a, std::ostream& out) {
  const auto img = read_png(a.in);
  auto planar = to_planar(from_rgb8<double>(img), 0);
  for (auto& v : planar.data) v = (v + 1) / 2;  // the solver works in [0, 1]
  const auto method = a.method == "rtv" ? DecompMethod::rtv : DecompMethod::blur;
  auto d = decompose(planar, method, a.params);
  // Structure back to [-1, 1]; texture doubled onto the same scale.
  for (auto& v : d.structure.data) v = 2 * v - 1;
  const std::filesystem::path dir(a.out_dir);
  std::filesystem::create_directories(dir);
  const auto stem = std::filesystem::path(a.in).stem().string();
  const auto s_path = dir / (stem + "_structure.png"), t_path = dir / (stem + "_texture.png");
  write_bytes(s_path, png_bytes(planar_batch(d.structure, 1.0)));
  write_bytes(t_path, png_bytes(planar_batch(d.texture, 2.0)));
  double energy = 0;
  for (double v : d.texture.data) energy += v * v;
  nlohmann::json j = {{"input", a.in},
                      {"width", img.width},
                      {"height", img.height},
                      {"method", a.method},
                      {"cg_iterations", d.cg_iterations},
                      {"texture_rms", std::sqrt(energy / static_cast<double>(d.texture.data.size()))},
                      {"structure", s_path.string()},
                      {"texture", t_path.string()}};
  out << j.dump(2) << "\n";
  return 0;
}

int cmd_verify(const VerifyArgs& a, std::ostream& out) {
  const auto demod = check_demod_equivalence(a.layers, a.seed);
  const auto rank = check_rank_one(a.seed);
  out << verify_text(demod, rank);
  const auto j = verify_json(demod, rank);
  if (!a.json_out.empty()) {
    std::ofstream f(a.json_out);
    if (!f) throw FormatError("cannot write " + a.json_out);
    f << j << "\n";
  }
  out << j << "\n";
  return 0;
}

int cmd_serve(const ServeArgs& a, std::ostream& out) {
  ServeOptions opts;
  opts.host = a.host;
  opts.port = a.port;
  opts.cors_origin = a.cors;
  EditService service(load_model(a.ckpt), opts);
  const int port = service.bind();
  out << "serving on http://" << a.host << ":" << port << "\n" << std::flush;
  service.listen();
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Structure/texture independent GAN with weight decomposition"};
  app.name("stwo");
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "Train a model from a JSON config");
  train->add_option("--config", train_args.config, "Training config (JSON)")->required()->check(CLI::ExistingFile);
  train->add_option("--steps", train_args.steps, "Override the number of steps");
  train->add_option("--out", train_args.out, "Override the output directory");
  auto* seed_opt = train->add_option("--seed", train_args.seed, "Override the seed");
  train->add_flag("--resume", train_args.resume, "Continue from <out>/checkpoint.stwo when present");
  train->add_option("--log-every", train_args.log_every, "Progress line interval (0: quiet)");

  ImageArgs sample_args, edit_args;
  auto* sample = app.add_subcommand("sample", "Render one image from two seeds");
  auto* edit = app.add_subcommand("edit", "Render an image with w1 moved along an orthogonal direction");
  for (auto [cmd, args] : {std::pair{sample, &sample_args}, std::pair{edit, &edit_args}}) {
    cmd->add_option("--ckpt", args->ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
    cmd->add_option("--seed1", args->seed1, "Seed for w1");
    cmd->add_option("--seed2", args->seed2, "Seed for w2");
    cmd->add_option("--out", args->out, "Output PNG")->required();
  }
  edit->add_option("--dir-seed", edit_args.dir_seed, "Seed of the orthogonal direction");
  edit->add_option("--alpha", edit_args.alpha, "Edit magnitude")->required();

  MetricsArgs metrics_args;
  auto* metrics = app.add_subcommand("metrics", "Estimate a path-length metric");
  metrics->add_option("--ckpt", metrics_args.ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  metrics->add_option("--space", metrics_args.space, "w, w1, w2 or w1_orthogonal")
      ->check(CLI::IsMember({"w", "w1", "w2", "w1_orthogonal"}));
  metrics->add_option("--paths", metrics_args.paths, "Number of sampled paths")->check(CLI::PositiveNumber);
  metrics->add_option("--epsilon", metrics_args.epsilon, "Step length")->check(CLI::PositiveNumber);
  metrics->add_option("--seed", metrics_args.seed, "Sampling seed");
  metrics->add_option("--levels", metrics_args.levels, "Distance pyramid levels")->check(CLI::PositiveNumber);

  DecomposeArgs decompose_args;
  auto* decomp = app.add_subcommand("decompose", "Split an image into structure and texture");
  decomp->add_option("--in", decompose_args.in, "Input PNG")->required()->check(CLI::ExistingFile);
  decomp->add_option("--out-dir", decompose_args.out_dir, "Where to write <stem>_structure.png and <stem>_texture.png");
  decomp->add_option("--method", decompose_args.method, "rtv or blur")->check(CLI::IsMember({"rtv", "blur"}));
  decomp->add_option("--lambda", decompose_args.params.lambda, "Smoothness weight")->check(CLI::NonNegativeNumber);
  decomp->add_option("--sigma", decompose_args.params.sigma, "Window scale")->check(CLI::PositiveNumber);
  decomp->add_option("--iterations", decompose_args.params.max_iter, "Reweighting passes")->check(CLI::PositiveNumber);

  VerifyArgs verify_args;
  auto* verify = app.add_subcommand("verify", "Check demodulation equivalence and rank-one locality");
  verify->add_option("--layers", verify_args.layers, "Random layers for the equivalence check")->check(CLI::PositiveNumber);
  verify->add_option("--seed", verify_args.seed, "Seed");
  verify->add_option("--json", verify_args.json_out, "Also write the JSON report here");

  ServeArgs serve_args;
  auto* serve = app.add_subcommand("serve", "Serve the editing HTTP API");
  serve->add_option("--ckpt", serve_args.ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  serve->add_option("--port", serve_args.port, "Port (0 picks one)")->check(CLI::Range(0, 65535));
  serve->add_option("--host", serve_args.host, "Bind address");
  serve->add_option("--cors-origin", serve_args.cors, "Access-Control-Allow-Origin value");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const auto* failed = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << failed->help();
    return 2;
  }
  train_args.seed_set = seed_opt->count() > 0;

  try {
    if (*train) return cmd_train(train_args, out);
    if (*sample) return cmd_sample(sample_args, out);
    if (*edit) return cmd_edit(edit_args, out);
    if (*metrics) return cmd_metrics(metrics_args, out);
    if (*decomp) return cmd_decompose(decompose_args, out);
    if (*verify) return cmd_verify(verify_args, out);
    if (*serve) return cmd_serve(serve_args, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace stwo
