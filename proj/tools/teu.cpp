// teu: phantom | mask | recon | train | eval

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <regex>

#include "config.hpp"
#include "png_io.hpp"
#include "teu/ktn.hpp"
#include "teu/metrics.hpp"
#include "teu/nn/checkpoint.hpp"
#include "teu/nn/dataset.hpp"
#include "teu/nn/train.hpp"
#include "teu/unroll.hpp"
#include "teu/vamp.hpp"

namespace fs = std::filesystem;
using namespace teu;
using teu::cli::Config;

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  int threads = 1;
  bool verbose = false;
};

Globals g;

void log(const std::string& msg) {
  if (g.verbose) std::cerr << msg << '\n';
}

std::string indexed(const char* stem, std::size_t i) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%04zu.ktn", stem, i);
  return buf;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream os(p);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  os.precision(17);
  return os;
}

void prepare_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw std::runtime_error("cannot create output directory " + dir.string());
}

void echo_config(const Config& cfg, const fs::path& dir) {
  auto os = open_out(dir / "config.ini");
  cfg.write(os);
}

nn::SimulationSpec simulation(const Config& c) {
  nn::SimulationSpec s;
  s.size = static_cast<std::size_t>(c.integer("data.size", 8));
  s.coils = static_cast<std::size_t>(c.integer("data.coils", 1));
  s.sigma = c.real("data.sigma");
  if (s.sigma < 0.0) throw ConfigError("data.sigma", "must be >= 0");
  s.ellipses = static_cast<int>(c.integer("data.ellipses", 0));
  s.R = static_cast<int>(c.integer("mask.R", 1));
  s.acs = static_cast<std::size_t>(c.integer("mask.acs", 0));
  return s;
}

SamplingMask make_mask(const Config& c, std::size_t rows, std::size_t cols) {
  if (!c.str("mask.file").empty()) {
    auto m = ktn::to_mask(ktn::read(c.str("mask.file")));
    if (m.rows != rows || m.cols != cols) throw ConfigError("mask.file", "mask shape does not match the images");
    return m;
  }
  const auto R = c.integer("mask.R", 1);
  const auto acs = static_cast<std::size_t>(c.integer("mask.acs", 0));
  if (acs > cols) throw ConfigError("mask.acs", "exceeds the number of columns");
  const auto& type = c.str("mask.type");
  if (type == "equispaced") return make_equispaced_mask(rows, cols, static_cast<int>(R), acs);
  if (type == "random") {
    if (static_cast<double>(cols) / static_cast<double>(R) < static_cast<double>(acs))
      throw ConfigError("mask.R", "cols / R is smaller than the ACS block");
    return make_random_mask(rows, cols, static_cast<double>(R), acs, c.seed("mask.seed"));
  }
  throw ConfigError("mask.type", "expected equispaced or random, got '" + type + "'");
}

nn::TrainingSample sample_from(const nn::SimulationSpec& sim, const SamplingMask& mask, ComplexImage reference,
                               const fs::path& sens, std::uint64_t seed) {
  nn::TrainingSample s;
  s.reference = std::move(reference);
  auto maps = sens.empty() ? make_smooth_sensitivities(s.reference.height, s.reference.width, sim.coils, seed + 1)
                           : ktn::to_sensitivities(ktn::read(sens));
  s.E = std::make_shared<const EncodingOperator>(mask, std::move(maps));
  s.y = add_noise(s.E->forward(s.reference), mask, sim.sigma, seed + 2).data;
  return s;
}

/// Samples from a phantom directory, or simulated ones when `dir` is empty.
std::vector<nn::TrainingSample> load_dataset(const Config& c, const std::string& dir, std::size_t count,
                                             std::uint64_t seed) {
  const auto sim = simulation(c);
  std::vector<nn::TrainingSample> out;
  if (dir.empty()) {
    const auto mask = make_mask(c, sim.size, sim.size);
    for (std::size_t i = 0; i < count; ++i) out.push_back(nn::simulate_sample(sim, mask, nn::sample_seed(seed, i)));
    return out;
  }
  if (!fs::is_directory(dir)) throw ConfigError("data.dir", "not a directory: " + dir);
  std::vector<fs::path> images;
  const std::regex pattern("image_[0-9]{4}\\.ktn");
  for (const auto& e : fs::directory_iterator(dir))
    if (std::regex_match(e.path().filename().string(), pattern)) images.push_back(e.path());
  std::sort(images.begin(), images.end());
  if (images.empty()) throw ConfigError("data.dir", "no image_NNNN.ktn files in " + dir);
  std::optional<SamplingMask> mask;
  for (std::size_t i = 0; i < images.size(); ++i) {
    auto sens = images[i].parent_path() / ("sens_" + images[i].filename().string().substr(6));
    if (!fs::exists(sens)) sens.clear();
    auto image = ktn::to_image(ktn::read(images[i]));
    if (!mask) mask = make_mask(c, image.height, image.width);
    out.push_back(sample_from(sim, *mask, std::move(image), sens, nn::sample_seed(seed, i)));
  }
  return out;
}

unroll::Algorithm algorithm(const Config& c) {
  auto a = unroll::parse_algorithm(c.str("unroll.algorithm"));
  if (!a) throw ConfigError("unroll.algorithm", "unknown algorithm '" + c.str("unroll.algorithm") + "'");
  return *a;
}

unroll::UnrollConfig unroll_config(const Config& c) {
  unroll::UnrollConfig u;
  u.algorithm = algorithm(c);
  u.T = static_cast<int>(c.integer("unroll.T", 1));
  u.cg_iters = static_cast<int>(c.integer("unroll.cg_iters", 1));
  const auto& sharing = c.str("unroll.sharing");
  if (sharing == "auto") {
    u.sharing = unroll::is_time_embedded(u.algorithm) ? unroll::Sharing::time_embedded : unroll::Sharing::shared;
  } else {
    auto s = unroll::parse_sharing(sharing);
    if (!s) throw ConfigError("unroll.sharing", "unknown sharing mode '" + sharing + "'");
    u.sharing = *s;
  }
  u.validate();
  return u;
}

bool learned_prox(const Config& c) {
  const auto& p = c.str("model.prox");
  return p == "resnet" || p == "unet";
}

AnalyticProx analytic_prox(const Config& c) {
  const auto& p = c.str("model.prox");
  const double v = c.real("model.prox_param");
  if (v < 0.0) throw ConfigError("model.prox_param", "must be >= 0");
  if (p == "identity") return AnalyticProx::identity();
  if (p == "soft_threshold") return AnalyticProx::soft_threshold(v);
  if (p == "tikhonov") return AnalyticProx::tikhonov(v);
  throw ConfigError("model.prox", "unknown prox '" + p + "'");
}

nn::ModelSpec model_spec(const Config& c) {
  nn::ModelSpec m;
  m.unroll = unroll_config(c);
  const auto& prox = c.str("model.prox");
  if (!learned_prox(c)) throw ConfigError("model.prox", "training and evaluation need resnet or unet, got '" + prox + "'");
  const auto& scale = c.str("model.scale");
  if (scale != "toy" && scale != "full") throw ConfigError("model.scale", "expected toy or full");
  const bool full = scale == "full";
  m.net = prox == "resnet" ? (full ? nn::NetworkSpec::resnet_full() : nn::NetworkSpec::resnet_toy())
                           : (full ? nn::NetworkSpec::unet_full() : nn::NetworkSpec::unet_toy());
  return m;
}

unroll::Schedules analytic_schedules(const Config& c, const unroll::UnrollConfig& u) {
  auto s = unroll::default_schedules(u);
  const int n = unroll::is_time_embedded(u.algorithm) ? u.T : 1;
  if (c.str("unroll.mu") != "auto") {
    const double mu = c.real("unroll.mu");
    if (!(mu > 0.0)) throw ConfigError("unroll.mu", "must be > 0");
    s.mu = unroll::ScalarSchedule::constant(n, mu, unroll::kMuFloor);
  }
  s.rho = unroll::ScalarSchedule::constant(u.algorithm == unroll::Algorithm::alg1 ? u.T : 1, c.real("unroll.rho"));
  s.lambda = unroll::ScalarSchedule::constant(1, c.real("unroll.lambda"));
  return s;
}

std::unique_ptr<nn::UnrolledModel> load_model(const Config& c, const std::string& checkpoint) {
  auto m = std::make_unique<nn::UnrolledModel>(model_spec(c), c.seed("model.seed"));
  if (checkpoint.empty()) throw ConfigError("model.checkpoint", "a learned prox needs a checkpoint directory");
  nn::load_checkpoint(m->params(), checkpoint);
  return m;
}

std::string fmt(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

ComplexImage crop(const ComplexImage& img, std::size_t size) {
  return size == 0 ? img : metrics::center_crop(img, size, size);
}

// ---------------------------------------------------------------------------

int cmd_phantom(const fs::path& out, std::size_t size, std::size_t coils, std::size_t count, int ellipses) {
  prepare_dir(out);
  const std::uint64_t seed = g.seed.value_or(0);
  for (std::size_t i = 0; i < count; ++i) {
    const auto s = nn::sample_seed(seed, i);
    ktn::write(out / indexed("image", i), ktn::from_image(make_phantom(size, size, ellipses, s)));
    ktn::write(out / indexed("sens", i), ktn::from_sensitivities(make_smooth_sensitivities(size, size, coils, s + 1)));
  }
  log("wrote " + std::to_string(count) + " phantoms to " + out.string());
  return 0;
}

int cmd_mask(const fs::path& out, std::size_t rows, std::size_t cols, int R, std::size_t acs, const std::string& type) {
  Config c;
  c.set("mask.R", std::to_string(R));
  c.set("mask.acs", std::to_string(acs));
  c.set("mask.type", type);
  c.set("mask.seed", std::to_string(g.seed.value_or(0)));
  const auto m = make_mask(c, rows, cols);
  if (out.has_parent_path()) prepare_dir(out.parent_path());
  ktn::write(out, ktn::from_mask(m));
  ComplexImage img(rows, cols);
  for (std::size_t i = 0; i < img.size(); ++i) img.data[i] = m.pattern[i];
  auto png = out;
  cli::write_magnitude_png(png.replace_extension(".png"), img, 1.0);
  log("sampled " + std::to_string(m.sampled_columns().size()) + " of " + std::to_string(cols) + " columns");
  return 0;
}

int cmd_recon(Config c, const fs::path& out, std::optional<double> window) {
  if (g.seed) c.set("data.seed", std::to_string(*g.seed));
  const auto sim = simulation(c);
  const std::uint64_t seed = nn::sample_seed(c.seed("data.seed"), 0);
  ComplexImage image = c.str("data.image").empty() ? make_phantom(sim.size, sim.size, sim.ellipses, seed)
                                                    : ktn::to_image(ktn::read(c.str("data.image")));
  const auto mask = make_mask(c, image.height, image.width);
  const nn::TrainingSample s = sample_from(sim, mask, std::move(image), c.str("data.sens"), seed);
  prepare_dir(out);
  const std::size_t H = s.reference.height, W = s.reference.width;
  const CVec zf = s.E->adjoint(s.y);
  CVec x;
  auto diag = open_out(out / "diagnostics.csv");
  if (c.str("unroll.algorithm") == "vamp") {
    if (learned_prox(c)) throw ConfigError("model.prox", "vamp needs an analytic prox");
    vamp::VampConfig vc;
    vc.max_iters = static_cast<int>(c.integer("unroll.vamp_iters", 1));
    vc.damping = c.real("unroll.damping");
    if (!(vc.damping > 0.0 && vc.damping <= 1.0)) throw ConfigError("unroll.damping", "must lie in (0, 1]");
    vc.seed = c.seed("data.seed");
    const auto res = vamp::run_vamp(as_linear_operator(*s.E), s.y, vamp::make_denoiser(analytic_prox(c)), vc,
                                    std::nullopt, std::span<const cplx>(s.reference.data));
    vamp::write_csv(diag, res.trace);
    x = res.x;
  } else {
    unroll::RunOptions opts;
    opts.reference = std::span<const cplx>(s.reference.data);
    unroll::UnrollResult res;
    if (learned_prox(c)) {
      res = load_model(c, c.str("model.checkpoint"))->reconstruct(*s.E, s.y, opts);
    } else {
      const auto u = unroll_config(c);
      const unroll::ProxBank bank{std::vector<unroll::TimedProx>(
          u.sharing == unroll::Sharing::unshared ? static_cast<std::size_t>(u.T) : 1,
          unroll::from_analytic(analytic_prox(c)))};
      res = unroll::run_unrolled(u, as_linear_operator(*s.E), s.y, analytic_schedules(c, u), bank, opts);
    }
    unroll::write_csv(diag, res.diagnostics);
    x = res.x;
  }
  if (!all_finite(x)) throw NumericError("recon: reconstruction is not finite");
  const ComplexImage recon(H, W, x), zero_filled(H, W, zf);
  ktn::write(out / "recon.ktn", ktn::from_image(recon));
  ktn::write(out / "reference.ktn", ktn::from_image(s.reference));
  cli::write_magnitude_png(out / "recon.png", recon, window);
  cli::write_magnitude_png(out / "zero_filled.png", zero_filled, window);
  cli::write_magnitude_png(out / "reference.png", s.reference, window);
  auto m = open_out(out / "metrics.csv");
  m << "image,psnr_db,ssim,nmse\n";
  for (const auto& [name, img] : {std::pair{"recon", &recon}, std::pair{"zero_filled", &zero_filled}}) {
    const auto r = metrics::evaluate(s.reference, *img);
    m << name << ',' << fmt(r.psnr_db) << ',' << fmt(r.ssim) << ',' << fmt(r.nmse) << '\n';
    log(std::string(name) + ": PSNR " + fmt(r.psnr_db) + " dB, NMSE " + fmt(r.nmse));
  }
  echo_config(c, out);
  return 0;
}

int cmd_train(Config c, const fs::path& out) {
  if (g.seed) c.set("data.seed", std::to_string(*g.seed));
  const auto spec = model_spec(c);
  nn::TrainConfig tc;
  tc.epochs = static_cast<int>(c.integer("train.epochs", 0));
  tc.batch_size = static_cast<std::size_t>(c.integer("train.batch_size", 1));
  tc.adam.lr = c.real("train.lr");
  if (!(tc.adam.lr > 0.0)) throw ConfigError("train.lr", "must be > 0");
  tc.seed = c.seed("train.seed");
  tc.threads = g.threads;
  const auto data = load_dataset(c, c.str("data.dir"), static_cast<std::size_t>(c.integer("train.count", 1)),
                                 c.seed("data.seed"));
  nn::UnrolledModel model(spec, c.seed("model.seed"));
  if (!c.str("model.checkpoint").empty()) nn::load_checkpoint(model.params(), c.str("model.checkpoint"));
  log("training " + std::to_string(model.params().scalar_count()) + " parameters on " + std::to_string(data.size()) +
      " samples");
  prepare_dir(out);
  const auto report = nn::train(model, data, tc, [](int epoch, double loss) {
    log("epoch " + std::to_string(epoch) + " loss " + fmt(loss));
  });
  auto csv = open_out(out / "loss.csv");
  csv << "epoch,loss\n";
  for (std::size_t e = 0; e < report.epoch_loss.size(); ++e) csv << e << ',' << fmt(report.epoch_loss[e]) << '\n';
  nn::save_checkpoint(model.params(), out / "checkpoint");
  echo_config(c, out);
  return 0;
}

int cmd_eval(Config c, const fs::path& out, const std::string& checkpoint) {
  if (g.seed) c.set("eval.seed", std::to_string(*g.seed));
  if (!checkpoint.empty()) c.set("model.checkpoint", fs::absolute(checkpoint).lexically_normal().string());
  const auto& source = c.str("eval.source");
  if (source != "model" && source != "zero_filled" && source != "reference")
    throw ConfigError("eval.source", "expected model, zero_filled or reference");
  const auto crop_size = static_cast<std::size_t>(c.integer("eval.crop", 0));
  const auto data = load_dataset(c, c.str("eval.dir"), static_cast<std::size_t>(c.integer("eval.count", 1)),
                                 c.seed("eval.seed"));
  std::unique_ptr<nn::UnrolledModel> model;
  if (source == "model") model = load_model(c, c.str("model.checkpoint"));
  std::vector<metrics::MetricReport> rows(data.size());
  nn::parallel_for(data.size(), g.threads, [&](std::size_t i) {
    const auto& s = data[i];
    ComplexImage test = s.reference;
    if (source == "model") test.data = model->reconstruct(*s.E, s.y).x;
    if (source == "zero_filled") test = nn::zero_filled(s);
    rows[i] = metrics::evaluate(crop(s.reference, crop_size), crop(test, crop_size));
  });
  prepare_dir(out);
  auto csv = open_out(out / "metrics.csv");
  csv << "slice,psnr_db,ssim,nmse\n";
  for (std::size_t i = 0; i < rows.size(); ++i)
    csv << i << ',' << fmt(rows[i].psnr_db) << ',' << fmt(rows[i].ssim) << ',' << fmt(rows[i].nmse) << '\n';
  auto stats = [&](auto field) {
    double m = 0.0, v = 0.0;
    for (const auto& r : rows) m += field(r);
    m /= static_cast<double>(rows.size());
    for (const auto& r : rows) v += (field(r) - m) * (field(r) - m);
    return std::pair{m, std::sqrt(v / static_cast<double>(rows.size()))};
  };
  const auto p = stats([](const auto& r) { return r.psnr_db; });
  const auto s = stats([](const auto& r) { return r.ssim; });
  const auto n = stats([](const auto& r) { return r.nmse; });
  csv << "mean," << fmt(p.first) << ',' << fmt(s.first) << ',' << fmt(n.first) << '\n';
  csv << "std," << fmt(p.second) << ',' << fmt(s.second) << ',' << fmt(n.second) << '\n';
  log("mean PSNR " + fmt(p.first) + " dB, SSIM " + fmt(s.first));
  echo_config(c, out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unrolled MRI reconstruction experiments"};
  app.require_subcommand(1);
  app.fallthrough();
  std::uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "random seed");
  app.add_option("--threads", g.threads, "worker threads")->check(CLI::PositiveNumber);
  app.add_flag("--verbose,-v", g.verbose, "progress on stderr");

  fs::path out, config_path;
  std::string checkpoint, mask_type = "equispaced";
  std::size_t size = 32, coils = 4, count = 1, rows = 32, cols = 32, acs = 4;
  int ellipses = 6, R = 4;
  std::optional<double> window;

  auto* phantom = app.add_subcommand("phantom", "write phantom images and coil maps");
  phantom->add_option("--out", out, "output directory")->required();
  phantom->add_option("--size", size, "image size")->check(CLI::Range(8, 4096));
  phantom->add_option("--coils", coils, "coils")->check(CLI::Range(1, 256));
  phantom->add_option("--count", count, "number of phantoms")->check(CLI::NonNegativeNumber);
  phantom->add_option("--ellipses", ellipses, "ellipses per phantom")->check(CLI::NonNegativeNumber);

  auto* mask = app.add_subcommand("mask", "write a sampling mask");
  mask->add_option("--out", out, "output KTN file")->required();
  mask->add_option("--rows", rows, "rows")->check(CLI::PositiveNumber);
  mask->add_option("--cols", cols, "columns")->check(CLI::PositiveNumber);
  mask->add_option("--R", R, "acceleration")->check(CLI::PositiveNumber);
  mask->add_option("--acs", acs, "ACS columns");
  mask->add_option("--type", mask_type, "equispaced | random");

  auto* recon = app.add_subcommand("recon", "reconstruct one simulated or stored slice");
  auto* train = app.add_subcommand("train", "train an unrolled network");
  auto* eval = app.add_subcommand("eval", "evaluate on held-out slices");
  for (auto* sub : {recon, train, eval}) {
    sub->add_option("--config", config_path, "INI configuration")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out, "output directory")->required();
  }
  recon->add_option("--png-max", window, "PNG white level (default: image max)");
  eval->add_option("--checkpoint", checkpoint, "checkpoint directory (overrides model.checkpoint)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  if (seed_opt->count()) g.seed = seed;

  try {
    if (*phantom) return cmd_phantom(out, size, coils, count, ellipses);
    if (*mask) return cmd_mask(out, rows, cols, R, acs, mask_type);
    const Config cfg = Config::load(config_path);
    if (*recon) return cmd_recon(cfg, out, window);
    if (*train) return cmd_train(cfg, out);
    if (*eval) return cmd_eval(cfg, out, checkpoint);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return 3;
  } catch (const nn::CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
