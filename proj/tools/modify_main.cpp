#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "modify/eval.hpp"
#include "modify/imageio.hpp"
#include "modify/kernels.hpp"
#include "modify/persist.hpp"
#include "modify/stage1.hpp"
#include "modify/stage2.hpp"

namespace fs = std::filesystem;
using namespace modify;

namespace {

// progress and diagnostics go to stderr; stdout carries only output paths
std::ostream& log() { return std::cerr; }

std::uint64_t env_seed_default() {
  if (const char* e = std::getenv("MODIFY_SEED")) return std::strtoull(e, nullptr, 10);
  return 0;
}

std::vector<std::uint64_t> parse_u64_list(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::strtoull(item.c_str(), nullptr, 10));
  if (out.empty()) throw ConfigError("empty list: " + s);
  return out;
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  for (auto v : parse_u64_list(s)) out.push_back(static_cast<int>(v));
  return out;
}

class MetricsLog {
 public:
  explicit MetricsLog(const std::string& path) : f_(path, std::ios::trunc), path_(path) {
    if (!f_) throw DataError("cannot open metrics log: " + path);
  }
  template <class V>
  void kv(const std::string& k, const V& v) {
    f_ << k << "=" << v << "\n";
  }
  void flush() { f_.flush(); }
  const std::string& path() const { return path_; }

 private:
  std::ofstream f_;
  std::string path_;
};

data::ImageDataset load_source(const std::string& dir, int resolution) {
  // "synth:<profile>:<count>[:seed]" generates the test fixture instead of
  // reading a folder
  if (dir.rfind("synth:", 0) == 0) {
    std::stringstream ss(dir.substr(6));
    std::string profile, count, seed;
    std::getline(ss, profile, ':');
    std::getline(ss, count, ':');
    std::getline(ss, seed, ':');
    data::SyntheticSpec spec;
    spec.profile = data::profile_from_string(profile);
    spec.count = count.empty() ? 8 : std::stoi(count);
    spec.seed = seed.empty() ? 0 : std::strtoull(seed.c_str(), nullptr, 10);
    spec.resolution = resolution;
    return data::synth_generate(spec);
  }
  return data::load_folder(dir, resolution);
}

nlohmann::json cli_echo(const CLI::App* cmd) {
  nlohmann::json j;
  for (const CLI::Option* opt : cmd->get_options()) {
    if (opt->get_name().empty() || opt->count() == 0) continue;
    std::string name = opt->get_name();
    if (!opt->results().empty()) j[name] = opt->results().size() == 1 ? nlohmann::json(opt->results()[0])
                                                                      : nlohmann::json(opt->results());
  }
  return j;
}

struct CommonArgs {
  std::uint64_t seed = env_seed_default();
  int resolution = 64;
};

int cmd_encapsulate(const std::string& style_dir, const std::string& out, int resolution, int xi,
                    std::int64_t iterations, std::int64_t boundary, int batch, double lr,
                    std::uint64_t seed, double gp, const CLI::App* cmd) {
  auto style = load_source(style_dir, resolution);
  auto cfg = model::PipelineConfig::make(resolution, xi);
  cfg.gp_coef = gp;
  auto sched = stage1::Stage1Schedule::toy(iterations, batch);
  if (boundary >= 0) sched.phase_boundary = boundary;
  sched.optimizer.learning_rate = lr;
  sched.validate();

  fs::create_directories(out);
  MetricsLog metrics((fs::path(out) / "metrics.log").string());
  metrics.kv("stage", "stage1");
  metrics.kv("kernels", kernels::backend_name());
  metrics.kv("seed", seed);
  metrics.kv("xi", cfg.latent.fusion_index);

  stage1::RunHooks hooks;
  hooks.on_report = [&](const stage1::LossReport& r) {
    if (r.iteration % 10 == 0 || r.iteration + 1 == sched.total_iterations) {
      std::ostringstream os;
      os << "iter=" << r.iteration << " gen_total=" << r.generator_total;
      for (const auto& [k, v] : r.generator) os << " " << k << "=" << v;
      metrics.kv("stage1", os.str());
      log() << "stage1 " << os.str() << "\n";
    }
  };
  hooks.on_checkpoint = [&](const stage1::Trainer& t) {
    const std::string ckpt = (fs::path(out) / "checkpoints" / std::to_string(t.iteration())).string();
    stage1::save_checkpoint(t, ckpt);
    log() << "checkpoint written: " << ckpt << "\n";
  };

  auto m = stage1::encapsulate(style, cfg, sched, seed, hooks);

  nlohmann::json extras;
  extras["stage"] = "stage1";
  extras["iteration"] = sched.total_iterations;
  stage1::to_json(extras["schedule"], sched);
  extras["cli"] = cli_echo(cmd);
  persist::save_package(m, out, extras);
  metrics.kv("package", out);
  metrics.kv("fingerprint", persist::fingerprint(out));
  log() << "fingerprint " << persist::fingerprint(out) << "\n";
  std::cout << out << "\n";
  return 0;
}

int cmd_stylize_train(const std::string& pkg_dir, const std::string& source_dir,
                      const std::string& mode_str, std::int64_t steps, int batch, double lr,
                      const std::string& out, std::uint64_t seed, const CLI::App* cmd) {
  const stage2::Mode mode = stage2::mode_from_string(mode_str);
  if (mode == stage2::Mode::TestTime)
    throw CLI::ValidationError("--mode", "test-time runs through the `stylize` subcommand");
  auto pkg = persist::load_package(pkg_dir);
  log() << "loaded package " << persist::fingerprint(pkg_dir) << "\n";
  auto source = load_source(source_dir, pkg.model.cfg.resolution);

  auto cfg = stage2::StylizeConfig::defaults(mode);
  cfg.steps = steps;
  if (mode == stage2::Mode::Offline) cfg.batch_size = batch;
  cfg.optimizer.learning_rate = lr;
  cfg.validate();

  fs::create_directories(out);
  MetricsLog metrics((fs::path(out) / "metrics.log").string());
  metrics.kv("stage", "stage2");
  metrics.kv("mode", to_string(mode));
  metrics.kv("kernels", kernels::backend_name());
  metrics.kv("seed", seed);

  stage2::RunHooks hooks;
  hooks.on_report = [&](const stage2::StepReport& r) {
    if (r.iteration % 10 == 0 || r.iteration + 1 == cfg.steps) {
      std::ostringstream os;
      os << "iter=" << r.iteration << " gen_total=" << r.generator_total;
      for (const auto& [k, v] : r.generator) os << " " << k << "=" << v;
      metrics.kv("stage2", os.str());
      log() << "stage2 " << os.str() << "\n";
    }
  };

  stage2::Session session = mode == stage2::Mode::Offline
                                ? stage2::stylize_offline(pkg, source, cfg, seed, hooks)
                                : stage2::stylize_online(pkg, source, cfg, seed, hooks);

  nlohmann::json extras;
  extras["cli"] = cli_echo(cmd);
  stage2::save_adapted_package(session, out, extras);
  metrics.kv("package", out);
  metrics.kv("fingerprint", persist::fingerprint(out));
  log() << "fingerprint " << persist::fingerprint(out) << "\n";
  std::cout << out << "\n";
  return 0;
}

int cmd_stylize(const std::string& pkg_dir, const std::string& input, std::int64_t steps, double lr,
                const std::string& out, std::uint64_t seed) {
  auto pkg = persist::load_package(pkg_dir);
  log() << "loaded package " << persist::fingerprint(pkg_dir) << "\n";
  Tensor<float> image = data::load_image(input, pkg.model.cfg.resolution);

  auto cfg = stage2::StylizeConfig::defaults(stage2::Mode::TestTime);
  cfg.steps = steps;
  cfg.optimizer.learning_rate = lr;
  auto [session, stylized] = stage2::stylize_test_time(pkg, image, cfg, seed);
  data::save_png(out, stylized);
  log() << "test-time adaptation: " << session.enc_opt.step_count() << " updates\n";
  std::cout << out << "\n";
  return 0;
}

int cmd_sample(const std::string& pkg_dir, const std::string& input_dir,
               const std::string& seeds_str, const std::string& out_grid, std::uint64_t seed) {
  auto pkg = persist::load_package(pkg_dir);
  log() << "loaded package " << persist::fingerprint(pkg_dir) << "\n";
  auto noise_seeds = parse_u64_list(seeds_str);
  auto inputs = load_source(input_dir, pkg.model.cfg.resolution);
  (void)seed;

  std::vector<std::vector<Tensor<float>>> rows;
  for (const auto& img : inputs.images) {
    std::vector<Tensor<float>> row{img.clone()};
    for (auto& sample : stage2::sample_multimodal(pkg.model, img, noise_seeds))
      row.push_back(std::move(sample));
    rows.push_back(std::move(row));
  }
  data::save_png(out_grid, data::make_grid(rows));
  std::cout << out_grid << "\n";
  return 0;
}

int cmd_eval(const std::string& pkg_dir, const std::string& source_dir,
             const std::string& reference_dir, int resolution, const std::string& out,
             std::uint64_t seed) {
  std::vector<std::pair<std::string, std::string>> kv;
  double fid = 0;
  if (!pkg_dir.empty()) {
    auto pkg = persist::load_package(pkg_dir);
    const int res = pkg.model.cfg.resolution;
    auto source = load_source(source_dir, res);
    auto reference = load_source(reference_dir, res);
    fid = eval::eval_fid(pkg.model, source, reference, pkg.model.perceptual);
    kv.emplace_back("fingerprint", persist::fingerprint(pkg_dir));
    kv.emplace_back("embedder", eval::embedder_fingerprint(pkg.model.perceptual));
    kv.emplace_back("fid_samples_source", std::to_string(source.size()));
    kv.emplace_back("fid_samples_reference", std::to_string(reference.size()));
  } else {
    // raw mode: features straight off the images, no stylization
    auto cfg = model::PipelineConfig::make(resolution);
    auto f = nets::Embedder<float>::make(cfg.perceptual, seed);
    auto source = load_source(source_dir, resolution);
    auto reference = load_source(reference_dir, resolution);
    fid = eval::fid_between(source, reference, f);
    kv.emplace_back("embedder", eval::embedder_fingerprint(f));
    kv.emplace_back("fid_samples_source", std::to_string(source.size()));
    kv.emplace_back("fid_samples_reference", std::to_string(reference.size()));
  }
  kv.emplace_back("fid", std::to_string(fid));
  eval::write_report(out, kv);
  log() << "fid=" << fid << "\n";
  std::cout << out << "\n";
  return 0;
}

int cmd_ablate(const std::string& which, const std::string& style_dir, const std::string& source_dir,
               int resolution, std::int64_t iterations, std::int64_t s2_steps,
               const std::string& xi_list_str, const std::string& seeds_str, double lr,
               const std::string& out_dir) {
  fs::create_directories(out_dir);
  auto style = load_source(style_dir, resolution);
  auto source = load_source(source_dir, resolution);
  auto seeds = parse_u64_list(seeds_str);
  auto cfg = model::PipelineConfig::make(resolution);
  auto sched = stage1::Stage1Schedule::toy(iterations, 4);
  sched.optimizer.learning_rate = lr;

  std::vector<std::pair<std::string, std::string>> kv;
  if (which == "swap") {
    auto rep = eval::ablate_swap(style, source, cfg, sched, seeds);
    for (const auto& r : rep.runs) {
      kv.emplace_back("seed" + std::to_string(r.seed) + ".consistency_swap_on",
                      std::to_string(r.consistency_on));
      kv.emplace_back("seed" + std::to_string(r.seed) + ".consistency_swap_off",
                      std::to_string(r.consistency_off));
    }
    kv.emplace_back("wins_swap_on", std::to_string(rep.wins_on));
    kv.emplace_back("runs", std::to_string(rep.runs.size()));
    data::save_png((fs::path(out_dir) / "swap_grid.png").string(), data::make_grid(rep.grid));
  } else if (which == "xi") {
    auto s2cfg = stage2::StylizeConfig::defaults(stage2::Mode::Offline);
    s2cfg.steps = s2_steps;
    s2cfg.optimizer.learning_rate = lr;
    auto rep = eval::ablate_xi(style, source, cfg, sched, s2cfg, parse_int_list(xi_list_str), seeds);
    for (const auto& e : rep.entries) {
      kv.emplace_back("xi" + std::to_string(e.xi) + ".mean_id_loss", std::to_string(e.mean_id_loss));
      for (std::size_t i = 0; i < e.id_loss_per_seed.size(); ++i)
        kv.emplace_back("xi" + std::to_string(e.xi) + ".seed" + std::to_string(rep.seeds[i]) +
                            ".id_loss",
                        std::to_string(e.id_loss_per_seed[i]));
    }
    data::save_png((fs::path(out_dir) / "xi_grid.png").string(), data::make_grid(rep.grid));
  } else {
    throw CLI::ValidationError("--which", "must be swap or xi");
  }
  const std::string report = (fs::path(out_dir) / "report.txt").string();
  eval::write_report(report, kv);
  std::cout << report << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MODIFY: model-driven face stylization pipeline"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "key=value config file; flags take precedence");

  std::uint64_t seed = env_seed_default();
  app.add_option("--seed", seed, "global seed")->envname("MODIFY_SEED")->capture_default_str();

  // encapsulate
  auto* enc = app.add_subcommand("encapsulate", "stage 1: train the style model on a style folder");
  std::string enc_style, enc_out;
  int enc_res = 64, enc_xi = 0, enc_batch = 4;
  std::int64_t enc_iters = 200, enc_boundary = -1;
  double enc_lr = 1e-4, enc_gp = 10.0;
  enc->add_option("--style-dir", enc_style, "style image folder or synth:<profile>:<count>")->required();
  enc->add_option("--out", enc_out, "output package directory")->required();
  enc->add_option("--resolution", enc_res, "image resolution (power of two, >= 8)")->capture_default_str();
  enc->add_option("--xi", enc_xi, "fusion index (0 = default round(L/3))")->capture_default_str();
  enc->add_option("--iterations", enc_iters, "total iterations")->capture_default_str();
  enc->add_option("--boundary", enc_boundary, "phase boundary (-1 = proportional default)")
      ->capture_default_str();
  enc->add_option("--batch", enc_batch, "batch size")->capture_default_str();
  enc->add_option("--lr", enc_lr, "learning rate")->capture_default_str();
  enc->add_option("--gp", enc_gp, "gradient penalty coefficient (0 = plain WGAN)")->capture_default_str();

  // stylize-train
  auto* st = app.add_subcommand("stylize-train", "stage 2: adapt the encoder to a source folder");
  std::string st_pkg, st_source, st_mode = "offline", st_out;
  std::int64_t st_steps = 200;
  int st_batch = 4;
  double st_lr = 1e-4;
  st->add_option("--pkg", st_pkg, "stage-1 package directory")->required();
  st->add_option("--source-dir", st_source, "source image folder or synth:<profile>:<count>")->required();
  st->add_option("--mode", st_mode, "offline|online")->capture_default_str();
  st->add_option("--steps", st_steps, "adaptation steps")->capture_default_str();
  st->add_option("--batch", st_batch, "batch size (offline mode; online is always 1)")
      ->capture_default_str();
  st->add_option("--lr", st_lr, "learning rate")->capture_default_str();
  st->add_option("--out", st_out, "output package directory")->required();

  // stylize (test-time)
  auto* sz = app.add_subcommand("stylize", "test-time adaptation on a single image");
  std::string sz_pkg, sz_input, sz_out;
  std::int64_t sz_steps = 50;
  double sz_lr = 1e-4;
  sz->add_option("--pkg", sz_pkg, "package directory")->required();
  sz->add_option("--input", sz_input, "input image")->required();
  sz->add_option("--steps", sz_steps, "adaptation steps")->capture_default_str();
  sz->add_option("--lr", sz_lr, "learning rate")->capture_default_str();
  sz->add_option("--out", sz_out, "output PNG")->required();

  // sample
  auto* sp = app.add_subcommand("sample", "noise-guided multimodal sampling grid");
  std::string sp_pkg, sp_input, sp_seeds = "0,1,2", sp_out;
  sp->add_option("--pkg", sp_pkg, "package directory")->required();
  sp->add_option("--input", sp_input, "input folder or synth:<profile>:<count>")->required();
  sp->add_option("--noise-seeds", sp_seeds, "comma-separated noise seeds")->capture_default_str();
  sp->add_option("--out-grid", sp_out, "output grid PNG")->required();

  // eval
  auto* ev = app.add_subcommand("eval", "Frechet-distance evaluation");
  std::string ev_pkg, ev_source, ev_ref, ev_out = "eval_report.txt";
  int ev_res = 64;
  ev->add_option("--pkg", ev_pkg, "package (omit to compare raw image folders)");
  ev->add_option("--source-dir", ev_source, "source folder or synth spec")->required();
  ev->add_option("--reference-dir", ev_ref, "reference folder or synth spec")->required();
  ev->add_option("--resolution", ev_res, "resolution for raw mode")->capture_default_str();
  ev->add_option("--out", ev_out, "report path")->capture_default_str();

  // ablate
  auto* ab = app.add_subcommand("ablate", "swapping-loss / fusion-index ablations");
  std::string ab_which, ab_style, ab_source, ab_xi = "", ab_seeds = "0,1,2", ab_out = "ablation";
  int ab_res = 32;
  std::int64_t ab_iters = 200, ab_s2steps = 200;
  double ab_lr = 1e-4;
  ab->add_option("--which", ab_which, "swap|xi")->required();
  ab->add_option("--style-dir", ab_style, "style folder or synth spec")->required();
  ab->add_option("--source-dir", ab_source, "source folder or synth spec")->required();
  ab->add_option("--resolution", ab_res, "resolution")->capture_default_str();
  ab->add_option("--iterations", ab_iters, "stage-1 iterations per run")->capture_default_str();
  ab->add_option("--s2-steps", ab_s2steps, "stage-2 steps per run (xi ablation)")->capture_default_str();
  ab->add_option("--xi-list", ab_xi, "comma-separated xi values (xi ablation)");
  ab->add_option("--ablate-seeds", ab_seeds, "comma-separated run seeds")->capture_default_str();
  ab->add_option("--lr", ab_lr, "learning rate")->capture_default_str();
  ab->add_option("--out", ab_out, "output directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*enc)
      return cmd_encapsulate(enc_style, enc_out, enc_res, enc_xi, enc_iters, enc_boundary, enc_batch,
                             enc_lr, seed, enc_gp, enc);
    if (*st)
      return cmd_stylize_train(st_pkg, st_source, st_mode, st_steps, st_batch, st_lr, st_out, seed, st);
    if (*sz) return cmd_stylize(sz_pkg, sz_input, sz_steps, sz_lr, sz_out, seed);
    if (*sp) return cmd_sample(sp_pkg, sp_input, sp_seeds, sp_out, seed);
    if (*ev) return cmd_eval(ev_pkg, ev_source, ev_ref, ev_res, ev_out, seed);
    if (*ab)
      return cmd_ablate(ab_which, ab_style, ab_source, ab_res, ab_iters, ab_s2steps, ab_xi, ab_seeds,
                        ab_lr, ab_out);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
