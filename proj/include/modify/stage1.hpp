#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "modify/data.hpp"
#include "modify/losses.hpp"
#include "modify/model.hpp"
#include "modify/optim.hpp"

namespace modify::stage1 {

// Two-phase weight schedule: phase-1 weights strictly before the boundary,
// phase-2 weights at and after it.
struct Stage1Schedule {
  losses::LossWeights phase1;
  losses::LossWeights phase2;
  std::int64_t phase_boundary = 150000;
  std::int64_t total_iterations = 170000;
  int batch_size = 4;
  optim::AdamConfig optimizer;
  bool phase2_freeze_decoder = false;

  void validate() const {
    phase1.validate();
    phase2.validate();
    optimizer.validate();
    if (phase_boundary < 0 || phase_boundary > total_iterations)
      throw ConfigError("schedule: phase_boundary must be in [0, total_iterations]");
    if (total_iterations < 1 || batch_size < 1) throw ConfigError("schedule: bad iteration/batch config");
  }
  std::int64_t checkpoint_every() const {
    return std::max<std::int64_t>(1, total_iterations / 10);
  }

  static losses::LossWeights default_phase1() {
    losses::LossWeights w;
    w.swap = 0;
    w.lpips = 0.8;
    w.adv_r = 0.1;
    w.adv_z = 0;
    w.recon = 0.8;
    w.id = 1;
    return w;
  }
  static losses::LossWeights default_phase2() {
    losses::LossWeights w;
    w.swap = 1.0;
    w.lpips = 0;
    w.adv_r = 0;
    w.adv_z = 0.1;
    w.recon = 0;
    w.id = 0;
    return w;
  }
  static Stage1Schedule standard() {
    Stage1Schedule s;
    s.phase1 = default_phase1();
    s.phase2 = default_phase2();
    return s;
  }
  // same shape scaled down, preserving the 150k/170k phase split
  static Stage1Schedule toy(std::int64_t total = 200, int batch_size = 4) {
    Stage1Schedule s = standard();
    s.total_iterations = total;
    s.phase_boundary = total * 150000 / 170000;
    s.batch_size = batch_size;
    return s;
  }
};

void to_json(nlohmann::json& j, const Stage1Schedule& s);
void from_json(const nlohmann::json& j, Stage1Schedule& s);

losses::LossWeights weights_at(const Stage1Schedule& s, std::int64_t iteration);

struct LossReport {
  std::int64_t iteration = 0;
  std::vector<std::pair<std::string, double>> generator;  // active terms only
  double generator_total = 0;
  std::vector<std::pair<std::string, double>> critic;  // per-stream critic losses
  double critic_total = 0;

  bool has(const std::string& name) const {
    for (const auto& [k, v] : generator)
      if (k == name) return true;
    return false;
  }
  double term(const std::string& name) const {
    for (const auto& [k, v] : generator)
      if (k == name) return v;
    throw Error("report has no term " + name);
  }
};

// Alternating min/max trainer over the style dataset. One step = one critic
// update followed by one generator (E, D, M) update.
class Trainer {
 public:
  Trainer(const model::PipelineConfig& cfg, const Stage1Schedule& sched, std::uint64_t seed);
  // resume / preloaded-model path
  Trainer(model::Model<float> m, const Stage1Schedule& sched, std::uint64_t seed,
          std::int64_t iteration);

  LossReport step(const Tensor<float>& y, const Tensor<float>& z, const Tensor<float>& y_prime);

  model::Model<float>& model() { return m_; }
  const model::Model<float>& model() const { return m_; }
  const Stage1Schedule& schedule() const { return sched_; }
  std::uint64_t seed() const { return seed_; }
  std::int64_t iteration() const { return it_; }
  optim::Adam<float>& gen_opt() { return gen_opt_; }
  optim::Adam<float>& critic_opt() { return critic_opt_; }
  const optim::Adam<float>& gen_opt() const { return gen_opt_; }
  const optim::Adam<float>& critic_opt() const { return critic_opt_; }

 private:
  model::Model<float> m_;
  Stage1Schedule sched_;
  std::uint64_t seed_ = 0;
  optim::Adam<float> gen_opt_, critic_opt_;
  std::int64_t it_ = 0;
};

struct RunHooks {
  std::function<void(const LossReport&)> on_report;
  std::function<void(const Trainer&)> on_checkpoint;  // cadence boundaries + final iteration
};

// Draws per-iteration batches/noise and advances the trainer to
// `schedule.total_iterations`. The style dataset is the only data source.
void run(Trainer& t, const data::ImageDataset& style, const RunHooks& hooks = {});

// Fresh model, full run. The returned model plus a manifest is the package;
// callers persist it (see persist::save_package).
model::Model<float> encapsulate(const data::ImageDataset& style, const model::PipelineConfig& cfg,
                                const Stage1Schedule& sched, std::uint64_t seed,
                                const RunHooks& hooks = {});

// Per-iteration input draws (exposed so tests can replay single steps).
Tensor<float> draw_noise(const model::PipelineConfig& cfg, int batch, std::uint64_t seed,
                         std::int64_t iteration);

// Checkpoint = package layout + optimizer moments + iteration. Resuming and
// continuing reproduces an uninterrupted run bitwise.
void save_checkpoint(const Trainer& t, const std::string& dir);
Trainer load_checkpoint(const std::string& dir);

}  // namespace modify::stage1
