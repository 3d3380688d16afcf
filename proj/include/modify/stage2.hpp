#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "modify/data.hpp"
#include "modify/losses.hpp"
#include "modify/model.hpp"
#include "modify/optim.hpp"
#include "modify/persist.hpp"

namespace modify::stage2 {

enum class Mode { Offline, Online, TestTime };

const char* to_string(Mode m);
Mode mode_from_string(const std::string& s);

struct StylizeConfig {
  Mode mode = Mode::Offline;
  std::int64_t steps = 20000;  // 50 in test-time mode
  int batch_size = 4;          // forced to 1 in online mode
  losses::LossWeights weights;
  optim::AdamConfig optimizer;
  bool critic_warm_start = true;  // from the package critic when present
  bool reset_per_input = true;    // test-time: fresh encoder clone per input

  static losses::LossWeights default_weights() {
    losses::LossWeights w;
    w.recon = 0.5;
    w.lpips = 0.8;
    w.id = 1;
    w.adv_x = 0.01;
    return w;
  }
  static StylizeConfig defaults(Mode m) {
    StylizeConfig c;
    c.mode = m;
    c.weights = default_weights();
    if (m == Mode::TestTime) {
      c.steps = 50;
      c.batch_size = 1;
    }
    if (m == Mode::Online) c.batch_size = 1;
    return c;
  }
  void validate() const {
    weights.validate();
    optimizer.validate();
    if (steps < 1 || batch_size < 1) throw ConfigError("stylize: bad steps/batch config");
    if (mode == Mode::Online && batch_size != 1)
      throw ConfigError("stylize: online mode requires batch size 1");
  }
};

void to_json(nlohmann::json& j, const StylizeConfig& c);
void from_json(const nlohmann::json& j, StylizeConfig& c);

// Two weight-identical encoders from a package: the frozen copy provides the
// pseudo ground truth, the trainable one adapts to the source domain.
std::pair<nets::Encoder<float>, nets::Encoder<float>> clone_encoder(const persist::LoadedPackage& pkg);

// Adaptation state. model.encoder is E' (trainable); decoder and remapper are
// frozen; the critic trains against the frozen pipeline's outputs.
struct Session {
  model::Model<float> model;
  nets::Encoder<float> encoder_frozen;
  StylizeConfig cfg;
  std::uint64_t seed = 0;
  std::int64_t iteration = 0;
  optim::Adam<float> enc_opt, critic_opt;
};

Session make_session(const persist::LoadedPackage& pkg, const StylizeConfig& cfg, std::uint64_t seed);

struct StepReport {
  std::int64_t iteration = 0;
  std::vector<std::pair<std::string, double>> generator;
  double generator_total = 0;
  double critic_loss = 0;
  bool critic_updated = false;
};

StepReport step(Session& s, const Tensor<float>& x);

struct RunHooks {
  std::function<void(const StepReport&)> on_report;
  std::function<void(const Session&)> on_checkpoint;
};

// offline: seeded shuffled batches; online: arrival order, batch 1
Session stylize_offline(const persist::LoadedPackage& pkg, const data::ImageDataset& source,
                        const StylizeConfig& cfg, std::uint64_t seed, const RunHooks& hooks = {});
Session stylize_online(const persist::LoadedPackage& pkg, const data::ImageDataset& source_stream,
                       const StylizeConfig& cfg, std::uint64_t seed, const RunHooks& hooks = {});

// exactly cfg.steps updates on the single image, then one forward pass
std::pair<Session, Tensor<float>> stylize_test_time(const persist::LoadedPackage& pkg,
                                                    const Tensor<float>& image,
                                                    const StylizeConfig& cfg, std::uint64_t seed);

// inference helpers (no gradients, no weight changes)
Tensor<float> stylize_forward(const model::Model<float>& m, const Tensor<float>& x);
std::vector<Tensor<float>> sample_multimodal(const model::Model<float>& m, const Tensor<float>& x,
                                             const std::vector<std::uint64_t>& noise_seeds);

void save_checkpoint(const Session& s, const std::string& dir);
Session load_checkpoint(const std::string& dir);

// Adapted deliverable: same package layout, encoder slot holds E'.
void save_adapted_package(const Session& s, const std::string& dir, nlohmann::json extras = {});

}  // namespace modify::stage2
