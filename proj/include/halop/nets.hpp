#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "halop/autodiff.hpp"
#include "halop/policy_dist.hpp"
#include "json.hpp"

namespace halop {

// Sequence encoder: `blocks` x [strided 1-D conv with a strided linear
// shortcut, then residual multi-head self-attention], followed by attentive
// pooling over time and a tanh projection.
struct EncoderConfig {
  int features = 21;
  int window = 16;
  int blocks = 2;
  int channels = 16;
  int kernel = 3;
  int stride = 2;
  int heads = 2;
  int pooled = 32;

  int total_stride() const;
  void validate() const;
};

struct HeadConfig {
  int hidden = 32;
  int private_width = 3;
  double sigma_min = 1e-3;
  double init_scale = 1.0;  // sigma at initialization
  double mean_gain = 0.01;  // output gain on the mean row of actor heads
};

struct NetworkConfig {
  EncoderConfig encoder;
  HeadConfig head;
  // Two-stage nets carry actor1, actor2 and critic2; single-stage nets carry
  // actor1 and critic1.
  bool two_stage = true;
  // Whether stage-1 heads also see the private state.
  bool stage1_private = false;

  void validate() const;
};

nlohmann::json to_json(const NetworkConfig& cfg);
NetworkConfig network_config_from_json(const nlohmann::json& j);

class PolicyNetwork {
public:
  PolicyNetwork(NetworkConfig cfg, std::uint64_t seed);

  const NetworkConfig& config() const noexcept { return cfg_; }
  std::uint64_t seed() const noexcept { return seed_; }
  ParameterStore& params() noexcept { return params_; }
  const ParameterStore& params() const noexcept { return params_; }

  bool has_head(const std::string& name) const { return params_.contains(name + ".w1"); }
  // Whether the stage's heads consume the private state.
  bool uses_private(int stage) const;

  struct GaussianVars {
    ad::Var mean;
    ad::Var scale;
  };

  // Tape-level forward passes. `window` is row-major (window x features).
  // Throws std::invalid_argument on shape mismatch, when the stage has no
  // such head, or when private state is missing/unexpected.
  ad::Var encode(ad::Tape& tape, std::span<const double> window);
  GaussianVars actor(ad::Tape& tape, int stage, ad::Var rep, std::span<const double> priv = {});
  ad::Var critic(ad::Tape& tape, int stage, ad::Var rep, std::span<const double> priv = {});

  // Plain forward passes on the current parameters.
  std::vector<double> encode(std::span<const double> window);
  GaussianParams actor_head(int stage, std::span<const double> rep, std::span<const double> priv = {});
  double critic_head(int stage, std::span<const double> rep, std::span<const double> priv = {});

private:
  void build();
  ad::Var head_input(ad::Tape& tape, int stage, ad::Var rep, std::span<const double> priv);
  ad::Var mlp(ad::Tape& tape, const std::string& name, ad::Var x);

  NetworkConfig cfg_;
  std::uint64_t seed_;
  ParameterStore params_;
};

// Versioned JSON checkpoint: config, seed, named parameter slices and an
// opaque `extra` object. Doubles are written in shortest round-trip form, so
// save/load is bit-exact.
void save_checkpoint(const std::filesystem::path& path, const PolicyNetwork& net, const nlohmann::json& extra = {});
std::string checkpoint_text(const PolicyNetwork& net, const nlohmann::json& extra = {});

struct LoadedCheckpoint {
  PolicyNetwork net;
  nlohmann::json extra;
};
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace halop
