#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "lingua/autodiff/tensor.hpp"
#include "lingua/conditioning/conditioning.hpp"
#include "lingua/objectives/objectives.hpp"

namespace lingua::util {
class ConfigFile;
}

namespace lingua::model {

enum class Mode {
  baseline,
  add,
  attention,
  concat_onehot,
  concat_emb,
  prompt_prefix,
  prompt_suffix,
  prompt_both,
  prefix_tuning,
  fl_adapter_ce,
  fl_adapter_ctc,
  peft_prompt,
  peft_prefix,
};

std::string mode_name(Mode m);
Mode parse_mode(const std::string& s);  // throws util::ConfigError
const std::vector<Mode>& all_modes();

struct ModelConfig {
  Mode mode = Mode::baseline;
  std::size_t num_layers = 4;
  std::size_t d_model = 64;
  std::size_t d_ffn = 128;
  std::size_t n_head = 4;
  std::size_t feat_dim = 80;
  std::size_t vocab_size = 256;
  std::size_t num_langs = 3;
  std::size_t frontend_channels = 64;
  std::size_t fl_adapter_layer = 2;
  std::size_t adapter_dim = 0;  // residual adapters, 0 = none
  std::size_t num_prompt = 1;
  cond::PromptPosition prompt_position = cond::PromptPosition::suffix;  // peft-prompt
  std::size_t prompt_emb_dim = 16;  // prefix tuning embedding width
  std::size_t lang_emb_dim = 16;    // concat-emb width
  double alpha = 0.5;
  obj::LidLoss lid_loss = obj::LidLoss::ctc;  // peft modes; fl modes imply it

  static constexpr std::size_t kernel = 3;
  static constexpr std::size_t stride1 = 2;
  static constexpr std::size_t stride2 = 3;
  static constexpr double ln_eps = 1e-5;

  std::size_t subsample_factor() const { return stride1 * stride2; }
  std::size_t output_classes() const { return vocab_size + 1; }
  int blank() const { return static_cast<int>(vocab_size); }
  std::size_t frontend_input_dim() const;

  bool has_fl_adapter() const;
  bool is_peft() const { return mode == Mode::peft_prompt || mode == Mode::peft_prefix; }
  bool uses_prompts() const;
  bool uses_prefix() const { return mode == Mode::prefix_tuning || mode == Mode::peft_prefix; }
  bool needs_lang() const { return mode != Mode::baseline && mode != Mode::fl_adapter_ce && mode != Mode::fl_adapter_ctc; }
  obj::LidLoss effective_lid_loss() const;
  cond::PromptPosition effective_prompt_position() const;
  std::size_t prompt_rows() const;  // extra sequence rows from prompt tuning

  void validate() const;  // throws util::ConfigError
  void write(util::ConfigFile& cfg, const std::string& section = "model") const;
  static ModelConfig read(const util::ConfigFile& cfg, const std::string& section = "model");
  // Same backbone and FL-Adapter with a tuner mode on top.
  ModelConfig peft_from_base(Mode tuner, std::size_t num_prompt, std::size_t adapter_dim) const;
};

// Shape of every parameter the config creates, by name.
std::map<std::string, ad::Shape> parameter_shapes(const ModelConfig& cfg);
// Closed-form count; equals the sum over parameter_shapes.
std::size_t parameter_count(const ModelConfig& cfg);
// Names trained during PEFT: prompt/prefix encoders and residual adapters.
bool is_tuner_parameter(const std::string& name);

using ParamMap = std::map<std::string, ad::Tensor>;

// Seeded init; each tensor's stream depends only on (seed, name), so two
// configs that share a parameter name also share its initial value.
ParamMap init_parameters(const ModelConfig& cfg, std::uint64_t seed);

ad::Tensor positional_encoding(std::size_t length, std::size_t d_model);

struct ForwardOptions {
  // Mask prefix keys and zero prefix values at every layer.
  bool neutral_prefix = false;
};

struct ModelOutput {
  ad::Tensor hidden;      // encoder output after the final layer norm, acoustic rows only
  ad::Tensor log_probs;   // [T' x (V+1)]
  std::optional<ad::Tensor> lid_logits;  // [T' x (K+1)], acoustic rows only
  std::size_t acoustic_frames = 0;
};

class Model {
 public:
  Model(ModelConfig cfg, ParamMap params);
  Model(ModelConfig cfg, std::uint64_t seed) : Model(cfg, init_parameters(cfg, seed)) {}

  const ModelConfig& config() const { return cfg_; }
  const ParamMap& params() const { return params_; }
  ParamMap& params() { return params_; }
  const ad::Tensor& param(const std::string& name) const;

  // features: [T x feat_dim]; lang < 0 means "no language given".
  ModelOutput forward(const ad::Tensor& features, int lang, const ForwardOptions& opt = {}) const;

  // Stages, exposed for tests.
  ad::Tensor conv_frontend(const ad::Tensor& features) const;
  ad::Tensor encoder_layer(const ad::Tensor& x, std::size_t layer, const ad::Tensor* prefix_keys,
                           const ad::Tensor* prefix_values, bool mask_prefix) const;
  ad::Tensor ctc_head(const ad::Tensor& hidden) const;

 private:
  ModelConfig cfg_;
  ParamMap params_;
};

std::size_t subsampled_length(std::size_t T, const ModelConfig& cfg);

}  // namespace lingua::model
