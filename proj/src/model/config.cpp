#include <algorithm>
#include <cmath>
#include <random>

#include "lingua/model/model.hpp"
#include "lingua/util/config_file.hpp"

namespace lingua::model {

namespace {

const std::vector<std::pair<Mode, std::string>>& mode_table() {
  static const std::vector<std::pair<Mode, std::string>> table{
      {Mode::baseline, "baseline"},           {Mode::add, "add"},
      {Mode::attention, "attention"},         {Mode::concat_onehot, "concat-onehot"},
      {Mode::concat_emb, "concat-emb"},       {Mode::prompt_prefix, "prompt-prefix"},
      {Mode::prompt_suffix, "prompt-suffix"}, {Mode::prompt_both, "prompt-both"},
      {Mode::prefix_tuning, "prefix-tuning"}, {Mode::fl_adapter_ce, "fl-adapter-ce"},
      {Mode::fl_adapter_ctc, "fl-adapter-ctc"}, {Mode::peft_prompt, "peft-prompt"},
      {Mode::peft_prefix, "peft-prefix"},
  };
  return table;
}

std::string position_name(cond::PromptPosition p) {
  switch (p) {
    case cond::PromptPosition::prefix:
      return "prefix";
    case cond::PromptPosition::suffix:
      return "suffix";
    case cond::PromptPosition::both:
      return "both";
  }
  return "suffix";
}

std::size_t positive(const util::ConfigFile& cfg, const std::string& key, std::size_t fallback, bool allow_zero = false) {
  const long v = cfg.get_int_or(key, static_cast<long>(fallback));
  if (v < 0 || (!allow_zero && v == 0)) throw util::ConfigError("key '" + key + "' must be a positive integer");
  return static_cast<std::size_t>(v);
}

}  // namespace

std::string mode_name(Mode m) {
  for (const auto& [mode, name] : mode_table()) {
    if (mode == m) return name;
  }
  return "baseline";
}

Mode parse_mode(const std::string& s) {
  for (const auto& [mode, name] : mode_table()) {
    if (name == s) return mode;
  }
  std::string known;
  for (const auto& [mode, name] : mode_table()) known += (known.empty() ? "" : ", ") + name;
  throw util::ConfigError("unknown mode '" + s + "' (known: " + known + ")");
}

const std::vector<Mode>& all_modes() {
  static const std::vector<Mode> modes = [] {
    std::vector<Mode> m;
    for (const auto& e : mode_table()) m.push_back(e.first);
    return m;
  }();
  return modes;
}

bool ModelConfig::has_fl_adapter() const {
  return mode == Mode::fl_adapter_ce || mode == Mode::fl_adapter_ctc || is_peft();
}

bool ModelConfig::uses_prompts() const {
  return mode == Mode::prompt_prefix || mode == Mode::prompt_suffix || mode == Mode::prompt_both ||
         mode == Mode::peft_prompt;
}

obj::LidLoss ModelConfig::effective_lid_loss() const {
  if (mode == Mode::fl_adapter_ce) return obj::LidLoss::ce;
  if (mode == Mode::fl_adapter_ctc) return obj::LidLoss::ctc;
  return lid_loss;
}

cond::PromptPosition ModelConfig::effective_prompt_position() const {
  switch (mode) {
    case Mode::prompt_prefix:
      return cond::PromptPosition::prefix;
    case Mode::prompt_suffix:
      return cond::PromptPosition::suffix;
    case Mode::prompt_both:
      return cond::PromptPosition::both;
    default:
      return prompt_position;
  }
}

std::size_t ModelConfig::prompt_rows() const {
  if (!uses_prompts()) return 0;
  return num_prompt * (effective_prompt_position() == cond::PromptPosition::both ? 2 : 1);
}

std::size_t ModelConfig::frontend_input_dim() const {
  if (mode == Mode::concat_onehot) return feat_dim + num_langs;
  if (mode == Mode::concat_emb) return feat_dim + lang_emb_dim;
  return feat_dim;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw util::ConfigError("model config: " + m); };
  if (d_model == 0 || n_head == 0 || d_model % n_head != 0) fail("d_model must be a positive multiple of n_head");
  if (d_ffn == 0 || feat_dim == 0 || frontend_channels == 0) fail("d_ffn, feat_dim and frontend_channels must be positive");
  if (vocab_size == 0) fail("vocab_size must be positive");
  if (num_langs == 0) fail("num_langs must be positive");
  if (has_fl_adapter() && (fl_adapter_layer < 1 || fl_adapter_layer + 1 > num_layers)) {
    fail("fl_adapter_layer must lie in [1, num_layers - 1], got " + std::to_string(fl_adapter_layer));
  }
  if ((uses_prompts() || uses_prefix()) && num_prompt == 0) fail("num_prompt must be at least 1");
  if (uses_prefix() && prompt_emb_dim == 0) fail("prompt_emb_dim must be positive");
  if (mode == Mode::concat_emb && lang_emb_dim == 0) fail("lang_emb_dim must be positive");
  if (!(alpha >= 0.0)) fail("alpha must be non-negative");
}

void ModelConfig::write(util::ConfigFile& cfg, const std::string& s) const {
  cfg.set(s + ".mode", mode_name(mode));
  cfg.set(s + ".num_layers", std::to_string(num_layers));
  cfg.set(s + ".d_model", std::to_string(d_model));
  cfg.set(s + ".d_ffn", std::to_string(d_ffn));
  cfg.set(s + ".n_head", std::to_string(n_head));
  cfg.set(s + ".feat_dim", std::to_string(feat_dim));
  cfg.set(s + ".vocab_size", std::to_string(vocab_size));
  cfg.set(s + ".num_langs", std::to_string(num_langs));
  cfg.set(s + ".frontend_channels", std::to_string(frontend_channels));
  cfg.set(s + ".fl_adapter_layer", std::to_string(fl_adapter_layer));
  cfg.set(s + ".adapter_dim", std::to_string(adapter_dim));
  cfg.set(s + ".num_prompt", std::to_string(num_prompt));
  cfg.set(s + ".prompt_position", position_name(prompt_position));
  cfg.set(s + ".prompt_emb_dim", std::to_string(prompt_emb_dim));
  cfg.set(s + ".lang_emb_dim", std::to_string(lang_emb_dim));
  cfg.set(s + ".alpha", util::format_double(alpha));
  cfg.set(s + ".lid_loss", effective_lid_loss() == obj::LidLoss::ce ? "ce" : "ctc");
}

ModelConfig ModelConfig::read(const util::ConfigFile& cfg, const std::string& s) {
  ModelConfig m;
  m.mode = parse_mode(cfg.get_or(s + ".mode", "baseline"));
  m.num_layers = positive(cfg, s + ".num_layers", m.num_layers, true);
  m.d_model = positive(cfg, s + ".d_model", m.d_model);
  m.d_ffn = positive(cfg, s + ".d_ffn", m.d_ffn);
  m.n_head = positive(cfg, s + ".n_head", m.n_head);
  m.feat_dim = positive(cfg, s + ".feat_dim", m.feat_dim);
  m.vocab_size = positive(cfg, s + ".vocab_size", m.vocab_size);
  m.num_langs = positive(cfg, s + ".num_langs", m.num_langs);
  m.frontend_channels = positive(cfg, s + ".frontend_channels", m.d_model);
  m.fl_adapter_layer = positive(cfg, s + ".fl_adapter_layer", m.num_layers / 2, true);
  m.adapter_dim = positive(cfg, s + ".adapter_dim", 0, true);
  m.num_prompt = positive(cfg, s + ".num_prompt", 1);
  const auto pos = cfg.get_or(s + ".prompt_position", "suffix");
  if (pos == "prefix") {
    m.prompt_position = cond::PromptPosition::prefix;
  } else if (pos == "suffix") {
    m.prompt_position = cond::PromptPosition::suffix;
  } else if (pos == "both") {
    m.prompt_position = cond::PromptPosition::both;
  } else {
    throw util::ConfigError("prompt_position must be prefix, suffix or both, got '" + pos + "'");
  }
  m.prompt_emb_dim = positive(cfg, s + ".prompt_emb_dim", m.prompt_emb_dim);
  m.lang_emb_dim = positive(cfg, s + ".lang_emb_dim", m.lang_emb_dim);
  m.alpha = cfg.get_double_or(s + ".alpha", m.mode == Mode::fl_adapter_ce ? 0.2 : 0.5);
  const auto lid = cfg.get_or(s + ".lid_loss", m.mode == Mode::fl_adapter_ce ? "ce" : "ctc");
  if (lid != "ce" && lid != "ctc") throw util::ConfigError("lid_loss must be ce or ctc, got '" + lid + "'");
  m.lid_loss = lid == "ce" ? obj::LidLoss::ce : obj::LidLoss::ctc;
  if ((m.mode == Mode::fl_adapter_ce && m.lid_loss != obj::LidLoss::ce) ||
      (m.mode == Mode::fl_adapter_ctc && m.lid_loss != obj::LidLoss::ctc)) {
    throw util::ConfigError("lid_loss '" + lid + "' contradicts mode " + mode_name(m.mode));
  }
  m.validate();
  return m;
}

ModelConfig ModelConfig::peft_from_base(Mode tuner, std::size_t prompts, std::size_t adapter) const {
  if (mode != Mode::fl_adapter_ce && mode != Mode::fl_adapter_ctc) {
    throw util::ConfigError("parameter-efficient fine-tuning needs an fl-adapter base, got mode " + mode_name(mode));
  }
  if (tuner != Mode::peft_prompt && tuner != Mode::peft_prefix) {
    throw util::ConfigError("fine-tuning mode must be peft-prompt or peft-prefix, got " + mode_name(tuner));
  }
  ModelConfig out = *this;
  out.lid_loss = effective_lid_loss();
  out.mode = tuner;
  out.num_prompt = prompts;
  out.adapter_dim = adapter;
  out.validate();
  return out;
}

std::map<std::string, ad::Shape> parameter_shapes(const ModelConfig& c) {
  c.validate();
  std::map<std::string, ad::Shape> s;
  const std::size_t d = c.d_model, C = c.frontend_channels, k = ModelConfig::kernel, K = c.num_langs;
  s["frontend.conv1.w"] = {k * c.frontend_input_dim(), C};
  s["frontend.conv1.b"] = {C};
  s["frontend.conv2.w"] = {k * C, C};
  s["frontend.conv2.b"] = {C};
  s["frontend.proj.w"] = {C, d};
  s["frontend.proj.b"] = {d};
  for (std::size_t l = 0; l < c.num_layers; ++l) {
    const std::string p = "encoder.layer" + std::to_string(l) + ".";
    for (const char* ln : {"ln1", "ln2"}) {
      s[p + ln + ".gain"] = {d};
      s[p + ln + ".bias"] = {d};
    }
    for (const char* m : {"q", "k", "v", "o"}) {
      s[p + "attn.w" + m] = {d, d};
      s[p + "attn.b" + m] = {d};
    }
    s[p + "ffn.w1"] = {d, c.d_ffn};
    s[p + "ffn.b1"] = {c.d_ffn};
    s[p + "ffn.w2"] = {c.d_ffn, d};
    s[p + "ffn.b2"] = {d};
    if (c.adapter_dim > 0) {
      s[p + "adapter.down.w"] = {d, c.adapter_dim};
      s[p + "adapter.down.b"] = {c.adapter_dim};
      s[p + "adapter.up.w"] = {c.adapter_dim, d};
      s[p + "adapter.up.b"] = {d};
    }
  }
  s["encoder.final_ln.gain"] = {d};
  s["encoder.final_ln.bias"] = {d};
  s["ctc_head.w"] = {d, c.output_classes()};
  s["ctc_head.b"] = {c.output_classes()};

  switch (c.mode) {
    case Mode::add:
      s["cond.lang_emb"] = {K, d};
      break;
    case Mode::attention:
      s["cond.lang_emb"] = {K, d};
      s["cond.attn.w"] = {d, d};
      s["cond.attn.v"] = {d, 1};
      break;
    case Mode::concat_emb:
      s["cond.concat_emb"] = {K, c.lang_emb_dim};
      break;
    default:
      break;
  }
  if (c.uses_prompts()) s["prompt.emb"] = {K, c.prompt_rows() * d};
  if (c.uses_prefix()) {
    const std::size_t width = c.num_layers * 2 * c.num_prompt * d;
    s["prefix.emb"] = {K, c.prompt_emb_dim};
    s["prefix.proj.w"] = {c.prompt_emb_dim, width};
    s["prefix.proj.b"] = {width};
  }
  if (c.has_fl_adapter()) {
    s["fl_adapter.down.w"] = {d, K + 1};
    s["fl_adapter.down.b"] = {K + 1};
    s["fl_adapter.up.w"] = {K + 1, d};
    s["fl_adapter.up.b"] = {d};
  }
  return s;
}

std::size_t parameter_count(const ModelConfig& c) {
  c.validate();
  const std::size_t d = c.d_model, C = c.frontend_channels, k = ModelConfig::kernel, K = c.num_langs;
  const std::size_t V1 = c.output_classes(), a = c.adapter_dim;
  std::size_t n = k * c.frontend_input_dim() * C + C + k * C * C + C + C * d + d;
  const std::size_t layer = 4 * d + 4 * (d * d + d) + 2 * d * c.d_ffn + c.d_ffn + d + (a ? 2 * d * a + a + d : 0);
  n += c.num_layers * layer + 2 * d + d * V1 + V1;
  if (c.mode == Mode::add) n += K * d;
  if (c.mode == Mode::attention) n += K * d + d * d + d;
  if (c.mode == Mode::concat_emb) n += K * c.lang_emb_dim;
  if (c.uses_prompts()) n += K * c.prompt_rows() * d;
  if (c.uses_prefix()) {
    const std::size_t e = c.prompt_emb_dim, w = c.num_layers * 2 * c.num_prompt * d;
    n += K * e + e * w + w;
  }
  if (c.has_fl_adapter()) n += 2 * d * (K + 1) + (K + 1) + d;
  return n;
}

bool is_tuner_parameter(const std::string& name) {
  return name.rfind("prompt.", 0) == 0 || name.rfind("prefix.", 0) == 0 ||
         name.find(".adapter.") != std::string::npos;
}

ParamMap init_parameters(const ModelConfig& cfg, std::uint64_t seed) {
  ParamMap params;
  for (const auto& [name, shape] : parameter_shapes(cfg)) {
    const std::size_t n = ad::element_count(shape);
    std::vector<double> v(n, 0.0);
    auto ends_with = [&](const char* suffix) {
      const std::string s(suffix);
      return name.size() >= s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0;
    };
    const bool zero = name.find(".up.") != std::string::npos ||
                      (shape.size() == 1 && !ends_with(".gain"));  // biases, adapter up-projections
    if (ends_with(".gain")) {
      std::fill(v.begin(), v.end(), 1.0);
    } else if (!zero) {
      std::uint64_t h = 1469598103934665603ull;  // FNV-1a of the name
      for (unsigned char ch : name) h = (h ^ ch) * 1099511628211ull;
      std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                        static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
      std::mt19937_64 rng(seq);
      const bool table = name == "cond.lang_emb" || name == "cond.concat_emb" || name == "prompt.emb" ||
                         name == "prefix.emb";
      const double stddev = table ? 1.0 : 1.0 / std::sqrt(static_cast<double>(shape[0]));
      std::normal_distribution<double> normal(0.0, stddev);
      for (auto& x : v) x = normal(rng);
    }
    params.emplace(name, ad::Tensor::from(shape, std::move(v), true));
  }
  return params;
}

std::size_t subsampled_length(std::size_t T, const ModelConfig&) {
  const std::size_t t1 = (T + ModelConfig::stride1 - 1) / ModelConfig::stride1;
  return (t1 + ModelConfig::stride2 - 1) / ModelConfig::stride2;
}

}  // namespace lingua::model
