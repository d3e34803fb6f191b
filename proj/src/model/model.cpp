#include "lingua/model/model.hpp"

#include <cmath>
#include <limits>
#include <mutex>

#include "lingua/autodiff/ops.hpp"
#include "lingua/util/config_file.hpp"

namespace lingua::model {

using ad::Tensor;

Tensor positional_encoding(std::size_t length, std::size_t d_model) {
  std::vector<double> v(length * d_model);
  for (std::size_t t = 0; t < length; ++t) {
    for (std::size_t i = 0; i < d_model; i += 2) {
      const double angle = static_cast<double>(t) / std::pow(10000.0, static_cast<double>(i) / d_model);
      v[t * d_model + i] = std::sin(angle);
      if (i + 1 < d_model) v[t * d_model + i + 1] = std::cos(angle);
    }
  }
  return Tensor::from({length, d_model}, std::move(v));
}

Model::Model(ModelConfig cfg, ParamMap params) : cfg_(std::move(cfg)), params_(std::move(params)) {
  const auto shapes = parameter_shapes(cfg_);
  for (const auto& [name, shape] : shapes) {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::invalid_argument("missing parameter " + name);
    if (it->second.shape() != shape) {
      throw ad::DimensionError("parameter " + name + " has shape " + ad::shape_string(it->second.shape()) +
                               ", config expects " + ad::shape_string(shape));
    }
  }
  for (const auto& [name, t] : params_) {
    if (!shapes.count(name)) throw std::invalid_argument("unexpected parameter " + name + " for mode " + mode_name(cfg_.mode));
  }
}

const Tensor& Model::param(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("no parameter named " + name);
  return it->second;
}

Tensor Model::conv_frontend(const Tensor& features) const {
  if (features.rank() != 2 || features.dim(1) != cfg_.frontend_input_dim()) {
    throw ad::DimensionError("front-end expects [T x " + std::to_string(cfg_.frontend_input_dim()) + "], got " +
                             ad::shape_string(features.shape()));
  }
  if (features.dim(0) < cfg_.subsample_factor()) {
    throw ad::DimensionError("utterance of " + std::to_string(features.dim(0)) + " frames is shorter than the subsampling factor " +
                             std::to_string(cfg_.subsample_factor()));
  }
  auto block = [&](const Tensor& x, std::size_t stride, const char* name) {
    const std::string p = std::string("frontend.") + name;
    const auto patches = ad::frame_stack(x, ModelConfig::kernel, stride);
    return ad::relu(ad::add_row(ad::matmul(patches, param(p + ".w")), param(p + ".b")));
  };
  const auto h = block(block(features, ModelConfig::stride1, "conv1"), ModelConfig::stride2, "conv2");
  return ad::add_row(ad::matmul(h, param("frontend.proj.w")), param("frontend.proj.b"));
}

Tensor Model::encoder_layer(const Tensor& x, std::size_t layer, const Tensor* prefix_keys, const Tensor* prefix_values,
                            bool mask_prefix) const {
  const std::string p = "encoder.layer" + std::to_string(layer) + ".";
  const std::size_t d = cfg_.d_model, H = cfg_.n_head, dh = d / H;
  auto linear = [&](const Tensor& in, const std::string& w, const std::string& b) {
    return ad::add_row(ad::matmul(in, param(p + w)), param(p + b));
  };

  const auto a = ad::layer_norm(x, param(p + "ln1.gain"), param(p + "ln1.bias"), ModelConfig::ln_eps);
  const auto q = linear(a, "attn.wq", "attn.bq");
  auto k = linear(a, "attn.wk", "attn.bk");
  auto v = linear(a, "attn.wv", "attn.bv");
  std::vector<std::uint8_t> keep;
  if (prefix_keys != nullptr) {
    const std::size_t np = prefix_keys->rows();
    k = ad::concat({*prefix_keys, k}, 0);
    v = ad::concat({mask_prefix ? ad::scale(*prefix_values, 0.0) : *prefix_values, v}, 0);
    if (mask_prefix) {
      keep.assign(k.rows(), 1);
      std::fill_n(keep.begin(), np, 0);
    }
  }
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> heads;
  heads.reserve(H);
  for (std::size_t h = 0; h < H; ++h) {
    const auto qh = ad::slice(q, 1, h * dh, (h + 1) * dh);
    const auto kh = ad::slice(k, 1, h * dh, (h + 1) * dh);
    const auto vh = ad::slice(v, 1, h * dh, (h + 1) * dh);
    auto scores = ad::scale(ad::matmul(qh, ad::transpose(kh)), inv);
    if (!keep.empty()) scores = ad::masked_fill_cols(scores, keep, -std::numeric_limits<double>::infinity());
    heads.push_back(ad::matmul(ad::softmax(scores), vh));
  }
  const auto attn = H == 1 ? heads[0] : ad::concat(heads, 1);
  const auto x1 = ad::add(x, linear(attn, "attn.wo", "attn.bo"));

  const auto b = ad::layer_norm(x1, param(p + "ln2.gain"), param(p + "ln2.bias"), ModelConfig::ln_eps);
  const auto f = linear(ad::relu(linear(b, "ffn.w1", "ffn.b1")), "ffn.w2", "ffn.b2");
  auto out = ad::add(x1, f);
  if (cfg_.adapter_dim > 0) {
    out = cond::residual_adapter(out, param(p + "adapter.down.w"), param(p + "adapter.down.b"),
                                 param(p + "adapter.up.w"), param(p + "adapter.up.b"));
  }
  return out;
}

Tensor Model::ctc_head(const Tensor& hidden) const {
  const auto n = ad::layer_norm(hidden, param("encoder.final_ln.gain"), param("encoder.final_ln.bias"),
                                ModelConfig::ln_eps);
  return ad::log_softmax(ad::add_row(ad::matmul(n, param("ctc_head.w")), param("ctc_head.b")));
}

ModelOutput Model::forward(const Tensor& features, int lang, const ForwardOptions& opt) const {
  if (cfg_.needs_lang()) {
    if (lang < 0) throw std::invalid_argument("mode requires language id (mode " + mode_name(cfg_.mode) + ")");
    if (static_cast<std::size_t>(lang) >= cfg_.num_langs) {
      throw std::out_of_range("language id " + std::to_string(lang) + " outside " + std::to_string(cfg_.num_langs) +
                              " languages");
    }
  }
  Tensor x = features;
  if (cfg_.mode == Mode::concat_onehot) x = cond::concat_onehot(x, lang, cfg_.num_langs);
  if (cfg_.mode == Mode::concat_emb) x = cond::concat_embedding(x, lang, param("cond.concat_emb"));

  Tensor h = conv_frontend(x);
  const std::size_t frames = h.rows();
  if (cfg_.mode == Mode::add) h = cond::condition_add(h, lang, param("cond.lang_emb"));
  if (cfg_.mode == Mode::attention) {
    h = cond::condition_attention(h, lang, param("cond.lang_emb"), param("cond.attn.w"), param("cond.attn.v"));
  }
  std::size_t begin = 0;
  if (cfg_.uses_prompts()) {
    auto seq = cond::attach_prompts(h, lang, param("prompt.emb"), cfg_.num_prompt, cfg_.effective_prompt_position());
    h = seq.sequence;
    begin = seq.acoustic_begin;
  }
  h = ad::add(h, positional_encoding(h.rows(), cfg_.d_model));

  Tensor table;
  if (cfg_.uses_prefix()) {
    table = cond::prefix_table(lang, param("prefix.emb"), param("prefix.proj.w"), param("prefix.proj.b"),
                               cfg_.num_layers, cfg_.num_prompt, cfg_.d_model);
  }
  auto acoustic = [&](const Tensor& t) { return t.rows() == frames ? t : ad::slice(t, 0, begin, begin + frames); };

  ModelOutput out;
  out.acoustic_frames = frames;
  for (std::size_t l = 0; l < cfg_.num_layers; ++l) {
    if (cfg_.uses_prefix()) {
      const auto [pk, pv] = cond::prefix_kv(table, l, cfg_.num_prompt);
      h = encoder_layer(h, l, &pk, &pv, opt.neutral_prefix);
    } else {
      h = encoder_layer(h, l, nullptr, nullptr, false);
    }
    if (cfg_.has_fl_adapter() && l + 1 == cfg_.fl_adapter_layer) {
      auto fl = cond::fl_adapter(h, param("fl_adapter.down.w"), param("fl_adapter.down.b"), param("fl_adapter.up.w"),
                                 param("fl_adapter.up.b"));
      h = fl.hidden;
      out.lid_logits = acoustic(fl.lid_logits);
    }
  }
  out.hidden = acoustic(h);
  out.log_probs = ctc_head(out.hidden);
  return out;
}

}  // namespace lingua::model
