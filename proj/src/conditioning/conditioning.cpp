#include "lingua/conditioning/conditioning.hpp"

#include <stdexcept>
#include <string>

#include "lingua/autodiff/ops.hpp"

namespace lingua::cond {

namespace {

ad::Tensor lang_row(const ad::Tensor& emb, int lang) {
  if (emb.rank() != 2) throw ad::DimensionError("language table must be [K x n]");
  if (lang < 0 || static_cast<std::size_t>(lang) >= emb.dim(0)) {
    throw std::out_of_range("language id " + std::to_string(lang) + " outside table of " +
                            std::to_string(emb.dim(0)) + " languages");
  }
  const int ids[1] = {lang};
  return ad::embedding(emb, ids);
}

}  // namespace

ad::Tensor condition_add(const ad::Tensor& frames, int lang, const ad::Tensor& emb) {
  return ad::add_row(frames, lang_row(emb, lang));
}

ad::Tensor condition_attention(const ad::Tensor& frames, int lang, const ad::Tensor& emb, const ad::Tensor& w,
                               const ad::Tensor& v) {
  const std::size_t T = frames.rows();
  const auto e = lang_row(emb, lang);
  const auto s_f = ad::matmul(ad::tanh(ad::matmul(frames, w)), v);             // [T x 1]
  const auto s_l = ad::repeat_rows(ad::matmul(ad::tanh(ad::matmul(e, w)), v), T);  // [T x 1]
  const auto weights = ad::softmax(ad::concat({s_f, s_l}, 1));                 // [T x 2]
  return ad::add(ad::mul_col(frames, ad::slice(weights, 1, 0, 1)),
                 ad::mul_col(ad::repeat_rows(e, T), ad::slice(weights, 1, 1, 2)));
}

ad::Tensor concat_onehot(const ad::Tensor& features, int lang, std::size_t num_langs) {
  if (lang < 0 || static_cast<std::size_t>(lang) >= num_langs) {
    throw std::out_of_range("language id " + std::to_string(lang) + " outside " + std::to_string(num_langs));
  }
  std::vector<double> code(num_langs, 0.0);
  code[lang] = 1.0;
  const auto row = ad::Tensor::from({1, num_langs}, std::move(code));
  return ad::concat({features, ad::repeat_rows(row, features.rows())}, 1);
}

ad::Tensor concat_embedding(const ad::Tensor& features, int lang, const ad::Tensor& emb) {
  return ad::concat({features, ad::repeat_rows(lang_row(emb, lang), features.rows())}, 1);
}

ad::Tensor prompt_tokens(const ad::Tensor& emb, int lang, std::size_t count, std::size_t d_model) {
  const auto row = lang_row(emb, lang);
  if (row.size() != count * d_model) {
    throw ad::DimensionError("prompt table width " + std::to_string(row.size()) + " != " + std::to_string(count) +
                             " x " + std::to_string(d_model));
  }
  return ad::reshape(row, {count, d_model});
}

PromptedSequence attach_prompts(const ad::Tensor& frames, int lang, const ad::Tensor& emb, std::size_t num_prompt,
                                PromptPosition position) {
  const std::size_t d = frames.cols(), T = frames.rows();
  const std::size_t sides = position == PromptPosition::both ? 2 : 1;
  const auto tokens = prompt_tokens(emb, lang, sides * num_prompt, d);
  PromptedSequence out;
  out.acoustic_frames = T;
  switch (position) {
    case PromptPosition::prefix:
      out.sequence = ad::concat({tokens, frames}, 0);
      out.acoustic_begin = num_prompt;
      break;
    case PromptPosition::suffix:
      out.sequence = ad::concat({frames, tokens}, 0);
      out.acoustic_begin = 0;
      break;
    case PromptPosition::both:
      out.sequence = ad::concat(
          {ad::slice(tokens, 0, 0, num_prompt), frames, ad::slice(tokens, 0, num_prompt, 2 * num_prompt)}, 0);
      out.acoustic_begin = num_prompt;
      break;
  }
  return out;
}

ad::Tensor prefix_table(int lang, const ad::Tensor& emb, const ad::Tensor& proj_w, const ad::Tensor& proj_b,
                        std::size_t num_layers, std::size_t num_prompt, std::size_t d_model) {
  const auto flat = ad::add_row(ad::matmul(lang_row(emb, lang), proj_w), proj_b);
  if (flat.size() != num_layers * 2 * num_prompt * d_model) {
    throw ad::DimensionError("prefix projection width " + std::to_string(flat.size()) + " does not split into " +
                             std::to_string(num_layers) + " layers x 2 x " + std::to_string(num_prompt) + " x " +
                             std::to_string(d_model));
  }
  return ad::reshape(flat, {num_layers * 2 * num_prompt, d_model});
}

std::pair<ad::Tensor, ad::Tensor> prefix_kv(const ad::Tensor& table, std::size_t layer, std::size_t num_prompt) {
  const std::size_t k0 = 2 * layer * num_prompt;
  if (k0 + 2 * num_prompt > table.rows()) throw std::out_of_range("prefix layer index out of range");
  return {ad::slice(table, 0, k0, k0 + num_prompt), ad::slice(table, 0, k0 + num_prompt, k0 + 2 * num_prompt)};
}

FlAdapterOutput fl_adapter(const ad::Tensor& hidden, const ad::Tensor& down_w, const ad::Tensor& down_b,
                           const ad::Tensor& up_w, const ad::Tensor& up_b) {
  FlAdapterOutput out;
  out.lid_logits = ad::add_row(ad::matmul(hidden, down_w), down_b);
  out.hidden = ad::add(hidden, ad::add_row(ad::matmul(out.lid_logits, up_w), up_b));
  return out;
}

ad::Tensor residual_adapter(const ad::Tensor& x, const ad::Tensor& down_w, const ad::Tensor& down_b,
                            const ad::Tensor& up_w, const ad::Tensor& up_b) {
  const auto h = ad::relu(ad::add_row(ad::matmul(x, down_w), down_b));
  return ad::add(x, ad::add_row(ad::matmul(h, up_w), up_b));
}

}  // namespace lingua::cond
