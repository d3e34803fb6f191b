#pragma once

#include <cstddef>
#include <utility>

#include "lingua/autodiff/tensor.hpp"

// Ways of injecting a language id into the acoustic model. Frames are
// [T x d] tensors for a single utterance.
namespace lingua::cond {

// frames + emb[lang]
ad::Tensor condition_add(const ad::Tensor& frames, int lang, const ad::Tensor& emb);

// Per frame: s_f = v . tanh(W x_t), s_l = v . tanh(W e); weights are the
// softmax of (s_f, s_l); output w_f x_t + w_l e.  W is [d x d] applied as
// x W, v is [d x 1].
ad::Tensor condition_attention(const ad::Tensor& frames, int lang, const ad::Tensor& emb, const ad::Tensor& w,
                               const ad::Tensor& v);

// Appends [0..1..0] of width num_langs to every input frame.
ad::Tensor concat_onehot(const ad::Tensor& features, int lang, std::size_t num_langs);
// Appends emb[lang] to every input frame.
ad::Tensor concat_embedding(const ad::Tensor& features, int lang, const ad::Tensor& emb);

// emb is [K x (count*d)]; returns the `count` prompt rows [count x d] of lang.
ad::Tensor prompt_tokens(const ad::Tensor& emb, int lang, std::size_t count, std::size_t d_model);

enum class PromptPosition { prefix, suffix, both };

struct PromptedSequence {
  ad::Tensor sequence;
  std::size_t acoustic_begin = 0;
  std::size_t acoustic_frames = 0;
};

// emb row holds num_prompt tokens per side (two sides for `both`, prefix
// tokens first).
PromptedSequence attach_prompts(const ad::Tensor& frames, int lang, const ad::Tensor& emb, std::size_t num_prompt,
                                PromptPosition position);

// Prefix tuning encoder output for one language, [num_layers*2*num_prompt x d]:
// row block 2l holds layer l keys, block 2l+1 its values.
ad::Tensor prefix_table(int lang, const ad::Tensor& emb, const ad::Tensor& proj_w, const ad::Tensor& proj_b,
                        std::size_t num_layers, std::size_t num_prompt, std::size_t d_model);

// (keys, values), each [num_prompt x d], for one layer.
std::pair<ad::Tensor, ad::Tensor> prefix_kv(const ad::Tensor& table, std::size_t layer, std::size_t num_prompt);

struct FlAdapterOutput {
  ad::Tensor hidden;
  ad::Tensor lid_logits;  // [T x (K+1)]
};

// z = h Wd + bd; h' = h + z Wu + bu.  No nonlinearity between the two.
FlAdapterOutput fl_adapter(const ad::Tensor& hidden, const ad::Tensor& down_w, const ad::Tensor& down_b,
                           const ad::Tensor& up_w, const ad::Tensor& up_b);

// x + relu(x Wd + bd) Wu + bu
ad::Tensor residual_adapter(const ad::Tensor& x, const ad::Tensor& down_w, const ad::Tensor& down_b,
                            const ad::Tensor& up_w, const ad::Tensor& up_b);

}  // namespace lingua::cond
