#include <cmath>
#include <random>

#include "doctest.h"
#include "lingua/autodiff/ops.hpp"
#include "lingua/model/model.hpp"
#include "lingua/util/config_file.hpp"
#include "support/gradcheck.hpp"
#include "support/reference_model.hpp"

using namespace lingua;
using ad::Tensor;
using model::Mode;
using model::ModelConfig;

namespace {

ModelConfig tiny(Mode mode = Mode::baseline) {
  ModelConfig c;
  c.mode = mode;
  c.num_layers = 2;
  c.d_model = 8;
  c.d_ffn = 12;
  c.n_head = 2;
  c.feat_dim = 5;
  c.vocab_size = 7;
  c.num_langs = 3;
  c.frontend_channels = 6;
  c.fl_adapter_layer = 1;
  c.prompt_emb_dim = 4;
  c.lang_emb_dim = 3;
  return c;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

// Copies every parameter that `dst` shares by name with `src`.
model::ParamMap share_backbone(const model::ParamMap& src, model::ParamMap dst) {
  for (auto& [name, t] : dst) {
    auto it = src.find(name);
    if (it != src.end() && it->second.shape() == t.shape()) t = it->second.clone();
  }
  return dst;
}

}  // namespace

TEST_CASE("subsampling length law") {
  ModelConfig c = tiny();
  model::Model m(c, 1);
  std::mt19937_64 rng(1);
  CHECK(m.conv_frontend(testing::random_tensor(rng, {60, 5})).rows() == 10);
  CHECK(m.conv_frontend(testing::random_tensor(rng, {6, 5})).rows() == 1);
  for (std::size_t T = 6; T <= 1000; ++T) {
    REQUIRE(model::subsampled_length(T, c) == (T + 5) / 6);
  }
  for (std::size_t T : {7u, 11u, 12u, 13u, 37u, 100u}) {
    CHECK(m.conv_frontend(testing::random_tensor(rng, {T, 5})).rows() == (T + 5) / 6);
  }
  CHECK_THROWS_AS(m.conv_frontend(testing::random_tensor(rng, {5, 5})), ad::DimensionError);
  CHECK_THROWS_AS(m.conv_frontend(testing::random_tensor(rng, {8, 4})), ad::DimensionError);
}

TEST_CASE("positional encoding") {
  auto pe = model::positional_encoding(50, 16);
  for (std::size_t i = 0; i < 16; ++i) CHECK(pe.at(0, i) == (i % 2 == 0 ? 0.0 : 1.0));
  for (double v : pe.values()) CHECK(std::abs(v) <= 1.0);
  for (std::size_t t : {1u, 7u, 49u}) {
    for (std::size_t i = 0; i < 8; ++i) {
      const double angle = t / std::pow(10000.0, 2.0 * i / 16.0);
      CHECK(pe.at(t, 2 * i) == doctest::Approx(std::sin(angle)).epsilon(1e-15));
      CHECK(pe.at(t, 2 * i + 1) == doctest::Approx(std::cos(angle)).epsilon(1e-15));
    }
  }
}

TEST_CASE("baseline forward matches the straight-line reference") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 4; ++trial) {
    ModelConfig c = tiny();
    c.n_head = trial % 2 ? 4 : 2;
    model::Model m(c, 100 + trial);
    const std::size_t T = 13 + 7 * trial;
    auto feats = testing::random_tensor(rng, {T, c.feat_dim});
    auto out = m.forward(feats, -1);
    auto ref = testing::reference_encoder(c, m.params(),
                                          testing::to_mat({feats.values().begin(), feats.values().end()}, T, c.feat_dim));
    auto ref_lp = testing::reference_log_probs(m.params(), ref);
    REQUIRE(out.hidden.rows() == ref.size());
    double worst = 0;
    for (std::size_t t = 0; t < ref.size(); ++t) {
      for (std::size_t i = 0; i < c.d_model; ++i) worst = std::max(worst, std::abs(out.hidden.at(t, i) - ref[t][i]));
      for (std::size_t v = 0; v < c.output_classes(); ++v) {
        worst = std::max(worst, std::abs(out.log_probs.at(t, v) - ref_lp[t][v]));
      }
    }
    CHECK(worst < 1e-10);
  }
}

TEST_CASE("zero layers leave the encoder input unchanged") {
  ModelConfig c = tiny();
  c.num_layers = 0;
  model::Model m(c, 3);
  std::mt19937_64 rng(2);
  auto feats = testing::random_tensor(rng, {20, c.feat_dim});
  auto front = ad::add(m.conv_frontend(feats), model::positional_encoding(4, c.d_model));
  CHECK(max_abs_diff(m.forward(feats, -1).hidden, front) == 0.0);
}

TEST_CASE("ctc head") {
  ModelConfig c = tiny();
  model::Model m(c, 4);
  std::mt19937_64 rng(3);
  auto h = testing::random_tensor(rng, {5, c.d_model});
  auto lp = m.ctc_head(h);
  for (std::size_t t = 0; t < 5; ++t) {
    double s = 0;
    for (std::size_t v = 0; v < c.output_classes(); ++v) s += std::exp(lp.at(t, v));
    CHECK(std::abs(s - 1.0) < 1e-9);
  }
  auto params = m.params();
  params["ctc_head.w"] = Tensor::zeros({c.d_model, c.output_classes()});
  params["ctc_head.b"] = Tensor::zeros({c.output_classes()});
  model::Model z(c, params);
  const auto uniform = z.ctc_head(h);
  for (double v : uniform.values()) CHECK(v == doctest::Approx(-std::log(8.0)).epsilon(1e-14));

  const double err = testing::max_gradient_error(
      [&](const std::vector<Tensor>& in) { return testing::weighted_sum(m.ctc_head(in[0])); },
      {h, m.param("ctc_head.w"), m.param("ctc_head.b"), m.param("encoder.final_ln.gain")});
  CHECK(err < 1e-6);
}

TEST_CASE("parameter count formula agrees with shape enumeration") {
  std::mt19937_64 rng(11);
  for (Mode mode : model::all_modes()) {
    for (int trial = 0; trial < 3; ++trial) {
      ModelConfig c = tiny(mode);
      std::uniform_int_distribution<std::size_t> small(1, 4);
      c.num_layers = 1 + small(rng);
      c.fl_adapter_layer = 1;
      c.n_head = small(rng);
      c.d_model = c.n_head * small(rng) * 2;
      c.num_prompt = small(rng);
      c.adapter_dim = trial == 0 ? 0 : small(rng);
      c.prompt_position = static_cast<cond::PromptPosition>(trial);
      std::size_t enumerated = 0;
      for (const auto& [name, shape] : model::parameter_shapes(c)) enumerated += ad::element_count(shape);
      CHECK(model::parameter_count(c) == enumerated);
      std::size_t built = 0;
      for (const auto& [name, t] : model::init_parameters(c, 1)) built += t.size();
      CHECK(built == enumerated);
    }
  }
  // residual adapter: 2 d a + a + d per layer
  ModelConfig a = tiny(), b = tiny();
  b.adapter_dim = 32;
  a.d_model = b.d_model = 64;
  a.n_head = b.n_head = 4;
  CHECK(model::parameter_count(b) - model::parameter_count(a) == a.num_layers * (2 * 64 * 32 + 32 + 64));
}

TEST_CASE("mode strings and config round trip") {
  for (Mode mode : model::all_modes()) {
    CHECK(model::parse_mode(model::mode_name(mode)) == mode);
    ModelConfig c = tiny(mode);
    c.adapter_dim = 3;
    c.alpha = 0.2;
    util::ConfigFile f;
    c.write(f);
    auto back = ModelConfig::read(util::ConfigFile::parse(f.serialize()));
    util::ConfigFile g;
    back.write(g);
    CHECK(f.serialize() == g.serialize());
  }
  CHECK_THROWS_AS(model::parse_mode("prompt-middle"), util::ConfigError);
  ModelConfig bad = tiny(Mode::fl_adapter_ctc);
  bad.fl_adapter_layer = 2;
  CHECK_THROWS_AS(bad.validate(), util::ConfigError);
  bad = tiny();
  bad.n_head = 3;
  CHECK_THROWS_AS(bad.validate(), util::ConfigError);
  CHECK_THROWS_AS(tiny(Mode::baseline).peft_from_base(Mode::peft_prefix, 5, 8), util::ConfigError);
  auto p = tiny(Mode::fl_adapter_ce).peft_from_base(Mode::peft_prefix, 5, 8);
  CHECK(p.effective_lid_loss() == obj::LidLoss::ce);
  CHECK(p.num_prompt == 5);
}

TEST_CASE("language id requirements") {
  std::mt19937_64 rng(12);
  auto feats = testing::random_tensor(rng, {18, 5});
  for (Mode mode : model::all_modes()) {
    model::Model m(tiny(mode), 1);
    if (m.config().needs_lang()) {
      CHECK_THROWS_WITH_AS(m.forward(feats, -1), doctest::Contains("mode requires language id"), std::invalid_argument);
      CHECK_THROWS(m.forward(feats, 3));
      auto out = m.forward(feats, 2);
      CHECK(out.log_probs.rows() == 3);
    } else {
      CHECK(m.forward(feats, -1).log_probs.rows() == 3);
    }
    CHECK(m.forward(feats, 1).log_probs.cols() == 8);
    if (m.config().has_fl_adapter()) CHECK(m.forward(feats, 1).lid_logits->shape() == ad::Shape{3, 4});
  }
}

TEST_CASE("zero-initialized adapters reproduce the baseline") {
  std::mt19937_64 rng(13);
  auto feats = testing::random_tensor(rng, {40, 5});
  model::Model base(tiny(), 21);
  const auto ref = base.forward(feats, -1).hidden;
  for (Mode mode : {Mode::fl_adapter_ce, Mode::fl_adapter_ctc, Mode::baseline}) {
    ModelConfig c = tiny(mode);
    c.adapter_dim = mode == Mode::baseline ? 4 : 0;
    model::Model m(c, 21);  // same seed, so shared names get identical values
    CHECK(max_abs_diff(m.forward(feats, -1).hidden, ref) <= 1e-12);
  }
  ModelConfig both = tiny(Mode::fl_adapter_ctc);
  both.adapter_dim = 3;
  model::Model m(both, share_backbone(base.params(), model::init_parameters(both, 999)));
  CHECK(max_abs_diff(m.forward(feats, -1).hidden, ref) <= 1e-12);
}

TEST_CASE("neutral prefix reproduces the prefix-free forward exactly") {
  std::mt19937_64 rng(14);
  auto feats = testing::random_tensor(rng, {30, 5});
  model::Model base(tiny(), 5);
  for (std::size_t np : {1u, 5u}) {
    ModelConfig c = tiny(Mode::prefix_tuning);
    c.num_prompt = np;
    model::Model m(c, share_backbone(base.params(), model::init_parameters(c, 6)));
    model::ForwardOptions neutral;
    neutral.neutral_prefix = true;
    for (int lang = 0; lang < 3; ++lang) {
      CHECK(max_abs_diff(m.forward(feats, lang, neutral).hidden, base.forward(feats, -1).hidden) == 0.0);
    }
    CHECK(max_abs_diff(m.forward(feats, 0).hidden, base.forward(feats, -1).hidden) > 1e-6);
  }
}

TEST_CASE("concat embedding with a zero table equals a width-padded baseline") {
  std::mt19937_64 rng(15);
  ModelConfig c = tiny(Mode::concat_emb);
  model::Model m(c, 7);
  auto params = m.params();
  params["cond.concat_emb"] = Tensor::zeros({3, c.lang_emb_dim});
  model::Model zeroed(c, params);
  ModelConfig wide = tiny();
  wide.feat_dim = c.feat_dim + c.lang_emb_dim;
  auto wide_params = params;
  wide_params.erase("cond.concat_emb");
  model::Model padded(wide, wide_params);
  auto feats = testing::random_tensor(rng, {25, c.feat_dim});
  auto feats_padded = ad::concat({feats, Tensor::zeros({25, c.lang_emb_dim})}, 1);
  CHECK(max_abs_diff(zeroed.forward(feats, 2).log_probs, padded.forward(feats_padded, -1).log_probs) == 0.0);
}

TEST_CASE("prompt rows are excluded from the output") {
  std::mt19937_64 rng(16);
  auto feats = testing::random_tensor(rng, {30, 5});
  for (Mode mode : {Mode::prompt_prefix, Mode::prompt_suffix, Mode::prompt_both, Mode::peft_prompt}) {
    ModelConfig c = tiny(mode);
    c.num_prompt = 2;
    model::Model m(c, 3);
    auto out = m.forward(feats, 1);
    CHECK(out.log_probs.shape() == ad::Shape{5, c.output_classes()});
    CHECK(out.acoustic_frames == 5);
  }
}

TEST_CASE("model gradients match finite differences") {
  std::mt19937_64 rng(17);
  for (Mode mode : {Mode::baseline, Mode::attention, Mode::prompt_both, Mode::prefix_tuning, Mode::peft_prefix,
                    Mode::concat_onehot}) {
    ModelConfig c = tiny(mode);
    c.num_layers = 2;
    c.adapter_dim = mode == Mode::peft_prefix ? 2 : 0;
    model::Model m(c, 9);
    // Nonzero up-projections so the adapter paths carry gradient.
    for (auto& [name, t] : m.params()) {
      if (name.find(".up.") != std::string::npos) {
        for (auto& v : t.mutable_values()) v = 0.3 * std::normal_distribution<double>()(rng);
      }
    }
    auto feats = testing::random_tensor(rng, {14, 5});
    std::vector<std::string> names;
    std::vector<Tensor> inputs;
    for (const auto& [name, t] : m.params()) {
      if (name.find("layer1") != std::string::npos && name.find("ffn") != std::string::npos) continue;
      names.push_back(name);
      inputs.push_back(t);
    }
    const double err = testing::max_gradient_error(
        [&](const std::vector<Tensor>&) { return testing::weighted_sum(m.forward(feats, 1).log_probs); }, inputs);
    INFO(model::mode_name(mode));
    CHECK(err < 1e-5);
  }
}
