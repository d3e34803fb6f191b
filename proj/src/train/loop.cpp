#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <thread>

#include "lingua/autodiff/ops.hpp"
#include "lingua/train/trainer.hpp"

namespace lingua::train {

ad::Tensor utterance_features(const data::Batch& batch, std::size_t i) {
  const std::size_t T = batch.frame_lengths.at(i), F = batch.feat_dim;
  std::vector<double> v(T * F);
  const float* src = batch.frame(i, 0);
  std::copy(src, src + T * F, v.begin());
  return ad::Tensor::from({T, F}, std::move(v));
}

ad::Tensor utterance_features(const data::Utterance& u) {
  return ad::Tensor::from({u.num_frames, u.feat_dim}, std::vector<double>(u.features.begin(), u.features.end()));
}

int training_lang(const model::ModelConfig& cfg, int utterance_lang) {
  return cfg.needs_lang() ? utterance_lang : -1;
}

obj::LossBundle utterance_loss(const model::Model& m, const ad::Tensor& features, int lang,
                               const std::vector<int>& labels) {
  const auto& cfg = m.config();
  const auto out = m.forward(features, training_lang(cfg, lang));
  const auto ctc = obj::ctc_loss(out.log_probs, labels, cfg.blank());
  if (!cfg.has_fl_adapter()) return obj::combined_loss(ctc, nullptr, 0.0);
  const int K = static_cast<int>(cfg.num_langs);
  ad::Tensor lid;
  if (cfg.effective_lid_loss() == obj::LidLoss::ce) {
    lid = obj::frame_ce_loss(*out.lid_logits, obj::expand_lid_labels(lang, obj::LidLoss::ce, out.acoustic_frames, 0), {});
  } else {
    lid = obj::ctc_loss(ad::log_softmax(*out.lid_logits),
                        obj::expand_lid_labels(lang, obj::LidLoss::ctc, out.acoustic_frames, labels.size()), K);
  }
  return obj::combined_loss(ctc, &lid, cfg.alpha);
}

double EvalResult::macro_wer() const {
  std::vector<double> wers;
  for (const auto& [lang, c] : per_lang) wers.push_back(c.wer());
  return obj::macro_average(wers);
}

EvalResult evaluate(const model::Model& m, const std::vector<data::Utterance>& utts, const bpe::Vocabulary& vocab,
                    int lang_override, std::size_t threads) {
  EvalResult result;
  result.hypotheses.resize(utts.size());
  std::vector<std::string> errors(utts.size());
  auto work = [&](std::size_t begin, std::size_t stride) {
    ad::NoGradGuard guard;
    for (std::size_t i = begin; i < utts.size(); i += stride) {
      try {
        int lang = lang_override;
        if (lang == kOwnLanguage) lang = training_lang(m.config(), utts[i].lang);
        const auto out = m.forward(utterance_features(utts[i]), lang);
        result.hypotheses[i] = vocab.decode_lossy(obj::greedy_decode(out.log_probs, m.config().blank()));
      } catch (const std::exception& e) {
        errors[i] = "utterance " + utts[i].id + ": " + e.what();
      }
    }
  };
  threads = std::max<std::size_t>(1, std::min(threads, utts.size()));
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work, t, threads);
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw TrainingError(e);
  }
  for (std::size_t i = 0; i < utts.size(); ++i) {
    result.per_lang[utts[i].lang] += obj::word_error_rate(utts[i].transcript, result.hypotheses[i]);
  }
  return result;
}

std::string format_metrics(std::size_t step, double lr, double ctc, double lid, double total) {
  char buf[160];
  if (std::isnan(lid)) {
    std::snprintf(buf, sizeof(buf), "%zu\t%.6e\t%.6f\t-\t%.6f", step, lr, ctc, total);
  } else {
    std::snprintf(buf, sizeof(buf), "%zu\t%.6e\t%.6f\t%.6f\t%.6f", step, lr, ctc, lid, total);
  }
  return buf;
}

void run_training(TrainState& state, const TrainOptions& opt, const std::vector<data::Utterance>& train_set,
                  const std::vector<data::Utterance>& dev_set, const bpe::Vocabulary& vocab,
                  const std::filesystem::path& run_dir) {
  if (train_set.empty()) throw TrainingError("empty training set");
  for (auto& [name, p] : state.params) p.set_requires_grad(!state.frozen.count(name));
  const model::Model m(state.config, state.params);
  if (state.config.vocab_size != vocab.size()) {
    throw TrainingError("model vocab_size " + std::to_string(state.config.vocab_size) + " != vocabulary size " +
                        std::to_string(vocab.size()));
  }

  std::ofstream metrics, evals;
  if (!run_dir.empty()) {
    std::filesystem::create_directories(run_dir);
    metrics.open(run_dir / "metrics.tsv", std::ios::app);
    evals.open(run_dir / "eval.tsv", std::ios::app);
    if (!metrics || !evals) throw TrainingError("cannot write logs in " + run_dir.string());
  }

  std::size_t epoch = 0, cursor = 0;
  auto batches = data::make_batches(train_set, opt.max_frames, vocab, state.seed * 1000003ull + epoch);
  const std::size_t last = state.step + opt.steps;
  while (state.step < last) {
    if (cursor == batches.size()) {
      ++epoch;
      cursor = 0;
      batches = data::make_batches(train_set, opt.max_frames, vocab, state.seed * 1000003ull + epoch);
    }
    const auto& batch = batches[cursor++];
    const double inv = 1.0 / static_cast<double>(batch.size());
    double ctc = 0.0, lid = 0.0, total = 0.0;
    bool has_lid = false;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      obj::LossBundle b;
      try {
        b = utterance_loss(m, utterance_features(batch, i), batch.langs[i], batch.labels[i]);
      } catch (const obj::InfeasibleAlignment& e) {
        throw TrainingError("utterance " + train_set[batch.source_index[i]].id + ": " + e.what());
      }
      ctc += b.ctc * inv;
      lid += b.lid * inv;
      total += b.total.item() * inv;
      has_lid = b.has_lid;
      ad::backward(ad::scale(b.total, inv));
    }
    const std::size_t step = state.step + 1;
    if (!std::isfinite(total)) {
      throw TrainingError("training diverged at step " + std::to_string(step) + ": loss is not finite");
    }
    const double lr = noam_lr(step, opt.schedule);
    if (opt.clip > 0) clip_global_norm(state, opt.clip);
    adam_step(state, lr, opt.adam);

    const auto line = format_metrics(step, lr, ctc, has_lid ? lid : std::nan(""), total);
    if (metrics.is_open()) metrics << line << '\n' << std::flush;
    if (opt.on_step) opt.on_step(line);

    const bool final_step = state.step == last;
    if (!dev_set.empty() && ((opt.eval_every && step % opt.eval_every == 0) || final_step)) {
      const auto r = evaluate(m, dev_set, vocab, kOwnLanguage, opt.eval_threads);
      if (evals.is_open()) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%zu\t%.4f", step, r.macro_wer());
        evals << buf;
        for (const auto& [lang, c] : r.per_lang) {
          std::snprintf(buf, sizeof(buf), "\t%d:%.4f", lang, c.wer());
          evals << buf;
        }
        evals << '\n' << std::flush;
      }
    }
    if (!run_dir.empty() && opt.checkpoint_every && step % opt.checkpoint_every == 0 && !final_step) {
      save_checkpoint(state, vocab, run_dir / ("ckpt-" + std::to_string(step)));
    }
  }
  if (!run_dir.empty()) save_checkpoint(state, vocab, run_dir / "final");
}

TrainState make_peft_state(const TrainState& base, model::Mode tuner, std::size_t num_prompt, std::size_t adapter_dim,
                           std::uint64_t seed) {
  const auto cfg = base.config.peft_from_base(tuner, num_prompt, adapter_dim);
  for (const auto& [name, t] : base.params) {
    if (model::is_tuner_parameter(name)) {
      throw TrainingError("base checkpoint already holds tuner parameter " + name);
    }
  }
  TrainState s;
  s.config = cfg;
  s.seed = seed;
  s.params = model::init_parameters(cfg, seed);
  for (const auto& [name, t] : base.params) {
    auto it = s.params.find(name);
    if (it == s.params.end() || it->second.shape() != t.shape()) {
      throw TrainingError("base parameter " + name + " does not fit the fine-tuning model");
    }
    auto frozen = t.clone();
    frozen.set_requires_grad(false);
    it->second = frozen;
    s.frozen.insert(name);
  }
  for (const auto& [name, t] : s.params) {
    if (!s.frozen.count(name)) s.moments[name] = {std::vector<double>(t.size()), std::vector<double>(t.size())};
  }
  return s;
}

}  // namespace lingua::train
