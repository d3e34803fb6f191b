#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "lingua/bpe/bpe.hpp"
#include "lingua/data/dataset.hpp"
#include "lingua/model/model.hpp"
#include "lingua/objectives/objectives.hpp"

namespace lingua::train {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Schedule {
  double d_model = 64;
  double warmup = 400;
  double factor = 1.0;
};

double noam_lr(std::size_t step, const Schedule& s);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
};

struct Moments {
  std::vector<double> m, v;
};

struct TrainState {
  model::ModelConfig config;
  model::ParamMap params;
  std::map<std::string, Moments> moments;  // unfrozen parameters only
  std::set<std::string> frozen;
  std::size_t step = 0;
  std::uint64_t seed = 1;

  std::size_t trainable_count() const;
  std::size_t total_count() const;
};

// Builds a fresh state: parameters initialized, moments zero, nothing frozen.
TrainState make_state(const model::ModelConfig& cfg, std::uint64_t seed);

// Applies one bias-corrected Adam update with the gradients currently held by
// the unfrozen parameters (missing grads count as zero), then clears them.
// Throws TrainingError naming the parameter on a non-finite gradient.
void adam_step(TrainState& state, double lr, const AdamConfig& adam = {});

// Scales all unfrozen gradients so their joint L2 norm is at most max_norm.
// Returns the norm before scaling.
double clip_global_norm(TrainState& state, double max_norm);
double clip_global_norm(std::vector<std::vector<double>*> grads, double max_norm);

void save_checkpoint(const TrainState& state, const bpe::Vocabulary& vocab, const std::filesystem::path& dir);
TrainState load_checkpoint(const std::filesystem::path& dir, bpe::Vocabulary* vocab = nullptr);

// Frames of batch member i with padding trimmed, as [T x F].
ad::Tensor utterance_features(const data::Batch& batch, std::size_t i);
ad::Tensor utterance_features(const data::Utterance& u);

// Loss of a single utterance; lang is the utterance's language.
obj::LossBundle utterance_loss(const model::Model& m, const ad::Tensor& features, int lang,
                               const std::vector<int>& labels);

struct TrainOptions {
  std::size_t steps = 3000;
  Schedule schedule;
  AdamConfig adam;
  double clip = 5.0;
  std::size_t max_frames = 2000;
  std::size_t eval_every = 500;
  std::size_t checkpoint_every = 500;
  std::size_t eval_threads = 1;
  // Called after every step with the metrics line (without newline).
  std::function<void(const std::string&)> on_step;
};

struct EvalResult {
  std::map<int, obj::EditCounts> per_lang;
  std::vector<std::string> hypotheses;

  double macro_wer() const;
};

// lang_override: -2 = each utterance uses its own language, -1 = no language,
// k >= 0 = every utterance gets language k.
constexpr int kOwnLanguage = -2;
EvalResult evaluate(const model::Model& m, const std::vector<data::Utterance>& utts, const bpe::Vocabulary& vocab,
                    int lang_override, std::size_t threads = 1);

// Language passed to the model during training and default evaluation.
int training_lang(const model::ModelConfig& cfg, int utterance_lang);

// Runs `options.steps` optimizer steps on `state`. When run_dir is non-empty
// it receives metrics.tsv, eval.tsv, periodic checkpoints and `final/`.
void run_training(TrainState& state, const TrainOptions& options, const std::vector<data::Utterance>& train_set,
                  const std::vector<data::Utterance>& dev_set, const bpe::Vocabulary& vocab,
                  const std::filesystem::path& run_dir);

// Frozen fl-adapter base plus a tuner; base parameters are copied verbatim and
// frozen, tuner parameters freshly initialized from `seed`.
TrainState make_peft_state(const TrainState& base, model::Mode tuner, std::size_t num_prompt,
                           std::size_t adapter_dim, std::uint64_t seed);

std::string format_metrics(std::size_t step, double lr, double ctc, double lid, double total);

}  // namespace lingua::train
