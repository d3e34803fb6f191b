#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "lingua/autodiff/tensor.hpp"

namespace lingua::obj {

class InfeasibleAlignment : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Minimum number of frames that can emit `labels`: one per label plus a
// separating blank between equal neighbours.
std::size_t ctc_min_frames(std::span<const int> labels);

struct CtcLattice {
  std::vector<int> extended;  // blank, l1, blank, l2, ..., blank
  std::vector<double> alpha;  // T x S, log domain, includes emission at t
  std::vector<double> beta;   // T x S, log domain, excludes emission at t
  double forward_log_likelihood = 0.0;
  double backward_log_likelihood = 0.0;
};

// log_probs is T x C row-major. Throws InfeasibleAlignment when T is too short.
CtcLattice ctc_lattice(std::span<const double> log_probs, std::size_t T, std::size_t C, std::span<const int> labels,
                       int blank);

// Negative log-likelihood of `labels` under per-frame log-probabilities
// [T x C]. The gradient is the alpha-beta posterior.
ad::Tensor ctc_loss(const ad::Tensor& log_probs, std::span<const int> labels, int blank);

enum class LidLoss { ce, ctc };

std::vector<int> expand_lid_labels(int lang, LidLoss mode, std::size_t num_frames, std::size_t label_len);

// Mean over kept frames of -log softmax(logits)[target].
ad::Tensor frame_ce_loss(const ad::Tensor& logits, std::span<const int> targets, std::span<const std::uint8_t> keep);

struct LossBundle {
  ad::Tensor total;
  double ctc = 0.0;
  double lid = 0.0;
  bool has_lid = false;
  double alpha = 0.0;
};

LossBundle combined_loss(const ad::Tensor& ctc, const ad::Tensor* lid, double alpha);

std::vector<int> greedy_decode(std::span<const double> log_probs, std::size_t T, std::size_t C, int blank);
std::vector<int> greedy_decode(const ad::Tensor& log_probs, int blank);

struct EditCounts {
  std::size_t substitutions = 0;
  std::size_t deletions = 0;
  std::size_t insertions = 0;
  std::size_t ref_words = 0;

  std::size_t errors() const { return substitutions + deletions + insertions; }
  double wer() const;  // percent
  EditCounts& operator+=(const EditCounts& o);
};

EditCounts word_error_rate(std::string_view ref, std::string_view hyp);
double macro_average(std::span<const double> per_lang);

std::vector<std::string> split_words(std::string_view text);

}  // namespace lingua::obj
