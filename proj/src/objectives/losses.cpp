#include <cmath>
#include <numeric>

#include "lingua/autodiff/ops.hpp"
#include "lingua/objectives/objectives.hpp"

namespace lingua::obj {

std::vector<int> expand_lid_labels(int lang, LidLoss mode, std::size_t num_frames, std::size_t label_len) {
  if (lang < 0) throw std::invalid_argument("negative language id");
  if (mode == LidLoss::ce) {
    if (num_frames < 1) throw std::invalid_argument("frame-level LID targets need at least one frame");
    return std::vector<int>(num_frames, lang);
  }
  if (label_len < 1) throw std::invalid_argument("CTC LID targets need a non-empty text label");
  return std::vector<int>(label_len, lang);
}

ad::Tensor frame_ce_loss(const ad::Tensor& logits, std::span<const int> targets, std::span<const std::uint8_t> keep) {
  if (logits.rank() != 2) throw ad::DimensionError("frame_ce_loss expects [T x classes] logits");
  const std::size_t T = logits.dim(0), C = logits.dim(1);
  if (targets.size() != T) throw ad::DimensionError("frame_ce_loss: one target per frame required");
  if (!keep.empty() && keep.size() != T) throw ad::DimensionError("frame_ce_loss: mask length mismatch");
  std::vector<int> rows, idx;
  for (std::size_t t = 0; t < T; ++t) {
    if (!keep.empty() && !keep[t]) continue;
    if (targets[t] < 0 || static_cast<std::size_t>(targets[t]) >= C) {
      throw std::invalid_argument("frame_ce_loss: target outside class range");
    }
    rows.push_back(static_cast<int>(t));
    idx.push_back(targets[t]);
  }
  if (rows.empty()) throw std::invalid_argument("frame_ce_loss: every frame is masked");
  // Masked rows never enter the graph, so their contents cannot matter.
  const auto kept = ad::embedding(logits, rows);
  return ad::scale(ad::mean(ad::pick(ad::log_softmax(kept), idx)), -1.0);
}

LossBundle combined_loss(const ad::Tensor& ctc, const ad::Tensor* lid, double alpha) {
  if (!(alpha >= 0.0)) throw std::invalid_argument("loss weight alpha must be non-negative");
  LossBundle out;
  out.alpha = alpha;
  out.ctc = ctc.item();
  if (lid == nullptr) {
    out.total = ctc;
    return out;
  }
  out.has_lid = true;
  out.lid = lid->item();
  out.total = alpha == 0.0 ? ctc : ad::add(ctc, ad::scale(*lid, alpha));
  return out;
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::size_t i = 0;
  auto space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; };
  while (i < text.size()) {
    while (i < text.size() && space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !space(text[j])) ++j;
    if (j > i) words.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return words;
}

double EditCounts::wer() const {
  if (ref_words == 0) throw std::invalid_argument("word error rate undefined for an empty reference");
  return 100.0 * static_cast<double>(errors()) / static_cast<double>(ref_words);
}

EditCounts& EditCounts::operator+=(const EditCounts& o) {
  substitutions += o.substitutions;
  deletions += o.deletions;
  insertions += o.insertions;
  ref_words += o.ref_words;
  return *this;
}

EditCounts word_error_rate(std::string_view ref, std::string_view hyp) {
  const auto r = split_words(ref);
  const auto h = split_words(hyp);
  if (r.empty()) throw std::invalid_argument("word error rate undefined for an empty reference");
  const std::size_t n = r.size(), m = h.size();
  // cost plus a tie-broken breakdown: prefer substitution, then deletion.
  struct Cell {
    std::size_t cost, s, d, i;
  };
  std::vector<Cell> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = {j, 0, 0, j};
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = {i, 0, i, 0};
    for (std::size_t j = 1; j <= m; ++j) {
      const bool same = r[i - 1] == h[j - 1];
      Cell best = prev[j - 1];
      best.cost += same ? 0 : 1;
      best.s += same ? 0 : 1;
      Cell del = prev[j];
      ++del.cost;
      ++del.d;
      if (del.cost < best.cost) best = del;
      Cell ins = cur[j - 1];
      ++ins.cost;
      ++ins.i;
      if (ins.cost < best.cost) best = ins;
      cur[j] = best;
    }
    std::swap(prev, cur);
  }
  return {prev[m].s, prev[m].d, prev[m].i, n};
}

double macro_average(std::span<const double> per_lang) {
  if (per_lang.empty()) throw std::invalid_argument("macro average needs at least one language");
  return std::accumulate(per_lang.begin(), per_lang.end(), 0.0) / static_cast<double>(per_lang.size());
}

}  // namespace lingua::obj
