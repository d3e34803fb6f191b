#include <algorithm>
#include <cmath>
#include <limits>

#include "lingua/objectives/objectives.hpp"

namespace lingua::obj {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

}  // namespace

std::size_t ctc_min_frames(std::span<const int> labels) {
  std::size_t n = labels.size();
  for (std::size_t i = 1; i < labels.size(); ++i) n += labels[i] == labels[i - 1];
  return n;
}

CtcLattice ctc_lattice(std::span<const double> lp, std::size_t T, std::size_t C, std::span<const int> labels,
                       int blank) {
  if (lp.size() != T * C) throw std::invalid_argument("ctc: log_probs size does not match T x C");
  if (blank < 0 || static_cast<std::size_t>(blank) >= C) throw std::invalid_argument("ctc: blank outside classes");
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= C || l == blank) {
      throw std::invalid_argument("ctc: label " + std::to_string(l) + " is blank or outside the class range");
    }
  }
  const std::size_t need = ctc_min_frames(labels);
  if (T < need || T == 0) {
    throw InfeasibleAlignment("infeasible alignment: " + std::to_string(T) + " frames cannot emit " +
                              std::to_string(labels.size()) + " labels (needs " + std::to_string(std::max<std::size_t>(need, 1)) +
                              ")");
  }

  CtcLattice lat;
  lat.extended.reserve(2 * labels.size() + 1);
  lat.extended.push_back(blank);
  for (int l : labels) {
    lat.extended.push_back(l);
    lat.extended.push_back(blank);
  }
  const std::size_t S = lat.extended.size();
  const auto& ext = lat.extended;
  auto can_skip = [&](std::size_t s) { return s >= 2 && ext[s] != blank && ext[s] != ext[s - 2]; };

  lat.alpha.assign(T * S, kNegInf);
  lat.alpha[0] = lp[ext[0]];
  if (S > 1) lat.alpha[1] = lp[ext[1]];
  for (std::size_t t = 1; t < T; ++t) {
    const double* prev = lat.alpha.data() + (t - 1) * S;
    double* cur = lat.alpha.data() + t * S;
    for (std::size_t s = 0; s < S; ++s) {
      double a = prev[s];
      if (s >= 1) a = log_add(a, prev[s - 1]);
      if (can_skip(s)) a = log_add(a, prev[s - 2]);
      cur[s] = a == kNegInf ? kNegInf : a + lp[t * C + ext[s]];
    }
  }
  const double* last = lat.alpha.data() + (T - 1) * S;
  lat.forward_log_likelihood = S > 1 ? log_add(last[S - 1], last[S - 2]) : last[0];

  lat.beta.assign(T * S, kNegInf);
  double* bl = lat.beta.data() + (T - 1) * S;
  bl[S - 1] = 0.0;
  if (S > 1) bl[S - 2] = 0.0;
  for (std::size_t t = T - 1; t-- > 0;) {
    const double* next = lat.beta.data() + (t + 1) * S;
    double* cur = lat.beta.data() + t * S;
    for (std::size_t s = 0; s < S; ++s) {
      double b = kNegInf;
      for (std::size_t d = 0; d < 3; ++d) {
        const std::size_t s2 = s + d;
        if (s2 >= S) break;
        if (d == 2 && !can_skip(s2)) continue;
        if (next[s2] == kNegInf) continue;
        b = log_add(b, next[s2] + lp[(t + 1) * C + ext[s2]]);
      }
      cur[s] = b;
    }
  }
  double total = kNegInf;
  total = log_add(total, lat.beta[0] + lp[ext[0]]);
  if (S > 1) total = log_add(total, lat.beta[1] + lp[ext[1]]);
  lat.backward_log_likelihood = total;
  return lat;
}

ad::Tensor ctc_loss(const ad::Tensor& log_probs, std::span<const int> labels, int blank) {
  if (log_probs.rank() != 2) throw ad::DimensionError("ctc_loss expects [T x C] log-probabilities");
  const std::size_t T = log_probs.dim(0), C = log_probs.dim(1);
  auto lat = std::make_shared<CtcLattice>(ctc_lattice(log_probs.values(), T, C, labels, blank));
  const double nll = -lat->forward_log_likelihood;
  // NaN comes from non-finite inputs and is left for the caller to report.
  if (std::isinf(nll)) throw InfeasibleAlignment("ctc: alignment has zero probability under the model");
  return ad::make_result({}, {nll}, {log_probs}, [lat, T, C](ad::Node& self) {
    auto& p = self.parents[0];
    const double g = self.grad[0];
    const std::size_t S = lat->extended.size();
    const double logz = lat->forward_log_likelihood;
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t s = 0; s < S; ++s) {
        const double a = lat->alpha[t * S + s], b = lat->beta[t * S + s];
        if (a == kNegInf || b == kNegInf) continue;
        p->grad[t * C + lat->extended[s]] -= g * std::exp(a + b - logz);
      }
    }
  });
}

std::vector<int> greedy_decode(std::span<const double> lp, std::size_t T, std::size_t C, int blank) {
  if (lp.size() != T * C) throw std::invalid_argument("greedy_decode: size does not match T x C");
  std::vector<int> out;
  int prev = -1;
  for (std::size_t t = 0; t < T; ++t) {
    const double* row = lp.data() + t * C;
    const int best = static_cast<int>(std::max_element(row, row + C) - row);
    if (best != prev && best != blank) out.push_back(best);
    prev = best;
  }
  return out;
}

std::vector<int> greedy_decode(const ad::Tensor& log_probs, int blank) {
  if (log_probs.rank() != 2) throw ad::DimensionError("greedy_decode expects [T x C]");
  return greedy_decode(log_probs.values(), log_probs.dim(0), log_probs.dim(1), blank);
}

}  // namespace lingua::obj
