#pragma once

// Straight-line loops over plain vectors for the unconditioned model, kept
// independent of the tensor library so it can serve as an oracle.

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "lingua/model/model.hpp"

namespace lingua::testing {

using Mat = std::vector<std::vector<double>>;

inline Mat to_mat(const std::vector<double>& v, std::size_t rows, std::size_t cols) {
  Mat m(rows, std::vector<double>(cols));
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) m[r][c] = v[r * cols + c];
  return m;
}

struct RefParams {
  std::map<std::string, std::vector<double>> p;
  const std::vector<double>& operator[](const std::string& k) const { return p.at(k); }
};

inline RefParams ref_params(const model::ParamMap& params) {
  RefParams r;
  for (const auto& [name, t] : params) r.p[name] = std::vector<double>(t.values().begin(), t.values().end());
  return r;
}

// y = x W + b with W stored [in x out]
inline Mat ref_linear(const Mat& x, const std::vector<double>& w, const std::vector<double>& b) {
  const std::size_t out = b.size(), in = w.size() / out;
  Mat y(x.size(), std::vector<double>(out));
  for (std::size_t r = 0; r < x.size(); ++r) {
    for (std::size_t o = 0; o < out; ++o) {
      double s = b[o];
      for (std::size_t i = 0; i < in; ++i) s += x[r][i] * w[i * out + o];
      y[r][o] = s;
    }
  }
  return y;
}

inline Mat ref_relu(Mat x) {
  for (auto& row : x)
    for (auto& v : row) v = v > 0 ? v : 0;
  return x;
}

inline Mat ref_conv(const Mat& x, std::size_t kernel, std::size_t stride) {
  const long T = static_cast<long>(x.size());
  const std::size_t C = x[0].size();
  const long half = static_cast<long>(kernel / 2);
  Mat out;
  for (long t = 0; t * static_cast<long>(stride) < T; ++t) {
    std::vector<double> row;
    for (long j = -half; j <= half; ++j) {
      const long src = t * static_cast<long>(stride) + j;
      for (std::size_t c = 0; c < C; ++c) row.push_back(src >= 0 && src < T ? x[src][c] : 0.0);
    }
    out.push_back(row);
  }
  return out;
}

inline Mat ref_layer_norm(const Mat& x, const std::vector<double>& g, const std::vector<double>& b, double eps) {
  Mat y = x;
  for (std::size_t r = 0; r < x.size(); ++r) {
    const double n = static_cast<double>(x[r].size());
    double mu = 0;
    for (double v : x[r]) mu += v;
    mu /= n;
    double var = 0;
    for (double v : x[r]) var += (v - mu) * (v - mu);
    var /= n;
    for (std::size_t c = 0; c < x[r].size(); ++c) y[r][c] = (x[r][c] - mu) / std::sqrt(var + eps) * g[c] + b[c];
  }
  return y;
}

inline Mat ref_add(Mat a, const Mat& b) {
  for (std::size_t r = 0; r < a.size(); ++r)
    for (std::size_t c = 0; c < a[r].size(); ++c) a[r][c] += b[r][c];
  return a;
}

inline Mat ref_layer(const Mat& x, const RefParams& P, const std::string& p, std::size_t H) {
  const std::size_t T = x.size(), d = x[0].size(), dh = d / H;
  const auto a = ref_layer_norm(x, P[p + "ln1.gain"], P[p + "ln1.bias"], 1e-5);
  const auto q = ref_linear(a, P[p + "attn.wq"], P[p + "attn.bq"]);
  const auto k = ref_linear(a, P[p + "attn.wk"], P[p + "attn.bk"]);
  const auto v = ref_linear(a, P[p + "attn.wv"], P[p + "attn.bv"]);
  Mat att(T, std::vector<double>(d, 0.0));
  for (std::size_t h = 0; h < H; ++h) {
    for (std::size_t i = 0; i < T; ++i) {
      std::vector<double> s(T);
      double mx = -1e300;
      for (std::size_t j = 0; j < T; ++j) {
        double dot = 0;
        for (std::size_t c = h * dh; c < (h + 1) * dh; ++c) dot += q[i][c] * k[j][c];
        s[j] = dot / std::sqrt(static_cast<double>(dh));
        mx = std::max(mx, s[j]);
      }
      double z = 0;
      for (auto& e : s) z += (e = std::exp(e - mx));
      for (std::size_t j = 0; j < T; ++j)
        for (std::size_t c = h * dh; c < (h + 1) * dh; ++c) att[i][c] += s[j] / z * v[j][c];
    }
  }
  const auto x1 = ref_add(x, ref_linear(att, P[p + "attn.wo"], P[p + "attn.bo"]));
  const auto b = ref_layer_norm(x1, P[p + "ln2.gain"], P[p + "ln2.bias"], 1e-5);
  const auto f = ref_linear(ref_relu(ref_linear(b, P[p + "ffn.w1"], P[p + "ffn.b1"])), P[p + "ffn.w2"], P[p + "ffn.b2"]);
  return ref_add(x1, f);
}

// Returns the encoder output (before the final layer norm).
inline Mat reference_encoder(const model::ModelConfig& cfg, const model::ParamMap& params, const Mat& features) {
  const auto P = ref_params(params);
  auto h = ref_relu(ref_linear(ref_conv(features, 3, 2), P["frontend.conv1.w"], P["frontend.conv1.b"]));
  h = ref_relu(ref_linear(ref_conv(h, 3, 3), P["frontend.conv2.w"], P["frontend.conv2.b"]));
  h = ref_linear(h, P["frontend.proj.w"], P["frontend.proj.b"]);
  const std::size_t d = cfg.d_model;
  for (std::size_t t = 0; t < h.size(); ++t) {
    for (std::size_t i = 0; i < d; ++i) {
      const double freq = std::pow(10000.0, static_cast<double>(i - i % 2) / d);
      h[t][i] += i % 2 == 0 ? std::sin(t / freq) : std::cos(t / freq);
    }
  }
  for (std::size_t l = 0; l < cfg.num_layers; ++l) h = ref_layer(h, P, "encoder.layer" + std::to_string(l) + ".", cfg.n_head);
  return h;
}

inline Mat reference_log_probs(const model::ParamMap& params, const Mat& hidden) {
  const auto P = ref_params(params);
  auto y = ref_linear(ref_layer_norm(hidden, P["encoder.final_ln.gain"], P["encoder.final_ln.bias"], 1e-5),
                      P["ctc_head.w"], P["ctc_head.b"]);
  for (auto& row : y) {
    double mx = -1e300;
    for (double v : row) mx = std::max(mx, v);
    double z = 0;
    for (double v : row) z += std::exp(v - mx);
    for (auto& v : row) v -= mx + std::log(z);
  }
  return y;
}

}  // namespace lingua::testing
