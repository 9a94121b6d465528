#pragma once

// Independent reference computations in plain doubles. Nothing here goes
// through the autodiff graph.

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "ssvc/tensor.hpp"

namespace oracle {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;

template <typename T>
Mat rows(const ssvc::Tensor<T>& t) {
  Mat out(t.dim(0), Vec(t.size() / t.dim(0)));
  for (std::size_t i = 0; i < out.size(); ++i)
    for (std::size_t j = 0; j < out[i].size(); ++j) out[i][j] = double(t[i * out[i].size() + j]);
  return out;
}

inline double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double cosine(const Vec& a, const Vec& b) {
  return dot(a, b) / (std::sqrt(dot(a, a)) * std::sqrt(dot(b, b)));
}

// -1/|P| sum_{q in P} log( exp(s_q) / sum_j exp(s_j) ), s = cos / tau.
inline double supcon(const Vec& anchor, const Mat& candidates, const std::vector<std::size_t>& pos,
                     double tau) {
  double denom = 0.0;
  for (const auto& c : candidates) denom += std::exp(cosine(anchor, c) / tau);
  double acc = 0.0;
  for (auto q : pos) acc += std::log(std::exp(cosine(anchor, candidates[q]) / tau) / denom);
  return -acc / double(pos.size());
}

// Double loop over anchors i and candidates [pf_{-i}; p1; p2].
inline double fake_contrastive(const Mat& pf, const Mat& p1, const Mat& p2, double tau) {
  const std::size_t b = pf.size();
  if (b == 1) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    Mat cand;
    std::vector<std::size_t> pos;
    for (std::size_t j = 0; j < b; ++j) {
      if (j == i) continue;
      pos.push_back(cand.size());
      cand.push_back(pf[j]);
    }
    for (const auto& v : p1) cand.push_back(v);
    for (const auto& v : p2) cand.push_back(v);
    total += supcon(pf[i], cand, pos, tau);
  }
  return total / double(b);
}

// mean_i log clamp(r_i) + log(1 - clamp(f_i)).
inline double st_adv(const Vec& d_real, const Vec& d_fake, double clamp_eps) {
  auto c = [&](double p) { return std::min(std::max(p, clamp_eps), 1.0 - clamp_eps); };
  double s = 0.0;
  for (std::size_t i = 0; i < d_real.size(); ++i) s += std::log(c(d_real[i])) + std::log(1.0 - c(d_fake[i]));
  return s / double(d_real.size());
}

// Bias-corrected Adam, one call per step, moments starting at zero.
struct AdamOracle {
  double lr, b1, b2, eps;
  Vec m, v;
  std::size_t t = 0;

  Vec step(Vec w, const Vec& g) {
    if (m.empty()) m.assign(w.size(), 0.0), v.assign(w.size(), 0.0);
    ++t;
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = b1 * m[k] + (1 - b1) * g[k];
      v[k] = b2 * v[k] + (1 - b2) * g[k] * g[k];
      double mh = m[k] / (1 - std::pow(b1, double(t)));
      double vh = v[k] / (1 - std::pow(b2, double(t)));
      w[k] -= lr * mh / (std::sqrt(vh) + eps);
    }
    return w;
  }
};

// |X_k| by the defining sum.
inline Vec dft_magnitudes(const Vec& x) {
  const std::size_t n = x.size();
  Vec out(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t t = 0; t < n; ++t)
      acc += x[t] * std::polar(1.0, -2.0 * std::numbers::pi * double(k * t) / double(n));
    out[k] = std::abs(acc);
  }
  return out;
}

inline double population_std(const Vec& x) {
  double m = 0.0;
  for (double v : x) m += v;
  m /= double(x.size());
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return std::sqrt(s / double(x.size()));
}

}  // namespace oracle
