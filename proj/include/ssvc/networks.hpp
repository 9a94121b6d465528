#pragma once

// Desk-scale generator and discriminator.
//
// Generator (2-1-2D layout):
//   conv 3x3 + GLU (16) -> 2 x [stride-2 conv + GLU] (32, 64)
//   -> reshape to 1-D, 1x1 conv -> 3 x residual [conv(1x3) -> CIN(pair) -> GLU]
//   -> 1x1 conv, reshape to 2-D -> 2 x [stride-2 transposed conv + GLU] (32, 16)
//   -> conv 3x3 to one channel.
// Discriminator:
//   encoder D_e: 3 x [stride-2 conv + GLU] (16, 32, d_e) -> global average pool
//   head h:      linear -> leaky ReLU -> linear (d_e -> d_e -> d_p)
//   real/fake:   linear on [z | e(pair)] + <e(pair), V z>, sigmoid

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ssvc/conv.hpp"
#include "ssvc/features.hpp"
#include "ssvc/random.hpp"
#include "ssvc/tensor.hpp"

namespace ssvc {

inline constexpr double kCinEpsilon = 1e-5;

struct NetworkConfig {
  int n_domains = 4;
  std::size_t n_mcep = 16;
  std::size_t n_frames = 64;
  std::size_t embed_dim = 8;  // k, pair embedding width
  std::size_t d_e = 64;       // encoder output width
  std::size_t d_p = 64;       // projection width; equals d_e for the siamese loss
  double head_slope = 0.2;    // leaky ReLU slope inside h

  void validate() const {
    if (n_domains < 1) throw std::invalid_argument("n_domains must be positive");
    if (n_mcep < 4 || n_frames < 4 || n_mcep % 4 != 0 || n_frames % 4 != 0) {
      throw std::invalid_argument("n_mcep and n_frames must be positive multiples of 4");
    }
    if (embed_dim < 1 || d_e < 1 || d_p < 1) {
      throw std::invalid_argument("network widths must be positive");
    }
    if (d_p != d_e) {
      throw std::invalid_argument("d_p must equal d_e: the siamese loss compares p with z");
    }
  }
};

template <std::floating_point T>
using NamedParams = std::vector<std::pair<std::string, Tensor<T>>>;

namespace detail {

template <std::floating_point T>
Tensor<T> uniform_param(Rng& rng, Shape shape, double bound) {
  std::vector<T> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<T>(uniform(rng, -bound, bound));
  return Tensor<T>(std::move(shape), std::move(v), true);
}

template <std::floating_point T>
Tensor<T> frozen(const Tensor<T>& p) {
  return stop_gradient(p);
}

}  // namespace detail

template <std::floating_point T>
struct Conv2dLayer {
  Tensor<T> weight;  // [O,C,kh,kw]
  Tensor<T> bias;    // [O]
  Conv2dGeometry geom;

  static Conv2dLayer make(Rng& rng, std::size_t in, std::size_t out, std::size_t kh,
                          std::size_t kw, std::size_t stride_h, std::size_t stride_w,
                          std::size_t pad_h, std::size_t pad_w) {
    double bound = 1.0 / std::sqrt(double(in * kh * kw));
    return {detail::uniform_param<T>(rng, {out, in, kh, kw}, bound), Tensor<T>::zeros({out}, true),
            Conv2dGeometry{kh, kw, stride_h, stride_w, pad_h, pad_w}};
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    return conv2d(x, weight, geom) + reshape(bias, {1, bias.size(), 1, 1});
  }
  Conv2dLayer frozen() const { return {detail::frozen(weight), detail::frozen(bias), geom}; }
  void collect(NamedParams<T>& out, const std::string& name) const {
    out.emplace_back(name + ".w", weight);
    out.emplace_back(name + ".b", bias);
  }
};

template <std::floating_point T>
struct ConvTranspose2dLayer {
  Tensor<T> weight;  // [C,O,kh,kw]
  Tensor<T> bias;    // [O]
  Conv2dGeometry geom;

  static ConvTranspose2dLayer make(Rng& rng, std::size_t in, std::size_t out) {
    double bound = 1.0 / std::sqrt(double(in * 4));
    return {detail::uniform_param<T>(rng, {in, out, 4, 4}, bound), Tensor<T>::zeros({out}, true),
            Conv2dGeometry{4, 4, 2, 2, 1, 1}};
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    return conv_transpose2d(x, weight, geom) + reshape(bias, {1, bias.size(), 1, 1});
  }
  ConvTranspose2dLayer frozen() const {
    return {detail::frozen(weight), detail::frozen(bias), geom};
  }
  void collect(NamedParams<T>& out, const std::string& name) const {
    out.emplace_back(name + ".w", weight);
    out.emplace_back(name + ".b", bias);
  }
};

template <std::floating_point T>
struct LinearLayer {
  Tensor<T> weight;  // [in,out]
  Tensor<T> bias;    // [out]

  static LinearLayer make(Rng& rng, std::size_t in, std::size_t out) {
    return {detail::uniform_param<T>(rng, {in, out}, 1.0 / std::sqrt(double(in))),
            Tensor<T>::zeros({out}, true)};
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    return matmul(x, weight) + reshape(bias, {1, bias.size()});
  }
  LinearLayer frozen() const { return {detail::frozen(weight), detail::frozen(bias)}; }
  void collect(NamedParams<T>& out, const std::string& name) const {
    out.emplace_back(name + ".w", weight);
    out.emplace_back(name + ".b", bias);
  }
};

// Per ordered pair and channel: scale gamma and bias beta, rows indexed by
// DomainPair::index.
template <std::floating_point T>
struct CinParams {
  Tensor<T> gamma;  // [N*N, C]
  Tensor<T> beta;   // [N*N, C]

  static CinParams make(Rng& rng, int n_domains, std::size_t channels) {
    std::size_t rows = std::size_t(n_domains) * std::size_t(n_domains);
    std::vector<T> g(rows * channels), b(rows * channels);
    for (auto& x : g) x = static_cast<T>(1.0 + uniform(rng, -0.1, 0.1));
    for (auto& x : b) x = static_cast<T>(uniform(rng, -0.1, 0.1));
    return {Tensor<T>({rows, channels}, std::move(g), true),
            Tensor<T>({rows, channels}, std::move(b), true)};
  }
  std::size_t channels() const { return gamma.dim(1); }
  CinParams frozen() const { return {detail::frozen(gamma), detail::frozen(beta)}; }
  void collect(NamedParams<T>& out, const std::string& name) const {
    out.emplace_back(name + ".gamma", gamma);
    out.emplace_back(name + ".beta", beta);
  }
};

inline std::vector<std::size_t> pair_rows(std::span<const DomainPair> pairs, int n_domains) {
  std::vector<std::size_t> rows;
  rows.reserve(pairs.size());
  for (const auto& p : pairs) {
    p.validate(n_domains);
    rows.push_back(p.index(n_domains));
  }
  return rows;
}

// Conditional instance normalization over each sample-channel slice of
// f [B,C,H,W]: gamma_{c,c'} * (f - mu) / (sigma + eps) + beta_{c,c'}.
template <std::floating_point T>
Tensor<T> cin(const Tensor<T>& f, std::span<const DomainPair> pairs, const CinParams<T>& params,
              int n_domains) {
  if (f.rank() != 4 || f.dim(1) != params.channels()) {
    throw shape_error("cin input " + shape_string(f.shape()) + " does not match " +
                      std::to_string(params.channels()) + " channels");
  }
  if (pairs.size() != f.dim(0)) throw shape_error("cin needs one domain pair per sample");
  const std::size_t b = f.dim(0), c = f.dim(1);
  auto rows = pair_rows(pairs, n_domains);
  Tensor<T> normed = instance_norm(f, f.dim(2) * f.dim(3), static_cast<T>(kCinEpsilon));
  Tensor<T> gamma = reshape(index_select(params.gamma, 0, rows), {b, c, 1, 1});
  Tensor<T> beta = reshape(index_select(params.beta, 0, rows), {b, c, 1, 1});
  return gamma * normed + beta;
}

// FeatureMap batch <-> [B,1,n_mcep,n_frames] tensor.
template <std::floating_point T>
Tensor<T> to_tensor(std::span<const FeatureMap* const> maps) {
  if (maps.empty()) throw shape_error("empty feature batch");
  const std::size_t m = maps.front()->n_mcep(), t = maps.front()->n_frames();
  std::vector<T> v;
  v.reserve(maps.size() * m * t);
  for (const auto* x : maps) {
    if (x->n_mcep() != m || x->n_frames() != t) throw shape_error("feature batch shape mismatch");
    for (double d : x->data()) v.push_back(static_cast<T>(d));
  }
  return Tensor<T>({maps.size(), 1, m, t}, std::move(v));
}

template <std::floating_point T>
Tensor<T> to_tensor(const FeatureMap& x) {
  const FeatureMap* p = &x;
  return to_tensor<T>(std::span<const FeatureMap* const>(&p, 1));
}

template <std::floating_point T>
FeatureMap from_tensor(const Tensor<T>& t, std::size_t sample, DomainCode domain) {
  const std::size_t m = t.dim(2), f = t.dim(3);
  std::vector<double> v(m * f);
  auto tv = t.values();
  for (std::size_t i = 0; i < m * f; ++i) v[i] = static_cast<double>(tv[sample * m * f + i]);
  return FeatureMap(m, f, std::move(v), domain);
}

// ---------------------------------------------------------------------------

template <std::floating_point T>
class Generator {
 public:
  static constexpr std::size_t kWidth1 = 16, kWidth2 = 32, kWidth3 = 64;
  static constexpr std::size_t kResidualBlocks = 3;

  Generator() = default;

  Generator(const NetworkConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg.validate();
    const std::size_t flat = kWidth3 * (cfg.n_mcep / 4);
    in_ = Conv2dLayer<T>::make(rng, 1, 2 * kWidth1, 3, 3, 1, 1, 1, 1);
    down1_ = Conv2dLayer<T>::make(rng, kWidth1, 2 * kWidth2, 3, 3, 2, 2, 1, 1);
    down2_ = Conv2dLayer<T>::make(rng, kWidth2, 2 * kWidth3, 3, 3, 2, 2, 1, 1);
    to1d_ = Conv2dLayer<T>::make(rng, flat, kWidth3, 1, 1, 1, 1, 0, 0);
    for (std::size_t i = 0; i < kResidualBlocks; ++i) {
      res_conv_.push_back(Conv2dLayer<T>::make(rng, kWidth3, 2 * kWidth3, 1, 3, 1, 1, 0, 1));
      res_cin_.push_back(CinParams<T>::make(rng, cfg.n_domains, 2 * kWidth3));
    }
    to2d_ = Conv2dLayer<T>::make(rng, kWidth3, flat, 1, 1, 1, 1, 0, 0);
    up1_ = ConvTranspose2dLayer<T>::make(rng, kWidth3, 2 * kWidth2);
    up2_ = ConvTranspose2dLayer<T>::make(rng, kWidth2, 2 * kWidth1);
    out_ = Conv2dLayer<T>::make(rng, kWidth1, 1, 3, 3, 1, 1, 1, 1);
  }

  const NetworkConfig& config() const { return cfg_; }

  // x [B,1,n_mcep,n_frames] -> same shape.
  Tensor<T> forward(const Tensor<T>& x, std::span<const DomainPair> pairs) const {
    check_input(x, pairs.size());
    const std::size_t b = x.dim(0), h4 = cfg_.n_mcep / 4, w4 = cfg_.n_frames / 4;
    Tensor<T> h = glu(in_(x), 1);
    h = glu(down1_(h), 1);
    h = glu(down2_(h), 1);
    h = to1d_(reshape(h, {b, kWidth3 * h4, 1, w4}));
    for (std::size_t i = 0; i < kResidualBlocks; ++i) {
      h = h + glu(cin(res_conv_[i](h), pairs, res_cin_[i], cfg_.n_domains), 1);
    }
    h = reshape(to2d_(h), {b, kWidth3, h4, w4});
    h = glu(up1_(h), 1);
    h = glu(up2_(h), 1);
    return out_(h);
  }

  FeatureMap convert(const FeatureMap& x, DomainPair pair) const {
    pair.validate(cfg_.n_domains);
    Tensor<T> y = forward(to_tensor<T>(x), std::span<const DomainPair>(&pair, 1));
    return from_tensor(y, 0, pair.target);
  }

  NamedParams<T> named_parameters() const {
    NamedParams<T> out;
    in_.collect(out, "g.in");
    down1_.collect(out, "g.down1");
    down2_.collect(out, "g.down2");
    to1d_.collect(out, "g.to1d");
    for (std::size_t i = 0; i < kResidualBlocks; ++i) {
      res_conv_[i].collect(out, "g.res" + std::to_string(i));
      res_cin_[i].collect(out, "g.res" + std::to_string(i) + ".cin");
    }
    to2d_.collect(out, "g.to2d");
    up1_.collect(out, "g.up1");
    up2_.collect(out, "g.up2");
    out_.collect(out, "g.out");
    return out;
  }

  std::vector<Tensor<T>> parameters() const {
    std::vector<Tensor<T>> out;
    for (auto& [_, t] : named_parameters()) out.push_back(t);
    return out;
  }

  const CinParams<T>& cin_params(std::size_t block) const { return res_cin_.at(block); }

 private:
  void check_input(const Tensor<T>& x, std::size_t n_pairs) const {
    if (x.rank() != 4 || x.dim(1) != 1 || x.dim(2) != cfg_.n_mcep || x.dim(3) != cfg_.n_frames) {
      throw shape_error("generator expects [B,1," + std::to_string(cfg_.n_mcep) + "," +
                        std::to_string(cfg_.n_frames) + "], got " + shape_string(x.shape()));
    }
    if (n_pairs != x.dim(0)) throw shape_error("generator needs one domain pair per sample");
  }

  NetworkConfig cfg_;
  Conv2dLayer<T> in_, down1_, down2_, to1d_, to2d_, out_;
  std::vector<Conv2dLayer<T>> res_conv_;
  std::vector<CinParams<T>> res_cin_;
  ConvTranspose2dLayer<T> up1_, up2_;
};

// h: d_e -> d_e -> d_p with a leaky ReLU in between.
template <std::floating_point T>
struct ProjectionHead {
  LinearLayer<T> l1, l2;
  T slope = T(0.2);

  static ProjectionHead make(Rng& rng, std::size_t d_e, std::size_t d_p, T slope) {
    auto l1 = LinearLayer<T>::make(rng, d_e, d_e);
    auto l2 = LinearLayer<T>::make(rng, d_e, d_p);
    return {std::move(l1), std::move(l2), slope};
  }

  Tensor<T> operator()(const Tensor<T>& z) const {
    if (z.rank() != 2 || z.dim(1) != l1.weight.dim(0)) {
      throw shape_error("projection head expects [B," + std::to_string(l1.weight.dim(0)) +
                        "], got " + shape_string(z.shape()));
    }
    return l2(leaky_relu(l1(z), slope));
  }
  ProjectionHead frozen() const { return {l1.frozen(), l2.frozen(), slope}; }
  void collect(NamedParams<T>& out, const std::string& name) const {
    l1.collect(out, name + ".l1");
    l2.collect(out, name + ".l2");
  }
};

template <std::floating_point T>
class Discriminator {
 public:
  static constexpr std::size_t kWidth1 = 16, kWidth2 = 32;

  Discriminator() = default;

  Discriminator(const NetworkConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg.validate();
    enc1_ = Conv2dLayer<T>::make(rng, 1, 2 * kWidth1, 3, 3, 2, 2, 1, 1);
    enc2_ = Conv2dLayer<T>::make(rng, kWidth1, 2 * kWidth2, 3, 3, 2, 2, 1, 1);
    enc3_ = Conv2dLayer<T>::make(rng, kWidth2, 2 * cfg.d_e, 3, 3, 2, 2, 1, 1);
    head_ = ProjectionHead<T>::make(rng, cfg.d_e, cfg.d_p, static_cast<T>(cfg.head_slope));
    const std::size_t rows = std::size_t(cfg.n_domains) * std::size_t(cfg.n_domains);
    embedding_ = detail::uniform_param<T>(rng, {rows, cfg.embed_dim}, 1.0);
    real_fake_ = LinearLayer<T>::make(rng, cfg.d_e + cfg.embed_dim, 1);
    pair_proj_ = detail::uniform_param<T>(rng, {cfg.embed_dim, cfg.d_e},
                                          1.0 / std::sqrt(double(cfg.d_e)));
  }

  const NetworkConfig& config() const { return cfg_; }

  // D_e: x [B,1,n_mcep,n_frames] -> z [B,d_e].
  Tensor<T> encode(const Tensor<T>& x) const {
    if (x.rank() != 4 || x.dim(1) != 1 || x.dim(2) != cfg_.n_mcep || x.dim(3) != cfg_.n_frames) {
      throw shape_error("discriminator expects [B,1," + std::to_string(cfg_.n_mcep) + "," +
                        std::to_string(cfg_.n_frames) + "], got " + shape_string(x.shape()));
    }
    Tensor<T> h = glu(enc1_(x), 1);
    h = glu(enc2_(h), 1);
    h = glu(enc3_(h), 1);
    return mean(h, {2, 3});
  }

  // h: z [B,d_e] -> p [B,d_p].
  Tensor<T> project(const Tensor<T>& z) const { return head_(z); }

  // Real/fake logit from z under each ordered (source, target) pair.
  Tensor<T> logits(const Tensor<T>& z, std::span<const DomainPair> pairs) const {
    if (pairs.size() != z.dim(0)) throw shape_error("discriminator needs one pair per sample");
    const std::size_t b = z.dim(0);
    Tensor<T> e = index_select(embedding_, 0, pair_rows(pairs, cfg_.n_domains));
    Tensor<T> linear = reshape(real_fake_(concat<T>({z, e}, 1)), {b});
    Tensor<T> interaction = sum(matmul(e, pair_proj_) * z, {1});
    return linear + interaction;
  }

  // D(x, source, target) in (0, 1).
  Tensor<T> forward(const Tensor<T>& x, std::span<const DomainPair> pairs) const {
    return sigmoid(logits(encode(x), pairs));
  }

  Discriminator frozen() const {
    Discriminator d;
    d.cfg_ = cfg_;
    d.enc1_ = enc1_.frozen();
    d.enc2_ = enc2_.frozen();
    d.enc3_ = enc3_.frozen();
    d.head_ = head_.frozen();
    d.embedding_ = detail::frozen(embedding_);
    d.real_fake_ = real_fake_.frozen();
    d.pair_proj_ = detail::frozen(pair_proj_);
    return d;
  }

  NamedParams<T> named_parameters() const {
    NamedParams<T> out;
    enc1_.collect(out, "d.enc1");
    enc2_.collect(out, "d.enc2");
    enc3_.collect(out, "d.enc3");
    head_.collect(out, "d.head");
    out.emplace_back("d.embedding", embedding_);
    real_fake_.collect(out, "d.real_fake");
    out.emplace_back("d.pair_proj", pair_proj_);
    return out;
  }

  std::vector<Tensor<T>> parameters() const {
    std::vector<Tensor<T>> out;
    for (auto& [_, t] : named_parameters()) out.push_back(t);
    return out;
  }

  ProjectionHead<T>& head() { return head_; }
  const ProjectionHead<T>& head() const { return head_; }

  // Real/fake head parameters (linear part, bias, pair interaction).
  std::vector<Tensor<T>> real_fake_parameters() const {
    return {real_fake_.weight, real_fake_.bias, pair_proj_};
  }

 private:
  NetworkConfig cfg_;
  Conv2dLayer<T> enc1_, enc2_, enc3_;
  ProjectionHead<T> head_;
  Tensor<T> embedding_;
  LinearLayer<T> real_fake_;
  Tensor<T> pair_proj_;
};

// Copies parameter values between two identically structured networks.
template <std::floating_point T>
void copy_parameter_values(const NamedParams<T>& from, NamedParams<T> to) {
  if (from.size() != to.size()) throw std::invalid_argument("parameter list mismatch");
  for (std::size_t i = 0; i < from.size(); ++i) {
    if (from[i].first != to[i].first || from[i].second.shape() != to[i].second.shape()) {
      throw std::invalid_argument("parameter mismatch at " + from[i].first);
    }
    auto src = from[i].second.values();
    auto dst = to[i].second.mutable_values();
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

}  // namespace ssvc
