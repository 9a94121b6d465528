#pragma once

// Training objectives: the source-and-target adversarial loss, the siamese
// loss on augmented real views, the supervised contrastive loss and its
// fake-sample form, and the combined discriminator / generator objectives.

#include <stdexcept>
#include <vector>

#include "ssvc/augment.hpp"
#include "ssvc/conv.hpp"
#include "ssvc/networks.hpp"
#include "ssvc/tensor.hpp"

namespace ssvc {

inline constexpr double kProbabilityClamp = 1e-7;
inline constexpr double kDefaultTemperature = 0.5;

struct LossWeights {
  double lambda1 = 0.01;  // siamese term
  double lambda2 = 0.01;  // fake-sample contrastive term

  void validate() const {
    if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) {
      throw std::invalid_argument("loss weights must be non-negative");
    }
  }
};

// Row-wise -(p/|p|).(z/|z|) for P, Z of shape [B,d]; returns [B].
template <std::floating_point T>
Tensor<T> neg_cosine_rows(const Tensor<T>& p, const Tensor<T>& z) {
  if (p.rank() != 2 || p.shape() != z.shape()) {
    throw shape_error("neg_cosine of " + shape_string(p.shape()) + " and " +
                      shape_string(z.shape()));
  }
  return neg(sum(l2_normalize(p) * l2_normalize(z), {1}));
}

// Vectors of equal length; zero vectors raise zero_norm_error.
template <std::floating_point T>
Tensor<T> neg_cosine(const Tensor<T>& p, const Tensor<T>& z) {
  if (p.size() != z.size()) throw shape_error("neg_cosine length mismatch");
  return reshape(neg_cosine_rows(reshape(p, {1, p.size()}), reshape(z, {1, z.size()})), {1});
}

// Per-sample 1/2 D(p1, sg(z2)) + 1/2 D(p2, sg(z1)); returns [B].
template <std::floating_point T>
Tensor<T> simsiam_rows(const Tensor<T>& p1, const Tensor<T>& z1, const Tensor<T>& p2,
                       const Tensor<T>& z2) {
  return mul_scalar(neg_cosine_rows(p1, stop_gradient(z2)) + neg_cosine_rows(p2, stop_gradient(z1)),
                    T(0.5));
}

// Batch mean of the siamese loss between views x1 and x2 [B,1,M,T].
// `encoder` maps views to z [B,d_e]; `head` maps z to p.
template <std::floating_point T, typename Encoder, typename Head>
Tensor<T> simsiam_loss(const Tensor<T>& x1, const Tensor<T>& x2, const Encoder& encoder,
                       const Head& head) {
  if (x1.shape() != x2.shape()) throw shape_error("siamese views must share a shape");
  Tensor<T> z1 = encoder(x1);
  Tensor<T> z2 = encoder(x2);
  return mean(simsiam_rows(head(z1), z1, head(z2), z2));
}

// -1/|P| sum_{q in P} log softmax_j(s(anchor, c_j))[q], with
// s(a, b) = <a/|a|, b/|b|> / tau. anchor [d], candidates [K,d].
template <std::floating_point T>
Tensor<T> supcon_loss(const Tensor<T>& anchor, const Tensor<T>& candidates,
                      const std::vector<std::size_t>& positives, double tau = kDefaultTemperature) {
  if (positives.empty()) throw std::invalid_argument("supcon_loss needs at least one positive");
  if (!(tau > 0.0)) throw std::invalid_argument("temperature must be positive");
  if (candidates.rank() != 2 || candidates.dim(1) != anchor.size()) {
    throw shape_error("supcon candidates " + shape_string(candidates.shape()) +
                      " do not match anchor length " + std::to_string(anchor.size()));
  }
  for (auto q : positives) {
    if (q >= candidates.dim(0)) throw std::invalid_argument("positive index outside candidates");
  }
  const std::size_t d = anchor.size(), k = candidates.dim(0);
  Tensor<T> a = reshape(l2_normalize(reshape(anchor, {1, d})), {d, 1});
  Tensor<T> s = mul_scalar(reshape(matmul(l2_normalize(candidates), a), {k}), T(1.0 / tau));
  return logsumexp(s) - mean(index_select(s, 0, positives));
}

// (1/B) sum_i supcon(pf_i, [pf_{-i}; p1; p2], positives = pf_{-i}).
// With B = 1 there are no positives and the loss is defined as 0.
template <std::floating_point T>
Tensor<T> fake_contrastive_loss(const Tensor<T>& pf, const Tensor<T>& p1, const Tensor<T>& p2,
                                double tau = kDefaultTemperature) {
  if (pf.rank() != 2 || p1.shape() != pf.shape() || p2.shape() != pf.shape()) {
    throw shape_error("projected batch shapes differ: " + shape_string(pf.shape()) + ", " +
                      shape_string(p1.shape()) + ", " + shape_string(p2.shape()));
  }
  if (!(tau > 0.0)) throw std::invalid_argument("temperature must be positive");
  const std::size_t b = pf.dim(0);
  if (b == 1) return Tensor<T>::scalar(T(0));
  Tensor<T> nf = l2_normalize(pf);
  Tensor<T> all = concat<T>({nf, l2_normalize(p1), l2_normalize(p2)}, 0);
  Tensor<T> sims = mul_scalar(matmul(nf, transpose(all)), T(1.0 / tau));  // [B,3B]
  std::vector<Tensor<T>> per_anchor;
  per_anchor.reserve(b);
  for (std::size_t i = 0; i < b; ++i) {
    std::vector<std::size_t> cols;
    for (std::size_t j = 0; j < 3 * b; ++j) {
      if (j != i) cols.push_back(j);
    }
    Tensor<T> row = index_select(reshape(narrow(sims, 0, i, 1), {3 * b}), 0, cols);
    per_anchor.push_back(logsumexp(row) - mean(narrow(row, 0, 0, b - 1)));
  }
  return mean(concat(per_anchor, 0));
}

// mean_i [log D_real_i + log(1 - D_fake_i)], probabilities clamped to
// [1e-7, 1 - 1e-7].
template <std::floating_point T>
Tensor<T> st_adv_from_probs(const Tensor<T>& d_real, const Tensor<T>& d_fake) {
  if (d_real.shape() != d_fake.shape()) throw shape_error("real/fake probability shapes differ");
  const T lo = static_cast<T>(kProbabilityClamp), hi = static_cast<T>(1.0 - kProbabilityClamp);
  Tensor<T> real_term = log(clamp(d_real, lo, hi));
  Tensor<T> fake_term = log(add_scalar(neg(clamp(d_fake, lo, hi)), T(1)));
  return mean(real_term + fake_term);
}

inline std::vector<DomainPair> swapped(std::span<const DomainPair> pairs) {
  std::vector<DomainPair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back({p.target, p.source});
  return out;
}

// Real term D(x, c', c), fake term D(G(x, c, c'), c, c'), for pairs (c, c')
// and precomputed fakes = G(x, c, c').
template <std::floating_point T>
Tensor<T> st_adv_loss(const Tensor<T>& reals, std::span<const DomainPair> pairs,
                      const Tensor<T>& fakes, const Discriminator<T>& disc) {
  if (reals.shape() != fakes.shape()) throw shape_error("reals and fakes differ in shape");
  auto real_pairs = swapped(pairs);
  return st_adv_from_probs(disc.forward(reals, real_pairs), disc.forward(fakes, pairs));
}

template <std::floating_point T>
Tensor<T> st_adv_loss(const Tensor<T>& reals, std::span<const DomainPair> pairs,
                      const Generator<T>& gen, const Discriminator<T>& disc) {
  return st_adv_loss(reals, pairs, gen.forward(reals, pairs), disc);
}

template <std::floating_point T>
struct DiscriminatorLoss {
  Tensor<T> total;  // -adv + lambda1 * sim + lambda2 * con
  Tensor<T> adv;    // source-and-target adversarial value
  Tensor<T> sim;    // batch mean siamese loss on (t1(x), t2(x))
  Tensor<T> con;    // fake-sample contrastive loss
};

// `fakes` are generator outputs for (reals, pairs); gradient flow into the
// generator is cut here regardless of how they were produced.
template <std::floating_point T>
DiscriminatorLoss<T> discriminator_loss(const Tensor<T>& reals, std::span<const DomainPair> pairs,
                                        const Tensor<T>& fakes, const Tensor<T>& view1,
                                        const Tensor<T>& view2, const Discriminator<T>& disc,
                                        const LossWeights& weights, double tau = kDefaultTemperature) {
  weights.validate();
  Tensor<T> blocked = stop_gradient(fakes);
  Tensor<T> z_fake = disc.encode(blocked);
  Tensor<T> adv = st_adv_from_probs(disc.forward(reals, swapped(pairs)),
                                    sigmoid(disc.logits(z_fake, pairs)));
  Tensor<T> z1 = disc.encode(view1);
  Tensor<T> z2 = disc.encode(view2);
  Tensor<T> p1 = disc.project(z1);
  Tensor<T> p2 = disc.project(z2);
  Tensor<T> sim = mean(simsiam_rows(p1, z1, p2, z2));
  Tensor<T> con = fake_contrastive_loss(disc.project(z_fake), p1, p2, tau);
  Tensor<T> total = neg(adv) + mul_scalar(sim, static_cast<T>(weights.lambda1)) +
                    mul_scalar(con, static_cast<T>(weights.lambda2));
  return {total, adv, sim, con};
}

// Builds fakes and the t1/t2 views for a batch, then evaluates the
// discriminator objective.
template <std::floating_point T>
DiscriminatorLoss<T> discriminator_loss(std::span<const BatchItem> batch, const Generator<T>& gen,
                                        const Discriminator<T>& disc, const LossWeights& weights,
                                        const MaskSpec& t1, const MaskSpec& t2, Rng& aug_rng,
                                        double tau = kDefaultTemperature) {
  std::vector<const FeatureMap*> xs;
  std::vector<DomainPair> pairs;
  std::vector<FeatureMap> v1, v2;
  for (const auto& item : batch) {
    xs.push_back(&item.x);
    pairs.push_back(item.pair);
    auto [a, b] = augment_pair(item.x, t1, t2, aug_rng);
    v1.push_back(std::move(a));
    v2.push_back(std::move(b));
  }
  std::vector<const FeatureMap*> p1, p2;
  for (std::size_t i = 0; i < v1.size(); ++i) {
    p1.push_back(&v1[i]);
    p2.push_back(&v2[i]);
  }
  Tensor<T> reals = to_tensor<T>(xs);
  Tensor<T> fakes = stop_gradient(gen.forward(reals, pairs));
  return discriminator_loss(reals, pairs, fakes, to_tensor<T>(p1), to_tensor<T>(p2), disc, weights,
                            tau);
}

// The adversarial value with the discriminator held constant; only the
// generator receives gradient.
template <std::floating_point T>
Tensor<T> generator_loss(const Tensor<T>& reals, std::span<const DomainPair> pairs,
                         const Generator<T>& gen, const Discriminator<T>& disc) {
  return st_adv_loss(reals, pairs, gen, disc.frozen());
}

}  // namespace ssvc
