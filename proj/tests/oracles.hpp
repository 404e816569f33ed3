#pragma once

// Scalar-loop reference implementations. They share no code with the library
// beyond the parameter structs they read.

#include <algorithm>
#include <cmath>
#include <iterator>
#include <set>
#include <vector>

#include "glocal/heads.hpp"

namespace glocal::oracle {

struct LocalResult {
  std::vector<std::vector<double>> alpha;  // [L][S]
  std::vector<double> logits;              // [L]
};

inline LocalResult local_head(const LocalHead& h, const Tensor& states, const Mask& mask) {
  const std::size_t s_len = states.dim(0), d = states.dim(1);
  const std::size_t da = h.key_weight.dim(1), dv = h.value_weight.dim(1), dh = h.mlp_w1.dim(1);
  const std::size_t labels = h.label_embedding.dim(0);

  std::vector<std::vector<double>> key(s_len, std::vector<double>(da)), val(s_len, std::vector<double>(dv));
  for (std::size_t i = 0; i < s_len; ++i) {
    for (std::size_t a = 0; a < da; ++a) {
      double s = h.key_bias[a];
      for (std::size_t c = 0; c < d; ++c) s += states.at(i, c) * h.key_weight.at(c, a);
      key[i][a] = s;
    }
    for (std::size_t a = 0; a < dv; ++a) {
      double s = h.value_bias[a];
      for (std::size_t c = 0; c < d; ++c) s += states.at(i, c) * h.value_weight.at(c, a);
      val[i][a] = s;
    }
  }

  LocalResult r;
  r.alpha.assign(labels, std::vector<double>(s_len, 0.0));
  r.logits.assign(labels, 0.0);
  for (std::size_t j = 0; j < labels; ++j) {
    std::vector<double> score(s_len, 0.0);
    double best = -INFINITY;
    for (std::size_t i = 0; i < s_len; ++i) {
      if (!mask[i]) continue;
      for (std::size_t a = 0; a < da; ++a) score[i] += key[i][a] * h.label_embedding.at(j, a);
      score[i] /= h.tau;
      best = std::max(best, score[i]);
    }
    double z = 0.0;
    for (std::size_t i = 0; i < s_len; ++i)
      if (mask[i]) z += std::exp(score[i] - best);
    for (std::size_t i = 0; i < s_len; ++i) r.alpha[j][i] = mask[i] ? std::exp(score[i] - best) / z : 0.0;

    std::vector<double> v(dv, 0.0);
    for (std::size_t a = 0; a < dv; ++a)
      for (std::size_t i = 0; i < s_len; ++i) v[a] += r.alpha[j][i] * val[i][a];
    double out = h.mlp_b2[0];
    for (std::size_t u = 0; u < dh; ++u) {
      double hid = h.mlp_b1[u];
      for (std::size_t a = 0; a < dv; ++a) hid += v[a] * h.mlp_w1.at(a, u);
      out += std::max(hid, 0.0) * h.mlp_w2.at(u, 0);
    }
    r.logits[j] = out;
  }
  return r;
}

/// [B][L] logits of the global head.
inline std::vector<std::vector<double>> global_head(const GlobalHead& h, const Tensor& cls) {
  const std::size_t batch = cls.dim(0), d = cls.dim(1), labels = h.label_embedding.dim(0);
  std::vector<std::vector<double>> out(batch, std::vector<double>(labels, 0.0));
  for (std::size_t b = 0; b < batch; ++b) {
    std::vector<double> feat(cls.data().begin() + b * d, cls.data().begin() + (b + 1) * d);
    if (h.has_pooler) {
      std::vector<double> pooled(h.pooler_weight.dim(1));
      for (std::size_t a = 0; a < pooled.size(); ++a) {
        double s = h.pooler_bias[a];
        for (std::size_t c = 0; c < d; ++c) s += feat[c] * h.pooler_weight.at(c, a);
        pooled[a] = std::tanh(s);
      }
      feat = pooled;
    }
    for (std::size_t l = 0; l < labels; ++l) {
      double s = 0.0;
      for (std::size_t c = 0; c < feat.size(); ++c) s += feat[c] * h.label_embedding.at(l, c);
      out[b][l] = s;
    }
  }
  return out;
}

/// Mean of |set(top k) ∩ set(truth)| / k.
inline double precision_at_k(const std::vector<std::vector<int>>& ranked, const std::vector<std::vector<int>>& truths,
                             std::size_t k) {
  double total = 0.0;
  for (std::size_t d = 0; d < ranked.size(); ++d) {
    const std::set<int> top(ranked[d].begin(), ranked[d].begin() + static_cast<std::ptrdiff_t>(k));
    const std::set<int> truth(truths[d].begin(), truths[d].end());
    std::vector<int> both;
    std::set_intersection(top.begin(), top.end(), truth.begin(), truth.end(), std::back_inserter(both));
    total += static_cast<double>(both.size()) / static_cast<double>(k);
  }
  return total / static_cast<double>(ranked.size());
}

/// 0.5 KL(p||m) + 0.5 KL(q||m) with natural logs, converted to bits at the end.
inline double jsd(const std::vector<double>& p, const std::vector<double>& q) {
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = (p[i] + q[i]) / 2.0;
    if (p[i] > 0.0) total += 0.5 * p[i] * std::log(p[i] / m);
    if (q[i] > 0.0) total += 0.5 * q[i] * std::log(q[i] / m);
  }
  return total / std::log(2.0);
}

}  // namespace glocal::oracle
