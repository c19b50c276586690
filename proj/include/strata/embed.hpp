#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "strata/features.hpp"
#include "strata/types.hpp"
#include "strata/vocab.hpp"

namespace strata {

// Hashed bag-of-tokens embedding, L2-normalized. Strategies sharing no
// buckets are exactly orthogonal, which is what the selection step needs.
inline std::vector<double> embed_strategy(const std::vector<TokenId>& body,
                                          int d_embed,
                                          uint64_t* op_counter = nullptr) {
  if (body.empty()) throw std::invalid_argument("embed_strategy: empty strategy");
  if (d_embed < 1) throw std::invalid_argument("embed_strategy: d_embed < 1");
  const Vocab& vocab = Vocab::instance();
  std::vector<double> e(size_t(d_embed), 0.0);
  for (TokenId t : body) e[size_t(bucket_of(vocab.word(t), d_embed))] += 1.0;
  double norm2 = 0.0;
  for (double x : e) norm2 += x * x;
  const double inv = 1.0 / std::sqrt(norm2);
  for (double& x : e) x *= inv;
  if (op_counter) *op_counter += uint64_t(body.size()) + 2u * uint64_t(d_embed);
  return e;
}

// Farthest point selection over candidate embeddings:
//   1. seed with the candidate most aligned with the centroid of all
//      candidates (the most "typical" one),
//   2. repeatedly add the candidate whose worst-case similarity to the
//      already selected set is smallest.
// Ties break toward the lowest index. Returns indices in selection order.
// O(candidates * n * dim) via a running max-similarity per candidate.
inline std::vector<size_t> fps_select(const std::vector<std::vector<double>>& emb,
                                      size_t n, uint64_t* op_counter = nullptr) {
  if (n < 1) throw std::invalid_argument("fps_select: n < 1");
  if (emb.size() < n)
    throw std::invalid_argument("fps_select: fewer candidates than selections");
  const size_t dim = emb[0].size();
  for (const auto& e : emb)
    if (e.size() != dim) throw std::invalid_argument("fps_select: mixed dimensions");

  uint64_t ops = 0;
  auto dot = [&](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (size_t i = 0; i < dim; ++i) s += a[i] * b[i];
    ops += dim;
    return s;
  };

  std::vector<double> centroid(dim, 0.0);
  for (const auto& e : emb)
    for (size_t i = 0; i < dim; ++i) centroid[i] += e[i];
  for (size_t i = 0; i < dim; ++i) centroid[i] /= double(emb.size());
  ops += emb.size() * dim;

  std::vector<bool> taken(emb.size(), false);
  std::vector<size_t> selected;
  selected.reserve(n);

  size_t seed = 0;
  double best = -1e300;
  for (size_t i = 0; i < emb.size(); ++i) {
    const double s = dot(emb[i], centroid);
    if (s > best) { best = s; seed = i; }
  }
  taken[seed] = true;
  selected.push_back(seed);

  // max similarity of each remaining candidate to the selected set so far
  std::vector<double> max_sim(emb.size(), -1e300);
  size_t newest = seed;
  while (selected.size() < n) {
    for (size_t i = 0; i < emb.size(); ++i) {
      if (taken[i]) continue;
      const double s = dot(emb[i], emb[newest]);
      if (s > max_sim[i]) max_sim[i] = s;
    }
    size_t pick = 0;
    double low = 1e300;
    bool found = false;
    for (size_t i = 0; i < emb.size(); ++i) {
      if (taken[i]) continue;
      if (!found || max_sim[i] < low) { low = max_sim[i]; pick = i; found = true; }
    }
    taken[pick] = true;
    selected.push_back(pick);
    newest = pick;
  }
  if (op_counter) *op_counter += ops;
  return selected;
}

}  // namespace strata
