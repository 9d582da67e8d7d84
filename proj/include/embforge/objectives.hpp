// Copyright 2026 the embforge authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <atomic>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "embforge/error.hpp"
#include "embforge/numerics.hpp"

namespace embforge {

/// Every scalar hyperparameter of the contrastive, focal, mixing, distillation
/// and matryoshka objectives.
struct LossConfig {
  double tau_cl = 0.01;
  double tau_kl = 0.05;
  double gamma = 0.5;
  bool enable_pairwise_mix = true;
  bool enable_listwise_mix = true;
  /// Strictly descending prefix sizes; empty means the full dimension only.
  std::vector<int> mrl_dims;
  std::vector<double> mrl_weights;
  double cl_weight = 0.3;
  double kl_weight = 0.7;

  void validate(int dim) const;
  /// (dims, weights) with the empty-list default resolved against `dim`.
  std::vector<int> resolved_dims(int dim) const;
  std::vector<double> resolved_weights() const;
};

/// Raw (not necessarily normalized) embeddings of one batch. Hard negatives
/// of sample i occupy rows [i*M, (i+1)*M) of `hard_negatives`.
template <typename Scalar>
struct EmbeddedBatch {
  Mat<Scalar> queries;
  Mat<Scalar> positives;
  Mat<Scalar> hard_negatives;
  int negatives_per_sample = 0;

  int size() const { return static_cast<int>(queries.rows()); }
  int dim() const { return static_cast<int>(queries.cols()); }

  void validate() const {
    require(queries.rows() >= 1, ErrorKind::kDimension, "batch: N must be >= 1");
    require(positives.rows() == queries.rows() && positives.cols() == queries.cols(),
            ErrorKind::kDimension, "batch: positives shape differs from queries");
    require(negatives_per_sample >= 0 &&
                hard_negatives.rows() == queries.rows() * negatives_per_sample &&
                (hard_negatives.rows() == 0 || hard_negatives.cols() == queries.cols()),
            ErrorKind::kDimension, "batch: hard negative tensor is not N x M x d");
    require(queries.allFinite() && positives.allFinite() && hard_negatives.allFinite(),
            ErrorKind::kNumeric, "batch: non-finite embedding");
  }

  /// First `k` coordinates of every row.
  EmbeddedBatch prefix(int k) const {
    EmbeddedBatch out;
    out.queries = queries.leftCols(k);
    out.positives = positives.leftCols(k);
    out.hard_negatives = hard_negatives.rows() > 0 ? Mat<Scalar>(hard_negatives.leftCols(k))
                                                   : Mat<Scalar>(0, k);
    out.negatives_per_sample = negatives_per_sample;
    return out;
  }

  EmbeddedBatch zeros_like() const {
    EmbeddedBatch out;
    out.queries = Mat<Scalar>::Zero(queries.rows(), queries.cols());
    out.positives = Mat<Scalar>::Zero(positives.rows(), positives.cols());
    out.hard_negatives = Mat<Scalar>::Zero(hard_negatives.rows(), queries.cols());
    out.negatives_per_sample = negatives_per_sample;
    return out;
  }

  auto negatives_of(int i) const {
    return hard_negatives.middleRows(static_cast<Eigen::Index>(i) * negatives_per_sample,
                                     negatives_per_sample);
  }
};

/// Gradient of a loss with respect to every embedding of the batch.
template <typename Scalar>
using BatchGradients = EmbeddedBatch<Scalar>;

struct SampleDiagnostics {
  double positive_prob = 0;
  double focal_weight = 0;
  double log_denominator = 0;
  int synthetic_negative_count = 0;
};

struct LossBreakdown {
  double total = 0;
  std::vector<SampleDiagnostics> per_sample;
};

/// Random choices made by online mixing for one step. Drawn once and shared
/// by every matryoshka prefix so all prefixes see the same synthetic set.
struct MixingPlan {
  struct Pair {
    int first = 0;
    int second = 0;
    double lambda = 0.5;
  };
  std::vector<std::optional<Pair>> pairwise;  // per sample
  bool listwise = false;
};

MixingPlan draw_mixing_plan(int batch_size, int negatives_per_sample, const LossConfig& cfg,
                            SeededRng& rng);

/// Counts calls into the hard-negative and mixing paths.
struct ObjectiveProbe {
  std::atomic<long> pairwise_mixes{0};
  std::atomic<long> listwise_mixes{0};
  std::atomic<long> hard_negative_batches{0};
  void reset() {
    pairwise_mixes = 0;
    listwise_mixes = 0;
    hard_negative_batches = 0;
  }
};
ObjectiveProbe& objective_probe();

/// w_i = (1 - p_i)^gamma.
std::vector<double> focal_weights(std::span<const double> positive_probs, double gamma);

// ---------------------------------------------------------------------------
// Mixing

template <typename DA, typename DB>
Vec<typename DA::Scalar> mix_pairwise(const Eigen::MatrixBase<DA>& neg_j,
                                      const Eigen::MatrixBase<DB>& neg_k, double lambda) {
  using Scalar = typename DA::Scalar;
  require(neg_j.size() == neg_k.size(), ErrorKind::kDimension, "mix_pairwise: dimension mismatch");
  require(lambda > 0.0 && lambda < 1.0, ErrorKind::kConfig, "mix_pairwise: lambda must lie in (0,1)");
  ++objective_probe().pairwise_mixes;
  const Scalar l = static_cast<Scalar>(lambda);
  Vec<Scalar> blend = l * neg_j + (Scalar(1) - l) * neg_k;
  require(blend.norm() > Scalar(0), ErrorKind::kDomain, "mix_pairwise: zero blend vector");
  return l2_normalize(blend);
}

/// Softmax of raw cosine similarities between `query` and each row of `negs`
/// (no temperature).
template <typename DQ, typename DN>
Vec<typename DQ::Scalar> listwise_weights(const Eigen::MatrixBase<DQ>& query,
                                          const Eigen::MatrixBase<DN>& negs) {
  using Scalar = typename DQ::Scalar;
  require(negs.rows() >= 1, ErrorKind::kConfig, "mix_listwise: need at least one negative");
  Vec<Scalar> sims(negs.rows());
  for (Eigen::Index m = 0; m < negs.rows(); ++m) sims[m] = cosine_sim(query, negs.row(m).transpose());
  return softmax(sims, Scalar(1));
}

template <typename DQ, typename DN>
Vec<typename DQ::Scalar> mix_listwise(const Eigen::MatrixBase<DQ>& query,
                                      const Eigen::MatrixBase<DN>& negs) {
  using Scalar = typename DQ::Scalar;
  ++objective_probe().listwise_mixes;
  const Vec<Scalar> w = listwise_weights(query, negs);
  Vec<Scalar> blend = negs.transpose() * w;
  require(blend.norm() > Scalar(0), ErrorKind::kDomain, "mix_listwise: zero blend vector");
  return l2_normalize(blend);
}

namespace detail {

/// d/dx of x/|x| applied to upstream gradient g, where u = x/|x|.
template <typename Scalar, typename DU, typename DG>
Vec<Scalar> normalize_backward(const Eigen::MatrixBase<DU>& u, Scalar norm,
                               const Eigen::MatrixBase<DG>& g) {
  return (g - u * u.dot(g)) / norm;
}

template <typename Scalar>
struct NormalizedRows {
  Mat<Scalar> unit;
  Vec<Scalar> norms;
};

template <typename Scalar>
NormalizedRows<Scalar> normalize_with_norms(const Mat<Scalar>& m) {
  NormalizedRows<Scalar> out{m, Vec<Scalar>(m.rows())};
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const Scalar n = m.row(r).norm();
    require(n > Scalar(0), ErrorKind::kDomain, "zero-norm embedding in batch (row " + std::to_string(r) + ")");
    out.norms[r] = n;
    out.unit.row(r) /= n;
  }
  return out;
}

template <typename Scalar>
void rows_normalize_backward(const NormalizedRows<Scalar>& nr, const Mat<Scalar>& g_unit,
                             Mat<Scalar>& g_raw) {
  for (Eigen::Index r = 0; r < nr.unit.rows(); ++r) {
    g_raw.row(r) +=
        normalize_backward<Scalar>(nr.unit.row(r).transpose(), nr.norms[r], g_unit.row(r).transpose())
            .transpose();
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Contrastive objective with focal weighting and online mixing

/// Settings of one contrastive evaluation (a subset of LossConfig).
struct ContrastiveSettings {
  double tau = 0.01;
  double gamma = 0.0;
};

/// Focal-weighted InfoNCE over in-batch positives, every sample's hard
/// negatives and, when `plan` asks for them, one pair-wise and one list-wise
/// synthetic negative per sample. Gradients w.r.t. the raw embeddings are
/// accumulated into `grads` when non-null. Focal weights are treated as
/// constants; `fixed_weights` overrides them.
template <typename Scalar>
LossBreakdown contrastive_loss(const EmbeddedBatch<Scalar>& batch, const ContrastiveSettings& s,
                               const MixingPlan& plan, BatchGradients<Scalar>* grads = nullptr,
                               const std::vector<double>* fixed_weights = nullptr) {
  batch.validate();
  require(s.tau > 0.0, ErrorKind::kConfig, "contrastive loss: tau must be positive");
  require(s.gamma >= 0.0, ErrorKind::kConfig, "contrastive loss: gamma must be >= 0");
  const int n = batch.size();
  const int m = batch.negatives_per_sample;
  const Eigen::Index d = batch.dim();
  const bool use_pairs = !plan.pairwise.empty();
  require(!use_pairs || static_cast<int>(plan.pairwise.size()) == n, ErrorKind::kConfig,
          "mixing plan does not match batch size");
  require(!use_pairs || m >= 2, ErrorKind::kConfig, "pair-wise mixing requires M >= 2");
  require(!plan.listwise || m >= 1, ErrorKind::kConfig, "list-wise mixing requires M >= 1");
  require(!fixed_weights || static_cast<int>(fixed_weights->size()) == n, ErrorKind::kDimension,
          "fixed focal weights do not match batch size");

  const auto q = detail::normalize_with_norms(batch.queries);
  const auto p = detail::normalize_with_norms(batch.positives);
  const auto neg = detail::normalize_with_norms(batch.hard_negatives);
  if (m > 0) ++objective_probe().hard_negative_batches;

  // Synthetic negatives.
  std::vector<int> pair_owner, list_owner;
  std::vector<Vec<Scalar>> pair_raw, list_raw, list_w;
  for (int j = 0; j < n && use_pairs; ++j) {
    if (!plan.pairwise[static_cast<std::size_t>(j)]) continue;
    const auto& pr = *plan.pairwise[static_cast<std::size_t>(j)];
    require(pr.first != pr.second && pr.first >= 0 && pr.second >= 0 && pr.first < m && pr.second < m,
            ErrorKind::kConfig, "mixing plan: invalid pair");
    const Scalar l = static_cast<Scalar>(pr.lambda);
    pair_raw.push_back(l * neg.unit.row(j * m + pr.first).transpose() +
                       (Scalar(1) - l) * neg.unit.row(j * m + pr.second).transpose());
    pair_owner.push_back(j);
    ++objective_probe().pairwise_mixes;
  }
  for (int j = 0; j < n && plan.listwise; ++j) {
    const auto negs = neg.unit.middleRows(static_cast<Eigen::Index>(j) * m, m);
    Vec<Scalar> sims = negs * q.unit.row(j).transpose();
    Vec<Scalar> w = softmax(sims, Scalar(1));
    list_raw.push_back(negs.transpose() * w);
    list_w.push_back(std::move(w));
    list_owner.push_back(j);
    ++objective_probe().listwise_mixes;
  }
  const Eigen::Index n_pair = static_cast<Eigen::Index>(pair_raw.size());
  const Eigen::Index n_list = static_cast<Eigen::Index>(list_raw.size());
  Vec<Scalar> pair_norm(n_pair), list_norm(n_list);

  // Candidate rows: positives | hard negatives | pair-wise | list-wise.
  const Eigen::Index off_neg = n, off_pair = off_neg + static_cast<Eigen::Index>(n) * m,
                     off_list = off_pair + n_pair, total = off_list + n_list;
  Mat<Scalar> cand(total, d);
  cand.topRows(n) = p.unit;
  if (m > 0) cand.middleRows(off_neg, static_cast<Eigen::Index>(n) * m) = neg.unit;
  for (Eigen::Index r = 0; r < n_pair; ++r) {
    pair_norm[r] = pair_raw[static_cast<std::size_t>(r)].norm();
    require(pair_norm[r] > Scalar(0), ErrorKind::kDomain, "pair-wise mix: zero blend vector");
    cand.row(off_pair + r) = pair_raw[static_cast<std::size_t>(r)].transpose() / pair_norm[r];
  }
  for (Eigen::Index r = 0; r < n_list; ++r) {
    list_norm[r] = list_raw[static_cast<std::size_t>(r)].norm();
    require(list_norm[r] > Scalar(0), ErrorKind::kDomain, "list-wise mix: zero blend vector");
    cand.row(off_list + r) = list_raw[static_cast<std::size_t>(r)].transpose() / list_norm[r];
  }

  const Scalar inv_tau = Scalar(1.0 / s.tau);
  Mat<Scalar> logits = (q.unit * cand.transpose()) * inv_tau;

  LossBreakdown out;
  out.per_sample.resize(static_cast<std::size_t>(n));
  Mat<Scalar> g_logits = grads ? Mat<Scalar>::Zero(n, total) : Mat<Scalar>();
  double loss_sum = 0;
  for (int i = 0; i < n; ++i) {
    const Scalar lse = log_sum_exp(logits.row(i).transpose());
    const Scalar log_p = logits(i, i) - lse;
    auto& diag = out.per_sample[static_cast<std::size_t>(i)];
    diag.positive_prob = std::exp(static_cast<double>(log_p));
    diag.log_denominator = static_cast<double>(lse);
    diag.synthetic_negative_count = static_cast<int>(n_pair + n_list);
    diag.focal_weight = fixed_weights ? (*fixed_weights)[static_cast<std::size_t>(i)]
                                      : std::pow(1.0 - diag.positive_prob, s.gamma);
    loss_sum += -diag.focal_weight * static_cast<double>(log_p);
    if (grads) {
      const Scalar coef = static_cast<Scalar>(diag.focal_weight / n);
      g_logits.row(i) = (logits.row(i).array() - lse).exp() * coef;
      g_logits(i, i) -= coef;
    }
  }
  out.total = loss_sum / n;
  if (!grads) return out;

  require(grads->queries.rows() == n && grads->hard_negatives.rows() == batch.hard_negatives.rows(),
          ErrorKind::kDimension, "gradient buffer does not match batch");
  Mat<Scalar> g_q = (g_logits * cand) * inv_tau;
  Mat<Scalar> g_cand = (g_logits.transpose() * q.unit) * inv_tau;
  Mat<Scalar> g_p = g_cand.topRows(n);
  Mat<Scalar> g_neg = m > 0 ? Mat<Scalar>(g_cand.middleRows(off_neg, static_cast<Eigen::Index>(n) * m))
                            : Mat<Scalar>(0, d);

  for (Eigen::Index r = 0; r < n_pair; ++r) {
    const int j = pair_owner[static_cast<std::size_t>(r)];
    const auto& pr = *plan.pairwise[static_cast<std::size_t>(j)];
    const Vec<Scalar> g_raw = detail::normalize_backward<Scalar>(
        cand.row(off_pair + r).transpose(), pair_norm[r], g_cand.row(off_pair + r).transpose());
    const Scalar l = static_cast<Scalar>(pr.lambda);
    g_neg.row(j * m + pr.first) += l * g_raw.transpose();
    g_neg.row(j * m + pr.second) += (Scalar(1) - l) * g_raw.transpose();
  }
  for (Eigen::Index r = 0; r < n_list; ++r) {
    const int j = list_owner[static_cast<std::size_t>(r)];
    const auto negs = neg.unit.middleRows(static_cast<Eigen::Index>(j) * m, m);
    const Vec<Scalar>& w = list_w[static_cast<std::size_t>(r)];
    const Vec<Scalar> g_raw = detail::normalize_backward<Scalar>(
        cand.row(off_list + r).transpose(), list_norm[r], g_cand.row(off_list + r).transpose());
    // blend = sum_m w_m n_m; w = softmax(n q).
    Vec<Scalar> g_w = negs * g_raw;
    const Scalar wg = w.dot(g_w);
    Vec<Scalar> g_sims = w.array() * (g_w.array() - wg);
    for (int k = 0; k < m; ++k) {
      g_neg.row(j * m + k) += w[k] * g_raw.transpose() + g_sims[k] * q.unit.row(j);
    }
    g_q.row(j) += (negs.transpose() * g_sims).transpose();
  }

  detail::rows_normalize_backward(q, g_q, grads->queries);
  detail::rows_normalize_backward(p, g_p, grads->positives);
  if (m > 0) detail::rows_normalize_backward(neg, g_neg, grads->hard_negatives);
  return out;
}

/// Plain InfoNCE: uniform weights, no synthetic negatives.
template <typename Scalar>
LossBreakdown infonce_loss(const EmbeddedBatch<Scalar>& batch, double tau,
                           BatchGradients<Scalar>* grads = nullptr) {
  return contrastive_loss(batch, ContrastiveSettings{tau, 0.0}, MixingPlan{}, grads);
}

/// Focal-weighted InfoNCE with freshly drawn mixing at `cfg.tau_cl`.
template <typename Scalar>
LossBreakdown contrastive_loss_full(const EmbeddedBatch<Scalar>& batch, const LossConfig& cfg,
                                    SeededRng& rng, BatchGradients<Scalar>* grads = nullptr) {
  const MixingPlan plan = draw_mixing_plan(batch.size(), batch.negatives_per_sample, cfg, rng);
  return contrastive_loss(batch, ContrastiveSettings{cfg.tau_cl, cfg.gamma}, plan, grads);
}

// ---------------------------------------------------------------------------
// KL distillation

inline constexpr double kProbabilityFloor = 1e-30;

/// Mean over rows of KL(P_t || P_s) where each P is a temperature softmax of
/// its score row. The teacher carries no gradient; d/d(student_scores) is
/// written to `grad_student` when non-null.
template <typename Scalar>
double kl_distill_loss(const Mat<Scalar>& teacher_scores, const Mat<Scalar>& student_scores,
                       double tau, Mat<Scalar>* grad_student = nullptr) {
  require(tau > 0.0, ErrorKind::kConfig, "kl_distill_loss: tau must be positive");
  require(teacher_scores.rows() == student_scores.rows() &&
              teacher_scores.cols() == student_scores.cols() && teacher_scores.rows() >= 1 &&
              teacher_scores.cols() >= 1,
          ErrorKind::kDimension, "kl_distill_loss: score matrices differ in shape");
  const Eigen::Index rows = teacher_scores.rows();
  const double log_floor = std::log(kProbabilityFloor);
  if (grad_student) *grad_student = Mat<Scalar>::Zero(rows, student_scores.cols());
  double total = 0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Vec<double> zt = teacher_scores.row(r).transpose().template cast<double>() / tau;
    const Vec<double> zs = student_scores.row(r).transpose().template cast<double>() / tau;
    const Vec<double> log_pt = zt.array() - log_sum_exp(zt);
    const Vec<double> log_ps = zs.array() - log_sum_exp(zs);
    double kl = 0;
    for (Eigen::Index c = 0; c < zt.size(); ++c) {
      const double pt = std::exp(log_pt[c]);
      if (pt == 0.0) continue;
      kl += pt * (std::max(log_pt[c], log_floor) - std::max(log_ps[c], log_floor));
    }
    total += kl;
    if (grad_student) {
      for (Eigen::Index c = 0; c < zt.size(); ++c) {
        (*grad_student)(r, c) =
            static_cast<Scalar>((std::exp(log_ps[c]) - std::exp(log_pt[c])) / (tau * rows));
      }
    }
  }
  return total / rows;
}

/// Student score rows [cos(q_i, p_i), cos(q_i, n_i1), ..., cos(q_i, n_iM)].
template <typename Scalar>
Mat<Scalar> student_score_rows(const EmbeddedBatch<Scalar>& batch) {
  batch.validate();
  const int n = batch.size(), m = batch.negatives_per_sample;
  Mat<Scalar> out(n, 1 + m);
  for (int i = 0; i < n; ++i) {
    out(i, 0) = cosine_sim(batch.queries.row(i), batch.positives.row(i));
    for (int k = 0; k < m; ++k) out(i, 1 + k) = cosine_sim(batch.queries.row(i), batch.hard_negatives.row(i * m + k));
  }
  return out;
}

/// KL distillation from embeddings: student scores come from the batch and
/// gradients flow back to the raw embeddings.
template <typename Scalar>
double kl_distill_batch(const EmbeddedBatch<Scalar>& batch, const Mat<Scalar>& teacher_scores,
                        double tau, BatchGradients<Scalar>* grads = nullptr) {
  batch.validate();
  const int n = batch.size(), m = batch.negatives_per_sample;
  require(teacher_scores.rows() == n && teacher_scores.cols() == 1 + m, ErrorKind::kData,
          "teacher score rows do not cover the batch");
  const auto q = detail::normalize_with_norms(batch.queries);
  const auto p = detail::normalize_with_norms(batch.positives);
  const auto neg = detail::normalize_with_norms(batch.hard_negatives);
  Mat<Scalar> scores(n, 1 + m);
  for (int i = 0; i < n; ++i) {
    scores(i, 0) = q.unit.row(i).dot(p.unit.row(i));
    for (int k = 0; k < m; ++k) scores(i, 1 + k) = q.unit.row(i).dot(neg.unit.row(i * m + k));
  }
  Mat<Scalar> g_scores;
  const double loss = kl_distill_loss(teacher_scores, scores, tau, grads ? &g_scores : nullptr);
  if (!grads) return loss;
  Mat<Scalar> g_q = Mat<Scalar>::Zero(n, batch.dim());
  Mat<Scalar> g_p = Mat<Scalar>::Zero(n, batch.dim());
  Mat<Scalar> g_neg = Mat<Scalar>::Zero(batch.hard_negatives.rows(), batch.dim());
  for (int i = 0; i < n; ++i) {
    g_q.row(i) += g_scores(i, 0) * p.unit.row(i);
    g_p.row(i) += g_scores(i, 0) * q.unit.row(i);
    for (int k = 0; k < m; ++k) {
      g_q.row(i) += g_scores(i, 1 + k) * neg.unit.row(i * m + k);
      g_neg.row(i * m + k) += g_scores(i, 1 + k) * q.unit.row(i);
    }
  }
  detail::rows_normalize_backward(q, g_q, grads->queries);
  detail::rows_normalize_backward(p, g_p, grads->positives);
  if (m > 0) detail::rows_normalize_backward(neg, g_neg, grads->hard_negatives);
  return loss;
}

// ---------------------------------------------------------------------------
// Matryoshka wrapping and the blended distillation objective

/// sum_k weight_k * base(prefix_k(batch)). `base(sub_batch, sub_grads_or_null,
/// dim_index)` returns the loss of one prefix; prefixes are re-normalized by
/// the cosine inside every base loss. Weights are used as given.
template <typename Scalar, typename BaseLoss>
double mrl_wrap(const EmbeddedBatch<Scalar>& batch, std::span<const int> dims,
                std::span<const double> weights, BaseLoss&& base,
                BatchGradients<Scalar>* grads = nullptr) {
  require(dims.size() == weights.size() && !dims.empty(), ErrorKind::kConfig,
          "mrl: dims and weights differ in length");
  double total = 0;
  for (std::size_t t = 0; t < dims.size(); ++t) {
    const int k = dims[t];
    require(k >= 1 && k <= batch.dim(), ErrorKind::kConfig,
            "mrl: dimension " + std::to_string(k) + " exceeds embedding size " + std::to_string(batch.dim()));
    const bool full = k == batch.dim();
    std::optional<EmbeddedBatch<Scalar>> sub;
    if (!full) sub = batch.prefix(k);
    const EmbeddedBatch<Scalar>& b = full ? batch : *sub;
    if (grads) {
      BatchGradients<Scalar> g = b.zeros_like();
      total += weights[t] * base(b, &g, t);
      const Scalar w = static_cast<Scalar>(weights[t]);
      grads->queries.leftCols(k) += w * g.queries;
      grads->positives.leftCols(k) += w * g.positives;
      if (g.hard_negatives.rows() > 0) grads->hard_negatives.leftCols(k) += w * g.hard_negatives;
    } else {
      total += weights[t] * base(b, static_cast<BatchGradients<Scalar>*>(nullptr), t);
    }
  }
  return total;
}

/// Per-prefix focal weights, used to hold the weights constant when checking
/// gradients against finite differences.
using FocalOverride = std::vector<std::vector<double>>;

struct ObjectiveValue {
  double total = 0;
  double contrastive = 0;            // MRL-wrapped contrastive term (unweighted by cl_weight)
  std::optional<double> kl;          // MRL-wrapped KL term, when present
  std::vector<LossBreakdown> per_dim;  // contrastive breakdown per prefix
};

/// MRL-wrapped focal contrastive objective at cfg.tau_cl under `plan`.
template <typename Scalar>
ObjectiveValue contrastive_objective(const EmbeddedBatch<Scalar>& batch, const LossConfig& cfg,
                                     const MixingPlan& plan, BatchGradients<Scalar>* grads = nullptr,
                                     const FocalOverride* focal = nullptr) {
  cfg.validate(batch.dim());
  const auto dims = cfg.resolved_dims(batch.dim());
  const auto weights = cfg.resolved_weights();
  ObjectiveValue out;
  out.per_dim.resize(dims.size());
  out.contrastive = mrl_wrap<Scalar>(
      batch, dims, weights,
      [&](const EmbeddedBatch<Scalar>& b, BatchGradients<Scalar>* g, std::size_t t) {
        out.per_dim[t] = contrastive_loss(b, ContrastiveSettings{cfg.tau_cl, cfg.gamma}, plan, g,
                                          focal ? &(*focal)[t] : nullptr);
        return out.per_dim[t].total;
      },
      grads);
  out.total = out.contrastive;
  return out;
}

/// MRL-wrapped KL term at cfg.tau_kl.
template <typename Scalar>
double kl_objective(const EmbeddedBatch<Scalar>& batch, const Mat<Scalar>& teacher_scores,
                    const LossConfig& cfg, BatchGradients<Scalar>* grads = nullptr) {
  cfg.validate(batch.dim());
  const auto dims = cfg.resolved_dims(batch.dim());
  const auto weights = cfg.resolved_weights();
  return mrl_wrap<Scalar>(
      batch, dims, weights,
      [&](const EmbeddedBatch<Scalar>& b, BatchGradients<Scalar>* g, std::size_t) {
        return kl_distill_batch(b, teacher_scores, cfg.tau_kl, g);
      },
      grads);
}

/// cl_weight * contrastive + kl_weight * KL, both MRL-wrapped.
template <typename Scalar>
ObjectiveValue distill_objective(const EmbeddedBatch<Scalar>& batch, const Mat<Scalar>& teacher_scores,
                                 const LossConfig& cfg, const MixingPlan& plan,
                                 BatchGradients<Scalar>* grads = nullptr,
                                 const FocalOverride* focal = nullptr) {
  require(teacher_scores.rows() == batch.size(), ErrorKind::kData,
          "distill: missing teacher rows for batch");
  std::optional<BatchGradients<Scalar>> g_cl, g_kl;
  if (grads) {
    g_cl = batch.zeros_like();
    g_kl = batch.zeros_like();
  }
  ObjectiveValue out = contrastive_objective(batch, cfg, plan, grads ? &*g_cl : nullptr, focal);
  out.kl = kl_objective(batch, teacher_scores, cfg, grads ? &*g_kl : nullptr);
  out.total = cfg.cl_weight * out.contrastive + cfg.kl_weight * *out.kl;
  if (grads) {
    const Scalar wc = static_cast<Scalar>(cfg.cl_weight), wk = static_cast<Scalar>(cfg.kl_weight);
    grads->queries += wc * g_cl->queries + wk * g_kl->queries;
    grads->positives += wc * g_cl->positives + wk * g_kl->positives;
    grads->hard_negatives += wc * g_cl->hard_negatives + wk * g_kl->hard_negatives;
  }
  return out;
}

}  // namespace embforge
