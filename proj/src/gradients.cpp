// Copyright 2026 The FineReward Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "finereward/gradients.hpp"

#include <atomic>
#include <cmath>
#include <sstream>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "finereward/errors.hpp"

namespace finereward {

namespace {

double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

bool has_criteria_labels(const AnnotatedPair& p) {
  return p.criteria_a.present_count() > 0 || p.criteria_b.present_count() > 0;
}

bool has_aspect_prefs(const AnnotatedPair& p) {
  for (PrefLabel v : p.aspect_prefs) {
    if (v != PrefLabel::Missing) return true;
  }
  return false;
}

bool has_decided_aspect(const AnnotatedPair& p) {
  for (PrefLabel v : p.aspect_prefs) {
    if (v == PrefLabel::A || v == PrefLabel::B) return true;
  }
  return false;
}

// Forward pass keeping the activations the backward pass needs.
struct ForwardCache {
  Vector gate_hidden;  // tanh of g's hidden layer
  Vector crit_hidden;  // tanh of g''s hidden layer
  Vector gates;        // within-aspect softmax of g'(h)
  Vector raw;          // f(h)
  HeadOutput out;
};

ForwardCache forward_cached(const RewardHeadParams& p, const FeatureVector& h,
                            const CriteriaTaxonomy& t) {
  const ParamTensors& w = p.tensors;
  ForwardCache fc;
  fc.gate_hidden = (w.aspect_gate.hidden.weight * h +
                    w.aspect_gate.hidden.bias)
                       .array()
                       .tanh();
  const Vector gate_logits =
      w.aspect_gate.out.weight * fc.gate_hidden + w.aspect_gate.out.bias;
  fc.crit_hidden = (w.criteria_gate.hidden.weight * h +
                    w.criteria_gate.hidden.bias)
                       .array()
                       .tanh();
  const Vector crit_logits =
      w.criteria_gate.out.weight * fc.crit_hidden + w.criteria_gate.out.bias;
  fc.raw = w.score.weight * h + w.score.bias;

  fc.out.ar = softmax(gate_logits);
  fc.gates.resize(p.num_criteria());
  fc.out.criteria.resize(p.num_criteria());
  fc.out.aspect_sums.resize(p.num_aspects());
  for (const AspectInfo& a : t.aspects()) {
    const Vector seg = softmax(crit_logits.segment(a.first, a.count));
    double sum = 0.0;
    for (int k = 0; k < a.count; ++k) {
      fc.gates[a.first + k] = seg[k];
      const double c = seg[k] * fc.raw[a.first + k];
      fc.out.criteria[a.first + k] = c;
      sum += c;
    }
    fc.out.aspect_sums[a.id] = sum;
  }
  fc.out.os = overall_score(fc.out.aspect_sums, fc.out.ar);
  return fc;
}

// Accumulates d(loss)/d(params) for one side given the upstream gradients
// d_criteria, d_sums and d_os.
void backward_side(const RewardHeadParams& p, const CriteriaTaxonomy& t,
                   const FeatureVector& h, const ForwardCache& fc,
                   Vector d_criteria, Vector d_sums, double d_os,
                   GradientSet& g) {
  const ParamTensors& w = p.tensors;

  // OS = sum_i S[i] * AR[i]
  Vector d_ar = Vector::Zero(p.num_aspects());
  if (d_os != 0.0) {
    d_sums += d_os * fc.out.ar;
    d_ar = d_os * fc.out.aspect_sums;
  }

  // S[i] = sum_{t in U_i} C[t]
  for (const AspectInfo& a : t.aspects()) {
    for (int k = 0; k < a.count; ++k) {
      d_criteria[a.first + k] += d_sums[a.id];
    }
  }

  // C = gates .* raw
  const Vector d_raw = d_criteria.cwiseProduct(fc.gates);
  const Vector d_gates = d_criteria.cwiseProduct(fc.raw);

  // f
  g.score.weight.noalias() += d_raw * h.transpose();
  g.score.bias += d_raw;

  // within-aspect softmax
  Vector d_crit_logits(p.num_criteria());
  for (const AspectInfo& a : t.aspects()) {
    const auto seg = fc.gates.segment(a.first, a.count);
    const auto d_seg = d_gates.segment(a.first, a.count);
    const double dot = seg.dot(d_seg);
    d_crit_logits.segment(a.first, a.count) =
        seg.cwiseProduct((d_seg.array() - dot).matrix());
  }

  // g' output + hidden
  g.criteria_gate.out.weight.noalias() +=
      d_crit_logits * fc.crit_hidden.transpose();
  g.criteria_gate.out.bias += d_crit_logits;
  const Vector d_crit_hidden =
      w.criteria_gate.out.weight.transpose() * d_crit_logits;
  const Vector d_crit_pre = d_crit_hidden.cwiseProduct(
      (1.0 - fc.crit_hidden.array().square()).matrix());
  g.criteria_gate.hidden.weight.noalias() += d_crit_pre * h.transpose();
  g.criteria_gate.hidden.bias += d_crit_pre;

  // aspect softmax + g
  const double dot_g = fc.out.ar.dot(d_ar);
  const Vector d_gate_logits =
      fc.out.ar.cwiseProduct((d_ar.array() - dot_g).matrix());
  g.aspect_gate.out.weight.noalias() +=
      d_gate_logits * fc.gate_hidden.transpose();
  g.aspect_gate.out.bias += d_gate_logits;
  const Vector d_gate_hidden =
      w.aspect_gate.out.weight.transpose() * d_gate_logits;
  const Vector d_gate_pre = d_gate_hidden.cwiseProduct(
      (1.0 - fc.gate_hidden.array().square()).matrix());
  g.aspect_gate.hidden.weight.noalias() += d_gate_pre * h.transpose();
  g.aspect_gate.hidden.bias += d_gate_pre;
}

// Raw per-pair loss terms, kept separate so the batch reduction can follow
// the canonical order regardless of how the terms were computed.
struct PairEval {
  double l1_a = 0.0;
  double l1_b = 0.0;
  bool has_l1_a = false;
  bool has_l1_b = false;
  double l2 = 0.0;
  bool has_l2 = false;
  double l3 = 0.0;
  bool has_l3 = false;
  GradientSet grad;
  bool has_grad = false;
};

struct TermCoefs {
  double l1 = 0.0;
  double l2 = 0.0;
  double l3 = 0.0;
};

PairEval evaluate_pair(const AnnotatedPair& pair, const RewardHeadParams& p,
                       const CriteriaTaxonomy& t, const TermCoefs& coefs,
                       bool compute_grad) {
  PairEval ev;
  const ForwardCache fa = forward_cached(p, pair.feature_a, t);
  const ForwardCache fb = forward_cached(p, pair.feature_b, t);

  if (pair.criteria_a.present_count() > 0) {
    ev.l1_a = criteria_loss(fa.out, pair.criteria_a);
    ev.has_l1_a = true;
  }
  if (pair.criteria_b.present_count() > 0) {
    ev.l1_b = criteria_loss(fb.out, pair.criteria_b);
    ev.has_l1_b = true;
  }
  if (has_decided_aspect(pair)) {
    ev.l2 = aspect_ranking_loss(fa.out, fb.out, pair.aspect_prefs);
    ev.has_l2 = true;
  }
  if (pair.overall_pref == PrefLabel::A || pair.overall_pref == PrefLabel::B) {
    const bool a_wins = pair.overall_pref == PrefLabel::A;
    ev.l3 = a_wins ? overall_ranking_loss(fa.out, fb.out)
                   : overall_ranking_loss(fb.out, fa.out);
    ev.has_l3 = true;
  }

  if (!compute_grad) return ev;

  const int nc = t.num_criteria();
  const int na = t.num_aspects();
  Vector dc_a = Vector::Zero(nc);
  Vector dc_b = Vector::Zero(nc);
  Vector ds_a = Vector::Zero(na);
  Vector ds_b = Vector::Zero(na);
  double dos_a = 0.0;
  double dos_b = 0.0;

  if (ev.has_l1_a && coefs.l1 != 0.0) {
    for (int k = 0; k < nc; ++k) {
      if (!pair.criteria_a.present(k)) continue;
      dc_a[k] += coefs.l1 * 2.0 * (fa.out.criteria[k] - pair.criteria_a.s[k]);
    }
  }
  if (ev.has_l1_b && coefs.l1 != 0.0) {
    for (int k = 0; k < nc; ++k) {
      if (!pair.criteria_b.present(k)) continue;
      dc_b[k] += coefs.l1 * 2.0 * (fb.out.criteria[k] - pair.criteria_b.s[k]);
    }
  }
  if (ev.has_l2 && coefs.l2 != 0.0) {
    for (int i = 0; i < na; ++i) {
      const PrefLabel v = pair.aspect_prefs[static_cast<std::size_t>(i)];
      if (v != PrefLabel::A && v != PrefLabel::B) continue;
      const double sign = (v == PrefLabel::A) ? 1.0 : -1.0;
      const double margin = fa.out.aspect_sums[i] - fb.out.aspect_sums[i];
      // d/dm of -log(sigmoid(sign*m)) = -sign * sigmoid(-sign*m)
      const double dm = -sign * sigmoid(-sign * margin);
      ds_a[i] += coefs.l2 * dm;
      ds_b[i] -= coefs.l2 * dm;
    }
  }
  if (ev.has_l3 && coefs.l3 != 0.0) {
    const bool a_wins = pair.overall_pref == PrefLabel::A;
    const double margin = a_wins ? fa.out.os - fb.out.os
                                 : fb.out.os - fa.out.os;
    const double dm = -sigmoid(-margin);
    if (a_wins) {
      dos_a += coefs.l3 * dm;
      dos_b -= coefs.l3 * dm;
    } else {
      dos_b += coefs.l3 * dm;
      dos_a -= coefs.l3 * dm;
    }
  }

  ev.grad = zeros_like(p);
  ev.has_grad = true;
  backward_side(p, t, pair.feature_a, fa, std::move(dc_a), std::move(ds_a),
                dos_a, ev.grad);
  backward_side(p, t, pair.feature_b, fb, std::move(dc_b), std::move(ds_b),
                dos_b, ev.grad);
  return ev;
}

void add_into(GradientSet& acc, const GradientSet& g) {
  acc.score.weight += g.score.weight;
  acc.score.bias += g.score.bias;
  acc.aspect_gate.hidden.weight += g.aspect_gate.hidden.weight;
  acc.aspect_gate.hidden.bias += g.aspect_gate.hidden.bias;
  acc.aspect_gate.out.weight += g.aspect_gate.out.weight;
  acc.aspect_gate.out.bias += g.aspect_gate.out.bias;
  acc.criteria_gate.hidden.weight += g.criteria_gate.hidden.weight;
  acc.criteria_gate.hidden.bias += g.criteria_gate.hidden.bias;
  acc.criteria_gate.out.weight += g.criteria_gate.out.weight;
  acc.criteria_gate.out.bias += g.criteria_gate.out.bias;
}

std::pair<StageLossBreakdown, GradientSet> evaluate_batch(
    int stage, std::span<const AnnotatedPair> batch,
    const RewardHeadParams& params, const CriteriaTaxonomy& taxonomy,
    const StageWeights& weights, bool compute_grad, int threads) {
  if (weights.l1 == 0.0 && weights.l2 == 0.0 && weights.l3 == 0.0) {
    throw ValidationError("stage weights must not all be zero");
  }
  validate_stage_batch(stage, batch);

  // Contributor counts are needed up front so per-pair gradient
  // contributions carry their final 1/N scaling.
  int n1 = 0;
  int n2 = 0;
  int n3 = 0;
  for (const AnnotatedPair& p : batch) {
    if (p.criteria_a.present_count() > 0) ++n1;
    if (p.criteria_b.present_count() > 0) ++n1;
    if (has_decided_aspect(p)) ++n2;
    if (p.overall_pref == PrefLabel::A || p.overall_pref == PrefLabel::B) ++n3;
  }
  TermCoefs coefs;
  coefs.l1 = n1 > 0 ? weights.l1 / n1 : 0.0;
  coefs.l2 = n2 > 0 ? weights.l2 / n2 : 0.0;
  coefs.l3 = n3 > 0 ? weights.l3 / n3 : 0.0;

  std::vector<PairEval> evals(batch.size());
  auto run = [&](std::size_t i) {
    evals[i] = evaluate_pair(batch[i], params, taxonomy, coefs, compute_grad);
  };
  if (threads > 1 && batch.size() > 1) {
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t i = next.fetch_add(1); i < batch.size();
           i = next.fetch_add(1)) {
        run(i);
      }
    };
    std::vector<std::thread> pool;
    const int n_threads =
        std::min<int>(threads, static_cast<int>(batch.size()));
    pool.reserve(static_cast<std::size_t>(n_threads));
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  } else {
    for (std::size_t i = 0; i < batch.size(); ++i) run(i);
  }

  // Canonical reduction order: pair index ascending, side a before b.
  StageLossBreakdown bd;
  GradientSet grad = compute_grad ? zeros_like(params) : GradientSet{};
  double l1_sum = 0.0;
  double l2_sum = 0.0;
  double l3_sum = 0.0;
  for (const PairEval& ev : evals) {
    if (ev.has_l1_a) l1_sum += ev.l1_a;
    if (ev.has_l1_b) l1_sum += ev.l1_b;
    if (ev.has_l2) l2_sum += ev.l2;
    if (ev.has_l3) l3_sum += ev.l3;
    if (ev.has_grad) add_into(grad, ev.grad);
  }
  bd.l1_items = n1;
  bd.l2_items = n2;
  bd.l3_items = n3;
  bd.l1 = n1 > 0 ? l1_sum / n1 : 0.0;
  bd.l2 = n2 > 0 ? l2_sum / n2 : 0.0;
  bd.l3 = n3 > 0 ? l3_sum / n3 : 0.0;
  bd.total = weights.l1 * bd.l1 + weights.l2 * bd.l2 + weights.l3 * bd.l3;

  if (compute_grad) {
    const auto views = tensor_views(grad);
    for (int k = 0; k < kNumParamTensors; ++k) {
      if (!params.frozen[static_cast<std::size_t>(k)]) continue;
      const auto& v = views[static_cast<std::size_t>(k)];
      Eigen::Map<Vector>(v.data, v.size).setZero();
    }
  }
  return {bd, std::move(grad)};
}

}  // namespace

void validate_stage_batch(int stage, std::span<const AnnotatedPair> batch) {
  if (stage < 1 || stage > 3) {
    throw RangeError("stage must be 1, 2 or 3, got " + std::to_string(stage));
  }
  if (batch.empty()) {
    throw ValidationError("batch is empty");
  }
  std::vector<std::string> offending;
  for (const AnnotatedPair& p : batch) {
    const bool ok = stage == 1   ? has_criteria_labels(p)
                    : stage == 2 ? has_aspect_prefs(p)
                                 : p.overall_pref != PrefLabel::Missing;
    if (!ok) offending.push_back(p.id);
  }
  if (offending.empty()) return;

  std::ostringstream msg;
  msg << "stage " << stage << " requires "
      << (stage == 1   ? "criteria labels (criteria_a/criteria_b)"
          : stage == 2 ? "aspect preferences (aspect_prefs)"
                       : "an overall preference (overall_pref)")
      << "; missing on " << offending.size() << " item(s):";
  const std::size_t shown = std::min<std::size_t>(offending.size(), 10);
  for (std::size_t i = 0; i < shown; ++i) msg << " " << offending[i];
  if (offending.size() > shown) msg << " ...";
  throw ValidationError(msg.str());
}

StageLossBreakdown stage_loss(int stage, std::span<const AnnotatedPair> batch,
                              const RewardHeadParams& params,
                              const CriteriaTaxonomy& taxonomy,
                              const StageWeights& weights, int threads) {
  return evaluate_batch(stage, batch, params, taxonomy, weights,
                        /*compute_grad=*/false, threads)
      .first;
}

std::pair<StageLossBreakdown, GradientSet> loss_gradient(
    int stage, std::span<const AnnotatedPair> batch,
    const RewardHeadParams& params, const CriteriaTaxonomy& taxonomy,
    const StageWeights& weights, int threads) {
  return evaluate_batch(stage, batch, params, taxonomy, weights,
                        /*compute_grad=*/true, threads);
}

nlohmann::json FiniteDiffReport::to_json() const {
  return {{"max_abs_err", max_abs_err},
          {"max_rel_err", max_rel_err},
          {"worst_tensor", worst_tensor},
          {"worst_index", worst_index},
          {"checked", checked},
          {"skipped_frozen", skipped_frozen}};
}

FiniteDiffReport finite_diff_check(
    int stage, const RewardHeadParams& params,
    std::span<const AnnotatedPair> batch, const CriteriaTaxonomy& taxonomy,
    const StageWeights& weights, double h_step, long max_params,
    const std::function<void(GradientSet&)>& tamper_analytic) {
  long total = 0;
  for (const auto& v : tensor_views(params.tensors)) total += v.size;
  if (total > max_params) {
    throw RangeError("refusing to finite-difference " + std::to_string(total) +
                     " parameters (cap " + std::to_string(max_params) +
                     "); lower the model size or raise the cap");
  }

  auto [base, analytic] = loss_gradient(stage, batch, params, taxonomy,
                                        weights);
  (void)base;
  if (tamper_analytic) tamper_analytic(analytic);

  RewardHeadParams perturbed = params;
  const auto pviews = tensor_views(perturbed.tensors);
  const auto gviews = tensor_views(analytic);

  FiniteDiffReport report;
  for (int k = 0; k < kNumParamTensors; ++k) {
    const auto& pv = pviews[static_cast<std::size_t>(k)];
    const auto& gv = gviews[static_cast<std::size_t>(k)];
    if (params.frozen[static_cast<std::size_t>(k)]) {
      report.skipped_frozen += pv.size;
      continue;
    }
    for (Eigen::Index i = 0; i < pv.size; ++i) {
      const double saved = pv.data[i];
      pv.data[i] = saved + h_step;
      const double loss_hi =
          stage_loss(stage, batch, perturbed, taxonomy, weights).total;
      pv.data[i] = saved - h_step;
      const double loss_lo =
          stage_loss(stage, batch, perturbed, taxonomy, weights).total;
      pv.data[i] = saved;

      const double numeric = (loss_hi - loss_lo) / (2.0 * h_step);
      const double a = gv.data[i];
      const double abs_err = std::abs(a - numeric);
      const double rel_err =
          abs_err / std::max({std::abs(a), std::abs(numeric), 1e-8});
      report.max_abs_err = std::max(report.max_abs_err, abs_err);
      if (rel_err > report.max_rel_err) {
        report.max_rel_err = rel_err;
        report.worst_tensor = std::string(pv.name);
        report.worst_index = static_cast<long>(i);
      }
      ++report.checked;
    }
  }
  return report;
}

}  // namespace finereward
