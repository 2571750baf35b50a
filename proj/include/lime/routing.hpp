// Copyright 2026 The lime-peft Authors
// SPDX-License-Identifier: Apache-2.0

// Zero-parameter routing: routing weights from E-dimensional slices of the
// frozen output z and the adapter output zhat, followed by expert selection.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lime/tensor.hpp"

namespace lime {

enum class StrategyKind {
    relative_threshold,
    fixed_topk,
    absolute_threshold,
    entropy_based,
    gini_based,
    cumulative_prob,
    topk_gap,
};

/// How the set of active experts is chosen from routing weights.
///
/// Only the fields used by `kind` are meaningful: `value` holds theta, eta or
/// rho; `k` the fixed count; `k_min`/`k_max` the entropy/Gini range; `delta`
/// the top-k gap margin.
struct SelectionStrategy {
    StrategyKind kind = StrategyKind::relative_threshold;
    double value = 0.7;
    std::size_t k = 2;
    std::size_t k_min = 1;
    std::size_t k_max = 4;
    double delta = 0.0;

    static SelectionStrategy relative_threshold(double theta);
    static SelectionStrategy fixed_topk(std::size_t k);
    static SelectionStrategy absolute_threshold(double eta);
    static SelectionStrategy entropy_based(std::size_t k_min, std::size_t k_max);
    static SelectionStrategy gini_based(std::size_t k_min, std::size_t k_max);
    static SelectionStrategy cumulative_prob(double rho);
    static SelectionStrategy topk_gap(std::size_t k, double delta);

    /// Throws ConfigError when a parameter is out of range.
    void validate() const;
    std::string name() const;
    /// Parameter column text, e.g. "theta=0.7" or "k=[1,3]".
    std::string params_string() const;
};

enum class Granularity { token, ngram, sequence };
enum class SliceKind { leading, central, trailing, random };

struct RoutingConfig {
    double tau = 0.5;
    double gamma_r = 0.7;
    Granularity granularity = Granularity::token;
    std::size_t ngram = 3;
    SliceKind slice = SliceKind::leading;
    std::uint64_t slice_seed = 0;
    double jitter_sigma = 0.1;
    SelectionStrategy strategy = SelectionStrategy::relative_threshold(0.7);

    void validate() const;
};

struct RoutingDecision {
    Vector weights;                    // softmax output w, length E
    std::vector<std::size_t> selected; // ascending expert indices
    Vector renorm;                     // w̃, zero off the selected set
    std::size_t span_begin = 0;        // first row (inclusive) sharing this decision
    std::size_t span_end = 0;          // one past the last row
    std::size_t representative = 0;    // row whose slices drove the decision
    std::size_t sequence = 0;          // batch index of the sequence
};

/// Token rows [begin, end) of one routing unit and its representative offset,
/// all relative to the start of the sequence.
struct UnitPlan {
    std::size_t begin;
    std::size_t end;
    std::size_t representative;
};

/// token: one unit per token; ngram(n): ceil(T/n) windows, the last one may be
/// short, representative is the last token of each window; sequence: one unit
/// with representative T-1.
std::vector<UnitPlan> plan_units(std::size_t seq_len, Granularity granularity, std::size_t ngram);

/// Indices of d_out used as routing features, one per expert.
std::vector<std::size_t> routing_slice(std::size_t d_out, std::size_t experts, SliceKind kind,
                                       std::uint64_t seed);

/// Divides by the inf-norm; an all-zero slice maps to the zero vector.
Vector normalize_slice(std::span<const double> slice);

/// Combined pre-jitter routing logits (1-γ_r)·z̃ + γ_r·ẑ̃.
Vector routing_logits(std::span<const double> z_slice, std::span<const double> zhat_slice,
                      double gamma_r);

/// Routing weights with explicit jitter multipliers (empty span = none).
Vector route_with_jitter(std::span<const double> z_slice, std::span<const double> zhat_slice,
                         const RoutingConfig& cfg, std::span<const double> jitter);

/// Routing weights. When `training` and cfg.jitter_sigma > 0 the combined
/// logits are multiplied by draws from U(1-σ, 1+σ) taken from `rng`; the
/// draws are written to `jitter_out` if given.
Vector route(std::span<const double> z_slice, std::span<const double> zhat_slice,
             const RoutingConfig& cfg, Rng* rng, bool training, Vector* jitter_out = nullptr);

Vector draw_jitter(std::size_t experts, double sigma, Rng& rng);

/// Experts ordered by weight descending, lower index first among equals.
std::vector<std::size_t> rank_experts(std::span<const double> weights);

/// Active set for `weights` (must lie on the simplex) plus renormalized
/// weights. Span fields of the result are left at zero.
RoutingDecision select(std::span<const double> weights, const SelectionStrategy& strategy);

/// Shannon entropy in nats with 0·log 0 = 0.
double entropy(std::span<const double> p);
/// (1 / 2E) Σ_i Σ_j |w_i - w_j|
double gini(std::span<const double> w);

} // namespace lime
