// Copyright 2026 The lime-peft Authors
// SPDX-License-Identifier: Apache-2.0

#include "lime/routing.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "lime/errors.hpp"

namespace lime {

namespace {

std::string fmt_num(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

void check_simplex(std::span<const double> w) {
    if (w.empty()) {
        throw std::invalid_argument("select: empty weight vector");
    }
    double total = 0.0;
    for (double v : w) {
        if (!std::isfinite(v) || v < -1e-12) {
            throw std::invalid_argument("select: weights must be finite and nonnegative");
        }
        total += v;
    }
    if (std::abs(total - 1.0) > 1e-9) {
        throw std::invalid_argument("select: weights do not sum to 1 (sum=" + fmt_num(total) + ")");
    }
}

std::size_t clamp_k(std::size_t k, std::size_t experts) {
    return std::clamp<std::size_t>(k, 1, experts);
}

std::vector<std::size_t> top_k(const std::vector<std::size_t>& ranked, std::size_t k) {
    return {ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(k)};
}

} // namespace

SelectionStrategy SelectionStrategy::relative_threshold(double theta) {
    SelectionStrategy s;
    s.kind = StrategyKind::relative_threshold;
    s.value = theta;
    return s;
}

SelectionStrategy SelectionStrategy::fixed_topk(std::size_t k) {
    SelectionStrategy s;
    s.kind = StrategyKind::fixed_topk;
    s.k = k;
    return s;
}

SelectionStrategy SelectionStrategy::absolute_threshold(double eta) {
    SelectionStrategy s;
    s.kind = StrategyKind::absolute_threshold;
    s.value = eta;
    return s;
}

SelectionStrategy SelectionStrategy::entropy_based(std::size_t k_min, std::size_t k_max) {
    SelectionStrategy s;
    s.kind = StrategyKind::entropy_based;
    s.k_min = k_min;
    s.k_max = k_max;
    return s;
}

SelectionStrategy SelectionStrategy::gini_based(std::size_t k_min, std::size_t k_max) {
    SelectionStrategy s;
    s.kind = StrategyKind::gini_based;
    s.k_min = k_min;
    s.k_max = k_max;
    return s;
}

SelectionStrategy SelectionStrategy::cumulative_prob(double rho) {
    SelectionStrategy s;
    s.kind = StrategyKind::cumulative_prob;
    s.value = rho;
    return s;
}

SelectionStrategy SelectionStrategy::topk_gap(std::size_t k, double delta) {
    SelectionStrategy s;
    s.kind = StrategyKind::topk_gap;
    s.k = k;
    s.delta = delta;
    return s;
}

void SelectionStrategy::validate() const {
    switch (kind) {
    case StrategyKind::relative_threshold:
        if (!(value > 0.0 && value <= 1.0)) {
            throw ConfigError("relative_threshold: theta must lie in (0, 1]");
        }
        break;
    case StrategyKind::fixed_topk:
        if (k < 1) {
            throw ConfigError("fixed_topk: k must be >= 1");
        }
        break;
    case StrategyKind::absolute_threshold:
        if (!(value > 0.0 && value < 1.0)) {
            throw ConfigError("absolute_threshold: eta must lie in (0, 1)");
        }
        break;
    case StrategyKind::entropy_based:
    case StrategyKind::gini_based:
        if (k_min < 1 || k_min > k_max) {
            throw ConfigError(name() + ": need 1 <= k_min <= k_max");
        }
        break;
    case StrategyKind::cumulative_prob:
        if (!(value > 0.0 && value <= 1.0)) {
            throw ConfigError("cumulative_prob: rho must lie in (0, 1]");
        }
        break;
    case StrategyKind::topk_gap:
        if (k < 1) {
            throw ConfigError("topk_gap: k must be >= 1");
        }
        if (!(delta >= 0.0) || !std::isfinite(delta)) {
            throw ConfigError("topk_gap: delta must be >= 0");
        }
        break;
    }
}

std::string SelectionStrategy::name() const {
    switch (kind) {
    case StrategyKind::relative_threshold: return "relative_threshold";
    case StrategyKind::fixed_topk: return "fixed_topk";
    case StrategyKind::absolute_threshold: return "absolute_threshold";
    case StrategyKind::entropy_based: return "entropy_based";
    case StrategyKind::gini_based: return "gini_based";
    case StrategyKind::cumulative_prob: return "cumulative_prob";
    case StrategyKind::topk_gap: return "topk_gap";
    }
    return "unknown";
}

std::string SelectionStrategy::params_string() const {
    switch (kind) {
    case StrategyKind::relative_threshold: return "theta=" + fmt_num(value);
    case StrategyKind::fixed_topk: return "k=" + std::to_string(k);
    case StrategyKind::absolute_threshold: return "eta=" + fmt_num(value);
    case StrategyKind::entropy_based:
    case StrategyKind::gini_based:
        return "k=[" + std::to_string(k_min) + "," + std::to_string(k_max) + "]";
    case StrategyKind::cumulative_prob: return "rho=" + fmt_num(value);
    case StrategyKind::topk_gap: return "k=" + std::to_string(k) + ";delta=" + fmt_num(delta);
    }
    return "";
}

void RoutingConfig::validate() const {
    if (!(tau > 0.0)) {
        throw ConfigError("routing: tau must be positive");
    }
    if (!(gamma_r >= 0.0 && gamma_r <= 1.0)) {
        throw ConfigError("routing: gamma_r must lie in [0, 1]");
    }
    if (granularity == Granularity::ngram && ngram < 1) {
        throw ConfigError("routing: ngram window must be >= 1");
    }
    if (!(jitter_sigma >= 0.0 && jitter_sigma < 1.0)) {
        throw ConfigError("routing: jitter_sigma must lie in [0, 1)");
    }
    strategy.validate();
}

std::vector<UnitPlan> plan_units(std::size_t seq_len, Granularity granularity, std::size_t ngram) {
    if (seq_len == 0) {
        throw std::invalid_argument("plan_units: sequence length must be >= 1");
    }
    std::vector<UnitPlan> units;
    switch (granularity) {
    case Granularity::token:
        for (std::size_t t = 0; t < seq_len; ++t) {
            units.push_back({t, t + 1, t});
        }
        break;
    case Granularity::ngram:
        if (ngram < 1) {
            throw ConfigError("plan_units: ngram window must be >= 1");
        }
        for (std::size_t b = 0; b < seq_len; b += ngram) {
            const std::size_t e = std::min(seq_len, b + ngram);
            units.push_back({b, e, e - 1});
        }
        break;
    case Granularity::sequence:
        units.push_back({0, seq_len, seq_len - 1});
        break;
    }
    return units;
}

std::vector<std::size_t> routing_slice(std::size_t d_out, std::size_t experts, SliceKind kind,
                                       std::uint64_t seed) {
    if (experts < 1 || experts > d_out) {
        throw ConfigError("routing slice: need 1 <= E <= d_out (E=" + std::to_string(experts) +
                          ", d_out=" + std::to_string(d_out) + ")");
    }
    std::vector<std::size_t> idx(experts);
    std::size_t start = 0;
    switch (kind) {
    case SliceKind::leading: start = 0; break;
    case SliceKind::central: start = (d_out - experts) / 2; break;
    case SliceKind::trailing: start = d_out - experts; break;
    case SliceKind::random: {
        Rng rng(seed);
        std::vector<std::size_t> pool(d_out);
        std::iota(pool.begin(), pool.end(), std::size_t{0});
        for (std::size_t i = 0; i < experts; ++i) {
            std::swap(pool[i], pool[i + rng.below(d_out - i)]);
            idx[i] = pool[i];
        }
        return idx;
    }
    }
    std::iota(idx.begin(), idx.end(), start);
    return idx;
}

Vector normalize_slice(std::span<const double> slice) {
    const double m = inf_norm(slice);
    Vector out(slice.size(), 0.0);
    if (m == 0.0) {
        return out;
    }
    for (std::size_t i = 0; i < slice.size(); ++i) {
        out[i] = slice[i] / m;
    }
    return out;
}

Vector routing_logits(std::span<const double> z_slice, std::span<const double> zhat_slice,
                      double gamma_r) {
    if (z_slice.size() != zhat_slice.size()) {
        throw ShapeError("route: slice lengths differ");
    }
    if (!all_finite(z_slice) || !all_finite(zhat_slice)) {
        throw NumericError("route: non-finite routing slice");
    }
    const Vector zn = normalize_slice(z_slice);
    const Vector hn = normalize_slice(zhat_slice);
    Vector logits(zn.size());
    for (std::size_t i = 0; i < zn.size(); ++i) {
        logits[i] = (1.0 - gamma_r) * zn[i] + gamma_r * hn[i];
    }
    return logits;
}

Vector route_with_jitter(std::span<const double> z_slice, std::span<const double> zhat_slice,
                         const RoutingConfig& cfg, std::span<const double> jitter) {
    Vector logits = routing_logits(z_slice, zhat_slice, cfg.gamma_r);
    if (!jitter.empty()) {
        if (jitter.size() != logits.size()) {
            throw ShapeError("route: jitter length differs from expert count");
        }
        for (std::size_t i = 0; i < logits.size(); ++i) {
            logits[i] *= jitter[i];
        }
    }
    return softmax(logits, cfg.tau);
}

Vector draw_jitter(std::size_t experts, double sigma, Rng& rng) {
    Vector m(experts);
    for (double& v : m) {
        v = rng.uniform(1.0 - sigma, 1.0 + sigma);
    }
    return m;
}

Vector route(std::span<const double> z_slice, std::span<const double> zhat_slice,
             const RoutingConfig& cfg, Rng* rng, bool training, Vector* jitter_out) {
    Vector jitter;
    if (training && cfg.jitter_sigma > 0.0) {
        if (rng == nullptr) {
            throw std::invalid_argument("route: jitter requested without an Rng");
        }
        jitter = draw_jitter(z_slice.size(), cfg.jitter_sigma, *rng);
    }
    if (jitter_out != nullptr) {
        *jitter_out = jitter;
    }
    return route_with_jitter(z_slice, zhat_slice, cfg, jitter);
}

std::vector<std::size_t> rank_experts(std::span<const double> weights) {
    std::vector<std::size_t> order(weights.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return weights[a] > weights[b]; });
    return order;
}

double entropy(std::span<const double> p) {
    double h = 0.0;
    for (double v : p) {
        if (v > 0.0) {
            h -= v * std::log(v);
        }
    }
    return h;
}

double gini(std::span<const double> w) {
    const double e = static_cast<double>(w.size());
    double acc = 0.0;
    for (double a : w) {
        for (double b : w) {
            acc += std::abs(a - b);
        }
    }
    return acc / (2.0 * e);
}

RoutingDecision select(std::span<const double> weights, const SelectionStrategy& strategy) {
    strategy.validate();
    check_simplex(weights);
    const std::size_t experts = weights.size();
    const auto ranked = rank_experts(weights);
    std::vector<std::size_t> chosen;

    switch (strategy.kind) {
    case StrategyKind::relative_threshold: {
        const double cutoff = strategy.value * weights[ranked.front()];
        for (std::size_t i = 0; i < experts; ++i) {
            if (weights[i] >= cutoff) {
                chosen.push_back(i);
            }
        }
        break;
    }
    case StrategyKind::fixed_topk:
        chosen = top_k(ranked, clamp_k(strategy.k, experts));
        break;
    case StrategyKind::absolute_threshold:
        for (std::size_t i = 0; i < experts; ++i) {
            if (weights[i] >= strategy.value) {
                chosen.push_back(i);
            }
        }
        if (chosen.empty()) {
            chosen.push_back(ranked.front());
        }
        break;
    case StrategyKind::entropy_based: {
        const double h_norm =
            experts > 1 ? std::clamp(entropy(weights) / std::log(static_cast<double>(experts)), 0.0, 1.0)
                        : 0.0;
        const auto span = static_cast<double>(strategy.k_max - strategy.k_min);
        const std::size_t k = strategy.k_min + static_cast<std::size_t>(std::floor(span * h_norm));
        chosen = top_k(ranked, clamp_k(k, experts));
        break;
    }
    case StrategyKind::gini_based: {
        const double e = static_cast<double>(experts);
        const double ratio = experts > 1 ? std::clamp(gini(weights) / (1.0 - 1.0 / e), 0.0, 1.0) : 0.0;
        const auto span = static_cast<double>(strategy.k_max - strategy.k_min);
        const std::size_t k = strategy.k_max - static_cast<std::size_t>(std::floor(span * ratio));
        chosen = top_k(ranked, clamp_k(k, experts));
        break;
    }
    case StrategyKind::cumulative_prob: {
        // Rounding can leave the full prefix sum just below rho = 1; then all
        // experts are taken.
        std::size_t k = experts;
        double prefix = 0.0;
        for (std::size_t i = 0; i < experts; ++i) {
            prefix += weights[ranked[i]];
            if (prefix >= strategy.value) {
                k = i + 1;
                break;
            }
        }
        chosen = top_k(ranked, k);
        break;
    }
    case StrategyKind::topk_gap: {
        const std::size_t k = clamp_k(strategy.k, experts);
        chosen = top_k(ranked, k);
        const double cutoff = weights[ranked[k - 1]] - strategy.delta;
        for (std::size_t r = k; r < experts; ++r) {
            if (weights[ranked[r]] >= cutoff) {
                chosen.push_back(ranked[r]);
            }
        }
        break;
    }
    }

    std::sort(chosen.begin(), chosen.end());
    RoutingDecision d;
    d.weights.assign(weights.begin(), weights.end());
    d.selected = std::move(chosen);
    d.renorm.assign(experts, 0.0);
    double mass = 0.0;
    for (std::size_t i : d.selected) {
        mass += weights[i];
    }
    for (std::size_t i : d.selected) {
        d.renorm[i] = weights[i] / mass;
    }
    return d;
}

} // namespace lime
