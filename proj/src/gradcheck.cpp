// Copyright 2026 The lime-peft Authors
// SPDX-License-Identifier: Apache-2.0

#include "lime/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "lime/errors.hpp"

namespace lime {

double relative_error(double analytic, double numeric, double floor) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    return std::abs(analytic - numeric) / denom;
}

std::vector<std::size_t> selection_signature(const ModelOutput& out) {
    std::vector<std::size_t> sig;
    for (std::size_t u = 0; u < out.decisions.size(); ++u) {
        const auto& d = out.decisions[u];
        sig.push_back(d.selected.size());
        sig.insert(sig.end(), d.selected.begin(), d.selected.end());
        if (out.lime) {
            const auto& f = *out.lime;
            Vector a(f.slice.size());
            for (std::size_t i = 0; i < a.size(); ++i) {
                a[i] = f.zhat(d.representative, f.slice[i]);
            }
            sig.push_back(inf_norm(a) == 0.0 ? a.size() : argmax_abs(a));
        }
    }
    return sig;
}

namespace {

double output_loss(const ModelOutput& out, const Matrix& target, const LossSpec& spec,
                   std::size_t experts) {
    const auto stats = BatchRoutingStats::from_decisions(out.decisions, experts);
    return combine_losses(task_loss(out.h, target, spec.kind), stats.pbar, spec.alpha, spec.beta).total;
}

} // namespace

GradcheckReport check_gradients(Model& model, const SequenceBatch& batch, const Matrix& target,
                                const LossSpec& spec, Rng& rng, const GradcheckOptions& opts) {
    if (!(opts.step > 0.0)) {
        throw ConfigError("gradcheck step must be > 0");
    }
    const ModelOutput out = model_forward(model, batch, &rng, opts.training);
    const GradTape tape = backward(model, batch, out, target, spec, opts.fault);
    const JitterTape replay = out.lime ? out.lime->jitter : JitterTape{};
    const JitterTape* replay_ptr = out.lime ? &replay : nullptr;
    const auto base_sig = selection_signature(out);

    const std::size_t experts = model_experts(model);
    GradcheckReport report;
    auto params = model_parameters(model);
    for (std::size_t p = 0; p < params.size(); ++p) {
        ParamCheck check;
        check.name = params[p].name;
        auto values = params[p].value->values();
        const auto analytic = tape.grads[p].values();
        check.entries = values.size();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double orig = values[i];
            values[i] = orig + opts.step;
            const ModelOutput up = model_forward(model, batch, nullptr, false, replay_ptr);
            const double lp = output_loss(up, target, spec, experts);
            values[i] = orig - opts.step;
            const ModelOutput down = model_forward(model, batch, nullptr, false, replay_ptr);
            const double lm = output_loss(down, target, spec, experts);
            values[i] = orig;
            if (selection_signature(up) != base_sig || selection_signature(down) != base_sig) {
                report.stable = false;
            }
            const double numeric = (lp - lm) / (2.0 * opts.step);
            const double err = relative_error(analytic[i], numeric, opts.floor);
            if (i == 0 || err > check.max_rel_error) {
                check.max_rel_error = err;
                check.worst_analytic = analytic[i];
                check.worst_numeric = numeric;
            }
        }
        report.max_rel_error = std::max(report.max_rel_error, check.max_rel_error);
        report.params.push_back(check);
    }
    report.passed = report.stable && report.max_rel_error < opts.tolerance;
    return report;
}

namespace {

const SelectionStrategy& strategy_for(std::size_t index) {
    static const std::vector<SelectionStrategy> kStrategies = {
        SelectionStrategy::relative_threshold(0.7), SelectionStrategy::fixed_topk(2),
        SelectionStrategy::absolute_threshold(0.3), SelectionStrategy::entropy_based(1, 3),
        SelectionStrategy::gini_based(1, 3),        SelectionStrategy::cumulative_prob(0.8),
        SelectionStrategy::topk_gap(1, 0.05),
    };
    return kStrategies[index % kStrategies.size()];
}

SelectionStrategy clamp_strategy(SelectionStrategy s, std::size_t experts) {
    s.k = std::min(s.k, experts);
    s.k_max = std::min(s.k_max, experts);
    s.k_min = std::min(s.k_min, s.k_max);
    return s;
}

} // namespace

GradcheckCase make_gradcheck_case(std::size_t index, std::uint64_t seed) {
    static const std::size_t kExperts[] = {1, 2, 4};
    static const std::size_t kDims[] = {4, 8};
    static const Granularity kGran[] = {Granularity::token, Granularity::ngram, Granularity::sequence};
    static const char* kGranNames[] = {"token", "ngram", "sequence"};

    Rng rng(seed ^ (0x9E3779B97F4A7C15ULL * (index + 1)));
    const std::size_t e = kExperts[index % 3];
    const std::size_t d = kDims[(index / 3) % 2];
    const std::size_t g = (index / 2) % 3;
    const bool moe = index % 6 == 5;
    const bool diag = !moe && index % 4 == 2;
    const bool freeze_a = !moe && !diag && index % 4 == 1;
    const bool shared = index % 5 != 3;
    const bool ce = index % 7 == 4;

    GradcheckCase c;
    const std::size_t seqs = 2;
    const std::size_t seq_len = 5;
    c.batch.batch = seqs;
    c.batch.seq_len = seq_len;
    c.batch.x = random_normal(seqs * seq_len, d, 1.0, rng);

    LoraSpec lora;
    lora.rank = d >= 8 ? 3 : 2;
    lora.alpha = 2.0 * static_cast<double>(lora.rank);
    lora.freeze_a = freeze_a;
    lora.a_std = 0.5;

    std::string label;
    if (moe) {
        MoeLayerSpec ms;
        ms.d_in = d;
        ms.d_out = d;
        ms.experts = e;
        ms.lora = lora;
        ms.top_k = 2;
        ms.tau = 0.7;
        ms.router_std = 0.5;
        ms.base_seed = seed + index;
        MoeLayer layer = make_moe_layer(ms, rng);
        for (auto& a : layer.adapters) {
            a.b = random_normal(a.b.rows(), a.b.cols(), 0.5, rng);
        }
        c.model = std::move(layer);
        label = "moe";
    } else {
        LimeLayerSpec ls;
        ls.d_in = d;
        ls.d_out = d;
        ls.experts = e;
        ls.adapter = diag ? AdapterKind::diag : AdapterKind::lora;
        ls.lora = lora;
        ls.shared_modulator = shared;
        ls.routing.tau = 0.5 + 0.5 * rng.uniform();
        ls.routing.gamma_r = 0.2 + 0.6 * rng.uniform();
        ls.routing.granularity = kGran[g];
        ls.routing.ngram = 2;
        ls.routing.slice = static_cast<SliceKind>(index % 4);
        ls.routing.slice_seed = seed + index;
        ls.routing.jitter_sigma = 0.1;
        ls.routing.strategy = clamp_strategy(strategy_for(index), e);
        ls.init.scheme = InitScheme::gaussian_near_one;
        ls.init.sigma = 0.3;
        ls.base_seed = seed + index;
        LimeLayer layer = make_lime_layer(ls, rng);
        if (auto* l = std::get_if<LoraAdapter>(&layer.adapter)) {
            l->b = random_normal(l->b.rows(), l->b.cols(), 0.5, rng);
        } else {
            auto& s = std::get<DiagAdapter>(layer.adapter).s;
            s = random_normal(1, d, 0.5, rng);
        }
        layer.gamma(0, 0) = rng.uniform(-1.0, 1.0);
        label = std::string(diag ? "diag" : (freeze_a ? "lora-fa" : "lora")) + " " +
                kGranNames[g] + " " + ls.routing.strategy.name() + (shared ? " shared" : "");
        c.model = std::move(layer);
    }
    const std::size_t rows = seqs * seq_len;
    if (ce) {
        c.target = Matrix(rows, 1);
        for (std::size_t j = 0; j < rows; ++j) {
            c.target(j, 0) = static_cast<double>(rng.below(d));
        }
        c.spec.kind = TaskLossKind::cross_entropy;
    } else {
        c.target = random_normal(rows, d, 1.0, rng);
        c.spec.kind = TaskLossKind::mse;
    }
    c.spec.alpha = rng.uniform(0.05, 0.5);
    c.spec.beta = rng.uniform(0.05, 0.5);
    c.label = "E=" + std::to_string(e) + " d=" + std::to_string(d) + " " + label +
              (ce ? " ce" : " mse");
    return c;
}

SuiteResult run_gradcheck_suite(std::size_t n_configs, std::uint64_t seed,
                                const GradcheckOptions& opts, std::size_t max_attempts) {
    SuiteResult result;
    result.passed = true;
    for (std::size_t i = 0; i < n_configs; ++i) {
        SuiteEntry entry;
        for (std::size_t attempt = 0; attempt < max_attempts; ++attempt) {
            GradcheckCase c = make_gradcheck_case(i, seed + 1000003ULL * attempt);
            Rng rng(seed + 7919ULL * (i + 1) + attempt);
            entry.label = c.label;
            entry.report = check_gradients(c.model, c.batch, c.target, c.spec, rng, opts);
            entry.attempts = attempt + 1;
            if (entry.report.stable) {
                break;
            }
        }
        result.passed = result.passed && entry.report.passed;
        result.max_rel_error = std::max(result.max_rel_error, entry.report.max_rel_error);
        result.entries.push_back(std::move(entry));
    }
    return result;
}

} // namespace lime
