// Copyright 2026 The lime-peft Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <algorithm>
#include <numbers>

#include "lime/errors.hpp"
#include "lime/train.hpp"

namespace lime {

double lr_schedule(std::size_t step, std::size_t total_steps, double warmup_ratio) {
    const double t = static_cast<double>(step);
    const double total = static_cast<double>(total_steps);
    const double warm = warmup_ratio * total;
    if (t < warm) {
        return t / warm;
    }
    if (total <= warm) {
        return 1.0;
    }
    const double progress = std::min(1.0, (t - warm) / (total - warm));
    return 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

AdamW::AdamW(const std::vector<ParamRef>& params, OptimizerConfig cfg) : cfg_(cfg) {
    if (!(cfg_.lr_peft >= 0.0) || !(cfg_.lr_expert >= 0.0)) {
        throw ConfigError("learning rates must be >= 0");
    }
    if (!(cfg_.weight_decay >= 0.0)) {
        throw ConfigError("weight decay must be >= 0");
    }
    if (!(cfg_.grad_clip > 0.0)) {
        throw ConfigError("grad_clip must be > 0");
    }
    for (const auto& p : params) {
        m_.emplace_back(p.value->rows(), p.value->cols());
        v_.emplace_back(p.value->rows(), p.value->cols());
    }
}

StepInfo AdamW::step(std::vector<ParamRef>& params, const GradTape& tape, double lr_factor) {
    if (params.size() != m_.size() || tape.grads.size() != params.size()) {
        throw std::invalid_argument("AdamW: parameter list changed since construction");
    }
    StepInfo info;
    info.grad_norm = tape.global_norm();
    if (!std::isfinite(info.grad_norm)) {
        throw NumericError("AdamW: non-finite gradient norm");
    }
    if (info.grad_norm > cfg_.grad_clip) {
        info.clip_scale = cfg_.grad_clip / info.grad_norm;
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t p = 0; p < params.size(); ++p) {
        if (tape.names[p] != params[p].name) {
            throw std::invalid_argument("AdamW: gradient '" + tape.names[p] + "' does not match '" +
                                        params[p].name + "'");
        }
        const bool adapter = params[p].group == ParamGroup::adapter;
        const double lr = (adapter ? cfg_.lr_peft : cfg_.lr_expert) * lr_factor;
        const double wd = adapter ? cfg_.weight_decay : 0.0;
        auto w = params[p].value->values();
        const auto g = tape.grads[p].values();
        auto m = m_[p].values();
        auto v = v_[p].values();
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double gi = g[i] * info.clip_scale;
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            w[i] -= lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + wd * w[i]);
        }
    }
    return info;
}

} // namespace lime
