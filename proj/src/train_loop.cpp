// Copyright 2026 The lime-peft Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <ostream>

#include "lime/errors.hpp"
#include "lime/json_writer.hpp"
#include "lime/train.hpp"

namespace lime {

void TrainConfig::validate() const {
    if (!(lr_peft >= 0.0) || !(lr_expert >= 0.0)) {
        throw ConfigError("learning rates must be >= 0");
    }
    if (max_steps == 0 && epochs == 0) {
        throw ConfigError("need epochs >= 1 or max_steps >= 1");
    }
    if (batch_size == 0) {
        throw ConfigError("batch_size must be >= 1");
    }
    if (!(warmup_ratio >= 0.0 && warmup_ratio <= 0.5)) {
        throw ConfigError("warmup_ratio must lie in [0, 0.5]");
    }
    if (!(weight_decay >= 0.0)) {
        throw ConfigError("weight_decay must be >= 0");
    }
    if (!(grad_clip > 0.0)) {
        throw ConfigError("grad_clip must be > 0");
    }
    if (!(alpha >= 0.0) || !(beta >= 0.0)) {
        throw ConfigError("load-balance coefficients must be >= 0");
    }
    if (log_every == 0) {
        throw ConfigError("log_every must be >= 1");
    }
}

std::size_t TrainConfig::total_steps(std::size_t n_samples) const {
    if (max_steps > 0) {
        return max_steps;
    }
    return epochs * ((n_samples + batch_size - 1) / batch_size);
}

nlohmann::json to_json(const TrainRecord& r) {
    return {
        {"step", r.step},
        {"epoch", r.epoch},
        {"task", r.loss.task},
        {"importance", r.loss.importance},
        {"kl_uniform", r.loss.kl_uniform},
        {"total", r.loss.total},
        {"alpha", r.loss.alpha},
        {"beta", r.loss.beta},
        {"routing_entropy", r.routing_entropy},
        {"lr_factor", r.lr_factor},
        {"grad_norm", r.grad_norm},
        {"avg_selected", r.avg_selected},
    };
}

TrainResult train_loop(Model& model, const MixtureDataset& data, const TrainConfig& cfg,
                       std::ostream* metrics) {
    cfg.validate();
    data.validate();
    if (data.size() == 0) {
        throw std::invalid_argument("train_loop: empty dataset");
    }
    const bool classification = data.kind == TaskKind::classification;
    if (classification != (cfg.loss == TaskLossKind::cross_entropy)) {
        throw ConfigError("train_loop: " + task_kind_name(data.kind) + " data needs the " +
                          (classification ? "cross_entropy" : "mse") + " loss");
    }

    auto params = model_parameters(model);
    OptimizerConfig oc;
    oc.lr_peft = cfg.lr_peft;
    oc.lr_expert = cfg.lr_expert;
    oc.weight_decay = cfg.weight_decay;
    oc.grad_clip = cfg.grad_clip;
    AdamW opt(params, oc);
    const LossSpec spec{cfg.loss, cfg.alpha, cfg.beta};

    Rng root(cfg.seed);
    Rng shuffle_rng = root.split();
    Rng jitter_rng = root.split();

    const std::size_t n = data.size();
    const std::size_t per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
    const std::size_t total = cfg.total_steps(n);
    const std::size_t experts = model_experts(model);

    TrainResult result;
    std::vector<std::size_t> perm;
    std::vector<std::size_t> rows;
    for (std::size_t s = 0; s < total; ++s) {
        const std::size_t pos = s % per_epoch;
        if (pos == 0) {
            perm = permutation(n, shuffle_rng);
        }
        const std::size_t end = std::min(n, (pos + 1) * cfg.batch_size);
        rows.assign(perm.begin() + static_cast<std::ptrdiff_t>(pos * cfg.batch_size),
                    perm.begin() + static_cast<std::ptrdiff_t>(end));
        const MixtureDataset batch = data.subset(rows);

        LossAndGrad lg;
        StepInfo info;
        const double factor = lr_schedule(s, total, cfg.warmup_ratio);
        try {
            lg = loss_and_grad(model, SequenceBatch::tokens(batch.x), batch.y, spec, &jitter_rng, true);
            if (!std::isfinite(lg.loss.total)) {
                throw NumericError("non-finite loss");
            }
            info = opt.step(params, lg.tape, factor);
            for (const auto& p : params) {
                if (!all_finite(p.value->values())) {
                    throw NumericError("non-finite parameter '" + p.name + "'");
                }
            }
        } catch (const NumericError& e) {
            throw DivergenceError("training diverged at step " + std::to_string(s) + ": " + e.what());
        }

        if (s % cfg.log_every == 0 || s + 1 == total) {
            TrainRecord rec;
            rec.step = s;
            rec.epoch = s / per_epoch;
            rec.loss = lg.loss;
            rec.routing_entropy =
                entropy(BatchRoutingStats::from_decisions(lg.out.decisions, experts).pbar);
            rec.lr_factor = factor;
            rec.grad_norm = info.grad_norm;
            double sel = 0.0;
            for (const auto& d : lg.out.decisions) {
                sel += static_cast<double>(d.selected.size());
            }
            rec.avg_selected = sel / static_cast<double>(lg.out.decisions.size());
            if (metrics != nullptr) {
                *metrics << dump_json(to_json(rec)) << '\n';
            }
            result.history.push_back(rec);
        }
    }
    result.steps = total;
    return result;
}

} // namespace lime
