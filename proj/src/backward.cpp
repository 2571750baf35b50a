// Copyright 2026 The lime-peft Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "lime/errors.hpp"
#include "lime/train.hpp"

namespace lime {

GradTape GradTape::zeros_like(const std::vector<ParamRef>& params) {
    GradTape tape;
    for (const auto& p : params) {
        tape.names.push_back(p.name);
        tape.grads.emplace_back(p.value->rows(), p.value->cols());
    }
    return tape;
}

Matrix& GradTape::at(const std::string& name) {
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == name) {
            return grads[i];
        }
    }
    throw std::out_of_range("GradTape: no gradient buffer for '" + name + "'");
}

const Matrix* GradTape::find(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == name) {
            return &grads[i];
        }
    }
    return nullptr;
}

Matrix GradTape::value_or_zero(const std::string& name, std::size_t rows, std::size_t cols) const {
    if (const Matrix* g = find(name)) {
        return *g;
    }
    return Matrix(rows, cols);
}

double GradTape::global_norm() const {
    double sq = 0.0;
    for (const auto& g : grads) {
        for (double v : g.values()) {
            sq += v * v;
        }
    }
    return std::sqrt(sq);
}

BackwardFault parse_backward_fault(const std::string& name) {
    if (name == "none") return BackwardFault::none;
    if (name == "skip_renorm_jacobian") return BackwardFault::skip_renorm_jacobian;
    if (name == "skip_inf_norm_max") return BackwardFault::skip_inf_norm_max;
    if (name == "drop_load_balance") return BackwardFault::drop_load_balance;
    throw ConfigError("unknown backward fault '" + name + "'");
}

namespace {

void accumulate(Matrix& into, const Matrix& delta) {
    if (into.rows() != delta.rows() || into.cols() != delta.cols()) {
        throw ShapeError("gradient buffer " + into.shape_string() + " vs update " +
                         delta.shape_string());
    }
    for (std::size_t i = 0; i < into.size(); ++i) {
        into.values()[i] += delta.values()[i];
    }
}

void lora_backward(const LoraAdapter& a, const Matrix& x, const Matrix& dzhat,
                   const std::string& prefix, GradTape& tape) {
    const double s = a.scale();
    const Matrix u = matmul_nt(x, a.a);
    accumulate(tape.at(prefix + "lora.B"), scaled(matmul_tn(dzhat, u), s));
    if (!a.freeze_a) {
        const Matrix du = scaled(matmul(dzhat, a.b), s);
        accumulate(tape.at(prefix + "lora.A"), matmul_tn(du, x));
    }
}

void adapter_backward(const Adapter& adapter, const Matrix& x, const Matrix& z,
                      const Matrix& dzhat, GradTape& tape) {
    if (const auto* lora = std::get_if<LoraAdapter>(&adapter)) {
        lora_backward(*lora, x, dzhat, "", tape);
        return;
    }
    Matrix& ds = tape.at("diag.s");
    for (std::size_t j = 0; j < z.rows(); ++j) {
        for (std::size_t k = 0; k < z.cols(); ++k) {
            ds(0, k) += dzhat(j, k) * z(j, k);
        }
    }
}

/// Renormalization then softmax backward for one routing unit. Adds the
/// load-balance contribution `dpbar_unit` to dL/dw before the softmax.
Vector routing_logit_grad(const RoutingDecision& d, const Vector& dwt, const Vector& dpbar_unit,
                          double tau, BackwardFault fault) {
    const std::size_t e = d.weights.size();
    Vector dw(e, 0.0);
    double ssum = 0.0;
    double dot = 0.0;
    for (std::size_t i : d.selected) {
        ssum += d.weights[i];
        dot += dwt[i] * d.renorm[i];
    }
    for (std::size_t i : d.selected) {
        dw[i] = fault == BackwardFault::skip_renorm_jacobian ? dwt[i] : (dwt[i] - dot) / ssum;
    }
    if (fault != BackwardFault::drop_load_balance) {
        for (std::size_t i = 0; i < e; ++i) {
            dw[i] += dpbar_unit[i];
        }
    }
    double dotw = 0.0;
    for (std::size_t i = 0; i < e; ++i) {
        dotw += dw[i] * d.weights[i];
    }
    Vector dl(e);
    for (std::size_t i = 0; i < e; ++i) {
        dl[i] = d.weights[i] * (dw[i] - dotw) / tau;
    }
    return dl;
}

GradTape lime_backward(LimeLayer& layer, const SequenceBatch& batch, const LimeForward& f,
                       const Matrix& dh, const Vector& dpbar, BackwardFault fault) {
    GradTape tape = GradTape::zeros_like(layer.trainable_parameters());
    const std::size_t e = layer.num_experts();
    const std::size_t d_out = layer.d_out();
    const std::size_t n_units = f.decisions.size();
    if (f.jitter.size() != n_units || f.modulators.rows() != n_units || dh.rows() != f.h.rows() ||
        dh.cols() != d_out || f.h.rows() != batch.x.rows()) {
        throw ShapeError("lime backward: forward state does not match the batch");
    }

    Vector dpbar_unit(e);
    for (std::size_t i = 0; i < e; ++i) {
        dpbar_unit[i] = dpbar[i] / static_cast<double>(n_units);
    }

    Matrix dzhat(f.zhat.rows(), d_out);
    Matrix& dexp = tape.at("experts");
    Matrix* dps = layer.shared_enabled ? &tape.at("shared.p") : nullptr;
    Matrix* dgamma = layer.shared_enabled ? &tape.at("shared.gamma") : nullptr;
    const double gamma = layer.gamma(0, 0);

    Vector dP(d_out);
    Vector dwt(e);
    Vector a(e);
    for (std::size_t u = 0; u < n_units; ++u) {
        const RoutingDecision& d = f.decisions[u];
        const auto P = f.modulators.row(u);
        std::fill(dP.begin(), dP.end(), 0.0);
        for (std::size_t row = d.span_begin; row < d.span_end; ++row) {
            const auto g = dh.row(row);
            const auto zh = f.zhat.row(row);
            for (std::size_t k = 0; k < d_out; ++k) {
                dP[k] += g[k] * zh[k];
                double mod = P[k];
                if (layer.shared_enabled) {
                    mod += gamma * layer.shared(0, k);
                    (*dps)(0, k) += gamma * (g[k] * zh[k]);
                    (*dgamma)(0, 0) += g[k] * zh[k] * layer.shared(0, k);
                }
                dzhat(row, k) += g[k] * mod;
            }
        }

        std::fill(dwt.begin(), dwt.end(), 0.0);
        for (std::size_t i : d.selected) {
            const auto p = layer.experts.row(i);
            double dot = 0.0;
            for (std::size_t k = 0; k < d_out; ++k) {
                dexp(i, k) += d.renorm[i] * dP[k];
                dot += dP[k] * p[k];
            }
            dwt[i] = dot;
        }

        Vector dl = routing_logit_grad(d, dwt, dpbar_unit, layer.routing.tau, fault);
        if (!f.jitter[u].empty()) {
            for (std::size_t i = 0; i < e; ++i) {
                dl[i] *= f.jitter[u][i];
            }
        }

        // Only the ẑ slice has trainable upstream; z comes from frozen weights.
        for (std::size_t i = 0; i < e; ++i) {
            a[i] = f.zhat(d.representative, f.slice[i]);
        }
        const double m = inf_norm(a);
        if (m == 0.0) {
            continue;
        }
        double dm = 0.0;
        for (std::size_t i = 0; i < e; ++i) {
            const double dnorm = layer.routing.gamma_r * dl[i];
            dzhat(d.representative, f.slice[i]) += dnorm / m;
            dm -= dnorm * a[i] / (m * m);
        }
        if (fault != BackwardFault::skip_inf_norm_max) {
            const std::size_t k = argmax_abs(a);
            dzhat(d.representative, f.slice[k]) += a[k] > 0.0 ? dm : -dm;
        }
    }

    adapter_backward(layer.adapter, batch.x, f.z, dzhat, tape);
    return tape;
}

GradTape moe_backward(MoeLayer& layer, const Matrix& x, const MoeForward& f, const Matrix& dh,
                      const Vector& dpbar, BackwardFault fault) {
    GradTape tape = GradTape::zeros_like(layer.trainable_parameters());
    const std::size_t e = layer.num_experts();
    const std::size_t n = x.rows();
    const std::size_t d_out = layer.d_out();
    if (f.decisions.size() != n || dh.rows() != n || dh.cols() != d_out) {
        throw ShapeError("moe backward: forward state does not match the batch");
    }
    Vector dpbar_unit(e);
    for (std::size_t i = 0; i < e; ++i) {
        dpbar_unit[i] = dpbar[i] / static_cast<double>(n);
    }
    std::vector<Matrix> ddelta(e, Matrix(n, d_out));
    Matrix dlogits(n, e);
    Vector dwt(e);
    for (std::size_t j = 0; j < n; ++j) {
        const RoutingDecision& d = f.decisions[j];
        const auto g = dh.row(j);
        std::fill(dwt.begin(), dwt.end(), 0.0);
        for (std::size_t i : d.selected) {
            const auto delta = f.deltas[i].row(j);
            auto dd = ddelta[i].row(j);
            double dot = 0.0;
            for (std::size_t k = 0; k < d_out; ++k) {
                dd[k] += d.renorm[i] * g[k];
                dot += g[k] * delta[k];
            }
            dwt[i] = dot;
        }
        const Vector dl = routing_logit_grad(d, dwt, dpbar_unit, layer.tau, fault);
        std::copy(dl.begin(), dl.end(), dlogits.row(j).begin());
    }
    accumulate(tape.at("router"), matmul_tn(x, dlogits));
    for (std::size_t i = 0; i < e; ++i) {
        lora_backward(layer.adapters[i], x, ddelta[i], "expert" + std::to_string(i) + ".", tape);
    }
    return tape;
}

Vector load_balance_grad(const Vector& pbar, const LossSpec& spec) {
    Vector g(pbar.size(), 0.0);
    if (spec.alpha != 0.0) {
        const Vector gi = importance_loss_grad(pbar);
        for (std::size_t i = 0; i < g.size(); ++i) {
            g[i] += spec.alpha * gi[i];
        }
    }
    if (spec.beta != 0.0) {
        const Vector gk = kl_uniform_loss_grad(pbar);
        for (std::size_t i = 0; i < g.size(); ++i) {
            g[i] += spec.beta * gk[i];
        }
    }
    return g;
}

} // namespace

LossBreakdown evaluate_loss(const Model& model, const SequenceBatch& batch, const Matrix& target,
                            const LossSpec& spec, const JitterTape* replay) {
    const ModelOutput out = model_forward(model, batch, nullptr, false, replay);
    const auto stats = BatchRoutingStats::from_decisions(out.decisions, model_experts(model));
    return combine_losses(task_loss(out.h, target, spec.kind), stats.pbar, spec.alpha, spec.beta);
}

GradTape backward(Model& model, const SequenceBatch& batch, const ModelOutput& out,
                  const Matrix& target, const LossSpec& spec, BackwardFault fault) {
    const Matrix dh = task_loss_grad(out.h, target, spec.kind);
    const auto stats = BatchRoutingStats::from_decisions(out.decisions, model_experts(model));
    const Vector dpbar = load_balance_grad(stats.pbar, spec);
    if (auto* lime = std::get_if<LimeLayer>(&model)) {
        if (!out.lime) {
            throw std::invalid_argument("backward: LiME model without a LiME forward state");
        }
        return lime_backward(*lime, batch, *out.lime, dh, dpbar, fault);
    }
    if (!out.moe) {
        throw std::invalid_argument("backward: MoE model without a MoE forward state");
    }
    return moe_backward(std::get<MoeLayer>(model), batch.x, *out.moe, dh, dpbar, fault);
}

LossAndGrad loss_and_grad(Model& model, const SequenceBatch& batch, const Matrix& target,
                          const LossSpec& spec, Rng* rng, bool training, BackwardFault fault) {
    LossAndGrad r;
    r.out = model_forward(model, batch, rng, training);
    const auto stats = BatchRoutingStats::from_decisions(r.out.decisions, model_experts(model));
    r.loss = combine_losses(task_loss(r.out.h, target, spec.kind), stats.pbar, spec.alpha, spec.beta);
    r.tape = backward(model, batch, r.out, target, spec, fault);
    return r;
}

} // namespace lime
