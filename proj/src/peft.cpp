// Copyright 2026 The lime-peft Authors
// SPDX-License-Identifier: Apache-2.0

#include "lime/peft.hpp"

#include <algorithm>
#include <cmath>

#include "lime/errors.hpp"

namespace lime {

LoraAdapter make_lora(std::size_t d_in, std::size_t d_out, const LoraSpec& spec, Rng& rng) {
    if (spec.rank < 1 || spec.rank > std::min(d_in, d_out)) {
        throw ConfigError("LoRA rank must lie in [1, min(d_in, d_out)], got " +
                          std::to_string(spec.rank));
    }
    if (!(spec.alpha > 0.0)) {
        throw ConfigError("LoRA alpha must be positive");
    }
    LoraAdapter lora;
    lora.a = random_normal(spec.rank, d_in, spec.a_std, rng);
    lora.b = Matrix(d_out, spec.rank);
    lora.alpha = spec.alpha;
    lora.freeze_a = spec.freeze_a;
    return lora;
}

DiagAdapter make_diag(std::size_t d_out) {
    return DiagAdapter{Matrix(1, d_out)};
}

FrozenLinear make_base_layer(std::size_t d_in, std::size_t d_out, std::uint64_t seed) {
    Rng rng(seed);
    return FrozenLinear{random_normal(d_out, d_in, 1.0 / std::sqrt(static_cast<double>(d_in)), rng)};
}

Matrix frozen_forward(const FrozenLinear& layer, const Matrix& x) {
    if (x.cols() != layer.d_in()) {
        throw ShapeError("frozen_forward: input " + x.shape_string() + " does not match W0 " +
                         layer.weight.shape_string());
    }
    return matmul_nt(x, layer.weight);
}

Matrix peft_forward(const LoraAdapter& adapter, const Matrix& x) {
    if (x.cols() != adapter.a.cols()) {
        throw ShapeError("lora forward: input " + x.shape_string() + " does not match A " +
                         adapter.a.shape_string());
    }
    if (adapter.b.cols() != adapter.a.rows()) {
        throw ShapeError("lora forward: B " + adapter.b.shape_string() + " does not match A " +
                         adapter.a.shape_string());
    }
    Matrix hidden = matmul_nt(x, adapter.a);
    return scaled(matmul_nt(hidden, adapter.b), adapter.scale());
}

Matrix peft_forward(const Adapter& adapter, const Matrix& x, const Matrix& z) {
    if (const auto* lora = std::get_if<LoraAdapter>(&adapter)) {
        Matrix zhat = peft_forward(*lora, x);
        if (zhat.rows() != z.rows() || zhat.cols() != z.cols()) {
            throw ShapeError("peft_forward: adapter output " + zhat.shape_string() +
                             " does not match frozen output " + z.shape_string());
        }
        return zhat;
    }
    const auto& diag = std::get<DiagAdapter>(adapter);
    if (z.cols() != diag.s.cols() || z.rows() != x.rows()) {
        throw ShapeError("diag forward: frozen output " + z.shape_string() +
                         " does not match scale " + diag.s.shape_string());
    }
    Matrix zhat = z;
    for (std::size_t i = 0; i < zhat.rows(); ++i) {
        auto row = zhat.row(i);
        for (std::size_t j = 0; j < row.size(); ++j) {
            row[j] *= diag.s(0, j);
        }
    }
    return zhat;
}

std::size_t count_peft_params(const LoraAdapter& adapter) {
    const std::size_t r = adapter.rank();
    const std::size_t d_in = adapter.a.cols();
    const std::size_t d_out = adapter.b.rows();
    return adapter.freeze_a ? r * d_out : r * (d_in + d_out);
}

std::size_t count_peft_params(const Adapter& adapter) {
    return std::visit(
        [](const auto& a) -> std::size_t {
            using T = std::decay_t<decltype(a)>;
            if constexpr (std::is_same_v<T, LoraAdapter>) {
                return count_peft_params(a);
            } else {
                return a.s.cols();
            }
        },
        adapter);
}

std::size_t adapter_d_out(const Adapter& adapter) {
    if (const auto* lora = std::get_if<LoraAdapter>(&adapter)) {
        return lora->b.rows();
    }
    return std::get<DiagAdapter>(adapter).s.cols();
}

void collect_adapter_params(LoraAdapter& adapter, const std::string& prefix,
                            std::vector<ParamRef>& out) {
    if (!adapter.freeze_a) {
        out.push_back({prefix + "lora.A", &adapter.a, ParamGroup::adapter});
    }
    out.push_back({prefix + "lora.B", &adapter.b, ParamGroup::adapter});
}

void collect_adapter_params(Adapter& adapter, const std::string& prefix,
                            std::vector<ParamRef>& out) {
    if (auto* lora = std::get_if<LoraAdapter>(&adapter)) {
        collect_adapter_params(*lora, prefix, out);
        return;
    }
    out.push_back({prefix + "diag.s", &std::get<DiagAdapter>(adapter).s, ParamGroup::adapter});
}

void collect_adapter_tensors(const LoraAdapter& adapter, const std::string& prefix,
                             std::vector<ConstParamRef>& out) {
    out.push_back({prefix + "lora.A", &adapter.a, !adapter.freeze_a});
    out.push_back({prefix + "lora.B", &adapter.b, true});
}

void collect_adapter_tensors(const Adapter& adapter, const std::string& prefix,
                             std::vector<ConstParamRef>& out) {
    if (const auto* lora = std::get_if<LoraAdapter>(&adapter)) {
        collect_adapter_tensors(*lora, prefix, out);
        return;
    }
    out.push_back({prefix + "diag.s", &std::get<DiagAdapter>(adapter).s, true});
}

std::size_t enumerate_trainable(const std::vector<ParamRef>& params) {
    std::size_t n = 0;
    for (const auto& p : params) {
        n += p.value->size();
    }
    return n;
}

} // namespace lime
