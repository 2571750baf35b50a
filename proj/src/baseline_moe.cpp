// Copyright 2026 The lime-peft Authors
// SPDX-License-Identifier: Apache-2.0

#include "lime/baseline_moe.hpp"

#include <algorithm>
#include <string>

#include "lime/errors.hpp"

namespace lime {

namespace {

std::string expert_prefix(std::size_t i) {
    return "expert" + std::to_string(i) + ".";
}

} // namespace

std::vector<ParamRef> MoeLayer::trainable_parameters() {
    std::vector<ParamRef> params;
    params.push_back({"router", &router, ParamGroup::adapter});
    for (std::size_t i = 0; i < adapters.size(); ++i) {
        collect_adapter_params(adapters[i], expert_prefix(i), params);
    }
    return params;
}

std::vector<NamedTensor> MoeLayer::tensors() const {
    std::vector<NamedTensor> out;
    out.push_back({"frozen.weight", frozen.weight});
    out.push_back({"router", router});
    for (std::size_t i = 0; i < adapters.size(); ++i) {
        std::vector<ConstParamRef> refs;
        collect_adapter_tensors(adapters[i], expert_prefix(i), refs);
        for (const auto& r : refs) {
            out.push_back({r.name, *r.value});
        }
    }
    return out;
}

void MoeLayer::load_tensors(const std::vector<NamedTensor>& tensors) {
    frozen.weight = find_tensor(tensors, "frozen.weight", frozen.weight.rows(), frozen.weight.cols());
    router = find_tensor(tensors, "router", router.rows(), router.cols());
    for (std::size_t i = 0; i < adapters.size(); ++i) {
        auto& a = adapters[i];
        a.a = find_tensor(tensors, expert_prefix(i) + "lora.A", a.a.rows(), a.a.cols());
        a.b = find_tensor(tensors, expert_prefix(i) + "lora.B", a.b.rows(), a.b.cols());
    }
}

void MoeLayer::validate() const {
    const std::size_t e = adapters.size();
    if (e < 1) {
        throw ConfigError("MoE layer needs at least one expert");
    }
    if (router.rows() != d_in() || router.cols() != e) {
        throw ShapeError("MoE router is " + router.shape_string() + ", expected " +
                         std::to_string(d_in()) + "x" + std::to_string(e));
    }
    for (const auto& a : adapters) {
        if (a.a.cols() != d_in() || a.b.rows() != d_out() || a.b.cols() != a.a.rows()) {
            throw ShapeError("MoE expert adapter does not match d_in / d_out");
        }
    }
    if (top_k < 1) {
        throw ConfigError("MoE top_k must be >= 1");
    }
    if (!(tau > 0.0)) {
        throw ConfigError("MoE router temperature must be > 0");
    }
}

MoeLayer make_moe_layer(const MoeLayerSpec& spec, Rng& rng) {
    if (spec.experts < 1) {
        throw ConfigError("MoE layer needs at least one expert");
    }
    MoeLayer layer;
    layer.frozen = make_base_layer(spec.d_in, spec.d_out, spec.base_seed);
    for (std::size_t i = 0; i < spec.experts; ++i) {
        layer.adapters.push_back(make_lora(spec.d_in, spec.d_out, spec.lora, rng));
    }
    layer.router = random_normal(spec.d_in, spec.experts, spec.router_std, rng);
    layer.top_k = spec.top_k;
    layer.tau = spec.tau;
    layer.validate();
    return layer;
}

MoeForward moe_forward(const MoeLayer& layer, const Matrix& x) {
    layer.validate();
    if (x.cols() != layer.d_in()) {
        throw ShapeError("moe_forward: x is " + x.shape_string() + ", expected d_in=" +
                         std::to_string(layer.d_in()));
    }
    const std::size_t e = layer.num_experts();
    const auto strategy = SelectionStrategy::fixed_topk(std::min(layer.top_k, e));

    MoeForward out;
    out.z = frozen_forward(layer.frozen, x);
    out.deltas.reserve(e);
    for (const auto& a : layer.adapters) {
        out.deltas.push_back(peft_forward(a, x));
    }
    const Matrix logits = matmul(x, layer.router);
    out.h = out.z;
    out.decisions.reserve(x.rows());
    for (std::size_t j = 0; j < x.rows(); ++j) {
        RoutingDecision d = select(softmax(logits.row(j), layer.tau), strategy);
        d.span_begin = j;
        d.span_end = j + 1;
        d.representative = j;
        d.sequence = j;
        auto hrow = out.h.row(j);
        for (std::size_t i : d.selected) {
            const auto delta = out.deltas[i].row(j);
            for (std::size_t k = 0; k < hrow.size(); ++k) {
                hrow[k] += d.renorm[i] * delta[k];
            }
        }
        out.decisions.push_back(std::move(d));
    }
    return out;
}

std::size_t count_moe_params(const MoeLayer& layer) {
    std::size_t n = layer.d_in() * layer.num_experts();
    for (const auto& a : layer.adapters) {
        n += count_peft_params(a);
    }
    return n;
}

} // namespace lime
