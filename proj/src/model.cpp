// Copyright 2026 The lime-peft Authors
// SPDX-License-Identifier: Apache-2.0

#include "lime/model.hpp"

namespace lime {

ModelOutput model_forward(const Model& model, const SequenceBatch& batch, Rng* rng, bool training,
                          const JitterTape* replay) {
    ModelOutput out;
    if (const auto* lime = std::get_if<LimeLayer>(&model)) {
        out.lime = forward(*lime, batch, rng, training, replay);
        out.h = out.lime->h;
        out.decisions = out.lime->decisions;
    } else {
        batch.validate();
        out.moe = moe_forward(std::get<MoeLayer>(model), batch.x);
        out.h = out.moe->h;
        out.decisions = out.moe->decisions;
    }
    return out;
}

std::vector<ParamRef> model_parameters(Model& model) {
    return std::visit([](auto& m) { return m.trainable_parameters(); }, model);
}

std::vector<NamedTensor> model_tensors(const Model& model) {
    return std::visit([](const auto& m) { return m.tensors(); }, model);
}

void model_load(Model& model, const std::vector<NamedTensor>& tensors) {
    std::visit([&](auto& m) { m.load_tensors(tensors); }, model);
}

std::size_t model_experts(const Model& model) {
    return std::visit([](const auto& m) { return m.num_experts(); }, model);
}

std::size_t model_d_in(const Model& model) {
    return std::visit([](const auto& m) { return m.d_in(); }, model);
}

std::size_t model_d_out(const Model& model) {
    return std::visit([](const auto& m) { return m.d_out(); }, model);
}

std::size_t model_param_count(const Model& model) {
    if (const auto* lime = std::get_if<LimeLayer>(&model)) {
        return count_lime_params(*lime);
    }
    return count_moe_params(std::get<MoeLayer>(model));
}

} // namespace lime
