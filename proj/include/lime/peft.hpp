// Copyright 2026 The lime-peft Authors
// SPDX-License-Identifier: Apache-2.0

// Frozen base layer and the PEFT adapters that produce the adaptation term
// zhat = delta(x).

#pragma once

#include <cstddef>
#include <string>
#include <variant>
#include <vector>

#include "lime/tensor.hpp"

namespace lime {

/// Optimizer group a trainable tensor belongs to.
enum class ParamGroup { adapter, modulator };

struct ParamRef {
    std::string name;
    Matrix* value;
    ParamGroup group;
};

struct ConstParamRef {
    std::string name;
    const Matrix* value;
    bool trainable;
};

/// z = x · W0ᵀ with W0 of shape d_out x d_in. Never trained.
struct FrozenLinear {
    Matrix weight;

    std::size_t d_in() const noexcept { return weight.cols(); }
    std::size_t d_out() const noexcept { return weight.rows(); }
};

/// Low-rank adapter: zhat = (x Aᵀ) Bᵀ · (alpha / r).
/// With `freeze_a` set (LoRA-FA) only B is trainable.
struct LoraAdapter {
    Matrix a; // r x d_in
    Matrix b; // d_out x r
    double alpha = 1.0;
    bool freeze_a = false;

    std::size_t rank() const noexcept { return a.rows(); }
    double scale() const noexcept { return alpha / static_cast<double>(a.rows()); }
};

/// Elementwise rescaling of the frozen output: zhat = z ⊙ s.
struct DiagAdapter {
    Matrix s; // 1 x d_out
};

using Adapter = std::variant<LoraAdapter, DiagAdapter>;

struct LoraSpec {
    std::size_t rank = 2;
    double alpha = 4.0;
    bool freeze_a = false;
    double a_std = 0.02;
};

/// A ~ N(0, a_std²), B = 0. Validates 1 <= r <= min(d_in, d_out).
LoraAdapter make_lora(std::size_t d_in, std::size_t d_out, const LoraSpec& spec, Rng& rng);
/// s = 0, so zhat = 0 at init.
DiagAdapter make_diag(std::size_t d_out);

/// W0 ~ N(0, 1/d_in). Shared between task generators and models so both see
/// the same pretrained map for a given seed.
FrozenLinear make_base_layer(std::size_t d_in, std::size_t d_out, std::uint64_t seed);

Matrix frozen_forward(const FrozenLinear& layer, const Matrix& x);

/// `z` is the frozen output for the same rows; only DiagAdapter reads it.
Matrix peft_forward(const Adapter& adapter, const Matrix& x, const Matrix& z);
Matrix peft_forward(const LoraAdapter& adapter, const Matrix& x);

std::size_t count_peft_params(const Adapter& adapter);
std::size_t count_peft_params(const LoraAdapter& adapter);

std::size_t adapter_d_out(const Adapter& adapter);

/// Trainable adapter tensors, names prefixed with `prefix`.
void collect_adapter_params(Adapter& adapter, const std::string& prefix,
                            std::vector<ParamRef>& out);
void collect_adapter_params(LoraAdapter& adapter, const std::string& prefix,
                            std::vector<ParamRef>& out);
/// Every adapter tensor, frozen ones included.
void collect_adapter_tensors(const Adapter& adapter, const std::string& prefix,
                             std::vector<ConstParamRef>& out);
void collect_adapter_tensors(const LoraAdapter& adapter, const std::string& prefix,
                             std::vector<ConstParamRef>& out);

/// Sum of element counts over trainable tensors; used to cross-check the
/// closed-form parameter counts.
std::size_t enumerate_trainable(const std::vector<ParamRef>& params);

} // namespace lime
