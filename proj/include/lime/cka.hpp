// Copyright 2026 The lime-peft Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>

#include "lime/tensor.hpp"

namespace lime {

struct CkaReport {
    double score = 0.0;
    std::size_t n_samples = 0;
    std::size_t dim_x = 0;
    std::size_t dim_y = 0;
};

/// Linear CKA on column-centered representations:
///   ‖XᵀY‖²_F / (‖XᵀX‖_F · ‖YᵀY‖_F).
/// Rows are samples. Throws NumericError when either representation has zero
/// variance after centering.
CkaReport linear_cka(const Matrix& x, const Matrix& y);

/// Subtracts each column's mean.
Matrix center_columns(const Matrix& x);

} // namespace lime
