// Copyright 2026 The lime-peft Authors
// SPDX-License-Identifier: Apache-2.0

#include "lime/cka.hpp"

#include <algorithm>

#include "lime/errors.hpp"

namespace lime {

Matrix center_columns(const Matrix& x) {
    Matrix out = x;
    if (x.rows() == 0) {
        return out;
    }
    for (std::size_t c = 0; c < x.cols(); ++c) {
        double mean = 0.0;
        for (std::size_t r = 0; r < x.rows(); ++r) {
            mean += x(r, c);
        }
        mean /= static_cast<double>(x.rows());
        for (std::size_t r = 0; r < x.rows(); ++r) {
            out(r, c) -= mean;
        }
    }
    return out;
}

CkaReport linear_cka(const Matrix& x, const Matrix& y) {
    if (x.rows() != y.rows()) {
        throw ShapeError("linear_cka: " + x.shape_string() + " and " + y.shape_string() +
                         " have different sample counts");
    }
    if (x.rows() < 2) {
        throw std::invalid_argument("linear_cka: need at least two samples");
    }
    const Matrix xc = center_columns(x);
    const Matrix yc = center_columns(y);
    const double nx = frobenius_norm(matmul_tn(xc, xc));
    const double ny = frobenius_norm(matmul_tn(yc, yc));
    if (nx == 0.0 || ny == 0.0) {
        throw NumericError("linear_cka: zero-variance representation");
    }
    const double cross = frobenius_norm(matmul_tn(xc, yc));
    CkaReport r;
    r.score = std::clamp(cross * cross / (nx * ny), 0.0, 1.0);
    r.n_samples = x.rows();
    r.dim_x = x.cols();
    r.dim_y = y.cols();
    return r;
}

} // namespace lime
