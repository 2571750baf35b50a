// Copyright 2026 The lime-peft Authors
// SPDX-License-Identifier: Apache-2.0

#include "lime/information.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include "lime/errors.hpp"

namespace lime {

void DiscreteJoint::validate() const {
    if (p.empty()) {
        throw std::invalid_argument("joint distribution is empty");
    }
    double total = 0.0;
    for (double v : p.values()) {
        if (!std::isfinite(v) || v < 0.0) {
            throw std::invalid_argument("joint distribution has a negative or non-finite entry");
        }
        total += v;
    }
    if (std::abs(total - 1.0) > 1e-12) {
        throw std::invalid_argument("joint distribution sums to " + std::to_string(total));
    }
}

DiscreteJoint DiscreteJoint::from_counts(const Matrix& counts) {
    double total = 0.0;
    for (double v : counts.values()) {
        if (!(v >= 0.0)) {
            throw std::invalid_argument("joint counts must be >= 0");
        }
        total += v;
    }
    if (total <= 0.0) {
        throw std::invalid_argument("joint counts are all zero");
    }
    return DiscreteJoint{scaled(counts, 1.0 / total)};
}

double mutual_information(const DiscreteJoint& joint) {
    joint.validate();
    const Matrix& p = joint.p;
    Vector py(p.rows(), 0.0);
    Vector pz(p.cols(), 0.0);
    for (std::size_t y = 0; y < p.rows(); ++y) {
        for (std::size_t z = 0; z < p.cols(); ++z) {
            py[y] += p(y, z);
            pz[z] += p(y, z);
        }
    }
    double mi = 0.0;
    for (std::size_t y = 0; y < p.rows(); ++y) {
        for (std::size_t z = 0; z < p.cols(); ++z) {
            if (p(y, z) > 0.0) {
                mi += p(y, z) * std::log(p(y, z) / (py[y] * pz[z]));
            }
        }
    }
    return std::max(mi, 0.0);
}

double mutual_information_counts(const std::vector<std::vector<std::uint64_t>>& columns) {
    if (columns.empty()) {
        throw std::invalid_argument("mutual_information_counts: no columns");
    }
    const std::size_t labels = columns.front().size();
    std::vector<std::uint64_t> ny(labels, 0);
    std::uint64_t total = 0;
    // Reduced direction of each column -> pooled column total.
    std::map<std::vector<std::uint64_t>, std::uint64_t> classes;
    for (const auto& col : columns) {
        if (col.size() != labels) {
            throw std::invalid_argument("mutual_information_counts: ragged columns");
        }
        std::uint64_t g = 0;
        std::uint64_t nz = 0;
        for (std::size_t y = 0; y < labels; ++y) {
            g = std::gcd(g, col[y]);
            nz += col[y];
            ny[y] += col[y];
        }
        total += nz;
        if (nz == 0) {
            continue;
        }
        std::vector<std::uint64_t> dir(labels);
        for (std::size_t y = 0; y < labels; ++y) {
            dir[y] = col[y] / g;
        }
        classes[dir] += nz;
    }
    if (total == 0) {
        throw std::invalid_argument("mutual_information_counts: all counts are zero");
    }
    const double n = static_cast<double>(total);
    double mi = 0.0;
    for (const auto& [dir, nz] : classes) {
        const double dir_total = static_cast<double>(std::accumulate(dir.begin(), dir.end(), std::uint64_t{0}));
        double inner = 0.0;
        for (std::size_t y = 0; y < labels; ++y) {
            if (dir[y] == 0) {
                continue;
            }
            const double q = static_cast<double>(dir[y]) / dir_total;
            inner += q * std::log(q * n / static_cast<double>(ny[y]));
        }
        mi += static_cast<double>(nz) / n * inner;
    }
    return mi;
}

std::size_t matrix_rank(const Matrix& m, double tol) {
    Matrix a = m;
    std::size_t rank = 0;
    for (std::size_t c = 0; c < a.cols() && rank < a.rows(); ++c) {
        std::size_t piv = rank;
        for (std::size_t r = rank + 1; r < a.rows(); ++r) {
            if (std::abs(a(r, c)) > std::abs(a(piv, c))) {
                piv = r;
            }
        }
        if (std::abs(a(piv, c)) <= tol) {
            continue;
        }
        for (std::size_t k = 0; k < a.cols(); ++k) {
            std::swap(a(piv, k), a(rank, k));
        }
        for (std::size_t r = rank + 1; r < a.rows(); ++r) {
            const double f = a(r, c) / a(rank, c);
            for (std::size_t k = c; k < a.cols(); ++k) {
                a(r, k) -= f * a(rank, k);
            }
        }
        ++rank;
    }
    return rank;
}

std::vector<Vector> level_outputs(const RefinementToy& toy, std::size_t level) {
    const RouterLevel& lv = toy.levels.at(level);
    std::vector<Vector> out;
    out.reserve(toy.x.size());
    for (std::size_t i = 0; i < toy.x.size(); ++i) {
        const Matrix& map = lv.maps.at(lv.assignment.at(i));
        const Matrix col = matmul(map, Matrix(toy.x[i].size(), 1, toy.x[i]));
        out.emplace_back(col.values().begin(), col.values().end());
    }
    return out;
}

namespace {

Matrix stack_columns(const Matrix& map, const std::vector<Vector>& x,
                     const std::vector<std::size_t>& points) {
    Matrix xs(map.cols(), points.size());
    for (std::size_t j = 0; j < points.size(); ++j) {
        for (std::size_t k = 0; k < map.cols(); ++k) {
            xs(k, j) = x[points[j]][k];
        }
    }
    return matmul(map, xs);
}

} // namespace

void validate_refinement(const RefinementToy& toy) {
    const std::size_t n = toy.x.size();
    if (n == 0 || toy.levels.empty()) {
        throw ConfigError("refinement toy needs support points and at least one level");
    }
    if (toy.counts.size() != n || toy.n_labels == 0) {
        throw ConfigError("refinement toy: one count row per support point required");
    }
    const std::size_t dim = toy.x.front().size();
    for (std::size_t i = 0; i < n; ++i) {
        if (toy.x[i].size() != dim) {
            throw ConfigError("refinement toy: support points differ in dimension");
        }
        if (toy.counts[i].size() != toy.n_labels) {
            throw ConfigError("refinement toy: count row has the wrong number of labels");
        }
        if (std::accumulate(toy.counts[i].begin(), toy.counts[i].end(), std::uint64_t{0}) == 0) {
            throw ConfigError("refinement toy: support point " + std::to_string(i) + " has zero mass");
        }
    }
    for (const auto& lv : toy.levels) {
        if (lv.assignment.size() != n) {
            throw ConfigError("refinement toy: router assignment must cover every point");
        }
        for (std::size_t a : lv.assignment) {
            if (a >= lv.maps.size()) {
                throw ConfigError("refinement toy: assignment to a missing expert map");
            }
        }
        for (const auto& m : lv.maps) {
            if (m.cols() != dim) {
                throw ConfigError("refinement toy: expert map does not match the input dimension");
            }
        }
    }
    for (std::size_t k = 0; k + 1 < toy.levels.size(); ++k) {
        const RouterLevel& coarse = toy.levels[k];
        const RouterLevel& fine = toy.levels[k + 1];
        std::map<std::size_t, std::vector<std::size_t>> members;
        for (std::size_t i = 0; i < n; ++i) {
            members[fine.assignment[i]].push_back(i);
        }
        for (const auto& [e, pts] : members) {
            const std::size_t parent = coarse.assignment[pts.front()];
            for (std::size_t i : pts) {
                if (coarse.assignment[i] != parent) {
                    throw ConfigError("level " + std::to_string(k + 1) + " does not refine level " +
                                      std::to_string(k));
                }
            }
            const Matrix fx = stack_columns(fine.maps[e], toy.x, pts);
            const Matrix cx = stack_columns(coarse.maps[parent], toy.x, pts);
            Matrix both(fx.rows() + cx.rows(), fx.cols());
            for (std::size_t r = 0; r < fx.rows(); ++r) {
                std::copy(fx.row(r).begin(), fx.row(r).end(), both.row(r).begin());
            }
            for (std::size_t r = 0; r < cx.rows(); ++r) {
                std::copy(cx.row(r).begin(), cx.row(r).end(), both.row(fx.rows() + r).begin());
            }
            if (matrix_rank(both) != matrix_rank(fx)) {
                throw ConfigError("level " + std::to_string(k) + " map does not factor through expert " +
                                  std::to_string(e) + " of level " + std::to_string(k + 1));
            }
        }
        const auto zf = level_outputs(toy, k + 1);
        const auto zc = level_outputs(toy, k);
        std::map<Vector, Vector> image;
        for (std::size_t i = 0; i < n; ++i) {
            auto [it, inserted] = image.emplace(zf[i], zc[i]);
            if (!inserted && it->second != zc[i]) {
                throw ConfigError("level " + std::to_string(k) + " output is not a function of level " +
                                  std::to_string(k + 1) + " output");
            }
        }
    }
}

RefinementReport check_refinement_chain(const RefinementToy& toy) {
    validate_refinement(toy);
    RefinementReport report;
    for (std::size_t k = 0; k < toy.levels.size(); ++k) {
        const auto z = level_outputs(toy, k);
        std::map<Vector, std::vector<std::uint64_t>> cols;
        for (std::size_t i = 0; i < z.size(); ++i) {
            auto& col = cols[z[i]];
            col.resize(toy.n_labels, 0);
            for (std::size_t y = 0; y < toy.n_labels; ++y) {
                col[y] += toy.counts[i][y];
            }
        }
        std::vector<std::vector<std::uint64_t>> columns;
        for (auto& [key, col] : cols) {
            columns.push_back(std::move(col));
        }
        report.mi.push_back(mutual_information_counts(columns));
    }
    for (std::size_t k = 1; k < report.mi.size(); ++k) {
        if (report.mi[k] < report.mi[k - 1]) {
            ++report.violations;
        }
    }
    report.monotone = report.violations == 0;
    return report;
}

namespace {

Matrix random_unimodular(std::size_t dim, Rng& rng) {
    Matrix u = Matrix::identity(dim);
    if (dim < 2) {
        return u;
    }
    for (int step = 0; step < 6; ++step) {
        const std::size_t i = rng.below(dim);
        std::size_t j = rng.below(dim - 1);
        if (j >= i) {
            ++j;
        }
        const double s = rng.below(2) == 0 ? 1.0 : -1.0;
        for (std::size_t k = 0; k < dim; ++k) {
            u(i, k) += s * u(j, k);
        }
    }
    return u;
}

/// [[block, 0], [0, tag]] of size (dim+1) x (dim+1).
Matrix with_tag(const Matrix& block, double tag) {
    const std::size_t d = block.rows();
    Matrix m(d + 1, d + 1);
    for (std::size_t r = 0; r < d; ++r) {
        for (std::size_t c = 0; c < d; ++c) {
            m(r, c) = block(r, c);
        }
    }
    m(d, d) = tag;
    return m;
}

Matrix mask_matrix(const std::vector<bool>& mask) {
    Matrix m(mask.size(), mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) {
        m(i, i) = mask[i] ? 1.0 : 0.0;
    }
    return m;
}

std::vector<std::size_t> surjective_parents(std::size_t children, std::size_t parents, Rng& rng) {
    std::vector<std::size_t> p(children);
    for (std::size_t c = 0; c < children; ++c) {
        p[c] = c < parents ? c : rng.below(parents);
    }
    return p;
}

} // namespace

RefinementToy make_refinement_toy(Rng& rng, const RefinementToySize& size) {
    if (size.max_points < 2 || size.max_labels < 2 || size.dim < 1) {
        throw ConfigError("refinement toy size too small");
    }
    RefinementToy toy;
    const std::size_t lo = std::min<std::size_t>(6, size.max_points);
    const std::size_t n_points = lo + rng.below(size.max_points - lo + 1);
    toy.n_labels = 2 + rng.below(size.max_labels - 1);

    std::map<Vector, bool> seen;
    while (toy.x.size() < n_points) {
        Vector v(size.dim + 1, 1.0);
        for (std::size_t k = 0; k < size.dim; ++k) {
            v[k] = static_cast<double>(static_cast<int>(rng.below(5)) - 2);
        }
        if (seen.emplace(v, true).second) {
            toy.x.push_back(v);
        }
    }
    for (std::size_t i = 0; i < n_points; ++i) {
        std::vector<std::uint64_t> c(toy.n_labels);
        std::uint64_t total = 0;
        for (auto& v : c) {
            v = rng.below(5);
            total += v;
        }
        if (total == 0) {
            c[rng.below(toy.n_labels)] = 1;
        }
        toy.counts.push_back(std::move(c));
    }

    const std::size_t e3 = 2 + rng.below(3);
    const std::size_t e2 = 1 + rng.below(e3);
    const std::size_t e1 = 1 + rng.below(e2);
    const auto parent2 = surjective_parents(e3, e2, rng);
    const auto parent1 = surjective_parents(e2, e1, rng);

    std::vector<std::vector<bool>> mask2(e2, std::vector<bool>(size.dim));
    for (auto& m : mask2) {
        for (std::size_t k = 0; k < size.dim; ++k) {
            m[k] = rng.below(3) != 0;
        }
    }
    std::vector<std::vector<bool>> mask1(e1, std::vector<bool>(size.dim, true));
    for (std::size_t c = 0; c < e2; ++c) {
        for (std::size_t k = 0; k < size.dim; ++k) {
            mask1[parent1[c]][k] = mask1[parent1[c]][k] && mask2[c][k];
        }
    }
    for (auto& m : mask1) {
        for (std::size_t k = 0; k < size.dim; ++k) {
            m[k] = m[k] && rng.below(2) == 0;
        }
    }

    RouterLevel l1;
    RouterLevel l2;
    RouterLevel l3;
    for (std::size_t k = 0; k < e1; ++k) {
        l1.maps.push_back(with_tag(mask_matrix(mask1[k]), 1.0));
    }
    for (std::size_t c = 0; c < e2; ++c) {
        const Matrix mix = matmul(random_unimodular(size.dim, rng), mask_matrix(mask2[c]));
        l2.maps.push_back(with_tag(mix, static_cast<double>(c + 1)));
    }
    for (std::size_t e = 0; e < e3; ++e) {
        l3.maps.push_back(with_tag(random_unimodular(size.dim, rng), static_cast<double>(e + 1)));
    }
    for (std::size_t i = 0; i < n_points; ++i) {
        const std::size_t e = rng.below(e3);
        l3.assignment.push_back(e);
        l2.assignment.push_back(parent2[e]);
        l1.assignment.push_back(parent1[parent2[e]]);
    }
    toy.levels = {std::move(l1), std::move(l2), std::move(l3)};
    return toy;
}

} // namespace lime
