// Copyright 2026 The lime-peft Authors
// SPDX-License-Identifier: Apache-2.0

// Exact mutual information on finite alphabets and the refinement check for
// hierarchical routers: if every level's output is a function of the next
// finer level's output, I(Y; Z_k) can only grow with k.

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "lime/tensor.hpp"

namespace lime {

/// Probability table with rows indexed by Y and columns by Z.
struct DiscreteJoint {
    Matrix p;

    /// Entries >= 0 summing to 1 within 1e-12; throws std::invalid_argument.
    void validate() const;
    static DiscreteJoint from_counts(const Matrix& counts);
};

/// Exact I(Y; Z) in nats, 0·log 0 = 0.
double mutual_information(const DiscreteJoint& joint);

/// I(Y; Z) from integer counts, where `columns[z][y]` counts (y, z). Columns
/// with proportional count vectors carry the same conditional distribution
/// and are pooled first; the sum then runs over the pooled classes in sorted
/// order. Equal information therefore gives bit-identical results.
double mutual_information_counts(const std::vector<std::vector<std::uint64_t>>& columns);

struct RouterLevel {
    std::vector<std::size_t> assignment; // expert of each support point
    std::vector<Matrix> maps;            // per-expert linear map applied to x
};

/// Finite toy: support points x (each ending in a constant 1), joint counts
/// with a label Y, and router levels ordered from coarsest to finest.
struct RefinementToy {
    std::vector<Vector> x;
    std::vector<std::vector<std::uint64_t>> counts; // counts[point][label]
    std::size_t n_labels = 0;
    std::vector<RouterLevel> levels;
};

/// Throws ConfigError unless: each finer level refines the coarser one; on
/// the support of each fine expert the coarse map factors through the fine
/// map (rank([F·X; C·X]) == rank(F·X)); and equal finer outputs imply equal
/// coarser outputs.
void validate_refinement(const RefinementToy& toy);

/// Z_k(x) = maps[assignment(x)] · x at level k.
std::vector<Vector> level_outputs(const RefinementToy& toy, std::size_t level);

struct RefinementReport {
    std::vector<double> mi; // I(Y; Z_k), coarsest first
    std::size_t violations = 0;
    bool monotone = false;
};

/// Validates the premise, then enumerates I(Y; Z_k) for every level and
/// counts strict decreases (zero tolerance).
RefinementReport check_refinement_chain(const RefinementToy& toy);

struct RefinementToySize {
    std::size_t max_points = 16;
    std::size_t max_labels = 4;
    std::size_t dim = 3;
};

/// Random three-level construction satisfying the premise: finest maps are
/// block-diagonal with a unimodular integer block and an expert tag, middle
/// maps keep a coordinate mask behind a unimodular mix, and the coarsest
/// level keeps a sub-mask of its children's masks.
RefinementToy make_refinement_toy(Rng& rng, const RefinementToySize& size = {});

/// Numerical rank by Gaussian elimination with partial pivoting.
std::size_t matrix_rank(const Matrix& m, double tol = 1e-9);

} // namespace lime
