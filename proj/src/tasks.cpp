// Copyright 2026 The lime-peft Authors
// SPDX-License-Identifier: Apache-2.0

#include "lime/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "lime/errors.hpp"
#include "lime/json_writer.hpp"
#include "lime/losses.hpp"

namespace lime {

TaskKind parse_task_kind(const std::string& name) {
    if (name == "regression") return TaskKind::regression;
    if (name == "classification") return TaskKind::classification;
    throw ConfigError("unknown task kind '" + name + "'");
}

std::string task_kind_name(TaskKind kind) {
    return kind == TaskKind::regression ? "regression" : "classification";
}

MixtureDataset MixtureDataset::subset(const std::vector<std::size_t>& rows) const {
    MixtureDataset out;
    out.n_tasks = n_tasks;
    out.kind = kind;
    out.x = Matrix(rows.size(), x.cols());
    out.y = Matrix(rows.size(), y.cols());
    out.task_ids.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const std::size_t r = rows[i];
        if (r >= size()) {
            throw std::out_of_range("dataset subset: row " + std::to_string(r) + " out of range");
        }
        std::copy(x.row(r).begin(), x.row(r).end(), out.x.row(i).begin());
        std::copy(y.row(r).begin(), y.row(r).end(), out.y.row(i).begin());
        out.task_ids.push_back(task_ids[r]);
    }
    return out;
}

MixtureDataset MixtureDataset::task_subset(std::size_t task) const {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < task_ids.size(); ++i) {
        if (task_ids[i] == task) {
            rows.push_back(i);
        }
    }
    return subset(rows);
}

void MixtureDataset::validate() const {
    if (x.rows() != y.rows() || task_ids.size() != x.rows()) {
        throw ShapeError("dataset: x, y and task ids disagree on the sample count");
    }
    for (std::size_t t : task_ids) {
        if (t >= n_tasks) {
            throw FormatError("dataset: task id " + std::to_string(t) + " >= n_tasks " +
                              std::to_string(n_tasks));
        }
    }
    if (kind == TaskKind::classification && y.cols() != 1) {
        throw ShapeError("dataset: classification targets must be a single class column");
    }
}

void MixtureSpec::validate() const {
    if (n_tasks < 1) {
        throw ConfigError("mixture needs at least one task");
    }
    if (samples_per_task < 1) {
        throw ConfigError("mixture needs samples_per_task >= 1");
    }
    if (d_in < 1 || d_out < 1) {
        throw ConfigError("mixture dimensions must be >= 1");
    }
    if (n_tasks > std::min(d_in, d_out)) {
        throw ConfigError("mixture: n_tasks must not exceed min(d_in, d_out)");
    }
    if (rank < 1 || rank > std::min(d_in, d_out)) {
        throw ConfigError("mixture: rank must be in [1, min(d_in, d_out)]");
    }
    if (!(noise >= 0.0) || !(input_std >= 0.0) || !(separation >= 0.0)) {
        throw ConfigError("mixture: noise, input_std and separation must be >= 0");
    }
    if (!proportions.empty() && proportions.size() != n_tasks) {
        throw ConfigError("mixture: need one proportion per task");
    }
    if (!q.empty()) {
        if (q.size() != n_tasks) {
            throw ConfigError("mixture: need one modulation vector per task");
        }
        for (const auto& v : q) {
            if (v.size() != d_out) {
                throw ConfigError("mixture: modulation vectors must have length d_out");
            }
        }
    }
}

std::vector<std::size_t> allocate_counts(std::size_t total, const std::vector<double>& proportions) {
    if (proportions.empty()) {
        throw ConfigError("allocate_counts: no proportions");
    }
    double sum = 0.0;
    for (double p : proportions) {
        if (!(p >= 0.0)) {
            throw ConfigError("allocate_counts: proportions must be >= 0");
        }
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw ConfigError("allocate_counts: proportions sum to " + format_real(sum) + ", not 1");
    }
    std::vector<std::size_t> counts(proportions.size());
    std::vector<double> remainder(proportions.size());
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < proportions.size(); ++i) {
        const double exact = proportions[i] * static_cast<double>(total);
        counts[i] = static_cast<std::size_t>(std::floor(exact));
        remainder[i] = exact - static_cast<double>(counts[i]);
        assigned += counts[i];
    }
    std::vector<std::size_t> order(proportions.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
    for (std::size_t i = 0; assigned < total; ++i) {
        ++counts[order[i % order.size()]];
        ++assigned;
    }
    return counts;
}

GeneratedMixture gen_modulated_mixture(const MixtureSpec& spec, Rng& rng) {
    spec.validate();
    GeneratedMixture out;
    GroundTruth& truth = out.truth;
    truth.base = make_base_layer(spec.d_in, spec.d_out, spec.base_seed);
    truth.shared.a = random_normal(spec.rank, spec.d_in, 1.0 / std::sqrt(static_cast<double>(spec.d_in)), rng);
    truth.shared.b = random_normal(spec.d_out, spec.rank, 1.0 / std::sqrt(static_cast<double>(spec.rank)), rng);
    truth.shared.alpha = static_cast<double>(spec.rank);
    if (spec.q.empty()) {
        for (std::size_t t = 0; t < spec.n_tasks; ++t) {
            Vector q(spec.d_out);
            for (double& v : q) {
                v = rng.uniform(0.5, 1.5);
            }
            truth.q.push_back(std::move(q));
        }
    } else {
        truth.q = spec.q;
    }

    // μ_t = sep · Rᵀ (R Rᵀ)⁻¹ e_t with R the leading n_tasks rows of W0, so the
    // leading coordinates of W0·μ_t equal sep·e_t.
    Matrix r(spec.n_tasks, spec.d_in);
    for (std::size_t t = 0; t < spec.n_tasks; ++t) {
        std::copy(truth.base.weight.row(t).begin(), truth.base.weight.row(t).end(), r.row(t).begin());
    }
    const Matrix coeff = solve(matmul_nt(r, r), scaled(Matrix::identity(spec.n_tasks), spec.separation));
    truth.means = matmul_tn(coeff, r);

    std::vector<double> props = spec.proportions;
    if (props.empty()) {
        props.assign(spec.n_tasks, 1.0 / static_cast<double>(spec.n_tasks));
    }
    const std::size_t total = spec.n_tasks * spec.samples_per_task;
    const auto counts = allocate_counts(total, props);

    MixtureDataset& data = out.data;
    data.n_tasks = spec.n_tasks;
    data.kind = spec.kind;
    Matrix x(total, spec.d_in);
    std::vector<std::size_t> ids;
    ids.reserve(total);
    std::size_t row = 0;
    for (std::size_t t = 0; t < spec.n_tasks; ++t) {
        for (std::size_t n = 0; n < counts[t]; ++n, ++row) {
            for (std::size_t k = 0; k < spec.d_in; ++k) {
                x(row, k) = truth.means(t, k) + spec.input_std * rng.normal();
            }
            ids.push_back(t);
        }
    }
    const auto perm = permutation(total, rng);
    Matrix xs(total, spec.d_in);
    data.task_ids.resize(total);
    for (std::size_t i = 0; i < total; ++i) {
        std::copy(x.row(perm[i]).begin(), x.row(perm[i]).end(), xs.row(i).begin());
        data.task_ids[i] = ids[perm[i]];
    }
    data.x = std::move(xs);

    const Matrix z = frozen_forward(truth.base, data.x);
    const Matrix g = peft_forward(truth.shared, data.x);
    Matrix y(total, spec.d_out);
    for (std::size_t i = 0; i < total; ++i) {
        const auto& q = truth.q[data.task_ids[i]];
        for (std::size_t k = 0; k < spec.d_out; ++k) {
            y(i, k) = z(i, k) + g(i, k) * q[k];
            if (spec.noise > 0.0) {
                y(i, k) += spec.noise * rng.normal();
            }
        }
    }
    if (spec.kind == TaskKind::classification) {
        data.y = Matrix(total, 1);
        for (std::size_t i = 0; i < total; ++i) {
            data.y(i, 0) = static_cast<double>(argmax(y.row(i)));
        }
    } else {
        data.y = std::move(y);
    }
    data.validate();
    return out;
}

GeneratedMixture gen_imbalanced_mixture(MixtureSpec spec, Rng& rng) {
    if (spec.proportions.empty()) {
        spec.n_tasks = 4;
        spec.proportions = {0.70, 0.20, 0.05, 0.05};
    }
    return gen_modulated_mixture(spec, rng);
}

void write_dataset_csv(std::ostream& out, const MixtureDataset& data) {
    data.validate();
    out << "task_id";
    for (std::size_t k = 0; k < data.x.cols(); ++k) {
        out << ",x_" << k;
    }
    for (std::size_t k = 0; k < data.y.cols(); ++k) {
        out << ",y_" << k;
    }
    out << '\n';
    for (std::size_t i = 0; i < data.size(); ++i) {
        out << data.task_ids[i];
        for (double v : data.x.row(i)) {
            out << ',' << format_real(v);
        }
        for (double v : data.y.row(i)) {
            out << ',' << format_real(v);
        }
        out << '\n';
    }
}

MixtureDataset read_dataset_csv(std::istream& in, TaskKind kind) {
    std::string line;
    if (!std::getline(in, line)) {
        throw FormatError("dataset csv: missing header");
    }
    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            header.push_back(cell);
        }
    }
    if (header.empty() || header[0] != "task_id") {
        throw FormatError("dataset csv: first column must be task_id");
    }
    std::size_t dx = 0;
    std::size_t dy = 0;
    for (std::size_t c = 1; c < header.size(); ++c) {
        if (header[c] == "x_" + std::to_string(dx) && dy == 0) {
            ++dx;
        } else if (header[c] == "y_" + std::to_string(dy)) {
            ++dy;
        } else {
            throw FormatError("dataset csv: unexpected column '" + header[c] + "'");
        }
    }
    if (dx == 0 || dy == 0) {
        throw FormatError("dataset csv: need at least one x_ and one y_ column");
    }
    std::vector<double> xv;
    std::vector<double> yv;
    MixtureDataset data;
    data.kind = kind;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        std::stringstream ss(line);
        std::string cell;
        std::size_t c = 0;
        try {
            while (std::getline(ss, cell, ',')) {
                if (c == 0) {
                    data.task_ids.push_back(std::stoul(cell));
                } else if (c <= dx) {
                    xv.push_back(std::stod(cell));
                } else if (c <= dx + dy) {
                    yv.push_back(std::stod(cell));
                }
                ++c;
            }
        } catch (const std::logic_error&) {
            throw FormatError("dataset csv: malformed number on line " + std::to_string(line_no));
        }
        if (c != 1 + dx + dy) {
            throw FormatError("dataset csv: line " + std::to_string(line_no) + " has " +
                              std::to_string(c) + " cells, expected " + std::to_string(1 + dx + dy));
        }
    }
    const std::size_t n = data.task_ids.size();
    if (n == 0) {
        throw FormatError("dataset csv: no samples");
    }
    data.x = Matrix(n, dx, std::move(xv));
    data.y = Matrix(n, dy, std::move(yv));
    if (!all_finite(data.x.values()) || !all_finite(data.y.values())) {
        throw FormatError("dataset csv: non-finite value");
    }
    data.n_tasks = *std::max_element(data.task_ids.begin(), data.task_ids.end()) + 1;
    data.validate();
    return data;
}

void save_dataset_csv(const std::string& path, const MixtureDataset& data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write dataset '" + path + "'");
    }
    write_dataset_csv(out, data);
}

MixtureDataset load_dataset_csv(const std::string& path, TaskKind kind) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot read dataset '" + path + "'");
    }
    return read_dataset_csv(in, kind);
}

namespace {

TaskMetrics score_rows(const Matrix& pred, const MixtureDataset& data,
                       const std::vector<std::size_t>& rows, std::size_t task) {
    TaskMetrics m;
    m.task = task;
    m.n = rows.size();
    if (rows.empty()) {
        return m;
    }
    if (data.kind == TaskKind::regression) {
        double total = 0.0;
        for (std::size_t r : rows) {
            for (std::size_t k = 0; k < pred.cols(); ++k) {
                const double d = pred(r, k) - data.y(r, k);
                total += d * d;
            }
        }
        m.loss = total / static_cast<double>(rows.size() * pred.cols());
        return m;
    }
    double nll = 0.0;
    std::size_t correct = 0;
    for (std::size_t r : rows) {
        const auto row = pred.row(r);
        const auto c = static_cast<std::size_t>(data.y(r, 0));
        const Vector p = softmax(row, 1.0);
        nll -= std::log(p[c]);
        correct += argmax(row) == c ? 1 : 0;
    }
    m.loss = nll / static_cast<double>(rows.size());
    m.accuracy = static_cast<double>(correct) / static_cast<double>(rows.size());
    return m;
}

} // namespace

EvalReport score_predictions(const Matrix& pred, const MixtureDataset& data) {
    data.validate();
    if (pred.rows() != data.size()) {
        throw ShapeError("score_predictions: " + std::to_string(pred.rows()) +
                         " predictions for " + std::to_string(data.size()) + " samples");
    }
    if (data.kind == TaskKind::regression && pred.cols() != data.y.cols()) {
        throw ShapeError("score_predictions: prediction width differs from target width");
    }
    if (data.kind == TaskKind::classification) {
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double c = data.y(i, 0);
            if (c < 0.0 || c != std::floor(c) || c >= static_cast<double>(pred.cols())) {
                throw std::invalid_argument("score_predictions: class index out of range");
            }
        }
    }
    EvalReport report;
    std::vector<std::vector<std::size_t>> rows(data.n_tasks);
    std::vector<std::size_t> all(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        rows[data.task_ids[i]].push_back(i);
        all[i] = i;
    }
    for (std::size_t t = 0; t < data.n_tasks; ++t) {
        report.per_task.push_back(score_rows(pred, data, rows[t], t));
    }
    report.overall = score_rows(pred, data, all, data.n_tasks);
    return report;
}

EvalReport evaluate(const Model& model, const MixtureDataset& data) {
    const auto out = model_forward(model, SequenceBatch::tokens(data.x), nullptr, false);
    return score_predictions(out.h, data);
}

} // namespace lime
