// Copyright 2026 The lime-peft Authors
// SPDX-License-Identifier: Apache-2.0

#include "lime/probes.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "lime/errors.hpp"

namespace lime {

ToyLabel parse_toy_label(const std::string& name) {
    if (name == "parity") return ToyLabel::parity;
    if (name == "first_token") return ToyLabel::first_token;
    throw ConfigError("unknown toy label '" + name + "'");
}

namespace {

double label_of(std::span<const double> tokens, ToyLabel label) {
    if (label == ToyLabel::first_token) {
        return tokens[0] > 0.0 ? 1.0 : 0.0;
    }
    double prod = 1.0;
    for (double t : tokens) {
        prod *= t;
    }
    return prod > 0.0 ? 1.0 : 0.0;
}

double sigmoid(double v) {
    return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
}

} // namespace

Matrix prefix_mean_states(std::span<const double> tokens) {
    const std::size_t n = tokens.size();
    Matrix h(n, n);
    for (std::size_t t = 0; t < n; ++t) {
        const double inv = 1.0 / static_cast<double>(t + 1);
        for (std::size_t s = 0; s <= t; ++s) {
            h(t, s) = tokens[s] * inv;
        }
    }
    return h;
}

Vector multilinear_lift(std::span<const double> h) {
    const std::size_t n = h.size();
    if (n >= 20) {
        throw std::invalid_argument("multilinear_lift: too many coordinates");
    }
    Vector out;
    out.reserve((std::size_t{1} << n) - 1);
    for (std::size_t mask = 1; mask < (std::size_t{1} << n); ++mask) {
        double prod = 1.0;
        for (std::size_t k = 0; k < n; ++k) {
            if (mask & (std::size_t{1} << k)) {
                prod *= h[k];
            }
        }
        out.push_back(prod);
    }
    return out;
}

Vector bayes_accuracy(std::size_t n, ToyLabel label) {
    if (n == 0) {
        throw std::invalid_argument("bayes_accuracy: empty window");
    }
    Vector acc(n);
    const std::size_t windows = std::size_t{1} << n;
    Vector tokens(n);
    for (std::size_t t = 0; t < n; ++t) {
        // h_t reveals exactly the first t+1 tokens; count labels per prefix.
        std::map<std::size_t, std::pair<std::size_t, std::size_t>> by_prefix;
        for (std::size_t w = 0; w < windows; ++w) {
            for (std::size_t s = 0; s < n; ++s) {
                tokens[s] = (w >> s) & 1U ? 1.0 : -1.0;
            }
            const std::size_t prefix = w & ((std::size_t{1} << (t + 1)) - 1);
            auto& c = by_prefix[prefix];
            (label_of(tokens, label) > 0.5 ? c.second : c.first) += 1;
        }
        std::size_t correct = 0;
        for (const auto& [prefix, c] : by_prefix) {
            correct += std::max(c.first, c.second);
        }
        acc[t] = static_cast<double>(correct) / static_cast<double>(windows);
    }
    return acc;
}

double LogisticProbe::predict_logit(std::span<const double> features) const {
    double z = bias;
    for (std::size_t k = 0; k < weights.size(); ++k) {
        if (scale[k] > 0.0) {
            z += weights[k] * (features[k] - mean[k]) / scale[k];
        }
    }
    return z;
}

LogisticProbe train_probe(const Matrix& features, std::span<const double> labels,
                          const ProbeConfig& cfg) {
    const std::size_t n = features.rows();
    const std::size_t f = features.cols();
    if (n == 0 || labels.size() != n) {
        throw ShapeError("train_probe: need one label per feature row");
    }
    bool any0 = false;
    bool any1 = false;
    for (double y : labels) {
        any0 = any0 || y < 0.5;
        any1 = any1 || y >= 0.5;
    }
    if (!any0 || !any1) {
        throw std::invalid_argument("train_probe: degenerate labels (only one class present)");
    }
    LogisticProbe p;
    p.weights.assign(f, 0.0);
    p.mean.assign(f, 0.0);
    p.scale.assign(f, 0.0);
    for (std::size_t k = 0; k < f; ++k) {
        for (std::size_t i = 0; i < n; ++i) {
            p.mean[k] += features(i, k);
        }
        p.mean[k] /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = features(i, k) - p.mean[k];
            var += d * d;
        }
        var /= static_cast<double>(n);
        p.scale[k] = var > 1e-24 ? std::sqrt(var) : 0.0;
    }
    Matrix xs(n, f);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < f; ++k) {
            xs(i, k) = p.scale[k] > 0.0 ? (features(i, k) - p.mean[k]) / p.scale[k] : 0.0;
        }
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    Vector gw(f);
    for (std::size_t step = 0; step < cfg.steps; ++step) {
        std::fill(gw.begin(), gw.end(), 0.0);
        double gb = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double z = p.bias;
            for (std::size_t k = 0; k < f; ++k) {
                z += p.weights[k] * xs(i, k);
            }
            const double r = sigmoid(z) - labels[i];
            for (std::size_t k = 0; k < f; ++k) {
                gw[k] += r * xs(i, k);
            }
            gb += r;
        }
        for (std::size_t k = 0; k < f; ++k) {
            p.weights[k] -= cfg.lr * (gw[k] * inv_n + cfg.lambda * p.weights[k]);
        }
        p.bias -= cfg.lr * gb * inv_n;
    }
    return p;
}

double probe_accuracy(const LogisticProbe& probe, const Matrix& features,
                      std::span<const double> labels) {
    if (features.rows() != labels.size() || features.rows() == 0) {
        throw ShapeError("probe_accuracy: need one label per feature row");
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < features.rows(); ++i) {
        const double pred = probe.predict_logit(features.row(i)) > 0.0 ? 1.0 : 0.0;
        correct += pred == labels[i] ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(features.rows());
}

WindowProbeReport check_window_probe(const WindowProbeSpec& spec, Rng& rng) {
    if (spec.n == 0 || spec.n > 10) {
        throw ConfigError("window probe toy window must have 1..10 tokens");
    }
    if (spec.train_samples == 0 || spec.test_samples == 0) {
        throw ConfigError("window probe toy needs train and test samples");
    }
    const std::size_t n = spec.n;
    const std::size_t lifted = (std::size_t{1} << n) - 1;
    const auto draw = [&](std::size_t count, std::vector<Matrix>& feats, Vector& labels) {
        feats.assign(n, Matrix(count, lifted));
        labels.resize(count);
        Vector tokens(n);
        for (std::size_t i = 0; i < count; ++i) {
            for (double& t : tokens) {
                t = rng.below(2) == 0 ? -1.0 : 1.0;
            }
            labels[i] = label_of(tokens, spec.label);
            const Matrix h = prefix_mean_states(tokens);
            for (std::size_t t = 0; t < n; ++t) {
                const Vector lift = multilinear_lift(h.row(t));
                std::copy(lift.begin(), lift.end(), feats[t].row(i).begin());
            }
        }
    };
    std::vector<Matrix> train_x;
    std::vector<Matrix> test_x;
    Vector train_y;
    Vector test_y;
    draw(spec.train_samples, train_x, train_y);
    draw(spec.test_samples, test_x, test_y);

    WindowProbeReport report;
    for (std::size_t t = 0; t < n; ++t) {
        const LogisticProbe probe = train_probe(train_x[t], train_y, spec.probe);
        report.accuracy.push_back(probe_accuracy(probe, test_x[t], test_y));
    }
    report.bayes_accuracy = bayes_accuracy(n, spec.label);
    report.ordered = report.accuracy.back() >= report.accuracy.front() - spec.slack;
    return report;
}

} // namespace lime
