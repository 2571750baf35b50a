// Copyright 2026 The lime-peft Authors
// SPDX-License-Identifier: Apache-2.0

#include "lime/json_writer.hpp"

#include <cmath>
#include <cstdio>

namespace lime {

std::string format_real(double v) {
    if (std::isnan(v)) {
        return "nan";
    }
    if (std::isinf(v)) {
        return v > 0 ? "inf" : "-inf";
    }
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

namespace {

void emit(const nlohmann::json& v, int indent, int depth, std::string& out) {
    const auto newline = [&](int d) {
        if (indent >= 0) {
            out += '\n';
            out.append(static_cast<std::size_t>(indent * d), ' ');
        }
    };
    switch (v.type()) {
    case nlohmann::json::value_t::object: {
        if (v.empty()) {
            out += "{}";
            return;
        }
        out += '{';
        bool first = true;
        for (auto it = v.begin(); it != v.end(); ++it) {
            if (!first) {
                out += ',';
            }
            first = false;
            newline(depth + 1);
            out += nlohmann::json(it.key()).dump();
            out += indent >= 0 ? ": " : ":";
            emit(it.value(), indent, depth + 1, out);
        }
        newline(depth);
        out += '}';
        return;
    }
    case nlohmann::json::value_t::array: {
        if (v.empty()) {
            out += "[]";
            return;
        }
        out += '[';
        bool first = true;
        for (const auto& item : v) {
            if (!first) {
                out += indent >= 0 ? ", " : ",";
            }
            first = false;
            emit(item, indent, depth + 1, out);
        }
        out += ']';
        return;
    }
    case nlohmann::json::value_t::number_float: {
        const double d = v.get<double>();
        // JSON has no inf/nan literals.
        out += std::isfinite(d) ? format_real(d) : "null";
        return;
    }
    default:
        out += v.dump();
        return;
    }
}

} // namespace

std::string dump_json(const nlohmann::json& value, int indent) {
    std::string out;
    emit(value, indent, 0, out);
    return out;
}

} // namespace lime
