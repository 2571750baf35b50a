// Copyright 2026 The lime-peft Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include <json.hpp>

namespace lime {

/// 17 significant digits, enough to round-trip any double.
std::string format_real(double v);

/// Serializes `value` like nlohmann::json::dump but prints every floating
/// point number with format_real. `indent < 0` gives a single line.
std::string dump_json(const nlohmann::json& value, int indent = -1);

} // namespace lime
