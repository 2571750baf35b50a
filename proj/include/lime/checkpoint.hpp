// Copyright 2026 The lime-peft Authors
// SPDX-License-Identifier: Apache-2.0

// Binary checkpoint: a flat list of named f64 tensors.
//
// Layout (all integers and floats little-endian):
//   magic     8 bytes  "LIMECKPT"
//   version   u32      kCheckpointVersion
//   count     u32      number of tensors
//   name table, per tensor:
//     name_len u32, name bytes (UTF-8), rows u64, cols u64
//   data, per tensor in name-table order:
//     rows*cols f64 values, row-major

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "lime/tensor.hpp"

namespace lime {

inline constexpr char kCheckpointMagic[8] = {'L', 'I', 'M', 'E', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
    std::string name;
    Matrix value;

    bool operator==(const NamedTensor&) const = default;
};

void write_checkpoint(std::ostream& out, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_checkpoint(std::istream& in);

void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_checkpoint(const std::string& path);

/// Looks up `name`; throws FormatError when missing or when the shape differs
/// from `expected_rows` x `expected_cols`.
const Matrix& find_tensor(const std::vector<NamedTensor>& tensors, const std::string& name,
                          std::size_t expected_rows, std::size_t expected_cols);

} // namespace lime
