// Copyright 2026 The lime-peft Authors
// SPDX-License-Identifier: Apache-2.0

#include "lime/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "lime/errors.hpp"

namespace lime {

namespace {

template <typename T>
void put_le(std::ostream& out, T value) {
    std::array<char, sizeof(T)> bytes{};
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
    }
    out.write(bytes.data(), bytes.size());
}

template <typename T>
T get_le(std::istream& in) {
    std::array<unsigned char, sizeof(T)> bytes{};
    in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
    if (!in) {
        throw FormatError("checkpoint: unexpected end of file");
    }
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        value |= static_cast<T>(bytes[i]) << (8 * i);
    }
    return value;
}

// Guards against allocating absurd sizes from a corrupt header.
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 32;

} // namespace

void write_checkpoint(std::ostream& out, const std::vector<NamedTensor>& tensors) {
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    put_le<std::uint32_t>(out, kCheckpointVersion);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& t : tensors) {
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
        out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
        put_le<std::uint64_t>(out, t.value.rows());
        put_le<std::uint64_t>(out, t.value.cols());
    }
    for (const auto& t : tensors) {
        for (double v : t.value.values()) {
            put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
        }
    }
    if (!out) {
        throw FormatError("checkpoint: write failed");
    }
}

std::vector<NamedTensor> read_checkpoint(std::istream& in) {
    char magic[sizeof(kCheckpointMagic)];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
        throw FormatError("checkpoint: bad magic");
    }
    const auto version = get_le<std::uint32_t>(in);
    if (version != kCheckpointVersion) {
        throw FormatError("checkpoint: unsupported version " + std::to_string(version));
    }
    const auto count = get_le<std::uint32_t>(in);
    struct Header {
        std::string name;
        std::uint64_t rows;
        std::uint64_t cols;
    };
    std::vector<Header> headers;
    headers.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto len = get_le<std::uint32_t>(in);
        if (len > 4096) {
            throw FormatError("checkpoint: tensor name too long");
        }
        std::string name(len, '\0');
        in.read(name.data(), len);
        if (!in) {
            throw FormatError("checkpoint: unexpected end of file in name table");
        }
        const auto rows = get_le<std::uint64_t>(in);
        const auto cols = get_le<std::uint64_t>(in);
        if (rows != 0 && cols > kMaxElements / rows) {
            throw FormatError("checkpoint: tensor '" + name + "' is too large");
        }
        headers.push_back({std::move(name), rows, cols});
    }
    std::vector<NamedTensor> tensors;
    tensors.reserve(count);
    for (const auto& h : headers) {
        Matrix m(h.rows, h.cols);
        for (double& v : m.values()) {
            v = std::bit_cast<double>(get_le<std::uint64_t>(in));
        }
        tensors.push_back({h.name, std::move(m)});
    }
    return tensors;
}

void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw FormatError("checkpoint: cannot open '" + path + "' for writing");
    }
    write_checkpoint(out, tensors);
}

std::vector<NamedTensor> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("checkpoint: cannot open '" + path + "'");
    }
    return read_checkpoint(in);
}

const Matrix& find_tensor(const std::vector<NamedTensor>& tensors, const std::string& name,
                          std::size_t expected_rows, std::size_t expected_cols) {
    for (const auto& t : tensors) {
        if (t.name == name) {
            if (t.value.rows() != expected_rows || t.value.cols() != expected_cols) {
                throw FormatError("checkpoint: tensor '" + name + "' has shape " +
                                  t.value.shape_string() + ", expected (" +
                                  std::to_string(expected_rows) + "x" +
                                  std::to_string(expected_cols) + ")");
            }
            return t.value;
        }
    }
    throw FormatError("checkpoint: missing tensor '" + name + "'");
}

} // namespace lime
