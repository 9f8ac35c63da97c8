#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <ostream>
#include <istream>
#include <stdexcept>
#include <string>
#include <type_traits>

#include "pfad/tensor.hpp"

namespace pfad {

// Binary tensor format, shared repo-wide:
//   magic "PFAD", version u8, dtype u8 (0 = f32, 1 = f64), rank u8,
//   dims as u32 little-endian, then raw little-endian data.
// Written on little-endian hosts only; bit-exact round-trip.

inline constexpr char kTensorMagic[4] = {'P', 'F', 'A', 'D'};
inline constexpr std::uint8_t kTensorFormatVersion = 1;

template <typename T>
constexpr std::uint8_t dtype_tag() {
    static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>,
                  "only f32/f64 tensors are serializable");
    return std::is_same_v<T, float> ? 0 : 1;
}

template <typename T>
void write_tensor(std::ostream& os, const Tensor<T>& t) {
    os.write(kTensorMagic, 4);
    const std::uint8_t ver = kTensorFormatVersion, dt = dtype_tag<T>(),
                       rank = static_cast<std::uint8_t>(t.rank());
    os.write(reinterpret_cast<const char*>(&ver), 1);
    os.write(reinterpret_cast<const char*>(&dt), 1);
    os.write(reinterpret_cast<const char*>(&rank), 1);
    for (int i = 0; i < t.rank(); ++i) {
        const std::uint32_t d = static_cast<std::uint32_t>(t.dim(i));
        os.write(reinterpret_cast<const char*>(&d), 4);
    }
    os.write(reinterpret_cast<const char*>(t.data().data()),
             static_cast<std::streamsize>(t.numel() * sizeof(T)));
    if (!os) throw std::runtime_error("tensor write failed");
}

template <typename T>
Tensor<T> read_tensor(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kTensorMagic, 4) != 0)
        throw std::runtime_error("bad tensor magic");
    std::uint8_t ver = 0, dt = 0, rank = 0;
    is.read(reinterpret_cast<char*>(&ver), 1);
    is.read(reinterpret_cast<char*>(&dt), 1);
    is.read(reinterpret_cast<char*>(&rank), 1);
    if (!is || ver != kTensorFormatVersion)
        throw std::runtime_error("unsupported tensor format version");
    if (dt != dtype_tag<T>()) throw std::runtime_error("tensor dtype mismatch");
    Shape shape(rank);
    for (int i = 0; i < rank; ++i) {
        std::uint32_t d = 0;
        is.read(reinterpret_cast<char*>(&d), 4);
        shape[static_cast<size_t>(i)] = static_cast<int>(d);
    }
    if (!is) throw std::runtime_error("truncated tensor header");
    std::vector<T> data(static_cast<size_t>(shape_numel(shape)));
    is.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(T)));
    if (!is) throw std::runtime_error("truncated tensor data");
    return Tensor<T>(std::move(shape), std::move(data));
}

template <typename T>
void save_tensor(const std::string& path, const Tensor<T>& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for write: " + path);
    write_tensor(os, t);
}

template <typename T>
Tensor<T> load_tensor(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open for read: " + path);
    return read_tensor<T>(is);
}

}  // namespace pfad
