#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "errors.hpp"
#include "tensor.hpp"

namespace starcomplete {

// TNS1 layout:
//   8 bytes   magic "TNS1\0\0\0\0"
//   1 byte    dtype (0 = real f64, 1 = complex f64 interleaved re,im)
//   3 x u64   extents n1, n2, n3 (little endian)
//   payload   f64 little endian, Tensor3 storage order

enum class TnsDtype : std::uint8_t { real = 0, complex = 1 };

namespace detail {

inline constexpr std::array<char, 8> kTnsMagic{'T', 'N', 'S', '1', '\0', '\0', '\0', '\0'};

template <typename T>
void put_le(std::ostream& out, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    std::array<char, sizeof(T)> bytes{};
    std::memcpy(bytes.data(), &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    out.write(bytes.data(), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
    std::array<char, sizeof(T)> bytes{};
    if (!in.read(bytes.data(), sizeof(T))) throw format_error("TNS1: truncated stream");
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    T v;
    std::memcpy(&v, bytes.data(), sizeof(T));
    return v;
}

} // namespace detail

inline void write_tns(std::ostream& out, const Tensor3& t, TnsDtype dtype) {
    out.write(detail::kTnsMagic.data(), detail::kTnsMagic.size());
    detail::put_le<std::uint8_t>(out, static_cast<std::uint8_t>(dtype));
    detail::put_le<std::uint64_t>(out, t.n1());
    detail::put_le<std::uint64_t>(out, t.n2());
    detail::put_le<std::uint64_t>(out, t.n3());
    for (const auto& z : t.data()) {
        detail::put_le<double>(out, z.real());
        if (dtype == TnsDtype::complex) detail::put_le<double>(out, z.imag());
    }
    if (!out) throw format_error("TNS1: write failed");
}

/// Writes real dtype when every imaginary part is zero, complex otherwise.
inline void write_tns(std::ostream& out, const Tensor3& t) {
    write_tns(out, t, t.is_real() ? TnsDtype::real : TnsDtype::complex);
}

inline Tensor3 read_tns(std::istream& in) {
    std::array<char, 8> magic{};
    if (!in.read(magic.data(), magic.size())) throw format_error("TNS1: truncated header");
    if (magic != detail::kTnsMagic) throw format_error("TNS1: bad magic");
    const auto dtype = detail::get_le<std::uint8_t>(in);
    if (dtype > 1) throw format_error("TNS1: unknown dtype " + std::to_string(dtype));
    const auto n1 = detail::get_le<std::uint64_t>(in);
    const auto n2 = detail::get_le<std::uint64_t>(in);
    const auto n3 = detail::get_le<std::uint64_t>(in);
    if (n1 == 0 || n2 == 0 || n3 == 0) throw format_error("TNS1: zero extent");
    if (n1 > (1ULL << 40) / n2 / n3) throw format_error("TNS1: extents too large");
    Tensor3 t(n1, n2, n3);
    for (auto& z : t.data()) {
        const double re = detail::get_le<double>(in);
        const double im = dtype == 1 ? detail::get_le<double>(in) : 0.0;
        z = cplx(re, im);
    }
    return t;
}

inline void save_tns(const std::string& path, const Tensor3& t) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw format_error("cannot open " + path + " for writing");
    write_tns(out, t);
}

inline Tensor3 load_tns(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw format_error("cannot open " + path);
    return read_tns(in);
}

} // namespace starcomplete
