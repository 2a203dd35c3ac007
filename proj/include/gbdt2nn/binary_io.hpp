#pragma once

// Little-endian binary container primitives shared by the model and dataset
// file formats. Floats are written as their raw IEEE-754 bit patterns so a
// save/load cycle is bit-exact.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "gbdt2nn/errors.hpp"

namespace gbdt2nn::io {

class Writer {
public:
    explicit Writer(std::ostream& out) : out_(out) {}

    void u8(std::uint8_t v) { out_.put(static_cast<char>(v)); }
    void u32(std::uint32_t v) { raw(v); }
    void u64(std::uint64_t v) { raw(v); }
    void i64(std::int64_t v) { raw(v); }
    void f64(double v) { raw(std::bit_cast<std::uint64_t>(v)); }

    void str(std::string_view s) {
        u64(s.size());
        out_.write(s.data(), static_cast<std::streamsize>(s.size()));
    }

    void f64s(const std::vector<double>& v) {
        u64(v.size());
        for (double x : v) f64(x);
    }

    void magic(std::string_view tag, std::uint32_t version) {
        out_.write(tag.data(), static_cast<std::streamsize>(tag.size()));
        u32(version);
    }

private:
    template <typename T>
    void raw(T v) {
        unsigned char bytes[sizeof(T)];
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            bytes[i] = static_cast<unsigned char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFFu);
        }
        out_.write(reinterpret_cast<const char*>(bytes), sizeof(T));
    }

    std::ostream& out_;
};

class Reader {
public:
    explicit Reader(std::istream& in) : in_(in) {}

    std::uint8_t u8() {
        char c = 0;
        if (!in_.get(c)) throw DataError("truncated binary container");
        return static_cast<std::uint8_t>(c);
    }
    std::uint32_t u32() { return raw<std::uint32_t>(); }
    std::uint64_t u64() { return raw<std::uint64_t>(); }
    std::int64_t i64() { return static_cast<std::int64_t>(raw<std::uint64_t>()); }
    double f64() { return std::bit_cast<double>(raw<std::uint64_t>()); }

    std::string str() {
        const auto n = checked_size(u64());
        std::string s(n, '\0');
        read_bytes(s.data(), n);
        return s;
    }

    std::vector<double> f64s() {
        const auto n = checked_size(u64());
        std::vector<double> v(n);
        for (auto& x : v) x = f64();
        return v;
    }

    /// Checks the tag and returns the stored version; throws unless it is in [1, max_version].
    std::uint32_t magic(std::string_view tag, std::uint32_t max_version) {
        std::string got(tag.size(), '\0');
        read_bytes(got.data(), got.size());
        if (got != tag) throw DataError("bad container magic, expected '" + std::string(tag) + "'");
        const auto version = u32();
        if (version == 0 || version > max_version) {
            throw DataError("unsupported container version " + std::to_string(version));
        }
        return version;
    }

    std::size_t checked_size(std::uint64_t n) const {
        if (n > (std::uint64_t{1} << 34)) throw DataError("implausible length in binary container");
        return static_cast<std::size_t>(n);
    }

private:
    void read_bytes(char* dst, std::size_t n) {
        if (!in_.read(dst, static_cast<std::streamsize>(n))) throw DataError("truncated binary container");
    }

    template <typename T>
    T raw() {
        unsigned char bytes[sizeof(T)];
        read_bytes(reinterpret_cast<char*>(bytes), sizeof(T));
        std::uint64_t v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
        return static_cast<T>(v);
    }

    std::istream& in_;
};

}  // namespace gbdt2nn::io
