/*  Copyright 2026 the slimux authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.  */

#pragma once

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace slimux {

/// One Dobson Unit expressed as a vertical column density.
inline constexpr double kMoleculesPerDobsonUnit = 2.69e16;

namespace detail {
inline void append_all(std::ostringstream&) {}
template <typename T, typename... Rest>
void append_all(std::ostringstream& oss, T&& head, Rest&&... rest) {
    oss << std::forward<T>(head);
    append_all(oss, std::forward<Rest>(rest)...);
}
}  // namespace detail

/// Builds an error/message string from heterogeneous parts.
template <typename... Args>
std::string msg(Args&&... args) {
    std::ostringstream oss;
    detail::append_all(oss, std::forward<Args>(args)...);
    return oss.str();
}

// ---------------------------------------------------------------------------
// Deterministic, portable random numbers.
//
// mt19937_64 has a standard-specified output sequence; the Gaussian transform
// is done by hand (Box-Muller) because std::normal_distribution is
// implementation-defined and would break seed reproducibility across stdlibs.
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// Stream-independent seed for item `index` of a run seeded with `base`.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
    return splitmix64(base ^ splitmix64(index + 0x51A7C0DE5EEDull));
}

class GaussianSampler {
public:
    explicit GaussianSampler(std::uint64_t seed) : engine_(seed) {}

    /// Uniform in (0, 1]; 53-bit mantissa taken straight from the engine.
    double uniform_open0() {
        return (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
    }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Standard normal deviate via Box-Muller.
    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform_open0();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double t = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(t);
        has_spare_ = true;
        return r * std::cos(t);
    }

    std::uint64_t raw() { return engine_(); }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// ---------------------------------------------------------------------------
// Number formatting / parsing. Shortest round-trip representation so text
// files reload bit-exact.
// ---------------------------------------------------------------------------

inline std::string format_double(double v) {
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

/// Parses a full token as a double; returns false on trailing garbage.
inline bool parse_double(std::string_view token, double& out) {
    const char* first = token.data();
    const char* last = token.data() + token.size();
    const auto res = std::from_chars(first, last, out);
    return res.ec == std::errc{} && res.ptr == last;
}

// ---------------------------------------------------------------------------
// Flat little-endian float64 arrays (the raw array format used by scene and
// map files).
// ---------------------------------------------------------------------------

namespace detail {
inline std::uint64_t byteswap64(std::uint64_t v) {
    return ((v & 0x00000000000000FFull) << 56) | ((v & 0x000000000000FF00ull) << 40) |
           ((v & 0x0000000000FF0000ull) << 24) | ((v & 0x00000000FF000000ull) << 8) |
           ((v & 0x000000FF00000000ull) >> 8) | ((v & 0x0000FF0000000000ull) >> 24) |
           ((v & 0x00FF000000000000ull) >> 40) | ((v & 0xFF00000000000000ull) >> 56);
}
}  // namespace detail

inline void write_f64(const std::string& path, const double* data, std::size_t n) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(msg("cannot open '", path, "' for writing"));
    if constexpr (std::endian::native == std::endian::little) {
        out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * 8));
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            std::uint64_t bits;
            std::memcpy(&bits, &data[i], 8);
            bits = detail::byteswap64(bits);
            out.write(reinterpret_cast<const char*>(&bits), 8);
        }
    }
    if (!out) throw std::runtime_error(msg("write failed for '", path, "'"));
}

inline void write_f64(const std::string& path, const std::vector<double>& data) {
    write_f64(path, data.data(), data.size());
}

inline std::vector<double> read_f64(const std::string& path, std::size_t expected,
                                    const std::string& field) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw std::runtime_error(msg("missing array for field '", field, "': cannot open '", path, "'"));
    const auto bytes = static_cast<std::size_t>(in.tellg());
    if (bytes != expected * 8) {
        throw std::runtime_error(msg("array '", field, "' in '", path, "' has ", bytes / 8,
                                     " float64 values, expected ", expected));
    }
    std::vector<double> data(expected);
    in.seekg(0);
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(bytes));
    if (!in) throw std::runtime_error(msg("read failed for '", path, "'"));
    if constexpr (std::endian::native == std::endian::big) {
        for (auto& v : data) {
            std::uint64_t bits;
            std::memcpy(&bits, &v, 8);
            bits = detail::byteswap64(bits);
            std::memcpy(&v, &bits, 8);
        }
    }
    return data;
}

// ---------------------------------------------------------------------------
// Small file helpers.
// ---------------------------------------------------------------------------

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(msg("cannot open '", path, "'"));
    std::ostringstream oss;
    oss << in.rdbuf();
    return oss.str();
}

inline std::uint64_t fnv1a64(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 1469598103934665603ull;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string fnv1a64_hex(const std::string& bytes) {
    const std::uint64_t h = fnv1a64(bytes.data(), bytes.size());
    char buf[19];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string("fnv1a64:") + buf;
}

inline std::string hash_of_file(const std::string& path) { return fnv1a64_hex(read_text_file(path)); }

/// Directory part of a path ("" when the path has no directory component).
inline std::string dir_of(const std::string& path) {
    const auto pos = path.find_last_of("/\\");
    return pos == std::string::npos ? std::string() : path.substr(0, pos);
}

inline std::string join_path(const std::string& dir, const std::string& rel) {
    if (dir.empty() || (!rel.empty() && (rel.front() == '/' || rel.front() == '\\'))) return rel;
    return dir + "/" + rel;
}

}  // namespace slimux
