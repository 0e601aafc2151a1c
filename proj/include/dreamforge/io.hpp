#pragma once

#include <openssl/evp.h>

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dreamforge/tensor.hpp"

namespace dreamforge {

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian and written via raw memory");

/// Append-only little-endian byte buffer used for all binary file formats.
struct ByteWriter {
    std::vector<std::uint8_t> bytes;

    void raw(const void* p, size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        bytes.insert(bytes.end(), b, b + n);
    }
    void u32(std::uint32_t v) { raw(&v, 4); }
    void u64(std::uint64_t v) { raw(&v, 8); }
    void f64(double v) { raw(&v, 8); }
    void f64s(const std::vector<double>& v) { raw(v.data(), v.size() * 8); }
    void magic(const char m[5]) { raw(m, 4); }

    void to_file(const std::filesystem::path& path) const {
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        if (!f) throw Error("cannot open for writing: " + path.string());
        f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!f) throw Error("write failed: " + path.string());
    }
};

struct ByteReader {
    std::vector<std::uint8_t> bytes;
    size_t pos = 0;

    static ByteReader from_file(const std::filesystem::path& path) {
        std::ifstream f(path, std::ios::binary);
        if (!f) throw Error("cannot open: " + path.string());
        ByteReader r;
        r.bytes.assign(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
        return r;
    }

    size_t remaining() const { return bytes.size() - pos; }

    void raw(void* p, size_t n) {
        if (remaining() < n) throw Error("truncated file: need " + std::to_string(n) + " bytes, have " +
                                         std::to_string(remaining()));
        std::memcpy(p, bytes.data() + pos, n);
        pos += n;
    }
    std::uint32_t u32() { std::uint32_t v; raw(&v, 4); return v; }
    std::uint64_t u64() { std::uint64_t v; raw(&v, 8); return v; }
    double f64() { double v; raw(&v, 8); return v; }
    std::vector<double> f64s(size_t n) {
        std::vector<double> v(n);
        raw(v.data(), n * 8);
        return v;
    }
    void expect_magic(const char m[5], const char* what) {
        char got[4];
        raw(got, 4);
        if (std::memcmp(got, m, 4) != 0) throw Error(std::string(what) + ": bad magic");
    }
};

using Digest = std::array<std::uint8_t, 32>;

inline Digest sha256(const void* data, size_t n) {
    Digest d{};
    unsigned int len = 0;
    if (EVP_Digest(data, n, d.data(), &len, EVP_sha256(), nullptr) != 1 || len != 32)
        throw Error("sha256 failed");
    return d;
}

inline Digest sha256(const std::vector<std::uint8_t>& v) { return sha256(v.data(), v.size()); }
inline Digest sha256(const std::string& s) { return sha256(s.data(), s.size()); }

inline std::string hex(const Digest& d) {
    static const char* k = "0123456789abcdef";
    std::string s;
    s.reserve(64);
    for (std::uint8_t b : d) {
        s += k[b >> 4];
        s += k[b & 15];
    }
    return s;
}

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open: " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot open for writing: " + path.string());
    f << text;
}

/// Writes a (C,H,W) image in [0,1] as 8-bit binary PGM (C=1) or PPM (C=3).
inline void write_pnm(const std::filesystem::path& path, const Tensor& image) {
    if (image.rank() != 3 || (image.dim(0) != 1 && image.dim(0) != 3))
        throw Error("write_pnm: need (1,H,W) or (3,H,W), got " + shape_str(image.shape));
    const int C = image.dim(0), H = image.dim(1), W = image.dim(2);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot open for writing: " + path.string());
    f << (C == 1 ? "P5" : "P6") << "\n" << W << " " << H << "\n255\n";
    std::vector<std::uint8_t> row(static_cast<size_t>(W) * C);
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x)
            for (int c = 0; c < C; ++c) {
                double v = image.data[(static_cast<size_t>(c) * H + y) * W + x];
                v = std::min(1.0, std::max(0.0, v));
                row[static_cast<size_t>(x) * C + c] = static_cast<std::uint8_t>(std::lround(v * 255.0));
            }
        f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!f) throw Error("write failed: " + path.string());
}

/// Reads an 8-bit binary PGM/PPM back into a (C,H,W) tensor in [0,1].
inline Tensor read_pnm(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open: " + path.string());
    std::string tag;
    f >> tag;
    if (tag != "P5" && tag != "P6") throw Error("read_pnm: unsupported format " + tag);
    const int C = tag == "P5" ? 1 : 3;
    int W, H, maxval;
    f >> W >> H >> maxval;
    if (!f || W <= 0 || H <= 0 || maxval != 255) throw Error("read_pnm: bad header in " + path.string());
    f.get();  // single whitespace after maxval
    std::vector<std::uint8_t> raw(static_cast<size_t>(W) * H * C);
    f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!f) throw Error("read_pnm: truncated pixel data in " + path.string());
    Tensor img({C, H, W});
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            for (int c = 0; c < C; ++c)
                img.data[(static_cast<size_t>(c) * H + y) * W + x] =
                    raw[(static_cast<size_t>(y) * W + x) * C + c] / 255.0;
    return img;
}

}  // namespace dreamforge
