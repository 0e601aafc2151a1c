#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace dreamforge {

/// Library-wide error type. Thrown for shape mismatches, malformed files,
/// numerical contract violations (NaN/Inf) and the like.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

using Shape = std::vector<int>;

inline std::string shape_str(const Shape& s) {
    std::string out = "(";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    out += ")";
    return out;
}

inline std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (int d : s) {
        if (d < 0) throw Error("tensor shape has negative dim " + shape_str(s));
        n *= d;
    }
    return n;
}

/// Dense n-dimensional array of doubles in row-major order. Immutable by
/// convention once handed to a compute graph; shared freely across threads.
struct Tensor {
    Shape shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(Shape s) : shape(std::move(s)), data(static_cast<size_t>(shape_numel(shape)), 0.0) {}
    Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        if (static_cast<std::int64_t>(data.size()) != shape_numel(shape))
            throw Error("tensor data length " + std::to_string(data.size()) +
                        " does not match shape " + shape_str(shape));
    }

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }

    double& operator[](std::int64_t i) { return data[static_cast<size_t>(i)]; }
    double operator[](std::int64_t i) const { return data[static_cast<size_t>(i)]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    void require_finite(const char* what) const {
        if (!all_finite()) throw Error(std::string(what) + ": tensor contains NaN/Inf");
    }

    static Tensor zeros(Shape s) { return Tensor(std::move(s)); }

    static Tensor full(Shape s, double v) {
        Tensor t(std::move(s));
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }
};

inline bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape == b.shape && a.data == b.data;
}

}  // namespace dreamforge
