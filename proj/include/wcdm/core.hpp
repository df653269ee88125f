#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace wcdm {

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

/// Extents of a rank-4 tensor in (batch, channel, height, width) order.
struct Shape {
    int b = 0, c = 0, h = 0, w = 0;

    std::int64_t numel() const {
        return std::int64_t(b) * c * h * w;
    }
    bool operator==(const Shape& o) const = default;

    std::string str() const {
        std::ostringstream os;
        os << "(" << b << "," << c << "," << h << "," << w << ")";
        return os.str();
    }
};

/// Dense rank-4 tensor over scalar S, contiguous in (b,c,h,w) row-major order.
template <class S>
struct TensorT {
    using Array = Eigen::Array<S, Eigen::Dynamic, 1>;

    Shape shape;
    Array data;

    TensorT() = default;
    explicit TensorT(Shape s) : shape(s), data(Array::Zero(s.numel())) {
        require(s.b >= 0 && s.c >= 0 && s.h >= 0 && s.w >= 0, "negative extent " + s.str());
    }

    static TensorT zeros(Shape s) { return TensorT(s); }

    static TensorT full(Shape s, S v) {
        TensorT t(s);
        t.data.setConstant(v);
        return t;
    }

    static TensorT scalar(S v) { return full({1, 1, 1, 1}, v); }

    static TensorT from(Shape s, std::vector<S> values) {
        require(std::int64_t(values.size()) == s.numel(), "value count does not match shape " + s.str());
        TensorT t(s);
        for (std::int64_t i = 0; i < t.numel(); ++i) t.data[i] = values[std::size_t(i)];
        return t;
    }

    std::int64_t numel() const { return shape.numel(); }

    std::int64_t index(int b, int c, int h, int w) const {
        return ((std::int64_t(b) * shape.c + c) * shape.h + h) * shape.w + w;
    }
    S& at(int b, int c, int h, int w) { return data[index(b, c, h, w)]; }
    S at(int b, int c, int h, int w) const { return data[index(b, c, h, w)]; }

    bool all_finite() const { return data.allFinite(); }

    bool is_scalar() const { return shape == Shape{1, 1, 1, 1}; }
    S item() const {
        require(is_scalar(), "item() on non-scalar tensor " + shape.str());
        return data[0];
    }

    template <class T>
    TensorT<T> cast() const {
        TensorT<T> out;
        out.shape = shape;
        out.data = data.template cast<T>();
        return out;
    }
};

using Tensor = TensorT<float>;
using Tensord = TensorT<double>;

/// NaN/Inf anywhere in an op result is a hard error.
template <class S>
inline void ensure_finite(const TensorT<S>& t, const char* op) {
    if (!t.all_finite()) throw std::runtime_error(std::string(op) + ": non-finite value in result");
}

template <class S>
inline void require_same_shape(const TensorT<S>& a, const TensorT<S>& b, const char* op) {
    require(a.shape == b.shape, std::string(op) + ": shape mismatch " + a.shape.str() + " vs " + b.shape.str());
}

}  // namespace wcdm
