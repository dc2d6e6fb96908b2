#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "dml/errors.hpp"

namespace dml {

/// Dense row-major array of doubles. Rank 1, 2 and 4 cover everything the
/// library needs (vectors, matrices, conv kernels / feature maps).
class DenseArray {
public:
    DenseArray() = default;

    /// Zero-filled array of the given shape.
    explicit DenseArray(std::vector<std::size_t> shape);

    /// Takes ownership of `values`; rejects shape/size mismatch and non-finite entries.
    DenseArray(std::vector<std::size_t> shape, std::vector<double> values);

    static DenseArray from_vector(std::vector<double> values);
    static DenseArray zeros_like(const DenseArray& other) { return DenseArray(other.shape_); }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    /// Rank-2 helpers.
    std::size_t rows() const;
    std::size_t cols() const;

    double operator[](std::size_t i) const { return data_[i]; }
    double& operator[](std::size_t i) { return data_[i]; }

    double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
    double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }

    double at3(std::size_t a, std::size_t b, std::size_t c) const {
        return data_[(a * shape_[1] + b) * shape_[2] + c];
    }
    double& at3(std::size_t a, std::size_t b, std::size_t c) {
        return data_[(a * shape_[1] + b) * shape_[2] + c];
    }

    double at4(std::size_t a, std::size_t b, std::size_t c, std::size_t d) const {
        return data_[((a * shape_[1] + b) * shape_[2] + c) * shape_[3] + d];
    }
    double& at4(std::size_t a, std::size_t b, std::size_t c, std::size_t d) {
        return data_[((a * shape_[1] + b) * shape_[2] + c) * shape_[3] + d];
    }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    const std::vector<double>& values() const { return data_; }

    bool all_finite() const;
    bool same_shape(const DenseArray& other) const { return shape_ == other.shape_; }

    void fill(double v);

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

/// Deterministic random source. The raw stream is std::mt19937_64, whose
/// output sequence is pinned by the C++ standard, and every distribution on
/// top of it is hand-rolled here, so equal seeds give bit-identical draws on
/// any platform.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed) : engine_(seed), seed_(seed) {}

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Box-Muller; consumes exactly two raw draws per call.
    double normal(double mean = 0.0, double stddev = 1.0);

    /// Unbiased integer in [0, n); n must be > 0.
    std::size_t below(std::size_t n);

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[below(i)]);
        }
    }

    /// Independent stream derived from the original seed and a stream tag,
    /// unaffected by draws already made on this generator.
    SeededRng fork(std::uint64_t stream) const;

private:
    std::mt19937_64 engine_;
    std::uint64_t seed_;
};

/// Central finite differences: grad_i = (f(x + h e_i) - f(x - h e_i)) / 2h.
/// The oracle every analytic gradient in this library is checked against.
/// Throws NonFiniteValue if f evaluates to NaN/Inf anywhere it is probed.
DenseArray finite_diff_grad(const std::function<double(const DenseArray&)>& f,
                            const DenseArray& point, double step = 1e-5);

} // namespace dml
