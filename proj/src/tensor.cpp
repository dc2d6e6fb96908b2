#include "dml/tensor.hpp"

#include <cmath>
#include <numbers>

namespace dml {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

// splitmix64; used only to derive fork seeds.
std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

} // namespace

DenseArray::DenseArray(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_product(shape_), 0.0) {
    if (shape_.empty()) throw ShapeError("DenseArray: empty shape");
}

DenseArray::DenseArray(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
    if (shape_.empty()) throw ShapeError("DenseArray: empty shape");
    if (shape_product(shape_) != data_.size()) {
        throw ShapeError("DenseArray: shape product does not match value count");
    }
    if (!all_finite()) throw NonFiniteValue("DenseArray: non-finite value on construction");
}

DenseArray DenseArray::from_vector(std::vector<double> values) {
    std::size_t n = values.size();
    return DenseArray({n}, std::move(values));
}

std::size_t DenseArray::rows() const {
    if (rank() != 2) throw ShapeError("DenseArray::rows: not a matrix");
    return shape_[0];
}

std::size_t DenseArray::cols() const {
    if (rank() != 2) throw ShapeError("DenseArray::cols: not a matrix");
    return shape_[1];
}

bool DenseArray::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void DenseArray::fill(double v) {
    for (double& x : data_) x = v;
}

double SeededRng::normal(double mean, double stddev) {
    // u1 in (0,1] so the log is finite.
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t SeededRng::below(std::size_t n) {
    if (n == 0) throw OutOfRange("SeededRng::below: n must be positive");
    // Rejection sampling over the largest multiple of n that fits in 64 bits.
    std::uint64_t bound = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
        x = next_u64();
    } while (x >= bound);
    return static_cast<std::size_t>(x % n);
}

SeededRng SeededRng::fork(std::uint64_t stream) const {
    return SeededRng(mix64(seed_ ^ mix64(stream)));
}

DenseArray finite_diff_grad(const std::function<double(const DenseArray&)>& f,
                            const DenseArray& point, double step) {
    if (!(step > 0.0)) throw InvalidConfig("finite_diff_grad: step must be positive");
    DenseArray grad = DenseArray::zeros_like(point);
    DenseArray probe = point;
    for (std::size_t i = 0; i < point.size(); ++i) {
        double x0 = point[i];
        probe[i] = x0 + step;
        double hi = f(probe);
        probe[i] = x0 - step;
        double lo = f(probe);
        probe[i] = x0;
        if (!std::isfinite(hi) || !std::isfinite(lo)) {
            throw NonFiniteValue("finite_diff_grad: non-finite function evaluation");
        }
        grad[i] = (hi - lo) / (2.0 * step);
    }
    return grad;
}

} // namespace dml
