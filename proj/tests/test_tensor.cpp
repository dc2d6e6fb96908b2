#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "dml/tensor.hpp"

using namespace dml;

TEST_CASE("dense array shape and construction") {
    DenseArray a({2, 3});
    CHECK(a.size() == 6);
    CHECK(a.rows() == 2);
    CHECK(a.cols() == 3);
    a.at(1, 2) = 5.0;
    CHECK(a[5] == 5.0);

    CHECK_THROWS_AS(DenseArray({2, 2}, {1.0, 2.0, 3.0}), ShapeError);
    CHECK_THROWS_AS(DenseArray({2}, {1.0, std::nan("")}), NonFiniteValue);
    CHECK_THROWS_AS(DenseArray({1}, {std::numeric_limits<double>::infinity()}), NonFiniteValue);
}

TEST_CASE("rng determinism: equal seeds, equal streams") {
    SeededRng a(1234), b(1234);
    for (int i = 0; i < 1000000; ++i) {
        REQUIRE(a.next_u64() == b.next_u64());
    }
}

TEST_CASE("rng distribution ranges") {
    SeededRng rng(7);
    for (int i = 0; i < 10000; ++i) {
        double u = rng.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        std::size_t k = rng.below(13);
        CHECK(k < 13);
    }
    // Normal draws should be finite and roughly centered.
    double sum = 0.0;
    for (int i = 0; i < 20000; ++i) sum += rng.normal();
    CHECK(std::abs(sum / 20000.0) < 0.05);
}

TEST_CASE("rng fork is independent of draws already made") {
    SeededRng a(42);
    SeededRng b(42);
    (void)a.next_u64();
    (void)a.next_u64();
    SeededRng fa = a.fork(3);
    SeededRng fb = b.fork(3);
    for (int i = 0; i < 100; ++i) CHECK(fa.next_u64() == fb.next_u64());
    SeededRng other = b.fork(4);
    CHECK(other.next_u64() != a.fork(3).next_u64());
}

TEST_CASE("finite differences on x^2 give 2x") {
    auto f = [](const DenseArray& x) { return x[0] * x[0]; };
    DenseArray point = DenseArray::from_vector({3.0});
    DenseArray grad = finite_diff_grad(f, point, 1e-5);
    CHECK(grad[0] == doctest::Approx(6.0).epsilon(1e-6));
}

TEST_CASE("finite differences of a constant vanish") {
    auto f = [](const DenseArray&) { return 4.25; };
    DenseArray grad = finite_diff_grad(f, DenseArray::from_vector({1.0, -2.0, 0.5}));
    for (std::size_t i = 0; i < grad.size(); ++i) CHECK(grad[i] == 0.0);
}

TEST_CASE("finite differences reject non-finite evaluations") {
    auto f = [](const DenseArray& x) { return std::log(x[0]); };
    CHECK_THROWS_AS(finite_diff_grad(f, DenseArray::from_vector({0.0})), NonFiniteValue);
    auto g = [](const DenseArray& x) { return x[0]; };
    CHECK_THROWS_AS(finite_diff_grad(g, DenseArray::from_vector({1.0}), 0.0), InvalidConfig);
}

TEST_CASE("finite differences match (A + A') x on quadratic forms") {
    SeededRng rng(99);
    const std::size_t n = 5;
    for (int trial = 0; trial < 20; ++trial) {
        DenseArray a_mat({n, n});
        for (std::size_t i = 0; i < a_mat.size(); ++i) a_mat[i] = rng.uniform(-1.0, 1.0);
        DenseArray x({n});
        for (std::size_t i = 0; i < n; ++i) x[i] = rng.uniform(-2.0, 2.0);

        auto quad = [&](const DenseArray& v) {
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < n; ++j) s += v[i] * a_mat.at(i, j) * v[j];
            }
            return s;
        };
        DenseArray fd = finite_diff_grad(quad, x, 1e-5);
        for (std::size_t i = 0; i < n; ++i) {
            double exact = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                exact += (a_mat.at(i, j) + a_mat.at(j, i)) * x[j];
            }
            CHECK(fd[i] == doctest::Approx(exact).epsilon(1e-7));
        }
    }
}
