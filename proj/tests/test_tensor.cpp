#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "paint/tensor.hpp"

using namespace paint;

TEST_CASE("matmul against hand-computed products") {
    const Tensor a = Tensor::from_rows({{1, 2}, {3, 4}});
    const Tensor eye = Tensor::from_rows({{1, 0}, {0, 1}});
    const Tensor ai = kernels::matmul(a, eye);
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) CHECK(ai.at(r, c) == a.at(r, c));

    const Tensor b = Tensor::from_rows({{5, 6}, {7, 8}});
    const Tensor ab = kernels::matmul(a, b);
    CHECK(ab.at(0, 0) == 19);
    CHECK(ab.at(0, 1) == 22);
    CHECK(ab.at(1, 0) == 43);
    CHECK(ab.at(1, 1) == 50);

    CHECK_THROWS_AS(kernels::matmul(a, Tensor(3, 2)), std::invalid_argument);
}

TEST_CASE("matmul_nt equals matmul with a transposed right operand") {
    const Tensor a = Tensor::from_rows({{1, 2, 3}, {4, 5, 6}});
    const Tensor b = Tensor::from_rows({{7, 8, 9}, {1, 0, 2}});
    const Tensor bt = Tensor::from_rows({{7, 1}, {8, 0}, {9, 2}});
    const Tensor left = kernels::matmul_nt(a, b);
    const Tensor right = kernels::matmul(a, bt);
    REQUIRE(left.same_shape(right));
    for (std::size_t i = 0; i < left.data.size(); ++i) CHECK(left.data[i] == right.data[i]);
}

TEST_CASE("add and mul broadcast single scalars only") {
    const Tensor a = Tensor::from_rows({{1, 2}, {3, 4}});
    const Tensor s = Tensor::scalar(10);
    const Tensor sum = kernels::add(a, s);
    CHECK(sum.at(1, 1) == 14);
    const Tensor prod = kernels::mul(s, a);
    CHECK(prod.at(0, 1) == 20);
    CHECK_THROWS_AS(kernels::add(a, Tensor(1, 2)), std::invalid_argument);
}

TEST_CASE("softmax rows") {
    const Tensor z = Tensor::row({0, 0});
    const Tensor p = kernels::softmax_rows(z);
    CHECK(p.at(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(p.at(0, 1) == doctest::Approx(0.5).epsilon(1e-12));

    // invariant under a constant shift, rows sum to 1
    const Tensor z2 = Tensor::from_rows({{1, 2, 3}, {1001, 1002, 1003}});
    const Tensor p2 = kernels::softmax_rows(z2);
    for (int c = 0; c < 3; ++c) CHECK(p2.at(0, c) == doctest::Approx(p2.at(1, c)).epsilon(1e-12));
    double sum = 0;
    for (int c = 0; c < 3; ++c) sum += p2.at(0, c);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("layer_norm normalizes each row to zero mean and unit variance") {
    const Tensor x = Tensor::row({1, 3});
    const Tensor gain(1, 2, 1.0);
    const Tensor bias(1, 2, 0.0);
    const Tensor y = kernels::layer_norm_rows(x, gain, bias, 1e-12);
    CHECK(y.at(0, 0) == doctest::Approx(-1.0).epsilon(1e-9));
    CHECK(y.at(0, 1) == doctest::Approx(1.0).epsilon(1e-9));

    const Tensor gain2 = Tensor::row({2, 2});
    const Tensor bias2 = Tensor::row({5, 5});
    const Tensor y2 = kernels::layer_norm_rows(x, gain2, bias2, 1e-12);
    CHECK(y2.at(0, 0) == doctest::Approx(3.0).epsilon(1e-9));
    CHECK(y2.at(0, 1) == doctest::Approx(7.0).epsilon(1e-9));
}

TEST_CASE("gelu at reference points") {
    const Tensor x = Tensor::row({0.0, 3.0, -3.0});
    const Tensor y = kernels::gelu(x);
    CHECK(y.at(0, 0) == 0.0);
    const double expected = 3.0 * 0.5 * (1.0 + std::erf(3.0 / std::sqrt(2.0)));
    CHECK(y.at(0, 1) == doctest::Approx(expected).epsilon(1e-15));
    CHECK(y.at(0, 2) == doctest::Approx(expected - 3.0).epsilon(1e-9));  // gelu(-x) = gelu(x) - x
}

TEST_CASE("log rejects non-positive input; clamp provides the floor") {
    CHECK(kernels::log_strict(Tensor::row({1.0})).at(0, 0) == 0.0);
    CHECK_THROWS_AS(kernels::log_strict(Tensor::row({0.0})), std::invalid_argument);
    CHECK_THROWS_AS(kernels::log_strict(Tensor::row({-2.0})), std::invalid_argument);
    const Tensor c = kernels::clamp_min(Tensor::row({-1.0, 0.5}), 1e-12);
    CHECK(c.at(0, 0) == 1e-12);
    CHECK(c.at(0, 1) == 0.5);
}

TEST_CASE("sum and mean along both axes") {
    const Tensor a = Tensor::from_rows({{1, 2, 3}, {4, 5, 6}});
    const Tensor s0 = kernels::sum_axis(a, 0);
    CHECK(s0.n_rows == 1);
    CHECK(s0.at(0, 0) == 5);
    CHECK(s0.at(0, 2) == 9);
    const Tensor s1 = kernels::sum_axis(a, 1);
    CHECK(s1.n_cols == 1);
    CHECK(s1.at(0, 0) == 6);
    CHECK(s1.at(1, 0) == 15);
    CHECK(kernels::mean_axis(a, 0).at(0, 1) == doctest::Approx(3.5));
    CHECK(kernels::mean_axis(a, 1).at(1, 0) == doctest::Approx(5.0));
    CHECK_THROWS_AS(kernels::sum_axis(a, 2), std::invalid_argument);
}

TEST_CASE("concat stacks rows; slice takes a row range") {
    const Tensor a = Tensor::from_rows({{1, 2}});
    const Tensor b = Tensor::from_rows({{3, 4}, {5, 6}});
    const Tensor ab = kernels::concat_rows({&a, &b});
    REQUIRE(ab.n_rows == 3);
    CHECK(ab.at(2, 1) == 6);
    const Tensor mid = kernels::slice_rows(ab, 1, 3);
    CHECK(mid.n_rows == 2);
    CHECK(mid.at(0, 0) == 3);
    CHECK_THROWS_AS(kernels::slice_rows(ab, 2, 5), std::invalid_argument);
    CHECK_THROWS_AS(kernels::slice_rows(ab, -1, 1), std::invalid_argument);
}

TEST_CASE("argmax_row breaks ties toward the lowest index") {
    const Tensor t = Tensor::from_rows({{0.1, 0.8, 0.1}, {0.5, 0.5, 0.0}});
    CHECK(argmax_row(t, 0) == 1);
    CHECK(argmax_row(t, 1) == 0);
    CHECK_THROWS_AS(argmax_row(t, 2), std::invalid_argument);
}

TEST_CASE("item and shape helpers") {
    CHECK(Tensor::scalar(4.5).item() == 4.5);
    CHECK_THROWS_AS(Tensor(2, 2).item(), std::invalid_argument);
    CHECK(Tensor(3, 4).shape_str() == "[3, 4]");
    Tensor t = Tensor::row({1.0, 2.0});
    CHECK(t.all_finite());
    t.data[0] = std::nan("");
    CHECK(!t.all_finite());
}
