#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "tadiff/diffusion.hpp"
#include "tadiff/rng.hpp"
#include "tadiff/schedule.hpp"

using namespace tadiff;

namespace {
const ScheduleTable& table() {
    static const ScheduleTable t = build_schedule({});
    return t;
}
}  // namespace

TEST_CASE("forward_sample limiting cases") {
    Rng rng(7);
    TensorT<double> x0 = normal_tensor<double>({2, 4, 4}, rng);
    TensorT<double> zero({2, 4, 4});

    SUBCASE("zero noise scales the signal") {
        TensorT<double> out = forward_sample(x0, 300, zero, table());
        const double c = std::sqrt(table().alpha_bar(300));
        for (std::size_t i = 0; i < out.numel(); ++i)
            CHECK(out[i] == doctest::Approx(c * x0[i]).epsilon(1e-15));
    }

    SUBCASE("zero signal scales the noise") {
        TensorT<double> eps = normal_tensor<double>({2, 4, 4}, rng);
        TensorT<double> out = forward_sample(zero, 300, eps, table());
        const double c = std::sqrt(1.0 - table().alpha_bar(300));
        for (std::size_t i = 0; i < out.numel(); ++i)
            CHECK(out[i] == doctest::Approx(c * eps[i]).epsilon(1e-15));
    }

    SUBCASE("t = 600 signal coefficient matches the product oracle") {
        long double prod = 1.0L;
        for (int i = 0; i < 600; ++i)
            prod *= 1.0L - (1e-4L + (0.02L - 1e-4L) * i / 599.0L);
        TensorT<double> out = forward_sample(x0, 600, zero, table());
        const double c = std::sqrt(static_cast<double>(prod));
        for (std::size_t i = 0; i < out.numel(); ++i)
            CHECK(out[i] == doctest::Approx(c * x0[i]).epsilon(1e-9));
    }

    SUBCASE("shape mismatch is rejected") {
        TensorT<double> wrong({1, 4, 4});
        CHECK_THROWS_AS(forward_sample(x0, 10, wrong, table()), std::invalid_argument);
    }
}

TEST_CASE("recover_x0 inverts forward_sample") {
    Rng rng(13);
    for (int t : {1, 2, 300, 600}) {
        TensorT<float> x0 = normal_tensor<float>({3, 8, 8}, rng);
        TensorT<float> eps = normal_tensor<float>({3, 8, 8}, rng);
        TensorT<float> x_t = forward_sample(x0, t, eps, table());
        TensorT<float> back = recover_x0(x_t, eps, t, table());
        for (std::size_t i = 0; i < back.numel(); ++i)
            CHECK(std::abs(back[i] - x0[i]) < 1e-5f);
    }
}

TEST_CASE("recover_x0 with zero noise divides by the signal coefficient") {
    Rng rng(5);
    TensorT<double> x_t = normal_tensor<double>({1, 4, 4}, rng);
    TensorT<double> zero({1, 4, 4});
    TensorT<double> out = recover_x0(x_t, zero, 150, table());
    const double inv = 1.0 / std::sqrt(table().alpha_bar(150));
    for (std::size_t i = 0; i < out.numel(); ++i)
        CHECK(out[i] == doctest::Approx(x_t[i] * inv).epsilon(1e-15));
}

TEST_CASE("posterior mean collapses onto x0 at t = 1") {
    Rng rng(11);
    TensorT<double> x0 = normal_tensor<double>({2, 4, 4}, rng);
    TensorT<double> x_t = normal_tensor<double>({2, 4, 4}, rng);
    TensorT<double> mean = posterior_mean_from_x0(x_t, x0, 1, table());
    for (std::size_t i = 0; i < mean.numel(); ++i)
        CHECK(mean[i] == doctest::Approx(x0[i]).epsilon(1e-12));

    TensorT<double> zero({2, 4, 4});
    TensorT<double> z = posterior_mean_from_x0(zero, zero, 123, table());
    for (std::size_t i = 0; i < z.numel(); ++i) CHECK(z[i] == 0.0);
}

TEST_CASE("the two posterior-mean routes agree") {
    Rng rng(17);
    for (int t : {1, 2, 50, 150, 300, 599, 600}) {
        TensorT<double> x0 = normal_tensor<double>({3, 6, 6}, rng);
        TensorT<double> eps = normal_tensor<double>({3, 6, 6}, rng);
        TensorT<double> x_t = forward_sample(x0, t, eps, table());
        TensorT<double> via_x0 = posterior_mean_from_x0(x_t, x0, t, table());
        TensorT<double> via_eps = posterior_mean_from_eps(x_t, eps, t, table());
        for (std::size_t i = 0; i < via_x0.numel(); ++i)
            CHECK(std::abs(via_x0[i] - via_eps[i]) < 1e-10);
    }
}

TEST_CASE("the two routes agree in single precision to 1e-5") {
    Rng rng(19);
    for (int t : {1, 2, 300, 600}) {
        TensorT<float> x0 = normal_tensor<float>({3, 6, 6}, rng);
        TensorT<float> eps = normal_tensor<float>({3, 6, 6}, rng);
        TensorT<float> x_t = forward_sample(x0, t, eps, table());
        TensorT<float> via_x0 = posterior_mean_from_x0(x_t, x0, t, table());
        TensorT<float> via_eps = posterior_mean_from_eps(x_t, eps, t, table());
        for (std::size_t i = 0; i < via_x0.numel(); ++i)
            CHECK(std::abs(via_x0[i] - via_eps[i]) < 1e-5f);
    }
}

TEST_CASE("posterior_mean_from_eps with zero estimate rescales x_t") {
    Rng rng(23);
    TensorT<double> x_t = normal_tensor<double>({1, 4, 4}, rng);
    TensorT<double> zero({1, 4, 4});
    TensorT<double> mean = posterior_mean_from_eps(x_t, zero, 77, table());
    const double inv = 1.0 / std::sqrt(table().alpha(77));
    for (std::size_t i = 0; i < mean.numel(); ++i)
        CHECK(mean[i] == doctest::Approx(x_t[i] * inv).epsilon(1e-15));
}

TEST_CASE("posterior_mean_from_eps at t = 1 with the true noise recovers x0") {
    Rng rng(29);
    TensorT<float> x0 = normal_tensor<float>({2, 4, 4}, rng);
    TensorT<float> eps = normal_tensor<float>({2, 4, 4}, rng);
    TensorT<float> x_1 = forward_sample(x0, 1, eps, table());
    TensorT<float> mean = posterior_mean_from_eps(x_1, eps, 1, table());
    for (std::size_t i = 0; i < mean.numel(); ++i)
        CHECK(std::abs(mean[i] - x0[i]) < 1e-5f);
}

TEST_CASE("simple_mse_objective") {
    TensorT<double> a = TensorT<double>::full({2, 3, 3}, 1.0);
    TensorT<double> b({2, 3, 3});
    CHECK(simple_mse_objective(a, a) == 0.0);
    CHECK(simple_mse_objective(a, b) == doctest::Approx(18.0));  // N elements

    Rng rng(31);
    TensorT<double> x = normal_tensor<double>({3, 5, 5}, rng);
    TensorT<double> y = normal_tensor<double>({3, 5, 5}, rng);
    long double oracle = 0.0L;
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const long double d = static_cast<long double>(x[i]) - y[i];
        oracle += d * d;
    }
    CHECK(simple_mse_objective(x, y) ==
          doctest::Approx(static_cast<double>(oracle)).epsilon(1e-9));
    CHECK_THROWS_AS(simple_mse_objective(x, TensorT<double>({3, 5, 4})), std::invalid_argument);
}

TEST_CASE("forward_sample is linear in signal and noise") {
    Rng rng(37);
    TensorT<double> x0a = normal_tensor<double>({1, 4, 4}, rng);
    TensorT<double> x0b = normal_tensor<double>({1, 4, 4}, rng);
    TensorT<double> eps = normal_tensor<double>({1, 4, 4}, rng);
    TensorT<double> sum({1, 4, 4});
    for (std::size_t i = 0; i < sum.numel(); ++i) sum[i] = x0a[i] + x0b[i];
    TensorT<double> zero({1, 4, 4});
    TensorT<double> lhs = forward_sample(sum, 100, eps, table());
    TensorT<double> ra = forward_sample(x0a, 100, eps, table());
    TensorT<double> rb = forward_sample(x0b, 100, zero, table());
    for (std::size_t i = 0; i < lhs.numel(); ++i)
        CHECK(lhs[i] == doctest::Approx(ra[i] + rb[i]).epsilon(1e-12));
}

TEST_CASE("forward marginal statistics match the schedule (Monte Carlo)") {
    // Smaller than the acceptance sweep; the full 1e5-draw version runs there.
    const int n = 20000;
    Rng rng(41);
    TensorT<double> x0({1, 2, 2});
    x0[0] = -1.5;
    x0[1] = 0.25;
    x0[2] = 0.5;
    x0[3] = 2.0;
    for (int t : {1, 300, 600}) {
        std::vector<double> sum(4, 0.0), sum2(4, 0.0);
        for (int k = 0; k < n; ++k) {
            TensorT<double> eps = normal_tensor<double>({1, 2, 2}, rng);
            TensorT<double> x_t = forward_sample(x0, t, eps, table());
            for (int i = 0; i < 4; ++i) {
                sum[i] += x_t[i];
                sum2[i] += x_t[i] * x_t[i];
            }
        }
        const double ab = table().alpha_bar(t);
        const double want_var = 1.0 - ab;
        const double se_mean = std::sqrt(want_var / n);
        const double se_var = want_var * std::sqrt(2.0 / (n - 1));
        for (int i = 0; i < 4; ++i) {
            const double mean = sum[i] / n;
            const double var = sum2[i] / n - mean * mean;
            CHECK(std::abs(mean - std::sqrt(ab) * x0[i]) < 4.0 * se_mean);
            CHECK(std::abs(var - want_var) < 4.0 * se_var);
        }
    }
}
