#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "tadiff/diffusion.hpp"
#include "tadiff/losses.hpp"
#include "tadiff/rng.hpp"

using namespace tadiff;

namespace {
const ScheduleTable& table() {
    static const ScheduleTable t = build_schedule({});
    return t;
}
}  // namespace

TEST_CASE("dice_loss basics") {
    TensorT<double> a({8, 8}), b({8, 8});

    SUBCASE("identical nonempty masks") {
        for (int i = 0; i < 10; ++i) a[i] = b[i] = 1.0;
        CHECK(dice_loss(a, b) == doctest::Approx(0.0));
    }
    SUBCASE("disjoint nonempty masks") {
        for (int i = 0; i < 10; ++i) a[i] = 1.0;
        for (int i = 10; i < 20; ++i) b[i] = 1.0;
        CHECK(dice_loss(a, b) == doctest::Approx(1.0));
    }
    SUBCASE("half coverage gives 1/3") {
        // gt has 2N foreground, pred matches N of them and nothing else.
        for (int i = 0; i < 20; ++i) b[i] = 1.0;
        for (int i = 0; i < 10; ++i) a[i] = 1.0;
        CHECK(dice_loss(a, b) == doctest::Approx(1.0 / 3.0));
    }
    SUBCASE("both empty is perfect") { CHECK(dice_loss(a, b) == 0.0); }
    SUBCASE("empty prediction against nonempty truth") {
        for (int i = 0; i < 5; ++i) b[i] = 1.0;
        CHECK(dice_loss(a, b) == doctest::Approx(1.0));
    }
    SUBCASE("bounded and symmetric for binary inputs") {
        Rng rng(7);
        for (int trial = 0; trial < 20; ++trial) {
            TensorT<double> x({8, 8}), y({8, 8});
            for (std::size_t i = 0; i < x.numel(); ++i) {
                x[i] = rng.uniform() < 0.3 ? 1.0 : 0.0;
                y[i] = rng.uniform() < 0.3 ? 1.0 : 0.0;
            }
            const double d = dice_loss(x, y);
            CHECK(d >= 0.0);
            CHECK(d <= 1.0);
            CHECK(d == doctest::Approx(dice_loss(y, x)));
        }
    }
    SUBCASE("shape mismatch") {
        CHECK_THROWS_AS(dice_loss(a, TensorT<double>({4, 4})), std::invalid_argument);
    }
}

namespace {
TensorT<double> random_probs(Rng& rng, int h, int w, int sessions = 4) {
    TensorT<double> m({sessions, h, w});
    for (std::size_t i = 0; i < m.numel(); ++i) m[i] = rng.uniform();
    return m;
}
TensorT<double> random_binary(Rng& rng, int h, int w, double p, int sessions = 4) {
    TensorT<double> m({sessions, h, w});
    for (std::size_t i = 0; i < m.numel(); ++i) m[i] = rng.uniform() < p ? 1.0 : 0.0;
    return m;
}
}  // namespace

TEST_CASE("seg_loss weights the future session by sqrt(alpha_bar)") {
    Rng rng(11);
    TensorT<double> gt = random_binary(rng, 8, 8, 0.3);

    SUBCASE("perfect predictions cost nothing") {
        CHECK(seg_loss(gt, gt, 300, table()) == doctest::Approx(0.0));
    }

    SUBCASE("t = 1 future weight is sqrt(0.9999)") {
        // Source sessions perfect, future prediction empty and truth nonempty.
        TensorT<double> pred = gt;
        const std::size_t per = 64;
        bool any = false;
        for (std::size_t i = 0; i < per; ++i) {
            if (gt[3 * per + i] != 0.0) any = true;
            pred[3 * per + i] = 0.0;
        }
        REQUIRE(any);
        CHECK(seg_loss(pred, gt, 1, table()) == doctest::Approx(std::sqrt(0.9999)));
    }

    SUBCASE("t = T future term nearly vanishes") {
        TensorT<double> pred = gt;
        const std::size_t per = 64;
        for (std::size_t i = 0; i < per; ++i) pred[3 * per + i] = 0.0;
        long double prod = 1.0L;
        for (int i = 0; i < 600; ++i)
            prod *= 1.0L - (1e-4L + (0.02L - 1e-4L) * i / 599.0L);
        const double want = std::sqrt(static_cast<double>(prod));
        CHECK(seg_loss(pred, gt, 600, table()) == doctest::Approx(want).epsilon(1e-9));
        CHECK(seg_loss(pred, gt, 600, table()) < 0.05);
    }
}

TEST_CASE("weight_map matches the published plateau values") {
    LossConfig cfg;

    SUBCASE("all-zero masks give a flat map of ones") {
        TensorT<double> gt({4, 32, 32});
        TensorT<double> omega = weight_map(gt, cfg);
        for (std::size_t i = 0; i < omega.numel(); ++i) CHECK(omega[i] == doctest::Approx(1.0));
    }

    SUBCASE("interior plateau at overlap 1 is 5.451") {
        TensorT<double> gt({4, 32, 32});
        // Session 0 covers everything: m_hat = 1 across the grid.
        for (std::size_t i = 0; i < 32 * 32; ++i) gt[i] = 1.0;
        TensorT<double> omega = weight_map(gt, cfg);
        CHECK(omega[16 * 32 + 16] == doctest::Approx(5.451).epsilon(2e-4));
    }

    SUBCASE("interior plateau at overlap 4 is 1.886") {
        TensorT<double> gt = TensorT<double>::full({4, 32, 32}, 1.0);
        TensorT<double> omega = weight_map(gt, cfg);
        CHECK(omega[16 * 32 + 16] == doctest::Approx(1.886).epsilon(3e-4));
    }

    SUBCASE("a single marked pixel lifts its 11x11 support by 0.1/e") {
        TensorT<double> gt({4, 32, 32});
        gt[16 * 32 + 16] = 1.0;  // session 0, center
        TensorT<double> omega = weight_map(gt, cfg);
        const double inside = 1.0 + 0.1 * std::exp(-1.0);
        CHECK(omega[16 * 32 + 16] == doctest::Approx(inside).epsilon(1e-12));
        CHECK(omega[(16 + 5) * 32 + 16] == doctest::Approx(inside).epsilon(1e-12));
        CHECK(omega[(16 + 6) * 32 + 16] == doctest::Approx(1.0).epsilon(1e-12));
    }

    SUBCASE("the map never dips below 1") {
        Rng rng(13);
        TensorT<double> gt = random_binary(rng, 24, 24, 0.4);
        TensorT<double> omega = weight_map(gt, cfg);
        for (std::size_t i = 0; i < omega.numel(); ++i) CHECK(omega[i] >= 1.0);
    }
}

TEST_CASE("joint_loss composition") {
    LossConfig cfg;
    Rng rng(17);
    const int h = 16, w = 16;
    TensorT<double> eps = normal_tensor<double>({3, h, w}, rng);
    TensorT<double> gt = random_binary(rng, h, w, 0.25);
    TensorT<double> pred = random_probs(rng, h, w);

    SUBCASE("perfect everything is zero") {
        const auto parts = joint_loss(eps, eps, gt, gt, 100, table(), cfg);
        CHECK(parts.total == 0.0);
        CHECK(parts.weighted_mse == 0.0);
        CHECK(parts.seg == 0.0);
    }

    SUBCASE("flat weights and lambda 0 reduce to the plain objective (per element)") {
        LossConfig flat;
        flat.lambda = 0.0;
        TensorT<double> empty({4, h, w});  // omega = 1 everywhere
        TensorT<double> eps_hat = normal_tensor<double>({3, h, w}, rng);
        const auto parts = joint_loss(eps, eps_hat, pred, empty, 100, table(), flat);
        CHECK(parts.total ==
              doctest::Approx(simple_mse_objective(eps, eps_hat) /
                              static_cast<double>(eps.numel()))
                  .epsilon(1e-12));
    }

    SUBCASE("matches a componentwise oracle") {
        TensorT<double> eps_hat = normal_tensor<double>({3, h, w}, rng);
        const auto parts = joint_loss(eps, eps_hat, pred, gt, 42, table(), cfg);
        const TensorT<double> omega = weight_map(gt, cfg);
        long double wmse = 0.0L;
        for (int c = 0; c < 3; ++c)
            for (int i = 0; i < h * w; ++i) {
                const long double d = omega[i] * (eps[c * h * w + i] - eps_hat[c * h * w + i]);
                wmse += d * d;
            }
        wmse /= static_cast<long double>(eps.numel());
        const double seg = seg_loss(pred, gt, 42, table());
        CHECK(parts.weighted_mse == doctest::Approx(static_cast<double>(wmse)).epsilon(1e-9));
        CHECK(parts.seg == doctest::Approx(seg).epsilon(1e-12));
        CHECK(parts.total ==
              doctest::Approx(static_cast<double>(wmse) + 0.01 * seg).epsilon(1e-9));
    }

    SUBCASE("monotone in lambda when segmentation is imperfect") {
        TensorT<double> eps_hat = normal_tensor<double>({3, h, w}, rng);
        LossConfig lo = cfg, hi = cfg;
        lo.lambda = 0.01;
        hi.lambda = 0.5;
        const auto a = joint_loss(eps, eps_hat, pred, gt, 42, table(), lo);
        const auto b = joint_loss(eps, eps_hat, pred, gt, 42, table(), hi);
        REQUIRE(a.seg > 0.0);
        CHECK(b.total > a.total);
    }
}

TEST_CASE("joint_loss gradients match finite differences") {
    LossConfig cfg;
    Rng rng(23);
    const int h = 12, w = 12;
    TensorT<double> eps = normal_tensor<double>({2, h, w}, rng);
    TensorT<double> eps_hat = normal_tensor<double>({2, h, w}, rng);
    TensorT<double> gt = random_binary(rng, h, w, 0.3);
    TensorT<double> pred = random_probs(rng, h, w);
    // Keep probabilities interior so the finite difference stays in range.
    for (std::size_t i = 0; i < pred.numel(); ++i) pred[i] = 0.2 + 0.6 * pred[i];

    TensorT<double> d_eps_hat, d_pred;
    joint_loss_backward(eps, eps_hat, pred, gt, 42, table(), cfg, d_eps_hat, d_pred);

    const TensorT<double> omega = weight_map(gt, cfg);
    const double step = 1e-6;
    const double inv_n = 1.0 / static_cast<double>(eps.numel());
    Rng pick(29);
    for (int k = 0; k < 50; ++k) {
        const int idx = pick.uniform_int(0, static_cast<int>(eps_hat.numel()) - 1);
        // Analytic form: -2 omega^2 (eps - eps_hat) / N.
        const double w2 = omega[idx % (h * w)] * omega[idx % (h * w)];
        CHECK(d_eps_hat[idx] ==
              doctest::Approx(-2.0 * inv_n * w2 * (eps[idx] - eps_hat[idx])).epsilon(1e-9));

        TensorT<double> plus = eps_hat, minus = eps_hat;
        plus[idx] += step;
        minus[idx] -= step;
        const double fd = (joint_loss(eps, plus, pred, gt, 42, table(), cfg).total -
                           joint_loss(eps, minus, pred, gt, 42, table(), cfg).total) /
                          (2.0 * step);
        CHECK(d_eps_hat[idx] == doctest::Approx(fd).epsilon(1e-4));
    }
    for (int k = 0; k < 50; ++k) {
        const int idx = pick.uniform_int(0, static_cast<int>(pred.numel()) - 1);
        TensorT<double> plus = pred, minus = pred;
        plus[idx] += step;
        minus[idx] -= step;
        // The mask gradient only flows through the segmentation component;
        // differencing it alone keeps the oracle clear of the much larger
        // weighted-MSE term's rounding noise.
        const double fd = cfg.lambda *
                          (seg_loss(plus, gt, 42, table()) - seg_loss(minus, gt, 42, table())) /
                          (2.0 * step);
        CHECK(d_pred[idx] == doctest::Approx(fd).epsilon(1e-4).scale(1e-9));
    }
}
