#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fedlmf/errors.hpp"
#include "fedlmf/meta.hpp"
#include "test_helpers.hpp"

using namespace fedlmf;
using namespace fedlmf::testing;

namespace {

/// Quadratic L = 0.5 theta^T A theta as a loss builder over one parameter.
LossFn quadratic(const NDArray& a) {
    return [a](Tape& t, const BoundParams& bp) -> Var {
        const Var th = bp.at("theta");
        return t.scale(t.sum_all(t.mul(th, t.matmul(th, t.constant(a)))), 0.5);
    };
}

/// Closed-form meta-gradient on the quadratic: (I - aA)^2 A theta.
std::vector<double> quadratic_meta_gradient(const NDArray& a, const std::vector<double>& theta,
                                            double alpha) {
    const std::size_t n = theta.size();
    NDArray i_minus = NDArray::identity(n);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c) i_minus.data[r * n + c] -= alpha * a.data[r * n + c];
    const NDArray m = matmul(matmul(i_minus, i_minus), a);
    std::vector<double> out(n, 0.0);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c) out[r] += m.data[r * n + c] * theta[c];
    return out;
}

ParameterSet one_param(const std::vector<double>& theta) {
    ParameterSet p;
    p.set("theta", NDArray::row(theta));
    return p;
}

NDArray random_symmetric(std::size_t n, Rng& rng) {
    NDArray a = NDArray::zeros({n, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j <= i; ++j) {
            const double v = rng.uniform(-1.0, 1.0) + (i == j ? 1.5 : 0.0);
            a.data[i * n + j] = a.data[j * n + i] = v;
        }
    return a;
}

}  // namespace

TEST_CASE("inner_step") {
    const ParameterSet p = one_param({1.0});
    ParameterSet g = zeros_like(p);

    SUBCASE("zero gradient is stationary") {
        const ParameterSet next = inner_step(p, g, 0.5);
        CHECK(next.at("theta").data[0] == 1.0);
    }

    SUBCASE("quadratic closed form: alpha 0.1 moves 1 to 0.9") {
        g.at("theta").data[0] = 1.0;  // grad of 0.5 theta^2 at 1
        const ParameterSet next = inner_step(p, g, 0.1);
        CHECK(next.at("theta").data[0] == doctest::Approx(0.9).epsilon(1e-15));
    }

    SUBCASE("step is linear in alpha") {
        g.at("theta").data[0] = 0.7;
        const double d1 = 1.0 - inner_step(p, g, 0.1).at("theta").data[0];
        const double d2 = 1.0 - inner_step(p, g, 0.2).at("theta").data[0];
        CHECK(d2 == doctest::Approx(2.0 * d1).epsilon(1e-12));
    }
}

TEST_CASE("meta_gradient") {
    SUBCASE("scalar quadratic: alpha 0.1 at theta 1 gives 0.81") {
        const NDArray a = NDArray::matrix(1, 1, {1.0});
        const LossFn fn = quadratic(a);
        const ParameterSet g = meta_gradient(fn, fn, one_param({1.0}), 0.1, false);
        CHECK(g.at("theta").data[0] == doctest::Approx(0.81).epsilon(1e-6));
    }

    SUBCASE("alpha 0 reduces to the plain gradient, bitwise") {
        const SmallNet net = SmallNet::make(5);
        const ParameterSet mg = meta_gradient(net.loss, net.loss, net.params, 0.0, false);
        const ParameterSet plain = loss_gradient(net.loss, net.params);
        CHECK(max_abs_diff(mg, plain) == 0.0);
        const ParameterSet fo = meta_gradient(net.loss, net.loss, net.params, 0.0, true);
        CHECK(max_abs_diff(fo, plain) == 0.0);
    }

    SUBCASE("first-order variant documents the approximation gap") {
        const NDArray a = NDArray::matrix(1, 1, {1.0});
        const LossFn fn = quadratic(a);
        const ParameterSet g = meta_gradient(fn, fn, one_param({1.0}), 0.1, true);
        CHECK(g.at("theta").data[0] == doctest::Approx(0.9).epsilon(1e-9));  // vs exact 0.81
    }

    SUBCASE("matches (I - aA)^2 A theta for random symmetric A (2x2 and 5x5)") {
        Rng rng(77);
        for (int trial = 0; trial < 10; ++trial) {
            const std::size_t n = trial % 2 == 0 ? 2 : 5;
            const NDArray a = random_symmetric(n, rng);
            std::vector<double> theta(n);
            for (double& v : theta) v = rng.uniform(-1.0, 1.0);
            const double alpha = rng.uniform(0.02, 0.2);
            const LossFn fn = quadratic(a);
            const ParameterSet got = meta_gradient(fn, fn, one_param(theta), alpha, false);
            const std::vector<double> want = quadratic_meta_gradient(a, theta, alpha);
            for (std::size_t i = 0; i < n; ++i) {
                const double denom = std::max(1.0, std::fabs(want[i]));
                CHECK(std::fabs(got.at("theta").data[i] - want[i]) / denom < 1e-4);
            }
        }
    }
}

TEST_CASE("meta_update") {
    SUBCASE("zero meta-gradient leaves parameters unchanged") {
        MetaConfig cfg;
        cfg.plain_sgd = true;
        ParameterSet p = one_param({1.0, -2.0});
        AdamState st = make_adam_state(p);
        meta_update(st, p, zeros_like(p), cfg, 0.5);
        CHECK(p.at("theta").data[0] == 1.0);
        CHECK(p.at("theta").data[1] == -2.0);
    }

    SUBCASE("plain-SGD mode on the scalar quadratic: 1 - 0.81 = 0.19") {
        MetaConfig cfg;
        cfg.plain_sgd = true;
        const NDArray a = NDArray::matrix(1, 1, {1.0});
        const LossFn fn = quadratic(a);
        ParameterSet p = one_param({1.0});
        AdamState st = make_adam_state(p);
        const ParameterSet mg = meta_gradient(fn, fn, p, 0.1, false);
        meta_update(st, p, mg, cfg, 1.0);
        CHECK(p.at("theta").data[0] == doctest::Approx(0.19).epsilon(1e-6));
    }

    SUBCASE("first Adam step has magnitude close to lr in every coordinate") {
        MetaConfig cfg;
        cfg.adam.weight_decay = 0.0;
        ParameterSet p = one_param({0.3, -0.4, 5.0});
        AdamState st = make_adam_state(p);
        ParameterSet g = zeros_like(p);
        g.at("theta").data = {17.0, -0.002, 1e-4};
        const ParameterSet before = p;
        meta_update(st, p, g, cfg, 0.01);
        for (std::size_t i = 0; i < 3; ++i) {
            const double step = before.at("theta").data[i] - p.at("theta").data[i];
            CHECK(std::fabs(std::fabs(step) - 0.01) < 2e-3);
            CHECK(step * g.at("theta").data[i] > 0.0);  // moves against the gradient
        }
    }
}

TEST_CASE("adam_step") {
    SUBCASE("zero gradient and zero weight decay leave parameters unchanged") {
        AdamConfig cfg;
        cfg.weight_decay = 0.0;
        ParameterSet p = one_param({2.0});
        AdamState st = make_adam_state(p);
        adam_step(st, p, zeros_like(p), cfg);
        adam_step(st, p, zeros_like(p), cfg);
        CHECK(p.at("theta").data[0] == 2.0);
    }

    SUBCASE("two-step scalar trace matches a hand-rolled Adam") {
        AdamConfig cfg;  // lr 0.01, b1 0.9, b2 0.999, eps 1e-8, wd 1e-6
        ParameterSet p = one_param({1.0});
        AdamState st = make_adam_state(p);
        const double g1 = 0.5, g2 = -0.2;

        double m = 0.0, v = 0.0, theta = 1.0;
        auto manual = [&](double g, int step) {
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            const double mh = m / (1.0 - std::pow(0.9, step));
            const double vh = v / (1.0 - std::pow(0.999, step));
            theta -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
            theta -= 0.01 * 1e-6 * theta;
        };
        ParameterSet gs = zeros_like(p);
        gs.at("theta").data[0] = g1;
        adam_step(st, p, gs, cfg);
        manual(g1, 1);
        CHECK(p.at("theta").data[0] == doctest::Approx(theta).epsilon(1e-15));

        gs.at("theta").data[0] = g2;
        adam_step(st, p, gs, cfg);
        manual(g2, 2);
        CHECK(p.at("theta").data[0] == doctest::Approx(theta).epsilon(1e-15));
    }

    SUBCASE("loss rescaling leaves the first step direction unchanged") {
        AdamConfig cfg;
        cfg.weight_decay = 0.0;
        for (const double scale : {0.01, 1.0, 250.0}) {
            ParameterSet p = one_param({1.0, -1.0});
            AdamState st = make_adam_state(p);
            ParameterSet g = zeros_like(p);
            g.at("theta").data = {0.3 * scale, -0.8 * scale};
            meta_update(st, p, g, MetaConfig{}, 0.01);
            CHECK(p.at("theta").data[0] < 1.0);
            CHECK(p.at("theta").data[1] > -1.0);
        }
    }

    SUBCASE("structure mismatch raises ContractError") {
        ParameterSet p = one_param({1.0});
        AdamState st = make_adam_state(p);
        ParameterSet g;
        g.set("other", NDArray::row({1.0}));
        CHECK_THROWS_AS(adam_step(st, p, g, AdamConfig{}), ContractError);
    }
}

TEST_CASE("lr_schedule") {
    LrDecay d;  // 0.9 every 4
    CHECK(lr_schedule(0.01, d, 0) == doctest::Approx(0.01));
    CHECK(lr_schedule(0.01, d, 3) == doctest::Approx(0.01));
    CHECK(lr_schedule(0.01, d, 4) == doctest::Approx(0.009));
    CHECK(lr_schedule(0.01, d, 7) == doctest::Approx(0.009));
    CHECK(lr_schedule(0.01, d, 8) == doctest::Approx(0.0081));
    CHECK_THROWS_AS(lr_schedule(0.01, d, -1), ContractError);
}

TEST_CASE("meta config validation") {
    MetaConfig cfg;
    cfg.beta = 0.0;
    CHECK_THROWS_AS(validate(cfg), ConfigError);
    cfg = MetaConfig{};
    cfg.alpha = -0.1;
    CHECK_THROWS_AS(validate(cfg), ConfigError);
}
