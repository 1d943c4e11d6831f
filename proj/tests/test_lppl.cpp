#include "jls/lppl.hpp"
#include "jls/random.hpp"
#include "jls/timeseries.hpp"

#include "synthetic.hpp"

#include <Eigen/Dense>
#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <vector>

using namespace jls;
using Catch::Approx;

namespace {

LpplParams random_params(Rng& r) {
    LpplParams p;
    p.t_c = r.uniform(300.0, 400.0);
    p.m = r.uniform(0.05, 0.95);
    p.omega = r.uniform(2.0, 20.0);
    p.phi = r.uniform(0.0, 2.0 * std::numbers::pi);
    p.A = r.uniform(3.0, 8.0);
    p.B = -r.uniform(0.001, 0.1);
    p.C = r.uniform(-0.01, 0.01);
    p.p1 = r.uniform(1.0, 20.0);
    p.gamma = r.uniform(0.2, 0.9);
    return p;
}

// Least squares via column-pivoted Householder QR of the N x 3 design matrix.
Eigen::Vector3d qr_oracle(const LpplParams& p, const std::vector<double>& t, const std::vector<double>& y) {
    Eigen::MatrixXd X(t.size(), 3);
    Eigen::VectorXd Y(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double x = p.t_c - t[i];
        const double f = std::pow(x, p.m);
        X(Eigen::Index(i), 0) = 1.0;
        X(Eigen::Index(i), 1) = f;
        X(Eigen::Index(i), 2) = f * std::cos(p.omega * std::log(x) - p.phi);
        Y(Eigen::Index(i)) = y[i];
    }
    return X.colPivHouseholderQr().solve(Y);
}

}  // namespace

TEST_CASE("eval_flppl") {
    LpplParams p;
    p.t_c = 10.0;
    p.A = 2.5;
    CHECK(eval_flppl(p, 3.0) == 2.5);

    p = {};
    p.A = 1.0;
    p.B = -1.0;
    p.C = 0.1;
    p.m = 0.5;
    p.omega = 6.0;
    p.t_c = 5.0;
    CHECK(eval_flppl(p, 4.0) == Approx(0.1).epsilon(1e-15));

    // mpmath at 50 digits, see tests/oracles/oracles.py
    p = {};
    p.A = 8.7;
    p.B = -0.2;
    p.C = 0.05;
    p.m = 0.19;
    p.omega = 6.97;
    p.t_c = 100.0;
    CHECK(eval_flppl(p, 0.0) == Approx(8.3133374531426037).epsilon(1e-14));

    CHECK_THROWS_AS(eval_flppl(p, 100.0), DomainError);
    CHECK_THROWS_AS(eval_flppl(p, 101.0), DomainError);
}

TEST_CASE("eval_flppl oscillation is bounded by |C| x^m") {
    Rng r(11);
    for (int k = 0; k < 200; ++k) {
        auto p = random_params(r);
        for (double t = 0.0; t < p.t_c - 0.01; t += 7.3) {
            const double x = p.t_c - t;
            const double osc = eval_flppl(p, t) - p.A - p.B * std::pow(x, p.m);
            CHECK(std::abs(osc) <= std::abs(p.C) * std::pow(x, p.m) * (1.0 + 1e-12) + 1e-15);
        }
    }
}

TEST_CASE("model_price forms") {
    LpplParams p;
    p.t_c = 50.0;
    p.A = 4.0;
    CHECK(model_price(ModelId::M2, LpplParams{p.t_c, 0.5, 6.0, 0.0, 4.0, 0.0, 0.0, 0.0, 0.5}, 0.0) ==
          Approx(16.0).epsilon(1e-15));
    CHECK(model_price(ModelId::M0, p, 0.0) == Approx(std::exp(4.0)).epsilon(1e-15));
    p.p1 = 3.0;
    CHECK(model_price(ModelId::M1, p, 0.0) == Approx(3.0 + std::exp(4.0)).epsilon(1e-15));
    p.gamma = 0.5;
    CHECK(model_price(ModelId::M3, p, 0.0) == Approx(3.0 + 16.0).epsilon(1e-15));
    p.A = -1.0;
    CHECK_THROWS_AS(model_price(ModelId::M3, p, 0.0), ModelUndefined);
    CHECK_NOTHROW(model_price(ModelId::M1, p, 0.0));
}

TEST_CASE("nesting identities on random draws") {
    Rng r(2024);
    for (int k = 0; k < 1000; ++k) {
        auto p = random_params(r);
        const double t = r.uniform(0.0, p.t_c - 1.0);
        const double m0 = model_price(ModelId::M0, p, t);
        auto q = p;
        q.p1 = 0.0;
        CHECK(model_price(ModelId::M1, q, t) == m0);
        q = p;
        q.gamma = 1.0;
        CHECK(model_price(ModelId::M2, q, t) == m0);
        q.p1 = 0.0;
        CHECK(model_price(ModelId::M3, q, t) == m0);
        q.gamma = 1.0 - 0.5 * kUnitGammaTol;  // inside the unit-gamma branch
        CHECK(model_price(ModelId::M3, q, t) == m0);
        CHECK(model_price(ModelId::M0prime, p, t) == m0);
    }
}

TEST_CASE("solve_linear_abc") {
    SECTION("exact recovery on a consistent target") {
        auto truth = testing::bubble_params(ModelId::M0, 5, 200);
        std::vector<double> v(200);
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = model_price(ModelId::M0, truth, double(i));
        const auto s = undiscounted(v);
        const auto abc = solve_linear_abc(ModelId::M0, truth, s);
        CHECK(testing::rel_err(abc.A, truth.A) < 1e-9);
        CHECK(testing::rel_err(abc.B, truth.B) < 1e-9);
        CHECK(testing::rel_err(abc.C, truth.C) < 1e-9);
    }
    SECTION("constant target against a QR oracle") {
        LpplParams p;
        p.t_c = 260.0;
        p.m = 0.4;
        p.omega = 7.0;
        p.phi = 1.0;
        std::vector<double> v(120, 42.0);
        const auto s = undiscounted(v);
        const auto abc = solve_linear_abc(ModelId::M0, p, s);
        const auto ref = qr_oracle(p, s.t_index, std::vector<double>(120, std::log(42.0)));
        CHECK(abc.A == Approx(ref(0)).epsilon(1e-8));
        CHECK(abc.B == Approx(ref(1)).margin(1e-10));
        CHECK(abc.C == Approx(ref(2)).margin(1e-10));
    }
    SECTION("random noisy instances against a QR oracle, all transforms") {
        Rng r(77);
        for (int k = 0; k < 100; ++k) {
            const ModelSpec spec = kCoreModels[std::size_t(k % 4)];
            auto p = testing::bubble_params(spec, std::uint64_t(1000 + k), 150);
            std::vector<double> v(150), y(150);
            for (std::size_t i = 0; i < v.size(); ++i) {
                v[i] = model_price(spec, p, double(i)) * (1.0 + 0.02 * r.normal());
                const double x = v[i] - effective_p1(spec, p);
                y[i] = spec.free_gamma() ? std::pow(x, 1.0 - p.gamma) : std::log(x);
            }
            const auto s = undiscounted(v);
            const auto abc = solve_linear_abc(spec, p, s);
            const auto ref = qr_oracle(p, s.t_index, y);
            CHECK(testing::rel_err(abc.A, ref(0)) < 1e-8);
            CHECK(testing::rel_err(abc.B, ref(1)) < 1e-8);
            CHECK(testing::rel_err(abc.C, ref(2)) < 1e-8);
        }
    }
    SECTION("undefined target and degenerate regressors") {
        LpplParams p;
        p.t_c = 100.0;
        p.m = 0.5;
        p.omega = 6.0;
        p.p1 = 200.0;
        std::vector<double> v(50, 100.0);
        CHECK_THROWS_AS(solve_linear_abc(ModelId::M1, p, undiscounted(v)), DomainError);
        p.p1 = 0.0;
        p.m = 1e-12;  // x^m is numerically constant: collinear with the intercept
        p.omega = 1e-12;
        CHECK_THROWS_AS(solve_linear_abc(ModelId::M0, p, undiscounted(v)), IllConditioned);
        p.t_c = 10.0;
        CHECK_THROWS_AS(solve_linear_abc(ModelId::M0, p, undiscounted(v)), DomainError);
    }
}

TEST_CASE("residuals") {
    auto p = testing::bubble_params(ModelId::M3, 9, 100);
    std::vector<double> v(100);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = model_price(ModelId::M3, p, double(i));
    auto s = undiscounted(v);
    auto r = residuals(ModelId::M3, p, s);
    CHECK(r.rms == 0.0);
    for (double x : r.values) CHECK(x == 0.0);

    for (auto& x : s.values) x *= 1.1;
    r = residuals(ModelId::M3, p, s);
    for (double x : r.values) CHECK(x == Approx(0.1).epsilon(1e-12));
    CHECK(r.rms == Approx(0.1).epsilon(1e-12));

    auto q = testing::bubble_params(ModelId::M0, 9, 100);
    for (std::size_t i = 0; i < v.size(); ++i) s.values[i] = model_price(ModelId::M0, q, double(i)) * 1.01;
    const auto lr = residuals(ModelId::M0prime, q, s);
    for (double x : lr.values) CHECK(x == Approx(std::log(1.01)).epsilon(1e-10));
}

TEST_CASE("check_bubble_conditions") {
    LpplParams p;
    p.m = 0.19;
    p.omega = 6.97;
    p.B = -0.2;
    p.C = 0.05;
    auto f = check_bubble_conditions(p);
    CHECK(f.bubble_m);
    CHECK(f.lppl_conditions);

    p.m = 1.5;
    CHECK_FALSE(check_bubble_conditions(p).bubble_m);
    CHECK_FALSE(check_bubble_conditions(p).lppl_conditions);

    p = {};
    p.B = -1.0;
    p.m = 0.5;
    p.C = 0.0;
    p.omega = 6.0;
    f = check_bubble_conditions(p);
    CHECK(f.b == 0.5);
    CHECK(f.hazard_nonneg);

    p.C = 0.1;  // 0.5 - 0.1 * sqrt(36.25) < 0
    CHECK_FALSE(check_bubble_conditions(p).hazard_nonneg);
    p.B = 1.0;
    p.C = 0.0;
    CHECK_FALSE(check_bubble_conditions(p).lppl_conditions);
}

TEST_CASE("ModelSpec") {
    CHECK(ModelSpec(ModelId::M0).nested_in(ModelId::M1));
    CHECK(ModelSpec(ModelId::M0).nested_in(ModelId::M3));
    CHECK(ModelSpec(ModelId::M2).nested_in(ModelId::M3));
    CHECK_FALSE(ModelSpec(ModelId::M1).nested_in(ModelId::M2));
    CHECK_FALSE(ModelSpec(ModelId::M3).nested_in(ModelId::M0));
    CHECK(ModelSpec(ModelId::M3).parameter_count() - ModelSpec(ModelId::M0).parameter_count() == 2);
    CHECK(ModelSpec::parse("M0prime") == ModelSpec(ModelId::M0prime));
    CHECK_THROWS_AS(ModelSpec::parse("M4"), ConfigError);
    CHECK(wrap_phase(-0.5) == Approx(2.0 * std::numbers::pi - 0.5));
    CHECK(wrap_phase(7.0) == Approx(7.0 - 2.0 * std::numbers::pi));
}
