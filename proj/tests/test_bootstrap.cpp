#include "jls/report.hpp"
#include "jls/stats/bootstrap.hpp"

#include "synthetic.hpp"

#include <catch_amalgamated.hpp>

#include <algorithm>
#include <vector>

using namespace jls;
using namespace jls::stats;

namespace {

std::vector<double> ramp(std::size_t n) {
    std::vector<double> r(n);
    for (std::size_t i = 0; i < n; ++i) r[i] = double(i);
    return r;
}

DiscountedSeries noisy(ModelSpec spec, std::uint64_t seed, std::size_t n, double noise) {
    const auto p = testing::bubble_params(spec, seed, n);
    Rng r(seed + 1000);
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = model_price(spec, p, double(i)) * (1.0 + noise * r.normal());
    return undiscounted(v);
}

}  // namespace

TEST_CASE("daily permutation preserves the multiset") {
    Rng r(1);
    const auto x = ramp(103);
    const auto y = permute_residuals(x, 1, r);
    auto sorted = y;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == x);
    CHECK(y != x);
}

TEST_CASE("block permutation moves whole blocks and keeps the tail") {
    Rng r(2);
    const auto x = ramp(110);  // four blocks of 25 and a tail of 10
    for (int rep = 0; rep < 20; ++rep) {
        const auto y = permute_residuals(x, 25, r);
        auto sorted = y;
        std::sort(sorted.begin(), sorted.end());
        CHECK(sorted == x);
        std::vector<bool> seen(4, false);
        for (std::size_t b = 0; b < 4; ++b) {
            const double first = y[b * 25];
            REQUIRE(std::fmod(first, 25.0) == 0.0);
            const auto src = std::size_t(first / 25.0);
            CHECK_FALSE(seen[src]);
            seen[src] = true;
            for (std::size_t k = 0; k < 25; ++k) CHECK(y[b * 25 + k] == x[src * 25 + k]);
        }
        for (std::size_t i = 100; i < 110; ++i) CHECK(y[i] == x[i]);
    }
}

TEST_CASE("bootstrap_compare is reproducible and reports consistent fractions") {
    const auto s = noisy(ModelId::M0, 11, 120, 0.01);
    const auto b = SearchBounds::for_series(s);
    BootstrapOptions opt;
    opt.n_reps = 6;
    opt.block_len = 25;
    opt.seed = 123;
    opt.n_starts = 8;
    const auto a = bootstrap_compare(ModelId::M0, ModelId::M1, s, b, opt);
    const auto c = bootstrap_compare(ModelId::M0, ModelId::M1, s, b, opt);
    opt.workers = 2;
    const auto w = bootstrap_compare(ModelId::M0, ModelId::M1, s, b, opt);
    const auto ja = report::to_json(a).dump();
    CHECK(ja == report::to_json(c).dump());
    CHECK(ja == report::to_json(w).dump());

    CHECK(a.low_true.d_samples.size() + a.low_true.failures == 6);
    CHECK(a.high_true.d_samples.size() + a.high_true.failures == 6);
    const auto frac = [](const std::vector<double>& d, auto pred) {
        return double(std::count_if(d.begin(), d.end(), pred)) / double(d.size());
    };
    CHECK(a.p_l_true() == frac(a.low_true.d_samples, [&](double v) { return v > a.d_fit; }));
    CHECK(a.p_h_true() == frac(a.high_true.d_samples, [&](double v) { return v < a.d_fit; }));
    CHECK(a.d_fit == a.cost_low - a.cost_high);

    opt.seed = 124;
    opt.workers = 1;
    const auto other = bootstrap_compare(ModelId::M0, ModelId::M1, s, b, opt);
    CHECK(report::to_json(other).dump() != ja);
}

TEST_CASE("a data set the restricted model cannot explain gives p_l_true = 0") {
    // M3 data with strong curvature in the fundamental level: M0 is clearly insufficient
    const auto s = noisy(ModelId::M3, 5, 150, 0.002);
    const auto b = SearchBounds::for_series(s);
    BootstrapOptions opt;
    opt.n_reps = 5;
    opt.block_len = 1;
    opt.seed = 9;
    opt.n_starts = 12;
    const auto r = bootstrap_compare(ModelId::M0, ModelId::M3, s, b, opt);
    REQUIRE_FALSE(r.low_true.d_samples.empty());
    const double max_d = *std::max_element(r.low_true.d_samples.begin(), r.low_true.d_samples.end());
    if (r.d_fit > max_d) CHECK(r.p_l_true() == 0.0);
    CHECK(r.p_l_true() <= 0.2);
}

TEST_CASE("bootstrap argument checks") {
    const auto s = noisy(ModelId::M0, 3, 60, 0.01);
    const auto b = SearchBounds::for_series(s);
    BootstrapOptions opt;
    opt.n_reps = 0;
    CHECK_THROWS_AS(bootstrap_compare(ModelId::M0, ModelId::M1, s, b, opt), ConfigError);
    opt.n_reps = 2;
    opt.n_starts = 4;
    CHECK_THROWS_AS(bootstrap_compare(ModelId::M1, ModelId::M2, s, b, opt), DomainError);
}
