#include "support.hpp"

#include "fsgan/errors.hpp"
#include "fsgan/masking.hpp"

#include <doctest.h>

#include <map>
#include <numbers>

using namespace fsgan;
using namespace fsgan::testing;

namespace {

// Survival function of the chi-square distribution with 5 degrees of freedom.
double chi2_sf_5(double x)
{
    return std::erfc(std::sqrt(x / 2.0)) + std::sqrt(2.0 * x / std::numbers::pi) * std::exp(-x / 2.0) * (1.0 + x / 3.0);
}

} // namespace

TEST_CASE("masked count is floor(ratio * length) for every grid cell")
{
    Rng rng(1);
    for (std::size_t f : {8u, 64u, 8192u})
        for (double r : {0.0, 1.0 / 8, 1.0 / 2, 3.0 / 4, 7.0 / 8, 1.0}) {
            const auto m = sample_mask(f, r, rng);
            const auto expected = static_cast<std::size_t>(std::floor(r * static_cast<double>(f)));
            CHECK(m.masked_indices.size() == expected);
            CHECK(masked_count(f, r) == expected);
            CHECK(std::is_sorted(m.masked_indices.begin(), m.masked_indices.end()));
            CHECK(std::adjacent_find(m.masked_indices.begin(), m.masked_indices.end()) == m.masked_indices.end());
            if (!m.masked_indices.empty()) CHECK(m.masked_indices.back() < f);
        }
    CHECK(masked_count(8192, 0.75) == 6144);
    CHECK(sample_mask(10, 0.0, rng).masked_indices.empty());
}

TEST_CASE("out-of-range ratios are rejected")
{
    Rng rng(2);
    CHECK_THROWS_AS(sample_mask(8, -0.1, rng), DomainError);
    CHECK_THROWS_AS(sample_mask(8, 1.5, rng), DomainError);
}

TEST_CASE("two-of-four masks are uniform over all six subsets")
{
    std::map<std::vector<std::size_t>, std::size_t> counts;
    for (std::size_t a = 0; a < 4; ++a)
        for (std::size_t b = a + 1; b < 4; ++b) counts[{a, b}] = 0;
    REQUIRE(counts.size() == 6);

    Rng rng(3);
    const std::size_t draws = 100000;
    for (std::size_t i = 0; i < draws; ++i) {
        const auto m = sample_mask(4, 0.5, rng);
        REQUIRE(counts.contains(m.masked_indices));
        ++counts[m.masked_indices];
    }
    const double expected = static_cast<double>(draws) / 6.0;
    double chi2 = 0.0;
    for (const auto& [subset, n] : counts) chi2 += (n - expected) * (n - expected) / expected;
    CHECK(chi2_sf_5(chi2) > 0.001);
}

TEST_CASE("a mask is reproducible from its seed")
{
    Rng rng(4);
    const auto m = sample_mask(64, 0.75, rng);
    CHECK(sample_mask_from_seed(64, 0.75, m.seed).masked_indices == m.masked_indices);
}

TEST_CASE("apply_mask zeroes exactly the masked positions")
{
    Rng rng(5);
    const Tensor ones({1, 8}, 1.0);
    const auto half = sample_mask(8, 0.5, rng);
    const Tensor out = apply_mask(ones, half);
    double sum = 0.0;
    for (double v : out.data) sum += v;
    CHECK(sum == 4.0);

    const Tensor x = random_tensor({3, 8}, rng);
    CHECK(apply_mask(x, sample_mask(8, 0.0, rng)) == x);
    CHECK_THROWS_AS(apply_mask(random_tensor({2, 5}, rng), half), ShapeError);
}

TEST_CASE("gradient of a masked sum is the keep indicator")
{
    Rng rng(6);
    const auto m = sample_mask(8, 0.5, rng);
    const Var x = Var::leaf(random_tensor({1, 8}, rng), true);
    const std::vector<MaskSpec> masks{m};
    backward(ops::sum(apply_masks(x, masks)));
    CHECK(x.grad().data == m.keep_indicator());
}

TEST_CASE("per-sample masks differ between rows and between calls")
{
    Rng rng(7);
    const MaskConfig cfg{4, 0.75, true, MaskTarget::features};
    const auto a = sample_batch_masks(4, 1024, cfg, rng);
    const auto b = sample_batch_masks(4, 1024, cfg, rng);
    REQUIRE(a.size() == 4);
    CHECK(a[0].masked_indices != a[1].masked_indices);
    CHECK(a[0].masked_indices != b[0].masked_indices);
    MaskConfig shared = cfg;
    shared.per_sample = false;
    CHECK(sample_batch_masks(4, 1024, shared, rng).size() == 1);
}
