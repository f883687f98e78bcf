#include "support.hpp"

#include "fsgan/consistency.hpp"
#include "fsgan/errors.hpp"

#include <doctest.h>

#include <numbers>

using namespace fsgan;
using namespace fsgan::testing;

namespace {

// Independent cosine -> softmax(excluding self) -> KL pipeline on plain vectors.
double oracle_cdc(const std::vector<std::vector<double>>& target, const std::vector<std::vector<double>>& source)
{
    auto cosine = [](const std::vector<double>& a, const std::vector<double>& b) {
        double dot = 0, na = 0, nb = 0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            dot += a[i] * b[i];
            na += a[i] * a[i];
            nb += b[i] * b[i];
        }
        return dot / std::sqrt(na * nb);
    };
    auto dist = [&](const std::vector<std::vector<double>>& rows, std::size_t i) {
        std::vector<double> e;
        double z = 0;
        for (std::size_t j = 0; j < rows.size(); ++j)
            if (j != i) {
                e.push_back(std::exp(cosine(rows[i], rows[j])));
                z += e.back();
            }
        for (auto& v : e) v /= z;
        return e;
    };
    double total = 0;
    for (std::size_t i = 0; i < target.size(); ++i) {
        const auto pt = dist(target, i), ps = dist(source, i);
        for (std::size_t j = 0; j < pt.size(); ++j) total += pt[j] * std::log(pt[j] / ps[j]);
    }
    return total / static_cast<double>(target.size());
}

std::vector<std::vector<double>> apply_linear(const std::vector<std::vector<double>>& w,
                                              const std::vector<std::vector<double>>& z)
{
    std::vector<std::vector<double>> out;
    for (const auto& zi : z) {
        std::vector<double> row;
        for (const auto& wr : w) {
            double s = 0;
            for (std::size_t k = 0; k < zi.size(); ++k) s += wr[k] * zi[k];
            row.push_back(s);
        }
        out.push_back(row);
    }
    return out;
}

Tensor to_tensor(const std::vector<std::vector<double>>& rows)
{
    Tensor t({rows.size(), rows.front().size()});
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j) t.data[i * rows[i].size() + j] = rows[i][j];
    return t;
}

} // namespace

TEST_CASE("pairwise cosine basics")
{
    const Tensor same({2, 3}, std::vector<double>{1, 2, 3, 1, 2, 3});
    CHECK(pairwise_cosine(same).data[1] == doctest::Approx(1.0).epsilon(1e-15));
    const Tensor ortho({2, 2}, std::vector<double>{1, 0, 0, 1});
    CHECK(pairwise_cosine(ortho).data[1] == 0.0);

    Rng rng(1);
    Tensor ab = random_tensor({2, 5}, rng);
    const double before = pairwise_cosine(ab).data[1];
    for (std::size_t j = 0; j < 5; ++j) ab.data[j] *= 7.3;
    CHECK(pairwise_cosine(ab).data[1] == doctest::Approx(before).epsilon(1e-14));

    CHECK_THROWS_AS(pairwise_cosine(Tensor({2, 2}, std::vector<double>{0, 0, 1, 1})), DegenerateInputError);
    CHECK_THROWS_AS(pairwise_cosine(Tensor({1, 2}, 1.0)), DomainError);
}

TEST_CASE("similarity distributions")
{
    const std::vector<double> flat{0.2, 0.2, 0.2, 0.2};
    for (double p : similarity_distribution(flat).probabilities) CHECK(p == doctest::Approx(0.25));
    CHECK(similarity_distribution(std::vector<double>{0.4}).probabilities == std::vector<double>{1.0});
    const auto d = similarity_distribution(std::vector<double>{0.0, std::numbers::ln2}).probabilities;
    CHECK(d[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
    CHECK(d[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
    CHECK_THROWS_AS(similarity_distribution(std::vector<double>{}), DomainError);
}

TEST_CASE("KL divergence oracle values")
{
    const std::vector<double> p{0.3, 0.7};
    CHECK(kl_divergence(p, p) == 0.0);
    const double expected = 0.25 * std::log(0.5) + 0.75 * std::log(1.5);
    CHECK(std::abs(kl_divergence(std::vector<double>{0.25, 0.75}, std::vector<double>{0.5, 0.5}) - expected) < 1e-9);
    CHECK(std::abs(expected - 0.13081) < 1e-5);
    CHECK(std::abs(kl_divergence(std::vector<double>{1.0, 0.0}, std::vector<double>{0.5, 0.5}) - std::numbers::ln2) <
          1e-9);
    CHECK_THROWS_AS(kl_divergence(std::vector<double>{1.0}, p), ShapeError);
}

TEST_CASE("consistency of identical networks is zero")
{
    const auto pair = ModelPair::from_source(build_generator({}), build_discriminator({}));
    Rng rng(2);
    const std::vector<std::size_t> gtaps{8, 16, 32}, dtaps{16, 8};
    for (int trial = 0; trial < 5; ++trial) {
        const Tensor z = random_tensor({4, 64}, rng);
        CHECK(generator_cdc(pair, z, gtaps).loss.item() < 1e-6);
        CHECK(discriminator_cdc(pair, z, dtaps).loss.item() < 1e-6);
    }
}

TEST_CASE("perturbed targets give nonnegative consistency loss")
{
    auto pair = ModelPair::from_source(build_generator({}), build_discriminator({}));
    Rng rng(3);
    perturb(pair.generator_target.parameters(), rng, 0.05);
    perturb(pair.discriminator_target.parameters(), rng, 0.05);
    const Tensor z = random_tensor({4, 64}, rng);
    const std::vector<std::size_t> gtaps{8, 16, 32}, dtaps{16, 8};
    const auto g = generator_cdc(pair, z, gtaps);
    CHECK(g.loss.item() > 0.0);
    CHECK(g.per_layer.size() == 3);
    CHECK(discriminator_cdc(pair, z, dtaps).loss.item() > 0.0);
}

TEST_CASE("consistency_kl matches the brute-force pipeline on two-unit linear maps")
{
    const std::vector<std::vector<double>> ws{{1.0, 0.5}, {-0.3, 2.0}};
    const std::vector<std::vector<double>> wt{{0.8, 0.9}, {0.4, 1.5}};
    for (std::size_t batch : {2u, 3u, 5u}) {
        Rng rng(10 + batch);
        std::vector<std::vector<double>> z(batch, std::vector<double>(2));
        for (auto& row : z)
            for (auto& v : row) v = standard_normal(rng);
        const auto source = apply_linear(ws, z), target = apply_linear(wt, z);
        const double got = consistency_kl(Var::constant(to_tensor(target)), Var::constant(to_tensor(source))).item();
        CHECK(std::abs(got - oracle_cdc(target, source)) < 1e-10);
    }
}

TEST_CASE("consistency_kl gradients match finite differences in both inputs")
{
    Rng rng(4);
    ParameterSet params;
    params.add("t", random_tensor({4, 6}, rng));
    params.add("s", random_tensor({4, 6}, rng));
    auto loss = [&] { return consistency_kl(params.get("t"), params.get("s")); };
    const auto r = check_gradient(params, loss);
    CHECK(r.analytic_norm > 0.0);
    CHECK(r.relative_error < 1e-6);
}

TEST_CASE("generator and discriminator consistency gradients on a small model")
{
    auto pair = ModelPair::from_source(build_generator(tiny_generator()), build_discriminator(tiny_discriminator()));
    Rng rng(5);
    perturb(pair.generator_target.parameters(), rng, 0.05);
    perturb(pair.discriminator_target.parameters(), rng, 0.05);
    const Tensor z = random_tensor({4, 8}, rng);
    const std::vector<std::size_t> gtaps{8, 16, 32}, dtaps{16, 8};
    REQUIRE(pair.generator_target.parameters().scalar_count() + pair.discriminator_target.parameters().scalar_count() <=
            10000);

    const auto g = check_gradient(pair.generator_target.parameters(),
                                  [&] { return generator_cdc(pair, z, gtaps).loss; });
    CHECK(g.relative_error <= 1e-4);
    CHECK(g.kinks * 2 <= g.coordinates);
    const auto dg = check_gradient(pair.generator_target.parameters(),
                                   [&] { return discriminator_cdc(pair, z, dtaps).loss; });
    CHECK(dg.relative_error <= 1e-4);
    CHECK(dg.kinks * 2 <= dg.coordinates);
    const auto dd = check_gradient(pair.discriminator_target.parameters(),
                                   [&] { return discriminator_cdc(pair, z, dtaps).loss; });
    CHECK(dd.relative_error <= 1e-4);
    CHECK(dd.kinks * 2 <= dd.coordinates);
}
