#include "fsgan/consistency.hpp"

#include "fsgan/errors.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>

namespace fsgan {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Rows scaled to unit length, plus the original norms.
std::pair<RowMat, Eigen::VectorXd> normalized_rows(const Tensor& activations)
{
    if (activations.rank() < 1) throw ShapeError("pairwise_cosine needs a batch");
    const auto batch = activations.dim(0);
    if (batch < 2) throw DomainError("cosine similarity distributions need a batch of at least 2");
    const auto width = activations.row_size();
    Eigen::Map<const RowMat> a(activations.data.data(), static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(width));
    Eigen::VectorXd norms = a.rowwise().norm();
    for (Eigen::Index i = 0; i < norms.size(); ++i)
        if (!(norms[i] > 0.0)) throw DegenerateInputError("zero-norm activation vector in batch row " + std::to_string(i));
    RowMat u = norms.cwiseInverse().asDiagonal() * a;
    return {std::move(u), std::move(norms)};
}

RowMat cosine_matrix(const RowMat& unit)
{
    RowMat sim = unit * unit.transpose();
    for (Eigen::Index i = 0; i < sim.rows(); ++i) {
        sim(i, i) = 1.0;
        for (Eigen::Index j = i + 1; j < sim.cols(); ++j) {
            const double v = std::clamp(0.5 * (sim(i, j) + sim(j, i)), -1.0, 1.0);
            sim(i, j) = sim(j, i) = v;
        }
    }
    return sim;
}

std::vector<double> softmax(std::span<const double> x)
{
    const double hi = *std::ranges::max_element(x);
    std::vector<double> p(x.size());
    double z = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) z += (p[k] = std::exp(x[k] - hi));
    for (auto& v : p) v /= z;
    return p;
}

// Row i of `sim` without its diagonal entry.
std::vector<double> off_diagonal_row(const RowMat& sim, Eigen::Index i)
{
    std::vector<double> row;
    row.reserve(static_cast<std::size_t>(sim.cols() - 1));
    for (Eigen::Index j = 0; j < sim.cols(); ++j)
        if (j != i) row.push_back(sim(i, j));
    return row;
}

} // namespace

Tensor pairwise_cosine(const Tensor& activations)
{
    const auto [unit, norms] = normalized_rows(activations);
    const RowMat sim = cosine_matrix(unit);
    const auto b = static_cast<std::size_t>(sim.rows());
    return Tensor({b, b}, std::vector<double>(sim.data(), sim.data() + sim.size()));
}

SimilarityDistribution similarity_distribution(std::span<const double> similarities, std::size_t anchor_index,
                                               std::size_t layer, DomainTag domain, NetworkTag network)
{
    if (similarities.empty()) throw DomainError("similarity distribution over zero other batch members");
    if (std::ranges::any_of(similarities, [](double v) { return !std::isfinite(v); }))
        throw DomainError("non-finite similarity");
    return {softmax(similarities), anchor_index, layer, domain, network};
}

double kl_divergence(std::span<const double> p_target, std::span<const double> p_source)
{
    if (p_target.size() != p_source.size())
        throw ShapeError("kl_divergence: lengths " + std::to_string(p_target.size()) + " and " +
                         std::to_string(p_source.size()) + " differ");
    double kl = 0.0;
    for (std::size_t k = 0; k < p_target.size(); ++k)
        if (p_target[k] > 0.0) kl += p_target[k] * (std::log(p_target[k]) - std::log(p_source[k]));
    return kl;
}

Var consistency_kl(const Var& target_activations, const Var& source_activations)
{
    const auto& tv = target_activations.value();
    const auto& sv = source_activations.value();
    if (tv.shape != sv.shape)
        throw ShapeError("consistency_kl: target " + shape_string(tv.shape) + " vs source " + shape_string(sv.shape));

    auto [tu, tn] = normalized_rows(tv);
    auto [su, sn] = normalized_rows(sv);
    const RowMat tsim = cosine_matrix(tu);
    const RowMat ssim = cosine_matrix(su);
    const auto b = tsim.rows();
    const double inv_b = 1.0 / static_cast<double>(b);

    // dL/dsim for each side, filled while evaluating the loss.
    RowMat gt = RowMat::Zero(b, b), gs = RowMat::Zero(b, b);
    double loss = 0.0;
    for (Eigen::Index i = 0; i < b; ++i) {
        const auto pt = softmax(off_diagonal_row(tsim, i));
        const auto ps = softmax(off_diagonal_row(ssim, i));
        const double kl = kl_divergence(pt, ps);
        loss += kl;
        for (Eigen::Index j = 0, k = 0; j < b; ++j) {
            if (j == i) continue;
            const auto kk = static_cast<std::size_t>(k++);
            gt(i, j) = inv_b * pt[kk] * (std::log(pt[kk]) - std::log(ps[kk]) - kl);
            gs(i, j) = inv_b * (ps[kk] - pt[kk]);
        }
    }
    loss *= inv_b;

    return Var::op(Tensor({}, {loss}), {target_activations, source_activations},
                   [gt = std::move(gt), gs = std::move(gs), tu = std::move(tu), tn = std::move(tn), su = std::move(su),
                    sn = std::move(sn)](Var::Node& self) {
                       const double up = self.grad.data[0];
                       auto propagate = [up](Var::Node& p, const RowMat& g, const RowMat& u, const Eigen::VectorXd& n) {
                           if (!p.requires_grad) return;
                           // sim = U U^T with U the unit rows; symmetric use of sim(i, j).
                           const RowMat sym = g + g.transpose();
                           RowMat du = sym * u;
                           const Eigen::VectorXd radial = (du.cwiseProduct(u)).rowwise().sum();
                           du -= radial.asDiagonal() * u;
                           du = (up * n.cwiseInverse()).asDiagonal() * du;
                           auto& grad = p.ensure_grad();
                           Eigen::Map<RowMat>(grad.data.data(), u.rows(), u.cols()) += du;
                       };
                       propagate(*self.parents[0], gt, tu, tn);
                       propagate(*self.parents[1], gs, su, sn);
                   });
}

CdcTerm cdc_from_taps(const std::map<std::size_t, Var>& target, const std::map<std::size_t, Var>& source,
                      std::span<const std::size_t> taps)
{
    if (taps.empty()) throw ConfigError("consistency loss needs at least one tap");
    CdcTerm term;
    for (auto t : taps) {
        const auto it = target.find(t);
        const auto is = source.find(t);
        if (it == target.end() || is == source.end())
            throw ConfigError("tap " + std::to_string(t) + " missing from forward outputs");
        Var kl = consistency_kl(it->second, is->second);
        term.per_layer[t] = kl.item();
        term.loss = term.loss.defined() ? ops::add(term.loss, kl) : kl;
    }
    return term;
}

CdcTerm generator_cdc(const ModelPair& models, const Tensor& z, std::span<const std::size_t> generator_taps)
{
    const auto target = models.generator_target.forward(z, generator_taps);
    const auto source = models.generator_source.forward(z, generator_taps);
    return cdc_from_taps(target.taps, source.taps, generator_taps);
}

CdcTerm discriminator_cdc(const ModelPair& models, const Tensor& z, std::span<const std::size_t> discriminator_taps)
{
    const auto target_images = models.generator_target.forward(z).images;
    const auto source_images = models.generator_source.forward(z).images;
    const auto target = models.discriminator_target.forward(target_images, discriminator_taps);
    const auto source = models.discriminator_source.forward(source_images, discriminator_taps);
    return cdc_from_taps(target.taps, source.taps, discriminator_taps);
}

CdcLossReport cdc_report(const ModelPair& models, const Tensor& z, const FeatureTapSet& taps)
{
    CdcLossReport report;
    if (!taps.generator_taps.empty()) {
        auto g = generator_cdc(models, z, taps.generator_taps);
        report.generator_loss = g.loss.item();
        report.generator_terms = std::move(g.per_layer);
    }
    if (!taps.discriminator_taps.empty()) {
        auto d = discriminator_cdc(models, z, taps.discriminator_taps);
        report.discriminator_loss = d.loss.item();
        report.discriminator_terms = std::move(d.per_layer);
    }
    return report;
}

} // namespace fsgan
