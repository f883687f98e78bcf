#include "fsgan/metrics.hpp"

#include "fsgan/autograd.hpp"
#include "fsgan/errors.hpp"
#include "fsgan/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace fsgan {

namespace {

constexpr std::size_t kChunk = 64;
constexpr double kNormFloor = 1e-10;

Tensor as_batch(const Tensor& image)
{
    if (image.rank() == 3) return Tensor({1, image.dim(0), image.dim(1), image.dim(2)}, image.data);
    if (image.rank() == 4) return image;
    throw ShapeError("expected an image (3, R, R) or a batch (N, 3, R, R), got " + shape_string(image.shape));
}

void check_images(const Tensor& images)
{
    if (images.rank() != 4 || images.dim(1) != 3 || images.dim(2) != images.dim(3) || images.dim(2) < 8)
        throw ShapeError("expected (N, 3, R, R) images with R >= 8, got " + shape_string(images.shape));
}

// Unit-normalizes the channel vector at every location of a (C, r, r) slab, in place.
void normalize_channels(std::span<double> slab, std::size_t channels, std::size_t locations)
{
    for (std::size_t p = 0; p < locations; ++p) {
        double ss = 0.0;
        for (std::size_t c = 0; c < channels; ++c) ss += slab[c * locations + p] * slab[c * locations + p];
        const double inv = 1.0 / (std::sqrt(ss) + kNormFloor);
        for (std::size_t c = 0; c < channels; ++c) slab[c * locations + p] *= inv;
    }
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& a)
{
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
    const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

double trace_sqrt_product(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b)
{
    const Eigen::MatrixXd ah = psd_sqrt(a);
    Eigen::MatrixXd m = ah * b * ah;
    m = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
}

bool rank_deficient(const Eigen::MatrixXd& cov)
{
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov, Eigen::EigenvaluesOnly);
    const auto& ev = es.eigenvalues();
    const double top = std::max(ev.maxCoeff(), 0.0);
    const double tol = static_cast<double>(cov.rows()) * std::numeric_limits<double>::epsilon() * std::max(top, 1.0);
    return ev.minCoeff() <= tol;
}

void moments(const Tensor& rows, Eigen::VectorXd& mu, Eigen::MatrixXd& cov)
{
    const auto n = static_cast<Eigen::Index>(rows.dim(0));
    const auto d = static_cast<Eigen::Index>(rows.dim(1));
    const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> x(rows.data.data(),
                                                                                                      n, d);
    mu = x.colwise().mean().transpose();
    const Eigen::MatrixXd centered = x.rowwise() - mu.transpose();
    cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
}

} // namespace

FeatureExtractor::FeatureExtractor(std::uint64_t seed)
{
    Rng rng(seed);
    std::size_t in = 3;
    for (const auto out : channels_) {
        Tensor w({out, in, 3, 3});
        const double stddev = std::sqrt(2.0 / static_cast<double>(in * 9));
        for (auto& v : w.data) v = stddev * standard_normal(rng);
        Tensor b({out});
        for (auto& v : b.data) v = 0.1 * standard_normal(rng);
        weights_.push_back(std::move(w));
        biases_.push_back(std::move(b));
        in = out;
    }
}

std::vector<Tensor> FeatureExtractor::activations(const Tensor& images) const
{
    check_images(images);
    const std::size_t n = images.dim(0);
    std::vector<Tensor> out;
    for (std::size_t start = 0; start < n; start += kChunk) {
        const std::size_t stop = std::min(n, start + kChunk);
        Var x = Var::constant(images.slice_rows(start, stop));
        for (std::size_t d = 0; d < weights_.size(); ++d) {
            x = ops::conv2d(x, Var::constant(weights_[d]), Var::constant(biases_[d]), 1);
            x = ops::avgpool2x(ops::leaky_relu(x, kLeakySlope));
            if (start == 0) {
                Shape s = x.value().shape;
                s[0] = n;
                out.emplace_back(s);
            }
            const auto row = x.value().row_size();
            std::copy(x.value().data.begin(), x.value().data.end(), out[d].data.begin() + static_cast<std::ptrdiff_t>(start * row));
        }
    }
    return out;
}

Tensor FeatureExtractor::embed(const Tensor& images) const
{
    auto acts = activations(images);
    const std::size_t n = images.dim(0);
    std::size_t width = 0;
    for (const auto& a : acts) width += a.row_size();
    Tensor out({n, width});
    std::size_t offset = 0;
    for (const auto& a : acts) {
        const std::size_t c = a.dim(1), loc = a.dim(2) * a.dim(3), row = a.row_size();
        const double w = 1.0 / std::sqrt(static_cast<double>(acts.size() * loc));
        for (std::size_t i = 0; i < n; ++i) {
            std::span<double> dst(out.data.data() + i * width + offset, row);
            const auto src = a.row(i);
            std::copy(src.begin(), src.end(), dst.begin());
            normalize_channels(dst, c, loc);
            for (auto& v : dst) v *= w;
        }
        offset += row;
    }
    return out;
}

Tensor FeatureExtractor::pooled(const Tensor& images) const
{
    auto acts = activations(images);
    const std::size_t n = images.dim(0);
    std::size_t width = 0;
    for (const auto& a : acts) width += a.dim(1);
    Tensor out({n, width});
    std::size_t offset = 0;
    for (auto& a : acts) {
        const std::size_t c = a.dim(1), loc = a.dim(2) * a.dim(3);
        for (std::size_t i = 0; i < n; ++i) {
            std::span<double> slab(a.data.data() + i * a.row_size(), a.row_size());
            normalize_channels(slab, c, loc);
            for (std::size_t ch = 0; ch < c; ++ch) {
                double s = 0.0;
                for (std::size_t p = 0; p < loc; ++p) s += slab[ch * loc + p];
                out.data[i * width + offset + ch] = s / static_cast<double>(loc);
            }
        }
        offset += c;
    }
    return out;
}

const FeatureExtractor& default_extractor()
{
    static const FeatureExtractor extractor;
    return extractor;
}

double embedding_distance(std::span<const double> a, std::span<const double> b)
{
    if (a.size() != b.size()) throw ShapeError("embedding lengths differ");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

double perceptual_distance(const Tensor& a, const Tensor& b)
{
    const Tensor ba = as_batch(a), bb = as_batch(b);
    if (ba.shape != bb.shape || ba.dim(0) != 1)
        throw ShapeError("perceptual_distance needs two single images of equal shape, got " + shape_string(a.shape) +
                         " and " + shape_string(b.shape));
    if (ba.data == bb.data) return 0.0;
    Tensor pair({2, ba.dim(1), ba.dim(2), ba.dim(3)});
    std::copy(ba.data.begin(), ba.data.end(), pair.data.begin());
    std::copy(bb.data.begin(), bb.data.end(), pair.data.begin() + static_cast<std::ptrdiff_t>(ba.size()));
    const Tensor e = default_extractor().embed(pair);
    return embedding_distance(e.row(0), e.row(1));
}

ClusterAssignment assign_clusters(const Tensor& gen, const Tensor& train)
{
    if (gen.rank() != 2 || train.rank() != 2 || gen.dim(1) != train.dim(1))
        throw ShapeError("cluster assignment needs embeddings of equal width, got " + shape_string(gen.shape) + " and " +
                         shape_string(train.shape));
    const std::size_t k = train.dim(0);
    if (k == 0) throw DomainError("cluster assignment needs at least one training sample");
    ClusterAssignment out;
    out.members.resize(k);
    for (std::size_t i = 0; i < gen.dim(0); ++i) {
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < k; ++j) {
            const double d = embedding_distance(gen.row(i), train.row(j));
            if (d < best_d) {
                best_d = d;
                best = j;
            }
        }
        out.cluster.push_back(best);
        out.members[best].push_back(i);
    }
    return out;
}

DiversityReport intra_diversity_of_images(const Tensor& generated, const Tensor& training)
{
    check_images(generated);
    check_images(training);
    if (generated.dim(2) != training.dim(2))
        throw ShapeError("generated images are " + std::to_string(generated.dim(2)) + "px, training samples are " +
                         std::to_string(training.dim(2)) + "px");
    const std::size_t k = training.dim(0), n = generated.dim(0);
    if (n < k) throw DomainError("n_generated (" + std::to_string(n) + ") must be at least k (" + std::to_string(k) + ")");

    const auto& fx = default_extractor();
    const Tensor ge = fx.embed(generated);
    const Tensor te = fx.embed(training);

    DiversityReport r;
    r.n_generated = n;
    r.k = k;
    r.assignment = assign_clusters(ge, te);
    for (const auto& members : r.assignment.members) {
        r.cluster_sizes.push_back(members.size());
        r.undersized.push_back(members.size() < 2);
        double sum = 0.0;
        std::size_t pairs = 0;
        for (std::size_t a = 0; a < members.size(); ++a)
            for (std::size_t b = a + 1; b < members.size(); ++b) {
                sum += embedding_distance(ge.row(members[a]), ge.row(members[b]));
                ++pairs;
            }
        r.per_cluster.push_back(pairs ? sum / static_cast<double>(pairs) : 0.0);
    }
    double mean = 0.0;
    for (double v : r.per_cluster) mean += v;
    mean /= static_cast<double>(k);
    double var = 0.0;
    for (double v : r.per_cluster) var += (v - mean) * (v - mean);
    r.intra_diversity = mean;
    r.std_over_clusters = std::sqrt(var / static_cast<double>(k));
    return r;
}

Tensor generate_images(const Generator& g, std::size_t count, std::uint64_t seed)
{
    Rng rng(seed);
    const std::size_t dim = g.config().latent_dim;
    Tensor z({count, dim});
    for (auto& v : z.data) v = standard_normal(rng);
    const std::size_t r = g.config().output_resolution;
    Tensor out({count, 3, r, r});
    for (std::size_t start = 0; start < count; start += kChunk) {
        const std::size_t stop = std::min(count, start + kChunk);
        const auto imgs = g.forward(z.slice_rows(start, stop)).images.value();
        std::copy(imgs.data.begin(), imgs.data.end(),
                  out.data.begin() + static_cast<std::ptrdiff_t>(start * out.row_size()));
    }
    return out;
}

DiversityReport intra_diversity(const Generator& g, const Tensor& training, std::size_t n, std::uint64_t seed)
{
    check_images(training);
    if (training.dim(2) != g.config().output_resolution)
        throw ShapeError("generator outputs " + std::to_string(g.config().output_resolution) +
                         "px, training samples are " + std::to_string(training.dim(2)) + "px");
    return intra_diversity_of_images(generate_images(g, n, seed), training);
}

FidReport frechet_distance(const Eigen::VectorXd& mu1, const Eigen::MatrixXd& cov1, const Eigen::VectorXd& mu2,
                           const Eigen::MatrixXd& cov2)
{
    const auto d = mu1.size();
    if (mu2.size() != d || cov1.rows() != d || cov1.cols() != d || cov2.rows() != d || cov2.cols() != d)
        throw ShapeError("Frechet distance needs moments of one dimension");
    FidReport r;
    r.dimension = static_cast<std::size_t>(d);
    Eigen::MatrixXd s1 = 0.5 * (cov1 + cov1.transpose());
    Eigen::MatrixXd s2 = 0.5 * (cov2 + cov2.transpose());
    if (rank_deficient(s1) || rank_deficient(s2)) {
        r.regularized = true;
        r.epsilon = kFidEpsilon;
        s1 += kFidEpsilon * Eigen::MatrixXd::Identity(d, d);
        s2 += kFidEpsilon * Eigen::MatrixXd::Identity(d, d);
    }
    const double cross = 0.5 * (trace_sqrt_product(s1, s2) + trace_sqrt_product(s2, s1));
    const double value = (mu1 - mu2).squaredNorm() + s1.trace() + s2.trace() - 2.0 * cross;
    r.value = std::max(value, 0.0);
    return r;
}

FidReport frechet_distance_of_features(const Tensor& real, const Tensor& fake)
{
    if (real.rank() != 2 || fake.rank() != 2 || real.dim(1) != fake.dim(1))
        throw ShapeError("feature matrices must be (N, D) with equal D, got " + shape_string(real.shape) + " and " +
                         shape_string(fake.shape));
    if (real.dim(0) < 2 || fake.dim(0) < 2) throw DomainError("desk_fid needs at least 2 images per side");
    Eigen::VectorXd mr, mf;
    Eigen::MatrixXd cr, cf;
    moments(real, mr, cr);
    moments(fake, mf, cf);
    auto r = frechet_distance(mr, cr, mf, cf);
    r.n_real = real.dim(0);
    r.n_fake = fake.dim(0);
    return r;
}

FidReport desk_fid(const Tensor& real_images, const Tensor& fake_images)
{
    check_images(real_images);
    check_images(fake_images);
    if (real_images.dim(2) != fake_images.dim(2)) throw ShapeError("desk_fid image resolutions differ");
    if (real_images.dim(0) < 2 || fake_images.dim(0) < 2) throw DomainError("desk_fid needs at least 2 images per side");
    const auto& fx = default_extractor();
    return frechet_distance_of_features(fx.pooled(real_images), fx.pooled(fake_images));
}

} // namespace fsgan
