#pragma once

// Diversity and distribution-distance metrics built on a fixed, seeded random-weight
// convolutional feature extractor.

#include "fsgan/nets.hpp"
#include "fsgan/tensor.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <vector>

namespace fsgan {

inline constexpr std::uint64_t kExtractorSeed = 0x5eed'f00d;
inline constexpr std::size_t kExtractorDepths = 3;

/// Three conv3x3 + leaky ReLU + avgpool stages with 8, 16 and 32 channels.
class FeatureExtractor {
public:
    explicit FeatureExtractor(std::uint64_t seed = kExtractorSeed);

    /// Per-depth activations of (N, 3, R, R) images, each (N, C, r, r), not normalized.
    std::vector<Tensor> activations(const Tensor& images) const;

    /// (N, D) embedding whose squared Euclidean distance is the perceptual distance:
    /// channel vectors unit-normalized per location, weighted by 1/sqrt(depths * locations).
    Tensor embed(const Tensor& images) const;

    /// (N, 56) globally pooled unit-normalized activations of all depths, used for desk_fid.
    Tensor pooled(const Tensor& images) const;

    const std::vector<std::size_t>& channels() const { return channels_; }

private:
    std::vector<std::size_t> channels_{8, 16, 32};
    std::vector<Tensor> weights_, biases_;
};

/// Shared default extractor.
const FeatureExtractor& default_extractor();

/// Distance between two (3, R, R) or (1, 3, R, R) images. Throws ShapeError on mismatch.
double perceptual_distance(const Tensor& a, const Tensor& b);

/// Squared Euclidean distance between two embedding rows.
double embedding_distance(std::span<const double> a, std::span<const double> b);

struct ClusterAssignment {
    std::vector<std::size_t> cluster;              // per generated image
    std::vector<std::vector<std::size_t>> members; // per training sample
};

/// Nearest training sample (lowest index on ties) for every generated embedding row.
ClusterAssignment assign_clusters(const Tensor& generated_embedding, const Tensor& training_embedding);

struct DiversityReport {
    double intra_diversity = 0.0;
    double std_over_clusters = 0.0;
    std::vector<double> per_cluster;
    std::vector<std::size_t> cluster_sizes;
    /// Clusters with fewer than two members; they contribute 0.
    std::vector<bool> undersized;
    std::size_t n_generated = 0;
    std::size_t k = 0;
    ClusterAssignment assignment;
};

/// Diversity of already generated images against k training samples.
DiversityReport intra_diversity_of_images(const Tensor& generated, const Tensor& training_samples);

/// Samples n_generated images from fixed noise under `seed` and reports their diversity.
DiversityReport intra_diversity(const Generator& generator, const Tensor& training_samples, std::size_t n_generated,
                                std::uint64_t seed);

/// Images from `count` standard-normal latents drawn under `seed`, generated in batches.
Tensor generate_images(const Generator& generator, std::size_t count, std::uint64_t seed);

inline constexpr double kFidEpsilon = 1e-6;

struct FidReport {
    double value = 0.0;
    /// Set when a covariance was rank-deficient and epsilon * I was added to both.
    bool regularized = false;
    double epsilon = 0.0;
    std::size_t n_real = 0;
    std::size_t n_fake = 0;
    std::size_t dimension = 0;
};

/// ||mu1 - mu2||^2 + tr(S1 + S2 - 2 (S1 S2)^{1/2}) for explicit moments.
FidReport frechet_distance(const Eigen::VectorXd& mu1, const Eigen::MatrixXd& cov1, const Eigen::VectorXd& mu2,
                           const Eigen::MatrixXd& cov2);

/// Fits Gaussians to (N, D) feature rows and compares them.
FidReport frechet_distance_of_features(const Tensor& real_features, const Tensor& fake_features);

/// Fréchet distance of pooled extractor features. Needs at least 2 images per side.
FidReport desk_fid(const Tensor& real_images, const Tensor& fake_images);

} // namespace fsgan
