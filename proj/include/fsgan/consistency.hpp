#pragma once

// Cross-domain consistency: each batch member's softmax distribution of cosine
// similarities to the other members, compared between the frozen source network
// and the adapted target network with KL(target || source).

#include "fsgan/autograd.hpp"
#include "fsgan/nets.hpp"

#include <map>
#include <span>
#include <vector>

namespace fsgan {

enum class DomainTag { source, target };
enum class NetworkTag { generator, discriminator };

struct SimilarityDistribution {
    std::vector<double> probabilities;
    std::size_t anchor_index = 0;
    std::size_t layer = 0;
    DomainTag domain = DomainTag::source;
    NetworkTag network = NetworkTag::generator;
};

/// (B, ...) activations, each row flattened, to the symmetric (B, B) cosine matrix.
/// Throws DegenerateInputError for a zero-norm row and DomainError for B < 2.
Tensor pairwise_cosine(const Tensor& activations);

/// Temperature-1 softmax over the similarities of one anchor to the K other members.
SimilarityDistribution similarity_distribution(std::span<const double> similarities, std::size_t anchor_index = 0,
                                               std::size_t layer = 0, DomainTag domain = DomainTag::source,
                                               NetworkTag network = NetworkTag::generator);

/// KL(p_target || p_source); zero-probability target entries contribute nothing.
double kl_divergence(std::span<const double> p_target, std::span<const double> p_source);

/// Mean over anchors i of KL(p_i^target || p_i^source) for one tap, differentiable in both inputs.
Var consistency_kl(const Var& target_activations, const Var& source_activations);

struct CdcTerm {
    Var loss;
    std::map<std::size_t, double> per_layer;
};

/// Sums consistency_kl over `taps` present in both maps.
CdcTerm cdc_from_taps(const std::map<std::size_t, Var>& target, const std::map<std::size_t, Var>& source,
                      std::span<const std::size_t> taps);

/// Same latents through both generators; differentiable in the target generator only.
CdcTerm generator_cdc(const ModelPair& models, const Tensor& z, std::span<const std::size_t> generator_taps);

/// Source discriminator on source images vs target discriminator on target images, no masking.
CdcTerm discriminator_cdc(const ModelPair& models, const Tensor& z, std::span<const std::size_t> discriminator_taps);

struct CdcLossReport {
    double generator_loss = 0.0;
    double discriminator_loss = 0.0;
    std::map<std::size_t, double> generator_terms;
    std::map<std::size_t, double> discriminator_terms;
};

CdcLossReport cdc_report(const ModelPair& models, const Tensor& z, const FeatureTapSet& taps);

} // namespace fsgan
