#ifndef DTLAB_CKA_HPP
#define DTLAB_CKA_HPP

#include <string>
#include <vector>

#include "dtlab/transformer.hpp"

namespace dtlab {

enum class CkaEstimator { kBiased, kUnbiased };

struct CkaResult {
  std::string layer_name;
  double value = 0.0;
  CkaEstimator estimator = CkaEstimator::kUnbiased;
  int n_samples = 0;
};

// CKA = HSIC(K, L) / sqrt(HSIC(K, K) * HSIC(L, L)) with the biased HSIC
// (double centering). K, L are symmetric m x m gram matrices.
double cka_from_gram(const Matrix& gram_k, const Matrix& gram_l);

// ||Yc' Xc||_F^2 / (||Xc' Xc||_F ||Yc' Yc||_F) on column-centered features.
// Algebraically equal to cka_from_gram on linear grams.
double linear_cka(const Matrix& x, const Matrix& y);

// U-statistic HSIC on linear grams, normalized. Slightly negative values are
// possible at small n. Requires n >= 4.
double unbiased_linear_cka(const Matrix& x, const Matrix& y);

namespace cka_detail {
// Vectorized unbiased HSIC and the direct O(n^2) summation form; the pair is
// cross-checked in tests.
double unbiased_hsic(const Matrix& gram_k, const Matrix& gram_l);
double unbiased_hsic_reference(const Matrix& gram_k, const Matrix& gram_l);
}  // namespace cka_detail

enum class TokenType { kRtg, kState, kAction };

const char* token_type_name(TokenType t);

// Sequence position of the last context step's token: rtg 3K-3, state 3K-2,
// action 3K-1.
int last_step_token_position(TokenType type, int context_K);

ActivationRecord slice_activation(const LayerCapture& capture,
                                  int token_position);

// One record per captured layer, sliced at the last context step.
std::vector<ActivationRecord> slice_activations(
    const std::vector<LayerCapture>& captures, TokenType type, int context_K);

// Runs the model on full-history windows and returns the per-layer captures
// (block_layer_inventory order).
std::vector<LayerCapture> capture_activations(const Checkpoint& ckpt,
                                              const Dataset& dataset,
                                              int n_samples, int context_K,
                                              Rng& rng);

// Per-layer CKA between two matched activation inventories.
std::vector<CkaResult> layerwise_cka_profile(
    const std::vector<ActivationRecord>& model_a,
    const std::vector<ActivationRecord>& model_b,
    CkaEstimator estimator = CkaEstimator::kUnbiased);

// Pairwise-averages a profile from a model with 2L blocks onto an L-block
// axis: per capture-layer type, adjacent block pairs are averaged. Result
// names use the L-block inventory.
std::vector<CkaResult> align_profile_to_half_depth(
    const std::vector<CkaResult>& profile);

// L x L CKA of a single model's layers (or A-layers x B-layers when two
// inventories are given).
Matrix cross_layer_cka_matrix(const std::vector<ActivationRecord>& acts,
                              CkaEstimator estimator = CkaEstimator::kUnbiased);
Matrix cross_model_cka_matrix(const std::vector<ActivationRecord>& model_a,
                              const std::vector<ActivationRecord>& model_b,
                              CkaEstimator estimator = CkaEstimator::kUnbiased);

std::vector<std::string> layers_above_threshold(
    const std::vector<CkaResult>& profile, double threshold);

}  // namespace dtlab

#endif
