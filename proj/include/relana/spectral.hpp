// Copyright 2026 The relana Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "relana/cooccur.hpp"

namespace relana::spectral {

enum class BasisSource : std::uint8_t { Embedding = 0, Relatedness = 1, Other = 2 };

struct SpectralBasis {
  Eigen::MatrixXd U;             // rows x r, orthonormal columns
  Eigen::VectorXd singular_values;  // descending
  BasisSource source = BasisSource::Other;

  Eigen::Index rank() const { return U.cols(); }
};

struct SvdOptions {
  std::size_t dense_limit = 2000;  // rows at or below use the dense SVD
  std::uint32_t power_iterations = 20;
  std::uint32_t oversampling = 8;
  std::uint64_t seed = 1;
  bool force_randomized = false;
};

/// Top-r left singular vectors of M.
SpectralBasis left_singular_basis(const Eigen::MatrixXd& M, Eigen::Index r, const SvdOptions& opts = {},
                                  BasisSource source = BasisSource::Other);

/// Randomized range finder with power iterations and QR re-orthonormalization.
SpectralBasis randomized_basis(const Eigen::MatrixXd& M, Eigen::Index r, const SvdOptions& opts = {});

/// Dense relatedness matrix for the SVD: negatives clipped to 0, missing pairs
/// and the diagonal set to 0.
Eigen::MatrixXd relatedness_matrix(const cooccur::RelatednessEstimate& est);

/// S = ||U_a^T U_b||_F^2, in [0, min(r_a, r_b)].
double alignment_score(const SpectralBasis& a, const SpectralBasis& b);

/// Largest principal angle between the two subspaces, in radians.
double max_principal_angle(const SpectralBasis& a, const SpectralBasis& b);

struct GeneralizationSim {
  Eigen::MatrixXd theta_covariance;  // r x r, r = rank of the X basis
  double noise_sigma = 0.1;
  double clamp = 10.0;  // loss inputs clamped to [-clamp, clamp]
  std::uint32_t trials = 200;
  std::uint64_t seed = 1;

  /// Lipschitz constant of the clamped soft-label logistic loss in both arguments.
  double lipschitz() const { return std::max(1.0, 0.25 * clamp); }
  void validate(Eigen::Index r) const;
};

struct GeneralizationReport {
  std::vector<double> gaps;  // per trial: loss(Z fit) - loss(X fit), both against y0
  double avg_gap = 0.0;
  double gap_se = 0.0;
  double alignment = 0.0;  // S(Z, X)
  double bound_value = 0.0;
  bool rank_deficient = false;  // Z basis dropped near-null directions
};

/// Soft-label logistic loss -[s(y) log s(f) + (1 - s(y)) log s(-f)] with both
/// inputs clamped.
double soft_logistic_loss(double f, double y, double clamp);

/// Monte-Carlo evaluation of the linear-model generalization gap between
/// features Z and X for labels y = U(X) theta + eps, plus the closed-form bound
/// L sqrt((tr Sigma - lambda_min(Sigma) S) / |I|) + 2 L sigma.
GeneralizationReport simulate_generalization(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Z,
                                             const GeneralizationSim& sim);

/// The bound alone.
double generalization_bound(const Eigen::MatrixXd& sigma, double alignment, std::size_t num_items, double lipschitz,
                            double noise_sigma);

/// Spearman rank correlation (average ranks for ties).
double spearman(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace relana::spectral
