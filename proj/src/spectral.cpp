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

#include "relana/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "relana/error.hpp"
#include "relana/rng.hpp"

namespace relana::spectral {

namespace {

Eigen::MatrixXd orthonormalize(const Eigen::MatrixXd& Y) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(Y);
  return qr.householderQ() * Eigen::MatrixXd::Identity(Y.rows(), Y.cols());
}

void check_rank(const Eigen::MatrixXd& M, Eigen::Index r) {
  if (r < 1 || r > std::min(M.rows(), M.cols())) {
    throw ValidationError("rank " + std::to_string(r) + " out of range for a " + std::to_string(M.rows()) + "x" +
                          std::to_string(M.cols()) + " matrix");
  }
}

}  // namespace

SpectralBasis randomized_basis(const Eigen::MatrixXd& M, Eigen::Index r, const SvdOptions& opts) {
  check_rank(M, r);
  const Eigen::Index k = std::min<Eigen::Index>(r + opts.oversampling, std::min(M.rows(), M.cols()));
  Rng rng(derive_seed(opts.seed, "randomized-svd"));
  Eigen::MatrixXd omega(M.cols(), k);
  for (Eigen::Index c = 0; c < k; ++c) {
    for (Eigen::Index i = 0; i < M.cols(); ++i) omega(i, c) = standard_normal(rng);
  }
  Eigen::MatrixXd Q = orthonormalize(M * omega);
  for (std::uint32_t it = 0; it < opts.power_iterations; ++it) {
    const Eigen::MatrixXd W = orthonormalize(M.transpose() * Q);
    Q = orthonormalize(M * W);
  }
  const Eigen::MatrixXd B = Q.transpose() * M;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(B, Eigen::ComputeThinU);
  SpectralBasis out;
  out.U = Q * svd.matrixU().leftCols(r);
  out.singular_values = svd.singularValues().head(r);
  return out;
}

SpectralBasis left_singular_basis(const Eigen::MatrixXd& M, Eigen::Index r, const SvdOptions& opts,
                                  BasisSource source) {
  check_rank(M, r);
  if (!M.allFinite()) throw ValidationError("matrix for the SVD has non-finite entries");
  SpectralBasis out;
  if (opts.force_randomized || static_cast<std::size_t>(M.rows()) > opts.dense_limit) {
    out = randomized_basis(M, r, opts);
  } else {
    Eigen::BDCSVD<Eigen::MatrixXd> svd(M, Eigen::ComputeThinU);
    out.U = svd.matrixU().leftCols(r);
    out.singular_values = svd.singularValues().head(r);
  }
  out.source = source;
  return out;
}

Eigen::MatrixXd relatedness_matrix(const cooccur::RelatednessEstimate& est) {
  Eigen::MatrixXd m = est.dense(0.0);
  m = m.cwiseMax(0.0);
  m.diagonal().setZero();
  return m;
}

double alignment_score(const SpectralBasis& a, const SpectralBasis& b) {
  if (a.U.rows() != b.U.rows()) throw ValidationError("alignment: bases have different row counts");
  return (a.U.transpose() * b.U).squaredNorm();
}

double max_principal_angle(const SpectralBasis& a, const SpectralBasis& b) {
  if (a.U.rows() != b.U.rows()) throw ValidationError("principal angle: bases have different row counts");
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a.U.transpose() * b.U);
  const double smallest = svd.singularValues().minCoeff();
  return std::acos(std::clamp(smallest, -1.0, 1.0));
}

// Generalization simulation -----------------------------------------------

void GeneralizationSim::validate(Eigen::Index r) const {
  if (theta_covariance.rows() != r || theta_covariance.cols() != r) {
    throw ValidationError("theta covariance must be " + std::to_string(r) + "x" + std::to_string(r));
  }
  if (!theta_covariance.isApprox(theta_covariance.transpose(), 1e-12)) throw ValidationError("theta covariance must be symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(theta_covariance);
  if (es.eigenvalues().minCoeff() < -1e-12) throw ValidationError("theta covariance must be positive semidefinite");
  if (!(noise_sigma >= 0.0)) throw ValidationError("noise sigma must be >= 0");
  if (!(clamp > 0.0)) throw ValidationError("clamp must be > 0");
  if (trials < 1) throw ValidationError("trials must be >= 1");
}

double soft_logistic_loss(double f, double y, double clamp) {
  f = std::clamp(f, -clamp, clamp);
  y = std::clamp(y, -clamp, clamp);
  auto log_sig = [](double x) { return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); };
  const double s = 1.0 / (1.0 + std::exp(-y));
  return -(s * log_sig(f) + (1.0 - s) * log_sig(-f));
}

double generalization_bound(const Eigen::MatrixXd& sigma, double alignment, std::size_t num_items, double lipschitz,
                            double noise_sigma) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma);
  const double lambda_min = std::max(0.0, es.eigenvalues().minCoeff());
  const double radicand = std::max(0.0, sigma.trace() - lambda_min * alignment) / static_cast<double>(num_items);
  return lipschitz * std::sqrt(radicand) + 2.0 * lipschitz * noise_sigma;
}

namespace {

// Orthonormal basis of the column space, dropping near-null directions.
Eigen::MatrixXd column_basis(const Eigen::MatrixXd& A, bool& deficient) {
  Eigen::BDCSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinU);
  const auto& s = svd.singularValues();
  const double tol = s.size() > 0 ? s(0) * 1e-10 * static_cast<double>(std::max(A.rows(), A.cols())) : 0.0;
  Eigen::Index rank = 0;
  while (rank < s.size() && s(rank) > tol) ++rank;
  deficient = deficient || rank < A.cols();
  return svd.matrixU().leftCols(rank);
}

}  // namespace

GeneralizationReport simulate_generalization(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Z,
                                             const GeneralizationSim& sim) {
  if (X.rows() != Z.rows()) throw ValidationError("generalization: X and Z need the same number of rows");
  const Eigen::Index r = sim.theta_covariance.rows();
  sim.validate(r);
  GeneralizationReport rep;
  const SpectralBasis bx = left_singular_basis(X, r, {}, BasisSource::Relatedness);
  const Eigen::MatrixXd ux_fit = column_basis(X, rep.rank_deficient);
  const Eigen::MatrixXd uz = column_basis(Z, rep.rank_deficient);
  SpectralBasis bz;
  bz.U = uz;
  rep.alignment = alignment_score(bx, bz);

  const Eigen::LLT<Eigen::MatrixXd> chol(sim.theta_covariance + 1e-14 * Eigen::MatrixXd::Identity(r, r));
  const Eigen::MatrixXd L = chol.matrixL();
  const Eigen::Index n = X.rows();
  Eigen::VectorXd g(r), eps(n);
  for (std::uint32_t t = 0; t < sim.trials; ++t) {
    Rng rng(derive_seed(sim.seed, t, 0x7e57));
    for (Eigen::Index c = 0; c < r; ++c) g(c) = standard_normal(rng);
    for (Eigen::Index c = 0; c < n; ++c) eps(c) = sim.noise_sigma * standard_normal(rng);
    const Eigen::VectorXd y0 = bx.U * (L * g);
    const Eigen::VectorXd y = y0 + eps;
    const Eigen::VectorXd fit_z = uz * (uz.transpose() * y);
    const Eigen::VectorXd fit_x = ux_fit * (ux_fit.transpose() * y);
    double lz = 0.0, lx = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      lz += soft_logistic_loss(fit_z(i), y0(i), sim.clamp);
      lx += soft_logistic_loss(fit_x(i), y0(i), sim.clamp);
    }
    rep.gaps.push_back((lz - lx) / static_cast<double>(n));
  }
  const double m = std::accumulate(rep.gaps.begin(), rep.gaps.end(), 0.0) / static_cast<double>(rep.gaps.size());
  double var = 0.0;
  for (double v : rep.gaps) var += (v - m) * (v - m);
  rep.avg_gap = m;
  rep.gap_se = rep.gaps.size() > 1 ? std::sqrt(var / static_cast<double>(rep.gaps.size() - 1) /
                                               static_cast<double>(rep.gaps.size()))
                                   : 0.0;
  rep.bound_value = generalization_bound(sim.theta_covariance, rep.alignment, static_cast<std::size_t>(n),
                                         sim.lipschitz(), sim.noise_sigma);
  return rep;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw ValidationError("spearman needs two equal-length samples of size >= 2");
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) { return v[x] < v[y]; });
    std::vector<double> r(v.size());
    for (std::size_t s = 0; s < idx.size();) {
      std::size_t e = s;
      while (e + 1 < idx.size() && v[idx[e + 1]] == v[idx[s]]) ++e;
      const double avg = 0.5 * static_cast<double>(s + e) + 1.0;
      for (std::size_t q = s; q <= e; ++q) r[idx[q]] = avg;
      s = e + 1;
    }
    return r;
  };
  const auto ra = ranks(a), rb = ranks(b);
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / static_cast<double>(ra.size());
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / static_cast<double>(rb.size());
  double num = 0.0, da = 0.0, db = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    num += (ra[i] - ma) * (rb[i] - mb);
    da += (ra[i] - ma) * (ra[i] - ma);
    db += (rb[i] - mb) * (rb[i] - mb);
  }
  if (da == 0.0 || db == 0.0) return 0.0;
  return num / std::sqrt(da * db);
}

}  // namespace relana::spectral
