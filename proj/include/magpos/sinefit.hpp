#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "magpos/error.hpp"
#include "magpos/types.hpp"

namespace magpos {

/// Bases whose 2-norm condition number exceeds this are treated as rank deficient.
inline constexpr double kMaxBasisCondition = 1e10;

/// Known-frequency multi-tone sinefit basis.
///
/// The design matrix has one cosine and one sine column per tone, evaluated at t = n / fs
/// relative to the record start, followed by a single constant column for the shared DC
/// offset. It is factorized once (Householder QR) and reused for every record, so the
/// per-record cost is one orthogonal solve of an M x (2K+1) system.
class SinefitBasis {
 public:
  SinefitBasis(std::vector<double> frequencies, double sample_rate, std::size_t record_length)
      : frequencies_(std::move(frequencies)), sample_rate_(sample_rate), record_length_(record_length) {
    const std::size_t k = frequencies_.size();
    if (k == 0) throw Error(ErrorCode::kDomain, "sinefit needs at least one frequency");
    if (!(sample_rate_ > 0.0)) throw Error(ErrorCode::kDomain, "sample rate must be > 0");
    if (2 * k + 1 > record_length_)
      throw Error(ErrorCode::kDomain, "record of " + std::to_string(record_length_) + " samples cannot fit " +
                                          std::to_string(k) + " tones plus DC");
    for (double f : frequencies_) {
      if (!(f > 0.0) || !(f < 0.5 * sample_rate_))
        throw Error(ErrorCode::kDomain, "tone frequency " + std::to_string(f) + " Hz outside (0, fs/2)");
    }

    const Eigen::Index rows = static_cast<Eigen::Index>(record_length_);
    const Eigen::Index cols = static_cast<Eigen::Index>(2 * k + 1);
    design_.resize(rows, cols);
    for (Eigen::Index n = 0; n < rows; ++n) {
      const double t = static_cast<double>(n) / sample_rate_;
      for (std::size_t i = 0; i < k; ++i) {
        const double arg = 2.0 * std::numbers::pi * frequencies_[i] * t;
        design_(n, static_cast<Eigen::Index>(2 * i)) = std::cos(arg);
        design_(n, static_cast<Eigen::Index>(2 * i + 1)) = std::sin(arg);
      }
      design_(n, cols - 1) = 1.0;
    }

    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(design_);
    const auto& sv = svd.singularValues();
    condition_number_ = sv(sv.size() - 1) > 0.0 ? sv(0) / sv(sv.size() - 1)
                                                : std::numeric_limits<double>::infinity();
    if (!std::isfinite(condition_number_) || condition_number_ > kMaxBasisCondition) {
      throw Error(ErrorCode::kRankDeficient,
                  "sinefit design matrix is rank deficient (condition " + std::to_string(condition_number_) + ")");
    }
    qr_.compute(design_);
  }

  const std::vector<double>& frequencies() const { return frequencies_; }
  double sample_rate() const { return sample_rate_; }
  std::size_t record_length() const { return record_length_; }
  std::size_t tone_count() const { return frequencies_.size(); }
  double condition_number() const { return condition_number_; }
  const Eigen::MatrixXd& design_matrix() const { return design_; }

  /// Least-squares coefficients [c0 s0 c1 s1 ... dc] for a record.
  Eigen::VectorXd solve(const Eigen::VectorXd& samples) const { return qr_.solve(samples); }

 private:
  std::vector<double> frequencies_;
  double sample_rate_;
  std::size_t record_length_;
  Eigen::MatrixXd design_;
  Eigen::HouseholderQR<Eigen::MatrixXd> qr_;
  double condition_number_ = 0.0;
};

inline SinefitBasis build_basis(std::vector<double> frequencies, double sample_rate, std::size_t record_length) {
  return SinefitBasis(std::move(frequencies), sample_rate, record_length);
}

/// Fitted coefficients alongside the amplitude summary, for callers that need the raw solution.
struct SinefitSolution {
  Eigen::VectorXd coefficients;
  Eigen::VectorXd residual;
};

inline SinefitSolution fit_record(std::span<const double> samples, const SinefitBasis& basis) {
  if (samples.size() != basis.record_length()) {
    throw Error(ErrorCode::kDimensionMismatch, "record has " + std::to_string(samples.size()) +
                                                   " samples, basis expects " + std::to_string(basis.record_length()));
  }
  const Eigen::Map<const Eigen::VectorXd> s(samples.data(), static_cast<Eigen::Index>(samples.size()));
  SinefitSolution sol;
  sol.coefficients = basis.solve(s);
  if (!sol.coefficients.allFinite()) {
    throw Error(ErrorCode::kRankDeficient,
                "sinefit solve produced non-finite values (condition " + std::to_string(basis.condition_number()) + ")");
  }
  sol.residual = s - basis.design_matrix() * sol.coefficients;
  return sol;
}

/// Per-tone amplitudes sqrt(a^2 + b^2), shared DC and residual RMS for one record.
inline AmplitudeEstimate estimate_amplitudes(const SampleRecord& record, const SinefitBasis& basis,
                                             std::span<const std::string> anchor_ids) {
  if (anchor_ids.size() != basis.tone_count()) {
    throw Error(ErrorCode::kDimensionMismatch, std::to_string(anchor_ids.size()) + " anchor ids for " +
                                                   std::to_string(basis.tone_count()) + " tones");
  }
  const SinefitSolution sol = fit_record(record.samples, basis);
  AmplitudeEstimate est;
  for (std::size_t i = 0; i < anchor_ids.size(); ++i) {
    const double a = sol.coefficients(static_cast<Eigen::Index>(2 * i));
    const double b = sol.coefficients(static_cast<Eigen::Index>(2 * i + 1));
    est.per_anchor[anchor_ids[i]] = std::hypot(a, b);
  }
  est.dc = sol.coefficients(sol.coefficients.size() - 1);
  est.residual_rms = std::sqrt(sol.residual.squaredNorm() / static_cast<double>(sol.residual.size()));
  est.condition_number = basis.condition_number();
  return est;
}

}  // namespace magpos
