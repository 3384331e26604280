#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace dpmine {

using Index = Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Row-major point cloud: one point per row.
using Points = Eigen::MatrixXd;

enum class ErrorCode {
  EmptyDataset,
  DimensionMismatch,
  SamplerFailure,
  InvalidEpsilon,
  TruncationCapExceeded,
  EmptyGrid,
  NonScalarOutput,
  NonFiniteGradient,
  TooFewPairs,
  EmptySample,
  DivergedTraining,
  InvalidVariance,
  InvalidPMF,
  NumericalDegeneracy,
  InvalidWindow,
  InvalidArgument,
  SchemaError,
  IoError,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::SamplerFailure: return "SamplerFailure";
    case ErrorCode::InvalidEpsilon: return "InvalidEpsilon";
    case ErrorCode::TruncationCapExceeded: return "TruncationCapExceeded";
    case ErrorCode::EmptyGrid: return "EmptyGrid";
    case ErrorCode::NonScalarOutput: return "NonScalarOutput";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::TooFewPairs: return "TooFewPairs";
    case ErrorCode::EmptySample: return "EmptySample";
    case ErrorCode::DivergedTraining: return "DivergedTraining";
    case ErrorCode::InvalidVariance: return "InvalidVariance";
    case ErrorCode::InvalidPMF: return "InvalidPMF";
    case ErrorCode::NumericalDegeneracy: return "NumericalDegeneracy";
    case ErrorCode::InvalidWindow: return "InvalidWindow";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// Library error. `detail` carries the integer payload some codes define
/// (epoch index for DivergedTraining, cap for TruncationCapExceeded,
/// parameter index for NonFiniteGradient).
class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string &message,
        std::optional<std::int64_t> detail = std::nullopt)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code), detail_(detail) {}

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }
  [[nodiscard]] std::optional<std::int64_t> detail() const noexcept { return detail_; }

private:
  ErrorCode code_;
  std::optional<std::int64_t> detail_;
};

inline void require(bool condition, ErrorCode code, const std::string &message) {
  if (!condition) throw Error(code, message);
}

/// Uniform weights 1/n.
inline VectorXd uniform_weights(Index n) {
  return VectorXd::Constant(n, 1.0 / static_cast<double>(n));
}

/// Weights are a probability vector within `tol`.
template <typename Derived>
bool is_probability_vector(const Eigen::MatrixBase<Derived> &w, double tol = 1e-12) {
  if (w.size() == 0) return false;
  if ((w.array() < 0.0).any() || !w.allFinite()) return false;
  return std::abs(w.sum() - 1.0) <= tol;
}

} // namespace dpmine
