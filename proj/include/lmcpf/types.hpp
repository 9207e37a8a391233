#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace lmcpf {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Failure modes a caller can act on. Everything derives from Error so CLI
// and bindings can map exceptions to stable code strings.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
  virtual const char* code() const noexcept { return "Error"; }
};

#define LMCPF_ERROR_CLASS(Name)                                   \
  class Name : public Error {                                     \
   public:                                                        \
    using Error::Error;                                           \
    const char* code() const noexcept override { return #Name; } \
  }

LMCPF_ERROR_CLASS(DimensionMismatch);
LMCPF_ERROR_CLASS(NotSymmetric);
LMCPF_ERROR_CLASS(NotPositiveDefinite);
LMCPF_ERROR_CLASS(AllWeightsZero);
LMCPF_ERROR_CLASS(WeightSumMismatch);
LMCPF_ERROR_CLASS(NonFiniteState);
LMCPF_ERROR_CLASS(IndexOutOfRange);
LMCPF_ERROR_CLASS(CoverageGap);
LMCPF_ERROR_CLASS(ConfigError);

#undef LMCPF_ERROR_CLASS

}  // namespace lmcpf
