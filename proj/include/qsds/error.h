#pragma once

#include <stdexcept>
#include <string>

namespace qsds {

/// Malformed input: inconsistent dimensions, non-symmetric matrices, unordered
/// switching times.
class StructuralError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A scalar parameter outside its admissible range.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A query outside the region a partition or certificate was built for.
class OutOfRangeError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// A data invariant that construction should have ruled out.
class InvariantViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A sufficient condition of the analysis fails; carries the offending value.
class ConditionViolated : public std::runtime_error {
 public:
  ConditionViolated(const std::string& what, double value)
      : std::runtime_error(what), value_(value) {}
  double value() const { return value_; }

 private:
  double value_;
};

class SynthesisFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class RadiusInfeasible : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CertificateIncompatible : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnsupportedDimension : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace qsds
