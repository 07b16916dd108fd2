#ifndef UQBENCH_ERRORS_HPP
#define UQBENCH_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace uqbench {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller-supplied argument or configuration violates a documented precondition.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public InvalidArgument {
 public:
  DimensionMismatch(const std::string& what, std::size_t expected, std::size_t got)
      : InvalidArgument(what + ": expected " + std::to_string(expected) + ", got " +
                        std::to_string(got)) {}
};

class NonHermitianKernel : public Error {
 public:
  using Error::Error;
};

/// The MMT integrator left the stable regime. `time` is when max|u| crossed the threshold.
class BlowUp : public Error {
 public:
  BlowUp(double time, double amplitude)
      : Error("MMT blow-up at t=" + std::to_string(time) +
              " (max|u|=" + std::to_string(amplitude) + ")"),
        time_(time),
        amplitude_(amplitude) {}
  double time() const noexcept { return time_; }
  double amplitude() const noexcept { return amplitude_; }

 private:
  double time_;
  double amplitude_;
};

/// Too many rows of a generated batch blew up.
class BlowUpBudgetExceeded : public Error {
 public:
  using Error::Error;
};

class InsufficientRows : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

class FormatVersionMismatch : public Error {
 public:
  using Error::Error;
};

class CorruptFile : public Error {
 public:
  using Error::Error;
};

class CholeskyFailure : public Error {
 public:
  using Error::Error;
};

class AllStartsFailed : public Error {
 public:
  using Error::Error;
};

class DivergedLoss : public Error {
 public:
  using Error::Error;
};

class DegenerateEnsemble : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

class ZeroUncertainty : public Error {
 public:
  using Error::Error;
};

class NoEpistemicUQ : public Error {
 public:
  using Error::Error;
};

}  // namespace uqbench

#endif  // UQBENCH_ERRORS_HPP
