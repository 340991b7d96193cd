#pragma once

#include <stdexcept>
#include <string>

namespace gridsweep {

/// Invalid input parameters (negative sigma, bad geometry, ...).
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed config, scenario or CSV input. Carries the offending line when known.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, int line = 0)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

/// Sample with fewer than two distinct values where a spread is required.
class DegenerateSample : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Value outside the support of the requested law (e.g. nonpositive Weibull data).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// The discrete-event simulator ran past its horizon with work still pending.
class SimulationStall : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Two atoms came closer than half the pair-potential length scale.
class MdBlowUp : public std::runtime_error {
 public:
  MdBlowUp(const std::string& what, double strain)
      : std::runtime_error(what), strain_(strain) {}
  double strain() const noexcept { return strain_; }

 private:
  double strain_;
};

}  // namespace gridsweep
