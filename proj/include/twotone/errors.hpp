#pragma once

#include <stdexcept>
#include <string>

namespace twotone {

class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// linear algebra / response
class SingularMatrix : public Error { public: using Error::Error; };
class UnstableParameters : public Error { public: using Error::Error; };

// quadrature
class IntegrationFailure : public Error { public: using Error::Error; };
class PreconditionViolated : public Error { public: using Error::Error; };

// fitting
class NonConvergence : public Error { public: using Error::Error; };
class DegenerateSpectrum : public Error { public: using Error::Error; };
class DegenerateDesign : public Error { public: using Error::Error; };
class InsufficientBackgroundPoints : public Error { public: using Error::Error; };
class NegativePower : public Error { public: using Error::Error; };
class UnstableFitRegion : public Error { public: using Error::Error; };

class UnstableAtPhase : public Error {
  public:
    UnstableAtPhase(double phi, const std::string& what) : Error(what), phi_(phi) {}
    double phi() const { return phi_; }
  private:
    double phi_;
};

// sde
class StepTooLarge : public Error { public: using Error::Error; };
class NonStationarySegment : public Error { public: using Error::Error; };

// io
class ParseError : public Error {
  public:
    ParseError(int line, std::string key, const std::string& what)
        : Error(what), line_(line), key_(std::move(key)) {}
    int line() const { return line_; }
    const std::string& key() const { return key_; }
  private:
    int line_;
    std::string key_;
};

}  // namespace twotone
