#pragma once

#include <stdexcept>
#include <string>

namespace mlve {

/// Base class for every numerical or combinatorial failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class BranchCut : public Error {
 public:
  using Error::Error;
};

class PoleHit : public Error {
 public:
  using Error::Error;
};

class QuadratureNoConverge : public Error {
 public:
  using Error::Error;
};

class CubatureNoConverge : public Error {
 public:
  using Error::Error;
};

class NotPSD : public Error {
 public:
  using Error::Error;
};

class CapExceeded : public Error {
 public:
  using Error::Error;
};

class DegeneratePade : public Error {
 public:
  using Error::Error;
};

class UnbalancedMonomial : public Error {
 public:
  using Error::Error;
};

class OrderTooHigh : public Error {
 public:
  using Error::Error;
};

class IllConditioned : public Error {
 public:
  using Error::Error;
};

class BoundViolated : public Error {
 public:
  using Error::Error;
};

}  // namespace mlve
