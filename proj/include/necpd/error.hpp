#ifndef NECPD_ERROR_HPP
#define NECPD_ERROR_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace necpd {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidMode : public Error {
 public:
  using Error::Error;
};

class InvalidShape : public Error {
 public:
  using Error::Error;
};

class InvalidInput : public Error {
 public:
  using Error::Error;
};

class RankTooLarge : public Error {
 public:
  using Error::Error;
};

/// A solver step produced a non-finite factor entry.
class Divergence : public Error {
 public:
  Divergence(std::size_t mode, const std::string& what)
      : Error(what), mode_(mode) {}

  std::size_t mode() const noexcept { return mode_; }

 private:
  std::size_t mode_;
};

}  // namespace necpd

#endif  // NECPD_ERROR_HPP
