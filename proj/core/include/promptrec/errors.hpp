#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace promptrec {

/// Malformed input text; carries the 1-based line number.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Well-formed input that violates a domain invariant (rating bounds, feature membership, ...).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A metric or loss evaluated outside its domain (empty corpus, zero uncertainty weight).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class IntegrityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnsupportedVersionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Checkpoint and corpus disagree (vocabulary hash, id tables).
class CompatibilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NotFoundError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training hit a non-finite loss.
class TrainingAborted : public std::runtime_error {
 public:
  TrainingAborted(std::size_t epoch, std::size_t batch, const std::string& what)
      : std::runtime_error(what), epoch_(epoch), batch_(batch) {}
  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t batch() const noexcept { return batch_; }

 private:
  std::size_t epoch_;
  std::size_t batch_;
};

}  // namespace promptrec
