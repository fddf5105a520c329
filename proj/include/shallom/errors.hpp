#ifndef SHALLOM_ERRORS_HPP
#define SHALLOM_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace shallom {

/// Base class for every error raised by the library. `category()` is a short
/// machine-parsable tag that the CLI prints and maps to an exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* category() const noexcept { return "internal"; }
};

class ParseError : public Error {
 public:
  ParseError(std::string source, std::size_t line, const std::string& what)
      : Error(source + ":" + std::to_string(line) + ": " + what),
        source_(std::move(source)),
        line_(line) {}
  const char* category() const noexcept override { return "parse"; }
  const std::string& source() const noexcept { return source_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string source_;
  std::size_t line_;
};

/// A label that is absent from the training vocabulary.
class OovError : public Error {
 public:
  OovError(std::string label, const std::string& split)
      : Error("label '" + label + "' in split '" + split + "' is not in the training vocabulary"),
        label_(std::move(label)) {}
  const char* category() const noexcept override { return "oov"; }
  const std::string& label() const noexcept { return label_; }

 private:
  std::string label_;
};

class NumericError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "numeric"; }
};

class ConfigError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "config"; }
};

class IoError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "io"; }
};

class ShapeError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "shape"; }
};

}  // namespace shallom

#endif  // SHALLOM_ERRORS_HPP
