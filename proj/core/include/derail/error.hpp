#pragma once

#include <stdexcept>
#include <string>

namespace derail {

// Base for every error the library throws. `kind()` lets front ends map
// failures onto exit codes without string matching.
class Error : public std::runtime_error {
 public:
  enum class Kind { parse, schema, validation, shape, channel, config, vocabulary, io, divergence };

  Error(Kind kind, const std::string& message) : std::runtime_error(message), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

  // Input and configuration problems, as opposed to failures while running.
  bool is_user_error() const noexcept { return kind_ != Kind::io && kind_ != Kind::divergence; }

 private:
  Kind kind_;
};

class ParseError : public Error {
 public:
  explicit ParseError(const std::string& m) : Error(Kind::parse, m) {}
};

class SchemaError : public Error {
 public:
  explicit SchemaError(const std::string& m) : Error(Kind::schema, m) {}
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& m) : Error(Kind::validation, m) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& m) : Error(Kind::shape, m) {}
};

class ChannelUnavailable : public Error {
 public:
  explicit ChannelUnavailable(const std::string& m) : Error(Kind::channel, "channel unavailable: " + m) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& m) : Error(Kind::config, m) {}
};

class VocabularyError : public Error {
 public:
  explicit VocabularyError(const std::string& m) : Error(Kind::vocabulary, m) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& m) : Error(Kind::io, m) {}
};

class DivergenceError : public Error {
 public:
  explicit DivergenceError(const std::string& m) : Error(Kind::divergence, m) {}
};

}  // namespace derail
