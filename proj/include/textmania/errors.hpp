#pragma once

#include <stdexcept>
#include <string>

namespace textmania {

// Error hierarchy. Each category maps to one failure class surfaced by the
// CLI as a machine-readable {type, message} record.
struct Error : std::runtime_error {
  Error(std::string type, const std::string& msg)
      : std::runtime_error(msg), type_(std::move(type)) {}
  const std::string& type() const noexcept { return type_; }

 private:
  std::string type_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error("config", msg) {}
};

struct TemplateError : Error {
  explicit TemplateError(const std::string& msg) : Error("template", msg) {}
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& msg) : Error("shape", msg) {}
};

struct KeyError : Error {
  explicit KeyError(const std::string& msg) : Error("key", msg) {}
};

struct FormatError : Error {
  explicit FormatError(const std::string& msg) : Error("format", msg) {}
};

struct DataError : Error {
  explicit DataError(const std::string& msg) : Error("data", msg) {}
};

struct BackendError : Error {
  explicit BackendError(const std::string& msg) : Error("backend", msg) {}
};

struct InputError : Error {
  explicit InputError(const std::string& msg) : Error("input", msg) {}
};

}  // namespace textmania
