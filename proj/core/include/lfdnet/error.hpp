#pragma once

#include <stdexcept>
#include <string>

namespace lfdnet {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input bytes (mesh files, images, checkpoints, model files, CSV).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A value violates a documented precondition or invariant.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Invalid or inconsistent configuration (CLI exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A required upstream artifact does not exist (CLI exit code 3).
class MissingArtifact : public Error {
 public:
  explicit MissingArtifact(std::string path)
      : Error("missing artifact: " + path), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

}  // namespace lfdnet
