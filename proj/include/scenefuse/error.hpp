// Copyright 2026 The scenefuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace scenefuse {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid hyper-parameters or shapes handed to an operation.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// The point cloud has no points left after range filtering.
class EmptySceneError : public Error {
 public:
  using Error::Error;
};

/// Attention over an empty key set.
class EmptyAttentionError : public Error {
 public:
  using Error::Error;
};

/// Rejection sampling of non-overlapping boxes gave up.
class SceneGenerationError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss component.
class NonFiniteLossError : public Error {
 public:
  NonFiniteLossError(const std::string& component, int step)
      : Error("non-finite loss component '" + component + "' at step " + std::to_string(step)),
        component_(component) {}
  const std::string& component() const { return component_; }

 private:
  std::string component_;
};

// On-disk container errors. Each failure mode has its own type so callers
// (and tests) can tell them apart.
class FormatError : public Error {
 public:
  using Error::Error;
};

class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

class ChecksumError : public FormatError {
 public:
  ChecksumError(const std::string& file, const std::string& detail)
      : FormatError("checksum mismatch in '" + file + "': " + detail), file_(file) {}
  const std::string& file() const { return file_; }

 private:
  std::string file_;
};

class TruncatedArrayError : public FormatError {
 public:
  using FormatError::FormatError;
};

class ShapeMismatchError : public FormatError {
 public:
  using FormatError::FormatError;
};

}  // namespace scenefuse
