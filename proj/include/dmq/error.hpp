// Copyright 2026 The dmq Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace dmq {

// Error classes map one-to-one onto the C API status codes and the CLI exit
// codes (see dmq.h).
enum class ErrorKind {
  kArgument = 1,
  kConfig,
  kData,
  kNumericDivergence,
  kGenerator,
  kState,
  kCalibrationCoverage,
  kDegenerateProfile,
  kInsufficientData,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ArgumentError : public Error {
 public:
  explicit ArgumentError(const std::string& what)
      : Error(ErrorKind::kArgument, what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what)
      : Error(ErrorKind::kConfig, what) {}
};

// Malformed or unreadable files.
class DataError : public Error {
 public:
  explicit DataError(const std::string& what)
      : Error(ErrorKind::kData, what) {}
};

class TrainingDivergenceError : public Error {
 public:
  TrainingDivergenceError(int epoch, const std::string& what)
      : Error(ErrorKind::kNumericDivergence, what), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

class GeneratorError : public Error {
 public:
  GeneratorError(std::string aspect, const std::string& what)
      : Error(ErrorKind::kGenerator, what), aspect_(std::move(aspect)) {}
  const std::string& aspect() const noexcept { return aspect_; }

 private:
  std::string aspect_;
};

class StateError : public Error {
 public:
  explicit StateError(const std::string& what)
      : Error(ErrorKind::kState, what) {}
};

class CalibrationCoverageError : public Error {
 public:
  CalibrationCoverageError(std::string layer, const std::string& what)
      : Error(ErrorKind::kCalibrationCoverage, what), layer_(std::move(layer)) {}
  const std::string& layer() const noexcept { return layer_; }

 private:
  std::string layer_;
};

class DegenerateProfileError : public Error {
 public:
  explicit DegenerateProfileError(const std::string& what)
      : Error(ErrorKind::kDegenerateProfile, what) {}
};

class InsufficientDataError : public Error {
 public:
  explicit InsufficientDataError(const std::string& what)
      : Error(ErrorKind::kInsufficientData, what) {}
};

}  // namespace dmq
