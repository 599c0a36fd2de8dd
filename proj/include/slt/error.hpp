/* Copyright 2026 The SLT Baseline Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <stdexcept>
#include <string>

namespace slt {

/// Base of every error raised by the library. The CLI maps subclasses onto
/// exit codes (see `ErrorFamily`).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Usage / configuration family (CLI exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};
class ArgumentError : public Error {
 public:
  using Error::Error;
};
class DimensionError : public Error {
 public:
  using Error::Error;
};
class RankError : public Error {
 public:
  using Error::Error;
};
class VocabularyError : public Error {
 public:
  using Error::Error;
};
class CheckpointRequiredError : public Error {
 public:
  using Error::Error;
};
class PipelineOrderError : public Error {
 public:
  using Error::Error;
};

// Data-dependent numerical failures.
class EmptySequenceError : public Error {
 public:
  using Error::Error;
};
class EvaluationError : public Error {
 public:
  using Error::Error;
};
class InfeasibleError : public Error {
 public:
  using Error::Error;
};
class UndefinedError : public Error {
 public:
  using Error::Error;
};
class CorpusError : public Error {
 public:
  using Error::Error;
};

// Environment / IO family (CLI exit code 1).
class IoError : public Error {
 public:
  using Error::Error;
};
class ParseError : public Error {
 public:
  using Error::Error;
};
class CorruptionError : public Error {
 public:
  using Error::Error;
};
class UnsupportedVersionError : public Error {
 public:
  using Error::Error;
};

}  // namespace slt
