// Copyright 2026 The milvae Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace milvae {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dimension or shape disagreement between tensors/layers.
class InvalidShapeError : public Error {
 public:
  using Error::Error;
};

// Out-of-range rate, count, or other configuration value.
class InvalidHyperparameterError : public Error {
 public:
  using Error::Error;
};

// A value fed to an operation violates its input contract (e.g. features
// outside [0,1] handed to the Bernoulli reconstruction loss).
class InvalidInputError : public Error {
 public:
  using Error::Error;
};

// backward() called without a recorded forward pass.
class NoGraphError : public Error {
 public:
  using Error::Error;
};

// Pair sampling is impossible (no negative bags / single-class data).
class UnsatisfiablePairingError : public Error {
 public:
  using Error::Error;
};

// Sample weighting requested before the calibration constant m exists.
class UncalibratedModelError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss; message names the epoch.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

// A classifier was asked to fit single-class data.
class DegenerateTrainingError : public Error {
 public:
  using Error::Error;
};

class EmptyBagError : public Error {
 public:
  using Error::Error;
};

class InvalidFoldError : public Error {
 public:
  using Error::Error;
};

// Base for everything raised while reading/writing external files; the CLI
// maps this family to exit code 2.
class DataError : public Error {
 public:
  using Error::Error;
};

class IoError : public DataError {
 public:
  using DataError::DataError;
};

class ParseError : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace milvae
