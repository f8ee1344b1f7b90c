/*
 * Copyright 2026 The lungseg Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include <stdexcept>
#include <string>

namespace lungseg {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or image dimensions that do not fit the operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A configuration value violating a documented constraint.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// File system failures and malformed files.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Failures during optimization (non-finite loss, unreadable samples).
class TrainError : public Error {
 public:
  using Error::Error;
};

}  // namespace lungseg
