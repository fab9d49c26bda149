// Copyright 2026 The pamcl Authors
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

namespace pamcl {

/// Base class for all pamcl errors.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent configuration values.
class ConfigError : public Error {
public:
  using Error::Error;
};

/// Bad runtime inputs (wrong dims, empty batches, NaN data...).
class InputError : public Error {
public:
  using Error::Error;
};

/// Model topology mismatches (checkpoint vs variant, plan vs module...).
class StructuralError : public Error {
public:
  using Error::Error;
};

/// Violations of the incremental protocol (class overlap, unseen test classes).
class ProtocolError : public Error {
public:
  using Error::Error;
};

/// Operations issued against a state that cannot serve them.
class StateError : public Error {
public:
  using Error::Error;
};

/// Dataset / checkpoint loading failures.
class IngestionError : public Error {
public:
  using Error::Error;
};

}  // namespace pamcl
