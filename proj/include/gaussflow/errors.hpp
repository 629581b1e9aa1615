// Copyright 2026 the gaussflow authors
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

#ifndef GAUSSFLOW_ERRORS_HPP
#define GAUSSFLOW_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace gaussflow {

/// Base class for all errors raised by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// A matrix square root was requested for a matrix whose spectrum touches the
/// closed negative real axis (no principal root exists), or the Schur
/// iteration failed to converge.
class SqrtDomainError : public Error {
 public:
  explicit SqrtDomainError(const std::string& what) : Error("sqrt-domain: " + what) {}
};

/// The Sylvester equation AX + XB = C is singular (A and -B share an
/// eigenvalue) or numerically too close to singular to solve.
class SylvesterSingularError : public Error {
 public:
  explicit SylvesterSingularError(const std::string& what) : Error("sylvester-singular: " + what) {}
};

/// A covariance argument failed a symmetry / positive-definiteness check.
class NotSpdError : public Error {
 public:
  explicit NotSpdError(const std::string& what) : Error("not-spd: " + what) {}
};

/// An observation function (or one of its derivatives) was evaluated outside
/// its domain, e.g. the radial norm at the origin.
class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what) : Error("domain: " + what) {}
};

/// Every particle in a weighted set carries zero weight, so no normalized
/// quantity (ESS, resampling distribution, estimate) is defined.
class DegenerateSampleError : public Error {
 public:
  explicit DegenerateSampleError(const std::string& what) : Error("degenerate-sample: " + what) {}
};

/// A run configuration failed validation; the message carries the offending
/// field path.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error("config: " + what) {}
};

}  // namespace gaussflow

#endif  // GAUSSFLOW_ERRORS_HPP
