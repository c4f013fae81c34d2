// SPDX-License-Identifier: Apache-2.0
//
// dmasense: DMA transmit beamforming for bistatic multi-target sensing
// Copyright (C) 2026 The dmasense authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#ifndef DMASENSE_CORE_HPP
#define DMASENSE_CORE_HPP

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>

namespace dmasense
{

using cplx = std::complex<double>;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;
using Vec3 = Eigen::Vector3d;

inline constexpr double kSpeedOfLight = 299792458.0;
inline constexpr double kVacuumPermittivity = 8.8541878128e-12;
inline constexpr double kPi = std::numbers::pi;
inline constexpr cplx kJ{0.0, 1.0};

enum class ErrorKind
{
    invalid_argument,
    invalid_geometry,
    singular_configuration,
    ill_conditioned,
    parse_error,
    validation_error,
    solver_failure,
    incompatible_scenario,
    io_error
};

inline const char *to_string(ErrorKind kind)
{
    switch (kind)
    {
    case ErrorKind::invalid_argument: return "invalid_argument";
    case ErrorKind::invalid_geometry: return "invalid_geometry";
    case ErrorKind::singular_configuration: return "singular_configuration";
    case ErrorKind::ill_conditioned: return "ill_conditioned";
    case ErrorKind::parse_error: return "parse_error";
    case ErrorKind::validation_error: return "validation_error";
    case ErrorKind::solver_failure: return "solver_failure";
    case ErrorKind::incompatible_scenario: return "incompatible_scenario";
    case ErrorKind::io_error: return "io_error";
    }
    return "unknown";
}

/// Library error. The kind is stable and meant for machine consumption.
class Error : public std::runtime_error
{
public:
    Error(ErrorKind kind, const std::string &what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

inline void require(bool ok, ErrorKind kind, const std::string &what)
{
    if (!ok)
        throw Error(kind, what);
}

inline double dbm_to_watt(double dbm) { return 1e-3 * std::pow(10.0, dbm / 10.0); }
inline double watt_to_dbm(double w) { return 10.0 * std::log10(w / 1e-3); }

inline double meters_to_seconds(double m) { return m / kSpeedOfLight; }
inline double seconds_to_meters(double s) { return s * kSpeedOfLight; }

/// splitmix64 finalizer, used to derive independent stream seeds.
inline std::uint64_t mix_seed(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0)
{
    return mix_seed(mix_seed(mix_seed(mix_seed(master) ^ a) ^ b) ^ c);
}

inline std::uint64_t hash_string(const std::string &s)
{
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : s)
        h = (h ^ ch) * 1099511628211ULL;
    return h;
}

} // namespace dmasense

#endif
