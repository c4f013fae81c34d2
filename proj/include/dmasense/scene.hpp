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

#ifndef DMASENSE_SCENE_HPP
#define DMASENSE_SCENE_HPP

#include "core.hpp"
#include "em_model.hpp"

#include <vector>

namespace dmasense
{

/// OFDM pilot grid. Subcarriers are indexed 0..K-1 here; f_k is centred on f_c.
struct OfdmGrid
{
    double carrier_hz = 24e9;
    int subcarriers = 512;
    double spacing_hz = 120e3;
    int pilots = 1; // T
    int frames = 1; // M

    double wavelength() const { return kSpeedOfLight / carrier_hz; }
    double frequency(int k) const { return carrier_hz + (k - 0.5 * (subcarriers - 1)) * spacing_hz; }

    void validate() const
    {
        require(carrier_hz > 0, ErrorKind::validation_error, "carrier frequency must be positive");
        require(subcarriers >= 1, ErrorKind::validation_error, "subcarrier count must be >= 1");
        require(spacing_hz > 0, ErrorKind::validation_error, "subcarrier spacing must be positive");
        require(pilots >= 1 && frames >= 1, ErrorKind::validation_error, "pilot and frame counts must be >= 1");
    }
};

struct Target
{
    Vec3 position = Vec3::Zero();
    cplx reflection{1.0, 0.0};
    double uncertainty_m = 0.0;
};

/// Bistatic scene. The TX DMA sits at the origin.
struct Scene
{
    Vec3 rx_position{35.0, 6.0, 5.0};
    double rotation = kPi / 4; // zeta
    std::vector<Target> targets;
    double clock_std_s = 0.0;
    double boresight_exponent = 0.57;
    double noise_power_w = dbm_to_watt(-80.0);
    double power_budget_w = dbm_to_watt(20.0); // per-design budget P_tot/M
    int rx_antennas = 16;
    double rx_spacing_m = 0.0; // 0 means half a wavelength at the carrier

    int n_targets() const { return static_cast<int>(targets.size()); }

    double rx_spacing(double lambda) const { return rx_spacing_m > 0 ? rx_spacing_m : 0.5 * lambda; }

    /// Throws on hard violations and returns a warning string for soft ones.
    std::string validate(int n_rf) const
    {
        require(!targets.empty(), ErrorKind::validation_error, "scene needs at least one target");
        require(rx_antennas >= 1, ErrorKind::validation_error, "rx antenna count must be >= 1");
        require(rotation >= -kPi / 2 - 1e-12 && rotation <= kPi / 2 + 1e-12, ErrorKind::validation_error,
                "rotation must lie in [-pi/2, pi/2]");
        require(clock_std_s >= 0, ErrorKind::validation_error, "clock std must be >= 0");
        require(noise_power_w > 0 && power_budget_w > 0, ErrorKind::validation_error,
                "noise power and power budget must be positive");
        for (const auto &t : targets)
        {
            require(t.uncertainty_m >= 0, ErrorKind::validation_error, "uncertainty radius must be >= 0");
            require(t.position.allFinite(), ErrorKind::validation_error, "target position must be finite");
        }
        if (n_targets() >= std::min(n_rf, rx_antennas))
            return "target count G is not below min(N_RF, M_R)";
        return {};
    }
};

struct PathParam
{
    double theta_a = 0, theta_e = 0; // AoD
    double psi_a = 0, psi_e = 0;     // AoA
    double delay = 0;
    cplx gain{0.0, 0.0};
    double distance = 0; // ||p|| + ||p_RX - p||
};

struct PathParams
{
    std::vector<PathParam> paths;
    double clock_offset = 0;
};

inline double radiation_profile(double theta_e, double b)
{
    if (theta_e < -kPi / 2 || theta_e > kPi / 2)
        return 0.0;
    const double c = std::cos(theta_e);
    return c <= 1e-15 ? 0.0 : 2.0 * (b + 1.0) * std::pow(c, b);
}

/// dF/dtheta_e.
inline double radiation_profile_derivative(double theta_e, double b)
{
    if (theta_e <= -kPi / 2 || theta_e >= kPi / 2)
        return 0.0;
    const double c = std::cos(theta_e);
    return -2.0 * (b + 1.0) * b * std::pow(c, b - 1.0) * std::sin(theta_e);
}

inline PathParam path_param(const Vec3 &p, cplx beta, const Scene &scene, double lambda, double dt)
{
    const Vec3 r = scene.rx_position - p;
    const double dp = p.norm(), dr = r.norm();
    require(dp > 0 && dr > 0, ErrorKind::invalid_geometry, "target coincides with the TX or the RX");
    PathParam q;
    q.theta_a = std::atan2(p.y(), p.x()) - scene.rotation;
    q.theta_e = std::asin(p.z() / dp);
    q.psi_a = std::atan2(p.y() - scene.rx_position.y(), p.x() - scene.rx_position.x());
    q.psi_e = std::asin((p.z() - scene.rx_position.z()) / dr);
    q.distance = dp + dr;
    q.delay = q.distance / kSpeedOfLight + dt;
    q.gain = beta * lambda * radiation_profile(q.theta_e, scene.boresight_exponent) / (4.0 * kPi * q.distance);
    return q;
}

inline PathParams path_params(const Scene &scene, double lambda, double dt)
{
    PathParams out;
    out.clock_offset = dt;
    for (const auto &t : scene.targets)
        out.paths.push_back(path_param(t.position, t.reflection, scene, lambda, dt));
    return out;
}

/// Steering vector and its angular partials.
struct Steering
{
    CVec value;
    CVec d_azimuth;
    CVec d_elevation;
};

/// TX steering in element order n = i N_E + e: phase 2pi/lambda (e d_E sin(te) cos(ta) + i d_RF sin(te) sin(ta)).
inline Steering steering_tx_full(double ta, double te, const DmaGeometry &geom, double lambda)
{
    const int nt = geom.n_total();
    const double kw = 2.0 * kPi / lambda;
    const double norm = 1.0 / std::sqrt(static_cast<double>(nt));
    const double se = std::sin(te), ce = std::cos(te), sa = std::sin(ta), ca = std::cos(ta);
    Steering s{CVec(nt), CVec(nt), CVec(nt)};
    for (int i = 0; i < geom.n_rf; ++i)
        for (int e = 0; e < geom.n_e; ++e)
        {
            const double x = e * geom.d_e, y = i * geom.d_rf;
            const double phase = kw * (x * se * ca + y * se * sa);
            const double dpa = kw * (-x * se * sa + y * se * ca);
            const double dpe = kw * (x * ce * ca + y * ce * sa);
            const cplx v = norm * std::exp(kJ * phase);
            const int n = geom.index(i, e);
            s.value(n) = v;
            s.d_azimuth(n) = kJ * dpa * v;
            s.d_elevation(n) = kJ * dpe * v;
        }
    return s;
}

inline CVec steering_tx(double ta, double te, const DmaGeometry &geom, double lambda)
{
    return steering_tx_full(ta, te, geom, lambda).value;
}

/// RX uniform linear array along its local x-axis, rotated by `axis` about z.
inline Steering steering_rx_full(double pa, double pe, int m_r, double spacing, double lambda, double axis)
{
    const double kw = 2.0 * kPi / lambda * spacing;
    const double norm = 1.0 / std::sqrt(static_cast<double>(m_r));
    const double ce = std::cos(pe), se = std::sin(pe);
    const double c = std::cos(pa - axis), s = std::sin(pa - axis);
    Steering out{CVec(m_r), CVec(m_r), CVec(m_r)};
    for (int m = 0; m < m_r; ++m)
    {
        const cplx v = norm * std::exp(kJ * (kw * m * ce * c));
        out.value(m) = v;
        out.d_azimuth(m) = kJ * (-kw * m * ce * s) * v;
        out.d_elevation(m) = kJ * (-kw * m * se * c) * v;
    }
    return out;
}

inline CVec steering_rx(double pa, double pe, int m_r, double spacing, double lambda, double axis)
{
    return steering_rx_full(pa, pe, m_r, spacing, lambda, axis).value;
}

inline Steering steering_rx_full(double pa, double pe, const Scene &scene, double lambda)
{
    return steering_rx_full(pa, pe, scene.rx_antennas, scene.rx_spacing(lambda), lambda, scene.rotation);
}

/// H_k = sum_g a_g e^{-j 2 pi f_k tau_g} a_RX a_TX^H.
inline CMat channel_matrix(int k, const PathParams &params, const Scene &scene, const DmaGeometry &geom,
                           const OfdmGrid &grid)
{
    const double lambda = grid.wavelength();
    const double fk = grid.frequency(k);
    CMat h = CMat::Zero(scene.rx_antennas, geom.n_total());
    for (const auto &p : params.paths)
    {
        const cplx coef = p.gain * std::exp(-kJ * (2.0 * kPi * fk * p.delay));
        const CVec at = steering_tx(p.theta_a, p.theta_e, geom, lambda);
        const CVec ar = steering_rx_full(p.psi_a, p.psi_e, scene, lambda).value;
        h.noalias() += coef * ar * at.adjoint();
    }
    return h;
}

/// Angular window subtended by a sphere of radius u around p, seen from `origin`.
struct AngularExtent
{
    double center_a = 0;
    double center_e = 0;
    double half_width = 0;
};

inline AngularExtent angular_extent(const Vec3 &origin, const Vec3 &p, double u, double azimuth_offset = 0.0)
{
    const Vec3 d = p - origin;
    const double r = d.norm();
    require(u < r, ErrorKind::invalid_geometry, "uncertainty sphere contains the observing node");
    AngularExtent e;
    e.center_a = std::atan2(d.y(), d.x()) - azimuth_offset;
    e.center_e = std::asin(d.z() / r);
    e.half_width = std::asin(u / r);
    return e;
}

struct BeamCount
{
    int n_a = 1;
    int n_e = 1;
    int beams() const { return n_a * n_e; }
};

/// Ceiling beam counts over the extents. With nonzero uncertainty the azimuth count is at least 2.
inline BeamCount beam_count(const AngularExtent &ext, double beamwidth_a, double beamwidth_e)
{
    const double span = 2.0 * ext.half_width;
    BeamCount c;
    if (span <= 0)
        return c;
    c.n_a = std::max(2, static_cast<int>(std::ceil(span / beamwidth_a - 1e-12)));
    c.n_e = std::max(1, static_cast<int>(std::ceil(span / beamwidth_e - 1e-12)));
    return c;
}

/// n evenly spaced values over [center - half, center + half], endpoints included.
inline std::vector<double> beam_angles(double center, double half, int n)
{
    std::vector<double> v;
    if (n == 1)
        return {center};
    for (int i = 0; i < n; ++i)
        v.push_back(center - half + 2.0 * half * i / (n - 1));
    return v;
}

struct RxCombiner
{
    CMat w;          // M_R x M_R
    int padded = 0;  // canonical columns appended for a rank-deficient codebook
    CMat codebook;   // A_dig
};

/// Fix the global phase so the first non-negligible entry is real positive.
inline void canonical_phase(Eigen::Ref<CVec> v)
{
    const double tol = 1e-12 * v.cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < v.size(); ++i)
        if (std::abs(v(i)) > tol)
        {
            v *= std::conj(v(i)) / std::abs(v(i));
            return;
        }
}

/// RX combiner from the left singular vectors of the receive codebook, scaled to unit-amplitude entries.
inline RxCombiner rx_combiner(const Scene &scene, const std::vector<BeamCount> &counts, double lambda)
{
    const int mr = scene.rx_antennas;
    require(counts.size() == scene.targets.size(), ErrorKind::invalid_argument, "beam counts per target required");
    std::vector<CVec> sum, da, de;
    for (std::size_t g = 0; g < scene.targets.size(); ++g)
    {
        const auto &t = scene.targets[g];
        const AngularExtent ext = angular_extent(scene.rx_position, t.position, t.uncertainty_m);
        const auto az = beam_angles(ext.center_a, ext.half_width, counts[g].n_a);
        const auto el = beam_angles(ext.center_e, ext.half_width, counts[g].n_e);
        for (double a : az)
            for (double e : el)
            {
                Steering s = steering_rx_full(a, e, scene, lambda);
                sum.push_back(s.value);
                da.push_back(s.d_azimuth);
                de.push_back(s.d_elevation);
            }
    }
    const int nb = static_cast<int>(sum.size());
    CMat a(mr, 3 * nb);
    for (int i = 0; i < nb; ++i)
    {
        a.col(i) = sum[i];
        a.col(nb + i) = da[i];
        a.col(2 * nb + i) = de[i];
    }
    RxCombiner out;
    out.codebook = a;
    Eigen::JacobiSVD<CMat> svd(a, Eigen::ComputeFullU);
    const Vec &sv = svd.singularValues();
    const double tol = sv.size() ? 1e-10 * sv(0) : 0.0;
    int rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
        rank += sv(i) > tol ? 1 : 0;
    out.w = CMat::Zero(mr, mr);
    const double mag = 1.0 / std::sqrt(static_cast<double>(mr));
    for (int c = 0; c < std::min(rank, mr); ++c)
    {
        CVec u = svd.matrixU().col(c);
        canonical_phase(u);
        for (int i = 0; i < mr; ++i)
        {
            const double r = std::abs(u(i));
            out.w(i, c) = r > 0 ? mag * u(i) / r : cplx(mag, 0.0);
        }
    }
    for (int c = rank; c < mr; ++c)
    {
        out.w(c, c) = 1.0;
        ++out.padded;
    }
    return out;
}

} // namespace dmasense

#endif
