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

#ifndef DMASENSE_EM_MODEL_HPP
#define DMASENSE_EM_MODEL_HPP

#include "core.hpp"

#include <optional>
#include <vector>

namespace dmasense
{

/// Rectangular microstrip waveguide. Derived quantities are recomputed on demand.
struct WaveguideSpec
{
    double width_m = 0.0;  // a
    double height_m = 0.0; // b
    double length_m = 0.110;
    double rel_permittivity = 1.0;
    double rel_permeability = 1.0;
    double carrier_hz = 24e9;

    double wavelength() const { return kSpeedOfLight / carrier_hz; }
    double omega() const { return 2.0 * kPi * carrier_hz; }
    double permittivity() const { return kVacuumPermittivity * rel_permittivity; }
    double wavenumber() const { return 2.0 * kPi / (wavelength() * std::sqrt(rel_permittivity * rel_permeability)); }

    /// k_x = conj(sqrt(k^2 - (pi/a)^2)) with the principal square root.
    cplx transverse_wavenumber() const
    {
        const double k = wavenumber();
        const double c = kPi / width_m;
        return std::conj(std::sqrt(cplx(k * k - c * c, 0.0)));
    }

    void validate() const
    {
        require(width_m > 0 && height_m > 0 && length_m > 0, ErrorKind::invalid_argument,
                "waveguide dimensions must be positive");
        require(rel_permittivity >= 1.0, ErrorKind::invalid_argument, "relative permittivity must be >= 1");
        require(rel_permeability > 0.0, ErrorKind::invalid_argument, "relative permeability must be positive");
        require(carrier_hz > 0.0, ErrorKind::invalid_argument, "carrier frequency must be positive");
    }

    /// Reference proportions: a = 0.73 lambda, b = 0.17 lambda, S = 110 mm.
    static WaveguideSpec table_one(double carrier_hz)
    {
        WaveguideSpec s;
        s.carrier_hz = carrier_hz;
        const double lambda = kSpeedOfLight / carrier_hz;
        s.width_m = 0.73 * lambda;
        s.height_m = 0.17 * lambda;
        s.length_m = 0.110;
        return s;
    }
};

enum class PortPlacement
{
    feed_end // x = 0 of each microstrip, at the element height
};

/// Planar DMA lattice. Microstrips run along x at y = i d_rf; elements are strip-major, n = i N_E + e.
struct DmaGeometry
{
    int n_rf = 0;
    int n_e = 0;
    double d_rf = 0.0;
    double d_e = 0.0;
    std::vector<Vec3> elements;
    std::vector<Vec3> ports;
    std::vector<int> strip_of;

    int n_total() const { return n_rf * n_e; }
    int index(int strip, int e) const { return strip * n_e + e; }
};

inline DmaGeometry build_geometry(int n_rf, int n_e, double d_rf, double d_e, double element_z,
                                  PortPlacement placement = PortPlacement::feed_end)
{
    require(n_rf >= 1 && n_e >= 1, ErrorKind::invalid_argument, "element counts must be >= 1");
    require(d_rf > 0 && d_e > 0, ErrorKind::invalid_argument, "element spacings must be positive");
    require(std::isfinite(element_z), ErrorKind::invalid_argument, "element height must be finite");
    (void)placement;

    DmaGeometry g;
    g.n_rf = n_rf;
    g.n_e = n_e;
    g.d_rf = d_rf;
    g.d_e = d_e;
    g.elements.reserve(static_cast<std::size_t>(n_rf) * n_e);
    for (int i = 0; i < n_rf; ++i)
    {
        g.ports.emplace_back(0.0, i * d_rf, element_z);
        for (int e = 0; e < n_e; ++e)
        {
            g.elements.emplace_back((e + 1) * d_e, i * d_rf, element_z);
            g.strip_of.push_back(i);
        }
    }
    return g;
}

/// Green's function inside a microstrip (same waveguide only).
inline cplx waveguide_green(const Vec3 &p, const Vec3 &q, const WaveguideSpec &spec)
{
    const double a = spec.width_m, b = spec.height_m, S = spec.length_m;
    const double k = spec.wavenumber();
    const cplx kx = spec.transverse_wavenumber();
    const cplx sks = std::sin(kx * S);
    require(std::abs(sks) > 1e-14, ErrorKind::singular_configuration,
            "waveguide resonance: sin(k_x S) vanishes");
    const cplx pre = -kx * std::sin(kPi * p.z() / a) * std::sin(kPi * q.z() / a) / (a * b * k * k * sks);
    return pre * (std::cos(kx * (q.x() + p.x() - S)) + std::cos(kx * (S - std::abs(p.x() - q.x()))));
}

/// zz-component of the free-space dyadic Green's function (p != q).
inline cplx freespace_green(const Vec3 &p, const Vec3 &q, const WaveguideSpec &spec)
{
    const double R = (p - q).norm();
    require(R > 0.0, ErrorKind::singular_configuration, "free-space Green's function evaluated at R = 0");
    const double k = spec.wavenumber();
    const double dz = p.z() - q.z();
    const double R2 = R * R, dz2 = dz * dz;
    const cplx first((R2 - dz2) / R2, -(R2 - 3.0 * dz2) / (R2 * R * k));
    const double second = (R2 - 3.0 * dz2) / (R2 * R2 * k * k);
    return (first + second) * std::exp(-kJ * (k * R)) / (4.0 * kPi * R);
}

/// Finite radiative limit used on the W_MC diagonal: -jk/(6 pi).
inline cplx freespace_self_term(const WaveguideSpec &spec) { return cplx(0.0, -spec.wavenumber() / (6.0 * kPi)); }

struct CouplingOptions
{
    std::optional<cplx> self_term; // replaces G_MC on the diagonal; defaults to the radiative limit
};

inline void check_inside(const DmaGeometry &geom, const WaveguideSpec &spec)
{
    for (const auto &p : geom.elements)
        require(p.x() >= 0.0 && p.x() <= spec.length_m && p.z() >= 0.0 && p.z() <= spec.width_m,
                ErrorKind::invalid_geometry, "element lies outside its waveguide");
}

inline CMat build_psa(const DmaGeometry &geom, const WaveguideSpec &spec)
{
    spec.validate();
    check_inside(geom, spec);
    const int nt = geom.n_total();
    CMat psa = CMat::Zero(nt, geom.n_rf);
    const double w = spec.omega();
    for (int n = 0; n < nt; ++n)
    {
        const int i = geom.strip_of[n];
        psa(n, i) = kJ * w * waveguide_green(geom.elements[n], geom.ports[i], spec);
    }
    return psa;
}

inline CMat build_wmc(const DmaGeometry &geom, const WaveguideSpec &spec, const CouplingOptions &opts = {})
{
    spec.validate();
    check_inside(geom, spec);
    const int nt = geom.n_total();
    const cplx scale = kJ * spec.omega() * spec.permittivity();
    const cplx self = opts.self_term.value_or(freespace_self_term(spec));
    CMat w(nt, nt);
    for (int n = 0; n < nt; ++n)
    {
        const Vec3 &p = geom.elements[n];
        w(n, n) = scale * (2.0 * self + waveguide_green(p, p, spec));
        for (int m = n + 1; m < nt; ++m)
        {
            const Vec3 &q = geom.elements[m];
            cplx v = 2.0 * freespace_green(p, q, spec);
            if (geom.strip_of[n] == geom.strip_of[m])
                v += waveguide_green(p, q, spec);
            w(n, m) = scale * v;
            w(m, n) = w(n, m);
        }
    }
    return w;
}

/// Lorentzian-constrained admittance 0.5(j + e^{j phi}).
inline cplx lorentzian_weight(double phi)
{
    phi = std::fmod(phi, 2.0 * kPi);
    return 0.5 * (kJ + std::exp(kJ * phi));
}

struct LorentzianWeights
{
    CVec k; // unconstrained unit-modulus weights e^{j phi}

    static LorentzianWeights from_phases(const Vec &phi)
    {
        LorentzianWeights w;
        w.k.resize(phi.size());
        for (Eigen::Index n = 0; n < phi.size(); ++n)
            w.k(n) = std::exp(kJ * phi(n));
        return w;
    }

    static LorentzianWeights from_unit(const CVec &k)
    {
        LorentzianWeights w;
        w.k = k.unaryExpr([](cplx z) { return z / std::abs(z); });
        return w;
    }

    CVec admittances() const { return (0.5 * (k.array() + kJ)).matrix(); }

    Vec phases() const
    {
        Vec phi(k.size());
        for (Eigen::Index n = 0; n < k.size(); ++n)
        {
            double a = std::arg(k(n));
            phi(n) = a < 0 ? a + 2.0 * kPi : a;
        }
        return phi;
    }
};

enum class ResponseMode
{
    exact,
    neumann,
    second_order,
    no_coupling,
    no_waveguide_loss
};

inline const char *to_string(ResponseMode m)
{
    switch (m)
    {
    case ResponseMode::exact: return "exact";
    case ResponseMode::neumann: return "neumann";
    case ResponseMode::second_order: return "second_order";
    case ResponseMode::no_coupling: return "no_coupling";
    case ResponseMode::no_waveguide_loss: return "no_waveguide_loss";
    }
    return "unknown";
}

struct Fidelity
{
    ResponseMode mode = ResponseMode::second_order;
    int order = 2; // used by the neumann mode only

    static Fidelity exact() { return {ResponseMode::exact, 0}; }
    static Fidelity neumann(int p) { return {ResponseMode::neumann, p}; }
    static Fidelity second_order() { return {ResponseMode::second_order, 2}; }
    static Fidelity no_coupling() { return {ResponseMode::no_coupling, 0}; }
    static Fidelity no_waveguide_loss() { return {ResponseMode::no_waveguide_loss, 0}; }
};

struct DmaResponse
{
    CMat psa;
    CMat wmc;
    LorentzianWeights weights;
    CMat wtx;
    Fidelity fidelity;
    double neumann_norm = 0.0; // ||Q W_MC^{-1}||_F^2, approximation modes only
    bool neumann_warning = false;
    double condition_estimate = 1.0;
};

inline constexpr double kMaxCondition = 1e12;

/// Partial sum W^{-1} sum_{q<p} (-Q W^{-1})^q, i.e. the order-p Neumann approximation of (Q + W)^{-1}.
inline CMat neumann_inverse(const CMat &wmc_inv, const CVec &q, int order)
{
    require(order >= 1, ErrorKind::invalid_argument, "neumann order must be >= 1");
    CMat term = wmc_inv;
    CMat acc = term;
    for (int p = 1; p < order; ++p)
    {
        term = -(wmc_inv * q.asDiagonal()) * term;
        acc += term;
    }
    return acc;
}

inline Eigen::PartialPivLU<CMat> checked_lu(const CMat &m, const char *what)
{
    Eigen::PartialPivLU<CMat> lu(m);
    const double rc = lu.rcond();
    const double cond = rc > 0 ? 1.0 / rc : std::numeric_limits<double>::infinity();
    require(std::isfinite(cond) && cond <= kMaxCondition, ErrorKind::ill_conditioned,
            std::string(what) + " is ill-conditioned (condition estimate " + std::to_string(cond) + ")");
    return lu;
}

inline DmaResponse assemble_response(const CMat &psa, const CMat &wmc, const LorentzianWeights &weights,
                                     Fidelity fidelity)
{
    DmaResponse r;
    r.psa = psa;
    r.wmc = wmc;
    r.weights = weights;
    r.fidelity = fidelity;
    const CVec q = weights.admittances();
    const Eigen::Index nt = wmc.rows();
    require(q.size() == nt && psa.rows() == nt, ErrorKind::invalid_argument, "response dimensions disagree");

    switch (fidelity.mode)
    {
    case ResponseMode::exact:
    case ResponseMode::no_waveguide_loss: {
        CMat a = wmc;
        a.diagonal() += q;
        auto lu = checked_lu(a, "Q_TA + W_MC");
        r.condition_estimate = 1.0 / lu.rcond();
        r.wtx = fidelity.mode == ResponseMode::exact ? CMat(lu.solve(psa)) : CMat(lu.inverse());
        break;
    }
    case ResponseMode::neumann:
    case ResponseMode::second_order: {
        auto lu = checked_lu(wmc, "W_MC");
        r.condition_estimate = 1.0 / lu.rcond();
        const CMat winv = lu.inverse();
        r.neumann_norm = (q.asDiagonal() * winv).squaredNorm();
        r.neumann_warning = r.neumann_norm >= 1.0;
        const int order = fidelity.mode == ResponseMode::second_order ? 2 : fidelity.order;
        r.wtx = neumann_inverse(winv, q, order) * psa;
        break;
    }
    case ResponseMode::no_coupling: {
        for (Eigen::Index n = 0; n < nt; ++n)
            require(std::abs(q(n)) > 0.0, ErrorKind::ill_conditioned, "Q_TA is singular");
        r.wtx = q.cwiseInverse().asDiagonal() * psa;
        break;
    }
    }
    return r;
}

inline DmaResponse assemble_response(const DmaGeometry &geom, const WaveguideSpec &spec,
                                     const LorentzianWeights &weights, Fidelity fidelity,
                                     const CouplingOptions &opts = {})
{
    return assemble_response(build_psa(geom, spec), build_wmc(geom, spec, opts), weights, fidelity);
}

/// Cached DMA matrices at the carrier, shared by every design routine.
struct DmaModel
{
    DmaGeometry geom;
    WaveguideSpec spec;
    CMat psa;
    CMat wmc;
    CMat wmc_inv;
    CMat wmc_inv_psa;

    int n_total() const { return geom.n_total(); }
    int n_rf() const { return geom.n_rf; }

    /// Second-order response (W^{-1} - W^{-1} diag(q) W^{-1}) P_SA.
    CMat second_order(const CVec &k) const
    {
        const CVec q = (0.5 * (k.array() + kJ)).matrix();
        return wmc_inv_psa - wmc_inv * (q.asDiagonal() * wmc_inv_psa);
    }

    /// diag(q)^{-1} P_SA.
    CMat no_coupling(const CVec &k) const
    {
        const CVec q = (0.5 * (k.array() + kJ)).matrix();
        return q.cwiseInverse().asDiagonal() * psa;
    }

    CMat response(const CVec &k, ResponseMode mode) const
    {
        switch (mode)
        {
        case ResponseMode::second_order: return second_order(k);
        case ResponseMode::no_coupling: return no_coupling(k);
        default: return assemble_response(psa, wmc, LorentzianWeights::from_unit(k), Fidelity{mode, 2}).wtx;
        }
    }
};

inline DmaModel build_model(const DmaGeometry &geom, const WaveguideSpec &spec, const CouplingOptions &opts = {})
{
    DmaModel m;
    m.geom = geom;
    m.spec = spec;
    m.psa = build_psa(geom, spec);
    m.wmc = build_wmc(geom, spec, opts);
    auto lu = checked_lu(m.wmc, "W_MC");
    m.wmc_inv = lu.inverse();
    m.wmc_inv_psa = m.wmc_inv * m.psa;
    return m;
}

} // namespace dmasense

#endif
