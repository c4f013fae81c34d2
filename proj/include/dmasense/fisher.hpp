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

#ifndef DMASENSE_FISHER_HPP
#define DMASENSE_FISHER_HPP

#include "core.hpp"
#include "scene.hpp"

#include <limits>
#include <vector>

namespace dmasense
{

// Channel parameters are ordered [theta_a, theta_e, psi_a, psi_e, alpha_R, alpha_I, tau], each block of length G.
// Location parameters are ordered [p_1, ..., p_G, zeta, dt].
enum ChannelBlock : int
{
    kThetaA = 0,
    kThetaE = 1,
    kPsiA = 2,
    kPsiE = 3,
    kAlphaR = 4,
    kAlphaI = 5,
    kTau = 6
};

inline int channel_index(int block, int g, int G) { return block * G + g; }

/// d xi / d xi~, 7G x (3G+2).
inline Mat jacobian_T(const PathParams &params, const Scene &scene, double lambda)
{
    const int G = scene.n_targets();
    Mat T = Mat::Zero(7 * G, 3 * G + 2);
    const Vec3 ez(0, 0, 1);
    for (int g = 0; g < G; ++g)
    {
        const Vec3 &p = scene.targets[g].position;
        const Vec3 s = p - scene.rx_position;
        const double r = p.norm(), sn = s.norm();
        require(r > 0 && sn > 0, ErrorKind::invalid_geometry, "target coincides with the TX or the RX");
        const double rho2 = p.x() * p.x() + p.y() * p.y();
        const double sig2 = s.x() * s.x() + s.y() * s.y();
        require(rho2 > 0 && sig2 > 0, ErrorKind::invalid_geometry, "azimuth undefined for a target on the z-axis");

        const Vec3 d_ta(-p.y() / rho2, p.x() / rho2, 0.0);
        const Vec3 d_te = (ez / r - p.z() * p / (r * r * r)) / std::cos(params.paths[g].theta_e);
        const Vec3 d_pa(-s.y() / sig2, s.x() / sig2, 0.0);
        const Vec3 d_pe = (ez / sn - s.z() * s / (sn * sn * sn)) / std::cos(params.paths[g].psi_e);
        const Vec3 d_dist = p / r + s / sn;

        const double dist = r + sn;
        const double te = params.paths[g].theta_e;
        const double F = radiation_profile(te, scene.boresight_exponent);
        const double dF = radiation_profile_derivative(te, scene.boresight_exponent);
        const cplx beta = scene.targets[g].reflection;
        const Vec3 d_amp = lambda / (4.0 * kPi) * (dF * d_te / dist - F * d_dist / (dist * dist));

        for (int c = 0; c < 3; ++c)
        {
            const int col = 3 * g + c;
            T(channel_index(kThetaA, g, G), col) = d_ta(c);
            T(channel_index(kThetaE, g, G), col) = d_te(c);
            T(channel_index(kPsiA, g, G), col) = d_pa(c);
            T(channel_index(kPsiE, g, G), col) = d_pe(c);
            T(channel_index(kAlphaR, g, G), col) = beta.real() * d_amp(c);
            T(channel_index(kAlphaI, g, G), col) = beta.imag() * d_amp(c);
            T(channel_index(kTau, g, G), col) = d_dist(c) / kSpeedOfLight;
        }
        T(channel_index(kThetaA, g, G), 3 * G) = -1.0;
        T(channel_index(kTau, g, G), 3 * G + 1) = 1.0;
    }
    return T;
}

// ------------------------------------------------------------------------
// Direct evaluation (explicit matrices per subcarrier and frame)

/// dH_k / d xi_i as explicit M_R x N_T matrices.
inline std::vector<CMat> channel_derivatives(int k, const PathParams &params, const Scene &scene,
                                             const DmaGeometry &geom, const OfdmGrid &grid)
{
    const int G = static_cast<int>(params.paths.size());
    const double lambda = grid.wavelength();
    const double fk = grid.frequency(k);
    std::vector<CMat> d(7 * G);
    for (int g = 0; g < G; ++g)
    {
        const PathParam &p = params.paths[g];
        const Steering t = steering_tx_full(p.theta_a, p.theta_e, geom, lambda);
        const Steering r = steering_rx_full(p.psi_a, p.psi_e, scene, lambda);
        const cplx e = std::exp(-kJ * (2.0 * kPi * fk * p.delay));
        const cplx gam = p.gain * e;
        d[channel_index(kThetaA, g, G)] = gam * r.value * t.d_azimuth.adjoint();
        d[channel_index(kThetaE, g, G)] = gam * r.value * t.d_elevation.adjoint();
        d[channel_index(kPsiA, g, G)] = gam * r.d_azimuth * t.value.adjoint();
        d[channel_index(kPsiE, g, G)] = gam * r.d_elevation * t.value.adjoint();
        d[channel_index(kAlphaR, g, G)] = e * r.value * t.value.adjoint();
        d[channel_index(kAlphaI, g, G)] = kJ * e * r.value * t.value.adjoint();
        d[channel_index(kTau, g, G)] = (-kJ * 2.0 * kPi * fk) * gam * r.value * t.value.adjoint();
    }
    return d;
}

/// mu = W_RX^H H_k W_TX f (pilot s = 1).
inline CVec mu_value(int k, const PathParams &params, const Scene &scene, const DmaGeometry &geom,
                     const OfdmGrid &grid, const CMat &wtx, const CMat &wrx, const CVec &f)
{
    return wrx.adjoint() * (channel_matrix(k, params, scene, geom, grid) * (wtx * f));
}

inline std::vector<CVec> mu_derivatives(int k, const PathParams &params, const Scene &scene,
                                        const DmaGeometry &geom, const OfdmGrid &grid, const CMat &wtx,
                                        const CMat &wrx, const CVec &f)
{
    const CVec x = wtx * f;
    std::vector<CVec> out;
    for (const CMat &dh : channel_derivatives(k, params, scene, geom, grid))
        out.push_back(wrx.adjoint() * (dh * x));
    return out;
}

/// Channel-domain FIM by direct summation over frames and subcarriers. F is N_RF x M.
inline Mat channel_fim(const CMat &F, const PathParams &params, const Scene &scene, const DmaGeometry &geom,
                       const OfdmGrid &grid, const CMat &wtx, const CMat &wrx)
{
    const int n = 7 * static_cast<int>(params.paths.size());
    Mat J = Mat::Zero(n, n);
    for (int k = 0; k < grid.subcarriers; ++k)
        for (Eigen::Index m = 0; m < F.cols(); ++m)
        {
            const auto d = mu_derivatives(k, params, scene, geom, grid, wtx, wrx, F.col(m));
            CMat D(d.front().size(), n);
            for (int i = 0; i < n; ++i)
                D.col(i) = d[i];
            J += (D.adjoint() * D).real();
        }
    J *= 2.0 * grid.pilots / scene.noise_power_w;
    return 0.5 * (J + J.transpose());
}

// ------------------------------------------------------------------------
// Kernel form. Every dH_k/dxi_i is c_{k,i} u_{r_i} v_{s_i}^H with u from the RX basis
// [a_RX, da_RX/dpsi_a, da_RX/dpsi_e] and v from the TX basis [a_TX, da_TX/dtheta_a, da_TX/dtheta_e],
// both kind-major. The FIM then depends on the TX covariance Z only through V^H Z V.

struct FisherKernels
{
    int G = 0;
    CMat tx_basis;   // V, N_T x 3G
    CMat omega;      // 7G x 7G, (2T/sigma^2) U^H W U [r_i, r_j] sum_k conj(c_ki) c_kj
    std::vector<int> rx_slot;
    std::vector<int> tx_slot;
    Mat T;           // 7G x (3G+2)
    double clock_std_s = 0;

    int location_dim() const { return 3 * G + 2; }

    /// Gamma_ab with J_ab(Z) = Re tr(V^H Z V Gamma_ab); pass the identity for the channel domain.
    std::vector<CMat> gammas(const Mat &transform) const
    {
        const int n = static_cast<int>(transform.cols());
        const int nc = 7 * G;
        std::vector<CMat> out(static_cast<std::size_t>(n) * n, CMat::Zero(3 * G, 3 * G));
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b)
            {
                CMat &gm = out[static_cast<std::size_t>(a) * n + b];
                for (int i = 0; i < nc; ++i)
                {
                    const double ta = transform(i, a);
                    if (ta == 0.0)
                        continue;
                    for (int j = 0; j < nc; ++j)
                    {
                        const double tb = transform(j, b);
                        if (tb != 0.0)
                            gm(tx_slot[i], tx_slot[j]) += ta * tb * omega(i, j);
                    }
                }
            }
        return out;
    }

    std::vector<CMat> location_gammas() const { return gammas(T); }
    std::vector<CMat> channel_gammas() const { return gammas(Mat::Identity(7 * G, 7 * G)); }
};

inline FisherKernels build_fisher_kernels(const PathParams &params, const Scene &scene, const DmaGeometry &geom,
                                          const OfdmGrid &grid, const CMat &wrx)
{
    const int G = static_cast<int>(params.paths.size());
    const double lambda = grid.wavelength();
    FisherKernels fk;
    fk.G = G;
    fk.clock_std_s = scene.clock_std_s;
    fk.tx_basis.resize(geom.n_total(), 3 * G);
    CMat rx_basis(scene.rx_antennas, 3 * G);
    for (int g = 0; g < G; ++g)
    {
        const PathParam &p = params.paths[g];
        const Steering t = steering_tx_full(p.theta_a, p.theta_e, geom, lambda);
        const Steering r = steering_rx_full(p.psi_a, p.psi_e, scene, lambda);
        fk.tx_basis.col(g) = t.value;
        fk.tx_basis.col(G + g) = t.d_azimuth;
        fk.tx_basis.col(2 * G + g) = t.d_elevation;
        rx_basis.col(g) = r.value;
        rx_basis.col(G + g) = r.d_azimuth;
        rx_basis.col(2 * G + g) = r.d_elevation;
    }
    const CMat wrx_u = wrx.adjoint() * rx_basis;
    const CMat uwu = wrx_u.adjoint() * wrx_u;

    const int nc = 7 * G;
    fk.rx_slot.assign(nc, 0);
    fk.tx_slot.assign(nc, 0);
    for (int g = 0; g < G; ++g)
    {
        auto set = [&](int block, int r, int s) {
            fk.rx_slot[channel_index(block, g, G)] = r * G + g;
            fk.tx_slot[channel_index(block, g, G)] = s * G + g;
        };
        set(kThetaA, 0, 1);
        set(kThetaE, 0, 2);
        set(kPsiA, 1, 0);
        set(kPsiE, 2, 0);
        set(kAlphaR, 0, 0);
        set(kAlphaI, 0, 0);
        set(kTau, 0, 0);
    }

    CMat s = CMat::Zero(nc, nc);
    CVec c(nc);
    for (int k = 0; k < grid.subcarriers; ++k)
    {
        const double f = grid.frequency(k);
        for (int g = 0; g < G; ++g)
        {
            const PathParam &p = params.paths[g];
            const cplx e = std::exp(-kJ * (2.0 * kPi * f * p.delay));
            const cplx gam = p.gain * e;
            c(channel_index(kThetaA, g, G)) = gam;
            c(channel_index(kThetaE, g, G)) = gam;
            c(channel_index(kPsiA, g, G)) = gam;
            c(channel_index(kPsiE, g, G)) = gam;
            c(channel_index(kAlphaR, g, G)) = e;
            c(channel_index(kAlphaI, g, G)) = kJ * e;
            c(channel_index(kTau, g, G)) = -kJ * 2.0 * kPi * f * gam;
        }
        s.noalias() += c.conjugate() * c.transpose();
    }
    const double pre = 2.0 * grid.pilots / scene.noise_power_w;
    fk.omega.resize(nc, nc);
    for (int i = 0; i < nc; ++i)
        for (int j = 0; j < nc; ++j)
            fk.omega(i, j) = pre * uwu(fk.rx_slot[i], fk.rx_slot[j]) * s(i, j);
    fk.T = jacobian_T(params, scene, lambda);
    return fk;
}

/// Re tr(A B) without forming the product.
inline double re_trace_product(const CMat &a, const CMat &b) { return a.cwiseProduct(b.transpose()).sum().real(); }

/// J(Zhat) for kernels Gamma (Zhat = V^H Z V).
inline Mat fim_from_projected(const CMat &zhat, const std::vector<CMat> &gam, int dim)
{
    Mat J(dim, dim);
    for (int a = 0; a < dim; ++a)
        for (int b = a; b < dim; ++b)
        {
            J(a, b) = re_trace_product(zhat, gam[static_cast<std::size_t>(a) * dim + b]);
            J(b, a) = J(a, b);
        }
    return J;
}

/// Adds the clock prior to an observation FIM in the location domain.
/// sigma = 0 eliminates dt; sigma = inf adds nothing.
inline Mat location_fim(const Mat &jobs, double clock_std_s)
{
    const Eigen::Index n = jobs.rows();
    if (clock_std_s == 0.0)
        return jobs.topLeftCorner(n - 1, n - 1);
    Mat out = jobs;
    if (std::isfinite(clock_std_s))
        out(n - 1, n - 1) += 1.0 / (clock_std_s * clock_std_s);
    return out;
}

inline Mat location_fim(const Mat &J, const Mat &T, double clock_std_s)
{
    return location_fim(Mat(T.transpose() * J * T), clock_std_s);
}

struct PebResult
{
    double value = std::numeric_limits<double>::infinity();
    bool singular = true;
    Mat crb; // inverse of the location FIM
};

/// PEB = sqrt(tr of the 3G position block of J~^{-1}), via diagonal equilibration.
inline PebResult peb(const Mat &jt, int G)
{
    PebResult r;
    const Eigen::Index n = jt.rows();
    Vec d(n);
    for (Eigen::Index i = 0; i < n; ++i)
    {
        if (!(jt(i, i) > 0) || !std::isfinite(jt(i, i)))
            return r;
        d(i) = 1.0 / std::sqrt(jt(i, i));
    }
    const Mat s = d.asDiagonal() * jt * d.asDiagonal();
    Eigen::LDLT<Mat> ldlt(0.5 * (s + s.transpose()));
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.rcond() < 1e-13)
        return r;
    r.crb = d.asDiagonal() * ldlt.solve(Mat::Identity(n, n)) * d.asDiagonal();
    double tr = 0;
    for (int i = 0; i < 3 * G; ++i)
        tr += r.crb(i, i);
    if (!(tr >= 0) || !std::isfinite(tr))
        return r;
    r.value = std::sqrt(tr);
    r.singular = false;
    return r;
}

/// Cached location-domain evaluator for one scene sample.
struct LocationFimEvaluator
{
    FisherKernels kernels;
    std::vector<CMat> gam;

    explicit LocationFimEvaluator(FisherKernels k) : kernels(std::move(k)), gam(kernels.location_gammas()) {}

    int dim() const { return kernels.location_dim(); }
    int G() const { return kernels.G; }

    Mat observation(const CMat &z) const
    {
        const CMat &v = kernels.tx_basis;
        return fim_from_projected(v.adjoint() * z * v, gam, dim());
    }
    Mat observation_projected(const CMat &zhat) const { return fim_from_projected(zhat, gam, dim()); }
    Mat fim(const CMat &z) const { return location_fim(observation(z), kernels.clock_std_s); }
    PebResult peb_of(const CMat &z) const { return peb(fim(z), G()); }
};

// ------------------------------------------------------------------------
// Linear maps used to assemble the SDPs

/// X -> J with J_ab = Re tr(X B_ab). Coefficients are Hermitian-symmetrised.
struct LinearFimMap
{
    int dim = 0;
    std::vector<CMat> coeff;

    Mat evaluate(const CMat &x) const
    {
        Mat J(dim, dim);
        for (int a = 0; a < dim; ++a)
            for (int b = a; b < dim; ++b)
            {
                J(a, b) = re_trace_product(x, coeff[static_cast<std::size_t>(a) * dim + b]);
                J(b, a) = J(a, b);
            }
        return J;
    }
};

/// Linear in X: B_ab = W_TX^H V Gamma_ab V^H W_TX. Use W_TX = I for a general covariance Z.
inline LinearFimMap fim_linear_in_X(const CMat &wtx, const CMat &tx_basis, const std::vector<CMat> &gam, int dim)
{
    LinearFimMap m;
    m.dim = dim;
    const CMat vt = wtx.adjoint() * tx_basis;
    m.coeff.resize(gam.size());
    for (std::size_t i = 0; i < gam.size(); ++i)
        m.coeff[i] = vt * gam[i] * vt.adjoint();
    return m;
}

/// K~ -> J with J_ab = c_ab + Re tr(R_ab K~), K~ = [k; 1][k; 1]^H.
struct KFimMap
{
    int dim = 0;
    Mat constant;
    std::vector<CMat> R;

    Mat evaluate(const CMat &kt) const
    {
        Mat J(dim, dim);
        for (int a = 0; a < dim; ++a)
            for (int b = a; b < dim; ++b)
            {
                J(a, b) = constant(a, b) + re_trace_product(R[static_cast<std::size_t>(a) * dim + b], kt);
                J(b, a) = J(a, b);
            }
        return J;
    }
};

/// The quadratic-in-q pieces of tr(A Z) for Z = W_TX X W_TX^H under the second-order response.
/// With C = W^{-1} P X P^H W^{-H}: tr(A Z) = tr(AC) - a^T q - q^H b + q^H M q.
struct QuadraticInQ
{
    cplx trace_ac;
    CVec a;
    CVec b;
    CMat M;
};

/// Assemble R for k~ = [k; 1] from q = 0.5(j 1 + k).
inline CMat assemble_r(const QuadraticInQ &t)
{
    const Eigen::Index n = t.a.size();
    CMat R(n + 1, n + 1);
    const CVec ones = CVec::Ones(n);
    R.topLeftCorner(n, n) = 0.25 * t.M;
    R.topRightCorner(n, 1) = 0.25 * kJ * (t.M * ones) - 0.5 * t.b;
    R.bottomLeftCorner(1, n) = -0.25 * kJ * (ones.transpose() * t.M) - 0.5 * t.a.transpose();
    R(n, n) = 0.25 * (ones.transpose() * t.M * ones)(0, 0) - 0.5 * kJ * t.a.sum() + 0.5 * kJ * t.b.sum();
    return R;
}

/// Linear in the lifted weights, with summed kernels A_ab = V Gamma_ab V^H (so the k-sum and 2T/sigma^2 are inside Gamma).
inline KFimMap fim_linear_in_K(const CMat &wmc_inv, const CMat &psa, const CMat &X, const CMat &tx_basis,
                               const std::vector<CMat> &gam, int dim)
{
    const CMat y = wmc_inv * psa;
    const CMat C = y * X * y.adjoint();
    const CMat cv = C * tx_basis;                       // C V
    const CMat vw = tx_basis.adjoint() * wmc_inv;       // V^H W^{-1}
    const CMat wv = wmc_inv.adjoint() * tx_basis;       // W^{-H} V
    const CMat vc = tx_basis.adjoint() * C;             // V^H C
    const CMat vcv = tx_basis.adjoint() * cv;           // V^H C V
    const CMat ct = C.transpose();

    KFimMap m;
    m.dim = dim;
    m.constant = Mat::Zero(dim, dim);
    m.R.resize(gam.size());
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j)
        {
            const CMat &g = gam[static_cast<std::size_t>(i) * dim + j];
            QuadraticInQ t;
            t.trace_ac = (g * vcv).trace();
            const CMat gvw = g * vw;
            t.a = (cv * gvw).diagonal();
            t.b = (wv * (g * vc)).diagonal();
            t.M = (wv * gvw).cwiseProduct(ct);
            CMat R = assemble_r(t);
            m.constant(i, j) = t.trace_ac.real();
            m.R[static_cast<std::size_t>(i) * dim + j] = std::move(R);
        }
    return m;
}

/// Power map: tr(W_TX^H W_TX X) = c + Re tr(V K~).
struct KPowerMap
{
    double constant = 0;
    CMat V;
    double evaluate(const CMat &kt) const { return constant + re_trace_product(V, kt); }
};

inline KPowerMap power_linear_in_K(const CMat &wmc_inv, const CMat &psa, const CMat &X)
{
    const CMat y = wmc_inv * psa;
    const CMat C = y * X * y.adjoint();
    QuadraticInQ t;
    t.trace_ac = C.trace();
    t.a = (C * wmc_inv).diagonal();
    t.b = (wmc_inv.adjoint() * C).diagonal();
    t.M = (wmc_inv.adjoint() * wmc_inv).cwiseProduct(C.transpose());
    KPowerMap p;
    p.constant = t.trace_ac.real();
    p.V = assemble_r(t);
    return p;
}

inline CMat lift_weights(const CVec &k)
{
    CVec kt(k.size() + 1);
    kt.head(k.size()) = k;
    kt(k.size()) = 1.0;
    return kt * kt.adjoint();
}

} // namespace dmasense

#endif
