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

#ifndef DMASENSE_BEAMFORM_HPP
#define DMASENSE_BEAMFORM_HPP

#include "conic.hpp"
#include "core.hpp"
#include "em_model.hpp"
#include "fisher.hpp"
#include "scene.hpp"

#include <array>
#include <cstdio>
#include <istream>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace dmasense
{

// ------------------------------------------------------------------------
// Uncertainty discretisation and the digital codebook

struct UncertaintyGrid
{
    std::vector<std::vector<Vec3>> samples; // [p][g]
    std::vector<AngularExtent> extents;     // seen from the TX
    std::vector<BeamCount> counts;
    double beamwidth_a = 0;
    double beamwidth_e = 0;

    int P() const { return static_cast<int>(samples.size()); }
    int beams() const
    {
        int b = 0;
        for (const auto &c : counts)
            b += c.beams();
        return b;
    }
    int M() const { return 3 * beams(); }
};

/// Center first, then +-x, +-y, the four diagonals, then the same pattern on rings of half the radius.
inline std::vector<Vec3> sphere_samples(const Vec3 &center, double u, int count)
{
    std::vector<Vec3> out{center};
    if (u <= 0)
    {
        out.assign(static_cast<std::size_t>(count), center);
        return out;
    }
    const double h = std::sqrt(0.5);
    const std::array<std::array<double, 2>, 8> dirs{
        {{1, 0}, {-1, 0}, {0, 1}, {0, -1}, {h, h}, {-h, -h}, {h, -h}, {-h, h}}};
    for (double ring = u; static_cast<int>(out.size()) < count; ring *= 0.5)
        for (const auto &d : dirs)
        {
            if (static_cast<int>(out.size()) == count)
                break;
            out.push_back(center + Vec3(ring * d[0], ring * d[1], 0.0));
        }
    return out;
}

inline UncertaintyGrid discretize_uncertainty(const Scene &scene, const DmaGeometry &geom, double lambda)
{
    require(!scene.targets.empty(), ErrorKind::invalid_argument, "scene has no targets");
    UncertaintyGrid ug;
    ug.beamwidth_a = lambda / (geom.n_e * geom.d_e);
    ug.beamwidth_e = lambda / (geom.n_rf * geom.d_rf);
    int P = 1;
    for (const auto &t : scene.targets)
    {
        require(t.uncertainty_m >= 0, ErrorKind::invalid_argument, "uncertainty radius must be >= 0");
        const AngularExtent ext = angular_extent(Vec3::Zero(), t.position, t.uncertainty_m, scene.rotation);
        ug.extents.push_back(ext);
        ug.counts.push_back(beam_count(ext, ug.beamwidth_a, ug.beamwidth_e));
        P = std::max(P, ug.counts.back().beams());
    }
    std::vector<std::vector<Vec3>> per_target;
    for (const auto &t : scene.targets)
        per_target.push_back(sphere_samples(t.position, t.uncertainty_m, P));
    ug.samples.resize(static_cast<std::size_t>(P));
    for (int p = 0; p < P; ++p)
        for (const auto &s : per_target)
            ug.samples[static_cast<std::size_t>(p)].push_back(s[static_cast<std::size_t>(p)]);
    return ug;
}

/// [B_sum, B_diff_a, B_diff_e]; within each block target g contributes columns n_g(i, j) = i N_e,g + j.
inline CMat build_digital_codebook(const UncertaintyGrid &ug, const DmaGeometry &geom, double lambda)
{
    std::vector<Steering> beams;
    for (std::size_t g = 0; g < ug.extents.size(); ++g)
    {
        const auto &ext = ug.extents[g];
        for (double a : beam_angles(ext.center_a, ext.half_width, ug.counts[g].n_a))
            for (double e : beam_angles(ext.center_e, ext.half_width, ug.counts[g].n_e))
                beams.push_back(steering_tx_full(a, e, geom, lambda));
    }
    const auto nb = static_cast<Eigen::Index>(beams.size());
    CMat b(geom.n_total(), 3 * nb);
    for (Eigen::Index i = 0; i < nb; ++i)
    {
        b.col(i) = beams[i].value;
        b.col(nb + i) = beams[i].d_azimuth;
        b.col(2 * nb + i) = beams[i].d_elevation;
    }
    return b;
}

// ------------------------------------------------------------------------
// Riemannian conjugate gradient on the complex circle manifold

/// f(k) = dd - 2 Re(k^H c) + k^H G k, i.e. ||d - U k||^2 with c = U^H d and G = U^H U.
struct CircleQuadratic
{
    double dd = 0;
    CVec c;
    CMat gram;

    static CircleQuadratic from_least_squares(const CVec &d, const CMat &U)
    {
        return {d.squaredNorm(), U.adjoint() * d, U.adjoint() * U};
    }
    double value(const CVec &k) const
    {
        return dd - 2.0 * k.dot(c).real() + k.dot(gram * k).real();
    }
    CVec egrad(const CVec &k) const { return 2.0 * (gram * k - c); }
};

struct RcgOptions
{
    int max_iter = 500;
    double tol = 1e-6; // on the Riemannian gradient norm, relative to its initial value
    double armijo = 1e-4;
};

struct RcgResult
{
    CVec k;
    double objective = 0;
    int iterations = 0;
    bool converged = false;
    std::vector<double> trace;
    double max_modulus_error = 0;
    double max_tangency_error = 0;
};

inline CVec retract_circle(const CVec &k)
{
    return k.unaryExpr([](cplx z) { return std::abs(z) > 0 ? z / std::abs(z) : cplx(1.0, 0.0); });
}

/// Projection onto the tangent space at k: v - Re(v o conj(k)) o k.
inline CVec tangent_project(const CVec &k, const CVec &v)
{
    CVec out(v.size());
    for (Eigen::Index n = 0; n < v.size(); ++n)
        out(n) = v(n) - (v(n) * std::conj(k(n))).real() * k(n);
    return out;
}

inline RcgResult riemannian_cg_unit_circle(const CircleQuadratic &f, const CVec &k_init, const RcgOptions &opt = {})
{
    RcgResult r;
    CVec k = retract_circle(k_init);
    auto modulus_error = [](const CVec &v) { return (v.cwiseAbs().array() - 1.0).abs().maxCoeff(); };
    auto tangency = [](const CVec &x, const CVec &v) {
        double m = 0;
        for (Eigen::Index n = 0; n < v.size(); ++n)
            m = std::max(m, std::abs((v(n) * std::conj(x(n))).real()));
        return m;
    };
    double fk = f.value(k);
    r.trace.push_back(fk);
    r.max_modulus_error = modulus_error(k);
    CVec rg = tangent_project(k, f.egrad(k));
    r.max_tangency_error = tangency(k, rg) / std::max(1.0, rg.norm());
    const double stop = opt.tol * std::max(rg.norm(), 1e-300);
    CVec eta = -rg;
    for (int it = 0; it < opt.max_iter; ++it)
    {
        if (rg.norm() <= stop)
        {
            r.converged = true;
            break;
        }
        double slope = rg.dot(eta).real();
        if (slope >= 0)
        {
            eta = -rg;
            slope = -rg.squaredNorm();
        }
        const double curv = eta.dot(f.gram * eta).real();
        double alpha = curv > 0 ? -slope / (2.0 * curv) : 1.0;
        CVec k_try;
        double f_try = 0;
        bool accepted = false;
        for (int bt = 0; bt < 60; ++bt)
        {
            k_try = retract_circle(k + alpha * eta);
            f_try = f.value(k_try);
            if (f_try <= fk + opt.armijo * alpha * slope)
            {
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!accepted || !(f_try <= fk))
            break;
        const CVec rg_old_t = tangent_project(k_try, rg);
        const CVec eta_t = tangent_project(k_try, eta);
        const double rg_old_sq = rg.squaredNorm();
        k = k_try;
        fk = f_try;
        rg = tangent_project(k, f.egrad(k));
        r.iterations = it + 1;
        r.trace.push_back(fk);
        r.max_modulus_error = std::max(r.max_modulus_error, modulus_error(k));
        r.max_tangency_error = std::max(r.max_tangency_error, tangency(k, rg) / std::max(1.0, rg.norm()));
        const double beta = std::max(0.0, rg.dot(rg - rg_old_t).real() / rg_old_sq);
        eta = -rg + beta * eta_t;
    }
    if (!r.converged && rg.norm() <= stop)
        r.converged = true;
    r.k = k;
    r.objective = fk;
    return r;
}

inline RcgResult riemannian_cg_unit_circle(const CVec &d, const CMat &U, const CVec &k_init,
                                           const RcgOptions &opt = {})
{
    return riemannian_cg_unit_circle(CircleQuadratic::from_least_squares(d, U), k_init, opt);
}

// ------------------------------------------------------------------------
// Projection of a digital codebook onto the DMA-feasible set

enum class ProjectionModel
{
    full,              // second-order response with W_MC and P_SA
    no_coupling,       // diag(q)^{-1} P_SA
    no_waveguide_loss  // (Q + W_MC)^{-1}, P_SA removed
};

inline const char *to_string(ProjectionModel m)
{
    switch (m)
    {
    case ProjectionModel::full: return "full";
    case ProjectionModel::no_coupling: return "no_coupling";
    case ProjectionModel::no_waveguide_loss: return "no_waveguide_loss";
    }
    return "unknown";
}

inline CMat projection_response(const DmaModel &model, ProjectionModel mode, const CVec &k)
{
    switch (mode)
    {
    case ProjectionModel::full: return model.second_order(k);
    case ProjectionModel::no_coupling: return model.no_coupling(k);
    case ProjectionModel::no_waveguide_loss: {
        CMat a = model.wmc;
        a.diagonal() += (0.5 * (k.array() + kJ)).matrix();
        return checked_lu(a, "Q_TA + W_MC").inverse();
    }
    }
    return {};
}

/// The P4 split of B - W_TX(k) F = d - U k for the second-order response, in Gram form.
inline CircleQuadratic p4_quadratic(const DmaModel &model, const CMat &B, const CMat &F)
{
    const CMat &wi = model.wmc_inv;
    const CMat Y = model.wmc_inv_psa * F;
    const CMat D = B - Y + 0.5 * kJ * (wi * Y);
    CircleQuadratic q;
    q.dd = D.squaredNorm();
    q.c = -0.5 * (wi.adjoint() * D * Y.adjoint()).diagonal();
    q.gram = 0.25 * (wi.adjoint() * wi).cwiseProduct((Y * Y.adjoint()).transpose());
    return q;
}

/// Explicit d and U (columns -0.5 vec(W^{-1} e_i e_i^T W^{-1} P_SA F)); used for checks.
inline std::pair<CVec, CMat> p4_vectors(const DmaModel &model, const CMat &B, const CMat &F)
{
    const CMat &wi = model.wmc_inv;
    const CMat Y = model.wmc_inv_psa * F;
    const CMat D = B - Y + 0.5 * kJ * (wi * Y);
    const Eigen::Index nt = wi.rows(), m = F.cols();
    CVec d = Eigen::Map<const CVec>(D.data(), nt * m);
    CMat U(nt * m, nt);
    for (Eigen::Index i = 0; i < nt; ++i)
    {
        const CMat ui = -0.5 * wi.col(i) * Y.row(i);
        U.col(i) = Eigen::Map<const CVec>(ui.data(), nt * m);
    }
    return {d, U};
}

struct ProjectionOptions
{
    int outer_iters = 30;
    double tol = 1e-6;
    RcgOptions rcg;
};

struct ProjectionResult
{
    CMat F;
    CVec k;
    double residual = 0;
    std::vector<double> trace; // residual after every half step, starting with the first least-squares fit
    bool pseudo_inverse = false;
    int outer_iterations = 0;
    int rcg_iterations = 0;
    double max_modulus_error = 0;
};

/// Least-squares F for fixed W_TX; falls back to a pseudo-inverse when the normal equations are ill-conditioned.
inline CMat least_squares_digital(const CMat &w, const CMat &B, bool &pinv)
{
    const CMat n = w.adjoint() * w;
    Eigen::PartialPivLU<CMat> lu(n);
    if (lu.rcond() > 1e-12)
        return lu.solve(w.adjoint() * B);
    pinv = true;
    return w.completeOrthogonalDecomposition().solve(B);
}

inline ProjectionResult project_codebook(const CMat &B, const DmaModel &model, ProjectionModel mode,
                                         const CVec &k_init, const ProjectionOptions &opt = {})
{
    require(B.rows() == model.n_total(), ErrorKind::invalid_argument, "codebook has the wrong row count");
    require(k_init.size() == model.n_total(), ErrorKind::invalid_argument, "k_init has the wrong size");
    ProjectionResult r;
    r.k = retract_circle(k_init);
    double prev = std::numeric_limits<double>::infinity();
    for (int outer = 0; outer < std::max(1, opt.outer_iters); ++outer)
    {
        const CMat w = projection_response(model, mode, r.k);
        r.F = least_squares_digital(w, B, r.pseudo_inverse);
        r.residual = (B - w * r.F).squaredNorm();
        r.trace.push_back(r.residual);
        r.outer_iterations = outer + 1;
        if (mode == ProjectionModel::no_waveguide_loss)
            break;
        if (mode == ProjectionModel::full)
        {
            const CircleQuadratic q = p4_quadratic(model, B, r.F);
            const RcgResult rc = riemannian_cg_unit_circle(q, r.k, opt.rcg);
            r.rcg_iterations += rc.iterations;
            r.max_modulus_error = std::max(r.max_modulus_error, rc.max_modulus_error);
            r.k = rc.k;
        }
        else
        {
            // 1/q lies on the line Im = -1, so each row has a closed-form real offset
            const CMat R = model.psa * r.F;
            for (Eigen::Index n = 0; n < R.rows(); ++n)
            {
                const double nn = R.row(n).squaredNorm();
                if (nn <= 0)
                    continue;
                const double s = (R.row(n).conjugate().cwiseProduct(B.row(n) + kJ * R.row(n))).sum().real() / nn;
                const cplx q = 1.0 / cplx(s, -1.0);
                r.k(n) = 2.0 * q - kJ;
            }
            r.k = retract_circle(r.k);
        }
        const CMat w2 = projection_response(model, mode, r.k);
        r.residual = (B - w2 * r.F).squaredNorm();
        r.trace.push_back(r.residual);
        if (std::abs(prev - r.residual) <= opt.tol * std::max(r.residual, 1e-300))
            break;
        prev = r.residual;
    }
    r.max_modulus_error = std::max(r.max_modulus_error, (r.k.cwiseAbs().array() - 1.0).abs().maxCoeff());
    return r;
}

/// B_dma = (W^{-1} - W^{-1} diag(0.5(j1 + k)) W^{-1}) P_SA F.
inline CMat assemble_bdma(const CVec &k, const CMat &F, const DmaModel &model) { return model.second_order(k) * F; }

inline CVec random_unit_phases(int n, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ud(0.0, 2.0 * kPi);
    CVec k(n);
    for (int i = 0; i < n; ++i)
        k(i) = std::exp(kJ * ud(rng));
    return k;
}

// ------------------------------------------------------------------------
// Hermitian parametrisations for the SDPs

/// Real coordinates of a Hermitian n x n matrix: diagonal entries (unless fixed to one), then Re/Im of i < j.
class HermitianParam
{
public:
    struct Slot
    {
        int i, j;
        int kind; // 0 diagonal, 1 real part, 2 imaginary part
    };

    explicit HermitianParam(int n, bool unit_diagonal = false) : n_(n), unit_(unit_diagonal)
    {
        if (!unit_)
            for (int i = 0; i < n; ++i)
                slots_.push_back({i, i, 0});
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j)
            {
                slots_.push_back({i, j, 1});
                slots_.push_back({i, j, 2});
            }
    }

    int n() const { return n_; }
    int size() const { return static_cast<int>(slots_.size()); }
    const std::vector<Slot> &slots() const { return slots_; }

    /// Re tr(E_v B) for every coordinate v.
    Vec coefficients(const CMat &B) const
    {
        Vec out(size());
        for (int v = 0; v < size(); ++v)
        {
            const Slot &s = slots_[static_cast<std::size_t>(v)];
            switch (s.kind)
            {
            case 0: out(v) = B(s.i, s.i).real(); break;
            case 1: out(v) = B(s.j, s.i).real() + B(s.i, s.j).real(); break;
            default: out(v) = B(s.i, s.j).imag() - B(s.j, s.i).imag(); break;
            }
        }
        return out;
    }

    CMat build(const Vec &x, int offset = 0) const
    {
        CMat h = unit_ ? CMat(CMat::Identity(n_, n_)) : CMat(CMat::Zero(n_, n_));
        for (int v = 0; v < size(); ++v)
        {
            const Slot &s = slots_[static_cast<std::size_t>(v)];
            const double val = x(offset + v);
            if (s.kind == 0)
                h(s.i, s.i) += val;
            else if (s.kind == 1)
            {
                h(s.i, s.j) += val;
                h(s.j, s.i) += val;
            }
            else
            {
                h(s.i, s.j) += kJ * val;
                h(s.j, s.i) -= kJ * val;
            }
        }
        return h;
    }

    Vec parameters(const CMat &h) const
    {
        Vec x(size());
        for (int v = 0; v < size(); ++v)
        {
            const Slot &s = slots_[static_cast<std::size_t>(v)];
            x(v) = s.kind == 0 ? h(s.i, s.i).real() : s.kind == 1 ? h(s.i, s.j).real() : h(s.i, s.j).imag();
        }
        return x;
    }

    std::vector<conic::SymEntry> embedded_entries(int v) const
    {
        const Slot &s = slots_[static_cast<std::size_t>(v)];
        const cplx val = s.kind == 2 ? kJ : cplx(1.0, 0.0);
        return conic::ConicProblem::embed_entries(n_, {{s.i, s.j, val}});
    }

    /// Adds the real-embedded constraint  base + sum_v x_{offset+v} E_v >= 0.
    void add_psd(conic::ConicProblem &prob, int offset, const std::string &label) const
    {
        const CMat base = unit_ ? CMat(CMat::Identity(n_, n_)) : CMat(CMat::Zero(n_, n_));
        auto &lmi = prob.add_hermitian_psd(n_, base, label);
        for (int v = 0; v < size(); ++v)
            prob.add_sparse_term(lmi, offset + v, embedded_entries(v));
    }

private:
    int n_;
    bool unit_;
    std::vector<Slot> slots_;
};

// ------------------------------------------------------------------------
// Design context: one cached FIM evaluator per grid sample

struct DesignContext
{
    Scene scene;
    OfdmGrid grid;
    DmaModel model;
    double lambda = 0;
    UncertaintyGrid ugrid;
    RxCombiner rx;
    std::vector<LocationFimEvaluator> samples;
    double budget = 0; // per-frame power P_tot / M
    int M = 0;
    std::vector<std::string> warnings;

    int G() const { return scene.n_targets(); }
    int n_pos() const { return 3 * G(); }
    int P() const { return static_cast<int>(samples.size()); }
    double clock_std_s() const { return scene.clock_std_s; }
};

/// Builds the evaluators. Design covariances are per frame; the observation FIM counts all M frames.
inline DesignContext build_design_context(const Scene &scene, const OfdmGrid &grid, const DmaModel &model)
{
    grid.validate();
    DesignContext ctx;
    ctx.scene = scene;
    ctx.grid = grid;
    ctx.model = model;
    ctx.lambda = grid.wavelength();
    const std::string warn = scene.validate(model.n_rf());
    if (!warn.empty())
        ctx.warnings.push_back(warn);
    ctx.ugrid = discretize_uncertainty(scene, model.geom, ctx.lambda);
    ctx.M = ctx.ugrid.M();
    ctx.budget = scene.power_budget_w;
    ctx.rx = rx_combiner(scene, ctx.ugrid.counts, ctx.lambda);
    if (ctx.rx.padded)
        ctx.warnings.push_back("receive codebook is rank deficient; combiner padded with canonical columns");
    for (const auto &pts : ctx.ugrid.samples)
    {
        Scene sp = scene;
        for (std::size_t g = 0; g < pts.size(); ++g)
            sp.targets[g].position = pts[g];
        const PathParams params = path_params(sp, ctx.lambda, 0.0);
        FisherKernels fk = build_fisher_kernels(params, sp, model.geom, grid, ctx.rx.w);
        fk.omega *= static_cast<double>(ctx.M);
        ctx.samples.emplace_back(std::move(fk));
    }
    return ctx;
}

struct WorstCase
{
    double peb = std::numeric_limits<double>::infinity();       // max_p PEB_p
    double surrogate = std::numeric_limits<double>::infinity(); // max_a sum_p CRB_p[a, a]
    std::vector<double> per_sample;
};

inline WorstCase evaluate_covariance(const DesignContext &ctx, const CMat &z)
{
    WorstCase w;
    w.peb = 0;
    Vec sums = Vec::Zero(ctx.n_pos());
    bool singular = false;
    for (const auto &s : ctx.samples)
    {
        const PebResult r = s.peb_of(z);
        w.per_sample.push_back(r.value);
        if (r.singular)
        {
            singular = true;
            continue;
        }
        w.peb = std::max(w.peb, r.value);
        for (int a = 0; a < ctx.n_pos(); ++a)
            sums(a) += r.crb(a, a);
    }
    if (singular)
    {
        w.peb = std::numeric_limits<double>::infinity();
        return w;
    }
    w.surrogate = sums.maxCoeff();
    return w;
}

// ------------------------------------------------------------------------
// Epigraph SDP shared by P1, P2, P5 and the single-point Z design

/// J~_p(x) = constant + sum_v x_v coeff[v] (location domain, clock prior already applied).
struct FimAffine
{
    Mat constant;
    std::vector<Mat> coeff;
};

/// Applies the clock prior (or eliminates dt) to an observation-domain affine map.
inline FimAffine with_clock_prior(Mat constant, std::vector<Mat> coeff, double clock_std_s)
{
    FimAffine f;
    const Eigen::Index n = constant.rows();
    if (clock_std_s == 0.0)
    {
        f.constant = constant.topLeftCorner(n - 1, n - 1);
        for (auto &c : coeff)
            f.coeff.push_back(c.topLeftCorner(n - 1, n - 1));
        return f;
    }
    f.constant = std::move(constant);
    if (std::isfinite(clock_std_s))
        f.constant(n - 1, n - 1) += 1.0 / (clock_std_s * clock_std_s);
    f.coeff = std::move(coeff);
    return f;
}

/// Splits per-(a, b) coefficient vectors into per-variable matrices.
inline std::vector<Mat> coefficient_matrices(const std::vector<Vec> &per_ab, int dim)
{
    const Eigen::Index nv = per_ab.front().size();
    std::vector<Mat> out(static_cast<std::size_t>(nv), Mat::Zero(dim, dim));
    for (int a = 0; a < dim; ++a)
        for (int b = a; b < dim; ++b)
        {
            const Vec &v = per_ab[static_cast<std::size_t>(a) * dim + b];
            for (Eigen::Index i = 0; i < nv; ++i)
            {
                out[static_cast<std::size_t>(i)](a, b) = v(i);
                out[static_cast<std::size_t>(i)](b, a) = v(i);
            }
        }
    return out;
}

struct Epigraph
{
    int eps0 = 0;
    int t = 0;
    double t0 = 1;
};

/// min t s.t. [[J~_p, e_a], [e_a^T, eps_ap]] >= 0 and sum_p eps_ap <= t for every position index a.
/// Each LMI is whitened by the reference FIM J~_p(x_ref): with T J~_ref T^T = I, the block [[T J~ T^T, T e_a / c],
/// [., eps^]] gives eps = c^2 eps^ and c^2 = CRB_ref[a, a], so every eps^ equals one at the reference.
inline Epigraph add_crb_epigraph(conic::ConicProblem &prob, const std::vector<FimAffine> &maps, int n_pos,
                                 const Vec &x_ref)
{
    const int P = static_cast<int>(maps.size());
    const int n = static_cast<int>(maps.front().constant.rows());
    Epigraph ep;
    ep.eps0 = prob.add_variables(n_pos * P);
    ep.t = prob.add_variables(1);
    std::vector<Mat> T(static_cast<std::size_t>(P));
    Mat crb_ref(n_pos, P);
    for (int p = 0; p < P; ++p)
    {
        const FimAffine &m = maps[static_cast<std::size_t>(p)];
        Mat jr = m.constant;
        for (std::size_t v = 0; v < m.coeff.size(); ++v)
            jr += x_ref(static_cast<Eigen::Index>(v)) * m.coeff[v];
        Vec sp(n);
        for (int i = 0; i < n; ++i)
            sp(i) = jr(i, i) > 0 && std::isfinite(jr(i, i)) ? 1.0 / std::sqrt(jr(i, i)) : 1.0;
        const Mat js = sp.asDiagonal() * jr * sp.asDiagonal();
        Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (js + js.transpose()));
        const double floor = std::max(es.eigenvalues().cwiseAbs().maxCoeff(), 1.0) * 1e-12;
        const Vec inv_root = es.eigenvalues().cwiseMax(floor).cwiseSqrt().cwiseInverse();
        Mat &tp = T[static_cast<std::size_t>(p)];
        tp = inv_root.asDiagonal() * es.eigenvectors().transpose() * sp.asDiagonal();
        for (int a = 0; a < n_pos; ++a)
            crb_ref(a, p) = tp.col(a).squaredNorm();
    }
    ep.t0 = crb_ref.rowwise().sum().maxCoeff();
    for (int p = 0; p < P; ++p)
    {
        const FimAffine &m = maps[static_cast<std::size_t>(p)];
        const Mat &tp = T[static_cast<std::size_t>(p)];
        std::vector<Mat> terms;
        for (const auto &c : m.coeff)
        {
            Mat t = Mat::Zero(n + 1, n + 1);
            t.topLeftCorner(n, n) = tp * c * tp.transpose();
            terms.push_back(std::move(t));
        }
        Mat base = Mat::Zero(n + 1, n + 1);
        base.topLeftCorner(n, n) = tp * m.constant * tp.transpose();
        for (int a = 0; a < n_pos; ++a)
        {
            Mat c0 = base;
            const Vec h = tp.col(a) / std::sqrt(crb_ref(a, p));
            c0.block(0, n, n, 1) = h;
            c0.block(n, 0, 1, n) = h.transpose();
            auto &lmi = prob.add_psd(n + 1, c0, "crb p=" + std::to_string(p) + " a=" + std::to_string(a));
            for (std::size_t v = 0; v < terms.size(); ++v)
                if (terms[v].cwiseAbs().maxCoeff() > 0)
                    prob.add_dense_term(lmi, static_cast<int>(v), terms[v]);
            prob.add_sparse_term(lmi, ep.eps0 + p * n_pos + a, {{n, n, 1.0}});
        }
    }
    for (int a = 0; a < n_pos; ++a)
    {
        std::vector<std::pair<int, double>> row;
        for (int p = 0; p < P; ++p)
            row.push_back({ep.eps0 + p * n_pos + a, crb_ref(a, p) / ep.t0});
        row.push_back({ep.t, -1.0});
        prob.add_linear(row, 0.0, false, "sum a=" + std::to_string(a));
    }
    prob.set_objective(ep.t, 1.0);
    return ep;
}

struct SdpReport
{
    conic::Status status = conic::Status::numerical_failure;
    bool usable = false;
    int iterations = 0;
    double objective = std::numeric_limits<double>::infinity(); // t in m^2
    double relative_gap = 0;
};

inline SdpReport report(const conic::ConicSolution &s, const Epigraph &ep)
{
    SdpReport r;
    r.status = s.status;
    r.usable = s.usable();
    r.iterations = s.iterations;
    r.objective = ep.t0 * s.x(ep.t);
    r.relative_gap = s.relative_gap;
    return r;
}

// ------------------------------------------------------------------------
// P1: digital covariance X for fixed analog weights

struct P1Result
{
    CMat X;
    SdpReport sdp;
};

inline P1Result solve_P1(const DesignContext &ctx, const CVec &k, const conic::Settings &st = {})
{
    const CMat w = ctx.model.second_order(k);
    const CMat whw = w.adjoint() * w;
    const double tau = whw.trace().real();
    require(tau > 0, ErrorKind::singular_configuration, "W_TX is zero");
    const double sx = ctx.budget / tau; // X = sx * Xhat
    const int nrf = ctx.model.n_rf();
    const HermitianParam hp(nrf);
    std::vector<FimAffine> maps;
    for (const auto &s : ctx.samples)
    {
        const int dim = s.dim();
        const LinearFimMap lm = fim_linear_in_X(w, s.kernels.tx_basis, s.gam, dim);
        std::vector<Vec> per_ab(lm.coeff.size());
        for (std::size_t i = 0; i < lm.coeff.size(); ++i)
            per_ab[i] = sx * hp.coefficients(lm.coeff[i]);
        maps.push_back(with_clock_prior(Mat::Zero(dim, dim), coefficient_matrices(per_ab, dim), ctx.clock_std_s()));
    }
    conic::ConicProblem prob(hp.size());
    hp.add_psd(prob, 0, "X");
    {
        const Vec pc = hp.coefficients(whw);
        std::vector<std::pair<int, double>> row;
        for (int v = 0; v < hp.size(); ++v)
            if (pc(v) != 0.0)
                row.push_back({v, pc(v) / tau});
        prob.add_linear(row, 1.0, false, "power");
    }
    const Epigraph ep = add_crb_epigraph(prob, maps, ctx.n_pos(), hp.parameters(CMat::Identity(nrf, nrf) * 0.5));
    const auto sol = conic::solve_conic(prob, st);
    P1Result r;
    r.sdp = report(sol, ep);
    r.X = sx * hp.build(sol.x);
    r.X = 0.5 * (r.X + r.X.adjoint()).eval();
    return r;
}

// ------------------------------------------------------------------------
// P2: lifted analog weights K~ = [k; 1][k; 1]^H for fixed X

struct P2Result
{
    CMat K;
    CVec k;
    SdpReport sdp;
};

/// k from the phases of the principal eigenvector of K~, rotated so the last entry has zero phase.
inline CVec recover_k(const CMat &kt)
{
    Eigen::SelfAdjointEigenSolver<CMat> es(0.5 * (kt + kt.adjoint()));
    const CVec v = es.eigenvectors().col(kt.rows() - 1);
    const Eigen::Index n = kt.rows() - 1;
    const cplx ref = std::abs(v(n)) > 0 ? std::conj(v(n)) / std::abs(v(n)) : cplx(1.0, 0.0);
    CVec k(n);
    for (Eigen::Index i = 0; i < n; ++i)
    {
        const cplx z = v(i) * ref;
        k(i) = std::abs(z) > 0 ? z / std::abs(z) : cplx(1.0, 0.0);
    }
    return k;
}

inline P2Result solve_P2(const DesignContext &ctx, const CMat &X, const CVec &k_ref, const conic::Settings &st = {})
{
    const int nt = ctx.model.n_total();
    const HermitianParam hp(nt + 1, true);
    const CMat eye = CMat::Identity(nt + 1, nt + 1);
    std::vector<FimAffine> maps;
    for (const auto &s : ctx.samples)
    {
        const int dim = s.dim();
        const KFimMap km = fim_linear_in_K(ctx.model.wmc_inv, ctx.model.psa, X, s.kernels.tx_basis, s.gam, dim);
        Mat constant(dim, dim);
        std::vector<Vec> per_ab(km.R.size());
        for (int a = 0; a < dim; ++a)
            for (int b = 0; b < dim; ++b)
            {
                const CMat &R = km.R[static_cast<std::size_t>(a) * dim + b];
                constant(a, b) = km.constant(a, b) + R.trace().real();
                per_ab[static_cast<std::size_t>(a) * dim + b] = hp.coefficients(R);
            }
        constant = 0.5 * (constant + constant.transpose()).eval();
        maps.push_back(with_clock_prior(constant, coefficient_matrices(per_ab, dim), ctx.clock_std_s()));
    }
    conic::ConicProblem prob(hp.size());
    hp.add_psd(prob, 0, "K");
    {
        const KPowerMap pm = power_linear_in_K(ctx.model.wmc_inv, ctx.model.psa, X);
        const Vec pc = hp.coefficients(pm.V);
        const double base = pm.constant + pm.V.trace().real();
        std::vector<std::pair<int, double>> row;
        for (int v = 0; v < hp.size(); ++v)
            if (pc(v) != 0.0)
                row.push_back({v, pc(v) / ctx.budget});
        prob.add_linear(row, (ctx.budget - base) / ctx.budget, false, "power");
    }
    const Epigraph ep = add_crb_epigraph(prob, maps, ctx.n_pos(), hp.parameters(lift_weights(k_ref)));
    const auto sol = conic::solve_conic(prob, st);
    P2Result r;
    r.sdp = report(sol, ep);
    r.K = hp.build(sol.x);
    r.k = recover_k(r.K);
    return r;
}

// ------------------------------------------------------------------------
// Randomised recovery of F

/// Columns from CN(0, X) rescaled so that ||W F||_F^2 = M budget; top-M eigenpairs when M <= N_RF.
inline CMat recover_F(const CMat &X, int M, const CMat &w, double budget, std::uint64_t seed)
{
    const Eigen::Index n = X.rows();
    Eigen::SelfAdjointEigenSolver<CMat> es(0.5 * (X + X.adjoint()));
    const Vec ev = es.eigenvalues().cwiseMax(0.0);
    CMat F(n, M);
    if (M <= n)
    {
        for (int m = 0; m < M; ++m)
            F.col(m) = std::sqrt(M * ev(n - 1 - m)) * es.eigenvectors().col(n - 1 - m);
    }
    else
    {
        const CMat root = es.eigenvectors() * ev.cwiseSqrt().asDiagonal();
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> nd;
        CMat N(n, M);
        for (int m = 0; m < M; ++m)
            for (Eigen::Index i = 0; i < n; ++i)
            {
                const double re = nd(rng);
                const double im = nd(rng);
                N(i, m) = cplx(re, im) * std::sqrt(0.5);
            }
        F = root * N;
    }
    const double p = w.size() ? (w * F).squaredNorm() : F.squaredNorm();
    if (p > 0)
        F *= std::sqrt(M * budget / p);
    return F;
}

// ------------------------------------------------------------------------
// Alternating P1 / P2

struct AlternationOptions
{
    int max_iter = 10;
    double tol = 1e-3;
    bool skip_p2 = false;
    conic::Settings solver;
};

struct AlternationResult
{
    CMat X;
    CVec k;
    std::vector<double> trace;
    int p1_solves = 0;
    int p2_solves = 0;
    int solver_iterations = 0;
    std::vector<std::string> flags;
};

inline CMat rescale_to_budget(const DesignContext &ctx, const CMat &X, const CVec &k)
{
    const CMat w = ctx.model.second_order(k);
    const double p = (w.adjoint() * w * X).trace().real();
    return p > 0 ? CMat(X * (ctx.budget / p)) : X;
}

/// Starts from k_init; a P2 update is kept only when it lowers the epigraph objective.
inline AlternationResult alternate_P1_P2(const DesignContext &ctx, const CVec &k_init, const AlternationOptions &opt = {})
{
    AlternationResult r;
    r.k = retract_circle(k_init);
    P1Result p1 = solve_P1(ctx, r.k, opt.solver);
    ++r.p1_solves;
    r.solver_iterations += p1.sdp.iterations;
    require(p1.sdp.usable, ErrorKind::solver_failure,
            std::string("P1 solver status ") + conic::to_string(p1.sdp.status));
    r.X = p1.X;
    double current = evaluate_covariance(ctx, ctx.model.second_order(r.k) * r.X * ctx.model.second_order(r.k).adjoint()).surrogate;
    r.trace.push_back(current);
    if (opt.skip_p2)
    {
        r.flags.push_back("p2_skipped");
        return r;
    }
    for (int it = 1; it <= opt.max_iter; ++it)
    {
        const P2Result p2 = solve_P2(ctx, r.X, r.k, opt.solver);
        ++r.p2_solves;
        r.solver_iterations += p2.sdp.iterations;
        if (!p2.sdp.usable)
        {
            r.flags.push_back(std::string("p2_") + conic::to_string(p2.sdp.status));
            break;
        }
        const CMat x2 = rescale_to_budget(ctx, r.X, p2.k);
        const CMat w2 = ctx.model.second_order(p2.k);
        const double cand = evaluate_covariance(ctx, w2 * x2 * w2.adjoint()).surrogate;
        if (!(cand < current))
        {
            r.flags.push_back("p2_rejected");
            break;
        }
        r.k = p2.k;
        r.X = x2;
        r.trace.push_back(cand);
        const double before = current;
        current = cand;
        if (it == opt.max_iter)
            break;
        p1 = solve_P1(ctx, r.k, opt.solver);
        ++r.p1_solves;
        r.solver_iterations += p1.sdp.iterations;
        if (!p1.sdp.usable)
        {
            r.flags.push_back(std::string("p1_") + conic::to_string(p1.sdp.status));
            break;
        }
        const CMat w1 = ctx.model.second_order(r.k);
        const double after = evaluate_covariance(ctx, w1 * p1.X * w1.adjoint()).surrogate;
        if (after < current)
        {
            r.X = p1.X;
            current = after;
        }
        r.trace.push_back(current);
        if (std::abs(before - current) <= opt.tol * current)
            break;
    }
    return r;
}

// ------------------------------------------------------------------------
// Power allocation over a fixed codebook

struct PowerResult
{
    Vec rho;
    SdpReport sdp;
    bool fallback = false;
};

/// Observation FIM of the rank-one covariance b b^H at every sample.
inline std::vector<Mat> beam_fims(const LocationFimEvaluator &s, const CMat &B)
{
    std::vector<Mat> out;
    const CMat vb = s.kernels.tx_basis.adjoint() * B;
    for (Eigen::Index m = 0; m < B.cols(); ++m)
        out.push_back(s.observation_projected(vb.col(m) * vb.col(m).adjoint()));
    return out;
}

inline PowerResult power_allocation_P5(const DesignContext &ctx, const CMat &B, const conic::Settings &st = {})
{
    const auto M = static_cast<int>(B.cols());
    Vec scale(M);
    for (int m = 0; m < M; ++m)
    {
        const double nb = B.col(m).squaredNorm();
        scale(m) = nb > 0 ? ctx.budget / nb : 0.0;
    }
    std::vector<FimAffine> maps;
    for (const auto &s : ctx.samples)
    {
        auto fims = beam_fims(s, B);
        for (int m = 0; m < M; ++m)
            fims[static_cast<std::size_t>(m)] *= scale(m);
        maps.push_back(with_clock_prior(Mat::Zero(s.dim(), s.dim()), std::move(fims), ctx.clock_std_s()));
    }
    conic::ConicProblem prob(M);
    std::vector<std::pair<int, double>> total;
    for (int m = 0; m < M; ++m)
    {
        prob.add_linear({{m, -1.0}}, 0.0, false, "rho>=0");
        total.push_back({m, 1.0});
    }
    prob.add_linear(total, 1.0, false, "power");
    const Epigraph ep = add_crb_epigraph(prob, maps, ctx.n_pos(), Vec::Constant(M, 1.0 / M));
    const auto sol = conic::solve_conic(prob, st);
    PowerResult r;
    r.sdp = report(sol, ep);
    r.rho = sol.x.head(M).cwiseMax(0.0).cwiseProduct(scale);
    return r;
}

/// Maximises sum_p sum_a [J~_p]_aa, linear in rho; solved as an LP.
inline PowerResult power_allocation_P6(const DesignContext &ctx, const CMat &B)
{
    const auto M = static_cast<int>(B.cols());
    Vec gain = Vec::Zero(M), cost(M);
    for (int m = 0; m < M; ++m)
        cost(m) = B.col(m).squaredNorm();
    for (const auto &s : ctx.samples)
    {
        const auto fims = beam_fims(s, B);
        for (int m = 0; m < M; ++m)
            for (int a = 0; a < ctx.n_pos(); ++a)
                gain(m) += fims[static_cast<std::size_t>(m)](a, a);
    }
    PowerResult r;
    r.sdp.status = conic::Status::optimal;
    r.sdp.usable = true;
    if (gain.cwiseAbs().maxCoeff() <= 0)
    {
        r.fallback = true;
        r.rho = Vec::Constant(M, ctx.budget / cost.sum());
        return r;
    }
    // normalise the objective and the budget row for the simplex
    const double gs = gain.cwiseAbs().maxCoeff();
    Mat A(1, M);
    A.row(0) = (cost / ctx.budget).transpose();
    conic::Bounds bounds;
    bounds.lower = Vec::Zero(M);
    const auto lp = conic::solve_lp(-gain / gs, A, Vec::Ones(1), bounds);
    require(lp.status == conic::LpStatus::optimal, ErrorKind::solver_failure,
            std::string("P6 LP status ") + conic::to_string(lp.status));
    r.rho = lp.x.cwiseMax(0.0);
    r.sdp.iterations = lp.iterations;
    r.sdp.objective = -lp.objective * gs;
    return r;
}

// ------------------------------------------------------------------------
// Single-point design over a general transmit covariance Z

struct CovarianceResult
{
    CMat Z;
    SdpReport sdp;
};

inline CovarianceResult design_general_covariance(const DesignContext &ctx, const conic::Settings &st = {})
{
    const int nt = ctx.model.n_total();
    const HermitianParam hp(nt);
    const double sz = ctx.budget / nt;
    std::vector<FimAffine> maps;
    for (const auto &s : ctx.samples)
    {
        const CMat &V = s.kernels.tx_basis;
        std::vector<Mat> coeff;
        for (const auto &slot : hp.slots())
        {
            const CVec vi = V.row(slot.i).adjoint();
            const CVec vj = V.row(slot.j).adjoint();
            CMat zh;
            if (slot.kind == 0)
                zh = vi * vi.adjoint();
            else if (slot.kind == 1)
                zh = vi * vj.adjoint() + vj * vi.adjoint();
            else
                zh = kJ * (vi * vj.adjoint()) - kJ * (vj * vi.adjoint());
            coeff.push_back(sz * s.observation_projected(zh));
        }
        maps.push_back(with_clock_prior(Mat::Zero(s.dim(), s.dim()), std::move(coeff), ctx.clock_std_s()));
    }
    conic::ConicProblem prob(hp.size());
    hp.add_psd(prob, 0, "Z");
    std::vector<std::pair<int, double>> tr;
    for (int v = 0; v < hp.size(); ++v)
        if (hp.slots()[static_cast<std::size_t>(v)].kind == 0)
            tr.push_back({v, 1.0 / nt});
    prob.add_linear(tr, 1.0, false, "power");
    const Epigraph ep = add_crb_epigraph(prob, maps, ctx.n_pos(), hp.parameters(CMat::Identity(nt, nt) * 0.5));
    const auto sol = conic::solve_conic(prob, st);
    CovarianceResult r;
    r.sdp = report(sol, ep);
    r.Z = sz * hp.build(sol.x);
    return r;
}

/// Relative Frobenius change when Z is projected onto span[A_TX, dA/dtheta_a, dA/dtheta_e] of a sample.
inline double span_residual(const CMat &Z, const CMat &basis)
{
    const Eigen::HouseholderQR<CMat> qr(basis);
    const CMat q = qr.householderQ() * CMat::Identity(basis.rows(), basis.cols());
    const CMat pz = q * (q.adjoint() * Z * q) * q.adjoint();
    return (Z - pz).norm() / Z.norm();
}

// ------------------------------------------------------------------------
// Strategies

enum class Strategy
{
    direct_crb,
    codebook_sdp,
    codebook_lp_bound,
    no_coupling_codebook
};

inline const char *to_string(Strategy s)
{
    switch (s)
    {
    case Strategy::direct_crb: return "direct_crb";
    case Strategy::codebook_sdp: return "codebook_sdp";
    case Strategy::codebook_lp_bound: return "codebook_lp_bound";
    case Strategy::no_coupling_codebook: return "no_coupling_codebook";
    }
    return "unknown";
}

inline Strategy parse_strategy(const std::string &s)
{
    for (Strategy v : {Strategy::direct_crb, Strategy::codebook_sdp, Strategy::codebook_lp_bound,
                       Strategy::no_coupling_codebook})
        if (s == to_string(v))
            return v;
    throw Error(ErrorKind::invalid_argument, "unknown strategy '" + s + "'");
}

struct DesignOptions
{
    std::uint64_t seed = 1;
    ProjectionOptions projection;
    AlternationOptions alternation;
    conic::Settings solver;
};

/// Codebook and its DMA projection, shared by the codebook strategies and the direct warm start.
struct CodebookStage
{
    CMat bdig;
    ProjectionModel mode = ProjectionModel::full;
    ProjectionResult projection;
    CMat bdma;
};

inline CodebookStage build_codebook_stage(const DesignContext &ctx, ProjectionModel mode, const DesignOptions &opt)
{
    CodebookStage st;
    st.mode = mode;
    st.bdig = build_digital_codebook(ctx.ugrid, ctx.model.geom, ctx.lambda);
    const CVec k0 = random_unit_phases(ctx.model.n_total(), derive_seed(opt.seed, 0xC0DE));
    st.projection = project_codebook(st.bdig, ctx.model, mode, k0, opt.projection);
    st.bdma = projection_response(ctx.model, mode, st.projection.k) * st.projection.F;
    return st;
}

struct BeamDesign
{
    Strategy strategy = Strategy::codebook_sdp;
    CVec k;
    CMat F;
    CMat X;    // direct_crb only
    CMat bdma; // N_T x M
    Vec rho;   // codebook strategies
    CMat Z;    // per-frame transmit covariance used for evaluation
    WorstCase worst;
    std::vector<double> objective_trace;
    std::vector<double> residual_trace;
    int solver_iterations = 0;
    int p1_solves = 0;
    int p2_solves = 0;
    std::string solver_status = "optimal";
    std::vector<std::string> flags;
};

inline BeamDesign design_codebook(const DesignContext &ctx, const CodebookStage &stage, Strategy strategy,
                                  const DesignOptions &opt = {})
{
    BeamDesign d;
    d.strategy = strategy;
    d.k = stage.projection.k;
    d.F = stage.projection.F;
    d.bdma = stage.bdma;
    d.residual_trace = stage.projection.trace;
    if (stage.projection.pseudo_inverse)
        d.flags.push_back("pseudo_inverse");
    const PowerResult pr = strategy == Strategy::codebook_lp_bound ? power_allocation_P6(ctx, d.bdma)
                                                                   : power_allocation_P5(ctx, d.bdma, opt.solver);
    require(pr.sdp.usable, ErrorKind::solver_failure,
            std::string("power allocation status ") + conic::to_string(pr.sdp.status));
    if (pr.fallback)
        d.flags.push_back("uniform_fallback");
    d.solver_status = conic::to_string(pr.sdp.status);
    d.solver_iterations = pr.sdp.iterations;
    d.rho = pr.rho;
    d.Z = d.bdma * d.rho.cast<cplx>().asDiagonal() * d.bdma.adjoint();
    d.Z = 0.5 * (d.Z + d.Z.adjoint()).eval();
    d.objective_trace.push_back(pr.sdp.objective);
    d.worst = evaluate_covariance(ctx, d.Z);
    return d;
}

/// Direct CRB design warm-started from the projected codebook's analog weights.
inline BeamDesign design_direct(const DesignContext &ctx, const CVec &k_init, const DesignOptions &opt = {})
{
    BeamDesign d;
    d.strategy = Strategy::direct_crb;
    AlternationOptions ao = opt.alternation;
    ao.solver = opt.solver;
    const AlternationResult ar = alternate_P1_P2(ctx, k_init, ao);
    d.k = ar.k;
    d.X = ar.X;
    d.objective_trace = ar.trace;
    d.p1_solves = ar.p1_solves;
    d.p2_solves = ar.p2_solves;
    d.solver_iterations = ar.solver_iterations;
    d.flags = ar.flags;
    const CMat w = ctx.model.second_order(d.k);
    d.Z = w * d.X * w.adjoint();
    d.Z = 0.5 * (d.Z + d.Z.adjoint()).eval();
    d.worst = evaluate_covariance(ctx, d.Z);
    return d;
}

struct DirectRealization
{
    CMat F;
    CMat Z;        // per-frame covariance W F F^H W^H / M
    double peb = std::numeric_limits<double>::infinity();
    int candidate = -1;
};

/// Gaussian randomisation: draws n_samples candidate F and keeps the one with the lowest worst-case PEB.
inline DirectRealization realize_direct(const DesignContext &ctx, const BeamDesign &d, int n_samples,
                                        std::uint64_t seed)
{
    require(n_samples >= 1, ErrorKind::invalid_argument, "n_samples must be >= 1");
    const CMat w = ctx.model.second_order(d.k);
    DirectRealization best;
    for (int c = 0; c < n_samples; ++c)
    {
        const CMat F = recover_F(d.X, ctx.M, w, ctx.budget, derive_seed(seed, static_cast<std::uint64_t>(c)));
        const CMat wf = w * F;
        const CMat z = wf * wf.adjoint() / static_cast<double>(ctx.M);
        const double peb = evaluate_covariance(ctx, z).peb;
        if (best.candidate < 0 || peb < best.peb)
        {
            best.F = F;
            best.Z = z;
            best.peb = peb;
            best.candidate = c;
        }
        if (ctx.M <= d.X.rows())
            break; // deterministic branch
    }
    return best;
}

inline BeamDesign design_strategy(const DesignContext &ctx, Strategy s, const DesignOptions &opt = {})
{
    if (s == Strategy::no_coupling_codebook)
        return design_codebook(ctx, build_codebook_stage(ctx, ProjectionModel::no_coupling, opt), s, opt);
    const CodebookStage stage = build_codebook_stage(ctx, ProjectionModel::full, opt);
    if (s == Strategy::direct_crb)
    {
        BeamDesign d = design_direct(ctx, stage.projection.k, opt);
        d.bdma = stage.bdma;
        d.residual_trace = stage.projection.trace;
        return d;
    }
    return design_codebook(ctx, stage, s, opt);
}

// ------------------------------------------------------------------------
// Text serialisation ("re+imj" complex entries)

inline std::string format_complex(cplx z)
{
    char buf[80];
    std::snprintf(buf, sizeof buf, "%.17g%+.17gj", z.real(), z.imag());
    return buf;
}

inline cplx parse_complex(const std::string &s)
{
    require(!s.empty() && s.back() == 'j', ErrorKind::parse_error, "complex value '" + s + "' must end in j");
    std::size_t split = std::string::npos;
    for (std::size_t i = s.size() - 1; i > 0; --i)
        if ((s[i] == '+' || s[i] == '-') && s[i - 1] != 'e' && s[i - 1] != 'E')
        {
            split = i;
            break;
        }
    require(split != std::string::npos, ErrorKind::parse_error, "complex value '" + s + "' has no imaginary part");
    try
    {
        std::size_t used = 0;
        const double re = std::stod(s.substr(0, split), &used);
        require(used == split, ErrorKind::parse_error, "bad real part in '" + s + "'");
        const std::string im_s = s.substr(split, s.size() - split - 1);
        const double im = std::stod(im_s, &used);
        require(used == im_s.size(), ErrorKind::parse_error, "bad imaginary part in '" + s + "'");
        return {re, im};
    }
    catch (const std::logic_error &)
    {
        throw Error(ErrorKind::parse_error, "cannot parse complex value '" + s + "'");
    }
}

namespace detail
{
inline void write_cmat(std::ostream &os, const char *name, const CMat &m)
{
    os << name << ' ' << m.rows() << ' ' << m.cols();
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            os << ' ' << format_complex(m(i, j));
    os << '\n';
}
inline CMat read_cmat(std::istringstream &is)
{
    Eigen::Index r = 0, c = 0;
    is >> r >> c;
    require(is && r >= 0 && c >= 0, ErrorKind::parse_error, "bad matrix header");
    CMat m(r, c);
    for (Eigen::Index j = 0; j < c; ++j)
        for (Eigen::Index i = 0; i < r; ++i)
        {
            std::string tok;
            is >> tok;
            require(static_cast<bool>(is), ErrorKind::parse_error, "matrix truncated");
            m(i, j) = parse_complex(tok);
        }
    return m;
}
} // namespace detail

/// Line-oriented: "strategy <name>", then "k", "F", "X", "bdma" as column-major complex matrices and "rho".
inline void write_design(std::ostream &os, const BeamDesign &d)
{
    os << "# dmasense beam design v1\n";
    os << "strategy " << to_string(d.strategy) << '\n';
    detail::write_cmat(os, "k", d.k);
    detail::write_cmat(os, "F", d.F);
    detail::write_cmat(os, "X", d.X);
    detail::write_cmat(os, "bdma", d.bdma);
    os << "rho " << d.rho.size();
    char buf[40];
    for (Eigen::Index i = 0; i < d.rho.size(); ++i)
    {
        std::snprintf(buf, sizeof buf, " %.17g", d.rho(i));
        os << buf;
    }
    os << '\n';
    std::snprintf(buf, sizeof buf, "%.17g", d.worst.peb);
    os << "worst_peb_m " << buf << '\n';
}

inline BeamDesign read_design(std::istream &in)
{
    BeamDesign d;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line))
    {
        ++lineno;
        if (line.empty() || line[0] == '#')
            continue;
        std::istringstream is(line);
        std::string key;
        is >> key;
        try
        {
            if (key == "strategy")
            {
                std::string s;
                is >> s;
                d.strategy = parse_strategy(s);
            }
            else if (key == "k")
                d.k = detail::read_cmat(is);
            else if (key == "F")
                d.F = detail::read_cmat(is);
            else if (key == "X")
                d.X = detail::read_cmat(is);
            else if (key == "bdma")
                d.bdma = detail::read_cmat(is);
            else if (key == "rho")
            {
                Eigen::Index n = 0;
                is >> n;
                d.rho.resize(n);
                for (Eigen::Index i = 0; i < n; ++i)
                    is >> d.rho(i);
                require(static_cast<bool>(is), ErrorKind::parse_error, "rho truncated");
            }
            else if (key == "worst_peb_m")
            {
                std::string v;
                is >> v;
                d.worst.peb = std::stod(v);
            }
            else
                throw Error(ErrorKind::parse_error, "unknown key '" + key + "'");
        }
        catch (const Error &e)
        {
            throw Error(ErrorKind::parse_error, "line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (d.k.cols() == 1)
        d.k = CVec(d.k.col(0));
    return d;
}

} // namespace dmasense

#endif
