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

#ifndef DMASENSE_CONIC_HPP
#define DMASENSE_CONIC_HPP

#include "core.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

namespace dmasense::conic
{

/// Symmetric coefficient entry. Off-diagonal entries stand for both (row, col) and (col, row).
struct SymEntry
{
    int row = 0;
    int col = 0;
    double value = 0;
};

/// Coefficient of one decision variable inside an LMI, either sparse or dense.
struct Term
{
    int var = 0;
    std::vector<SymEntry> entries;
    Mat dense;

    bool is_dense() const { return dense.size() > 0; }
};

/// constant + sum_i x_i F_i >= 0 (PSD).
struct PsdConstraint
{
    int dim = 0;
    Mat constant;
    std::vector<Term> terms;
    std::string label;
};

/// sum a_i x_i <= rhs, or == rhs when `equality`.
struct LinearConstraint
{
    std::vector<std::pair<int, double>> coeffs;
    double rhs = 0;
    bool equality = false;
    std::string label;
};

/// Hermitian entry: value at (row, col) and its conjugate at (col, row).
struct HermitianEntry
{
    int row = 0;
    int col = 0;
    cplx value;
};

class ConicProblem
{
public:
    explicit ConicProblem(int n_vars = 0) : objective_(Vec::Zero(n_vars)) {}

    int n_vars() const { return static_cast<int>(objective_.size()); }

    int add_variables(int count)
    {
        const int first = n_vars();
        objective_.conservativeResize(first + count);
        objective_.tail(count).setZero();
        return first;
    }

    void set_objective(int var, double c) { objective_(var) = c; }
    const Vec &objective() const { return objective_; }

    PsdConstraint &add_psd(int dim, const Mat &constant, std::string label = {})
    {
        require(constant.rows() == dim && constant.cols() == dim, ErrorKind::invalid_argument,
                "LMI constant has the wrong shape");
        PsdConstraint c;
        c.dim = dim;
        c.constant = 0.5 * (constant + constant.transpose());
        c.label = std::move(label);
        psd_.push_back(std::move(c));
        return psd_.back();
    }

    void add_dense_term(PsdConstraint &c, int var, const Mat &coeff)
    {
        check_var(var);
        Term t;
        t.var = var;
        t.dense = 0.5 * (coeff + coeff.transpose());
        c.terms.push_back(std::move(t));
    }

    void add_sparse_term(PsdConstraint &c, int var, std::vector<SymEntry> entries)
    {
        check_var(var);
        for (auto &e : entries)
        {
            if (e.row > e.col)
                std::swap(e.row, e.col);
            require(e.row >= 0 && e.col < c.dim, ErrorKind::invalid_argument, "LMI entry out of range");
        }
        Term t;
        t.var = var;
        t.entries = std::move(entries);
        c.terms.push_back(std::move(t));
    }

    /// Real embedding [[Re, -Im], [Im, Re]] of a Hermitian affine map of size n.
    PsdConstraint &add_hermitian_psd(int n, const CMat &constant, std::string label = {})
    {
        return add_psd(2 * n, embed(constant), std::move(label));
    }

    static Mat embed(const CMat &h)
    {
        const Eigen::Index n = h.rows();
        Mat out(2 * n, 2 * n);
        out << h.real(), -h.imag(), h.imag(), h.real();
        return out;
    }

    static std::vector<SymEntry> embed_entries(int n, const std::vector<HermitianEntry> &entries)
    {
        std::vector<SymEntry> out;
        for (const auto &e : entries)
        {
            if (e.row == e.col)
            {
                out.push_back({e.row, e.row, e.value.real()});
                out.push_back({n + e.row, n + e.row, e.value.real()});
                continue;
            }
            const double a = e.value.real(), b = e.value.imag();
            if (a != 0.0)
            {
                out.push_back({e.row, e.col, a});
                out.push_back({n + e.row, n + e.col, a});
            }
            if (b != 0.0)
            {
                out.push_back({e.row, n + e.col, -b});
                out.push_back({e.col, n + e.row, b});
            }
        }
        return out;
    }

    void add_linear(std::vector<std::pair<int, double>> coeffs, double rhs, bool equality = false,
                    std::string label = {})
    {
        for (const auto &c : coeffs)
            check_var(c.first);
        linear_.push_back({std::move(coeffs), rhs, equality, std::move(label)});
    }

    const std::vector<PsdConstraint> &psd() const { return psd_; }
    std::vector<PsdConstraint> &psd() { return psd_; }
    const std::vector<LinearConstraint> &linear() const { return linear_; }

    /// F(x) for constraint c.
    Mat evaluate(const PsdConstraint &c, const Vec &x) const
    {
        Mat m = c.constant;
        for (const auto &t : c.terms)
        {
            const double v = x(t.var);
            if (v == 0.0)
                continue;
            if (t.is_dense())
                m.noalias() += v * t.dense;
            else
                for (const auto &e : t.entries)
                {
                    m(e.row, e.col) += v * e.value;
                    if (e.row != e.col)
                        m(e.col, e.row) += v * e.value;
                }
        }
        return m;
    }

    double evaluate(const LinearConstraint &c, const Vec &x) const
    {
        double acc = 0;
        for (const auto &[i, a] : c.coeffs)
            acc += a * x(i);
        return acc;
    }

private:
    void check_var(int var) const
    {
        require(var >= 0 && var < n_vars(), ErrorKind::invalid_argument, "variable index out of range");
    }

    Vec objective_;
    std::vector<PsdConstraint> psd_;
    std::vector<LinearConstraint> linear_;
};

enum class Status
{
    optimal,
    max_iterations,
    infeasible,
    unbounded,
    numerical_failure
};

inline const char *to_string(Status s)
{
    switch (s)
    {
    case Status::optimal: return "optimal";
    case Status::max_iterations: return "max_iterations";
    case Status::infeasible: return "infeasible";
    case Status::unbounded: return "unbounded";
    case Status::numerical_failure: return "numerical_failure";
    }
    return "unknown";
}

struct Settings
{
    double gap_tol = 1e-7;
    double feas_tol = 1e-8;
    int max_iter = 200;
    double step = 0.99;
};

struct ConicSolution
{
    Vec x;
    double objective = std::numeric_limits<double>::quiet_NaN();
    Status status = Status::numerical_failure;
    double gap = std::numeric_limits<double>::infinity();
    double relative_gap = std::numeric_limits<double>::infinity();
    double primal_residual = std::numeric_limits<double>::infinity();
    double dual_residual = std::numeric_limits<double>::infinity();
    int iterations = 0;
    bool near_optimal = false; // residuals and gap within 100x tolerance

    bool usable() const { return status == Status::optimal || near_optimal; }
};

/// Independent post-check: worst PSD eigenvalue (scaled by the constraint size) and linear violation.
struct Violation
{
    double psd = 0;
    double linear = 0;
};

inline Violation check_solution(const ConicProblem &p, const Vec &x)
{
    Violation v;
    for (const auto &c : p.psd())
    {
        const Mat m = p.evaluate(c, x);
        Eigen::SelfAdjointEigenSolver<Mat> es(m, Eigen::EigenvaluesOnly);
        const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
        v.psd = std::max(v.psd, -es.eigenvalues().minCoeff() / scale);
    }
    for (const auto &c : p.linear())
    {
        const double a = p.evaluate(c, x);
        const double scale = std::max(1.0, std::abs(c.rhs));
        v.linear = std::max(v.linear, (c.equality ? std::abs(a - c.rhs) : std::max(0.0, a - c.rhs)) / scale);
    }
    return v;
}

namespace detail
{

/// Element of the product cone: orthant part and PSD blocks.
struct ConeVec
{
    Vec l;
    std::vector<Mat> s;

    double dot(const ConeVec &o) const
    {
        double acc = l.dot(o.l);
        for (std::size_t b = 0; b < s.size(); ++b)
            acc += s[b].cwiseProduct(o.s[b]).sum();
        return acc;
    }
    double norm() const { return std::sqrt(dot(*this)); }
    void axpy(double a, const ConeVec &o)
    {
        l += a * o.l;
        for (std::size_t b = 0; b < s.size(); ++b)
            s[b] += a * o.s[b];
    }
    ConeVec scaled(double a) const
    {
        ConeVec r = *this;
        r.l *= a;
        for (auto &m : r.s)
            m *= a;
        return r;
    }
};

struct Block
{
    int dim = 0;
    Mat h;
    std::vector<Term> terms; // F_i; G_i = -F_i
    bool sparse_only = true;
};

struct Scaling
{
    Vec d;                // orthant: sqrt(s / z)
    std::vector<Mat> r;   // R per block
    std::vector<Mat> ri;  // R^{-1}
    ConeVec lambda;       // lambda = W z
};

class Engine
{
public:
    Engine(const ConicProblem &p, const Settings &st) : st_(st)
    {
        n_ = p.n_vars();
        c_ = p.objective();
        std::vector<const LinearConstraint *> eq, in;
        for (const auto &lc : p.linear())
            (lc.equality ? eq : in).push_back(&lc);
        A_ = Mat::Zero(static_cast<Eigen::Index>(eq.size()), n_);
        b_ = Vec::Zero(static_cast<Eigen::Index>(eq.size()));
        for (std::size_t i = 0; i < eq.size(); ++i)
        {
            for (const auto &[v, a] : eq[i]->coeffs)
                A_(static_cast<Eigen::Index>(i), v) += a;
            b_(static_cast<Eigen::Index>(i)) = eq[i]->rhs;
        }
        Gl_ = Mat::Zero(static_cast<Eigen::Index>(in.size()), n_);
        hl_ = Vec::Zero(static_cast<Eigen::Index>(in.size()));
        for (std::size_t i = 0; i < in.size(); ++i)
        {
            for (const auto &[v, a] : in[i]->coeffs)
                Gl_(static_cast<Eigen::Index>(i), v) += a;
            hl_(static_cast<Eigen::Index>(i)) = in[i]->rhs;
        }
        for (const auto &c : p.psd())
        {
            Block b;
            b.dim = c.dim;
            b.h = c.constant;
            b.terms = c.terms;
            for (const auto &t : b.terms)
                b.sparse_only = b.sparse_only && !t.is_dense();
            blocks_.push_back(std::move(b));
        }
        p_ = static_cast<int>(A_.rows());
    }

    ConicSolution run();

private:
    // cone helpers ----------------------------------------------------------
    ConeVec zeros() const
    {
        ConeVec v;
        v.l = Vec::Zero(Gl_.rows());
        for (const auto &b : blocks_)
            v.s.push_back(Mat::Zero(b.dim, b.dim));
        return v;
    }
    ConeVec identity() const
    {
        ConeVec v;
        v.l = Vec::Ones(Gl_.rows());
        for (const auto &b : blocks_)
            v.s.push_back(Mat::Identity(b.dim, b.dim));
        return v;
    }
    ConeVec h_vec() const
    {
        ConeVec v;
        v.l = hl_;
        for (const auto &b : blocks_)
            v.s.push_back(b.h);
        return v;
    }
    int degree() const
    {
        int d = static_cast<int>(Gl_.rows());
        for (const auto &b : blocks_)
            d += b.dim;
        return d;
    }

    /// G x, with G_i = -F_i on PSD blocks.
    ConeVec apply_g(const Vec &x) const
    {
        ConeVec v;
        v.l = Gl_ * x;
        for (const auto &b : blocks_)
        {
            Mat m = Mat::Zero(b.dim, b.dim);
            for (const auto &t : b.terms)
            {
                const double xv = x(t.var);
                if (xv == 0.0)
                    continue;
                if (t.is_dense())
                    m.noalias() -= xv * t.dense;
                else
                    for (const auto &e : t.entries)
                    {
                        m(e.row, e.col) -= xv * e.value;
                        if (e.row != e.col)
                            m(e.col, e.row) -= xv * e.value;
                    }
            }
            v.s.push_back(std::move(m));
        }
        return v;
    }

    Vec apply_gt(const ConeVec &z) const
    {
        Vec out = Gl_.transpose() * z.l;
        for (std::size_t bi = 0; bi < blocks_.size(); ++bi)
        {
            const Mat &Z = z.s[bi];
            for (const auto &t : blocks_[bi].terms)
            {
                double acc = 0;
                if (t.is_dense())
                    acc = t.dense.cwiseProduct(Z).sum();
                else
                    for (const auto &e : t.entries)
                        acc += e.value * (e.row == e.col ? Z(e.row, e.col) : Z(e.row, e.col) + Z(e.col, e.row));
                out(t.var) -= acc;
            }
        }
        return out;
    }

    static double min_eig(const Mat &m)
    {
        if (m.rows() == 0)
            return std::numeric_limits<double>::infinity();
        Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
        return es.eigenvalues()(0);
    }

    double min_cone(const ConeVec &v) const
    {
        double m = v.l.size() ? v.l.minCoeff() : std::numeric_limits<double>::infinity();
        for (const auto &s : v.s)
            m = std::min(m, min_eig(s));
        return m;
    }

    // scaling -----------------------------------------------------------------
    static Mat sym_factor(const Mat &m)
    {
        Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (m + m.transpose()));
        Vec ev = es.eigenvalues().cwiseMax(1e-300);
        return es.eigenvectors() * ev.cwiseSqrt().asDiagonal();
    }

    Scaling compute_scaling(const ConeVec &s, const ConeVec &z) const
    {
        Scaling w;
        w.lambda.l = (s.l.array() * z.l.array()).sqrt();
        w.d = (s.l.array() / z.l.array()).sqrt();
        for (std::size_t b = 0; b < blocks_.size(); ++b)
        {
            const Mat ls = sym_factor(s.s[b]);
            const Mat lz = sym_factor(z.s[b]);
            Eigen::JacobiSVD<Mat> svd(lz.transpose() * ls, Eigen::ComputeFullU | Eigen::ComputeFullV);
            const Vec sig = svd.singularValues().cwiseMax(1e-300);
            const Vec isq = sig.cwiseSqrt().cwiseInverse();
            w.r.push_back(ls * svd.matrixV() * isq.asDiagonal());
            w.ri.push_back(isq.asDiagonal() * svd.matrixU().transpose() * lz.transpose());
            w.lambda.s.push_back(sig.asDiagonal());
        }
        return w;
    }

    /// W^T u
    ConeVec apply_wt(const Scaling &w, const ConeVec &u) const
    {
        ConeVec r;
        r.l = w.d.cwiseProduct(u.l);
        for (std::size_t b = 0; b < blocks_.size(); ++b)
            r.s.push_back(w.r[b] * u.s[b] * w.r[b].transpose());
        return r;
    }
    /// W u
    ConeVec apply_w(const Scaling &w, const ConeVec &u) const
    {
        ConeVec r;
        r.l = w.d.cwiseProduct(u.l);
        for (std::size_t b = 0; b < blocks_.size(); ++b)
            r.s.push_back(w.r[b].transpose() * u.s[b] * w.r[b]);
        return r;
    }
    /// W^{-T} u
    ConeVec apply_wit(const Scaling &w, const ConeVec &u) const
    {
        ConeVec r;
        r.l = u.l.cwiseQuotient(w.d);
        for (std::size_t b = 0; b < blocks_.size(); ++b)
            r.s.push_back(w.ri[b] * u.s[b] * w.ri[b].transpose());
        return r;
    }
    /// (W^T W)^{-1} u
    ConeVec apply_q(const Scaling &w, const ConeVec &u) const
    {
        ConeVec r;
        r.l = u.l.cwiseQuotient(w.d.cwiseProduct(w.d));
        for (std::size_t b = 0; b < blocks_.size(); ++b)
        {
            const Mat P = w.ri[b].transpose() * w.ri[b];
            r.s.push_back(P * u.s[b] * P);
        }
        return r;
    }

    /// lambda o lambda (lambda diagonal on PSD blocks)
    static ConeVec lambda_sq(const ConeVec &lam)
    {
        ConeVec r = lam;
        r.l = lam.l.cwiseProduct(lam.l);
        for (auto &m : r.s)
            m = m * m;
        return r;
    }
    /// Jordan product u o v
    static ConeVec jordan(const ConeVec &u, const ConeVec &v)
    {
        ConeVec r;
        r.l = u.l.cwiseProduct(v.l);
        for (std::size_t b = 0; b < u.s.size(); ++b)
            r.s.push_back(0.5 * (u.s[b] * v.s[b] + v.s[b] * u.s[b]));
        return r;
    }
    /// lambda \ r, the inverse of the Jordan product with diagonal lambda
    static ConeVec lambda_div(const ConeVec &lam, const ConeVec &r)
    {
        ConeVec o;
        o.l = r.l.cwiseQuotient(lam.l);
        for (std::size_t b = 0; b < r.s.size(); ++b)
        {
            const Vec d = lam.s[b].diagonal();
            Mat m = r.s[b];
            for (Eigen::Index i = 0; i < m.rows(); ++i)
                for (Eigen::Index j = 0; j < m.cols(); ++j)
                    m(i, j) *= 2.0 / (d(i) + d(j));
            o.s.push_back(std::move(m));
        }
        return o;
    }

    /// Largest step keeping lambda + a*u in the cone (lambda diagonal).
    static double max_step(const ConeVec &lam, const ConeVec &u)
    {
        double a = std::numeric_limits<double>::infinity();
        for (Eigen::Index i = 0; i < lam.l.size(); ++i)
            if (u.l(i) < 0)
                a = std::min(a, -lam.l(i) / u.l(i));
        for (std::size_t b = 0; b < lam.s.size(); ++b)
        {
            const Vec d = lam.s[b].diagonal().cwiseSqrt().cwiseInverse();
            const Mat m = d.asDiagonal() * u.s[b] * d.asDiagonal();
            const double e = min_eig(m);
            if (e < 0)
                a = std::min(a, -1.0 / e);
        }
        return a;
    }

    // KKT -----------------------------------------------------------------------
    /// H = G^T Q G for the current scaling (or the identity scaling when w is null).
    Mat schur(const Scaling *w) const
    {
        Mat H = Mat::Zero(n_, n_);
        if (Gl_.rows())
        {
            if (w)
                H.noalias() += Gl_.transpose() * (w->d.cwiseProduct(w->d)).cwiseInverse().asDiagonal() * Gl_;
            else
                H.noalias() += Gl_.transpose() * Gl_;
        }
        for (std::size_t bi = 0; bi < blocks_.size(); ++bi)
        {
            const Block &b = blocks_[bi];
            const int d = b.dim;
            const Mat L = w ? Mat(w->ri[bi]) : Mat(Mat::Identity(d, d)); // transformed term = L F L^T
            if (b.sparse_only)
            {
                const Mat P = L.transpose() * L;
                struct Full
                {
                    int i, j;
                    double v;
                };
                std::vector<std::vector<Full>> full(b.terms.size());
                for (std::size_t t = 0; t < b.terms.size(); ++t)
                    for (const auto &e : b.terms[t].entries)
                    {
                        full[t].push_back({e.row, e.col, e.value});
                        if (e.row != e.col)
                            full[t].push_back({e.col, e.row, e.value});
                    }
                for (std::size_t t = 0; t < b.terms.size(); ++t)
                    for (std::size_t u = t; u < b.terms.size(); ++u)
                    {
                        double acc = 0;
                        for (const auto &fa : full[t])
                            for (const auto &fb : full[u])
                                acc += fa.v * fb.v * P(fa.j, fb.i) * P(fb.j, fa.i);
                        const int vi = b.terms[t].var, vj = b.terms[u].var;
                        H(vi, vj) += acc;
                        if (t != u)
                            H(vj, vi) += acc;
                    }
                continue;
            }
            const int sv = d * (d + 1) / 2;
            const double r2 = std::sqrt(2.0);
            Mat Gh(sv, static_cast<Eigen::Index>(b.terms.size()));
            for (std::size_t t = 0; t < b.terms.size(); ++t)
            {
                Mat m;
                if (b.terms[t].is_dense())
                    m = L * b.terms[t].dense * L.transpose();
                else
                {
                    m = Mat::Zero(d, d);
                    for (const auto &e : b.terms[t].entries)
                    {
                        m.noalias() += e.value * L.col(e.row) * L.col(e.col).transpose();
                        if (e.row != e.col)
                            m.noalias() += e.value * L.col(e.col) * L.col(e.row).transpose();
                    }
                }
                int k = 0;
                for (int j = 0; j < d; ++j)
                    for (int i = j; i < d; ++i)
                        Gh(k++, static_cast<Eigen::Index>(t)) = i == j ? m(i, j) : r2 * m(i, j);
            }
            const Mat Hb = Gh.transpose() * Gh;
            for (std::size_t t = 0; t < b.terms.size(); ++t)
                for (std::size_t u = 0; u < b.terms.size(); ++u)
                    H(b.terms[t].var, b.terms[u].var) += Hb(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(u));
        }
        return 0.5 * (H + H.transpose());
    }

    struct Kkt
    {
        Eigen::PartialPivLU<Mat> lu;
        Mat K;
        bool ok = false;
    };

    Kkt factor(const Mat &H) const
    {
        Kkt k;
        const int m = n_ + p_;
        k.K = Mat::Zero(m, m);
        k.K.topLeftCorner(n_, n_) = H;
        if (p_)
        {
            k.K.topRightCorner(n_, p_) = A_.transpose();
            k.K.bottomLeftCorner(p_, n_) = A_;
        }
        // tiny static regularisation for variables absent from every cone
        const double reg = 1e-14 * std::max(1.0, H.diagonal().cwiseAbs().maxCoeff());
        for (int i = 0; i < n_; ++i)
            if (H(i, i) <= reg)
                k.K(i, i) += reg;
        k.lu.compute(k.K);
        k.ok = k.K.allFinite();
        return k;
    }

    /// Solve  A^T dy + G^T dz = r1,  -A dx = r2,  -G dx + W^T W dz = r3, refining on the full system.
    void solve_kkt(const Kkt &k, const Scaling *w, const Vec &r1, const Vec &r2, const ConeVec &r3, Vec &dx,
                   Vec &dy, ConeVec &dz) const
    {
        solve_reduced(k, w, r1, r2, r3, dx, dy, dz);
        for (int round = 0; round < 2; ++round)
        {
            Vec e1 = r1 - apply_gt(dz);
            if (p_)
                e1 -= A_.transpose() * dy;
            const Vec e2 = p_ ? Vec(r2 + A_ * dx) : Vec();
            ConeVec e3 = r3;
            e3.axpy(1.0, apply_g(dx));
            e3.axpy(-1.0, w ? apply_wt(*w, apply_w(*w, dz)) : dz);
            Vec cx, cy;
            ConeVec cz;
            solve_reduced(k, w, e1, e2, e3, cx, cy, cz);
            dx += cx;
            if (p_)
                dy += cy;
            dz.axpy(1.0, cz);
        }
    }

    void solve_reduced(const Kkt &k, const Scaling *w, const Vec &r1, const Vec &r2, const ConeVec &r3, Vec &dx,
                   Vec &dy, ConeVec &dz) const
    {
        const ConeVec qr3 = w ? apply_q(*w, r3) : r3;
        Vec rhs(n_ + p_);
        rhs.head(n_) = r1 - apply_gt(qr3);
        if (p_)
            rhs.tail(p_) = -r2;
        Vec sol = k.lu.solve(rhs);
        sol += k.lu.solve(rhs - k.K * sol);
        dx = sol.head(n_);
        dy = p_ ? Vec(sol.tail(p_)) : Vec();
        ConeVec gdx = apply_g(dx);
        ConeVec t = r3;
        t.axpy(1.0, gdx);
        dz = w ? apply_q(*w, t) : t;
    }

    Settings st_;
    int n_ = 0;
    int p_ = 0;
    Vec c_;
    Mat A_;
    Vec b_;
    Mat Gl_;
    Vec hl_;
    std::vector<Block> blocks_;
};

inline ConicSolution Engine::run()
{
    ConicSolution sol;
    sol.x = Vec::Zero(n_);
    const ConeVec h = h_vec();
    const ConeVec e = identity();
    const double nu = degree();
    const double resx0 = std::max(1.0, c_.norm());
    const double resy0 = std::max(1.0, b_.norm());
    const double resz0 = std::max(1.0, h.norm());

    // least-squares starting points
    Vec x, y, tmpy;
    ConeVec s, z;
    {
        Kkt k0 = factor(schur(nullptr));
        if (!k0.ok)
            return sol;
        ConeVec negh = h.scaled(-1.0);
        ConeVec dz;
        // primal: min ||G x - h|| s.t. A x = b
        solve_kkt(k0, nullptr, Vec::Zero(n_), -b_, negh, x, tmpy, dz);
        s = apply_g(x).scaled(-1.0);
        s.axpy(1.0, h);
        // dual: min ||z|| s.t. G^T z + A^T y + c = 0
        Vec lam;
        solve_kkt(k0, nullptr, -c_, Vec::Zero(p_), zeros(), lam, y, z);
        const double ap = -min_cone(s);
        if (ap >= 0)
            s.axpy(1.0 + ap, e);
        const double ad = -min_cone(z);
        if (ad >= 0)
            z.axpy(1.0 + ad, e);
    }
    double tau = 1.0, kappa = 1.0;
    // failures fall back to the best iterate seen
    ConicSolution best = sol;
    double best_score = std::numeric_limits<double>::infinity();
    auto fail = [&](Status st) {
        best.status = st;
        best.iterations = sol.iterations;
        return best;
    };

    for (int it = 0; it <= st_.max_iter; ++it)
    {
        sol.iterations = it;
        const double sz = s.dot(z);
        const double mu = (sz + tau * kappa) / (nu + 1.0);

        // residuals
        const Vec gtz = apply_gt(z);
        const Vec aty = p_ ? Vec(A_.transpose() * y) : Vec(Vec::Zero(n_));
        const Vec R1 = aty + gtz + c_ * tau;
        const Vec ax = p_ ? Vec(A_ * x) : Vec();
        const Vec R2 = p_ ? Vec(-ax + b_ * tau) : Vec();
        ConeVec gx = apply_g(x);
        ConeVec R3 = h.scaled(tau);
        R3.axpy(-1.0, gx);
        R3.axpy(-1.0, s);
        const double cx = c_.dot(x), by = p_ ? b_.dot(y) : 0.0, hz = h.dot(z);
        const double R4 = -cx - by - hz - kappa;

        const double pcost = cx / tau, dcost = -(by + hz) / tau;
        const double gap = sz / (tau * tau);
        const double pres = std::max(p_ ? R2.norm() / tau / resy0 : 0.0, R3.norm() / tau / resz0);
        const double dres = R1.norm() / tau / resx0;
        const double relgap = gap / std::max(1.0, std::max(std::abs(pcost), std::abs(dcost)));

        sol.x = x / tau;
        sol.objective = pcost;
        sol.gap = gap;
        sol.relative_gap = relgap;
        sol.primal_residual = pres;
        sol.dual_residual = dres;
        if (std::getenv("DMASENSE_CONIC_TRACE"))
            std::fprintf(stderr, "it %d pcost %.10e dcost %.10e gap %.3e pres %.3e dres %.3e tau %.3e kappa %.3e\n", it, pcost, dcost, gap, pres, dres, tau, kappa);
        sol.near_optimal = pres <= 100 * st_.feas_tol && dres <= 100 * st_.feas_tol && relgap <= 100 * st_.gap_tol;

        const double score = std::max({pres, dres, relgap});
        if (score < best_score)
        {
            best_score = score;
            best = sol;
        }
        if (pres <= st_.feas_tol && dres <= st_.feas_tol && relgap <= st_.gap_tol)
        {
            sol.status = Status::optimal;
            return sol;
        }
        // infeasibility certificates
        if (hz + by < 0)
        {
            const double pinf = (aty + gtz).norm() / resx0 / (-(hz + by));
            if (pinf <= st_.feas_tol)
            {
                sol.status = Status::infeasible;
                sol.near_optimal = false;
                return sol;
            }
        }
        if (cx < 0)
        {
            ConeVec gxs = gx;
            gxs.axpy(1.0, s);
            const double dinf = std::max(p_ ? ax.norm() / resy0 : 0.0, gxs.norm() / resz0) / (-cx);
            if (dinf <= st_.feas_tol)
            {
                sol.status = Status::unbounded;
                sol.near_optimal = false;
                return sol;
            }
        }
        if (it == st_.max_iter)
            return fail(Status::max_iterations);

        const Scaling w = compute_scaling(s, z);
        const Kkt k = factor(schur(&w));
        if (!k.ok)
            return fail(Status::numerical_failure);
        // column for the tau direction
        Vec x1, y1;
        ConeVec z1;
        solve_kkt(k, &w, -c_, -b_, h.scaled(-1.0), x1, y1, z1);

        const ConeVec lam2 = lambda_sq(w.lambda);
        double sigma = 0.0;
        Vec dx, dy;
        ConeVec dz, ds;
        double dtau = 0, dkappa = 0;
        ConeVec dsa_scaled, dza_scaled;
        double dtau_a = 0, dkappa_a = 0;
        for (int pass = 0; pass < 2; ++pass)
        {
            ConeVec rc = lam2.scaled(-1.0);
            double rt = -tau * kappa;
            if (pass == 1)
            {
                rc.axpy(sigma * mu, e);
                rc.axpy(-1.0, jordan(dsa_scaled, dza_scaled));
                rt += sigma * mu - dtau_a * dkappa_a;
            }
            const double f = 1.0 - sigma;
            const ConeVec wl = apply_wt(w, lambda_div(w.lambda, rc));
            ConeVec r3 = R3.scaled(-f);
            r3.axpy(1.0, wl);
            Vec x0, y0;
            ConeVec z0;
            solve_kkt(k, &w, -f * R1, p_ ? Vec(-f * R2) : Vec(), r3, x0, y0, z0);
            const double num = -f * R4 + rt / tau + c_.dot(x0) + (p_ ? b_.dot(y0) : 0.0) + h.dot(z0);
            const double den = -c_.dot(x1) - (p_ ? b_.dot(y1) : 0.0) - h.dot(z1) + kappa / tau;
            dtau = num / den;
            dx = x0 + dtau * x1;
            dy = p_ ? Vec(y0 + dtau * y1) : Vec();
            dz = z0;
            dz.axpy(dtau, z1);
            // ds from the linearised primal equation -G dx + h dtau - ds = -f R3
            ds = apply_g(dx).scaled(-1.0);
            ds.axpy(dtau, h);
            ds.axpy(f, R3);
            dkappa = (rt - kappa * dtau) / tau;

            const ConeVec dss = apply_wit(w, ds);
            const ConeVec dzs = apply_w(w, dz);
            double amax = std::min(max_step(w.lambda, dss), max_step(w.lambda, dzs));
            if (dtau < 0)
                amax = std::min(amax, -tau / dtau);
            if (dkappa < 0)
                amax = std::min(amax, -kappa / dkappa);
            if (pass == 0)
            {
                const double aa = std::min(1.0, amax);
                sigma = std::pow(1.0 - aa, 3);
                dsa_scaled = dss;
                dza_scaled = dzs;
                dtau_a = dtau;
                dkappa_a = dkappa;
            }
            else
            {
                const double a = std::min(1.0, st_.step * amax);
                if (!(a > 0) || !dx.allFinite() || !std::isfinite(dtau))
                    return fail(Status::numerical_failure);
                x += a * dx;
                if (p_)
                    y += a * dy;
                z.axpy(a, dz);
                s.axpy(a, ds);
                tau += a * dtau;
                kappa += a * dkappa;
            }
        }
    }
    return sol;
}

} // namespace detail

inline ConicSolution solve_conic(const ConicProblem &problem, const Settings &settings = {})
{
    require(problem.n_vars() > 0, ErrorKind::invalid_argument, "conic problem has no variables");
    detail::Engine engine(problem, settings);
    return engine.run();
}

/// Self-describing text dump: objective, linear rows, then each LMI with its affine coefficients.
inline void write_problem(std::ostream &os, const ConicProblem &p)
{
    os.precision(17);
    os << "# dmasense conic problem\n";
    os << "variables " << p.n_vars() << "\n";
    os << "objective";
    for (Eigen::Index i = 0; i < p.objective().size(); ++i)
        os << ' ' << p.objective()(i);
    os << "\n";
    for (const auto &c : p.linear())
    {
        os << (c.equality ? "eq " : "le ") << c.rhs << " " << c.coeffs.size();
        for (const auto &[i, a] : c.coeffs)
            os << ' ' << i << ':' << a;
        os << "  # " << c.label << "\n";
    }
    for (const auto &c : p.psd())
    {
        os << "psd " << c.dim << " " << c.terms.size() << "  # " << c.label << "\n";
        os << "constant";
        for (int i = 0; i < c.dim; ++i)
            for (int j = i; j < c.dim; ++j)
                if (c.constant(i, j) != 0.0)
                    os << ' ' << i << ',' << j << ':' << c.constant(i, j);
        os << "\n";
        for (const auto &t : c.terms)
        {
            os << "term " << t.var;
            if (t.is_dense())
            {
                for (int i = 0; i < c.dim; ++i)
                    for (int j = i; j < c.dim; ++j)
                        if (t.dense(i, j) != 0.0)
                            os << ' ' << i << ',' << j << ':' << t.dense(i, j);
            }
            else
                for (const auto &e : t.entries)
                    os << ' ' << e.row << ',' << e.col << ':' << e.value;
            os << "\n";
        }
    }
}

// ------------------------------------------------------------------------
// Linear programming: dense two-phase simplex with Bland's rule.

enum class LpStatus
{
    optimal,
    infeasible,
    unbounded
};

inline const char *to_string(LpStatus s)
{
    switch (s)
    {
    case LpStatus::optimal: return "optimal";
    case LpStatus::infeasible: return "infeasible";
    case LpStatus::unbounded: return "unbounded";
    }
    return "unknown";
}

struct LpSolution
{
    Vec x;
    double objective = std::numeric_limits<double>::quiet_NaN();
    LpStatus status = LpStatus::infeasible;
    int iterations = 0;
};

struct Bounds
{
    Vec lower;
    Vec upper; // +inf allowed
};

namespace detail
{

/// Simplex on tableau t (last row = objective reduced costs, last column = rhs). Returns false if unbounded.
inline bool simplex_iterate(Mat &t, std::vector<int> &basis, int n_cols, int &iterations, double tol)
{
    const Eigen::Index m = t.rows() - 1;
    for (;;)
    {
        int enter = -1;
        for (int j = 0; j < n_cols; ++j)
            if (t(m, j) < -tol)
            {
                enter = j;
                break;
            }
        if (enter < 0)
            return true;
        int leave = -1;
        double best = std::numeric_limits<double>::infinity();
        for (Eigen::Index i = 0; i < m; ++i)
            if (t(i, enter) > tol)
            {
                const double r = t(i, t.cols() - 1) / t(i, enter);
                if (r < best - tol || (std::abs(r - best) <= tol && leave >= 0 && basis[i] < basis[leave]))
                {
                    best = r;
                    leave = static_cast<int>(i);
                }
            }
        if (leave < 0)
            return false;
        t.row(leave) /= t(leave, enter);
        for (Eigen::Index i = 0; i <= m; ++i)
            if (i != leave && t(i, enter) != 0.0)
                t.row(i) -= t(i, enter) * t.row(leave);
        basis[leave] = enter;
        ++iterations;
    }
}

} // namespace detail

/// minimize c^T x  s.t.  A x <= b,  lower <= x <= upper.
inline LpSolution solve_lp(const Vec &c, const Mat &A, const Vec &b, const Bounds &bounds)
{
    const Eigen::Index n = c.size();
    require(A.cols() == n && A.rows() == b.size(), ErrorKind::invalid_argument, "LP dimensions disagree");
    Vec lo = bounds.lower.size() ? bounds.lower : Vec::Zero(n);
    Vec up = bounds.upper.size() ? bounds.upper : Vec::Constant(n, std::numeric_limits<double>::infinity());
    require(lo.allFinite(), ErrorKind::invalid_argument, "LP lower bounds must be finite");

    // rows: A x' <= b - A lo, and x'_j <= up_j - lo_j for finite upper bounds
    std::vector<Vec> rows;
    std::vector<double> rhs;
    for (Eigen::Index i = 0; i < A.rows(); ++i)
    {
        rows.push_back(A.row(i).transpose());
        rhs.push_back(b(i) - A.row(i).dot(lo));
    }
    for (Eigen::Index j = 0; j < n; ++j)
        if (std::isfinite(up(j)))
        {
            Vec r = Vec::Zero(n);
            r(j) = 1.0;
            rows.push_back(r);
            rhs.push_back(up(j) - lo(j));
        }
    const int m = static_cast<int>(rows.size());
    int n_art = 0;
    for (double r : rhs)
        n_art += r < 0 ? 1 : 0;
    const int nc = static_cast<int>(n) + m + n_art;
    Mat t = Mat::Zero(m + 1, nc + 1);
    std::vector<int> basis(m);
    int art = 0;
    for (int i = 0; i < m; ++i)
    {
        const double sgn = rhs[i] < 0 ? -1.0 : 1.0;
        t.row(i).head(n) = sgn * rows[i].transpose();
        t(i, n + i) = sgn;
        t(i, nc) = sgn * rhs[i];
        if (rhs[i] < 0)
        {
            t(i, n + m + art) = 1.0;
            basis[i] = static_cast<int>(n) + m + art;
            ++art;
        }
        else
            basis[i] = static_cast<int>(n) + i;
    }
    const double scale = std::max(1.0, t.cwiseAbs().maxCoeff());
    const double tol = 1e-11 * scale;
    LpSolution sol;

    if (n_art > 0)
    {
        // phase 1: minimise the artificial sum
        for (int i = 0; i < m; ++i)
            if (basis[i] >= static_cast<int>(n) + m)
                t.row(m) -= t.row(i);
        for (int a = 0; a < n_art; ++a)
            t(m, n + m + a) = 0.0;
        detail::simplex_iterate(t, basis, nc, sol.iterations, tol);
        if (-t(m, nc) > 1e-9 * scale)
        {
            sol.status = LpStatus::infeasible;
            return sol;
        }
        // drive remaining artificials out of the basis
        for (int i = 0; i < m; ++i)
            if (basis[i] >= static_cast<int>(n) + m)
                for (int j = 0; j < static_cast<int>(n) + m; ++j)
                    if (std::abs(t(i, j)) > tol)
                    {
                        t.row(i) /= t(i, j);
                        for (int r = 0; r <= m; ++r)
                            if (r != i)
                                t.row(r) -= t(r, j) * t.row(i);
                        basis[i] = j;
                        break;
                    }
        for (int a = 0; a < n_art; ++a)
            t.col(n + m + a).setZero();
    }
    // phase 2 objective row
    t.row(m).setZero();
    t.row(m).head(n) = c.transpose();
    for (int i = 0; i < m; ++i)
        if (basis[i] < static_cast<int>(n) && c(basis[i]) != 0.0)
            t.row(m) -= c(basis[i]) * t.row(i);
    if (!detail::simplex_iterate(t, basis, static_cast<int>(n) + m, sol.iterations, tol))
    {
        sol.status = LpStatus::unbounded;
        return sol;
    }
    Vec xp = Vec::Zero(n);
    for (int i = 0; i < m; ++i)
        if (basis[i] < static_cast<int>(n))
            xp(basis[i]) = t(i, nc);
    sol.x = xp + lo;
    sol.objective = c.dot(sol.x);
    sol.status = LpStatus::optimal;
    return sol;
}

} // namespace dmasense::conic

#endif
