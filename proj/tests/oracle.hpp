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

// Extended-precision reference evaluations shared by the unit tests.

#ifndef DMASENSE_TESTS_ORACLE_HPP
#define DMASENSE_TESTS_ORACLE_HPP

#include <boost/multiprecision/cpp_bin_float.hpp>

#include <complex>
#include <vector>

namespace oracle
{

using quad = boost::multiprecision::cpp_bin_float_quad;

/// Minimal complex type over quad, written out component-wise.
struct qc
{
    quad re = 0, im = 0;
    qc() = default;
    qc(quad r, quad i = 0) : re(r), im(i) {}
    qc(int r) : re(r), im(0) {}
    explicit qc(std::complex<double> z) : re(z.real()), im(z.imag()) {}
    std::complex<double> to_double() const { return {static_cast<double>(re), static_cast<double>(im)}; }
};

inline qc operator+(qc a, qc b) { return {a.re + b.re, a.im + b.im}; }
inline qc operator-(qc a, qc b) { return {a.re - b.re, a.im - b.im}; }
inline qc operator*(qc a, qc b) { return {a.re * b.re - a.im * b.im, a.re * b.im + a.im * b.re}; }
inline qc operator/(qc a, qc b)
{
    const quad d = b.re * b.re + b.im * b.im;
    return {(a.re * b.re + a.im * b.im) / d, (a.im * b.re - a.re * b.im) / d};
}
inline qc conj(qc a) { return {a.re, -a.im}; }
inline quad abs2(qc a) { return a.re * a.re + a.im * a.im; }

inline qc qcos(qc z)
{
    using boost::multiprecision::cos;
    using boost::multiprecision::cosh;
    using boost::multiprecision::sin;
    using boost::multiprecision::sinh;
    return {cos(z.re) * cosh(z.im), -sin(z.re) * sinh(z.im)};
}
inline qc qsin(qc z)
{
    using boost::multiprecision::cos;
    using boost::multiprecision::cosh;
    using boost::multiprecision::sin;
    using boost::multiprecision::sinh;
    return {sin(z.re) * cosh(z.im), cos(z.re) * sinh(z.im)};
}
inline qc qexp_j(quad phase)
{
    using boost::multiprecision::cos;
    using boost::multiprecision::sin;
    return {cos(phase), sin(phase)};
}

inline quad pi() { return boost::math::constants::pi<quad>(); }
inline quad c0() { return quad(299792458); }
inline quad eps0() { return quad("8.8541878128e-12"); }

/// Waveguide parameters derived in quad from the same raw inputs.
struct Guide
{
    quad a, b, S, er, mr, fc;
    quad lambda() const { return c0() / fc; }
    quad k() const { return 2 * pi() / (lambda() * boost::multiprecision::sqrt(er * mr)); }
    qc kx() const
    {
        const quad v = k() * k() - (pi() / a) * (pi() / a);
        if (v >= 0)
            return {boost::multiprecision::sqrt(v), 0};
        // principal root of a negative number is j sqrt(-v); conjugate gives -j sqrt(-v)
        return {0, -boost::multiprecision::sqrt(-v)};
    }
};

struct P3
{
    quad x, y, z;
};

inline qc g_sa(const P3 &p, const P3 &q, const Guide &w)
{
    using boost::multiprecision::abs;
    using boost::multiprecision::sin;
    const quad k = w.k();
    const qc kx = w.kx();
    const quad s1 = sin(pi() * p.z / w.a), s2 = sin(pi() * q.z / w.a);
    const qc pre = qc(-1) * kx * qc(s1 * s2) / (qc(w.a * w.b * k * k) * qsin(kx * qc(w.S)));
    const qc t1 = qcos(kx * qc(q.x + p.x - w.S));
    const qc t2 = qcos(kx * qc(w.S - abs(p.x - q.x)));
    return pre * (t1 + t2);
}

inline qc g_mc(const P3 &p, const P3 &q, const Guide &w)
{
    using boost::multiprecision::sqrt;
    const quad dx = p.x - q.x, dy = p.y - q.y, dz = p.z - q.z;
    const quad R2 = dx * dx + dy * dy + dz * dz;
    const quad R = sqrt(R2);
    const quad k = w.k();
    const quad dz2 = dz * dz;
    const qc first((R2 - dz2) / R2, -(R2 - 3 * dz2) / (R2 * R * k));
    const qc second((R2 - 3 * dz2) / (R2 * R2 * k * k), 0);
    const qc e = qexp_j(-k * R);
    return (first + second) * e / qc(4 * pi() * R);
}

/// Solve A X = B by Gaussian elimination with partial pivoting in quad.
inline std::vector<std::vector<qc>> solve(std::vector<std::vector<qc>> A, std::vector<std::vector<qc>> B)
{
    const std::size_t n = A.size(), m = B.front().size();
    for (std::size_t c = 0; c < n; ++c)
    {
        std::size_t piv = c;
        for (std::size_t r = c + 1; r < n; ++r)
            if (abs2(A[r][c]) > abs2(A[piv][c]))
                piv = r;
        std::swap(A[c], A[piv]);
        std::swap(B[c], B[piv]);
        for (std::size_t r = c + 1; r < n; ++r)
        {
            const qc f = A[r][c] / A[c][c];
            for (std::size_t j = c; j < n; ++j)
                A[r][j] = A[r][j] - f * A[c][j];
            for (std::size_t j = 0; j < m; ++j)
                B[r][j] = B[r][j] - f * B[c][j];
        }
    }
    for (std::size_t c = n; c-- > 0;)
        for (std::size_t j = 0; j < m; ++j)
        {
            qc acc = B[c][j];
            for (std::size_t k = c + 1; k < n; ++k)
                acc = acc - A[c][k] * B[k][j];
            B[c][j] = acc / A[c][c];
        }
    return B;
}

} // namespace oracle

#endif
