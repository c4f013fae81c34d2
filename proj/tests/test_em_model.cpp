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

#include "catch_amalgamated.hpp"

#include "dmasense/em_model.hpp"
#include "oracle.hpp"

#include <random>

using namespace dmasense;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace
{

oracle::Guide quad_guide(const WaveguideSpec &s)
{
    return {s.width_m, s.height_m, s.length_m, s.rel_permittivity, s.rel_permeability, s.carrier_hz};
}

oracle::P3 qp(const Vec3 &p) { return {p.x(), p.y(), p.z()}; }

double rel_err(cplx a, cplx b) { return std::abs(a - b) / std::abs(b); }

DmaGeometry table_geometry(const WaveguideSpec &s, int n_rf, int n_e)
{
    const double lambda = s.wavelength();
    return build_geometry(n_rf, n_e, 0.5 * lambda, 0.2 * lambda, 0.5 * s.width_m);
}

WaveguideSpec spec_for(double fc, int n_e)
{
    WaveguideSpec s = WaveguideSpec::table_one(fc);
    s.length_m = std::max(s.length_m, (n_e + 1) * 0.2 * s.wavelength());
    return s;
}

} // namespace

TEST_CASE("Geometry lattice", "[em_model]")
{
    const WaveguideSpec s = WaveguideSpec::table_one(24e9);
    const double lambda = s.wavelength();

    const DmaGeometry one = build_geometry(1, 1, lambda / 2, lambda / 5, s.width_m / 2);
    REQUIRE(one.n_total() == 1);
    CHECK(one.elements[0].isApprox(Vec3(lambda / 5, 0.0, s.width_m / 2)));
    CHECK(one.ports[0].isApprox(Vec3(0.0, 0.0, s.width_m / 2)));

    const DmaGeometry g = build_geometry(4, 32, lambda / 2, lambda / 5, s.width_m / 2);
    CHECK(g.n_total() == 128);
    CHECK(g.ports.size() == 4);
    for (int i = 0; i < 4; ++i)
        for (int e = 0; e + 1 < 32; ++e)
            CHECK_THAT((g.elements[g.index(i, e + 1)] - g.elements[g.index(i, e)]).norm(),
                       WithinRel(lambda / 5, 1e-12));
    std::vector<int> members(4, 0);
    for (int s_of : g.strip_of)
        ++members[s_of];
    for (int c : members)
        CHECK(c == 32);

    CHECK_THROWS_AS(build_geometry(0, 4, 1.0, 1.0, 0.0), Error);
    CHECK_THROWS_AS(build_geometry(2, 4, -1.0, 1.0, 0.0), Error);
}

TEST_CASE("Waveguide Green's function", "[em_model]")
{
    const WaveguideSpec s = WaveguideSpec::table_one(24e9);
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> ux(0.0, s.length_m), uz(0.0, s.width_m);
    for (int t = 0; t < 20; ++t)
    {
        const Vec3 p(ux(rng), 0.0, uz(rng)), q(ux(rng), 0.0, uz(rng));
        const cplx a = waveguide_green(p, q, s), b = waveguide_green(q, p, s);
        CHECK(std::abs(a - b) <= 1e-12 * std::abs(a));
        const cplx ref = oracle::g_sa(qp(p), qp(q), quad_guide(s)).to_double();
        CHECK(rel_err(a, ref) < 1e-10);
    }
    CHECK(std::abs(waveguide_green(Vec3(0.01, 0, 0), Vec3(0.02, 0, s.width_m / 2), s)) == 0.0);

    // below cutoff the transverse wavenumber is imaginary; the formula must still agree
    WaveguideSpec narrow = s;
    narrow.width_m = 0.3 * s.wavelength();
    const Vec3 p(0.01, 0, narrow.width_m / 2), q(0.03, 0, narrow.width_m / 3);
    CHECK(rel_err(waveguide_green(p, q, narrow), oracle::g_sa(qp(p), qp(q), quad_guide(narrow)).to_double()) < 1e-9);

    // resonance: choose S so that k_x S = pi
    WaveguideSpec res = s;
    res.length_m = kPi / s.transverse_wavenumber().real();
    CHECK_THROWS_AS(waveguide_green(p, q, res), Error);
}

TEST_CASE("Free-space Green's function", "[em_model]")
{
    const WaveguideSpec s = WaveguideSpec::table_one(24e9);
    const double lambda = s.wavelength();
    const Vec3 p(0.01, 0.002, 0.003), q(0.004, 0.02, 0.001);
    CHECK(std::abs(freespace_green(p, q, s) - freespace_green(q, p, s)) <= 1e-14 * std::abs(freespace_green(p, q, s)));

    const Vec3 o(0.0, 0.0, 0.0), l(lambda, 0.0, 0.0);
    CHECK(rel_err(freespace_green(o, l, s), oracle::g_mc(qp(o), qp(l), quad_guide(s)).to_double()) < 1e-12);
    CHECK(rel_err(freespace_green(p, q, s), oracle::g_mc(qp(p), qp(q), quad_guide(s)).to_double()) < 1e-11);

    CHECK(std::abs(freespace_green(o, Vec3(1e3 * lambda, 0, 0), s)) < std::abs(freespace_green(o, Vec3(10 * lambda, 0, 0), s)));
    CHECK_THROWS_AS(freespace_green(p, p, s), Error);
}

TEST_CASE("P_SA structure and values", "[em_model]")
{
    const WaveguideSpec s = spec_for(24e9, 32);
    const DmaGeometry g = table_geometry(s, 4, 32);
    const CMat psa = build_psa(g, s);
    REQUIRE(psa.rows() == 128);
    REQUIRE(psa.cols() == 4);
    const oracle::Guide qg = quad_guide(s);
    const double w = s.omega();
    for (int n = 0; n < g.n_total(); ++n)
        for (int i = 0; i < 4; ++i)
        {
            if (g.strip_of[n] != i)
            {
                CHECK(psa(n, i) == cplx(0.0, 0.0));
                continue;
            }
            const cplx ref = kJ * w * oracle::g_sa(qp(g.elements[n]), qp(g.ports[i]), qg).to_double();
            CHECK(rel_err(psa(n, i), ref) < 1e-10);
        }
    for (int i = 0; i < 4; ++i)
        CHECK((psa.col(i).array().abs() > 0).count() == 32);
}

TEST_CASE("W_MC symmetry and oracle", "[em_model]")
{
    const WaveguideSpec s = spec_for(24e9, 32);
    const DmaGeometry g = table_geometry(s, 4, 32);
    const CMat w = build_wmc(g, s);
    CHECK((w - w.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * w.cwiseAbs().maxCoeff());

    const oracle::Guide qg = quad_guide(s);
    const cplx scale = kJ * s.omega() * s.permittivity();
    oracle::quad fro2 = 0;
    const cplx self = freespace_self_term(s);
    for (int n = 0; n < g.n_total(); ++n)
        for (int m = 0; m < g.n_total(); ++m)
        {
            oracle::qc v;
            if (n == m)
                v = oracle::qc(2.0 * self) + oracle::g_sa(qp(g.elements[n]), qp(g.elements[n]), qg);
            else
            {
                v = oracle::qc(2) * oracle::g_mc(qp(g.elements[n]), qp(g.elements[m]), qg);
                if (g.strip_of[n] == g.strip_of[m])
                    v = v + oracle::g_sa(qp(g.elements[n]), qp(g.elements[m]), qg);
            }
            v = oracle::qc(scale) * v;
            fro2 += oracle::abs2(v);
        }
    CHECK_THAT(w.norm(), WithinRel(static_cast<double>(boost::multiprecision::sqrt(fro2)), 1e-10));

    // cross-strip entries carry only the free-space part
    const int n = g.index(0, 3), m = g.index(2, 5);
    CHECK(rel_err(w(n, m), scale * 2.0 * freespace_green(g.elements[n], g.elements[m], s)) < 1e-14);

    // configurable self-term
    CouplingOptions opts;
    opts.self_term = cplx(0.0, 0.0);
    const CMat w0 = build_wmc(g, s, opts);
    CHECK(rel_err(w0(4, 4), scale * waveguide_green(g.elements[4], g.elements[4], s)) < 1e-14);
}

TEST_CASE("Lorentzian weights", "[em_model]")
{
    CHECK(std::abs(lorentzian_weight(kPi / 2) - kJ) < 1e-15);
    CHECK(std::abs(lorentzian_weight(3 * kPi / 2)) < 1e-15);
    for (int i = 0; i < 360; ++i)
    {
        const cplx q = lorentzian_weight(2 * kPi * i / 360.0);
        CHECK(std::abs(q) <= 1.0 + 1e-15);
        CHECK(std::abs(std::abs(q - 0.5 * kJ) - 0.5) < 1e-12);
    }
    Vec phi = Vec::LinSpaced(10, 0.0, 6.0);
    const LorentzianWeights lw = LorentzianWeights::from_phases(phi);
    CHECK((lw.k.cwiseAbs().array() - 1.0).abs().maxCoeff() < 1e-15);
    CHECK((lw.phases() - phi).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("Response assembly modes", "[em_model]")
{
    const WaveguideSpec s = spec_for(24e9, 8);
    const DmaGeometry g = table_geometry(s, 2, 8);
    const CMat psa = build_psa(g, s), wmc = build_wmc(g, s);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 2 * kPi);
    Vec phi(g.n_total());
    for (auto &v : phi)
        v = u(rng);
    const LorentzianWeights lw = LorentzianWeights::from_phases(phi);

    const DmaResponse n2 = assemble_response(psa, wmc, lw, Fidelity::neumann(2));
    const DmaResponse so = assemble_response(psa, wmc, lw, Fidelity::second_order());
    CHECK((n2.wtx - so.wtx).norm() <= 1e-12 * so.wtx.norm());
    CHECK_FALSE(so.neumann_warning);

    // exact mode against an extended-precision dense solve
    const DmaResponse ex = assemble_response(psa, wmc, lw, Fidelity::exact());
    const CVec q = lw.admittances();
    const int nt = g.n_total();
    std::vector<std::vector<oracle::qc>> A(nt, std::vector<oracle::qc>(nt)), B(nt, std::vector<oracle::qc>(2));
    for (int i = 0; i < nt; ++i)
    {
        for (int j = 0; j < nt; ++j)
            A[i][j] = oracle::qc(wmc(i, j) + (i == j ? q(i) : cplx(0.0, 0.0)));
        for (int j = 0; j < 2; ++j)
            B[i][j] = oracle::qc(psa(i, j));
    }
    const auto X = oracle::solve(A, B);
    CMat ref(nt, 2);
    for (int i = 0; i < nt; ++i)
        for (int j = 0; j < 2; ++j)
            ref(i, j) = X[i][j].to_double();
    CHECK((ex.wtx - ref).norm() <= 1e-10 * ref.norm());

    const DmaResponse nw = assemble_response(psa, wmc, lw, Fidelity::no_waveguide_loss());
    CHECK(nw.wtx.rows() == nt);
    CHECK(nw.wtx.cols() == nt);
    CHECK((nw.wtx * psa - ex.wtx).norm() <= 1e-10 * ex.wtx.norm());

    const DmaResponse nc = assemble_response(psa, wmc, lw, Fidelity::no_coupling());
    CHECK((q.asDiagonal() * nc.wtx - psa).norm() <= 1e-12 * psa.norm());

    // the cached model agrees with the generic assembly
    const DmaModel model = build_model(g, s);
    CHECK((model.second_order(lw.k) - so.wtx).norm() <= 1e-12 * so.wtx.norm());

    // a singular combined matrix is refused
    CMat bad = CMat::Zero(nt, nt);
    LorentzianWeights zero;
    zero.k = CVec::Constant(nt, -kJ); // q = 0
    CHECK_THROWS_AS(assemble_response(psa, bad, zero, Fidelity::exact()), Error);
}

TEST_CASE("Neumann approximation error decreases with order", "[em_model]")
{
    for (double fc : {7e9, 15e9, 24e9})
    {
        const WaveguideSpec s = spec_for(fc, 32);
        const DmaGeometry g = table_geometry(s, 4, 32);
        const CMat psa = build_psa(g, s), wmc = build_wmc(g, s);
        std::mt19937_64 rng(11);
        std::uniform_real_distribution<double> u(0.0, 2 * kPi);
        Vec phi(g.n_total());
        for (auto &v : phi)
            v = u(rng);
        const LorentzianWeights lw = LorentzianWeights::from_phases(phi);
        const CMat exact = assemble_response(psa, wmc, lw, Fidelity::no_waveguide_loss()).wtx;
        const CMat winv = wmc.inverse();
        double prev = std::numeric_limits<double>::infinity();
        for (int p = 1; p <= 5; ++p)
        {
            const double e = (exact - neumann_inverse(winv, lw.admittances(), p)).squaredNorm();
            CHECK(e < prev);
            prev = e;
        }
    }
}
