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

// Acceptance run: one PASS/FAIL line per criterion, nonzero exit when any fails.

#include "dmasense/harness.hpp"

#include "conic_cases.hpp"
#include "fixtures.hpp"

#include <chrono>
#include <cstdio>
#include <iostream>

using namespace dmasense;
using fixtures::rel_fro;

namespace
{

int failures = 0;

struct Timer
{
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); }
};

void verdict(int id, const std::string &name, bool pass, const std::string &detail, const Timer &t, double limit_s)
{
    const bool in_time = t.seconds() <= limit_s;
    const bool ok = pass && in_time;
    if (!ok)
        ++failures;
    std::printf("criterion %2d %s  %s: %s (%.1f s, limit %.0f s)\n", id, ok ? "PASS" : "FAIL", name.c_str(),
                detail.c_str(), t.seconds(), limit_s);
    std::fflush(stdout);
}

std::string g(double v)
{
    char b[32];
    std::snprintf(b, sizeof b, "%.4g", v);
    return b;
}

Scenario scenario(const std::string &text)
{
    std::istringstream in(text);
    return parse_scenario(in);
}

double col(const std::vector<std::string> &row, std::size_t i) { return std::stod(row[i]); }

PathParams perturb(PathParams p, int i, int G, double h)
{
    PathParam &q = p.paths[i % G];
    switch (i / G)
    {
    case kThetaA: q.theta_a += h; break;
    case kThetaE: q.theta_e += h; break;
    case kPsiA: q.psi_a += h; break;
    case kPsiE: q.psi_e += h; break;
    case kAlphaR: q.gain += h; break;
    case kAlphaI: q.gain += cplx(0.0, h); break;
    default: q.delay += h; break;
    }
    return p;
}

double step_for(int i, int G, const PathParams &p, double fc, double rel)
{
    switch (i / G)
    {
    case kAlphaR:
    case kAlphaI: return rel * std::abs(p.paths[i % G].gain);
    case kTau: return rel / (2 * kPi * fc);
    default: return rel;
    }
}

void criterion_1()
{
    Timer t;
    const Scenario s = scenario("");
    const ExperimentOutput out = run_experiment("approx_error", s);
    bool ok = out.summary.rows.size() == 15;
    std::string detail;
    double ratio24 = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t f = 0; ok && f < 3; ++f)
    {
        std::vector<double> e;
        for (std::size_t p = 0; p < 5; ++p)
            e.push_back(col(out.summary.rows[f * 5 + p], 2));
        for (std::size_t p = 1; p < 5; ++p)
            ok = ok && e[p] < e[p - 1];
        detail += g(col(out.summary.rows[f * 5], 0) / 1e9) + " GHz e(1..5)=" + g(e[0]) + ".." + g(e[4]) + "; ";
        if (f == 2)
            ratio24 = (e[1] - e[2]) / (e[0] - e[1]);
    }
    ok = ok && ratio24 < 0.5;
    verdict(1, "Neumann-order trend", ok, detail + "ratio(24 GHz)=" + g(ratio24) + " < 0.5", t, 60);
}

void criterion_2()
{
    Timer t;
    std::string detail;
    bool ok = true;
    for (auto [u, P, M] : {std::tuple{5.0, 8, 48}, std::tuple{0.5, 2, 12}})
    {
        Scenario s = scenario("");
        for (auto &tg : s.targets)
            tg.uncertainty_m = u;
        const Hardware hw = build_hardware(s, s.carrier_hz, s.n_e);
        const UncertaintyGrid ug = discretize_uncertainty(s.scene(), hw.geom, hw.spec.wavelength());
        ok = ok && ug.P() == P && ug.M() == M;
        detail += "u=" + g(u) + ": P=" + std::to_string(ug.P()) + " M=" + std::to_string(ug.M()) + " (expect " +
                  std::to_string(P) + "/" + std::to_string(M) + "); ";
    }
    verdict(2, "beam counts", ok, detail, t, 30);
}

void criterion_3()
{
    Timer t;
    double worst_x = 0, worst_k = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed)
    {
        const int n_rf = 1 + static_cast<int>(seed % 2), n_e = 2 + static_cast<int>(seed % 7);
        const int G = 1 + static_cast<int>(seed % 2), K = 2 + static_cast<int>(seed % 7);
        const auto in = fixtures::random_instance(7000 + seed, n_rf, n_e, G, K, 3, 3);
        const PathParams p = path_params(in.scene, in.grid.wavelength(), 0.0);
        const CMat wtx = in.model.second_order(in.k);
        const Mat J = channel_fim(in.F, p, in.scene, in.geom, in.grid, wtx, in.wrx);
        const FisherKernels fk = build_fisher_kernels(p, in.scene, in.geom, in.grid, in.wrx);
        const auto gam = fk.channel_gammas();
        const CMat X = in.F * in.F.adjoint();
        worst_x = std::max(worst_x, rel_fro(fim_linear_in_X(wtx, fk.tx_basis, gam, 7 * G).evaluate(X), J));
        const KFimMap mk = fim_linear_in_K(in.model.wmc_inv, in.model.psa, X, fk.tx_basis, gam, 7 * G);
        worst_k = std::max(worst_k, rel_fro(mk.evaluate(lift_weights(in.k)), J));
    }
    verdict(3, "linear FIM maps equal direct evaluation", worst_x <= 1e-8 && worst_k <= 1e-8,
            "max rel err X-map " + g(worst_x) + ", K-map " + g(worst_k) + " (tol 1e-8, 20 instances)", t, 120);
}

void criterion_4()
{
    Timer t;
    double worst_mu = 0, worst_t = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed)
    {
        const int G = 2;
        auto in = fixtures::random_instance(8000 + seed, 2, 4, G, 3, 3);
        const double lambda = in.grid.wavelength();
        const PathParams p = path_params(in.scene, lambda, 0.5e-9);
        const CMat wtx = in.model.second_order(in.k);
        for (int k = 0; k < in.grid.subcarriers; ++k)
        {
            const auto d = mu_derivatives(k, p, in.scene, in.geom, in.grid, wtx, in.wrx, in.F.col(0));
            for (int i = 0; i < 7 * G; ++i)
            {
                const double h = step_for(i, G, p, in.grid.carrier_hz, 1e-6);
                const CVec fd =
                    (mu_value(k, perturb(p, i, G, h), in.scene, in.geom, in.grid, wtx, in.wrx, in.F.col(0)) -
                     mu_value(k, perturb(p, i, G, -h), in.scene, in.geom, in.grid, wtx, in.wrx, in.F.col(0))) /
                    (2 * h);
                worst_mu = std::max(worst_mu, (fd - d[i]).norm() / d[i].norm());
            }
        }
        const Mat T = jacobian_T(p, in.scene, lambda);
        auto flat = [&](const Scene &s, double dt) {
            const PathParams q = path_params(s, lambda, dt);
            Vec x(7 * G);
            for (int gi = 0; gi < G; ++gi)
            {
                x(gi) = q.paths[gi].theta_a;
                x(G + gi) = q.paths[gi].theta_e;
                x(2 * G + gi) = q.paths[gi].psi_a;
                x(3 * G + gi) = q.paths[gi].psi_e;
                x(4 * G + gi) = q.paths[gi].gain.real();
                x(5 * G + gi) = q.paths[gi].gain.imag();
                x(6 * G + gi) = q.paths[gi].delay;
            }
            return x;
        };
        const double h = 1e-5, dt = 0.5e-9;
        Mat fd(7 * G, 3 * G + 2);
        for (int c = 0; c < 3 * G; ++c)
        {
            Scene a = in.scene, b = in.scene;
            a.targets[c / 3].position(c % 3) += h;
            b.targets[c / 3].position(c % 3) -= h;
            fd.col(c) = (flat(a, dt) - flat(b, dt)) / (2 * h);
        }
        Scene a = in.scene, b = in.scene;
        a.rotation += h;
        b.rotation -= h;
        fd.col(3 * G) = (flat(a, dt) - flat(b, dt)) / (2 * h);
        fd.col(3 * G + 1) = (flat(in.scene, dt + 1e-12) - flat(in.scene, dt - 1e-12)) / 2e-12;
        for (int r = 0; r < 7 * G; ++r)
            worst_t = std::max(worst_t, (fd.row(r) - T.row(r)).norm() / T.row(r).norm());
    }
    verdict(4, "derivative correctness", worst_mu <= 1e-5 && worst_t <= 1e-5,
            "max rel err dmu " + g(worst_mu) + ", T " + g(worst_t) + " (tol 1e-5, 10 scenes)", t, 60);
}

void criterion_5()
{
    Timer t;
    auto suite = cases::scripted_suite();
    int n = 0, passed = 0;
    double worst_obj = 0, worst_viol = 0;
    auto judge = [&](const conic::ConicProblem &p, double expected) {
        ++n;
        const auto sol = conic::solve_conic(p);
        const double rel = std::abs(sol.objective - expected) / std::max(1.0, std::abs(expected));
        const auto v = conic::check_solution(p, sol.x);
        worst_obj = std::max(worst_obj, rel);
        worst_viol = std::max({worst_viol, v.psd, v.linear});
        if (sol.status == conic::Status::optimal && rel <= 1e-6 && v.psd <= 1e-7 && v.linear <= 1e-7)
            ++passed;
    };
    for (auto &c : suite.sdp)
        judge(c.problem, c.expected);
    for (auto &c : suite.lp)
        judge(cases::lp_as_conic(c), c.expected);
    verdict(5, "solver soundness", n == 25 && passed == n,
            std::to_string(passed) + "/" + std::to_string(n) + " optimal; max rel obj err " + g(worst_obj) +
                ", max violation " + g(worst_viol),
            t, 600);
}

const char *kReduced = "preset = small\ntrials = 50\nstrategies = direct_crb, codebook_sdp, codebook_lp_bound\n";

void criterion_6()
{
    Timer t;
    bool ok = true;
    std::string detail;
    for (double u : {5.0, 0.5})
    {
        Scenario s = scenario(kReduced);
        for (auto &tg : s.targets)
            tg.uncertainty_m = u;
        const MonteCarlo mc = run_monte_carlo(s, {}, hash_string("acceptance"));
        const double d = mc.rows[0].mean_peb_m, c = mc.rows[1].mean_peb_m, l = mc.rows[2].mean_peb_m;
        ok = ok && std::isfinite(d) && d <= 1.02 * c && c <= 1.02 * l;
        detail += "u=" + g(u) + ": direct " + g(d) + " <= codebook " + g(c) + " <= lp_bound " + g(l) + "; ";
    }
    verdict(6, "strategy ordering", ok, detail + "slack 2%", t, 900);
}

void criterion_7()
{
    Timer t;
    const Scenario s = scenario("sweep.n_e = 8, 16, 32\n");
    const ExperimentOutput out = run_experiment("codebook_cost", s);
    bool ok = out.summary.rows.size() == 9;
    std::string detail;
    double prev_full = -1;
    for (std::size_t b = 0; ok && b < 9; b += 3)
    {
        const double full = col(out.summary.rows[b], 4), nc = col(out.summary.rows[b + 1], 4),
                     nl = col(out.summary.rows[b + 2], 4);
        ok = ok && full > nc && nc > nl && full > prev_full;
        prev_full = full;
        detail += "N_E=" + out.summary.rows[b][0] + ": " + g(full) + " > " + g(nc) + " > " + g(nl) + "; ";
    }
    verdict(7, "mutual-coupling ablation", ok, detail, t, 600);
}

bool nondecreasing(const std::vector<double> &v)
{
    for (std::size_t i = 1; i < v.size(); ++i)
        if (!(v[i] >= v[i - 1]))
            return false;
    return true;
}

void criterion_8()
{
    Timer t;
    bool ok = true;
    std::string detail;
    {
        Scenario s = scenario(std::string(kReduced) + "sweep.clock_std_m = 0.01, 1, 100\n"
                                                      "sweep.scenario_uncertainty_m = 5, 0.5\n");
        const ExperimentOutput out = run_experiment("peb_vs_clock", s);
        for (double u : s.sweep_scenario_uncertainty_m)
            for (Strategy st : s.strategies)
            {
                std::vector<double> v;
                for (const auto &r : out.summary.rows)
                    if (col(r, 0) == u && r[2] == to_string(st))
                        v.push_back(col(r, 5));
                const bool mono = v.size() == 3 && nondecreasing(v);
                ok = ok && mono;
                if (!mono || st == Strategy::direct_crb)
                    detail += std::string(mono ? "" : "VIOLATION ") + "clock u=" + g(u) + " " + to_string(st) + " " +
                              g(v[0]) + "," + g(v[1]) + "," + g(v[2]) + "; ";
            }
    }
    {
        Scenario s = scenario(std::string(kReduced) + "sweep.uncertainty_m = 0.5, 2, 5\n"
                                                      "sweep.radius_clock_std_m = 1\n");
        const ExperimentOutput out = run_experiment("peb_vs_radius", s);
        for (Strategy st : s.strategies)
        {
            std::vector<double> v;
            for (const auto &r : out.summary.rows)
                if (r[2] == to_string(st))
                    v.push_back(col(r, 5));
            const bool mono = v.size() == 3 && nondecreasing(v);
            ok = ok && mono;
            if (!mono || st == Strategy::direct_crb)
                detail += std::string(mono ? "" : "VIOLATION ") + "radius " + to_string(st) + " " + g(v[0]) + "," +
                          g(v[1]) + "," + g(v[2]) + "; ";
        }
    }
    verdict(8, "monotonic degradation", ok, detail, t, 900);
}

void criterion_9()
{
    Timer t;
    std::mt19937_64 rng(99);
    bool ok = true;
    double worst_mod = 0, worst_rel = 0;
    int increases = 0;
    for (int trial = 0; trial < 5; ++trial)
    {
        const int n = 8 + 4 * trial;
        const CVec ks = fixtures::random_unit(rng, n);
        const CMat U = fixtures::random_complex(rng, 3 * n, n);
        const CVec d = U * ks;
        const RcgResult r = riemannian_cg_unit_circle(d, U, fixtures::random_unit(rng, n), {4000, 1e-12});
        worst_mod = std::max(worst_mod, r.max_modulus_error);
        worst_rel = std::max(worst_rel, r.objective / d.squaredNorm());
        for (std::size_t i = 1; i < r.trace.size(); ++i)
            increases += r.trace[i] > r.trace[i - 1];
    }
    for (std::uint64_t seed = 1; seed <= 3; ++seed)
    {
        const fixtures::Instance in = fixtures::random_instance(90 + seed, 2, 8, 1, 8, 4);
        const CVec ks = fixtures::random_unit(rng, 16);
        const CMat B = in.model.second_order(ks) * fixtures::random_complex(rng, 2, 6);
        const ProjectionResult pr = project_codebook(B, in.model, ProjectionModel::full, fixtures::random_unit(rng, 16));
        worst_mod = std::max(worst_mod, pr.max_modulus_error);
        worst_rel = std::max(worst_rel, pr.residual / B.squaredNorm());
        for (std::size_t i = 1; i < pr.trace.size(); ++i)
            increases += pr.trace[i] > pr.trace[i - 1];
    }
    ok = worst_mod <= 1e-12 && worst_rel <= 1e-8 && increases == 0;
    verdict(9, "Riemannian projection invariants", ok,
            "max modulus err " + g(worst_mod) + ", objective increases " + std::to_string(increases) +
                ", max planted residual " + g(worst_rel),
            t, 600);
}

void criterion_10()
{
    Timer t;
    double worst = 0;
    bool usable = true;
    for (int G : {1, 2})
    {
        fixtures::Instance in = fixtures::random_instance(61 + G, 2, 4, G, 8, 4);
        for (auto &tg : in.scene.targets)
            tg.uncertainty_m = 0.0;
        in.scene.clock_std_s = meters_to_seconds(10.0);
        const DesignContext ctx = build_design_context(in.scene, in.grid, in.model);
        conic::Settings st;
        st.gap_tol = 1e-9;
        const CovarianceResult r = design_general_covariance(ctx, st);
        usable = usable && r.sdp.usable && ctx.P() == 1;
        worst = std::max(worst, span_residual(r.Z, ctx.samples[0].kernels.tx_basis));
    }
    verdict(10, "optimal covariance in steering span", usable && worst <= 1e-6, "max relative change " + g(worst) + " (tol 1e-6)", t,
            600);
}

void criterion_11()
{
    Timer t;
    const Scenario s = scenario("preset = small\ntrials = 10\n");
    const auto root = std::filesystem::temp_directory_path() / "dmasense_acceptance";
    std::filesystem::remove_all(root);
    auto slurp = [](const std::filesystem::path &p) {
        std::ifstream f(p, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
    };
    int files = 0, identical = 0;
    for (const auto &e : experiment_names())
    {
        write_outputs(run_experiment(e, s), s, root / "a" / e);
        write_outputs(run_experiment(e, s), s, root / "b" / e);
        for (const auto &f : {e + ".csv", e + ".detail.csv", std::string("manifest.json")})
        {
            ++files;
            const std::string x = slurp(root / "a" / e / f);
            identical += !x.empty() && x == slurp(root / "b" / e / f);
        }
    }
    std::filesystem::remove_all(root);
    verdict(11, "determinism", identical == files,
            std::to_string(identical) + "/" + std::to_string(files) + " files byte-identical over all experiments", t,
            1800);
}

} // namespace

int main()
{
    const std::vector<void (*)()> criteria{criterion_1, criterion_2, criterion_3, criterion_4,
                                           criterion_5, criterion_6, criterion_7, criterion_8,
                                           criterion_9, criterion_10, criterion_11};
    for (std::size_t i = 0; i < criteria.size(); ++i)
    {
        try
        {
            criteria[i]();
        }
        catch (const std::exception &e)
        {
            ++failures;
            std::printf("criterion %2zu FAIL  exception: %s\n", i + 1, e.what());
        }
    }
    std::printf("%d of %zu criteria failed\n", failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
