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

#include "fixtures.hpp"
#include "oracle.hpp"

using namespace dmasense;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace
{

Scene table_scene()
{
    Scene s;
    s.targets.push_back({Vec3(5, 18, 5), {1, 0}, 5.0});
    s.targets.push_back({Vec3(15, 5, 5), {1, 0}, 5.0});
    return s;
}

} // namespace

TEST_CASE("Path parameters", "[scene]")
{
    Scene s;
    s.rotation = 0.0;
    s.targets.push_back({Vec3(10, 0, 0), {1, 0}, 0.0});
    const double lambda = kSpeedOfLight / 24e9;
    const PathParams p = path_params(s, lambda, 0.0);
    CHECK(p.paths[0].theta_a == 0.0);
    CHECK(p.paths[0].theta_e == 0.0);

    const PathParams p1 = path_params(s, lambda, 1e-9);
    CHECK_THAT(p1.paths[0].delay - p.paths[0].delay, WithinRel(1e-9, 1e-9));

    // reference delay against a quad-precision distance computation
    const Scene t = table_scene();
    const double dt = 3.7e-9;
    const PathParams pt = path_params(t, lambda, dt);
    using oracle::quad;
    const quad d1 = boost::multiprecision::sqrt(quad(25 + 324 + 25));
    const quad d2 = boost::multiprecision::sqrt(quad(30 * 30 + 12 * 12 + 0));
    const double tau = static_cast<double>((d1 + d2) / oracle::c0() + quad(dt));
    CHECK_THAT(pt.paths[0].delay, WithinRel(tau, 1e-14));
    CHECK_THAT((pt.paths[0].delay - dt) * kSpeedOfLight, WithinRel(static_cast<double>(d1 + d2), 1e-9));

    s.targets[0].position = Vec3::Zero();
    CHECK_THROWS_AS(path_params(s, lambda, 0.0), Error);
    s.targets[0].position = s.rx_position;
    CHECK_THROWS_AS(path_params(s, lambda, 0.0), Error);
}

TEST_CASE("Radiation profile", "[scene]")
{
    CHECK_THAT(radiation_profile(0.0, 0.57), WithinRel(2 * 1.57, 1e-15));
    CHECK(radiation_profile(0.6 * kPi, 0.57) == 0.0);
    CHECK(radiation_profile(kPi / 2, 0.57) == 0.0);
    const double h = 1e-6, th = 0.4;
    const double fd = (radiation_profile(th + h, 0.57) - radiation_profile(th - h, 0.57)) / (2 * h);
    CHECK_THAT(radiation_profile_derivative(th, 0.57), WithinRel(fd, 1e-8));
}

TEST_CASE("Steering vectors", "[scene]")
{
    const double lambda = kSpeedOfLight / 24e9;
    const DmaGeometry g = build_geometry(4, 8, lambda / 2, lambda / 5, 0.003);
    const CVec b = steering_tx(0.0, 0.0, g, lambda);
    CHECK((b.array() - 1.0 / std::sqrt(32.0)).abs().maxCoeff() < 1e-15);

    for (double ta : {-1.0, 0.2, 2.5})
        for (double te : {-0.4, 0.1, 1.2})
        {
            const Steering s = steering_tx_full(ta, te, g, lambda);
            CHECK_THAT(s.value.norm(), WithinRel(1.0, 1e-14));
            // entry (strip 2, element 5) against a direct exponent
            const double ph = 2 * kPi / lambda * (5 * g.d_e * std::sin(te) * std::cos(ta) + 2 * g.d_rf * std::sin(te) * std::sin(ta));
            CHECK(std::abs(s.value(g.index(2, 5)) - std::exp(kJ * ph) / std::sqrt(32.0)) < 1e-14);
            const double h = 1e-6;
            const CVec fa = (steering_tx(ta + h, te, g, lambda) - steering_tx(ta - h, te, g, lambda)) / (2 * h);
            const CVec fe = (steering_tx(ta, te + h, g, lambda) - steering_tx(ta, te - h, g, lambda)) / (2 * h);
            CHECK((fa - s.d_azimuth).norm() <= 1e-6 * s.d_azimuth.norm() + 1e-12);
            CHECK((fe - s.d_elevation).norm() <= 1e-6 * s.d_elevation.norm() + 1e-12);

            const Steering r = steering_rx_full(ta, te, 6, lambda / 2, lambda, 0.3);
            CHECK_THAT(r.value.norm(), WithinRel(1.0, 1e-14));
            const CVec ra = (steering_rx(ta + h, te, 6, lambda / 2, lambda, 0.3) - steering_rx(ta - h, te, 6, lambda / 2, lambda, 0.3)) / (2 * h);
            CHECK((ra - r.d_azimuth).norm() <= 1e-6 * r.d_azimuth.norm() + 1e-12);
        }
}

TEST_CASE("Channel matrix", "[scene]")
{
    auto in = fixtures::random_instance(5, 2, 4, 2, 5, 4);
    const double lambda = in.grid.wavelength();
    PathParams p = path_params(in.scene, lambda, 2e-9);

    // rank at most G
    const CMat h = channel_matrix(1, p, in.scene, in.geom, in.grid);
    Eigen::JacobiSVD<CMat> svd(h);
    CHECK(svd.singularValues()(2) < 1e-12 * svd.singularValues()(0));

    // centre subcarrier against a long double accumulation
    CHECK(in.grid.frequency(2) == in.grid.carrier_hz);
    const CMat hc = channel_matrix(2, p, in.scene, in.geom, in.grid);
    using ld = long double;
    for (int r = 0; r < in.scene.rx_antennas; ++r)
        for (int c = 0; c < in.geom.n_total(); ++c)
        {
            std::complex<ld> acc = 0;
            for (const auto &pp : p.paths)
            {
                const ld ph = -2.0L * std::numbers::pi_v<ld> * ld(in.grid.carrier_hz) * ld(pp.delay);
                const std::complex<ld> e(std::cos(ph), std::sin(ph));
                const CVec at = steering_tx(pp.theta_a, pp.theta_e, in.geom, lambda);
                const CVec ar = steering_rx_full(pp.psi_a, pp.psi_e, in.scene, lambda).value;
                acc += std::complex<ld>(pp.gain.real(), pp.gain.imag()) * e *
                       std::complex<ld>(ar(r).real(), ar(r).imag()) * std::conj(std::complex<ld>(at(c).real(), at(c).imag()));
            }
            const cplx ref(static_cast<double>(acc.real()), static_cast<double>(acc.imag()));
            CHECK(std::abs(hc(r, c) - ref) <= 1e-9 * std::abs(ref) + 1e-22);
        }

    // linear in each reflection coefficient
    Scene s2 = in.scene;
    s2.targets[0].reflection *= 2.0;
    const PathParams p2 = path_params(s2, lambda, 2e-9);
    PathParams only0 = p, only0x2 = p2;
    only0.paths.resize(1);
    only0x2.paths.resize(1);
    CHECK((channel_matrix(0, only0x2, s2, in.geom, in.grid) - 2.0 * channel_matrix(0, only0, in.scene, in.geom, in.grid)).norm() <
          1e-14 * channel_matrix(0, only0, in.scene, in.geom, in.grid).norm());

    // vanished gain
    p.paths.resize(1);
    p.paths[0].gain = 0.0;
    CHECK(channel_matrix(0, p, in.scene, in.geom, in.grid).norm() == 0.0);
}

TEST_CASE("Uncertainty extents and beam counts", "[scene]")
{
    const double lambda = kSpeedOfLight / 24e9;
    const AngularExtent e = angular_extent(Vec3::Zero(), Vec3(5, 18, 5), 5.0, kPi / 4);
    CHECK_THAT(e.half_width, WithinRel(std::asin(5.0 / std::sqrt(374.0)), 1e-14));
    const BeamCount c = beam_count(e, lambda / (32 * 0.2 * lambda), lambda / (4 * 0.5 * lambda));
    CHECK(c.n_a == 4);
    CHECK(c.n_e == 2);
    CHECK(beam_count(angular_extent(Vec3::Zero(), Vec3(5, 18, 5), 0.0), 0.1, 0.1).beams() == 1);
    CHECK_THROWS_AS(angular_extent(Vec3::Zero(), Vec3(1, 1, 0), 3.0), Error);
    const auto a = beam_angles(0.0, 0.5, 3);
    CHECK(a.front() == -0.5);
    CHECK(a.back() == 0.5);
}

TEST_CASE("RX combiner", "[scene]")
{
    const double lambda = kSpeedOfLight / 24e9;
    Scene s = table_scene();
    const std::vector<BeamCount> counts{{4, 2}, {4, 2}};
    const RxCombiner a = rx_combiner(s, counts, lambda);
    const RxCombiner b = rx_combiner(s, counts, lambda);
    CHECK(a.w == b.w);
    CHECK(a.w.rows() == 16);
    for (int c = 0; c < 16 - a.padded; ++c)
        CHECK((a.w.col(c).cwiseAbs().array() - 0.25).abs().maxCoeff() < 1e-14);

    Scene one;
    one.rx_antennas = 1;
    one.targets.push_back({Vec3(10, 3, 5), {1, 0}, 0.0});
    const RxCombiner r1 = rx_combiner(one, {{1, 1}}, lambda);
    CHECK(r1.w.rows() == 1);
    CHECK_THAT(std::abs(r1.w(0, 0)), WithinRel(1.0, 1e-14));
}

TEST_CASE("Scene validation", "[scene]")
{
    Scene s = table_scene();
    CHECK(s.validate(4).empty());
    CHECK_FALSE(s.validate(2).empty());
    s.targets[0].uncertainty_m = -1;
    CHECK_THROWS_AS(s.validate(4), Error);
}
