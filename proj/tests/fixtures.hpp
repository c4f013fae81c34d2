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

// Random reduced instances shared by unit tests and the acceptance gate.

#ifndef DMASENSE_TESTS_FIXTURES_HPP
#define DMASENSE_TESTS_FIXTURES_HPP

#include "dmasense/em_model.hpp"
#include "dmasense/fisher.hpp"
#include "dmasense/scene.hpp"

#include <random>

namespace fixtures
{

using namespace dmasense;

struct Instance
{
    WaveguideSpec spec;
    DmaGeometry geom;
    DmaModel model;
    Scene scene;
    OfdmGrid grid;
    CMat wrx;
    CVec k;   // unit-modulus analog weights
    CMat F;   // N_RF x M digital precoder
};

inline CMat random_complex(std::mt19937_64 &rng, Eigen::Index r, Eigen::Index c)
{
    std::normal_distribution<double> n(0.0, 1.0);
    CMat m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j)
            m(i, j) = cplx(n(rng), n(rng));
    return m;
}

inline CVec random_unit(std::mt19937_64 &rng, Eigen::Index n)
{
    std::uniform_real_distribution<double> u(0.0, 2 * kPi);
    CVec k(n);
    for (auto &v : k)
        v = std::exp(kJ * u(rng));
    return k;
}

inline Instance random_instance(std::uint64_t seed, int n_rf, int n_e, int G, int K, int m_r, int frames = 2)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ux(3.0, 30.0), uy(2.0, 18.0), uz(2.0, 8.0), urot(-0.7, 0.7);
    Instance in;
    in.spec = WaveguideSpec::table_one(24e9);
    const double lambda = in.spec.wavelength();
    in.geom = build_geometry(n_rf, n_e, 0.5 * lambda, 0.2 * lambda, 0.5 * in.spec.width_m);
    in.model = build_model(in.geom, in.spec);
    in.scene.rotation = urot(rng);
    in.scene.rx_antennas = m_r;
    in.scene.clock_std_s = meters_to_seconds(1.0);
    for (int g = 0; g < G; ++g)
    {
        Target t;
        t.position = Vec3(ux(rng), uy(rng), uz(rng));
        t.reflection = std::exp(kJ * std::uniform_real_distribution<double>(0, 2 * kPi)(rng));
        t.uncertainty_m = 1.0;
        in.scene.targets.push_back(t);
    }
    in.grid.carrier_hz = in.spec.carrier_hz;
    in.grid.subcarriers = K;
    in.grid.spacing_hz = 120e3;
    in.grid.frames = frames;
    in.wrx = random_complex(rng, m_r, m_r);
    in.k = random_unit(rng, in.geom.n_total());
    in.F = random_complex(rng, n_rf, frames);
    return in;
}

inline double rel_fro(const Mat &a, const Mat &b) { return (a - b).norm() / b.norm(); }

} // namespace fixtures

#endif
