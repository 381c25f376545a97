/*
Copyright 2026 the mdreg authors
Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at
    http://www.apache.org/licenses/LICENSE-2.0
Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/

#pragma once

#include <cstdint>

#include "mdreg/volume.hpp"

namespace mdreg {

// Synthetic registration pair: a textured sphere phantom deformed by a
// smooth diffeomorphic ground-truth field. fixed(x) = moving(x + gt(x)), so
// the field a registrar should recover is gt itself.
struct SynthConfig {
    Dims3 dims{32, 32, 32};
    std::uint64_t seed = 1;
    float max_disp = 2.0f;         // max ground-truth displacement, voxels
    float smooth_sigma = 4.0f;     // blur of the random velocity component
    float texture_sigma = 1.2f;    // blur of the image texture noise
    float translation_frac = 0.6f; // share of max_disp carried by a global shift
    int num_spheres = 3;
    int ss_steps = 7;
};

struct SynthPair {
    Volume fixed;
    Volume moving;
    LabelVolume labels_fixed;
    LabelVolume labels_moving;
    DisplacementField gt_field;
    double initial_dice = 1.0;
    double max_gt_disp = 0.0;
};

SynthPair make_synth_pair(const SynthConfig &cfg);

// Smooth random velocity field with max vector norm `magnitude`, blurred with
// the given sigma. Used directly by diffeomorphism tests.
DisplacementField make_smooth_velocity(Dims3 dims, std::uint64_t seed, float magnitude,
                                       float sigma);

} // namespace mdreg
