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

#include <map>
#include <vector>

#include "mdreg/volume.hpp"

namespace mdreg {

// 2|A n B| / (|A| + |B|); 1.0 when both masks are empty.
double dice(const LabelVolume &a, const LabelVolume &b, int label);

// Labels (nonzero) present in either volume, ascending.
std::vector<int> labels_present(const LabelVolume &a, const LabelVolume &b);

// Mean Dice over all nonzero labels present in either volume.
double mean_dice(const LabelVolume &a, const LabelVolume &b);

// 95th percentile (linear interpolation between order statistics) of the
// pooled directed surface distances a->b and b->a, in mm. Surface voxels are
// foreground voxels with a face-neighbor outside the label or on the border.
double hd95(const LabelVolume &a, const LabelVolume &b, int label,
            std::array<float, 3> spacing);

// Mean of all directed surface-to-nearest-surface distances pooled over both
// directions, in mm.
double assd(const LabelVolume &a, const LabelVolume &b, int label,
            std::array<float, 3> spacing);

// Nearest-neighbor resampling of labels at x + phi(x).
LabelVolume warp_labels(const LabelVolume &labels, const DisplacementField &phi);

struct MetricReport {
    std::map<int, double> dsc_per_label;
    double mean_dsc = 0.0;
    std::map<int, double> hd95_per_label;
    std::map<int, double> assd_per_label;
    double hd95_mean = 0.0;
    double assd_mean = 0.0;
    double folding_pct = 0.0; // percentage, not fraction
};

// Full report comparing fixed labels `a` against moving labels `b`, where `b`
// is first warped by `phi` when provided. hd95/assd cover labels non-empty in
// both volumes.
MetricReport evaluate_labels(const LabelVolume &a, const LabelVolume &b,
                             const DisplacementField *phi);

} // namespace mdreg
