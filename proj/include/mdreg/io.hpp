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

#include <string>

#include "mdreg/engine.hpp"
#include "mdreg/volume.hpp"

namespace mdreg {

// Raw format: <base>.json sidecar describing {dims, spacing, dtype, order,
// channels} plus <base>.raw with little-endian voxel data. Loaders take the
// .json path.
void save_raw(const Volume &v, const std::string &base_path);
void save_raw(const LabelVolume &v, const std::string &base_path);
void save_raw(const DisplacementField &f, const std::string &base_path);

Volume load_raw_volume(const std::string &json_path);
LabelVolume load_raw_labels(const std::string &json_path);
DisplacementField load_raw_field(const std::string &json_path);

// Single-file NIfTI-1 import (magic "n+1\0", dim[0]=3, datatype u8/i16/f32).
// Values are scaled by scl_slope/scl_inter when scl_slope != 0.
Volume load_nifti(const std::string &path);

// Binary checkpoint: magic "MDT2", version, model config JSON, then named
// f32 tensors. load(save(params)) is bitwise-identical.
void save_checkpoint(const std::string &path, ModelParams<float> &params);
ModelParams<float> load_checkpoint(const std::string &path);

std::string model_config_to_json(const ModelConfig &cfg);
ModelConfig model_config_from_json(const std::string &json_text);

} // namespace mdreg
