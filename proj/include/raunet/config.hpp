#pragma once

// Pipeline configuration: flat `key = value` text, `#` starts a comment.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "raunet/ops.hpp"
#include "raunet/postprocess.hpp"

namespace raunet {

struct PipelineConfig {
    float window_lo = -100.0f;
    float window_hi = 200.0f;
    std::size_t loc_slice_size = 256;
    std::size_t liver_patch_xy = 224;
    std::size_t liver_patch_z = 32;
    std::size_t tumor_patch_xy = 128;
    std::size_t tumor_patch_z = 32;
    std::size_t brain_patch = 64;
    double stride_fraction_xy = 0.5;
    double stride_fraction_z = 0.5;
    std::size_t margin = 10;
    float threshold = 0.5f;
    int connectivity = 26;
    std::size_t folds = 5;
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::size_t plateau_patience = 20;
    double lr_factor = 0.1;
    std::size_t epochs = 50;
    std::size_t steps_per_epoch = 0;  // 0: one pass over the training set
    std::uint64_t seed = 1;
    std::size_t width_divisor = 1;
    std::size_t liver_patches_per_volume = 8;
    std::size_t tumor_patches_per_volume = 150;
    double tumor_fraction = 0.5;
    double nonliver_fraction = 1.0 / 3.0;
    VoteMode vote_mode = VoteMode::Mean;
    NormMode inference_norm = NormMode::BatchStats;

    bool operator==(const PipelineConfig&) const = default;
};

struct ConfigField {
    std::string key;
    std::string value;
    bool published;  // false: chosen for this implementation
    std::string note;
};

// Throws std::invalid_argument naming the offending field.
void validate(const PipelineConfig& cfg);

// Unknown keys, duplicate keys and malformed values throw DataError with the
// line number. Missing keys keep their defaults.
PipelineConfig parse_config(const std::string& text);
PipelineConfig load_config(const std::string& path);

std::vector<ConfigField> config_fields(const PipelineConfig& cfg);
// Round-trips through parse_config.
std::string format_config(const PipelineConfig& cfg);
std::string provenance_report(const PipelineConfig& cfg);

// Stride in voxels for a patch extent: max(1, floor(patch * fraction)).
std::size_t stride_for(std::size_t patch, double fraction);

}  // namespace raunet
