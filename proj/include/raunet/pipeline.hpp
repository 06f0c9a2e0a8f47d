#pragma once

// The three-stage liver and tumor cascade: 2D localisation, 3D liver
// segmentation inside the box, 3D tumor segmentation inside the liver.

#include <cstdint>
#include <vector>

#include "raunet/config.hpp"
#include "raunet/metrics.hpp"
#include "raunet/preprocess.hpp"
#include "raunet/training.hpp"

namespace raunet {

// HU window followed by per-volume normalisation.
Volume prepare_volume(const Volume& hu, const PipelineConfig& cfg);

TrainConfig train_config(const PipelineConfig& cfg);

// Training samples for each stage, taken from a prepared volume and its
// ground truth. The liver stage crops the ground-truth box (plus margin) and
// resamples it in x-y exactly as inference does.
std::vector<Sample> localization_samples(const Volume& prepared, const Mask& liver, const PipelineConfig& cfg,
                                         std::uint64_t seed);
std::vector<Sample> liver_samples(const Volume& prepared, const Mask& liver, const PipelineConfig& cfg,
                                  std::uint64_t seed);
std::vector<Sample> tumor_samples(const Volume& prepared, const Mask& liver, const Mask& tumor,
                                  const PipelineConfig& cfg, std::uint64_t seed);

// Liver box for the liver stage: `box` grown in z to at least one patch depth.
Box liver_stage_box(const Box& box, const PipelineConfig& cfg, const Extents& volume);

// Stage outputs. Probabilities from several models are vote-merged.
Mask localize(const Volume& prepared, Network<float>& net, const PipelineConfig& cfg);
Volume liver_probability(const Volume& prepared, const Box& box, const std::vector<Network<float>*>& models,
                         const PipelineConfig& cfg);
Mask segment_liver(const Volume& prepared, const Box& box, const std::vector<Network<float>*>& models,
                   const PipelineConfig& cfg);
Mask segment_tumor(const Volume& prepared, const Mask& liver, const std::vector<Network<float>*>& models,
                   const PipelineConfig& cfg);

struct CascadeModels {
    Network<float>* localization = nullptr;
    std::vector<Network<float>*> liver;  // one per fold
    std::vector<Network<float>*> tumor;
};

struct CascadeResult {
    Mask coarse;  // stage (a) largest component
    Box box;      // stage (a) box with margin
    Mask liver;
    Mask tumor;
};

// Throws DataError when stage (a) finds no liver.
CascadeResult run_cascade(const Volume& hu, CascadeModels& models, const PipelineConfig& cfg);

}  // namespace raunet
