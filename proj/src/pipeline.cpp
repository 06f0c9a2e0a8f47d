#include "raunet/pipeline.hpp"

#include <stdexcept>

namespace raunet {
namespace {

Sample to_sample(Patch&& p) { return {std::move(p.image), std::move(p.target)}; }

Volume predict(Network<float>& net, const Volume& patch, const PipelineConfig& cfg) {
    return volume_from_tensor(net.forward(to_tensor(patch), cfg.inference_norm), patch.spacing);
}

Volume predict_slice(Network<float>& net, const Volume& slice, const PipelineConfig& cfg) {
    const Extents& e = slice.extents;
    const Tensor<float> in({1, 1, e.y, e.x}, slice.values);
    return volume_from_tensor(net.forward(in, cfg.inference_norm), slice.spacing);
}

// Tiles `region`, runs every model on every tile and vote-merges.
Volume tiled_probability(const Volume& region, const Extents& patch, const std::vector<Network<float>*>& models,
                         const PipelineConfig& cfg) {
    if (models.empty()) throw std::invalid_argument("no models supplied for patch inference");
    const Extents stride{stride_for(patch.x, cfg.stride_fraction_xy), stride_for(patch.y, cfg.stride_fraction_xy),
                         stride_for(patch.z, cfg.stride_fraction_z)};
    std::vector<ProbabilityPatch> probs;
    for (const Index3& o : tile_patches(region.extents, patch, stride)) {
        const Volume tile = crop(region, o, patch);
        for (Network<float>* net : models) probs.push_back({o, predict(*net, tile, cfg)});
    }
    return vote_merge(probs, region.extents, cfg.vote_mode, cfg.threshold);
}

Extents liver_plane(const PipelineConfig& cfg, std::size_t depth) { return {cfg.liver_patch_xy, cfg.liver_patch_xy, depth}; }

}  // namespace

Volume prepare_volume(const Volume& hu, const PipelineConfig& cfg) {
    return normalize(hu_window(hu, cfg.window_lo, cfg.window_hi));
}

TrainConfig train_config(const PipelineConfig& cfg) {
    TrainConfig t;
    t.epochs = cfg.epochs;
    t.steps_per_epoch = cfg.steps_per_epoch;
    t.adam = {cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps};
    t.plateau = {cfg.plateau_patience, cfg.lr_factor};
    t.seed = cfg.seed;
    t.eval_norm = cfg.inference_norm;
    return t;
}

std::vector<Sample> localization_samples(const Volume& prepared, const Mask& liver, const PipelineConfig& cfg,
                                         std::uint64_t seed) {
    PatchSet set = slice_sampler_2d(prepared, liver, cfg.loc_slice_size, seed, cfg.nonliver_fraction);
    std::vector<Sample> out;
    for (Patch& p : set.patches) out.push_back(to_sample(std::move(p)));
    return out;
}

Box liver_stage_box(const Box& box, const PipelineConfig& cfg, const Extents& volume) {
    const Extents have = box.extents();
    return expand_to(box, {have.x, have.y, cfg.liver_patch_z}, volume);
}

std::vector<Sample> liver_samples(const Volume& prepared, const Mask& liver, const PipelineConfig& cfg,
                                  std::uint64_t seed) {
    require_same_extents(prepared.extents, liver.extents, "liver_samples");
    const Box box = liver_stage_box(bounding_box(liver, cfg.margin), cfg, prepared.extents);
    const Extents be = box.extents();
    const Extents target = liver_plane(cfg, be.z);
    const Volume img = resample(crop(prepared, box.min, be), target);
    const Mask lab = resample(crop(liver, box.min, be), target);
    PatchSet set = liver_patch_sampler(img, lab, cfg.liver_patch_z, cfg.liver_patches_per_volume, seed);
    std::vector<Sample> out;
    for (Patch& p : set.patches) out.push_back(to_sample(std::move(p)));
    return out;
}

std::vector<Sample> tumor_samples(const Volume& prepared, const Mask& liver, const Mask& tumor,
                                  const PipelineConfig& cfg, std::uint64_t seed) {
    const Extents patch{cfg.tumor_patch_xy, cfg.tumor_patch_xy, cfg.tumor_patch_z};
    PatchSet set = tumor_patch_sampler(prepared, liver, tumor, patch, cfg.tumor_patches_per_volume, seed,
                                       cfg.tumor_fraction);
    std::vector<Sample> out;
    for (Patch& p : set.patches) out.push_back(to_sample(std::move(p)));
    return out;
}

Mask localize(const Volume& prepared, Network<float>& net, const PipelineConfig& cfg) {
    const Extents& e = prepared.extents;
    const Extents plane{e.x, e.y, 1};
    const Extents small{cfg.loc_slice_size, cfg.loc_slice_size, 1};
    Mask out(e, 0, prepared.spacing);
    for (std::size_t z = 0; z < e.z; ++z) {
        const Volume slice = resample(crop(prepared, {0, 0, z}, plane), small);
        const Mask m = binarize(resample(predict_slice(net, slice, cfg), plane), cfg.threshold);
        std::copy(m.values.begin(), m.values.end(), out.values.begin() + static_cast<std::ptrdiff_t>(z * e.x * e.y));
    }
    return out;
}

Volume liver_probability(const Volume& prepared, const Box& box, const std::vector<Network<float>*>& models,
                         const PipelineConfig& cfg) {
    const Extents be = box.extents();
    const Extents target = liver_plane(cfg, be.z);
    const Volume region = resample(crop(prepared, box.min, be), target);
    const Volume prob = tiled_probability(region, {cfg.liver_patch_xy, cfg.liver_patch_xy, cfg.liver_patch_z}, models, cfg);
    return resample(prob, be);
}

Mask segment_liver(const Volume& prepared, const Box& box, const std::vector<Network<float>*>& models,
                   const PipelineConfig& cfg) {
    const Mask local = binarize(liver_probability(prepared, box, models, cfg), cfg.threshold);
    Mask full = paste(local, prepared.extents, box.min);
    full.spacing = prepared.spacing;
    if (count_nonzero(full) == 0) throw DataError("liver stage produced an empty mask");
    Mask largest = largest_component(connected_components(full, cfg.connectivity));
    largest.spacing = prepared.spacing;
    return largest;
}

Mask segment_tumor(const Volume& prepared, const Mask& liver, const std::vector<Network<float>*>& models,
                   const PipelineConfig& cfg) {
    require_same_extents(prepared.extents, liver.extents, "segment_tumor");
    const Extents patch{cfg.tumor_patch_xy, cfg.tumor_patch_xy, cfg.tumor_patch_z};
    const Box box = expand_to(bounding_box(liver, cfg.margin), patch, prepared.extents);
    const Volume region = crop(prepared, box.min, box.extents());
    const Mask local = binarize(tiled_probability(region, patch, models, cfg), cfg.threshold);
    Mask full = paste(local, prepared.extents, box.min);
    full.spacing = prepared.spacing;
    return mask_within(full, liver);
}

CascadeResult run_cascade(const Volume& hu, CascadeModels& models, const PipelineConfig& cfg) {
    validate(cfg);
    if (models.localization == nullptr) throw std::invalid_argument("run_cascade: missing localization model");
    const Volume prepared = prepare_volume(hu, cfg);
    CascadeResult r;
    const Mask coarse = localize(prepared, *models.localization, cfg);
    if (count_nonzero(coarse) == 0)
        throw DataError("cascade: localization found no liver component in " + extents_str(hu.extents) +
                        " volume; check the checkpoint and HU window");
    r.coarse = largest_component(connected_components(coarse, cfg.connectivity));
    r.coarse.spacing = hu.spacing;
    r.box = bounding_box(r.coarse, cfg.margin);
    r.liver = segment_liver(prepared, liver_stage_box(r.box, cfg, hu.extents), models.liver, cfg);
    r.tumor = models.tumor.empty() ? Mask(hu.extents, 0, hu.spacing) : segment_tumor(prepared, r.liver, models.tumor, cfg);
    return r;
}

}  // namespace raunet
