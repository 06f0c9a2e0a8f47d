// Command-line front end. Exit codes: 0 success, 1 usage, 2 data error,
// 3 numeric failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "raunet/architectures.hpp"
#include "raunet/checkpoint.hpp"
#include "raunet/config.hpp"
#include "raunet/metrics.hpp"
#include "raunet/phantom.hpp"
#include "raunet/pipeline.hpp"
#include "raunet/simd/kernels.hpp"

namespace fs = std::filesystem;
using namespace raunet;

namespace {

constexpr int kUsage = 1;

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

PipelineConfig config_from(const std::string& path) { return path.empty() ? PipelineConfig{} : load_config(path); }

// [C, D, H, W] prints as HxWxDxC, [C, H, W] as HxWxC.
std::string shape_row(const Shape& s) {
    std::string out;
    for (std::size_t i = s.size() - 2; i < s.size(); ++i) out += std::to_string(s[i]) + "x";
    if (s.size() == 4) out += std::to_string(s[1]) + "x";
    return out + std::to_string(s[0]);
}

void print_trace(const std::string& name, std::size_t divisor) {
    const NetworkSpec spec = network_spec(name, divisor);
    const auto shapes = trace_shapes(spec, spec.input_shape);
    std::printf("%s (width divisor %zu)\n", spec.name.c_str(), divisor);
    std::printf("%-6s %-12s %-16s %s\n", "Name", "Kind", "Output", "Sources");
    for (std::size_t i = 0; i < spec.entries.size(); ++i) {
        const LayerEntry& e = spec.entries[i];
        std::string src;
        for (std::size_t s : e.sources) src += (src.empty() ? "" : ",") + spec.entries[s].name;
        std::printf("%-6s %-12s %-16s %s\n", e.name.c_str(), layer_kind_name(e.kind), shape_row(shapes[i]).c_str(), src.c_str());
    }
    std::printf("parameters: %zu\nconv layers: %zu\n", count_parameters(spec), count_conv_layers(spec));
}

const char* dtype_name(VoxelType t) { return t == VoxelType::U8 ? "u8" : "f32"; }

std::vector<std::unique_ptr<Network<float>>> load_all(const std::vector<std::string>& paths) {
    std::vector<std::unique_ptr<Network<float>>> out;
    for (const auto& p : paths) out.push_back(std::make_unique<Network<float>>(load_network(p)));
    return out;
}

std::vector<Network<float>*> raw(const std::vector<std::unique_ptr<Network<float>>>& nets) {
    std::vector<Network<float>*> out;
    for (const auto& n : nets) out.push_back(n.get());
    return out;
}

const char* network_for(const std::string& stage) {
    if (stage == "loc") return "raunet1";
    if (stage == "brain") return "raunet_brain";
    return "raunet2";
}

void write_report(const std::string& path, const std::vector<EvalCase>& cases) {
    const EvalReport r = evaluate(cases);
    if (path.empty())
        std::cout << r.to_csv();
    else
        r.write_csv(path);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Residual attention U-Net segmentation toolkit"};
    app.require_subcommand(1);
    std::string backend = "auto";
    app.add_option("--backend", backend, "Kernel backend: auto, scalar or avx2")->check(CLI::IsMember({"auto", "scalar", "avx2"}));

    // phantom
    auto* ph = app.add_subcommand("phantom", "Write a synthetic CT volume with liver and tumor masks");
    std::string ph_dir, ph_spec;
    std::uint64_t ph_seed = 0;
    bool ph_seed_set = false;
    ph->add_option("--out-dir", ph_dir, "Output directory")->required();
    ph->add_option("--spec", ph_spec, "JSON sidecar to reproduce")->check(CLI::ExistingFile);
    ph->add_option("--seed", ph_seed, "Noise seed")->each([&](const std::string&) { ph_seed_set = true; });

    // preprocess
    auto* pre = app.add_subcommand("preprocess", "HU window and normalise a volume");
    std::string pre_in, pre_out, pre_cfg;
    pre->add_option("--in", pre_in)->required()->check(CLI::ExistingFile);
    pre->add_option("--out", pre_out)->required();
    pre->add_option("--config", pre_cfg)->check(CLI::ExistingFile);

    // train
    auto* tr = app.add_subcommand("train", "Train one stage network");
    std::string tr_stage, tr_cfg, tr_out, tr_csv;
    std::vector<std::string> tr_images, tr_livers, tr_tumors, tr_modalities, tr_labels;
    std::size_t tr_fold = 0;
    std::uint64_t tr_seed = 0;
    bool tr_seed_set = false;
    tr->add_option("--stage", tr_stage)->required()->check(CLI::IsMember({"loc", "liver", "tumor", "brain"}));
    tr->add_option("--config", tr_cfg)->check(CLI::ExistingFile);
    tr->add_option("--fold", tr_fold, "Validation fold index (cases >= folds)");
    tr->add_option("--seed", tr_seed)->each([&](const std::string&) { tr_seed_set = true; });
    tr->add_option("--image", tr_images, "HU volume per case")->check(CLI::ExistingFile);
    tr->add_option("--liver", tr_livers, "Liver mask per case")->check(CLI::ExistingFile);
    tr->add_option("--tumor", tr_tumors, "Tumor mask per case")->check(CLI::ExistingFile);
    tr->add_option("--modalities", tr_modalities, "Four modality volumes per brain case")->check(CLI::ExistingFile);
    tr->add_option("--labels", tr_labels, "Label volume per brain case")->check(CLI::ExistingFile);
    tr->add_option("--out", tr_out, "Checkpoint path")->required();
    tr->add_option("--loss-csv", tr_csv);

    // infer
    auto* inf = app.add_subcommand("infer", "Run a single cascade stage");
    std::string inf_stage, inf_image, inf_out, inf_cfg, inf_liver;
    std::vector<std::string> inf_ckpt;
    inf->add_option("--stage", inf_stage)->required()->check(CLI::IsMember({"loc", "liver", "tumor"}));
    inf->add_option("--checkpoint", inf_ckpt)->required()->check(CLI::ExistingFile);
    inf->add_option("--image", inf_image)->required()->check(CLI::ExistingFile);
    inf->add_option("--liver", inf_liver, "Liver (tumor stage) or coarse (liver stage) mask")->check(CLI::ExistingFile);
    inf->add_option("--out", inf_out)->required();
    inf->add_option("--config", inf_cfg)->check(CLI::ExistingFile);

    // cascade
    auto* cas = app.add_subcommand("cascade", "Run localisation, liver and tumor stages");
    std::string cas_image, cas_loc, cas_cfg, cas_out_liver, cas_out_tumor, cas_gt_liver, cas_gt_tumor, cas_report;
    std::vector<std::string> cas_liver, cas_tumor;
    cas->add_option("--image", cas_image)->required()->check(CLI::ExistingFile);
    cas->add_option("--loc", cas_loc)->required()->check(CLI::ExistingFile);
    cas->add_option("--liver", cas_liver, "Liver checkpoints (ensemble)")->required()->check(CLI::ExistingFile);
    cas->add_option("--tumor", cas_tumor, "Tumor checkpoints (ensemble)")->required()->check(CLI::ExistingFile);
    cas->add_option("--config", cas_cfg)->check(CLI::ExistingFile);
    cas->add_option("--out-liver", cas_out_liver)->required();
    cas->add_option("--out-tumor", cas_out_tumor)->required();
    cas->add_option("--gt-liver", cas_gt_liver)->check(CLI::ExistingFile);
    cas->add_option("--gt-tumor", cas_gt_tumor)->check(CLI::ExistingFile);
    cas->add_option("--report", cas_report, "Metrics CSV (needs ground truth)");

    // eval
    auto* ev = app.add_subcommand("eval", "Score segmentations against ground truth");
    std::vector<std::string> ev_seg, ev_gt, ev_ids;
    std::string ev_csv;
    ev->add_option("--seg", ev_seg)->required()->check(CLI::ExistingFile);
    ev->add_option("--gt", ev_gt)->required()->check(CLI::ExistingFile);
    ev->add_option("--id", ev_ids, "Case ids (default: segmentation file stems)");
    ev->add_option("--csv", ev_csv, "Output path (default stdout)");

    // inspect
    auto* ins = app.add_subcommand("inspect", "Print an RVOL header, a network trace or the config");
    std::string ins_rvol, ins_net, ins_ckpt, ins_cfg;
    std::size_t ins_div = 1;
    bool ins_config = false;
    ins->add_option("--rvol", ins_rvol)->check(CLI::ExistingFile);
    ins->add_option("--net", ins_net)->check(CLI::IsMember(network_names()));
    ins->add_option("--width-divisor", ins_div)->check(CLI::PositiveNumber);
    ins->add_option("--checkpoint", ins_ckpt)->check(CLI::ExistingFile);
    ins->add_flag("--config", ins_config, "Print config values with provenance");
    ins->add_option("--config-file", ins_cfg)->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }

    try {
        if (backend != "auto") simd::set_backend(backend == "avx2" ? simd::Backend::Avx2 : simd::Backend::Scalar);

        if (*ph) {
            PhantomSpec spec = ph_spec.empty() ? PhantomSpec{} : read_phantom_sidecar(ph_spec);
            if (ph_seed_set) spec.seed = ph_seed;
            const Phantom p = generate_phantom(spec);
            fs::create_directories(ph_dir);
            const fs::path d(ph_dir);
            write_rvol((d / "hu.rvol").string(), p.hu);
            write_rvol((d / "liver.rvol").string(), p.liver);
            write_rvol((d / "tumor.rvol").string(), p.tumor);
            write_phantom_sidecar((d / "phantom.json").string(), spec);
            std::printf("wrote %s (%s, liver %zu voxels, tumor %zu voxels)\n", ph_dir.c_str(),
                        extents_str(spec.extents).c_str(), count_nonzero(p.liver), count_nonzero(p.tumor));
        } else if (*pre) {
            write_rvol(pre_out, prepare_volume(read_volume(pre_in), config_from(pre_cfg)));
        } else if (*tr) {
            PipelineConfig cfg = config_from(tr_cfg);
            if (tr_seed_set) cfg.seed = tr_seed;
            const std::size_t cases = tr_stage == "brain" ? tr_labels.size() : tr_images.size();
            if (cases == 0) throw UsageError("train: no cases given");
            if (tr_stage == "brain" && tr_modalities.size() != 4 * cases)
                throw UsageError("train: --modalities needs four volumes per --labels case");
            if (tr_stage != "brain" && tr_livers.size() != cases)
                throw UsageError("train: --liver must be given once per --image");
            if (tr_stage == "tumor" && tr_tumors.size() != cases)
                throw UsageError("train: --tumor must be given once per --image");

            std::vector<std::string> ids;
            for (std::size_t i = 0; i < cases; ++i) ids.push_back(std::to_string(i));
            std::vector<std::size_t> train_idx, val_idx;
            if (cases >= cfg.folds) {
                if (tr_fold >= cfg.folds) throw UsageError("train: --fold must be below folds");
                const FoldPlan plan = kfold_split(ids, cfg.folds, cfg.seed);
                for (const auto& id : plan.folds[tr_fold].train) train_idx.push_back(std::stoul(id));
                for (const auto& id : plan.folds[tr_fold].validation) val_idx.push_back(std::stoul(id));
            } else {
                std::fprintf(stderr, "train: %zu case(s) < %zu folds, validating on the training set\n", cases, cfg.folds);
                for (std::size_t i = 0; i < cases; ++i) train_idx.push_back(i);
            }

            auto samples_for = [&](std::size_t i) {
                const std::uint64_t seed = cfg.seed + 1000003ULL * (i + 1);
                if (tr_stage == "brain") {
                    std::vector<Volume> mods;
                    for (std::size_t m = 0; m < 4; ++m) mods.push_back(read_volume(tr_modalities[4 * i + m]));
                    const Extents patch{cfg.brain_patch, cfg.brain_patch, cfg.brain_patch};
                    BratsCase bc = brats_prepare(mods, read_mask(tr_labels[i]), patch, cfg.tumor_patches_per_volume, seed,
                                                 cfg.tumor_fraction);
                    std::vector<Sample> out;
                    for (Patch& p : bc.patches.patches) out.push_back({std::move(p.image), std::move(p.target)});
                    return out;
                }
                const Volume img = prepare_volume(read_volume(tr_images[i]), cfg);
                const Mask liver = read_mask(tr_livers[i]);
                if (tr_stage == "loc") return localization_samples(img, liver, cfg, seed);
                if (tr_stage == "liver") return liver_samples(img, liver, cfg, seed);
                return tumor_samples(img, liver, read_mask(tr_tumors[i]), cfg, seed);
            };
            std::vector<Sample> train, val;
            for (std::size_t i : train_idx)
                for (Sample& s : samples_for(i)) train.push_back(std::move(s));
            for (std::size_t i : val_idx)
                for (Sample& s : samples_for(i)) val.push_back(std::move(s));

            Network<float> net = Network<float>::build(network_for(tr_stage), {cfg.width_divisor, cfg.seed});
            TrainConfig tc = train_config(cfg);
            tc.checkpoint_path = tr_out;
            tc.loss_csv_path = tr_csv;
            tc.verbose = true;
            const TrainResult r = train_network(net, train, val, tc);
            std::printf("best epoch %zu, validation loss %.6g, %zu steps\n", r.best_epoch, r.best_val_loss, r.steps);
        } else if (*inf) {
            const PipelineConfig cfg = config_from(inf_cfg);
            const Volume img = prepare_volume(read_volume(inf_image), cfg);
            auto nets = load_all(inf_ckpt);
            Mask out;
            if (inf_stage == "loc") {
                if (nets.size() != 1) throw UsageError("infer: the localisation stage takes one checkpoint");
                out = localize(img, *nets[0], cfg);
            } else {
                if (inf_liver.empty()) throw UsageError("infer: --liver is required for the liver and tumor stages");
                const Mask guide = read_mask(inf_liver);
                if (inf_stage == "liver")
                    out = segment_liver(img, liver_stage_box(bounding_box(guide, cfg.margin), cfg, img.extents), raw(nets), cfg);
                else
                    out = segment_tumor(img, guide, raw(nets), cfg);
            }
            out.spacing = img.spacing;
            write_rvol(inf_out, out);
        } else if (*cas) {
            const PipelineConfig cfg = config_from(cas_cfg);
            Network<float> loc = load_network(cas_loc);
            auto livers = load_all(cas_liver);
            auto tumors = load_all(cas_tumor);
            CascadeModels models{&loc, raw(livers), raw(tumors)};
            const CascadeResult r = run_cascade(read_volume(cas_image), models, cfg);
            write_rvol(cas_out_liver, r.liver);
            write_rvol(cas_out_tumor, r.tumor);
            if (!cas_gt_liver.empty() || !cas_gt_tumor.empty()) {
                const Mask gl = cas_gt_liver.empty() ? Mask{} : read_mask(cas_gt_liver);
                const Mask gt = cas_gt_tumor.empty() ? Mask{} : read_mask(cas_gt_tumor);
                std::vector<EvalCase> cases;
                if (!cas_gt_liver.empty()) cases.push_back({"liver", &r.liver, &gl, r.liver.spacing});
                if (!cas_gt_tumor.empty()) cases.push_back({"tumor", &r.tumor, &gt, r.tumor.spacing});
                write_report(cas_report, cases);
            }
        } else if (*ev) {
            if (ev_seg.size() != ev_gt.size()) throw UsageError("eval: --seg and --gt counts differ");
            if (!ev_ids.empty() && ev_ids.size() != ev_seg.size()) throw UsageError("eval: --id count differs from --seg");
            std::vector<Mask> segs, gts;
            for (std::size_t i = 0; i < ev_seg.size(); ++i) {
                segs.push_back(read_mask(ev_seg[i]));
                gts.push_back(read_mask(ev_gt[i]));
            }
            std::vector<EvalCase> cases;
            for (std::size_t i = 0; i < segs.size(); ++i)
                cases.push_back({ev_ids.empty() ? fs::path(ev_seg[i]).stem().string() : ev_ids[i], &segs[i], &gts[i],
                                 gts[i].spacing});
            write_report(ev_csv, cases);
        } else if (*ins) {
            bool any = false;
            if (!ins_rvol.empty()) {
                const RvolHeader h = read_rvol_header(ins_rvol);
                std::printf("extents %s\ndtype %s\nspacing %g %g %g\n", extents_str(h.extents).c_str(), dtype_name(h.dtype),
                            h.spacing.x, h.spacing.y, h.spacing.z);
                any = true;
            }
            if (!ins_net.empty()) {
                print_trace(ins_net, ins_div);
                any = true;
            }
            if (!ins_ckpt.empty()) {
                Network<float> net = load_network(ins_ckpt);
                print_trace(net.spec().name, net.spec().width_divisor);
                any = true;
            }
            if (ins_config || !ins_cfg.empty()) {
                std::cout << provenance_report(config_from(ins_cfg));
                any = true;
            }
            if (!any) throw UsageError("inspect: give --rvol, --net, --checkpoint or --config");
        }
    } catch (const UsageError& e) {
        std::cerr << e.what() << "\n\n" << app.help();
        return kUsage;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const ShapeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid argument: " << e.what() << "\n";
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
