#include "raunet/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace raunet {
namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

// Shortest text that parses back to the same value.
template <typename T>
std::string fmt_float(T v) {
    char buf[40];
    const auto r = std::to_chars(buf, buf + sizeof(buf), v);
    return {buf, r.ptr};
}

template <typename T>
T parse_number(const std::string& s) {
    T out{};
    const char* end = s.data() + s.size();
    const auto [ptr, ec] = std::from_chars(s.data(), end, out);
    if (ec != std::errc() || ptr != end) throw std::invalid_argument("not a number: '" + s + "'");
    return out;
}

const char* vote_name(VoteMode m) { return m == VoteMode::Mean ? "mean" : "majority"; }

const char* norm_name(NormMode m) {
    switch (m) {
        case NormMode::Train: return "train";
        case NormMode::Eval: return "eval";
        case NormMode::BatchStats: return "batch";
    }
    return "?";
}

struct Binding {
    bool published;
    const char* note;
    std::function<std::string(const PipelineConfig&)> get;
    std::function<void(PipelineConfig&, const std::string&)> set;
};

template <typename T>
Binding number(T PipelineConfig::*field, bool published, const char* note) {
    return {published, note,
            [field](const PipelineConfig& c) {
                if constexpr (std::is_floating_point_v<T>)
                    return fmt_float(c.*field);
                else
                    return std::to_string(c.*field);
            },
            [field](PipelineConfig& c, const std::string& v) { c.*field = parse_number<T>(v); }};
}

// Ordered as written by format_config.
const std::vector<std::pair<std::string, Binding>>& bindings() {
    static const std::vector<std::pair<std::string, Binding>> table = {
        {"window_lo", number(&PipelineConfig::window_lo, true, "HU window lower bound")},
        {"window_hi", number(&PipelineConfig::window_hi, true, "HU window upper bound")},
        {"loc_slice_size", number(&PipelineConfig::loc_slice_size, true, "2D localization input size")},
        {"liver_patch_xy", number(&PipelineConfig::liver_patch_xy, true, "liver patch in-plane size")},
        {"liver_patch_z", number(&PipelineConfig::liver_patch_z, true, "liver patch depth")},
        {"tumor_patch_xy", number(&PipelineConfig::tumor_patch_xy, true, "tumor patch in-plane size")},
        {"tumor_patch_z", number(&PipelineConfig::tumor_patch_z, true, "tumor patch depth")},
        {"brain_patch", number(&PipelineConfig::brain_patch, true, "brain patch edge")},
        {"stride_fraction_xy", number(&PipelineConfig::stride_fraction_xy, false, "overlap not quantified in source")},
        {"stride_fraction_z", number(&PipelineConfig::stride_fraction_z, false, "overlap not quantified in source")},
        {"margin", number(&PipelineConfig::margin, true, "bounding box margin in voxels")},
        {"threshold", number(&PipelineConfig::threshold, false, "probability cut-off")},
        {"connectivity", number(&PipelineConfig::connectivity, false, "CCL neighbourhood not stated in source")},
        {"folds", number(&PipelineConfig::folds, true, "cross-validation folds")},
        {"lr", number(&PipelineConfig::lr, true, "initial Adam learning rate")},
        {"beta1", number(&PipelineConfig::beta1, true, "Adam first moment decay")},
        {"beta2", number(&PipelineConfig::beta2, true, "Adam second moment decay")},
        {"adam_eps", number(&PipelineConfig::adam_eps, false, "Adam denominator epsilon")},
        {"plateau_patience", number(&PipelineConfig::plateau_patience, true, "epochs without improvement")},
        {"lr_factor", number(&PipelineConfig::lr_factor, true, "plateau reduction factor")},
        {"epochs", number(&PipelineConfig::epochs, true, "training epochs")},
        {"steps_per_epoch", number(&PipelineConfig::steps_per_epoch, false, "0 means one pass")},
        {"seed", number(&PipelineConfig::seed, false, "master seed")},
        {"width_divisor", number(&PipelineConfig::width_divisor, false, "channel reduction for desk-scale runs")},
        {"liver_patches_per_volume", number(&PipelineConfig::liver_patches_per_volume, false, "count not stated in source")},
        {"tumor_patches_per_volume", number(&PipelineConfig::tumor_patches_per_volume, true, "tumor patches per liver volume")},
        {"tumor_fraction", number(&PipelineConfig::tumor_fraction, false, "tumor-centred share of tumor patches")},
        {"nonliver_fraction", number(&PipelineConfig::nonliver_fraction, true, "share of non-liver slices kept")},
        {"vote_mode",
         {false, "mean or majority",
          [](const PipelineConfig& c) { return std::string(vote_name(c.vote_mode)); },
          [](PipelineConfig& c, const std::string& v) {
              if (v == "mean")
                  c.vote_mode = VoteMode::Mean;
              else if (v == "majority")
                  c.vote_mode = VoteMode::Majority;
              else
                  throw std::invalid_argument("expected mean or majority, got '" + v + "'");
          }}},
        {"inference_norm",
         {false, "batch norm statistics at inference: batch, eval or train",
          [](const PipelineConfig& c) { return std::string(norm_name(c.inference_norm)); },
          [](PipelineConfig& c, const std::string& v) {
              if (v == "batch")
                  c.inference_norm = NormMode::BatchStats;
              else if (v == "eval")
                  c.inference_norm = NormMode::Eval;
              else if (v == "train")
                  c.inference_norm = NormMode::Train;
              else
                  throw std::invalid_argument("expected batch, eval or train, got '" + v + "'");
          }}},
    };
    return table;
}

void require(bool ok, const std::string& field, const std::string& what) {
    if (!ok) throw std::invalid_argument("config field " + field + ": " + what);
}

}  // namespace

std::size_t stride_for(std::size_t patch, double fraction) {
    const auto s = static_cast<std::size_t>(std::floor(static_cast<double>(patch) * fraction));
    return s == 0 ? 1 : s;
}

void validate(const PipelineConfig& c) {
    require(c.window_lo < c.window_hi, "window_lo", "must be below window_hi");
    for (auto [name, v] : {std::pair{"loc_slice_size", c.loc_slice_size}, {"liver_patch_xy", c.liver_patch_xy},
                           {"liver_patch_z", c.liver_patch_z}, {"tumor_patch_xy", c.tumor_patch_xy},
                           {"tumor_patch_z", c.tumor_patch_z}, {"brain_patch", c.brain_patch}})
        require(v >= 32 && v % 32 == 0, name, "must be a positive multiple of 32 (five 2x poolings)");
    require(c.stride_fraction_xy > 0 && c.stride_fraction_xy <= 1, "stride_fraction_xy", "must lie in (0, 1]");
    require(c.stride_fraction_z > 0 && c.stride_fraction_z <= 1, "stride_fraction_z", "must lie in (0, 1]");
    require(c.threshold > 0 && c.threshold < 1, "threshold", "must lie in (0, 1)");
    require(c.connectivity == 6 || c.connectivity == 18 || c.connectivity == 26, "connectivity", "must be 6, 18 or 26");
    require(c.folds >= 2, "folds", "must be at least 2");
    require(c.lr > 0 && std::isfinite(c.lr), "lr", "must be positive");
    require(c.beta1 >= 0 && c.beta1 < 1, "beta1", "must lie in [0, 1)");
    require(c.beta2 >= 0 && c.beta2 < 1, "beta2", "must lie in [0, 1)");
    require(c.adam_eps > 0, "adam_eps", "must be positive");
    require(c.plateau_patience >= 1, "plateau_patience", "must be at least 1");
    require(c.lr_factor > 0 && c.lr_factor < 1, "lr_factor", "must lie in (0, 1)");
    require(c.width_divisor >= 1, "width_divisor", "must be at least 1");
    require(c.liver_patches_per_volume >= 1, "liver_patches_per_volume", "must be at least 1");
    require(c.tumor_patches_per_volume >= 1, "tumor_patches_per_volume", "must be at least 1");
    require(c.tumor_fraction >= 0 && c.tumor_fraction <= 1, "tumor_fraction", "must lie in [0, 1]");
    require(c.nonliver_fraction >= 0 && c.nonliver_fraction <= 1, "nonliver_fraction", "must lie in [0, 1]");
}

PipelineConfig parse_config(const std::string& text) {
    PipelineConfig cfg;
    std::map<std::string, const Binding*> lookup;
    for (const auto& [k, b] : bindings()) lookup[k] = &b;
    std::set<std::string> seen;
    std::istringstream in(text);
    std::string line;
    for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        const std::string where = "config line " + std::to_string(lineno) + ": ";
        if (eq == std::string::npos) throw DataError(where + "expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const auto it = lookup.find(key);
        if (it == lookup.end()) throw DataError(where + "unknown key '" + key + "'");
        if (!seen.insert(key).second) throw DataError(where + "duplicate key '" + key + "'");
        try {
            it->second->set(cfg, value);
        } catch (const std::invalid_argument& e) {
            throw DataError(where + key + ": " + e.what());
        }
    }
    try {
        validate(cfg);
    } catch (const std::invalid_argument& e) {
        throw DataError(e.what());
    }
    return cfg;
}

PipelineConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::vector<ConfigField> config_fields(const PipelineConfig& cfg) {
    std::vector<ConfigField> out;
    for (const auto& [k, b] : bindings()) out.push_back({k, b.get(cfg), b.published, b.note});
    return out;
}

std::string format_config(const PipelineConfig& cfg) {
    std::string out;
    for (const auto& f : config_fields(cfg)) out += f.key + " = " + f.value + "\n";
    return out;
}

std::string provenance_report(const PipelineConfig& cfg) {
    std::string out;
    char buf[256];
    for (const auto& f : config_fields(cfg)) {
        std::snprintf(buf, sizeof(buf), "%-26s %-22s %-9s %s\n", f.key.c_str(), f.value.c_str(),
                      f.published ? "published" : "artifact", f.note.c_str());
        out += buf;
    }
    return out;
}

}  // namespace raunet
