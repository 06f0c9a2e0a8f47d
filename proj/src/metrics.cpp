#include "raunet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

namespace raunet {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
const double kNaN = std::numeric_limits<double>::quiet_NaN();

// Lower envelope of parabolas w2 * (p - q)^2 + f[q] over finite f.
void distance_1d(const double* f, std::size_t n, std::size_t stride, double w2, double* out,
                 std::vector<std::size_t>& v, std::vector<double>& z, std::vector<double>& line) {
    line.resize(n);
    for (std::size_t i = 0; i < n; ++i) line[i] = f[i * stride];
    v.resize(n);
    z.resize(n + 1);
    std::ptrdiff_t k = -1;
    for (std::size_t q = 0; q < n; ++q) {
        if (line[q] == kInf) continue;
        const double fq = line[q] + w2 * static_cast<double>(q) * static_cast<double>(q);
        double s = -kInf;
        while (k >= 0) {
            const std::size_t r = v[static_cast<std::size_t>(k)];
            const double fr = line[r] + w2 * static_cast<double>(r) * static_cast<double>(r);
            s = (fq - fr) / (2.0 * w2 * static_cast<double>(q - r));
            if (s > z[static_cast<std::size_t>(k)]) break;
            --k;
        }
        ++k;
        v[static_cast<std::size_t>(k)] = q;
        z[static_cast<std::size_t>(k)] = k == 0 ? -kInf : s;
        z[static_cast<std::size_t>(k) + 1] = kInf;
    }
    if (k < 0) {
        for (std::size_t i = 0; i < n; ++i) out[i * stride] = kInf;
        return;
    }
    std::size_t j = 0;
    for (std::size_t p = 0; p < n; ++p) {
        while (z[j + 1] < static_cast<double>(p)) ++j;
        const double d = static_cast<double>(p) - static_cast<double>(v[j]);
        out[p * stride] = w2 * d * d + line[v[j]];
    }
}

double ratio(std::size_t num, std::size_t den) {
    return den == 0 ? kNaN : static_cast<double>(num) / static_cast<double>(den);
}

void append_value(std::string& out, double v) {
    if (std::isnan(v)) {
        out += "nan";
        return;
    }
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    out += buf;
}

void append_row(std::string& out, const std::string& id, const OverlapMetrics& o, double assd, double msd, double hd95) {
    out += id;
    for (double v : {o.dc, o.jaccard, o.voe, o.rvd, assd, msd, hd95, o.sensitivity, o.specificity}) {
        out += ',';
        append_value(out, v);
    }
    out += '\n';
}

double finite_mean(const std::vector<double>& values) {
    double sum = 0.0;
    std::size_t n = 0;
    for (double v : values)
        if (std::isfinite(v)) {
            sum += v;
            ++n;
        }
    return n == 0 ? kNaN : sum / static_cast<double>(n);
}

}  // namespace

OverlapCounts& OverlapCounts::operator+=(const OverlapCounts& o) {
    seg += o.seg;
    gt += o.gt;
    intersection += o.intersection;
    total += o.total;
    return *this;
}

OverlapCounts overlap_counts(const Mask& seg, const Mask& gt) {
    require_same_extents(seg.extents, gt.extents, "overlap_metrics");
    OverlapCounts c;
    c.total = seg.size();
    for (std::size_t i = 0; i < seg.size(); ++i) {
        const bool s = seg.values[i] != 0;
        const bool g = gt.values[i] != 0;
        c.seg += s;
        c.gt += g;
        c.intersection += s && g;
    }
    return c;
}

OverlapMetrics overlap_metrics(const OverlapCounts& c) {
    OverlapMetrics m;
    const std::size_t uni = c.seg + c.gt - c.intersection;
    if (c.seg + c.gt == 0) {
        m.dc = 1.0;
        m.jaccard = 1.0;
    } else {
        m.dc = 2.0 * static_cast<double>(c.intersection) / static_cast<double>(c.seg + c.gt);
        m.jaccard = static_cast<double>(c.intersection) / static_cast<double>(uni);
    }
    m.voe = 1.0 - m.jaccard;
    m.rvd_defined = c.gt != 0;
    m.rvd = c.gt == 0 ? kNaN : (static_cast<double>(c.seg) - static_cast<double>(c.gt)) / static_cast<double>(c.gt);
    m.sensitivity = ratio(c.intersection, c.gt);
    const std::size_t true_neg = c.total - uni;
    m.specificity = ratio(true_neg, c.total - c.gt);
    return m;
}

OverlapMetrics overlap_metrics(const Mask& seg, const Mask& gt) { return overlap_metrics(overlap_counts(seg, gt)); }

Mask surface(const Mask& mask) {
    const Extents& e = mask.extents;
    Mask out(e, 0, mask.spacing);
    for (std::size_t z = 0; z < e.z; ++z)
        for (std::size_t y = 0; y < e.y; ++y)
            for (std::size_t x = 0; x < e.x; ++x) {
                if (mask.at(x, y, z) == 0) continue;
                const bool edge = x == 0 || y == 0 || z == 0 || x + 1 == e.x || y + 1 == e.y || z + 1 == e.z;
                const bool touches = edge || mask.at(x - 1, y, z) == 0 || mask.at(x + 1, y, z) == 0 ||
                                     mask.at(x, y - 1, z) == 0 || mask.at(x, y + 1, z) == 0 ||
                                     mask.at(x, y, z - 1) == 0 || mask.at(x, y, z + 1) == 0;
                out.at(x, y, z) = touches ? 1 : 0;
            }
    return out;
}

std::vector<double> squared_distance_transform(const Mask& sites, const Spacing& spacing) {
    const Extents& e = sites.extents;
    std::vector<double> d(e.count());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = sites.values[i] ? 0.0 : kInf;
    std::vector<double> tmp(e.count());
    std::vector<std::size_t> v;
    std::vector<double> z, line;
    const double wx = static_cast<double>(spacing.x) * spacing.x;
    const double wy = static_cast<double>(spacing.y) * spacing.y;
    const double wz = static_cast<double>(spacing.z) * spacing.z;
    for (std::size_t zz = 0; zz < e.z; ++zz)
        for (std::size_t y = 0; y < e.y; ++y) {
            const std::size_t base = (zz * e.y + y) * e.x;
            distance_1d(d.data() + base, e.x, 1, wx, tmp.data() + base, v, z, line);
        }
    for (std::size_t zz = 0; zz < e.z; ++zz)
        for (std::size_t x = 0; x < e.x; ++x) {
            const std::size_t base = zz * e.y * e.x + x;
            distance_1d(tmp.data() + base, e.y, e.x, wy, d.data() + base, v, z, line);
        }
    for (std::size_t y = 0; y < e.y; ++y)
        for (std::size_t x = 0; x < e.x; ++x) {
            const std::size_t base = y * e.x + x;
            distance_1d(d.data() + base, e.z, e.x * e.y, wz, tmp.data() + base, v, z, line);
        }
    return tmp;
}

std::vector<double> directed_surface_distances(const Mask& from, const Mask& to, const Spacing& spacing) {
    require_same_extents(from.extents, to.extents, "surface distances");
    const Mask sf = surface(from);
    const std::vector<double> dt = squared_distance_transform(surface(to), spacing);
    std::vector<double> out;
    for (std::size_t i = 0; i < sf.size(); ++i)
        if (sf.values[i]) out.push_back(std::sqrt(dt[i]));
    return out;
}

double percentile(std::vector<double> values, double q) {
    if (values.empty()) throw std::invalid_argument("percentile of an empty set");
    std::sort(values.begin(), values.end());
    const double rank = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(rank));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double t = rank - static_cast<double>(lo);
    return values[lo] + (values[hi] - values[lo]) * t;
}

SurfaceMetrics surface_metrics(const Mask& seg, const Mask& gt, const Spacing& spacing) {
    require_same_extents(seg.extents, gt.extents, "surface_metrics");
    const bool seg_empty = count_nonzero(seg) == 0;
    const bool gt_empty = count_nonzero(gt) == 0;
    if (seg_empty || gt_empty)
        throw DataError(std::string("surface_metrics: ") +
                        (seg_empty && gt_empty ? "segmentation and ground truth are" : seg_empty ? "segmentation is" : "ground truth is") +
                        " empty");
    std::vector<double> pooled = directed_surface_distances(seg, gt, spacing);
    const std::vector<double> back = directed_surface_distances(gt, seg, spacing);
    pooled.insert(pooled.end(), back.begin(), back.end());
    SurfaceMetrics m;
    double sum = 0.0;
    for (double d : pooled) {
        sum += d;
        m.msd = std::max(m.msd, d);
    }
    m.assd = sum / static_cast<double>(pooled.size());
    m.hd95 = percentile(std::move(pooled), 0.95);
    return m;
}

double dice_global(const std::vector<OverlapCounts>& cases) {
    if (cases.empty()) throw std::invalid_argument("dice_global needs at least one case");
    OverlapCounts pooled;
    for (const auto& c : cases) pooled += c;
    return overlap_metrics(pooled).dc;
}

EvalReport evaluate(const std::vector<EvalCase>& cases) {
    if (cases.empty()) throw std::invalid_argument("evaluate needs at least one case");
    EvalReport report;
    std::vector<OverlapCounts> counts;
    for (const EvalCase& c : cases) {
        CaseMetrics row;
        row.id = c.id;
        row.counts = overlap_counts(*c.seg, *c.gt);
        row.overlap = overlap_metrics(row.counts);
        row.surface_defined = row.counts.seg > 0 && row.counts.gt > 0;
        if (row.surface_defined)
            row.surface = surface_metrics(*c.seg, *c.gt, c.spacing);
        else
            row.surface = {kNaN, kNaN, kNaN};
        counts.push_back(row.counts);
        report.cases.push_back(std::move(row));
    }
    std::stable_sort(report.cases.begin(), report.cases.end(),
                     [](const CaseMetrics& a, const CaseMetrics& b) { return a.id < b.id; });
    double sum = 0.0;
    for (const auto& r : report.cases) sum += r.overlap.dc;
    report.mean_dc = sum / static_cast<double>(report.cases.size());
    report.dice_global = dice_global(counts);
    return report;
}

std::string EvalReport::to_csv() const {
    std::string out = "case,DC,Jaccard,VOE,RVD,ASSD,MSD,HD95,sensitivity,specificity\n";
    OverlapCounts pooled;
    std::vector<std::vector<double>> cols(9);
    for (const CaseMetrics& r : cases) {
        append_row(out, r.id, r.overlap, r.surface.assd, r.surface.msd, r.surface.hd95);
        pooled += r.counts;
        const double vals[9] = {r.overlap.dc,   r.overlap.jaccard, r.overlap.voe,          r.overlap.rvd,         r.surface.assd,
                                r.surface.msd, r.surface.hd95,    r.overlap.sensitivity, r.overlap.specificity};
        for (int i = 0; i < 9; ++i) cols[i].push_back(vals[i]);
    }
    OverlapMetrics mean;
    mean.dc = finite_mean(cols[0]);
    mean.jaccard = finite_mean(cols[1]);
    mean.voe = finite_mean(cols[2]);
    mean.rvd = finite_mean(cols[3]);
    mean.sensitivity = finite_mean(cols[7]);
    mean.specificity = finite_mean(cols[8]);
    append_row(out, "MEAN", mean, finite_mean(cols[4]), finite_mean(cols[5]), finite_mean(cols[6]));
    append_row(out, "GLOBAL", overlap_metrics(pooled), kNaN, kNaN, kNaN);
    return out;
}

void EvalReport::write_csv(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write report: " + path);
    out << to_csv();
}

}  // namespace raunet
