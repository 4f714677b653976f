#include "floodcpf/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace floodcpf {

std::array<CoverClass, 4> default_cover_classes() {
    return {{{"open_water", 0.010, 0.002, true},
             {"dry_land", 0.060, 0.015, false},
             {"flooded_vegetation", 0.065, 0.045, true},
             {"dry_forest", 0.055, 0.040, false}}};
}

void validate_classes(const std::array<CoverClass, 4>& classes) {
    static const char* const kNames[4] = {"open_water", "dry_land", "flooded_vegetation",
                                          "dry_forest"};
    for (i64 i = 0; i < kCoverClassCount; ++i) {
        const CoverClass& c = classes[i];
        check(c.name == kNames[i], "cover classes: slot " + std::to_string(i) + " must be " +
                                       kNames[i] + ", got " + c.name);
        check(std::isfinite(c.mean_vv) && c.mean_vv > 0.0, "cover class " + c.name +
                                                               ": mean_vv must be positive");
        check(std::isfinite(c.mean_vh) && c.mean_vh > 0.0, "cover class " + c.name +
                                                               ": mean_vh must be positive");
        const bool wet = i == kOpenWater || i == kFloodedVegetation;
        check(c.flooded == wet, "cover class " + c.name + ": flooded flag is fixed by the class");
    }
}

void validate_synth_config(const SynthConfig& cfg) {
    // Multiples of 8 keep scenes usable by the stock backbones (up to three
    // poolings); deeper nets re-check divisibility at forward time.
    check(cfg.height >= 8 && cfg.width >= 8, "synth: extents too small");
    check(cfg.height % 8 == 0 && cfg.width % 8 == 0, "synth: extents must be multiples of 8");
    check(cfg.region_scale >= 1, "synth: region_scale must be >= 1");
    check(2 * cfg.region_scale + 1 <= std::min(cfg.height, cfg.width),
          "synth: blur window exceeds scene extents");
    check(cfg.wet_fraction > 0.0 && cfg.wet_fraction < 1.0, "synth: wet_fraction must be in (0,1)");
    check(cfg.veg_fraction > 0.0 && cfg.veg_fraction < 1.0, "synth: veg_fraction must be in (0,1)");
    check(cfg.looks >= 1, "synth: looks must be >= 1");
    validate_classes(cfg.classes);
}

namespace {

// One periodic box-blur pass along rows; window is [x-r, x+r] with wrap.
void blur_rows(std::vector<double>& field, i64 h, i64 w, i64 r) {
    const double inv = 1.0 / static_cast<double>(2 * r + 1);
    std::vector<double> out(static_cast<size_t>(w));
    for (i64 y = 0; y < h; ++y) {
        double* f = field.data() + y * w;
        double sum = 0.0;
        for (i64 k = -r; k <= r; ++k) sum += f[(k + w) % w];
        for (i64 x = 0; x < w; ++x) {
            out[static_cast<size_t>(x)] = sum * inv;
            sum += f[(x + r + 1) % w] - f[(x - r + w) % w];
        }
        std::copy(out.begin(), out.end(), f);
    }
}

void blur_cols(std::vector<double>& field, i64 h, i64 w, i64 r) {
    const double inv = 1.0 / static_cast<double>(2 * r + 1);
    std::vector<double> out(static_cast<size_t>(h));
    for (i64 x = 0; x < w; ++x) {
        double sum = 0.0;
        for (i64 k = -r; k <= r; ++k) sum += field[((k + h) % h) * w + x];
        for (i64 y = 0; y < h; ++y) {
            out[static_cast<size_t>(y)] = sum * inv;
            sum += field[((y + r + 1) % h) * w + x] - field[((y - r + h) % h) * w + x];
        }
        for (i64 y = 0; y < h; ++y) field[y * w + x] = out[static_cast<size_t>(y)];
    }
}

// Marks the k lowest field values where k = round(frac * n); ties at the cut
// can only enlarge the set.
std::vector<unsigned char> threshold_lowest(const std::vector<double>& field, double frac) {
    const i64 n = static_cast<i64>(field.size());
    std::vector<unsigned char> in_set(field.size(), 0);
    const i64 k = std::llround(frac * static_cast<double>(n));
    if (k <= 0) return in_set;
    if (k >= n) {
        std::fill(in_set.begin(), in_set.end(), static_cast<unsigned char>(1));
        return in_set;
    }
    std::vector<double> order = field;
    std::nth_element(order.begin(), order.begin() + (k - 1), order.end());
    const double cut = order[static_cast<size_t>(k - 1)];
    for (i64 i = 0; i < n; ++i) in_set[static_cast<size_t>(i)] = field[static_cast<size_t>(i)] <= cut ? 1 : 0;
    return in_set;
}

}  // namespace

std::vector<double> smooth_field(i64 height, i64 width, i64 radius, Rng& rng) {
    check(height >= 1 && width >= 1 && radius >= 1, "smooth_field: bad extents");
    check(2 * radius + 1 <= std::min(height, width), "smooth_field: blur window exceeds extents");
    std::vector<double> field(static_cast<size_t>(height * width));
    for (double& v : field) v = rng.uniform();
    for (int pass = 0; pass < 3; ++pass) {
        blur_rows(field, height, width, radius);
        blur_cols(field, height, width, radius);
    }
    return field;
}

std::vector<unsigned char> class_map(const SynthConfig& cfg) {
    validate_synth_config(cfg);
    Rng wet_rng = Rng(cfg.seed).split(1);
    Rng veg_rng = Rng(cfg.seed).split(2);
    const std::vector<double> wet_field =
        smooth_field(cfg.height, cfg.width, cfg.region_scale, wet_rng);
    const std::vector<double> veg_field =
        smooth_field(cfg.height, cfg.width, cfg.region_scale, veg_rng);
    const std::vector<unsigned char> wet = threshold_lowest(wet_field, cfg.wet_fraction);
    const std::vector<unsigned char> veg = threshold_lowest(veg_field, cfg.veg_fraction);
    std::vector<unsigned char> labels(wet.size());
    for (size_t i = 0; i < labels.size(); ++i) {
        const i64 cls = wet[i] ? (veg[i] ? kFloodedVegetation : kOpenWater)
                               : (veg[i] ? kDryForest : kDryLand);
        labels[i] = static_cast<unsigned char>(cls);
    }
    return labels;
}

DualPolScene generate_scene(const SynthConfig& cfg, const std::string& id) {
    const std::vector<unsigned char> labels = class_map(cfg);
    Rng noise = Rng(cfg.seed).split(3);
    DualPolScene s;
    s.id = id;
    s.height = cfg.height;
    s.width = cfg.width;
    s.vv.resize(labels.size());
    s.vh.resize(labels.size());
    s.mask.resize(labels.size());
    const int looks = static_cast<int>(cfg.looks);
    for (size_t i = 0; i < labels.size(); ++i) {
        const CoverClass& c = cfg.classes[labels[i]];
        s.vv[i] = static_cast<float>(c.mean_vv * noise.speckle(looks));
        s.vh[i] = static_cast<float>(c.mean_vh * noise.speckle(looks));
        s.mask[i] = c.flooded ? 1 : 0;
    }
    validate_scene(s);
    return s;
}

std::vector<ManifestEntry> generate_benchmark(const SynthConfig& cfg, i64 n_scenes,
                                              const std::string& out_root) {
    check(n_scenes >= 2, "generate_benchmark: need at least 2 scenes");
    validate_synth_config(cfg);
    const Rng seeder(cfg.seed);
    std::vector<ManifestEntry> entries;
    entries.reserve(static_cast<size_t>(n_scenes));
    for (i64 i = 0; i < n_scenes; ++i) {
        SynthConfig scene_cfg = cfg;
        scene_cfg.seed = seeder.split(static_cast<u64>(i)).next_u64();
        char id[32];
        std::snprintf(id, sizeof id, "synth_%04d", static_cast<int>(i));
        const DualPolScene scene = generate_scene(scene_cfg, id);
        save_scene(scene, out_root + "/scenes");
        entries.push_back({scene.id, scene.height, scene.width, "scenes"});
    }
    write_manifest(entries, out_root + "/manifest.csv");
    return entries;
}

}  // namespace floodcpf
