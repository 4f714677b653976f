#pragma once

#include <array>
#include <string>
#include <vector>

#include "floodcpf/common.hpp"
#include "floodcpf/data.hpp"
#include "floodcpf/rng.hpp"

namespace floodcpf {

// Land-cover scattering regime. The default means are tuned constants:
// open_water vs dry_land splits cleanly in VV, flooded_vegetation vs
// dry_land only in VH, and flooded_vegetation vs dry_forest only when both
// channels are used, so every single-channel input has a class it cannot
// solve alone.
struct CoverClass {
    std::string name;
    double mean_vv = 0.0;  // linear power
    double mean_vh = 0.0;  // linear power
    bool flooded = false;
};

inline constexpr i64 kCoverClassCount = 4;
inline constexpr i64 kOpenWater = 0;
inline constexpr i64 kDryLand = 1;
inline constexpr i64 kFloodedVegetation = 2;
inline constexpr i64 kDryForest = 3;

std::array<CoverClass, 4> default_cover_classes();
void validate_classes(const std::array<CoverClass, 4>& classes);

struct SynthConfig {
    i64 height = 256;
    i64 width = 256;
    i64 region_scale = 16;       // box-blur radius of the region fields
    double wet_fraction = 0.35;  // area share of the flooded classes
    double veg_fraction = 0.45;  // area share of the vegetated classes
    std::array<CoverClass, 4> classes = default_cover_classes();
    i64 looks = 4;  // speckle averaging factor L
    u64 seed = 42;
};

void validate_synth_config(const SynthConfig& cfg);

// White noise box-blurred three times (separable, periodic wrap), a cheap
// stand-in for a Gaussian random field. Values stay inside [0,1]. Consumes
// exactly height*width uniforms from rng.
std::vector<double> smooth_field(i64 height, i64 width, i64 radius, Rng& rng);

// Noiseless ground truth: per-pixel CoverClass index (kOpenWater..).
// Wetness and vegetation are two independent smooth fields thresholded at
// their wet_fraction / veg_fraction quantiles, so the class area shares are
// exact up to ties in the fields.
std::vector<unsigned char> class_map(const SynthConfig& cfg);

// Class means modulated by multiplicative unit-mean gamma speckle; the mask
// is the union of the flooded classes, untouched by noise. Deterministic in
// cfg.seed: region streams are seed splits 1 and 2, speckle is split 3.
DualPolScene generate_scene(const SynthConfig& cfg, const std::string& id);

// Writes n_scenes scenes under out_root/scenes plus out_root/manifest.csv,
// each scene seeded from its own derived stream. Returns the manifest rows.
std::vector<ManifestEntry> generate_benchmark(const SynthConfig& cfg, i64 n_scenes,
                                              const std::string& out_root);

}  // namespace floodcpf
