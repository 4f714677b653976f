#pragma once

#include <array>
#include <string>
#include <vector>

#include "floodcpf/common.hpp"
#include "floodcpf/rng.hpp"

namespace floodcpf {

// One co-registered dual-polarization acquisition in linear power units.
struct DualPolScene {
  std::string id;
  i64 height = 0;
  i64 width = 0;
  double pixel_size = 10.0;  // meters, metadata only
  std::vector<float> vv;
  std::vector<float> vh;
  std::vector<unsigned char> mask;  // 1 = flooded
};

// Throws unless extents, finiteness, nonnegativity, and mask domain hold.
void validate_scene(const DualPolScene& scene);

// Raster files <id>.{vv,vh}.f32r / <id>.mask.u8r plus sidecar <id>.json.
void save_scene(const DualPolScene& scene, const std::string& dir);
DualPolScene load_scene(const std::string& dir, const std::string& id);

// Full-scene feature channels [VV, VH, VV/VH, log(VV/VH)], epsilon-guarded.
struct SceneFeatures {
  std::string id;
  i64 height = 0;
  i64 width = 0;
  std::vector<float> channels;      // 4 * height * width, channel-major
  std::vector<unsigned char> mask;  // height * width
};

SceneFeatures make_features(const DualPolScene& scene, double eps);

struct PatchRef {
  std::string scene_id;
  i64 row = 0;
  i64 col = 0;
};

struct Patch {
  PatchRef ref;
  i64 size = 0;
  std::vector<float> stack;         // 4 * size * size
  std::vector<unsigned char> mask;  // size * size
};

// Top-left corners of every size x size window on the stride grid.
std::vector<PatchRef> patch_grid(const SceneFeatures& f, i64 size, i64 stride);
Patch read_patch(const SceneFeatures& f, const PatchRef& ref, i64 size);
std::vector<Patch> extract_patches(const SceneFeatures& f, i64 size,
                                   i64 stride);

struct SplitManifest {
  std::vector<std::string> names;
  std::vector<std::vector<PatchRef>> members;  // parallel to names
  i64 patch_size = 0;
  u64 seed = 0;
};

// Deterministic shuffle, then partition at cumulative rounding boundaries.
// Inputs must be pairwise non-overlapping per scene.
SplitManifest split_patches(const std::vector<PatchRef>& patches,
                            i64 patch_size,
                            const std::vector<std::pair<std::string, double>>&
                                fractions,
                            u64 seed);

void write_splits(const SplitManifest& m, const std::string& path);
SplitManifest read_splits(const std::string& path, i64 patch_size);

enum class AugmentOp { identity, hflip, vflip, rot90, rot180, rot270 };
inline constexpr i64 kAugmentOpCount = 6;

AugmentOp parse_augment_op(const std::string& s);
std::string augment_op_name(AugmentOp op);
AugmentOp draw_augment(Rng& rng);  // uniform over all six ops

// Applies the transform plane by plane; rotations require h == w.
void apply_augment(const float* src, float* dst, i64 planes, i64 h, i64 w,
                   AugmentOp op);
void apply_augment(const unsigned char* src, unsigned char* dst, i64 planes,
                   i64 h, i64 w, AugmentOp op);
Patch augment(const Patch& p, AugmentOp op);

// Per-channel standardization statistics, training split only.
struct FeatureStats {
  std::array<double, 4> mean{};
  std::array<double, 4> stddev{};
};

FeatureStats compute_feature_stats(const std::vector<Patch>& patches);
void standardize(Patch& p, const FeatureStats& stats);

// Dataset manifest CSV: one line per scene, "id,height,width,path".
struct ManifestEntry {
  std::string id;
  i64 height = 0;
  i64 width = 0;
  std::string path;  // scene directory, possibly relative to the manifest
};

void write_manifest(const std::vector<ManifestEntry>& entries,
                    const std::string& path);
std::vector<ManifestEntry> read_manifest(const std::string& path);
std::string resolve_scene_dir(const std::string& manifest_path,
                              const ManifestEntry& entry);

// Whole-file helpers shared by scene and artifact writers: the payload lands
// in "<path>.part" first and is renamed only once fully written.
void write_file_atomic(const std::string& path, const void* data,
                       size_t nbytes);
void write_text_atomic(const std::string& path, const std::string& text);
std::vector<char> read_file(const std::string& path);

}  // namespace floodcpf
