#include "floodcpf/data.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace floodcpf {

namespace {

std::string hex64(u64 v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(v));
  return buf;
}

void check_id(const std::string& id) {
  check(!id.empty(), "scene id must be non-empty");
  for (char c : id)
    check((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
              (c >= '0' && c <= '9') || c == '_' || c == '-' || c == '.',
          "scene id has a character outside [A-Za-z0-9_.-]: " + id);
}

std::string raster_path(const std::string& dir, const std::string& id,
                        const char* suffix) {
  return (fs::path(dir) / (id + suffix)).string();
}

}  // namespace

void write_file_atomic(const std::string& path, const void* data,
                       size_t nbytes) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  const std::string part = path + ".part";
  {
    std::ofstream os(part, std::ios::binary | std::ios::trunc);
    check(os.good(), "cannot open for write: " + part);
    os.write(static_cast<const char*>(data),
             static_cast<std::streamsize>(nbytes));
    check(os.good(), "write failed: " + part);
  }
  fs::rename(part, path);
}

void write_text_atomic(const std::string& path, const std::string& text) {
  write_file_atomic(path, text.data(), text.size());
}

std::vector<char> read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary | std::ios::ate);
  check(is.good(), "cannot open: " + path);
  const std::streamsize n = is.tellg();
  is.seekg(0);
  std::vector<char> buf(static_cast<size_t>(n));
  if (n > 0) is.read(buf.data(), n);
  check(is.good(), "read failed: " + path);
  return buf;
}

void validate_scene(const DualPolScene& scene) {
  check_id(scene.id);
  check(scene.height >= 1 && scene.width >= 1,
        "scene extents must be positive: " + scene.id);
  const size_t n =
      static_cast<size_t>(scene.height) * static_cast<size_t>(scene.width);
  check(scene.vv.size() == n && scene.vh.size() == n &&
            scene.mask.size() == n,
        "scene raster extents disagree: " + scene.id);
  check(scene.pixel_size > 0, "scene pixel size must be positive");
  for (size_t i = 0; i < n; ++i) {
    check(std::isfinite(scene.vv[i]) && scene.vv[i] >= 0.0f,
          "vv raster has a non-finite or negative pixel: " + scene.id);
    check(std::isfinite(scene.vh[i]) && scene.vh[i] >= 0.0f,
          "vh raster has a non-finite or negative pixel: " + scene.id);
    check(scene.mask[i] <= 1, "mask raster has a non-binary pixel: " + scene.id);
  }
}

void save_scene(const DualPolScene& scene, const std::string& dir) {
  validate_scene(scene);
  fs::create_directories(dir);
  const size_t n =
      static_cast<size_t>(scene.height) * static_cast<size_t>(scene.width);
  write_file_atomic(raster_path(dir, scene.id, ".vv.f32r"), scene.vv.data(),
                    n * sizeof(float));
  write_file_atomic(raster_path(dir, scene.id, ".vh.f32r"), scene.vh.data(),
                    n * sizeof(float));
  write_file_atomic(raster_path(dir, scene.id, ".mask.u8r"), scene.mask.data(),
                    n);
  json side;
  side["id"] = scene.id;
  side["height"] = scene.height;
  side["width"] = scene.width;
  side["pixel_size"] = scene.pixel_size;
  side["checksums"] = {
      {"vv", hex64(fnv1a64(scene.vv.data(), n * sizeof(float)))},
      {"vh", hex64(fnv1a64(scene.vh.data(), n * sizeof(float)))},
      {"mask", hex64(fnv1a64(scene.mask.data(), n))}};
  write_text_atomic(raster_path(dir, scene.id, ".json"), side.dump(2) + "\n");
}

namespace {

std::vector<char> read_checked_raster(const std::string& path,
                                      size_t expect_bytes,
                                      const std::string& expect_sum) {
  std::vector<char> bytes = read_file(path);
  check(bytes.size() == expect_bytes,
        "raster extent mismatch against sidecar: " + path);
  check(hex64(fnv1a64(bytes.data(), bytes.size())) == expect_sum,
        "raster checksum mismatch: " + path);
  return bytes;
}

}  // namespace

DualPolScene load_scene(const std::string& dir, const std::string& id) {
  const std::string side_path = raster_path(dir, id, ".json");
  check(fs::exists(side_path), "missing scene sidecar: " + side_path);
  json side;
  try {
    side = json::parse(read_file(side_path));
  } catch (const json::exception& e) {
    fail("scene sidecar is not valid json: " + side_path + " (" + e.what() +
         ")");
  }
  DualPolScene scene;
  try {
    scene.id = side.at("id").get<std::string>();
    scene.height = side.at("height").get<i64>();
    scene.width = side.at("width").get<i64>();
    scene.pixel_size = side.at("pixel_size").get<double>();
  } catch (const json::exception& e) {
    fail("scene sidecar misses a field: " + side_path + " (" + e.what() + ")");
  }
  check(scene.id == id, "scene sidecar id disagrees with file name: " + id);
  check(scene.height >= 1 && scene.width >= 1,
        "scene sidecar extents must be positive: " + id);
  const size_t n =
      static_cast<size_t>(scene.height) * static_cast<size_t>(scene.width);
  std::string sum_vv, sum_vh, sum_mask;
  try {
    sum_vv = side.at("checksums").at("vv").get<std::string>();
    sum_vh = side.at("checksums").at("vh").get<std::string>();
    sum_mask = side.at("checksums").at("mask").get<std::string>();
  } catch (const json::exception& e) {
    fail("scene sidecar misses a checksum: " + side_path + " (" + e.what() +
         ")");
  }
  const std::vector<char> vv_bytes = read_checked_raster(
      raster_path(dir, id, ".vv.f32r"), n * sizeof(float), sum_vv);
  const std::vector<char> vh_bytes = read_checked_raster(
      raster_path(dir, id, ".vh.f32r"), n * sizeof(float), sum_vh);
  const std::vector<char> mask_bytes =
      read_checked_raster(raster_path(dir, id, ".mask.u8r"), n, sum_mask);
  scene.vv.resize(n);
  scene.vh.resize(n);
  scene.mask.resize(n);
  std::memcpy(scene.vv.data(), vv_bytes.data(), n * sizeof(float));
  std::memcpy(scene.vh.data(), vh_bytes.data(), n * sizeof(float));
  std::memcpy(scene.mask.data(), mask_bytes.data(), n);
  validate_scene(scene);
  return scene;
}

SceneFeatures make_features(const DualPolScene& scene, double eps) {
  validate_scene(scene);
  check(eps > 0, "feature eps must be positive");
  const i64 hw = scene.height * scene.width;
  SceneFeatures f;
  f.id = scene.id;
  f.height = scene.height;
  f.width = scene.width;
  f.mask = scene.mask;
  f.channels.resize(static_cast<size_t>(4 * hw));
  float* ch0 = f.channels.data();
  float* ch1 = ch0 + hw;
  float* ch2 = ch1 + hw;
  float* ch3 = ch2 + hw;
  for (i64 i = 0; i < hw; ++i) {
    const float vv = scene.vv[static_cast<size_t>(i)];
    const float vh = scene.vh[static_cast<size_t>(i)];
    ch0[i] = vv;
    ch1[i] = vh;
    const float ratio = static_cast<float>(
        static_cast<double>(vv) / std::max(static_cast<double>(vh), eps));
    ch2[i] = ratio;
    ch3[i] = static_cast<float>(
        std::log(std::max(static_cast<double>(ratio), eps)));
  }
  return f;
}

std::vector<PatchRef> patch_grid(const SceneFeatures& f, i64 size,
                                 i64 stride) {
  check(size >= 1 && stride >= 1, "patch size and stride must be positive");
  check(size <= f.height && size <= f.width,
        "patch size exceeds scene extents: " + f.id);
  std::vector<PatchRef> grid;
  for (i64 r = 0; r + size <= f.height; r += stride)
    for (i64 c = 0; c + size <= f.width; c += stride)
      grid.push_back(PatchRef{f.id, r, c});
  return grid;
}

Patch read_patch(const SceneFeatures& f, const PatchRef& ref, i64 size) {
  check(ref.scene_id == f.id, "patch scene id mismatch");
  check(ref.row >= 0 && ref.col >= 0 && ref.row + size <= f.height &&
            ref.col + size <= f.width,
        "patch window out of scene bounds: " + f.id);
  Patch p;
  p.ref = ref;
  p.size = size;
  p.stack.resize(static_cast<size_t>(4 * size * size));
  p.mask.resize(static_cast<size_t>(size * size));
  const i64 hw = f.height * f.width;
  for (i64 c = 0; c < 4; ++c)
    for (i64 y = 0; y < size; ++y) {
      const float* src =
          f.channels.data() + c * hw + (ref.row + y) * f.width + ref.col;
      float* dst = p.stack.data() + (c * size + y) * size;
      std::memcpy(dst, src, static_cast<size_t>(size) * sizeof(float));
    }
  for (i64 y = 0; y < size; ++y)
    std::memcpy(p.mask.data() + y * size,
                f.mask.data() + (ref.row + y) * f.width + ref.col,
                static_cast<size_t>(size));
  return p;
}

std::vector<Patch> extract_patches(const SceneFeatures& f, i64 size,
                                   i64 stride) {
  std::vector<Patch> out;
  for (const PatchRef& ref : patch_grid(f, size, stride))
    out.push_back(read_patch(f, ref, size));
  return out;
}

SplitManifest split_patches(
    const std::vector<PatchRef>& patches, i64 patch_size,
    const std::vector<std::pair<std::string, double>>& fractions, u64 seed) {
  check(patch_size >= 1, "split: patch size must be positive");
  check(!fractions.empty(), "split: need at least one fraction");
  double sum = 0.0;
  for (const auto& [name, frac] : fractions) {
    check(!name.empty(), "split: names must be non-empty");
    check(frac >= 0.0, "split: fractions must be nonnegative");
    sum += frac;
  }
  check(std::abs(sum - 1.0) <= 1e-9, "split: fractions must sum to 1");
  for (size_t i = 0; i < fractions.size(); ++i)
    for (size_t j = i + 1; j < fractions.size(); ++j)
      check(fractions[i].first != fractions[j].first,
            "split: duplicate split name " + fractions[i].first);

  // Any same-scene window overlap would leak pixels across splits.
  std::map<std::string, std::vector<const PatchRef*>> by_scene;
  for (const PatchRef& p : patches) by_scene[p.scene_id].push_back(&p);
  for (const auto& [scene_id, list] : by_scene)
    for (size_t i = 0; i < list.size(); ++i)
      for (size_t j = i + 1; j < list.size(); ++j) {
        const bool overlap =
            std::llabs(list[i]->row - list[j]->row) < patch_size &&
            std::llabs(list[i]->col - list[j]->col) < patch_size;
        check(!overlap, "split: overlapping patches in scene " + scene_id);
      }

  std::vector<PatchRef> shuffled = patches;
  Rng rng(seed);
  for (i64 i = static_cast<i64>(shuffled.size()) - 1; i > 0; --i) {
    const i64 j = static_cast<i64>(rng.uniform_int(static_cast<u64>(i + 1)));
    std::swap(shuffled[static_cast<size_t>(i)],
              shuffled[static_cast<size_t>(j)]);
  }

  SplitManifest m;
  m.patch_size = patch_size;
  m.seed = seed;
  const i64 n = static_cast<i64>(shuffled.size());
  double cum = 0.0;
  i64 begin = 0;
  for (size_t k = 0; k < fractions.size(); ++k) {
    cum += fractions[k].second;
    i64 end = (k + 1 == fractions.size())
                  ? n
                  : static_cast<i64>(std::llround(cum * static_cast<double>(n)));
    end = std::clamp(end, begin, n);
    m.names.push_back(fractions[k].first);
    m.members.emplace_back(shuffled.begin() + begin, shuffled.begin() + end);
    begin = end;
  }
  return m;
}

void write_splits(const SplitManifest& m, const std::string& path) {
  std::ostringstream os;
  os << "split,scene_id,row,col\n";
  for (size_t k = 0; k < m.names.size(); ++k)
    for (const PatchRef& p : m.members[k])
      os << m.names[k] << ',' << p.scene_id << ',' << p.row << ',' << p.col
         << '\n';
  write_text_atomic(path, os.str());
}

SplitManifest read_splits(const std::string& path, i64 patch_size) {
  const std::vector<char> raw = read_file(path);
  std::istringstream is(std::string(raw.begin(), raw.end()));
  std::string line;
  check(static_cast<bool>(std::getline(is, line)), "splits file is empty: " + path);
  check(line == "split,scene_id,row,col",
        "splits file has an unexpected header: " + path);
  SplitManifest m;
  m.patch_size = patch_size;
  std::map<std::string, size_t> index;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string split, scene, row_s, col_s;
    check(static_cast<bool>(std::getline(ls, split, ',')) &&
              static_cast<bool>(std::getline(ls, scene, ',')) &&
              static_cast<bool>(std::getline(ls, row_s, ',')) &&
              static_cast<bool>(std::getline(ls, col_s)),
          "splits file has a malformed line: " + line);
    auto [it, inserted] = index.try_emplace(split, m.names.size());
    if (inserted) {
      m.names.push_back(split);
      m.members.emplace_back();
    }
    m.members[it->second].push_back(
        PatchRef{scene, std::stoll(row_s), std::stoll(col_s)});
  }
  return m;
}

AugmentOp parse_augment_op(const std::string& s) {
  if (s == "identity") return AugmentOp::identity;
  if (s == "hflip") return AugmentOp::hflip;
  if (s == "vflip") return AugmentOp::vflip;
  if (s == "rot90") return AugmentOp::rot90;
  if (s == "rot180") return AugmentOp::rot180;
  if (s == "rot270") return AugmentOp::rot270;
  fail("unknown augment op '" + s + "'");
}

std::string augment_op_name(AugmentOp op) {
  switch (op) {
    case AugmentOp::identity: return "identity";
    case AugmentOp::hflip: return "hflip";
    case AugmentOp::vflip: return "vflip";
    case AugmentOp::rot90: return "rot90";
    case AugmentOp::rot180: return "rot180";
    case AugmentOp::rot270: return "rot270";
  }
  fail("unhandled augment op");
}

AugmentOp draw_augment(Rng& rng) {
  return static_cast<AugmentOp>(
      rng.uniform_int(static_cast<u64>(kAugmentOpCount)));
}

namespace {

template <typename E>
void apply_augment_impl(const E* src, E* dst, i64 planes, i64 h, i64 w,
                        AugmentOp op) {
  check(src != dst, "apply_augment: source and destination must differ");
  const bool rot = op == AugmentOp::rot90 || op == AugmentOp::rot180 ||
                   op == AugmentOp::rot270;
  if (rot) check(h == w, "apply_augment: rotations need a square patch");
  for (i64 p = 0; p < planes; ++p) {
    const E* s = src + p * h * w;
    E* d = dst + p * h * w;
    for (i64 y = 0; y < h; ++y)
      for (i64 x = 0; x < w; ++x) {
        i64 sy = y, sx = x;
        switch (op) {
          case AugmentOp::identity: break;
          case AugmentOp::hflip: sx = w - 1 - x; break;
          case AugmentOp::vflip: sy = h - 1 - y; break;
          case AugmentOp::rot90: sy = x; sx = w - 1 - y; break;
          case AugmentOp::rot180: sy = h - 1 - y; sx = w - 1 - x; break;
          case AugmentOp::rot270: sy = h - 1 - x; sx = y; break;
        }
        d[y * w + x] = s[sy * w + sx];
      }
  }
}

}  // namespace

void apply_augment(const float* src, float* dst, i64 planes, i64 h, i64 w,
                   AugmentOp op) {
  apply_augment_impl(src, dst, planes, h, w, op);
}

void apply_augment(const unsigned char* src, unsigned char* dst, i64 planes,
                   i64 h, i64 w, AugmentOp op) {
  apply_augment_impl(src, dst, planes, h, w, op);
}

Patch augment(const Patch& p, AugmentOp op) {
  Patch out;
  out.ref = p.ref;
  out.size = p.size;
  out.stack.resize(p.stack.size());
  out.mask.resize(p.mask.size());
  apply_augment(p.stack.data(), out.stack.data(), 4, p.size, p.size, op);
  apply_augment(p.mask.data(), out.mask.data(), 1, p.size, p.size, op);
  return out;
}

FeatureStats compute_feature_stats(const std::vector<Patch>& patches) {
  check(!patches.empty(), "feature stats need at least one patch");
  FeatureStats stats;
  std::array<double, 4> sum{}, sumsq{};
  i64 count = 0;
  for (const Patch& p : patches) {
    const i64 hw = p.size * p.size;
    for (i64 c = 0; c < 4; ++c) {
      const float* ch = p.stack.data() + c * hw;
      for (i64 i = 0; i < hw; ++i) {
        const double v = ch[i];
        sum[static_cast<size_t>(c)] += v;
        sumsq[static_cast<size_t>(c)] += v * v;
      }
    }
    count += hw;
  }
  for (size_t c = 0; c < 4; ++c) {
    const double mean = sum[c] / static_cast<double>(count);
    const double var =
        std::max(0.0, sumsq[c] / static_cast<double>(count) - mean * mean);
    double sd = std::sqrt(var);
    if (sd < 1e-12) sd = 1.0;  // constant channel: center only
    stats.mean[c] = mean;
    stats.stddev[c] = sd;
  }
  return stats;
}

void standardize(Patch& p, const FeatureStats& stats) {
  const i64 hw = p.size * p.size;
  for (i64 c = 0; c < 4; ++c) {
    float* ch = p.stack.data() + c * hw;
    const double mean = stats.mean[static_cast<size_t>(c)];
    const double sd = stats.stddev[static_cast<size_t>(c)];
    for (i64 i = 0; i < hw; ++i)
      ch[i] = static_cast<float>((static_cast<double>(ch[i]) - mean) / sd);
  }
}

void write_manifest(const std::vector<ManifestEntry>& entries,
                    const std::string& path) {
  std::ostringstream os;
  os << "id,height,width,path\n";
  for (const ManifestEntry& e : entries) {
    check_id(e.id);
    check(e.path.find(',') == std::string::npos,
          "manifest path must not contain a comma: " + e.path);
    os << e.id << ',' << e.height << ',' << e.width << ',' << e.path << '\n';
  }
  write_text_atomic(path, os.str());
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  const std::vector<char> raw = read_file(path);
  std::istringstream is(std::string(raw.begin(), raw.end()));
  std::string line;
  check(static_cast<bool>(std::getline(is, line)), "manifest is empty: " + path);
  check(line == "id,height,width,path",
        "manifest has an unexpected header: " + path);
  std::vector<ManifestEntry> entries;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    ManifestEntry e;
    std::string h_s, w_s;
    check(static_cast<bool>(std::getline(ls, e.id, ',')) &&
              static_cast<bool>(std::getline(ls, h_s, ',')) &&
              static_cast<bool>(std::getline(ls, w_s, ',')) &&
              static_cast<bool>(std::getline(ls, e.path)),
          "manifest has a malformed line: " + line);
    e.height = std::stoll(h_s);
    e.width = std::stoll(w_s);
    check(e.height >= 1 && e.width >= 1,
          "manifest extents must be positive: " + line);
    entries.push_back(std::move(e));
  }
  return entries;
}

std::string resolve_scene_dir(const std::string& manifest_path,
                              const ManifestEntry& entry) {
  const fs::path p(entry.path);
  if (p.is_absolute()) return p.lexically_normal().string();
  return (fs::path(manifest_path).parent_path() / p).lexically_normal()
      .string();
}

}  // namespace floodcpf
