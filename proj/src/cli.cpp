#include "floodcpf/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "floodcpf/backbone.hpp"
#include "floodcpf/checkpoint.hpp"
#include "floodcpf/cpf.hpp"
#include "floodcpf/common.hpp"
#include "floodcpf/data.hpp"
#include "floodcpf/kernels.hpp"
#include "floodcpf/rng.hpp"
#include "floodcpf/tensor.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace floodcpf {

namespace {

std::string hex64(u64 v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string anchor_to(const char* env, const std::string& path) {
  if (path.empty() || fs::path(path).is_absolute()) return path;
  const char* root = std::getenv(env);
  if (root == nullptr || *root == '\0') return path;
  return (fs::path(root) / path).string();
}

// Loads every patch of one split, standardized with the checkpoint's stored
// training statistics. Scenes are pulled from the manifest on first use.
std::vector<Patch> load_split_patches(const ExperimentConfig& cfg,
                                      const std::vector<PatchRef>& refs,
                                      const FeatureStats& stats) {
  const std::vector<ManifestEntry> entries = read_manifest(cfg.manifest);
  std::map<std::string, const ManifestEntry*> by_id;
  for (const ManifestEntry& e : entries) by_id[e.id] = &e;
  std::map<std::string, SceneFeatures> features;
  std::vector<Patch> out;
  out.reserve(refs.size());
  for (const PatchRef& r : refs) {
    auto it = features.find(r.scene_id);
    if (it == features.end()) {
      const auto be = by_id.find(r.scene_id);
      check(be != by_id.end(),
            "eval: split references scene '" + r.scene_id +
                "' which the manifest does not carry");
      const ManifestEntry& entry = *be->second;
      const DualPolScene scene =
          load_scene(resolve_scene_dir(cfg.manifest, entry), entry.id);
      check(scene.height == entry.height && scene.width == entry.width,
            "eval: manifest extents disagree with scene " + entry.id);
      it = features.emplace(entry.id, make_features(scene, cfg.eps_feature))
               .first;
    }
    Patch p = read_patch(it->second, r, cfg.patch);
    standardize(p, stats);
    out.push_back(std::move(p));
  }
  return out;
}

SegModel<float> load_model(const ExperimentConfig& cfg,
                           const std::string& checkpoint_dir) {
  SegModel<float> model = build_model(cfg);
  std::vector<Parameter<float>*> params;
  model.collect(params);
  load_params<float>(params, checkpoint_dir);
  return model;
}

void write_pgm(const std::string& path, const unsigned char* px, i64 h,
               i64 w) {
  std::string blob =
      "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  blob.append(reinterpret_cast<const char*>(px),
              static_cast<size_t>(h) * static_cast<size_t>(w));
  write_file_atomic(path, blob.data(), blob.size());
}

std::string infer_scene_id(const std::string& scene_dir) {
  std::vector<std::string> ids;
  check(fs::is_directory(scene_dir),
        "predict: scene directory does not exist: " + scene_dir);
  for (const fs::directory_entry& e : fs::directory_iterator(scene_dir))
    if (e.is_regular_file() && e.path().extension() == ".json")
      ids.push_back(e.path().stem().string());
  check(ids.size() == 1, "predict: found " + std::to_string(ids.size()) +
                             " scene sidecars under " + scene_dir +
                             "; pass --id to pick one");
  return ids[0];
}

}  // namespace

std::string resolve_data_path(const std::string& path) {
  return anchor_to("FLOODCPF_DATA_ROOT", path);
}

std::string resolve_out_path(const std::string& path) {
  return anchor_to("FLOODCPF_OUT_ROOT", path);
}

std::vector<ManifestEntry> cmd_synth(const SynthConfig& cfg, i64 scenes,
                                     const std::string& out_root) {
  return generate_benchmark(cfg, scenes, resolve_out_path(out_root));
}

TrainResult cmd_train(const ExperimentConfig& cfg, const std::string& out_dir) {
  ExperimentConfig resolved = cfg;
  resolved.manifest = resolve_data_path(resolved.manifest);
  check(!resolved.manifest.empty(),
        "train: pass --manifest or a config file that names one");
  return train(resolved, resolve_out_path(out_dir));
}

MetricRow cmd_eval(const EvalRequest& req) {
  const std::string ckpt = resolve_out_path(req.checkpoint);
  ExperimentConfig cfg = read_checkpoint_config(ckpt);
  cfg.manifest =
      resolve_data_path(req.manifest.empty() ? cfg.manifest : req.manifest);
  const SplitManifest splits = read_splits(ckpt + "/splits.csv", cfg.patch);
  std::ptrdiff_t idx = -1;
  for (std::size_t i = 0; i < splits.names.size(); ++i)
    if (splits.names[i] == req.split) idx = static_cast<std::ptrdiff_t>(i);
  if (idx < 0) {
    // The trainer always defines these three; a canonical name absent from
    // the splits file means that split rounded to zero patches.
    if (req.split == "train" || req.split == "val" || req.split == "test")
      fail("eval: split '" + req.split + "' is empty");
    fail("eval: the checkpoint's split manifest has no split named '" +
         req.split + "'");
  }
  const std::vector<PatchRef>& refs =
      splits.members[static_cast<std::size_t>(idx)];
  check(!refs.empty(), "eval: split '" + req.split + "' is empty");

  const FeatureStats stats = read_feature_stats(ckpt + "/stats.txt");
  const std::vector<Patch> patches = load_split_patches(cfg, refs, stats);

  MetricRow row;
  if (req.oracle) {
    // Test hook: the ground truth scored against itself.
    row.method = "Oracle";
    for (const Patch& p : patches)
      for (const unsigned char m : p.mask)
        (m != 0 ? row.counts.tp : row.counts.tn) += 1;
  } else {
    row.method = mode_label(cfg.mode);
    const SegModel<float> model = load_model(cfg, ckpt);
    row.counts = eval_patches(model, patches, cfg.tau, cfg.batch_size);
  }

  std::string out = req.out_dir.empty()
                        ? ckpt + "/eval_" + req.split + (req.oracle ? "_oracle" : "")
                        : resolve_out_path(req.out_dir);
  fs::create_directories(out);
  write_text_atomic(out + "/metrics.csv", report_csv({row}));
  write_text_atomic(out + "/metrics.txt", report_table({row}));
  return row;
}

void cmd_predict(const PredictRequest& req) {
  const std::string ckpt = resolve_out_path(req.checkpoint);
  const ExperimentConfig cfg = read_checkpoint_config(ckpt);
  const double tau = req.tau < 0.0 ? cfg.tau : req.tau;
  check(tau > 0.0 && tau < 1.0, "predict: tau must lie strictly in (0,1)");

  const std::string scene_dir = resolve_data_path(req.scene_dir);
  const std::string id =
      req.scene_id.empty() ? infer_scene_id(scene_dir) : req.scene_id;
  const DualPolScene scene = load_scene(scene_dir, id);
  const i64 p = cfg.patch;
  check(scene.height % p == 0 && scene.width % p == 0,
        "predict: scene " + id + " is " + std::to_string(scene.height) + "x" +
            std::to_string(scene.width) + ", which does not tile by the " +
            "training patch " + std::to_string(p) +
            "; refusing to resize or pad");

  const SceneFeatures f = make_features(scene, cfg.eps_feature);
  const FeatureStats stats = read_feature_stats(ckpt + "/stats.txt");
  const SegModel<float> model = load_model(cfg, ckpt);

  const i64 h = scene.height;
  const i64 w = scene.width;
  const size_t n = static_cast<size_t>(h) * static_cast<size_t>(w);
  std::vector<float> prob(n, 0.0f);
  std::vector<unsigned char> mask(n, 0);
  NoGrad ng;
  Tensor<float> x = Tensor<float>::zeros(Shape{1, 4, p, p});
  for (i64 r0 = 0; r0 < h; r0 += p)
    for (i64 c0 = 0; c0 < w; c0 += p) {
      Patch patch = read_patch(f, PatchRef{id, r0, c0}, p);
      standardize(patch, stats);
      std::copy(patch.stack.begin(), patch.stack.end(), x.data());
      const Tensor<float> out = model.forward(x);
      const std::vector<unsigned char> tile = binarize(out, tau);
      const float* op = out.data();
      for (i64 r = 0; r < p; ++r) {
        const size_t dst = static_cast<size_t>((r0 + r) * w + c0);
        std::copy(op + r * p, op + (r + 1) * p, prob.data() + dst);
        std::copy(tile.data() + r * p, tile.data() + (r + 1) * p,
                  mask.data() + dst);
      }
    }

  const std::string out_dir = resolve_out_path(req.out_dir);
  fs::create_directories(out_dir);
  const std::string base = out_dir + "/" + id;
  write_file_atomic(base + ".prob.f32r", prob.data(), n * sizeof(float));
  write_file_atomic(base + ".mask.u8r", mask.data(), n);
  json side;
  side["id"] = id;
  side["height"] = h;
  side["width"] = w;
  side["tau"] = tau;
  side["checksums"] = {
      {"prob", hex64(fnv1a64(prob.data(), n * sizeof(float)))},
      {"mask", hex64(fnv1a64(mask.data(), n))}};
  write_text_atomic(base + ".json", side.dump(2) + "\n");

  std::vector<unsigned char> gray(n);
  for (size_t i = 0; i < n; ++i)
    gray[i] = static_cast<unsigned char>(
        std::lround(std::clamp(prob[i], 0.0f, 1.0f) * 255.0f));
  write_pgm(base + ".prob.pgm", gray.data(), h, w);
  for (size_t i = 0; i < n; ++i) gray[i] = mask[i] != 0 ? 255 : 0;
  write_pgm(base + ".mask.pgm", gray.data(), h, w);
}

void cmd_compare(const ExperimentConfig& base, const std::vector<u64>& seeds,
                 const std::string& out_root) {
  check(!seeds.empty(), "compare: need at least one seed");
  const std::string root = resolve_out_path(out_root);
  ExperimentConfig cfg = base;
  cfg.manifest = resolve_data_path(cfg.manifest);
  check(!cfg.manifest.empty(),
        "compare: pass --manifest or a config file that names one");
  for (const BackboneKind kind : {BackboneKind::unet, BackboneKind::autoencoder}) {
    cfg.backbone = kind;
    const std::vector<AblationRow> rows = run_ablation(cfg, seeds, root);
    write_ablation_report(rows, static_cast<i64>(seeds.size()), root, kind);
  }
}

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"dual-polarization SAR flood segmentation"};
  app.require_subcommand(1);
  std::string backend = "omp";
  app.add_option("--backend", backend, "kernel backend: omp or serial")
      ->capture_default_str();

  // ---- synth ----
  CLI::App* synth =
      app.add_subcommand("synth", "generate the synthetic dual-pol benchmark");
  SynthConfig scfg;
  i64 n_scenes = 10;
  std::string synth_out = "bench";
  synth->add_option("--scenes", n_scenes, "number of scenes")
      ->capture_default_str();
  synth->add_option("--out", synth_out, "benchmark root directory")
      ->capture_default_str();
  synth->add_option("--height", scfg.height, "scene height in pixels")
      ->capture_default_str();
  synth->add_option("--width", scfg.width, "scene width in pixels")
      ->capture_default_str();
  synth->add_option("--region-scale", scfg.region_scale,
                    "box-blur radius of the region fields")
      ->capture_default_str();
  synth->add_option("--wet-fraction", scfg.wet_fraction,
                    "fraction of pixels marked wet")
      ->capture_default_str();
  synth->add_option("--veg-fraction", scfg.veg_fraction,
                    "fraction of pixels marked vegetated")
      ->capture_default_str();
  synth->add_option("--looks", scfg.looks, "speckle looks")
      ->capture_default_str();
  synth->add_option("--seed", scfg.seed, "benchmark seed")
      ->capture_default_str();

  // ---- train ----
  CLI::App* tr =
      app.add_subcommand("train", "train one model and write a checkpoint");
  std::string config_path;
  std::string train_out = "runs/train";
  tr->add_option("--config", config_path, "experiment config file");
  tr->add_option("--out", train_out, "checkpoint directory")
      ->capture_default_str();
  ExperimentConfig fl;  // flag values; applied over the config file
  std::string fl_mode = fusion_mode_name(fl.mode);
  std::string fl_backbone = backbone_kind_name(fl.backbone);
  std::string fl_wiring = wiring_name(fl.cpf_wiring);
  tr->add_option("--adam-beta1", fl.adam_beta1)->capture_default_str();
  tr->add_option("--adam-beta2", fl.adam_beta2)->capture_default_str();
  tr->add_option("--adam-eps", fl.adam_eps)->capture_default_str();
  tr->add_option("--augment", fl.augment, "1 draws dihedral augmentations")
      ->capture_default_str();
  tr->add_option("--backbone", fl_backbone, "unet or autoencoder")
      ->capture_default_str();
  tr->add_option("--base-width", fl.base_width)->capture_default_str();
  tr->add_option("--batch-size", fl.batch_size)->capture_default_str();
  tr->add_option("--cpf-reduction", fl.cpf_reduction)->capture_default_str();
  tr->add_option("--cpf-sa-kernel", fl.cpf_sa_kernel)->capture_default_str();
  tr->add_option("--cpf-wiring", fl_wiring, "cross or self")
      ->capture_default_str();
  tr->add_option("--depth", fl.depth)->capture_default_str();
  tr->add_option("--epochs", fl.epochs)->capture_default_str();
  tr->add_option("--eps-feature", fl.eps_feature)->capture_default_str();
  tr->add_option("--eps-prob", fl.eps_prob)->capture_default_str();
  tr->add_option("--lr", fl.lr)->capture_default_str();
  tr->add_option("--manifest", fl.manifest, "dataset manifest csv");
  tr->add_option("--mode", fl_mode,
                 "vv_only, vh_only, addition, concat, or cpf")
      ->capture_default_str();
  tr->add_option("--patch", fl.patch)->capture_default_str();
  tr->add_option("--seed", fl.seed)->capture_default_str();
  tr->add_option("--split-test", fl.split_test)->capture_default_str();
  tr->add_option("--split-train", fl.split_train)->capture_default_str();
  tr->add_option("--split-val", fl.split_val)->capture_default_str();
  tr->add_option("--stem-depth", fl.stem_depth)->capture_default_str();
  tr->add_option("--stem-width", fl.stem_width)->capture_default_str();
  tr->add_option("--tau", fl.tau)->capture_default_str();

  // ---- eval ----
  CLI::App* ev =
      app.add_subcommand("eval", "score a checkpoint on one stored split");
  EvalRequest ereq;
  ev->add_option("--checkpoint", ereq.checkpoint, "checkpoint directory")
      ->required();
  ev->add_option("--manifest", ereq.manifest,
                 "dataset manifest (default: the one trained on)");
  ev->add_option("--split", ereq.split, "train, val, or test")
      ->capture_default_str();
  ev->add_option("--out", ereq.out_dir,
                 "report directory (default: <checkpoint>/eval_<split>)");
  ev->add_flag("--oracle", ereq.oracle,
               "score the ground truth against itself");

  // ---- predict ----
  CLI::App* pr = app.add_subcommand(
      "predict", "write probability and mask rasters for one scene");
  PredictRequest preq;
  pr->add_option("--checkpoint", preq.checkpoint, "checkpoint directory")
      ->required();
  pr->add_option("--scene", preq.scene_dir, "scene directory")->required();
  pr->add_option("--id", preq.scene_id,
                 "scene id (default: the directory's only sidecar)");
  pr->add_option("--out", preq.out_dir, "output directory")
      ->capture_default_str();
  pr->add_option("--tau", preq.tau, "threshold (default: the checkpoint's)");

  // ---- compare ----
  CLI::App* cp = app.add_subcommand(
      "compare", "run the five-mode ablation for both backbones");
  std::string cmp_config;
  std::string cmp_manifest;
  std::string cmp_out = "runs/compare";
  std::vector<u64> seeds{41, 42, 43};
  cp->add_option("--config", cmp_config, "base experiment config file");
  cp->add_option("--manifest", cmp_manifest, "dataset manifest csv");
  cp->add_option("--out", cmp_out, "report root directory")
      ->capture_default_str();
  cp->add_option("--seeds", seeds, "training seeds")
      ->delimiter(',')
      ->capture_default_str();

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    kern::set_backend(kern::parse_backend(backend));
    if (app.got_subcommand(synth)) {
      const std::vector<ManifestEntry> entries =
          cmd_synth(scfg, n_scenes, synth_out);
      std::cout << "wrote " << entries.size() << " scenes under "
                << resolve_out_path(synth_out) << "\n";
    } else if (app.got_subcommand(tr)) {
      ExperimentConfig cfg;
      if (tr->count("--config") != 0u) cfg = load_config(config_path);
      if (tr->count("--adam-beta1") != 0u) cfg.adam_beta1 = fl.adam_beta1;
      if (tr->count("--adam-beta2") != 0u) cfg.adam_beta2 = fl.adam_beta2;
      if (tr->count("--adam-eps") != 0u) cfg.adam_eps = fl.adam_eps;
      if (tr->count("--augment") != 0u) cfg.augment = fl.augment;
      if (tr->count("--backbone") != 0u)
        cfg.backbone = parse_backbone_kind(fl_backbone);
      if (tr->count("--base-width") != 0u) cfg.base_width = fl.base_width;
      if (tr->count("--batch-size") != 0u) cfg.batch_size = fl.batch_size;
      if (tr->count("--cpf-reduction") != 0u)
        cfg.cpf_reduction = fl.cpf_reduction;
      if (tr->count("--cpf-sa-kernel") != 0u)
        cfg.cpf_sa_kernel = fl.cpf_sa_kernel;
      if (tr->count("--cpf-wiring") != 0u)
        cfg.cpf_wiring = parse_wiring(fl_wiring);
      if (tr->count("--depth") != 0u) cfg.depth = fl.depth;
      if (tr->count("--epochs") != 0u) cfg.epochs = fl.epochs;
      if (tr->count("--eps-feature") != 0u) cfg.eps_feature = fl.eps_feature;
      if (tr->count("--eps-prob") != 0u) cfg.eps_prob = fl.eps_prob;
      if (tr->count("--lr") != 0u) cfg.lr = fl.lr;
      if (tr->count("--manifest") != 0u) cfg.manifest = fl.manifest;
      if (tr->count("--mode") != 0u) cfg.mode = parse_fusion_mode(fl_mode);
      if (tr->count("--patch") != 0u) cfg.patch = fl.patch;
      if (tr->count("--seed") != 0u) cfg.seed = fl.seed;
      if (tr->count("--split-test") != 0u) cfg.split_test = fl.split_test;
      if (tr->count("--split-train") != 0u) cfg.split_train = fl.split_train;
      if (tr->count("--split-val") != 0u) cfg.split_val = fl.split_val;
      if (tr->count("--stem-depth") != 0u) cfg.stem_depth = fl.stem_depth;
      if (tr->count("--stem-width") != 0u) cfg.stem_width = fl.stem_width;
      if (tr->count("--tau") != 0u) cfg.tau = fl.tau;
      const TrainResult res = cmd_train(cfg, train_out);
      for (const TrainLogRow& row : res.log)
        std::cout << "epoch " << row.epoch << ": train loss " << row.train_loss
                  << ", val IoU " << row.val_iou << "\n";
      std::cout << "best val IoU " << res.best_val_iou << " at epoch "
                << res.best_epoch << "\n"
                << report_table({{mode_label(cfg.mode), res.test_counts}});
    } else if (app.got_subcommand(ev)) {
      const MetricRow row = cmd_eval(ereq);
      std::cout << report_table({row});
    } else if (app.got_subcommand(pr)) {
      cmd_predict(preq);
      std::cout << "wrote rasters under " << resolve_out_path(preq.out_dir)
                << "\n";
    } else {
      ExperimentConfig cfg;
      if (cp->count("--config") != 0u) cfg = load_config(cmp_config);
      if (cp->count("--manifest") != 0u) cfg.manifest = cmp_manifest;
      cmd_compare(cfg, seeds, cmp_out);
      for (const char* kind : {"unet", "autoencoder"}) {
        const std::vector<char> table = read_file(
            resolve_out_path(cmp_out) + "/table_" + kind + ".txt");
        std::cout << std::string(table.begin(), table.end()) << "\n";
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace floodcpf
