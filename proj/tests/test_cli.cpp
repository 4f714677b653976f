#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "floodcpf/checkpoint.hpp"
#include "floodcpf/cli.hpp"
#include "floodcpf/data.hpp"
#include "floodcpf/synth.hpp"
#include "floodcpf/tensor.hpp"
#include "floodcpf/trainer.hpp"

using namespace floodcpf;
namespace fs = std::filesystem;

namespace {

std::string scratch_dir() {
  static const std::string dir = [] {
    std::string d = (fs::temp_directory_path() / "floodcpf_cli_tests").string();
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

// Keeps CLI chatter out of the doctest report.
struct QuietCout {
  std::ostringstream sink;
  std::streambuf* saved_out;
  std::streambuf* saved_err;
  QuietCout()
      : saved_out(std::cout.rdbuf(sink.rdbuf())),
        saved_err(std::cerr.rdbuf(sink.rdbuf())) {}
  ~QuietCout() {
    std::cout.rdbuf(saved_out);
    std::cerr.rdbuf(saved_err);
  }
};

std::string tiny_benchmark() {
  static const std::string root = [] {
    SynthConfig s;
    s.height = 64;
    s.width = 64;
    s.region_scale = 8;
    s.seed = 77;
    const std::string r = scratch_dir() + "/bench";
    generate_benchmark(s, 2, r);
    return r;
  }();
  return root;
}

ExperimentConfig tiny_config() {
  ExperimentConfig cfg;
  cfg.manifest = tiny_benchmark() + "/manifest.csv";
  cfg.base_width = 4;
  cfg.depth = 2;
  cfg.stem_depth = 1;
  cfg.stem_width = 4;
  cfg.cpf_sa_kernel = 3;
  cfg.patch = 16;
  cfg.batch_size = 4;
  cfg.epochs = 2;
  cfg.split_train = 0.75;
  cfg.split_val = 0.125;
  cfg.split_test = 0.125;
  cfg.seed = 9;
  return cfg;
}

// One shared checkpoint for the read-only eval/predict cases.
std::string shared_checkpoint() {
  static const std::string dir = [] {
    const std::string d = scratch_dir() + "/ckpt";
    train(tiny_config(), d);
    return d;
  }();
  return dir;
}

std::vector<char> slurp(const std::string& path) { return read_file(path); }

}  // namespace

TEST_CASE("data and out roots anchor relative paths only") {
  CHECK(resolve_data_path("bench/manifest.csv") == "bench/manifest.csv");
  setenv("FLOODCPF_DATA_ROOT", "/data", 1);
  setenv("FLOODCPF_OUT_ROOT", "/out", 1);
  CHECK(resolve_data_path("bench/manifest.csv") == "/data/bench/manifest.csv");
  CHECK(resolve_data_path("/abs/manifest.csv") == "/abs/manifest.csv");
  CHECK(resolve_data_path("") == "");
  CHECK(resolve_out_path("runs/a") == "/out/runs/a");
  CHECK(resolve_out_path("/abs/runs/a") == "/abs/runs/a");
  unsetenv("FLOODCPF_DATA_ROOT");
  unsetenv("FLOODCPF_OUT_ROOT");
  CHECK(resolve_out_path("runs/a") == "runs/a");
}

TEST_CASE("eval reproduces the training run's test metrics byte for byte") {
  const std::string ckpt = shared_checkpoint();
  EvalRequest req;
  req.checkpoint = ckpt;
  const MetricRow row = cmd_eval(req);
  CHECK(row.method == "CPF (VV, VH)");
  CHECK(slurp(ckpt + "/eval_test/metrics.csv") == slurp(ckpt + "/metrics.csv"));

  // Idempotent: a second run rewrites identical bytes.
  const std::vector<char> first = slurp(ckpt + "/eval_test/metrics.csv");
  cmd_eval(req);
  CHECK(slurp(ckpt + "/eval_test/metrics.csv") == first);
}

TEST_CASE("oracle eval scores a perfect 100.0") {
  EvalRequest req;
  req.checkpoint = shared_checkpoint();
  req.oracle = true;
  const MetricRow row = cmd_eval(req);
  CHECK(row.counts.fp == 0);
  CHECK(row.counts.fn == 0);
  CHECK(row.counts.total() == 4 * 16 * 16);
  const std::vector<char> csv =
      slurp(shared_checkpoint() + "/eval_test_oracle/metrics.csv");
  const std::string text(csv.begin(), csv.end());
  CHECK(text.find("Oracle,100.0,100.0,100.0,100.0,") != std::string::npos);
}

TEST_CASE("eval rejects unknown and empty splits") {
  EvalRequest req;
  req.checkpoint = shared_checkpoint();
  req.split = "holdout";
  CHECK_THROWS_WITH_AS(cmd_eval(req), doctest::Contains("no split named"),
                       std::runtime_error);

  // 32 patches at 0.96/0.02/0.02 round to 31/0/1; epochs 0 tolerates the
  // empty validation split, eval of it must not.
  ExperimentConfig cfg = tiny_config();
  cfg.epochs = 0;
  cfg.split_train = 0.96;
  cfg.split_val = 0.02;
  cfg.split_test = 0.02;
  const std::string dir = scratch_dir() + "/ckpt_skew";
  train(cfg, dir);
  EvalRequest empty;
  empty.checkpoint = dir;
  empty.split = "val";
  CHECK_THROWS_WITH_AS(cmd_eval(empty), doctest::Contains("is empty"),
                       std::runtime_error);
}

TEST_CASE("predict stitches exactly the per-patch model output") {
  const std::string ckpt = shared_checkpoint();
  const ExperimentConfig cfg = read_checkpoint_config(ckpt);
  PredictRequest req;
  req.checkpoint = ckpt;
  req.scene_dir = tiny_benchmark() + "/scenes";
  req.scene_id = "synth_0000";
  req.out_dir = scratch_dir() + "/pred";
  cmd_predict(req);

  for (const char* suffix :
       {".prob.f32r", ".mask.u8r", ".json", ".prob.pgm", ".mask.pgm"})
    CHECK(fs::exists(req.out_dir + "/synth_0000" + std::string(suffix)));

  const std::vector<char> prob_bytes =
      slurp(req.out_dir + "/synth_0000.prob.f32r");
  const std::vector<char> mask_bytes =
      slurp(req.out_dir + "/synth_0000.mask.u8r");
  REQUIRE(prob_bytes.size() == 64 * 64 * sizeof(float));
  REQUIRE(mask_bytes.size() == 64 * 64);
  std::vector<float> prob(64 * 64);
  std::memcpy(prob.data(), prob_bytes.data(), prob_bytes.size());
  int flooded = 0;
  for (int i = 0; i < 64 * 64; ++i) {
    CHECK(prob[i] > 0.0f);
    CHECK(prob[i] < 1.0f);
    const unsigned char m = static_cast<unsigned char>(mask_bytes[i]);
    CHECK(m <= 1);
    CHECK(m == (static_cast<double>(prob[i]) >= cfg.tau ? 1 : 0));
    flooded += m;
  }
  CHECK(flooded > 0);

  // One tile re-run through the model matches the raster bitwise.
  const DualPolScene scene = load_scene(req.scene_dir, "synth_0000");
  const SceneFeatures f = make_features(scene, cfg.eps_feature);
  const FeatureStats stats = read_feature_stats(ckpt + "/stats.txt");
  SegModel<float> model = build_model(cfg);
  std::vector<Parameter<float>*> params;
  model.collect(params);
  load_params<float>(params, ckpt);
  Patch patch = read_patch(f, PatchRef{"synth_0000", 16, 32}, cfg.patch);
  standardize(patch, stats);
  NoGrad ng;
  Tensor<float> x = Tensor<float>::zeros(Shape{1, 4, cfg.patch, cfg.patch});
  std::copy(patch.stack.begin(), patch.stack.end(), x.data());
  const Tensor<float> out = model.forward(x);
  for (i64 r = 0; r < cfg.patch; ++r)
    CHECK(std::memcmp(out.data() + r * cfg.patch,
                      prob.data() + (16 + r) * 64 + 32,
                      sizeof(float) * static_cast<size_t>(cfg.patch)) == 0);

  // Idempotent artifacts.
  cmd_predict(req);
  CHECK(slurp(req.out_dir + "/synth_0000.prob.f32r") == prob_bytes);

  // pgm previews carry the plain binary header.
  const std::vector<char> pgm = slurp(req.out_dir + "/synth_0000.mask.pgm");
  const std::string head(pgm.begin(), pgm.begin() + 11);
  CHECK(head == "P5\n64 64\n25");
}

TEST_CASE("predict near one thresholds away almost every pixel") {
  PredictRequest req;
  req.checkpoint = shared_checkpoint();
  req.scene_dir = tiny_benchmark() + "/scenes";
  req.scene_id = "synth_0001";
  req.out_dir = scratch_dir() + "/pred_hi";
  req.tau = 0.999999;
  cmd_predict(req);
  const std::vector<char> mask = slurp(req.out_dir + "/synth_0001.mask.u8r");
  const DualPolScene scene = load_scene(req.scene_dir, "synth_0001");
  i64 predicted = 0, truth = 0;
  for (size_t i = 0; i < mask.size(); ++i) {
    predicted += mask[i];
    truth += scene.mask[i];
  }
  CHECK(predicted < truth);
}

TEST_CASE("predict refuses scenes that do not tile by the patch") {
  SynthConfig s;
  s.height = 24;
  s.width = 24;
  s.region_scale = 8;
  s.seed = 3;
  const DualPolScene odd = generate_scene(s, "odd_0001");
  const std::string dir = scratch_dir() + "/odd_scene";
  save_scene(odd, dir);

  PredictRequest req;
  req.checkpoint = shared_checkpoint();  // patch 16; 24 % 16 != 0
  req.scene_dir = dir;
  req.out_dir = scratch_dir() + "/pred_odd";
  CHECK_THROWS_WITH_AS(cmd_predict(req), doctest::Contains("refusing to resize"),
                       std::runtime_error);
  CHECK(!fs::exists(req.out_dir + "/odd_0001.prob.f32r"));

  // A lone scene needs no --id; ambiguity is an error, not a guess.
  PredictRequest no_id = req;
  no_id.scene_dir = tiny_benchmark() + "/scenes";
  no_id.out_dir = scratch_dir() + "/pred_ambiguous";
  CHECK_THROWS_WITH_AS(cmd_predict(no_id), doctest::Contains("pass --id"),
                       std::runtime_error);
}

TEST_CASE("run_cli maps contract errors to exit 1 and parses flags") {
  QuietCout quiet;
  CHECK(run_cli({"--help"}) == 0);
  CHECK(run_cli({}) != 0);                       // a subcommand is required
  CHECK(run_cli({"train", "--bogus"}) != 0);     // unknown flag
  CHECK(run_cli({"eval"}) != 0);                 // missing --checkpoint
  CHECK(run_cli({"eval", "--checkpoint", shared_checkpoint(), "--split",
                 "bogus"}) == 1);
  CHECK(run_cli({"eval", "--checkpoint", shared_checkpoint()}) == 0);
  CHECK(run_cli({"synth", "--scenes", "1", "--out",
                 scratch_dir() + "/bad_bench"}) == 1);  // needs >= 2 scenes
  CHECK(run_cli({"--backend", "cuda", "eval", "--checkpoint",
                 shared_checkpoint()}) == 1);  // unknown backend name
}

TEST_CASE("run_cli trains with config-file flags overridden by the command line") {
  QuietCout quiet;
  ExperimentConfig cfg = tiny_config();
  cfg.epochs = 0;
  cfg.lr = 0.001;
  const std::string cfg_path = scratch_dir() + "/base.cfg";
  write_text_atomic(cfg_path, serialize_config(cfg));
  const std::string out = scratch_dir() + "/run_flags";
  CHECK(run_cli({"train", "--config", cfg_path, "--lr", "0.005", "--out",
                 out}) == 0);
  const ExperimentConfig stored = read_checkpoint_config(out);
  CHECK(stored.lr == 0.005);
  CHECK(stored.epochs == 0);           // from the config file
  CHECK(stored.patch == cfg.patch);    // from the config file
  CHECK(stored.manifest == cfg.manifest);
}

TEST_CASE("compare runs both backbones over all five modes") {
  QuietCout quiet;
  ExperimentConfig cfg = tiny_config();
  cfg.epochs = 1;
  const std::string root = scratch_dir() + "/compare";
  cmd_compare(cfg, {4}, root);
  i64 run_dirs = 0;
  for (const char* bk : {"unet", "autoencoder"})
    for (const char* m : {"vv_only", "vh_only", "addition", "concat", "cpf"})
      run_dirs += fs::exists(root + "/" + bk + "_" + m + "_seed4/params.bin");
  CHECK(run_dirs == 10);
  i64 rows = 0;
  for (const char* bk : {"unet", "autoencoder"}) {
    const std::vector<char> csv = slurp(root + "/table_" + bk + ".csv");
    const std::string text(csv.begin(), csv.end());
    rows += static_cast<i64>(std::count(text.begin(), text.end(), '\n')) - 1;
    CHECK(text.rfind("method,iou,csi,f1,oa,tp,fp,fn,tn\n", 0) == 0);
    CHECK(fs::exists(root + "/table_" + bk + ".txt"));
    CHECK(fs::exists(root + "/ablation_" + bk + ".csv"));
  }
  CHECK(rows == 10);

  // The twin IoU and CSI columns stay equal in every emitted row. Method
  // labels may carry commas, so cells are counted from the line's end.
  const std::vector<char> csv = slurp(root + "/table_unet.csv");
  std::istringstream lines(std::string(csv.begin(), csv.end()));
  std::string line;
  std::getline(lines, line);  // header
  while (std::getline(lines, line)) {
    std::vector<std::string> cells;
    std::istringstream cs(line);
    for (std::string c; std::getline(cs, c, ',');) cells.push_back(c);
    REQUIRE(cells.size() >= 9);
    const std::string iou = cells[cells.size() - 8];
    const std::string csi = cells[cells.size() - 7];
    CHECK(iou == csi);
  }
}
