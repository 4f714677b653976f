#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "floodcpf/common.hpp"
#include "floodcpf/metrics.hpp"
#include "floodcpf/rng.hpp"

using namespace floodcpf;

namespace {

std::vector<unsigned char> rand_mask(i64 n, Rng& rng, double p_one = 0.5) {
  std::vector<unsigned char> m(static_cast<size_t>(n));
  for (auto& v : m) v = rng.uniform() < p_one ? 1 : 0;
  return m;
}

}  // namespace

TEST_CASE("accumulate counts pixels into the right confusion cells") {
  ConfusionCounts c;
  accumulate(c, std::vector<unsigned char>{1, 1, 1, 1},
             std::vector<unsigned char>{1, 1, 1, 1});
  CHECK(c.tp == 4);
  CHECK(c.fp == 0);
  CHECK(c.fn == 0);
  CHECK(c.tn == 0);

  ConfusionCounts d;
  accumulate(d, std::vector<unsigned char>{1, 1, 0, 0},
             std::vector<unsigned char>{1, 0, 0, 0});
  CHECK(d.tp == 1);
  CHECK(d.fp == 1);
  CHECK(d.fn == 0);
  CHECK(d.tn == 2);
  CHECK(d.total() == 4);

  accumulate(d, std::vector<unsigned char>{1, 1, 0, 0},
             std::vector<unsigned char>{1, 0, 0, 0});
  CHECK(d.tp == 2);
  CHECK(d.fp == 2);
  CHECK(d.fn == 0);
  CHECK(d.tn == 4);
}

TEST_CASE("accumulate validates extents and binary values") {
  ConfusionCounts c;
  CHECK_THROWS(accumulate(c, std::vector<unsigned char>{1, 0},
                          std::vector<unsigned char>{1}));
  CHECK_THROWS(accumulate(c, std::vector<unsigned char>{2},
                          std::vector<unsigned char>{1}));
  CHECK_THROWS(accumulate(c, std::vector<unsigned char>{0},
                          std::vector<unsigned char>{7}));
}

TEST_CASE("iou follows tp/(tp+fp+fn) with the empty-union convention") {
  CHECK(iou(ConfusionCounts{1, 1, 0, 0}) == doctest::Approx(0.5));
  CHECK(iou(ConfusionCounts{9, 0, 0, 3}) == 1.0);
  CHECK(iou(ConfusionCounts{0, 0, 0, 5}) == 1.0);
}

TEST_CASE("csi is bit-identical to iou for any counts") {
  Rng rng(42);
  for (int i = 0; i < 200; ++i) {
    ConfusionCounts c{static_cast<i64>(rng.uniform_int(1000)),
                      static_cast<i64>(rng.uniform_int(1000)),
                      static_cast<i64>(rng.uniform_int(1000)),
                      static_cast<i64>(rng.uniform_int(1000))};
    CHECK(iou(c) == csi(c));
  }
}

TEST_CASE("f1 follows 2tp/(2tp+fp+fn) and the iou identity") {
  CHECK(f1(ConfusionCounts{1, 1, 0, 0}) == doctest::Approx(2.0 / 3.0));
  CHECK(f1(ConfusionCounts{0, 3, 4, 1}) == 0.0);
  CHECK(f1(ConfusionCounts{0, 0, 0, 2}) == 1.0);
  Rng rng(7);
  for (int i = 0; i < 200; ++i) {
    ConfusionCounts c{static_cast<i64>(rng.uniform_int(500)) + 1,
                      static_cast<i64>(rng.uniform_int(500)),
                      static_cast<i64>(rng.uniform_int(500)), 0};
    const double lhs = f1(c);
    const double rhs = 2.0 * iou(c) / (1.0 + iou(c));
    CHECK(std::abs(lhs - rhs) <= 1e-12 * std::max(std::abs(lhs), 1.0));
    CHECK(iou(c) <= f1(c));
    CHECK(f1(c) <= 1.0);
    CHECK(iou(c) >= 0.0);
  }
}

TEST_CASE("oa is the fraction of agreeing pixels") {
  CHECK(oa(ConfusionCounts{1, 1, 0, 2}) == doctest::Approx(0.75));
  CHECK(oa(ConfusionCounts{5, 0, 0, 5}) == 1.0);
  CHECK(oa(ConfusionCounts{0, 4, 6, 0}) == 0.0);
  CHECK_THROWS(oa(ConfusionCounts{}));
}

TEST_CASE("metrics match an independent per-pixel recount on random masks") {
  Rng rng(123);
  ConfusionCounts micro;
  for (int trial = 0; trial < 1000; ++trial) {
    const i64 n = 16 * 16;
    std::vector<unsigned char> pred = rand_mask(n, rng, 0.35);
    std::vector<unsigned char> truth = rand_mask(n, rng, 0.4);
    ConfusionCounts c;
    accumulate(c, pred, truth);
    // Recount with arithmetic instead of branching.
    i64 tp = 0, both = 0, p1 = 0, t1 = 0;
    for (i64 i = 0; i < n; ++i) {
      tp += pred[static_cast<size_t>(i)] & truth[static_cast<size_t>(i)];
      p1 += pred[static_cast<size_t>(i)];
      t1 += truth[static_cast<size_t>(i)];
      both += (pred[static_cast<size_t>(i)] | truth[static_cast<size_t>(i)]);
    }
    CHECK(c.tp == tp);
    CHECK(c.fp == p1 - tp);
    CHECK(c.fn == t1 - tp);
    CHECK(c.tn == n - both);
    micro += c;
  }
  CHECK(micro.total() == 1000 * 256);
}

TEST_CASE("counts are invariant under a joint geometric transform") {
  Rng rng(5);
  const i64 h = 8, w = 8;
  std::vector<unsigned char> pred = rand_mask(h * w, rng, 0.3);
  std::vector<unsigned char> truth = rand_mask(h * w, rng, 0.3);
  std::vector<unsigned char> pred_f(pred.size()), truth_f(truth.size());
  for (i64 y = 0; y < h; ++y)
    for (i64 x = 0; x < w; ++x) {
      pred_f[static_cast<size_t>(y * w + (w - 1 - x))] =
          pred[static_cast<size_t>(y * w + x)];
      truth_f[static_cast<size_t>(y * w + (w - 1 - x))] =
          truth[static_cast<size_t>(y * w + x)];
    }
  ConfusionCounts a, b;
  accumulate(a, pred, truth);
  accumulate(b, pred_f, truth_f);
  CHECK(a.tp == b.tp);
  CHECK(a.fp == b.fp);
  CHECK(a.fn == b.fn);
  CHECK(a.tn == b.tn);
}

TEST_CASE("reports format percents to one decimal in a stable order") {
  std::vector<MetricRow> rows;
  rows.push_back({"Perfect", ConfusionCounts{10, 0, 0, 6}});
  std::string csv = report_csv(rows);
  CHECK(csv.find("method,iou,csi,f1,oa,tp,fp,fn,tn\n") == 0);
  CHECK(csv.find("Perfect,100.0,100.0,100.0,100.0,10,0,0,6\n") !=
        std::string::npos);

  std::vector<MetricRow> paper;
  paper.push_back({"CPF (VV, VH)", ConfusionCounts{698, 151, 151, 0}});
  std::string table = report_table(paper);
  CHECK(table.find("69.8") != std::string::npos);
  CHECK(table.find("82.2") != std::string::npos);
  std::string csv2 = report_csv(paper);
  CHECK(csv2.find("CPF (VV, VH),69.8,69.8,82.2,69.8,698,151,151,0\n") !=
        std::string::npos);

  rows.push_back({"Second", ConfusionCounts{1, 1, 1, 1}});
  std::string two = report_table(rows);
  CHECK(two.find("Perfect") < two.find("Second"));
  CHECK(report_table(rows) == report_table(rows));
}
