#pragma once

#include <string>
#include <vector>

#include "floodcpf/common.hpp"

namespace floodcpf {

struct ConfusionCounts {
  i64 tp = 0;
  i64 fp = 0;
  i64 fn = 0;
  i64 tn = 0;

  i64 total() const { return tp + fp + fn + tn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
};

// Pixelwise confusion update; values must be {0,1}.
void accumulate(ConfusionCounts& counts, const unsigned char* pred,
                const unsigned char* truth, i64 n);
void accumulate(ConfusionCounts& counts,
                const std::vector<unsigned char>& pred,
                const std::vector<unsigned char>& truth);

// tp/(tp+fp+fn); 1 when the union is empty.
double iou(const ConfusionCounts& c);
// Same quantity as iou under its forecasting-community name; identical value.
double csi(const ConfusionCounts& c);
// 2tp/(2tp+fp+fn); 1 when the denominator is empty.
double f1(const ConfusionCounts& c);
// (tp+tn)/total; requires at least one evaluated pixel.
double oa(const ConfusionCounts& c);

struct MetricRow {
  std::string method;
  ConfusionCounts counts;
};

// One-decimal percent, the presentation used by every report surface.
std::string format_percent(double fraction);

// CSV: method,iou,csi,f1,oa,tp,fp,fn,tn with percent-formatted metrics.
std::string report_csv(const std::vector<MetricRow>& rows);
// Aligned text table with the same values.
std::string report_table(const std::vector<MetricRow>& rows);

}  // namespace floodcpf
