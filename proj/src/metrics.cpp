#include "floodcpf/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace floodcpf {

void accumulate(ConfusionCounts& counts, const unsigned char* pred,
                const unsigned char* truth, i64 n) {
  check(n >= 0, "accumulate: negative length");
  for (i64 i = 0; i < n; ++i) {
    const unsigned char p = pred[i], t = truth[i];
    check(p <= 1 && t <= 1, "accumulate: masks must be binary");
    if (p && t)
      ++counts.tp;
    else if (p && !t)
      ++counts.fp;
    else if (!p && t)
      ++counts.fn;
    else
      ++counts.tn;
  }
}

void accumulate(ConfusionCounts& counts,
                const std::vector<unsigned char>& pred,
                const std::vector<unsigned char>& truth) {
  check(pred.size() == truth.size(), "accumulate: mask extents differ");
  accumulate(counts, pred.data(), truth.data(),
             static_cast<i64>(pred.size()));
}

double iou(const ConfusionCounts& c) {
  const i64 denom = c.tp + c.fp + c.fn;
  if (denom == 0) return 1.0;  // vacuous agreement: nothing flooded anywhere
  return static_cast<double>(c.tp) / static_cast<double>(denom);
}

double csi(const ConfusionCounts& c) { return iou(c); }

double f1(const ConfusionCounts& c) {
  const i64 denom = 2 * c.tp + c.fp + c.fn;
  if (denom == 0) return 1.0;
  return static_cast<double>(2 * c.tp) / static_cast<double>(denom);
}

double oa(const ConfusionCounts& c) {
  check(c.total() > 0, "oa: no evaluated pixels");
  return static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
}

std::string format_percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", fraction * 100.0);
  return buf;
}

namespace {

struct RowText {
  std::string method, iou_s, csi_s, f1_s, oa_s;
  ConfusionCounts counts;
};

RowText row_text(const MetricRow& r) {
  return {r.method, format_percent(iou(r.counts)), format_percent(csi(r.counts)),
          format_percent(f1(r.counts)), format_percent(oa(r.counts)), r.counts};
}

}  // namespace

std::string report_csv(const std::vector<MetricRow>& rows) {
  std::ostringstream os;
  os << "method,iou,csi,f1,oa,tp,fp,fn,tn\n";
  for (const MetricRow& r : rows) {
    const RowText t = row_text(r);
    os << t.method << ',' << t.iou_s << ',' << t.csi_s << ',' << t.f1_s << ','
       << t.oa_s << ',' << t.counts.tp << ',' << t.counts.fp << ','
       << t.counts.fn << ',' << t.counts.tn << '\n';
  }
  return os.str();
}

std::string report_table(const std::vector<MetricRow>& rows) {
  size_t name_w = std::string("Method").size();
  for (const MetricRow& r : rows) name_w = std::max(name_w, r.method.size());
  std::ostringstream os;
  os << "Method" << std::string(name_w - 6, ' ');
  for (const char* col : {"IoU", "CSI", "F1", "OA"}) {
    std::string c(col);
    os << "  " << std::string(6 - c.size(), ' ') << c;
  }
  os << '\n';
  for (const MetricRow& r : rows) {
    const RowText t = row_text(r);
    os << r.method << std::string(name_w - r.method.size(), ' ');
    for (const std::string& v : {t.iou_s, t.csi_s, t.f1_s, t.oa_s})
      os << "  " << std::string(v.size() < 6 ? 6 - v.size() : 0, ' ') << v;
    os << '\n';
  }
  return os.str();
}

}  // namespace floodcpf
