#include "mafn/metrics.hpp"

#include <cstdio>
#include <stdexcept>

namespace mafn {

const char* const kMetricsCsvHeader = "epoch,oIoU,mIoU,P@0.5,P@0.6,P@0.7,P@0.8,P@0.9";

double binary_iou(const std::vector<uint8_t>& a, const std::vector<uint8_t>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("binary_iou: size mismatch");
  int64_t inter = 0, uni = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    inter += (a[i] && b[i]);
    uni += (a[i] || b[i]);
  }
  return uni == 0 ? 1.0 : double(inter) / double(uni);
}

MetricsReport compute_metrics(const std::vector<std::vector<uint8_t>>& predictions,
                              const std::vector<std::vector<uint8_t>>& truths) {
  if (predictions.size() != truths.size())
    throw std::invalid_argument("compute_metrics: prediction/truth count mismatch");
  MetricsReport r;
  r.sample_count = int(predictions.size());
  if (predictions.empty()) return r;

  int64_t inter_total = 0, union_total = 0;
  double iou_sum = 0;
  std::array<int, 5> hits = {0, 0, 0, 0, 0};
  for (size_t s = 0; s < predictions.size(); ++s) {
    const auto& p = predictions[s];
    const auto& t = truths[s];
    if (p.size() != t.size()) throw std::invalid_argument("compute_metrics: mask size mismatch");
    int64_t inter = 0, uni = 0;
    for (size_t i = 0; i < p.size(); ++i) {
      inter += (p[i] && t[i]);
      uni += (p[i] || t[i]);
    }
    inter_total += inter;
    union_total += uni;
    const double iou = uni == 0 ? 1.0 : double(inter) / double(uni);
    iou_sum += iou;
    for (size_t k = 0; k < kPrecisionThresholds.size(); ++k)
      if (iou >= kPrecisionThresholds[k]) ++hits[k];
  }
  r.oiou = union_total == 0 ? 1.0 : double(inter_total) / double(union_total);
  r.miou = iou_sum / double(predictions.size());
  for (size_t k = 0; k < hits.size(); ++k)
    r.precision_at[k] = double(hits[k]) / double(predictions.size());
  return r;
}

std::string metrics_table(const MetricsReport& r) {
  char line[256];
  std::string out = "  P@0.5   P@0.6   P@0.7   P@0.8   P@0.9    oIoU    mIoU  samples\n";
  std::snprintf(line, sizeof(line), "%7.4f %7.4f %7.4f %7.4f %7.4f %7.4f %7.4f %8d\n",
                r.precision_at[0], r.precision_at[1], r.precision_at[2], r.precision_at[3],
                r.precision_at[4], r.oiou, r.miou, r.sample_count);
  return out + line;
}

std::string metrics_csv_row(int epoch, const MetricsReport& r) {
  char line[256];
  std::snprintf(line, sizeof(line), "%d,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f", epoch, r.oiou,
                r.miou, r.precision_at[0], r.precision_at[1], r.precision_at[2],
                r.precision_at[3], r.precision_at[4]);
  return line;
}

}  // namespace mafn
