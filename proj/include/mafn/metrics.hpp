#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace mafn {

inline constexpr std::array<double, 5> kPrecisionThresholds = {0.5, 0.6, 0.7, 0.8, 0.9};

struct MetricsReport {
  double oiou = 0.0;
  double miou = 0.0;
  std::array<double, 5> precision_at = {0, 0, 0, 0, 0};
  int sample_count = 0;
};

// IoU of two binary masks; the empty-vs-empty case counts as 1
double binary_iou(const std::vector<uint8_t>& a, const std::vector<uint8_t>& b);

MetricsReport compute_metrics(const std::vector<std::vector<uint8_t>>& predictions,
                              const std::vector<std::vector<uint8_t>>& truths);

// printed table, columns in P@0.5..P@0.9, oIoU, mIoU order
std::string metrics_table(const MetricsReport& r);

// CSV row matching kMetricsCsvHeader
extern const char* const kMetricsCsvHeader;  // epoch,oIoU,mIoU,P@0.5,...,P@0.9
std::string metrics_csv_row(int epoch, const MetricsReport& r);

}  // namespace mafn
