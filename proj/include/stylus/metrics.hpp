#pragma once

#include <optional>
#include <string>
#include <vector>

#include "stylus/common.hpp"

namespace stylus {

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  int64_t support = 0;  // actual positives
};

struct MetricsReport {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::vector<ClassMetrics> per_class;
  std::vector<std::vector<int64_t>> confusion;  // [actual][predicted]
  std::optional<double> perplexity;             // LM runs
  int64_t total = 0;
  std::vector<std::string> class_names;
};

// Per-class one-versus-all precision/recall/F1; macro-F1 is their unweighted
// mean. A class with zero predicted and zero actual positives scores F1 = 0.
MetricsReport metrics_from_confusion(const std::vector<std::vector<int64_t>>& confusion);
MetricsReport compute_metrics(const std::vector<int>& predictions, const std::vector<int>& labels,
                              int n_classes);

struct RunMeta {
  uint64_t config_hash = 0;
  uint64_t seed = 0;
  uint64_t data_fingerprint = 0;
  std::string arch;
  std::string task;  // e.g. "fragment-validation", "page-test"
};

std::string render_metrics(const MetricsReport& report, const RunMeta& meta);

}  // namespace stylus
