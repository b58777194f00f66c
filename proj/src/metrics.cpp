#include "stylus/metrics.hpp"

#include <sstream>

namespace stylus {

MetricsReport metrics_from_confusion(const std::vector<std::vector<int64_t>>& confusion) {
  size_t k = confusion.size();
  if (k == 0) fail(Errc::empty_input, "empty confusion matrix");
  for (const auto& row : confusion)
    if (row.size() != k) fail(Errc::config, "confusion matrix must be square");

  MetricsReport report;
  report.confusion = confusion;
  report.per_class.resize(k);

  int64_t correct = 0, total = 0;
  double f1_sum = 0.0;
  for (size_t c = 0; c < k; c++) {
    int64_t tp = confusion[c][c];
    int64_t fn = 0, fp = 0;
    for (size_t o = 0; o < k; o++) {
      if (o == c) continue;
      fn += confusion[c][o];
      fp += confusion[o][c];
    }
    ClassMetrics& m = report.per_class[c];
    m.support = tp + fn;
    m.precision = (tp + fp) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    m.recall = (tp + fn) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    m.f1 = (m.precision + m.recall) > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
                                          : 0.0;
    f1_sum += m.f1;
    correct += tp;
    for (size_t o = 0; o < k; o++) total += confusion[c][o];
  }
  report.total = total;
  report.accuracy = total > 0 ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
  report.macro_f1 = f1_sum / static_cast<double>(k);
  return report;
}

MetricsReport compute_metrics(const std::vector<int>& predictions, const std::vector<int>& labels,
                              int n_classes) {
  if (predictions.empty()) fail(Errc::empty_input, "no predictions to score");
  if (predictions.size() != labels.size())
    fail(Errc::config, "prediction and label counts differ");
  if (n_classes < 1) fail(Errc::config, "n_classes must be positive");

  std::vector<std::vector<int64_t>> confusion(
      static_cast<size_t>(n_classes), std::vector<int64_t>(static_cast<size_t>(n_classes), 0));
  for (size_t i = 0; i < predictions.size(); i++) {
    int p = predictions[i], a = labels[i];
    if (p < 0 || p >= n_classes || a < 0 || a >= n_classes)
      fail(Errc::config, "prediction or label outside [0, n_classes)");
    confusion[static_cast<size_t>(a)][static_cast<size_t>(p)]++;
  }
  return metrics_from_confusion(confusion);
}

std::string render_metrics(const MetricsReport& report, const RunMeta& meta) {
  std::ostringstream out;
  out << "# stylus metrics report\n";
  out << "config_hash = " << hex64(meta.config_hash) << '\n';
  out << "seed = " << meta.seed << '\n';
  out << "data_fingerprint = " << hex64(meta.data_fingerprint) << '\n';
  if (!meta.arch.empty()) out << "arch = " << meta.arch << '\n';
  if (!meta.task.empty()) out << "task = " << meta.task << '\n';
  out << "n = " << report.total << '\n';
  out << "accuracy = " << dtos(report.accuracy) << '\n';
  out << "macro_f1 = " << dtos(report.macro_f1) << '\n';
  if (report.perplexity) out << "perplexity = " << dtos(*report.perplexity) << '\n';

  auto class_name = [&](size_t c) {
    return c < report.class_names.size() ? report.class_names[c] : "class" + std::to_string(c);
  };
  for (size_t c = 0; c < report.per_class.size(); c++) {
    const ClassMetrics& m = report.per_class[c];
    out << "class " << class_name(c) << " precision = " << dtos(m.precision)
        << " recall = " << dtos(m.recall) << " f1 = " << dtos(m.f1) << " support = " << m.support
        << '\n';
  }
  for (size_t a = 0; a < report.confusion.size(); a++) {
    out << "confusion " << class_name(a) << " :";
    for (int64_t v : report.confusion[a]) out << ' ' << v;
    out << '\n';
  }
  return out.str();
}

}  // namespace stylus
