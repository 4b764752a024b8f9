#include "simgen/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json_support.hpp"

namespace simgen {

namespace {

double f1(long tp, long fp, long fn) {
  const long denom = 2 * tp + fp + fn;
  if (denom == 0) return 1.0;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

void check_lengths(std::size_t a, std::size_t b) {
  if (a != b) throw Error("metrics: prediction and target lengths differ");
  if (a == 0) throw Error("metrics: empty input");
}

}  // namespace

Confusion confusion_at(std::span<const double> scores, std::span<const double> labels, double threshold) {
  check_lengths(scores.size(), labels.size());
  Confusion c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    const bool actual = labels[i] == 1.0;
    if (predicted && actual) ++c.tp;
    else if (predicted) ++c.fp;
    else if (actual) ++c.fn;
    else ++c.tn;
  }
  return c;
}

double macro_f1(const Confusion& c) { return 0.5 * (f1(c.tp, c.fp, c.fn) + f1(c.tn, c.fn, c.fp)); }

double accuracy(const Confusion& c) {
  if (c.total() == 0) throw Error("metrics: empty confusion matrix");
  return static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
}

double roc_auc(std::span<const double> scores, std::span<const double> labels) {
  check_lengths(scores.size(), labels.size());
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });

  // Average ranks over tie groups; positives' rank sum gives U.
  double rank_sum_pos = 0.0;
  double n_pos = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[order[k]] == 1.0) {
        rank_sum_pos += avg_rank;
        n_pos += 1.0;
      }
    }
    i = j + 1;
  }
  const double n_neg = static_cast<double>(n) - n_pos;
  if (n_pos == 0.0 || n_neg == 0.0) throw Error("roc_auc: both classes must be present");
  return (rank_sum_pos - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

Metrics binary_metrics(std::span<const double> scores, std::span<const double> labels) {
  Metrics m;
  m.task = Task::binary;
  m.count = scores.size();
  const auto c = confusion_at(scores, labels, kDecisionThreshold);
  m.confusion = c;
  m.accuracy = accuracy(c);
  m.macro_f1 = macro_f1(c);
  try {
    m.roc_auc = roc_auc(scores, labels);
  } catch (const Error& e) {
    m.errors.emplace_back(std::string("roc_auc: ") + e.what());
  }
  return m;
}

Metrics regression_metrics(std::span<const double> pred, std::span<const double> target) {
  check_lengths(pred.size(), target.size());
  Metrics m;
  m.task = Task::regression;
  m.count = pred.size();
  const double n = static_cast<double>(pred.size());
  double sse = 0.0;
  double sae = 0.0;
  double mean = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double r = target[i] - pred[i];
    sse += r * r;
    sae += std::abs(r);
    mean += target[i];
  }
  mean /= n;
  double sst = 0.0;
  for (double t : target) sst += (t - mean) * (t - mean);
  m.mse = sse / n;
  m.rmse = std::sqrt(*m.mse);
  m.mae = sae / n;
  if (sst > 0.0) {
    m.r2 = 1.0 - sse / sst;
  } else {
    m.errors.emplace_back("r2: target variance is zero");
  }
  return m;
}

Metrics evaluate_binary(const SurrogateModel& model, const Dataset& ds) {
  if (model.task != Task::binary) throw Error("evaluate_binary: model is not a binary classifier");
  ds.validate();
  for (Eigen::Index i = 0; i < ds.outcomes.size(); ++i) {
    if (ds.outcomes[i] != 0.0 && ds.outcomes[i] != 1.0) throw Error("evaluate_binary: outcomes must be 0 or 1");
  }
  const Eigen::VectorXd scores = model.predict_raw(ds.rows);
  return binary_metrics({scores.data(), static_cast<std::size_t>(scores.size())},
                        {ds.outcomes.data(), static_cast<std::size_t>(ds.outcomes.size())});
}

Metrics evaluate_regression(const SurrogateModel& model, const Dataset& ds) {
  ds.validate();
  const Eigen::VectorXd pred = model.predict_raw(ds.rows);
  return regression_metrics({pred.data(), static_cast<std::size_t>(pred.size())},
                            {ds.outcomes.data(), static_cast<std::size_t>(ds.outcomes.size())});
}

std::string metrics_to_json(const Metrics& m, const std::string& split_name) {
  using detail::json;
  json doc = {{"task", to_string(m.task)}, {"split", split_name}, {"count", m.count}};
  if (m.confusion) {
    doc["confusion"] = {{"tp", m.confusion->tp}, {"tn", m.confusion->tn}, {"fp", m.confusion->fp}, {"fn", m.confusion->fn}};
    doc["threshold"] = kDecisionThreshold;
  }
  auto put = [&](const char* key, const std::optional<double>& v) {
    if (v) doc[key] = round_text(*v);
  };
  put("roc_auc", m.roc_auc);
  put("macro_f1", m.macro_f1);
  put("accuracy", m.accuracy);
  put("r2", m.r2);
  put("mse", m.mse);
  put("rmse", m.rmse);
  put("mae", m.mae);
  if (!m.errors.empty()) doc["errors"] = m.errors;
  return doc.dump(2) + "\n";
}

}  // namespace simgen
