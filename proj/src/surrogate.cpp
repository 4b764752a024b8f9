#include "simgen/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "json_support.hpp"

namespace simgen {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kMinHessian = 1e-12;
constexpr double kMinSplitGain = 1e-12;

double clamp_value(double v, double lo, double hi) { return std::min(std::max(v, lo), hi); }

double leaf_value(double g, double h, double lo, double hi) {
  if (!(h > 0.0)) return clamp_value(0.0, lo, hi);
  return clamp_value(g / h, lo, hi);
}

/// Twice the second-order loss reduction of a leaf holding gradient sum `g`
/// and hessian sum `h`; equals g^2/h when the optimum lies inside [lo, hi].
double leaf_score(double g, double h, double lo, double hi) {
  const double v = g / h;
  if (v >= lo && v <= hi) return g * g / h;
  const double c = clamp_value(v, lo, hi);
  return 2.0 * g * c - h * c * c;
}

struct ScanResult {
  double threshold = 0.0;
  double gain = -kInf;
};

/// Scans one feature whose values `xs` are sorted ascending, with matching
/// gradients and hessians.
std::optional<ScanResult> scan_sorted(std::span<const double> xs, std::span<const double> gs,
                                      std::span<const double> hs, int min_leaf, int constraint, double lo,
                                      double hi) {
  const std::size_t n = xs.size();
  double g_total = 0.0;
  double h_total = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    g_total += gs[k];
    h_total += hs[k];
  }
  const double parent = leaf_score(g_total, h_total, lo, hi);
  const auto leaf = static_cast<std::size_t>(std::max(min_leaf, 1));

  std::optional<ScanResult> best;
  double gl = 0.0;
  double hl = 0.0;
  for (std::size_t k = 0; k + 1 < n; ++k) {
    gl += gs[k];
    hl += hs[k];
    const std::size_t n_left = k + 1;
    if (n_left < leaf) continue;
    if (n - n_left < leaf) break;
    if (!(xs[k] < xs[k + 1])) continue;
    const double gr = g_total - gl;
    const double hr = h_total - hl;
    if (hl < kMinHessian || hr < kMinHessian) continue;
    if (constraint != 0) {
      const double vl = leaf_value(gl, hl, lo, hi);
      const double vr = leaf_value(gr, hr, lo, hi);
      if ((constraint > 0 && vl > vr) || (constraint < 0 && vl < vr)) continue;
    }
    const double gain = leaf_score(gl, hl, lo, hi) + leaf_score(gr, hr, lo, hi) - parent;
    if (!best || gain > best->gain) {
      double t = 0.5 * (xs[k] + xs[k + 1]);
      if (!(t < xs[k + 1])) t = xs[k];
      best = ScanResult{t, gain};
    }
  }
  return best;
}

class TreeBuilder {
 public:
  TreeBuilder(const Eigen::MatrixXd& x, const std::vector<double>& g, const std::vector<double>& h,
              const GbdtConfig& cfg, const std::vector<int>& monotone, const std::vector<std::uint8_t>& usable, Exec exec)
      : x_(x), g_(g), h_(h), cfg_(cfg), monotone_(monotone), usable_(usable), exec_(exec) {}

  RegressionTree build(std::vector<int> rows) {
    tree_.nodes.clear();
    tree_.max_depth = cfg_.max_depth;
    grow(std::move(rows), 0, -kInf, kInf);
    return std::move(tree_);
  }

 private:
  struct FeatureBest {
    std::optional<ScanResult> split;
  };

  int grow(std::vector<int> rows, int depth, double lo, double hi) {
    double g_sum = 0.0;
    double h_sum = 0.0;
    for (int r : rows) {
      g_sum += g_[static_cast<std::size_t>(r)];
      h_sum += h_[static_cast<std::size_t>(r)];
    }
    const int id = static_cast<int>(tree_.nodes.size());
    tree_.nodes.push_back(TreeNode{-1, 0.0, -1, -1, leaf_value(g_sum, h_sum, lo, hi)});
    if (depth >= cfg_.max_depth || rows.size() < 2 * static_cast<std::size_t>(cfg_.min_samples_leaf)) return id;

    const auto n_features = static_cast<int>(x_.cols());
    std::vector<FeatureBest> per_feature(static_cast<std::size_t>(n_features));
#pragma omp parallel for schedule(static) if (exec_ == Exec::parallel)
    for (int f = 0; f < n_features; ++f) {
      if (!usable_[static_cast<std::size_t>(f)]) continue;
      per_feature[static_cast<std::size_t>(f)].split = scan_feature(rows, f, lo, hi);
    }

    // Fixed total order: highest gain, then lowest feature index.
    int best_f = -1;
    ScanResult best;
    for (int f = 0; f < n_features; ++f) {
      const auto& s = per_feature[static_cast<std::size_t>(f)].split;
      if (s && s->gain > best.gain) {
        best = *s;
        best_f = f;
      }
    }
    if (best_f < 0 || !(best.gain > kMinSplitGain)) return id;

    std::vector<int> left;
    std::vector<int> right;
    double gl = 0.0, hl = 0.0, gr = 0.0, hr = 0.0;
    for (int r : rows) {
      const auto ri = static_cast<std::size_t>(r);
      if (x_(r, best_f) <= best.threshold) {
        left.push_back(r);
        gl += g_[ri];
        hl += h_[ri];
      } else {
        right.push_back(r);
        gr += g_[ri];
        hr += h_[ri];
      }
    }
    double left_lo = lo, left_hi = hi, right_lo = lo, right_hi = hi;
    const int c = monotone_[static_cast<std::size_t>(best_f)];
    if (c != 0) {
      const double mid = 0.5 * (leaf_value(gl, hl, lo, hi) + leaf_value(gr, hr, lo, hi));
      if (c > 0) {
        left_hi = mid;
        right_lo = mid;
      } else {
        left_lo = mid;
        right_hi = mid;
      }
    }
    rows.clear();
    rows.shrink_to_fit();

    tree_.nodes[static_cast<std::size_t>(id)].feature = best_f;
    tree_.nodes[static_cast<std::size_t>(id)].threshold = best.threshold;
    const int l = grow(std::move(left), depth + 1, left_lo, left_hi);
    const int r = grow(std::move(right), depth + 1, right_lo, right_hi);
    tree_.nodes[static_cast<std::size_t>(id)].left = l;
    tree_.nodes[static_cast<std::size_t>(id)].right = r;
    tree_.nodes[static_cast<std::size_t>(id)].value = 0.0;
    return id;
  }

  std::optional<ScanResult> scan_feature(const std::vector<int>& rows, int f, double lo, double hi) const {
    std::vector<int> order(rows);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return x_(a, f) < x_(b, f); });
    std::vector<double> xs(order.size()), gs(order.size()), hs(order.size());
    for (std::size_t k = 0; k < order.size(); ++k) {
      const auto r = static_cast<std::size_t>(order[k]);
      xs[k] = x_(order[k], f);
      gs[k] = g_[r];
      hs[k] = h_[r];
    }
    return scan_sorted(xs, gs, hs, cfg_.min_samples_leaf, monotone_[static_cast<std::size_t>(f)], lo, hi);
  }

  const Eigen::MatrixXd& x_;
  const std::vector<double>& g_;
  const std::vector<double>& h_;
  const GbdtConfig& cfg_;
  const std::vector<int>& monotone_;
  const std::vector<std::uint8_t>& usable_;
  Exec exec_;
  RegressionTree tree_;
};

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double training_loss(Task task, const std::vector<double>& score, const Eigen::VectorXd& y) {
  double total = 0.0;
  for (std::size_t i = 0; i < score.size(); ++i) {
    const double yi = y[static_cast<Eigen::Index>(i)];
    if (task == Task::binary) {
      total += softplus(score[i]) - yi * score[i];
    } else {
      const double r = yi - score[i];
      total += r * r;
    }
  }
  return total / static_cast<double>(score.size());
}

}  // namespace

double logistic(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void GbdtConfig::validate() const {
  if (n_trees < 1) throw ConfigError("surrogate: n_trees must be >= 1");
  if (max_depth < 1) throw ConfigError("surrogate: max_depth must be >= 1");
  if (!(learning_rate > 0.0 && learning_rate <= 1.0)) throw ConfigError("surrogate: learning_rate must be in (0,1]");
  if (min_samples_leaf < 1) throw ConfigError("surrogate: min_samples_leaf must be >= 1");
  if (!(subsample > 0.0 && subsample <= 1.0)) throw ConfigError("surrogate: subsample must be in (0,1]");
  for (const auto& [name, c] : monotone) {
    if (c != -1 && c != 0 && c != 1) throw ConfigError("surrogate: monotone constraint for '" + name + "' must be -1, 0 or 1");
  }
}

double RegressionTree::eval(std::span<const double> features) const {
  std::size_t i = 0;
  while (!nodes[i].is_leaf()) {
    const auto& n = nodes[i];
    i = static_cast<std::size_t>(features[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
  }
  return nodes[i].value;
}

int RegressionTree::depth() const {
  if (nodes.empty()) return 0;
  std::vector<int> d(nodes.size(), 0);
  int best = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    best = std::max(best, d[i]);
    if (!nodes[i].is_leaf()) {
      d[static_cast<std::size_t>(nodes[i].left)] = d[i] + 1;
      d[static_cast<std::size_t>(nodes[i].right)] = d[i] + 1;
    }
  }
  return best;
}

std::optional<SplitCandidate> best_split(std::span<const double> feature, std::span<const double> gradients,
                                         std::span<const double> hessians, int min_leaf) {
  if (feature.size() != gradients.size() || feature.size() != hessians.size()) {
    throw Error("best_split: length mismatch");
  }
  if (min_leaf < 1) throw Error("best_split: min_leaf must be >= 1");
  std::vector<std::size_t> order(feature.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return feature[a] < feature[b]; });
  std::vector<double> xs, gs, hs;
  for (auto i : order) {
    xs.push_back(feature[i]);
    gs.push_back(gradients[i]);
    hs.push_back(hessians[i]);
  }
  auto r = scan_sorted(xs, gs, hs, min_leaf, 0, -kInf, kInf);
  if (!r) return std::nullopt;
  return SplitCandidate{r->threshold, r->gain};
}

double SurrogateModel::raw_score(std::span<const double> features) const {
  if (features.size() != feature_count) {
    throw SchemaError("surrogate expects " + std::to_string(feature_count) + " features, got " +
                      std::to_string(features.size()));
  }
  double s = 0.0;
  for (const auto& t : trees) s += t.eval(features);
  return base_score + learning_rate * s;
}

double SurrogateModel::predict(std::span<const double> features) const {
  const double s = raw_score(features);
  return task == Task::binary ? logistic(s) : s;
}

Eigen::VectorXd SurrogateModel::predict(const Eigen::MatrixXd& features, Exec exec) const {
  if (static_cast<std::size_t>(features.cols()) != feature_count) {
    throw SchemaError("surrogate expects " + std::to_string(feature_count) + " features, got " +
                      std::to_string(features.cols()));
  }
  const Eigen::Index n = features.rows();
  Eigen::VectorXd out(n);
#pragma omp parallel if (exec == Exec::parallel)
  {
    std::vector<double> row(feature_count);
#pragma omp for schedule(static)
    for (Eigen::Index i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < feature_count; ++j) row[j] = features(i, static_cast<Eigen::Index>(j));
      out[i] = predict(row);
    }
  }
  return out;
}

double SurrogateModel::predict_raw(std::span<const double> params) const {
  if (params.size() != space.size()) {
    throw SchemaError("surrogate expects " + std::to_string(space.size()) + " parameters, got " +
                      std::to_string(params.size()));
  }
  std::vector<double> features(space.feature_count());
  space.derive_row(params, features);
  return predict(features);
}

Eigen::VectorXd SurrogateModel::predict_raw(const Eigen::MatrixXd& params, Exec exec) const {
  if (static_cast<std::size_t>(params.cols()) != space.size()) {
    throw SchemaError("surrogate expects " + std::to_string(space.size()) + " parameters, got " +
                      std::to_string(params.cols()));
  }
  const Eigen::Index n = params.rows();
  Eigen::VectorXd out(n);
#pragma omp parallel if (exec == Exec::parallel)
  {
    std::vector<double> raw(space.size());
#pragma omp for schedule(static)
    for (Eigen::Index i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < raw.size(); ++j) raw[j] = params(i, static_cast<Eigen::Index>(j));
      out[i] = predict_raw(raw);
    }
  }
  return out;
}

double SurrogateModel::unit_outcome(double prediction) const {
  if (task == Task::binary) return prediction;
  const double w = outcome_range.width();
  if (!(w > 0.0)) return 0.5;
  return std::clamp((prediction - outcome_range.lo) / w, 0.0, 1.0);
}

SurrogateModel fit(const Dataset& train, const GbdtConfig& cfg, Task task, std::vector<double>* loss_trace,
                   Exec exec) {
  cfg.validate();
  train.validate();
  if (train.size() == 0) throw Error("fit: empty training set");
  if (train.standardized || train.cols() != train.space.size()) {
    throw Error("fit: expects raw parameter columns only");
  }
  const Eigen::VectorXd& y = train.outcomes;
  const auto n = static_cast<std::size_t>(y.size());

  SurrogateModel model;
  model.task = task;
  model.learning_rate = cfg.learning_rate;
  model.space = train.space;
  model.feature_names = train.space.feature_names();
  model.feature_count = model.feature_names.size();
  model.config = cfg;
  model.scaling = fit_scaling(train);
  for (Eigen::Index j = 0; j < train.rows.cols(); ++j) {
    model.train_ranges.push_back({train.rows.col(j).minCoeff(), train.rows.col(j).maxCoeff()});
  }
  model.outcome_range = {y.minCoeff(), y.maxCoeff()};

  if (task == Task::binary) {
    for (std::size_t i = 0; i < n; ++i) {
      const double v = y[static_cast<Eigen::Index>(i)];
      if (v != 0.0 && v != 1.0) throw Error("fit: binary task requires outcomes in {0,1}");
    }
    const double pos = y.mean();
    if (pos <= 0.0 || pos >= 1.0) throw Error("fit: binary task requires both classes");
    model.base_score = std::log(pos / (1.0 - pos));
  } else {
    model.base_score = y.mean();
  }

  std::vector<int> monotone(model.feature_count, 0);
  for (const auto& [name, c] : cfg.monotone) {
    auto it = std::find(model.feature_names.begin(), model.feature_names.end(), name);
    if (it == model.feature_names.end()) throw ConfigError("surrogate: monotone constraint on unknown feature '" + name + "'");
    monotone[static_cast<std::size_t>(it - model.feature_names.begin())] = c;
  }
  std::vector<std::uint8_t> usable(model.feature_count, 1);
  for (const auto& name : cfg.ignore) {
    auto it = std::find(model.feature_names.begin(), model.feature_names.end(), name);
    if (it == model.feature_names.end()) throw ConfigError("surrogate: ignored feature '" + name + "' is unknown");
    usable[static_cast<std::size_t>(it - model.feature_names.begin())] = 0;
  }

  const Eigen::MatrixXd x = derive_features(train).rows;
  std::vector<double> score(n, model.base_score);
  std::vector<double> g(n), h(n);
  if (loss_trace) {
    loss_trace->clear();
    loss_trace->push_back(training_loss(task, score, y));
  }

  const auto sample_size =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(cfg.subsample * static_cast<double>(n))));
  std::vector<int> all(n);
  std::iota(all.begin(), all.end(), 0);
  std::vector<double> row(model.feature_count);

  for (int t = 0; t < cfg.n_trees; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      const double yi = y[static_cast<Eigen::Index>(i)];
      if (task == Task::binary) {
        const double p = logistic(score[i]);
        g[i] = yi - p;
        h[i] = p * (1.0 - p);
      } else {
        g[i] = yi - score[i];
        h[i] = 1.0;
      }
    }
    std::vector<int> rows = all;
    if (sample_size < n) {
      std::mt19937_64 rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(t)));
      std::shuffle(rows.begin(), rows.end(), rng);
      rows.resize(sample_size);
      std::sort(rows.begin(), rows.end());
    }
    TreeBuilder builder(x, g, h, cfg, monotone, usable, exec);
    model.trees.push_back(builder.build(std::move(rows)));
    const auto& tree = model.trees.back();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < model.feature_count; ++j) {
        row[j] = x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      }
      score[i] += cfg.learning_rate * tree.eval(row);
    }
    if (loss_trace) loss_trace->push_back(training_loss(task, score, y));
  }
  return model;
}

std::string serialize_model(const SurrogateModel& m) {
  using detail::json;
  json trees = json::array();
  for (const auto& t : m.trees) {
    json nodes = json::array();
    for (const auto& n : t.nodes) {
      if (n.is_leaf()) {
        nodes.push_back({{"value", n.value}});
      } else {
        nodes.push_back({{"feature", n.feature}, {"threshold", n.threshold}, {"left", n.left}, {"right", n.right}});
      }
    }
    trees.push_back({{"max_depth", t.max_depth}, {"nodes", nodes}});
  }
  json ranges = json::array();
  for (const auto& r : m.train_ranges) ranges.push_back({r.lo, r.hi});
  json cfg = {{"n_trees", m.config.n_trees},         {"max_depth", m.config.max_depth},
              {"learning_rate", m.config.learning_rate}, {"min_samples_leaf", m.config.min_samples_leaf},
              {"subsample", m.config.subsample},     {"seed", m.config.seed},
              {"monotone", m.config.monotone},       {"ignore", m.config.ignore}};
  json doc = {{"format", "simgen-surrogate"},
              {"version", 1},
              {"task", to_string(m.task)},
              {"base_score", m.base_score},
              {"learning_rate", m.learning_rate},
              {"feature_count", m.feature_count},
              {"feature_names", m.feature_names},
              {"space", detail::space_to_json(m.space)},
              {"scaling", detail::scaling_to_json(m.scaling)},
              {"train_ranges", ranges},
              {"outcome_range", {m.outcome_range.lo, m.outcome_range.hi}},
              {"config", cfg},
              {"trees", trees}};
  return doc.dump(1) + "\n";
}

SurrogateModel deserialize_model(const std::string& text) {
  using detail::json;
  using detail::require_key;
  try {
    const json doc = json::parse(text);
    if (doc.value("format", std::string{}) != "simgen-surrogate") throw SchemaError("not a surrogate model document");
    if (require_key(doc, "version", "model").get<int>() != 1) throw SchemaError("unsupported surrogate model version");
    SurrogateModel m;
    m.task = task_from_string(require_key(doc, "task", "model").get<std::string>());
    m.base_score = require_key(doc, "base_score", "model").get<double>();
    m.learning_rate = require_key(doc, "learning_rate", "model").get<double>();
    m.feature_count = require_key(doc, "feature_count", "model").get<std::size_t>();
    m.feature_names = require_key(doc, "feature_names", "model").get<std::vector<std::string>>();
    m.space = detail::space_from_json(require_key(doc, "space", "model"));
    m.scaling = detail::scaling_from_json(require_key(doc, "scaling", "model"));
    for (const auto& r : require_key(doc, "train_ranges", "model")) m.train_ranges.push_back({r[0], r[1]});
    const auto& orange = require_key(doc, "outcome_range", "model");
    m.outcome_range = {orange[0], orange[1]};
    const auto& cfg = require_key(doc, "config", "model");
    m.config.n_trees = cfg.at("n_trees");
    m.config.max_depth = cfg.at("max_depth");
    m.config.learning_rate = cfg.at("learning_rate");
    m.config.min_samples_leaf = cfg.at("min_samples_leaf");
    m.config.subsample = cfg.at("subsample");
    m.config.seed = cfg.at("seed");
    m.config.monotone = cfg.at("monotone").get<std::map<std::string, int>>();
    m.config.ignore = cfg.at("ignore").get<std::vector<std::string>>();
    for (const auto& t : require_key(doc, "trees", "model")) {
      RegressionTree tree;
      tree.max_depth = t.at("max_depth");
      for (const auto& n : t.at("nodes")) {
        TreeNode node;
        if (n.contains("value")) {
          node.value = n.at("value");
        } else {
          node.feature = n.at("feature");
          node.threshold = n.at("threshold");
          node.left = n.at("left");
          node.right = n.at("right");
        }
        tree.nodes.push_back(node);
      }
      for (const auto& node : tree.nodes) {
        if (node.is_leaf()) continue;
        if (static_cast<std::size_t>(node.feature) >= m.feature_count) throw SchemaError("tree split feature out of range");
        if (node.left < 0 || node.right < 0 || static_cast<std::size_t>(node.left) >= tree.nodes.size() ||
            static_cast<std::size_t>(node.right) >= tree.nodes.size()) {
          throw SchemaError("tree child index out of range");
        }
      }
      if (tree.nodes.empty()) throw SchemaError("empty tree");
      m.trees.push_back(std::move(tree));
    }
    if (m.feature_count != m.space.feature_count()) throw SchemaError("feature_count does not match parameter space");
    return m;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("surrogate model: ") + e.what());
  }
}

}  // namespace simgen
