#include "simgen/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "json_support.hpp"

namespace simgen {

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

Eigen::Map<const Eigen::VectorXd> as_vector(std::span<const double> s) {
  return {s.data(), static_cast<Eigen::Index>(s.size())};
}

void clamp_log_std(Eigen::VectorXd& log_std) {
  log_std = log_std.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
}

}  // namespace

void PpoConfig::validate() const {
  if (!(clip_eps > 0.0 && clip_eps < 1.0)) throw ConfigError("ppo: clip_eps must lie in (0,1)");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("ppo: gamma must lie in [0,1]");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) throw ConfigError("ppo: gae_lambda must lie in [0,1]");
  if (!(learning_rate > 0.0)) throw ConfigError("ppo: learning_rate must be positive");
  if (rollout_size < 1) throw ConfigError("ppo: rollout_size must be >= 1");
  if (minibatch < 1) throw ConfigError("ppo: minibatch must be >= 1");
  if (epochs_per_update < 1) throw ConfigError("ppo: epochs_per_update must be >= 1");
  if (total_steps < rollout_size) throw ConfigError("ppo: total_steps must be >= rollout_size");
  if (hidden.empty()) throw ConfigError("ppo: at least one hidden layer is required");
  for (int h : hidden) {
    if (h < 1) throw ConfigError("ppo: hidden layer sizes must be positive");
  }
  if (!(log_std_init >= kLogStdMin && log_std_init <= kLogStdMax)) throw ConfigError("ppo: log_std_init out of range");
}

Eigen::VectorXd PolicyNetwork::mean(std::span<const double> state) const {
  return mean_net.forward(as_vector(state));
}

double ValueNetwork::operator()(std::span<const double> state) const { return net.forward(as_vector(state))(0, 0); }

PolicyNetwork make_policy(int dim, const std::vector<int>& hidden, double log_std_init, std::mt19937_64& rng) {
  std::vector<int> sizes{dim};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(dim);
  PolicyNetwork p;
  p.mean_net = nn::Mlp(sizes, rng, std::sqrt(2.0), 0.01);
  p.log_std = Eigen::VectorXd::Constant(dim, log_std_init);
  return p;
}

ValueNetwork make_value(int dim, const std::vector<int>& hidden, std::mt19937_64& rng) {
  std::vector<int> sizes{dim};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(1);
  return ValueNetwork{nn::Mlp(sizes, rng, std::sqrt(2.0), 1.0)};
}

double gaussian_log_density(std::span<const double> mean, std::span<const double> log_std,
                            std::span<const double> action) {
  double lp = 0.0;
  for (std::size_t d = 0; d < mean.size(); ++d) {
    const double z = (action[d] - mean[d]) / std::exp(log_std[d]);
    lp += -0.5 * z * z - log_std[d] - kHalfLog2Pi;
  }
  return lp;
}

ActionSample sample_action(const PolicyNetwork& policy, std::span<const double> state, std::mt19937_64& rng) {
  const Eigen::VectorXd mu = policy.mean(state);
  if (!mu.allFinite()) throw DivergenceError("policy produced a non-finite action mean");
  std::normal_distribution<double> normal(0.0, 1.0);
  ActionSample s;
  s.action.resize(mu.size());
  for (Eigen::Index d = 0; d < mu.size(); ++d) s.action[d] = mu[d] + std::exp(policy.log_std[d]) * normal(rng);
  s.log_prob = gaussian_log_density({mu.data(), static_cast<std::size_t>(mu.size())},
                                    {policy.log_std.data(), static_cast<std::size_t>(policy.log_std.size())},
                                    {s.action.data(), static_cast<std::size_t>(s.action.size())});
  return s;
}

double log_prob(const PolicyNetwork& policy, std::span<const double> state, std::span<const double> action) {
  const Eigen::VectorXd mu = policy.mean(state);
  if (action.size() != static_cast<std::size_t>(mu.size())) throw SchemaError("log_prob: action dimension mismatch");
  return gaussian_log_density({mu.data(), static_cast<std::size_t>(mu.size())},
                              {policy.log_std.data(), static_cast<std::size_t>(policy.log_std.size())}, action);
}

double entropy(const PolicyNetwork& policy) {
  return policy.log_std.sum() + static_cast<double>(policy.log_std.size()) * (0.5 + kHalfLog2Pi);
}

RolloutBatch collect_rollouts(GenEnvironment& env, const PolicyNetwork& policy, const ValueNetwork& value,
                              std::size_t n, std::mt19937_64& rng) {
  if (n < 1) throw Error("collect_rollouts: n must be >= 1");
  const auto dim = static_cast<Eigen::Index>(env.dim());
  if (policy.dim() != dim) throw SchemaError("collect_rollouts: policy and environment dimensions differ");
  const auto cols = static_cast<Eigen::Index>(n);
  RolloutBatch b;
  b.states.resize(dim, cols);
  b.actions.resize(dim, cols);
  b.log_probs.resize(cols);
  b.rewards.resize(cols);
  b.dones.assign(n, 0);

  Eigen::VectorXd state = env.reset();
  for (Eigen::Index i = 0; i < cols; ++i) {
    b.states.col(i) = state;
    auto sample = sample_action(policy, {state.data(), static_cast<std::size_t>(dim)}, rng);
    auto result = env.step({sample.action.data(), static_cast<std::size_t>(dim)});
    b.actions.col(i) = sample.action;
    b.log_probs[i] = sample.log_prob;
    b.rewards[i] = result.reward;
    b.dones[static_cast<std::size_t>(i)] = result.done ? 1 : 0;
    state = std::move(result.next_state);
  }
  b.values = value.net.forward(b.states).row(0).transpose();
  return b;
}

void compute_gae(RolloutBatch& batch, double gamma, double lambda, bool normalize, double bootstrap) {
  const auto n = static_cast<Eigen::Index>(batch.size());
  if (batch.values.size() != n || static_cast<Eigen::Index>(batch.dones.size()) != n) {
    throw SchemaError("compute_gae: rewards, values and dones must have equal length");
  }
  batch.advantages.resize(n);
  double next_adv = 0.0;
  double next_value = bootstrap;
  for (Eigen::Index t = n - 1; t >= 0; --t) {
    const double live = batch.dones[static_cast<std::size_t>(t)] ? 0.0 : 1.0;
    const double delta = batch.rewards[t] + gamma * next_value * live - batch.values[t];
    next_adv = delta + gamma * lambda * live * next_adv;
    batch.advantages[t] = next_adv;
    next_value = batch.values[t];
  }
  batch.returns = batch.advantages + batch.values;
  if (normalize && n > 0) {
    const double mean = batch.advantages.mean();
    batch.advantages.array() -= mean;
    const double sd = std::sqrt(batch.advantages.squaredNorm() / static_cast<double>(n));
    if (sd > 1e-12) batch.advantages /= sd;
  }
}

Eigen::VectorXd pack_parameters(const PolicyNetwork& policy, const ValueNetwork& value) {
  const std::size_t np = policy.mean_net.param_count();
  const auto ns = static_cast<std::size_t>(policy.log_std.size());
  const std::size_t nv = value.net.param_count();
  Eigen::VectorXd flat(static_cast<Eigen::Index>(np + ns + nv));
  policy.mean_net.read_params({flat.data(), np});
  std::copy(policy.log_std.data(), policy.log_std.data() + ns, flat.data() + np);
  value.net.read_params({flat.data() + np + ns, nv});
  return flat;
}

void unpack_parameters(const Eigen::VectorXd& flat, PolicyNetwork& policy, ValueNetwork& value) {
  const std::size_t np = policy.mean_net.param_count();
  const auto ns = static_cast<std::size_t>(policy.log_std.size());
  const std::size_t nv = value.net.param_count();
  if (static_cast<std::size_t>(flat.size()) != np + ns + nv) throw SchemaError("unpack_parameters: size mismatch");
  policy.mean_net.write_params({flat.data(), np});
  std::copy(flat.data() + np, flat.data() + np + ns, policy.log_std.data());
  value.net.write_params({flat.data() + np + ns, nv});
}

LossTerms ppo_loss(const PolicyNetwork& policy, const ValueNetwork& value, const RolloutBatch& batch,
                   std::span<const std::size_t> indices, const PpoConfig& cfg, Eigen::VectorXd* grad) {
  std::vector<Eigen::Index> idx;
  if (indices.empty()) {
    idx.resize(batch.size());
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  } else {
    idx.assign(indices.begin(), indices.end());
  }
  if (batch.advantages.size() != static_cast<Eigen::Index>(batch.size())) {
    throw Error("ppo_loss: advantages not computed");
  }
  const auto b = static_cast<Eigen::Index>(idx.size());
  const double inv_b = 1.0 / static_cast<double>(b);
  const Eigen::MatrixXd states = batch.states(Eigen::all, idx);
  const Eigen::MatrixXd actions = batch.actions(Eigen::all, idx);

  nn::Mlp::Cache pcache;
  nn::Mlp::Cache vcache;
  const Eigen::MatrixXd mean = policy.mean_net.forward(states, pcache);
  const Eigen::MatrixXd values = value.net.forward(states, vcache);
  const Eigen::ArrayXd inv_std = (-policy.log_std.array()).exp();

  // z = (a - mu) / sigma, per dimension and sample.
  const Eigen::ArrayXXd z = (actions - mean).array().colwise() * inv_std;
  const double log_norm = policy.log_std.sum() + static_cast<double>(policy.log_std.size()) * kHalfLog2Pi;

  Eigen::VectorXd dlp(b);  // d(total)/d(logp_j)
  LossTerms terms;
  double surrogate_sum = 0.0;
  double value_sum = 0.0;
  long clipped = 0;
  for (Eigen::Index j = 0; j < b; ++j) {
    const Eigen::Index i = idx[static_cast<std::size_t>(j)];
    const double lp = -0.5 * z.col(j).square().sum() - log_norm;
    const double ratio = std::exp(lp - batch.log_probs[i]);
    const double adv = batch.advantages[i];
    const double unclipped = ratio * adv;
    const double clipped_ratio = std::clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
    const double clipped_obj = clipped_ratio * adv;
    if (unclipped <= clipped_obj) {
      surrogate_sum += unclipped;
      dlp[j] = -inv_b * unclipped;
    } else {
      surrogate_sum += clipped_obj;
      dlp[j] = 0.0;
    }
    if (clipped_ratio != ratio) ++clipped;
    const double err = values(0, j) - batch.returns[i];
    value_sum += err * err;
  }
  terms.policy_loss = -surrogate_sum * inv_b;
  terms.value_loss = value_sum * inv_b;
  terms.entropy = entropy(policy);
  terms.total = terms.policy_loss + cfg.value_coef * terms.value_loss - cfg.entropy_coef * terms.entropy;
  terms.clip_fraction = static_cast<double>(clipped) * inv_b;
  if (!std::isfinite(terms.total)) throw DivergenceError("ppo_loss: non-finite loss");

  if (grad) {
    const std::size_t np = policy.mean_net.param_count();
    const auto ns = static_cast<std::size_t>(policy.log_std.size());
    const std::size_t nv = value.net.param_count();
    grad->setZero(static_cast<Eigen::Index>(np + ns + nv));

    // d logp / d mu = z / sigma ; d logp / d log_std = z^2 - 1.
    const Eigen::MatrixXd grad_mean = ((z.colwise() * inv_std).rowwise() * dlp.transpose().array()).matrix();
    policy.mean_net.backward(pcache, grad_mean, {grad->data(), np});
    Eigen::Map<Eigen::VectorXd> g_log_std(grad->data() + np, static_cast<Eigen::Index>(ns));
    g_log_std = ((z.square() - 1.0).rowwise() * dlp.transpose().array()).rowwise().sum().matrix();
    g_log_std.array() -= cfg.entropy_coef;

    Eigen::MatrixXd grad_value(1, b);
    for (Eigen::Index j = 0; j < b; ++j) {
      grad_value(0, j) = cfg.value_coef * 2.0 * inv_b * (values(0, j) - batch.returns[idx[static_cast<std::size_t>(j)]]);
    }
    value.net.backward(vcache, grad_value, {grad->data() + np + ns, nv});
  }
  return terms;
}

TrainResult train_agent(GenEnvironment& env, const PpoConfig& cfg) {
  cfg.validate();
  const int dim = static_cast<int>(env.dim());
  std::mt19937_64 init_rng(derive_seed(cfg.seed, 1));
  std::mt19937_64 rng(derive_seed(cfg.seed, 2));

  TrainResult result;
  PolicyBundle& bundle = result.bundle;
  bundle.config = cfg;
  bundle.policy = make_policy(dim, cfg.hidden, cfg.log_std_init, init_rng);
  bundle.value = make_value(dim, cfg.hidden, init_rng);
  Eigen::VectorXd params = pack_parameters(bundle.policy, bundle.value);
  bundle.optimizer = nn::Adam(static_cast<std::size_t>(params.size()), cfg.learning_rate);

  const long updates = cfg.total_steps / cfg.rollout_size;
  const auto n = static_cast<std::size_t>(cfg.rollout_size);
  const auto mb = static_cast<std::size_t>(cfg.minibatch);
  std::vector<std::size_t> order(n);
  Eigen::VectorXd grad;

  for (long u = 0; u < updates; ++u) {
    RolloutBatch batch = collect_rollouts(env, bundle.policy, bundle.value, n, rng);
    compute_gae(batch, cfg.gamma, cfg.gae_lambda, true);

    double policy_loss = 0.0;
    double value_loss = 0.0;
    long minibatches = 0;
    for (int epoch = 0; epoch < cfg.epochs_per_update; ++epoch) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::shuffle(order.begin(), order.end(), rng);
      const bool last_epoch = epoch + 1 == cfg.epochs_per_update;
      for (std::size_t start = 0; start < n; start += mb) {
        const std::size_t stop = std::min(n, start + mb);
        const std::span<const std::size_t> idx(order.data() + start, stop - start);
        const LossTerms terms = ppo_loss(bundle.policy, bundle.value, batch, idx, cfg, &grad);
        if (cfg.max_grad_norm > 0.0) {
          const double norm = grad.norm();
          if (norm > cfg.max_grad_norm) grad *= cfg.max_grad_norm / norm;
        }
        bundle.optimizer.step(params, grad);
        unpack_parameters(params, bundle.policy, bundle.value);
        clamp_log_std(bundle.policy.log_std);
        params = pack_parameters(bundle.policy, bundle.value);
        if (!params.allFinite()) {
          throw DivergenceError("train_agent: non-finite parameters after update " + std::to_string(u));
        }
        if (last_epoch) {
          policy_loss += terms.policy_loss;
          value_loss += terms.value_loss;
          ++minibatches;
        }
      }
    }
    CurvePoint point;
    point.step = (u + 1) * cfg.rollout_size;
    point.mean_reward = batch.rewards.mean();
    point.policy_loss = policy_loss / static_cast<double>(minibatches);
    point.value_loss = value_loss / static_cast<double>(minibatches);
    result.curve.push_back(point);
  }
  return result;
}

std::string curve_to_csv(const TrainingCurve& curve) {
  std::ostringstream out;
  out << "step,mean_reward,policy_loss,value_loss\n";
  for (const auto& p : curve) {
    out << p.step << ',' << format_real(p.mean_reward) << ',' << format_real(p.policy_loss) << ','
        << format_real(p.value_loss) << '\n';
  }
  return out.str();
}

namespace {

using detail::json;

json mlp_to_json(const nn::Mlp& mlp) {
  json layers = json::array();
  for (const auto& l : mlp.layers()) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < l.weight.rows(); ++i) {
      rows.push_back(std::vector<double>(l.weight.row(i).begin(), l.weight.row(i).end()));
    }
    layers.push_back({{"weight", rows}, {"bias", std::vector<double>(l.bias.begin(), l.bias.end())}});
  }
  return layers;
}

nn::Mlp mlp_from_json(const json& j) {
  std::vector<nn::DenseLayer> layers;
  for (const auto& l : j) {
    const auto rows = l.at("weight").get<std::vector<std::vector<double>>>();
    const auto bias = l.at("bias").get<std::vector<double>>();
    if (rows.empty() || rows.size() != bias.size()) throw SchemaError("policy: malformed layer");
    nn::DenseLayer layer;
    layer.weight.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != rows[0].size()) throw SchemaError("policy: ragged weight matrix");
      for (std::size_t k = 0; k < rows[i].size(); ++k) {
        layer.weight(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
      }
    }
    layer.bias = Eigen::Map<const Eigen::VectorXd>(bias.data(), static_cast<Eigen::Index>(bias.size()));
    if (!layers.empty() && layers.back().weight.rows() != layer.weight.cols()) {
      throw SchemaError("policy: layer sizes do not chain");
    }
    layers.push_back(std::move(layer));
  }
  if (layers.empty()) throw SchemaError("policy: network has no layers");
  return nn::Mlp(std::move(layers));
}

json ppo_config_to_json(const PpoConfig& c) {
  return {{"clip_eps", c.clip_eps},
          {"gamma", c.gamma},
          {"gae_lambda", c.gae_lambda},
          {"learning_rate", c.learning_rate},
          {"rollout_size", c.rollout_size},
          {"minibatch", c.minibatch},
          {"epochs_per_update", c.epochs_per_update},
          {"total_steps", c.total_steps},
          {"entropy_coef", c.entropy_coef},
          {"value_coef", c.value_coef},
          {"max_grad_norm", c.max_grad_norm},
          {"log_std_init", c.log_std_init},
          {"hidden", c.hidden},
          {"seed", c.seed}};
}

PpoConfig ppo_config_from_json(const json& j) {
  PpoConfig c;
  c.clip_eps = j.at("clip_eps");
  c.gamma = j.at("gamma");
  c.gae_lambda = j.at("gae_lambda");
  c.learning_rate = j.at("learning_rate");
  c.rollout_size = j.at("rollout_size");
  c.minibatch = j.at("minibatch");
  c.epochs_per_update = j.at("epochs_per_update");
  c.total_steps = j.at("total_steps");
  c.entropy_coef = j.at("entropy_coef");
  c.value_coef = j.at("value_coef");
  c.max_grad_norm = j.at("max_grad_norm");
  c.log_std_init = j.at("log_std_init");
  c.hidden = j.at("hidden").get<std::vector<int>>();
  c.seed = j.at("seed");
  return c;
}

}  // namespace

std::string serialize_policy(const PolicyBundle& b) {
  const auto& m = b.optimizer.first_moment();
  const auto& v = b.optimizer.second_moment();
  json doc = {{"format", "simgen-policy"},
              {"version", 1},
              {"dims", {{"state", b.policy.mean_net.input_dim()}, {"action", b.policy.dim()}}},
              {"policy", mlp_to_json(b.policy.mean_net)},
              {"log_std", std::vector<double>(b.policy.log_std.begin(), b.policy.log_std.end())},
              {"value", mlp_to_json(b.value.net)},
              {"config", ppo_config_to_json(b.config)},
              {"optimizer",
               {{"steps", b.optimizer.steps()},
                {"learning_rate", b.optimizer.learning_rate()},
                {"m", std::vector<double>(m.begin(), m.end())},
                {"v", std::vector<double>(v.begin(), v.end())}}}};
  return doc.dump(1) + "\n";
}

PolicyBundle deserialize_policy(const std::string& text) {
  try {
    const json doc = json::parse(text);
    if (doc.value("format", std::string{}) != "simgen-policy") throw SchemaError("not a policy document");
    if (detail::require_key(doc, "version", "policy").get<int>() != 1) throw SchemaError("unsupported policy version");
    PolicyBundle b;
    b.policy.mean_net = mlp_from_json(detail::require_key(doc, "policy", "policy"));
    const auto ls = detail::require_key(doc, "log_std", "policy").get<std::vector<double>>();
    b.policy.log_std = Eigen::Map<const Eigen::VectorXd>(ls.data(), static_cast<Eigen::Index>(ls.size()));
    b.value.net = mlp_from_json(detail::require_key(doc, "value", "policy"));
    b.config = ppo_config_from_json(detail::require_key(doc, "config", "policy"));
    if (b.policy.log_std.size() != b.policy.dim() || b.policy.mean_net.input_dim() != b.policy.dim() ||
        b.value.net.input_dim() != b.policy.dim() || b.value.net.output_dim() != 1) {
      throw SchemaError("policy: inconsistent dimensions");
    }
    const auto& opt = detail::require_key(doc, "optimizer", "policy");
    const auto m = opt.at("m").get<std::vector<double>>();
    const auto v = opt.at("v").get<std::vector<double>>();
    b.optimizer = nn::Adam(m.size(), opt.at("learning_rate").get<double>());
    b.optimizer.restore(opt.at("steps").get<long>(),
                        Eigen::Map<const Eigen::VectorXd>(m.data(), static_cast<Eigen::Index>(m.size())),
                        Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
    return b;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("policy: ") + e.what());
  }
}

}  // namespace simgen
