// Serial reference vs OpenMP path for each data-parallel kernel.

#include <benchmark/benchmark.h>

#include <memory>

#include "simgen/bayesopt.hpp"
#include "simgen/generator.hpp"
#include "simgen/oracle.hpp"
#include "simgen/surrogate.hpp"

using namespace simgen;

namespace {

const Dataset& rupture_data() {
  static const Dataset ds = oracle::synth_dataset(oracle::Kind::rupture, 2000, 1);
  return ds;
}

const SurrogateModel& rupture_model() {
  static const SurrogateModel m = fit(rupture_data(), GbdtConfig{}, Task::binary);
  return m;
}

Exec exec_of(const benchmark::State& st) { return st.range(0) ? Exec::parallel : Exec::serial; }

void BM_fit(benchmark::State& st) {
  GbdtConfig cfg;
  cfg.n_trees = 20;
  for (auto _ : st) benchmark::DoNotOptimize(fit(rupture_data(), cfg, Task::binary, nullptr, exec_of(st)));
}

void BM_predict_raw(benchmark::State& st) {
  const auto& model = rupture_model();  // fixture built outside the timed loop
  const Eigen::MatrixXd rows = rupture_data().rows.replicate(25, 1);  // 50k rows
  for (auto _ : st) benchmark::DoNotOptimize(model.predict_raw(rows, exec_of(st)));
}

void BM_generate(benchmark::State& st) {
  auto model = std::make_shared<SurrogateModel>(rupture_model());
  const GenEnvironment env(OutcomeContext::from_model(model), {}, 1);
  std::mt19937_64 rng(2);
  const auto policy = make_policy(8, {64, 64}, 0.0, rng);
  for (auto _ : st) benchmark::DoNotOptimize(generate_batch(policy, env, 5000, 3, exec_of(st)));
}

void BM_gp_predict(benchmark::State& st) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  Eigen::MatrixXd x(256, 8), q(1088, 8);
  Eigen::VectorXd y(256);
  for (auto& v : x.reshaped()) v = u(rng);
  for (auto& v : q.reshaped()) v = u(rng);
  for (Eigen::Index i = 0; i < 256; ++i) y[i] = x.row(i).sum();
  GaussianProcess gp(Eigen::VectorXd::Constant(8, 0.5), 1e-6);
  gp.fit(x, y);
  Eigen::VectorXd m, s;
  for (auto _ : st) {
    gp.predict_batch(q, m, s, exec_of(st));
    benchmark::DoNotOptimize(m.data());
  }
}

void BM_random_search(benchmark::State& st) {
  const auto& model = rupture_model();
  const Objective f = [&model](std::span<const double> p) { return model.predict_raw(p); };
  const auto box = oracle::default_box(oracle::Kind::rupture);
  for (auto _ : st) benchmark::DoNotOptimize(random_search(f, box, 100000, 4, exec_of(st)));
}

void BM_contour(benchmark::State& st) {
  const auto& model = rupture_model();
  const Objective f = [&model](std::span<const double> p) { return model.predict_raw(p); };
  const auto box = oracle::default_box(oracle::Kind::rupture);
  std::vector<double> mid;
  for (const auto& r : box) mid.push_back(0.5 * (r.lo + r.hi));
  for (auto _ : st) benchmark::DoNotOptimize(contour_grid(f, 7, 6, box, 100, mid, exec_of(st)));
}

}  // namespace

// Argument: 0 = serial reference, 1 = OpenMP.
BENCHMARK(BM_fit)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_predict_raw)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_generate)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_gp_predict)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_random_search)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_contour)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
