#include <benchmark/benchmark.h>

#include "bilevel/program.hpp"
#include "bilevel/valuefn.hpp"

using namespace bilevel;

namespace {

const BilevelProgram& instance(int which) {
  static const BilevelProgram progs[] = {
      load_program(BILEVEL_DATA_DIR "/instanceA.blp"),
      load_program(BILEVEL_DATA_DIR "/instanceB.blp"),
      // two lower variables, so the sweep is a 2-d lattice
      parse_program("[dims] n=1 m=2\n[upper]\nobjective = (y1 - x1)^2 + abs(y2)\n[lower]\n"
                    "objective = (y1 + y2 - x1)^2 + 0.1 * max(y1, y2)\nconstraint = y1^2 + y2^2 - 2\n"
                    "[box]\nx1 = -1, 1\ny1 = -2, 2\ny2 = -2, 2\n[mode] optimistic\n"),
  };
  return progs[which];
}

void sweep(benchmark::State& state, bool parallel) {
  const auto& P = instance(static_cast<int>(state.range(0)));
  GridSpec g;
  g.points = static_cast<int>(state.range(1));
  g.parallel = parallel;
  for (auto _ : state) benchmark::DoNotOptimize(optimistic_value(P, {0.3}, g));
  state.counters["points"] = g.points;
}

void BM_SweepSerial(benchmark::State& s) { sweep(s, false); }
void BM_SweepParallel(benchmark::State& s) { sweep(s, true); }

void curve(benchmark::State& state, bool parallel) {
  const auto& P = instance(1);
  GridSpec g;
  g.parallel = parallel;
  auto xs = x_grid({{-1.0, 1.0}}, {static_cast<int>(state.range(0))});
  for (auto _ : state) benchmark::DoNotOptimize(sample_curve(P, ValueKind::PhiO, xs, g));
}

void BM_CurveSerial(benchmark::State& s) { curve(s, false); }
void BM_CurveParallel(benchmark::State& s) { curve(s, true); }

}  // namespace

BENCHMARK(BM_SweepSerial)->ArgsProduct({{0, 1}, {201, 2001}})->Args({2, 101})->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_SweepParallel)->ArgsProduct({{0, 1}, {201, 2001}})->Args({2, 101})->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_CurveSerial)->Arg(41)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CurveParallel)->Arg(41)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
