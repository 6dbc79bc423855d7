// Serial reference kernels against their OpenMP counterparts.
// Arg(0) is the serial reference; Arg(k > 0) runs the parallel kernel on k threads.
#include <benchmark/benchmark.h>
#include <omp.h>

#include <vector>

#include "storywrangler/ingest.hpp"
#include "storywrangler/zipf.hpp"
#include "synthetic.hpp"

namespace {

using namespace storywrangler;

const std::vector<RawMessage>& messages() {
    static const std::vector<RawMessage> raw = [] {
        storywrangler::testing::CorpusOptions o;
        o.messages = 50'000;
        o.seed = 7;
        std::vector<RawMessage> out;
        for (auto& s : storywrangler::testing::generate_corpus(o).messages) out.push_back(s.message);
        return out;
    }();
    return raw;
}

const std::vector<DayCounts>& cells() {
    static const std::vector<DayCounts> counted = count_stream_serial(messages());
    return counted;
}

void thread_args(benchmark::internal::Benchmark* b) {
    b->Arg(0);
    for (int t = 1; t <= omp_get_max_threads(); t *= 2) b->Arg(t);
    b->Unit(benchmark::kMillisecond);
}

void BM_CountStream(benchmark::State& state) {
    const auto& raw = messages();
    const int workers = static_cast<int>(state.range(0));
    for (auto _ : state) {
        auto out = workers == 0 ? count_stream_serial(raw) : count_stream(raw, workers);
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * raw.size()));
    state.SetLabel(workers == 0 ? "serial" : "openmp");
}
BENCHMARK(BM_CountStream)->Apply(thread_args);

void BM_BuildAll(benchmark::State& state) {
    const auto& in = cells();
    const int workers = static_cast<int>(state.range(0));
    for (auto _ : state) {
        auto out = workers == 0 ? build_all_serial(in) : build_all(in, kDefaultTruncation, workers);
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * in.size()));
    state.SetLabel(workers == 0 ? "serial" : "openmp");
}
BENCHMARK(BM_BuildAll)->Apply(thread_args);

}  // namespace

BENCHMARK_MAIN();
