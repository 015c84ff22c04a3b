// ----------------------------------------------------------------------------
// Copyright 2026 The ABC Attention Authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ----------------------------------------------------------------------------

// Serial reference kernels against the OpenMP ones. Thread count follows
// OMP_NUM_THREADS.

#include "abc/kernels.hpp"
#include "abc/reference.hpp"

#include <benchmark/benchmark.h>

using namespace abc;

namespace
{

Matrix random(std::size_t r, std::size_t c, std::uint64_t seed)
{
    SeededRng rng(seed);
    return rng.uniform_matrix(r, c, -1, 1);
}

void BM_matmul_reference(benchmark::State& st)
{
    const auto n = static_cast<std::size_t>(st.range(0));
    const Matrix a = random(n, n, 1), b = random(n, n, 2);
    for (auto _ : st)
        benchmark::DoNotOptimize(reference::matmul(a, b));
    st.SetItemsProcessed(st.iterations() * static_cast<std::int64_t>(n * n * n));
}

void BM_matmul_parallel(benchmark::State& st)
{
    const auto n = static_cast<std::size_t>(st.range(0));
    const Matrix a = random(n, n, 1), b = random(n, n, 2);
    Matrix out(n, n);
    for (auto _ : st)
    {
        kernels::matmul(a, b, out);
        benchmark::DoNotOptimize(out.flat().data());
    }
    st.SetItemsProcessed(st.iterations() * static_cast<std::int64_t>(n * n * n));
}

// N tokens, n = 32 slots, d = 64.
void BM_build_memory_reference(benchmark::State& st)
{
    const auto N = static_cast<std::size_t>(st.range(0));
    const Matrix phi = random(N, 32, 3), x = random(N, 64, 4);
    for (auto _ : st)
        benchmark::DoNotOptimize(reference::build_memory(phi, x));
}

void BM_build_memory_parallel(benchmark::State& st)
{
    const auto N = static_cast<std::size_t>(st.range(0));
    const Matrix phi = random(N, 32, 3), x = random(N, 64, 4);
    Matrix out(32, 64);
    for (auto _ : st)
    {
        kernels::build_memory(phi, x, out);
        benchmark::DoNotOptimize(out.flat().data());
    }
}

void BM_softmax_reference(benchmark::State& st)
{
    const auto n = static_cast<std::size_t>(st.range(0));
    const Matrix base = random(n, n, 5);
    for (auto _ : st)
    {
        Matrix m = base;
        reference::softmax_rows(m);
        benchmark::DoNotOptimize(m.flat().data());
    }
}

void BM_softmax_parallel(benchmark::State& st)
{
    const auto n = static_cast<std::size_t>(st.range(0));
    const Matrix base = random(n, n, 5);
    for (auto _ : st)
    {
        Matrix m = base;
        kernels::softmax_rows(m);
        benchmark::DoNotOptimize(m.flat().data());
    }
}

void BM_cached_attention_reference(benchmark::State& st)
{
    const auto N = static_cast<std::size_t>(st.range(0));
    const Matrix k = random(N, 64, 6), v = random(N, 64, 7);
    const Vector q = random(1, 64, 8).row_copy(0);
    for (auto _ : st)
        benchmark::DoNotOptimize(reference::cached_attention(q, k, v, N, 8.0));
}

void BM_cached_attention_parallel(benchmark::State& st)
{
    const auto N = static_cast<std::size_t>(st.range(0));
    const Matrix k = random(N, 64, 6), v = random(N, 64, 7);
    const Vector q = random(1, 64, 8).row_copy(0);
    Vector out(64);
    for (auto _ : st)
    {
        kernels::cached_attention(q, k, v, N, 8.0, out);
        benchmark::DoNotOptimize(out.data());
    }
}

}  // namespace

BENCHMARK(BM_matmul_reference)->RangeMultiplier(2)->Range(64, 256);
BENCHMARK(BM_matmul_parallel)->RangeMultiplier(2)->Range(64, 256);
BENCHMARK(BM_build_memory_reference)->RangeMultiplier(4)->Range(256, 4096);
BENCHMARK(BM_build_memory_parallel)->RangeMultiplier(4)->Range(256, 4096);
BENCHMARK(BM_softmax_reference)->RangeMultiplier(2)->Range(128, 512);
BENCHMARK(BM_softmax_parallel)->RangeMultiplier(2)->Range(128, 512);
BENCHMARK(BM_cached_attention_reference)->RangeMultiplier(4)->Range(256, 4096);
BENCHMARK(BM_cached_attention_parallel)->RangeMultiplier(4)->Range(256, 4096);

BENCHMARK_MAIN();
