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

#include "abc/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <new>
#include <sstream>
#include <stdexcept>
#include <tuple>

namespace abc
{

void BenchSpec::validate() const
{
    if (strategies.empty())
        throw DomainError("bench: no strategies");
    if (lengths.empty() || lengths.front() == 0)
        throw DomainError("bench: lengths must be positive and non-empty");
    if (!std::is_sorted(lengths.begin(), lengths.end()))
        throw DomainError("bench: lengths must be sorted");
    if (ns.empty() || std::find(ns.begin(), ns.end(), std::size_t{0}) != ns.end())
        throw DomainError("bench: memory sizes must be positive and non-empty");
    if (repetitions < 3)
        throw DomainError("bench: need at least 3 repetitions");
    if (batch == 0)
        throw DomainError("bench: batch must be positive");
    for (StrategyKind k : strategies)
        if (k == StrategyKind::cluster)
            throw DomainError("bench: clustering has no causal form");
}

namespace
{

using Clock = std::chrono::steady_clock;

struct Cell
{
    StrategyKind strategy;
    std::size_t N;
    std::size_t n;
};

ToyModelConfig cell_config(const ToyModelConfig& base, StrategyKind kind, std::size_t n, std::size_t max_len)
{
    ToyModelConfig c = base;
    c.kind = ModelKind::lm;
    c.max_positions = std::max(c.max_positions, max_len);
    StrategySpec s = c.causal;
    s.kind = kind;
    s.n = kind == StrategyKind::softmax ? c.causal.n : n;
    c.causal = s;
    return c;
}

std::size_t argmax(const Vector& v)
{
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

// One repetition: `batch` sequences decoded in lockstep. Returns the step
// time and the per-sequence state size at the end.
std::pair<double, std::size_t> decode_once(const ToyModel& model, std::size_t N, std::size_t batch)
{
    std::vector<DecoderState> states;
    states.reserve(batch);
    for (std::size_t b = 0; b < batch; ++b)
        states.push_back(start_decoding(model));
    std::vector<std::size_t> tokens(batch, kBos);

    const auto t0 = Clock::now();
    for (std::size_t t = 0; t < N; ++t)
        for (std::size_t b = 0; b < batch; ++b)
        {
            const Vector logits = decode_step(model, states[b], tokens[b]);
            if (!std::isfinite(logits[0]) || !std::isfinite(logits.back()))
                throw NumericError("bench: non-finite logits");
            tokens[b] = argmax(logits);
        }
    const double elapsed = std::chrono::duration<double>(Clock::now() - t0).count();
    return {elapsed / static_cast<double>(N), states.front().state_bytes()};
}

double percentile(std::vector<double> xs, double q)
{
    std::sort(xs.begin(), xs.end());
    const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(xs.size())));
    return xs[std::clamp<std::size_t>(rank, 1, xs.size()) - 1];
}

double median(std::vector<double> xs)
{
    std::sort(xs.begin(), xs.end());
    const std::size_t m = xs.size() / 2;
    return xs.size() % 2 ? xs[m] : 0.5 * (xs[m - 1] + xs[m]);
}

BenchRecord run_cell(const BenchSpec& spec, const Cell& cell)
{
    const auto start = Clock::now();
    BenchRecord r;
    r.strategy = cell.strategy;
    r.N = cell.N;
    r.n = cell.n;
    r.batch = spec.batch;
    try
    {
        const ToyModel model = ToyModel::init(cell_config(spec.model, cell.strategy, cell.n, cell.N));
        for (std::size_t w = 0; w < spec.warmup; ++w)
            decode_once(model, cell.N, spec.batch);
        std::vector<double> lat;
        for (std::size_t rep = 0; rep < spec.repetitions; ++rep)
        {
            const auto [step, bytes] = decode_once(model, cell.N, spec.batch);
            lat.push_back(step);
            r.state_bytes = bytes;
        }
        r.latency_median_s = median(lat);
        r.latency_p90_s = percentile(lat, 0.9);
    }
    catch (const std::bad_alloc&)
    {
        r.failed = true;
    }
    catch (const NumericError&)
    {
        r.failed = true;
    }
    if (r.failed)
        r.latency_median_s = r.latency_p90_s = std::numeric_limits<double>::quiet_NaN();
    r.wall_s = std::chrono::duration<double>(Clock::now() - start).count();
    return r;
}

}  // namespace

std::vector<BenchRecord> run_decode_bench(const BenchSpec& spec)
{
    spec.validate();
    std::vector<Cell> cells;
    for (StrategyKind k : spec.strategies)
        for (std::size_t n : k == StrategyKind::softmax ? std::vector<std::size_t>{0} : spec.ns)
            for (std::size_t N : spec.lengths)
                cells.push_back({k, N, n});

    std::vector<BenchRecord> out(cells.size());
    if (spec.parallel)
    {
#pragma omp parallel for schedule(dynamic)
        for (std::size_t i = 0; i < cells.size(); ++i)
            out[i] = run_cell(spec, cells[i]);
    }
    else
    {
        for (std::size_t i = 0; i < cells.size(); ++i)
            out[i] = run_cell(spec, cells[i]);
    }
    return out;
}

std::size_t analytic_state_bytes(const ToyModelConfig& cfg, std::size_t N)
{
    const AttentionConfig a = cfg.attention(Site::causal);
    const StrategyKind kind = a.strategy.kind;
    std::size_t per_head = 0;
    if (kind == StrategyKind::softmax)
        per_head = 2 * N * a.d_head;
    else
    {
        const std::size_t n = a.slots();
        const std::size_t lanes = kind == StrategyKind::dilated ? 2 : 1;
        per_head = lanes * (2 * n * a.d_head + (kind == StrategyKind::mlp ? n : 0));
    }
    return cfg.layers * a.heads * per_head * sizeof(double);
}

std::size_t run_memory_audit(const ToyModelConfig& base, std::size_t N, std::size_t n)
{
    const ToyModelConfig cfg = cell_config(base, base.causal.kind, n, N);
    const ToyModel model = ToyModel::init(cfg);
    DecoderState st = start_decoding(model);
    for (std::size_t t = 0; t < N; ++t)
        decode_step(model, st, kFirstContent + t % (cfg.vocab - kFirstContent));

    std::size_t held = 0;
    for (const AttentionStream& s : st.self)
    {
        for (const BoundedMemory& m : s.memories)
            held += (m.ktilde.size() + m.vtilde.size() + (m.norm_sum ? m.norm_sum->size() : 0)) * sizeof(double);
        for (std::size_t h = 0; h < s.key_cache.size(); ++h)
        {
            if (s.key_cache[h].rows() < s.cached || s.value_cache[h].rows() < s.cached)
                throw std::logic_error("memory audit: cache holds fewer rows than tokens decoded");
            held += (s.key_cache[h].cols() + s.value_cache[h].cols()) * s.cached * sizeof(double);
        }
    }
    const std::size_t expect = analytic_state_bytes(cfg, N);
    if (held != expect || st.state_bytes() != expect)
        throw std::logic_error("memory audit: state holds " + std::to_string(held) + " bytes, formula gives " +
                               std::to_string(expect));
    return expect;
}

namespace
{

constexpr const char* kHeader = "strategy,N,n,batch,latency_median_s,latency_p90_s,state_bytes,wall_s";

std::string fmt(double x)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

}  // namespace

void emit_csv(std::vector<BenchRecord> records, const std::string& path)
{
    if (records.empty())
        throw DomainError("emit_csv: no records");
    std::stable_sort(records.begin(), records.end(), [](const BenchRecord& a, const BenchRecord& b) {
        return std::make_tuple(to_string(a.strategy), a.n, a.N) < std::make_tuple(to_string(b.strategy), b.n, b.N);
    });
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw IoError("emit_csv: cannot write '" + path + "'");
    out << kHeader << '\n';
    for (const auto& r : records)
        out << to_string(r.strategy) << ',' << r.N << ',' << r.n << ',' << r.batch << ',' << fmt(r.latency_median_s)
            << ',' << fmt(r.latency_p90_s) << ',' << r.state_bytes << ',' << fmt(r.wall_s) << '\n';
    if (!out)
        throw IoError("emit_csv: write to '" + path + "' failed");
}

std::vector<BenchRecord> parse_csv(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("parse_csv: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line) || line != kHeader)
        throw IoError("parse_csv: unexpected header in '" + path + "'");
    std::vector<BenchRecord> out;
    while (std::getline(in, line))
    {
        if (line.empty())
            continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');)
            f.push_back(cell);
        if (f.size() != 8)
            throw IoError("parse_csv: malformed row '" + line + "'");
        BenchRecord r;
        try
        {
            r.strategy = parse_strategy_kind(f[0]);
            r.N = std::stoull(f[1]);
            r.n = std::stoull(f[2]);
            r.batch = std::stoull(f[3]);
            r.latency_median_s = std::stod(f[4]);
            r.latency_p90_s = std::stod(f[5]);
            r.state_bytes = std::stoull(f[6]);
            r.wall_s = std::stod(f[7]);
        }
        catch (const std::exception&)
        {
            throw IoError("parse_csv: malformed row '" + line + "'");
        }
        r.failed = std::isnan(r.latency_median_s);
        out.push_back(r);
    }
    return out;
}

std::string format_summary(const std::vector<BenchRecord>& records)
{
    std::string s;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-12s %6s %4s %6s %14s %14s %12s %9s\n", "strategy", "N", "n", "batch",
                  "median_ms", "p90_ms", "state_bytes", "wall_s");
    s += buf;
    for (const auto& r : records)
    {
        std::snprintf(buf, sizeof buf, "%-12s %6zu %4zu %6zu %14.4f %14.4f %12zu %9.2f%s\n",
                      std::string(to_string(r.strategy)).c_str(), r.N, r.n, r.batch, 1e3 * r.latency_median_s,
                      1e3 * r.latency_p90_s, r.state_bytes, r.wall_s, r.failed ? "  FAILED" : "");
        s += buf;
    }
    return s;
}

}  // namespace abc
