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

#include "abc/verify.hpp"

#include "abc/attention.hpp"
#include "abc/memory_core.hpp"
#include "abc/model.hpp"
#include "abc/reference.hpp"
#include "abc/strategies.hpp"

#include <chrono>
#include <algorithm>
#include <cmath>
#include <functional>

namespace abc
{

namespace
{

struct Tracker
{
    double worst = 0.0;
    double ratio = 0.0;  ///< worst deviation over its tolerance
    std::size_t instances = 0;

    void see(double dev, double tol)
    {
        if (std::isnan(dev))
            dev = INFINITY;
        worst = std::max(worst, dev);
        ratio = std::max(ratio, dev / tol);
    }
};

Matrix stack(const std::vector<Vector>& rows, std::size_t cols)
{
    Matrix m(rows.size(), cols);
    for (std::size_t r = 0; r < rows.size(); ++r)
        std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
    return m;
}

double readout_gap(const Vector& q, const BoundedMemory& mem, const Matrix& keys, const Matrix& values,
                   std::size_t first, std::size_t count)
{
    const Matrix k = keys.row_slice(first, count);
    const Matrix v = values.row_slice(first, count);
    return max_abs_diff(readout(q, mem), reference::cached_attention(q, k, v, count, 1.0));
}

void softmax_recovery(SeededRng& rng, Tracker& t)
{
    for (int trial = 0; trial < 50; ++trial)
    {
        const std::size_t N = 1 + rng.uniform_index(64);
        const std::size_t d = 1 + rng.uniform_index(32);
        const Matrix keys = rng.uniform_matrix(N, d, -1, 1);
        const Matrix values = rng.uniform_matrix(N, d, -1, 1);
        const Vector q = rng.uniform_vector(d, -2, 2);
        t.see(readout_gap(q, build_memory(Matrix::identity(N), keys, values), keys, values, 0, N), 1e-10);
        ++t.instances;
    }
}

std::vector<ControlStrategy> all_strategies(std::size_t n, std::size_t N, std::size_t d, SeededRng& rng,
                                            const Matrix& keys)
{
    std::vector<std::size_t> globals;
    for (std::size_t i = 0; i < n; ++i)
        globals.push_back(1 + i * N / n);
    return {LinformerControl{rng.normal_matrix(n, N, 1.0)},
            LocalToGlobalControl{globals},
            RandomControl::make(n, rng.next_u64(), N),
            CompressiveControl{n, (N + n - 1) / n},
            ClusterControl{cluster_assign(keys, n, 10, rng)},
            WindowControl{n},
            MlpControl{rng.uniform_matrix(n, d, -1, 1), Normalization::sequence, MlpActivation::exp, false}};
}

void batch_recurrent(SeededRng& rng, Tracker& t)
{
    for (int trial = 0; trial < 10; ++trial)
    {
        const std::size_t n = 1 + rng.uniform_index(6);
        const std::size_t N = n + rng.uniform_index(20);
        const std::size_t d = 1 + rng.uniform_index(6);
        const Matrix x = rng.uniform_matrix(N, d, -1, 1);
        const Matrix keys = rng.uniform_matrix(N, d, -1, 1);
        const Matrix values = rng.uniform_matrix(N, d, -1, 1);
        for (const ControlStrategy& s : all_strategies(n, N, d, rng, keys))
        {
            const auto batch = build_memory(folded_phi_rows(s, &x, N), keys, values);
            const TransitionOp T{transition_of(s), n};
            auto mem = BoundedMemory::zeros(n, d);
            for (std::size_t i = 1; i <= N; ++i)
                mem = step(mem, phi_at(s, i, &x, N).phi, keys.row(i - 1), values.row(i - 1), T);
            t.see(max_abs_diff(mem.ktilde, batch.ktilde), 1e-12);
            t.see(max_abs_diff(mem.vtilde, batch.vtilde), 1e-12);
            ++t.instances;
        }

        // Window and dilated readouts against attention over their token sets.
        auto window = BoundedMemory::zeros(n, d);
        auto dilated = DilatedQueues::zeros(n, d);
        for (std::size_t i = 1; i <= N; ++i)
        {
            step_inplace(window, phi_at(WindowControl{n}, i, nullptr, N).phi.weights, keys.row(i - 1),
                         values.row(i - 1), TransitionKind::upper_shift);
            dilated_step(dilated, i, keys.row(i - 1), values.row(i - 1));
            const Vector q = rng.uniform_vector(d, -2, 2);
            const std::size_t w = std::min(n, i);
            t.see(readout_gap(q, window, keys, values, i - w, w), 1e-10);

            std::vector<Vector> ks, vs;
            for (std::size_t back = 0; back < n && 2 * back < i; ++back)
            {
                ks.insert(ks.begin(), keys.row_copy(i - 1 - 2 * back));
                vs.insert(vs.begin(), values.row_copy(i - 1 - 2 * back));
            }
            const Matrix dk = stack(ks, d), dv = stack(vs, d);
            t.see(max_abs_diff(readout(q, dilated.active(i)), reference::cached_attention(q, dk, dv, ks.size(), 1.0)),
                  1e-10);
            t.instances += 2;
        }
    }
}

void normalized_memory(SeededRng& rng, Tracker& t)
{
    for (int seed = 0; seed < 20; ++seed)
    {
        const std::size_t n = 1 + rng.uniform_index(5);
        const std::size_t d = 1 + rng.uniform_index(8);
        const std::size_t N = 1 + rng.uniform_index(16);
        const Matrix w = rng.uniform_matrix(n, d, -1, 1);
        const Matrix x = rng.uniform_matrix(N, d, -1, 1);
        const Matrix keys = rng.uniform_matrix(N, d, -1, 1);
        const Matrix values = rng.uniform_matrix(N, d, -1, 1);
        const ControlStrategy prefix = MlpControl{w, Normalization::prefix, MlpActivation::exp, false};
        auto mem = BoundedMemory::zeros(n, d, true);
        for (std::size_t i = 1; i <= N; ++i)
        {
            const PhiAt p = phi_at(prefix, i, &x, N);
            step_inplace(mem, *p.alpha, keys.row(i - 1), values.row(i - 1), TransitionKind::identity);
            // Sequence normalization over the prefix x_1..x_i, then the plain construction.
            const Matrix xi = x.row_slice(0, i);
            const auto phis = phi_mlp_sequence(xi, w);
            std::vector<Vector> rows;
            for (const auto& p : phis)
                rows.push_back(p.weights);
            const Matrix phi = stack(rows, n);
            const Matrix kt = reference::build_memory(phi, keys.row_slice(0, i));
            const Matrix vt = reference::build_memory(phi, values.row_slice(0, i));
            const Vector q = rng.uniform_vector(d, -2, 2);
            t.see(max_abs_diff(readout_normalized(q, mem), reference::cached_attention(q, kt, vt, n, 1.0)), 1e-10);
            ++t.instances;
        }
    }
}

void pseudo_query(SeededRng& rng, Tracker& t)
{
    for (int trial = 0; trial < 20; ++trial)
    {
        const std::size_t n = trial < 5 ? 1 : 1 + rng.uniform_index(6);
        const std::size_t d = 1 + rng.uniform_index(6);
        const std::size_t N = 1 + rng.uniform_index(20);
        const Matrix w = rng.uniform_matrix(n, d, -1, 1);
        const Matrix x = rng.uniform_matrix(N, d, -1, 1);
        const Matrix keys = rng.uniform_matrix(N, d, -1, 1);
        Matrix scores = reference::matmul_nt(w, x);  // n-by-N
        reference::softmax_rows(scores);
        t.see(max_abs_diff(pseudo_query_memory(w, x, keys), reference::matmul(scores, keys)), 1e-12);
        ++t.instances;
    }
}

AttentionConfig small_cfg(Site site, StrategyKind kind, std::size_t n, std::size_t max_len)
{
    AttentionConfig cfg;
    cfg.heads = 2;
    cfg.d_model = 8;
    cfg.d_head = 4;
    cfg.site = site;
    cfg.strategy = make_spec(kind, n);
    cfg.strategy.max_len = max_len;
    return cfg;
}

void causality(SeededRng& rng, Tracker& t)
{
    for (StrategyKind kind : {StrategyKind::window, StrategyKind::dilated, StrategyKind::random,
                              StrategyKind::compressive, StrategyKind::linformer, StrategyKind::mlp})
    {
        const AttentionConfig cfg = small_cfg(Site::causal, kind, 4, 12);
        const Matrix x = rng.uniform_matrix(12, 8, -1, 1);
        const LayerParams p = LayerParams::init(8, rng);
        const StrategyParams sp = StrategyParams::init(cfg, rng);
        const Matrix base = mha_forward(x, x, p, sp, cfg).out;
        for (std::size_t i = 0; i + 1 < x.rows(); ++i)
        {
            Matrix y = x;
            for (std::size_t r = i + 1; r < y.rows(); ++r)
                for (double& e : y.row(r))
                    e += rng.uniform(-3, 3);
            t.see(max_abs_diff(mha_forward(y, y, p, sp, cfg).out.row_slice(0, i + 1), base.row_slice(0, i + 1)),
                  1e-12);
            ++t.instances;
        }
    }
}

// Fourth-order central difference. The step shrinks until the estimate
// agrees with the one at a quarter of the step.
double numeric_derivative(const std::function<double(double)>& f)
{
    auto at = [&](double h) { return (f(-2 * h) - 8 * f(-h) + 8 * f(h) - f(2 * h)) / (12 * h); };
    double h = 1e-4, est = at(h);
    while (h > 2e-6)
    {
        const double finer = at(h / 4);
        if (std::abs(finer - est) <= 1e-5 * std::max(std::abs(est), 1e-3))
            return est;
        est = finer;
        h /= 4;
    }
    return est;
}

void gradcheck(SeededRng& rng, Tracker& t)
{
    for (StrategyKind kind : {StrategyKind::mlp, StrategyKind::linformer})
        for (MlpActivation act : {MlpActivation::exp, MlpActivation::relu, MlpActivation::sigmoid})
        {
            if (kind == StrategyKind::linformer && act != MlpActivation::exp)
                continue;
            ToyModelConfig c;
            c.kind = ModelKind::seq2seq;
            c.layers = 2;
            c.d_model = 8;
            c.heads = 2;
            c.ffn_mult = 2;
            c.vocab = 7;
            c.max_positions = 8;
            c.causal = c.cross = make_spec(kind, 3);
            c.causal.activation = c.cross.activation = act;
            c.seed = rng.next_u64();
            ToyModel m = ToyModel::init(c);
            Example ex;
            for (std::size_t i = 0; i < 6; ++i)
            {
                ex.source.push_back(rng.uniform_index(c.vocab));
                ex.input.push_back(rng.uniform_index(c.vocab));
                ex.target.push_back(rng.uniform_index(c.vocab));
            }
            ex.mask.assign(6, 1);
            ModelParams g = m.params.zeros_like();
            loss_and_grad(m, ex, g);
            std::vector<Matrix*> ps;
            std::vector<const Matrix*> gs;
            m.params.visit([&](const std::string&, Matrix& a) { ps.push_back(&a); });
            g.visit([&](const std::string&, const Matrix& a) { gs.push_back(&a); });
            for (std::size_t a = 0; a < ps.size(); ++a)
                for (std::size_t i = 0; i < ps[a]->size(); ++i)
                {
                    double& v = ps[a]->flat()[i];
                    const double v0 = v;
                    const double num = numeric_derivative([&](double dv) {
                        v = v0 + dv;
                        return evaluate(m, ex).loss;
                    });
                    v = v0;
                    const double ana = gs[a]->flat()[i];
                    const double rel = std::abs(num - ana) / std::max({std::abs(num), std::abs(ana), 1e-6});
                    t.see(rel, 1e-4);
                }
            ++t.instances;
        }
}

void normalization(SeededRng& rng, Tracker& t)
{
    for (int trial = 0; trial < 20; ++trial)
    {
        const std::size_t n = 1 + rng.uniform_index(6);
        const std::size_t d = 1 + rng.uniform_index(6);
        const std::size_t N = n + rng.uniform_index(20);
        const Matrix x = rng.uniform_matrix(N, d, -2, 2);
        const auto phis = phi_mlp_sequence(x, rng.uniform_matrix(n, d, -1, 1));
        const Matrix keys = rng.uniform_matrix(N, d, -1, 1);
        const Matrix cluster = phi_rows(ClusterControl{cluster_assign(keys, n, 10, rng)}, nullptr, N);
        for (std::size_t l = 0; l < n; ++l)
        {
            double s = 0.0, c = 0.0;
            for (std::size_t i = 0; i < N; ++i)
            {
                s += phis[i].weights[l];
                c += cluster(i, l);
            }
            t.see(std::abs(s - 1.0), 1e-12);
            t.see(std::abs(c - 1.0), 1e-12);
        }

        // Compressive rows are the chunk means up to summation order.
        const std::size_t ratio = 1 + rng.uniform_index(4);
        const Matrix chunked = rng.uniform_matrix(n * ratio, d, -1, 1);
        const auto mem = build_memory(phi_rows(CompressiveControl{n, ratio}, nullptr, n * ratio), chunked, chunked);
        for (std::size_t l = 0; l < n; ++l)
            for (std::size_t j = 0; j < d; ++j)
            {
                double mean = 0.0;
                for (std::size_t i = 0; i < ratio; ++i)
                    mean += chunked(l * ratio + i, j) / static_cast<double>(ratio);
                t.see(std::abs(mem.ktilde(l, j) - mean), 1e-15);
            }
        ++t.instances;
    }
}

struct Suite
{
    std::string_view name;
    void (*run)(SeededRng&, Tracker&);
};

const Suite kSuites[] = {
    {"softmax-recovery", softmax_recovery}, {"batch-recurrent", batch_recurrent},
    {"normalized-memory", normalized_memory}, {"pseudo-query", pseudo_query},
    {"causality", causality},                 {"gradcheck", gradcheck},
    {"normalization", normalization},
};

}  // namespace

const std::vector<std::string_view>& suite_names()
{
    static const std::vector<std::string_view> names = [] {
        std::vector<std::string_view> v;
        for (const auto& s : kSuites)
            v.push_back(s.name);
        return v;
    }();
    return names;
}

SuiteResult run_suite(std::string_view name, std::uint64_t seed)
{
    for (const auto& s : kSuites)
    {
        if (s.name != name)
            continue;
        const auto t0 = std::chrono::steady_clock::now();
        SeededRng rng(seed);
        Tracker t;
        s.run(rng, t);
        SuiteResult r;
        r.name = std::string(name);
        r.worst = t.worst;
        r.ratio = t.ratio;
        r.instances = t.instances;
        r.passed = t.ratio <= 1.0;
        r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return r;
    }
    throw DomainError("unknown verification suite '" + std::string(name) + "'");
}

}  // namespace abc
