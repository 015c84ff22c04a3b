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

#include "abc/attention.hpp"

#include "abc/kernels.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

namespace abc
{

namespace
{

constexpr std::array<std::pair<StrategyKind, std::string_view>, 10> kStrategyNames{{
    {StrategyKind::softmax, "softmax"},
    {StrategyKind::identity, "identity"},
    {StrategyKind::linformer, "linformer"},
    {StrategyKind::local_to_global, "local_to_global"},
    {StrategyKind::random, "random"},
    {StrategyKind::compressive, "compressive"},
    {StrategyKind::cluster, "cluster"},
    {StrategyKind::window, "window"},
    {StrategyKind::dilated, "dilated"},
    {StrategyKind::mlp, "mlp"},
}};

double activation_grad(double z, double alpha, MlpActivation act, bool clamp)
{
    if (clamp && std::abs(z) > kLogitClamp)
        return 0.0;
    switch (act)
    {
    case MlpActivation::exp:
        return alpha;
    case MlpActivation::relu:
        return z > 0.0 ? 1.0 : 0.0;
    case MlpActivation::sigmoid:
        return alpha * (1.0 - alpha);
    }
    return 0.0;
}

bool uses_shift(StrategyKind k)
{
    return k == StrategyKind::window || k == StrategyKind::dilated;
}

std::size_t lanes_of(StrategyKind k)
{
    return k == StrategyKind::dilated ? 2 : 1;
}

// Lane read and written by 0-based position t.
std::size_t lane_at(std::size_t lanes, std::size_t t)
{
    return lanes == 2 ? t % 2 : 0;
}

Matrix head_cols(const Matrix& m, std::size_t h, std::size_t dh)
{
    return m.col_slice(h * dh, dh);
}

enum class MaskKind
{
    none,
    causal,
    written,
};

// Softmax attention of every query row over the rows of kmem, restricted by
// the mask. Rows with no admissible key produce zeros.
void dense_attend(const Matrix& q, const Matrix& kmem, const Matrix& vmem, MaskKind mask,
                  const std::vector<unsigned char>& written, double tau, Matrix& p, Matrix& o)
{
    p = matmul_nt(q, kmem);
    const double inv_tau = 1.0 / tau;
    for (std::size_t i = 0; i < p.rows(); ++i)
    {
        auto row = p.row(i);
        double mx = -INFINITY;
        for (std::size_t j = 0; j < row.size(); ++j)
        {
            const bool ok = mask == MaskKind::none || (mask == MaskKind::causal && j <= i) ||
                            (mask == MaskKind::written && written[j]);
            row[j] = ok ? row[j] * inv_tau : -INFINITY;
            mx = std::max(mx, row[j]);
        }
        if (mx == -INFINITY)
        {
            std::fill(row.begin(), row.end(), 0.0);
            continue;
        }
        if (!std::isfinite(mx))
            throw NumericError("attention: non-finite score");
        double sum = 0.0;
        for (double& s : row)
        {
            s = s == -INFINITY ? 0.0 : std::exp(s - mx);
            sum += s;
        }
        for (double& s : row)
            s /= sum;
    }
    o = matmul(p, vmem);
}

struct DenseGrads
{
    Matrix dq, dk, dv;
};

DenseGrads dense_attend_backward(const Matrix& q, const Matrix& kmem, const Matrix& vmem, const Matrix& p,
                                 const Matrix& d_o, double tau)
{
    DenseGrads g;
    g.dv = matmul_tn(p, d_o);
    Matrix ds = matmul_nt(d_o, vmem);
    for (std::size_t i = 0; i < ds.rows(); ++i)
    {
        auto dr = ds.row(i);
        auto pr = p.row(i);
        const double c = dot(dr, pr);
        for (std::size_t j = 0; j < dr.size(); ++j)
            dr[j] = pr[j] * (dr[j] - c) / tau;
    }
    g.dq = matmul(ds, kmem);
    g.dk = matmul_tn(ds, q);
    return g;
}

std::vector<unsigned char> written_columns(const Matrix& phi)
{
    std::vector<unsigned char> w(phi.cols(), 0);
    for (std::size_t i = 0; i < phi.rows(); ++i)
        for (std::size_t l = 0; l < phi.cols(); ++l)
            if (phi(i, l) != 0.0)
                w[l] = 1;
    return w;
}

Matrix cluster_phi(const Matrix& keys, const StrategySpec& spec, std::size_t head)
{
    SeededRng rng(spec.seed + head);
    const BitMatrix m = cluster_assign(keys, spec.n, spec.cluster_iters, rng);
    Matrix phi(m.rows(), m.cols());
    for (std::size_t j = 0; j < m.cols(); ++j)
    {
        const double w = 1.0 / static_cast<double>(m.column_count(j));
        for (std::size_t i = 0; i < m.rows(); ++i)
            if (m(i, j))
                phi(i, j) = w;
    }
    return phi;
}

// Raw activations act(W_phi x_i), one row per input row.
Matrix mlp_alpha_rows(const Matrix& x, const Matrix& w_phi, const StrategySpec& spec)
{
    Matrix alpha(x.rows(), w_phi.rows());
    for (std::size_t i = 0; i < x.rows(); ++i)
    {
        const Vector a = mlp_alpha(w_phi, x.row(i), spec.activation, spec.clamp_logits);
        std::copy(a.begin(), a.end(), alpha.row(i).begin());
    }
    return alpha;
}

Vector column_sums(const Matrix& m)
{
    Vector s(m.cols(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t l = 0; l < m.cols(); ++l)
            s[l] += m(i, l);
    return s;
}

// Shared control rows for a non-causal site (everything but clustering).
Matrix noncausal_phi(const Matrix& xkv, const StrategyParams& sp, const AttentionConfig& cfg, Matrix* alpha_out,
                     Vector* sum_out)
{
    const StrategySpec& spec = cfg.strategy;
    if (spec.kind == StrategyKind::mlp)
    {
        Matrix alpha = mlp_alpha_rows(xkv, sp.w_phi, spec);
        Vector total = column_sums(alpha);
        Matrix phi(alpha.rows(), alpha.cols());
        for (std::size_t i = 0; i < alpha.rows(); ++i)
            for (std::size_t l = 0; l < alpha.cols(); ++l)
                phi(i, l) = total[l] > 0.0 ? alpha(i, l) / total[l] : 0.0;
        if (alpha_out)
            *alpha_out = std::move(alpha);
        if (sum_out)
            *sum_out = std::move(total);
        return phi;
    }
    const ControlStrategy control = make_control(spec, sp, cfg.site);
    return folded_phi_rows(control, nullptr, xkv.rows());
}

}  // namespace

// --------------------------------------------------------------------------
// names and configuration

std::string_view to_string(Site site)
{
    switch (site)
    {
    case Site::encoder_self:
        return "encoder_self";
    case Site::causal:
        return "causal";
    case Site::cross:
        return "cross";
    }
    return "?";
}

std::string_view to_string(StrategyKind kind)
{
    for (const auto& [k, name] : kStrategyNames)
        if (k == kind)
            return name;
    return "?";
}

std::string_view to_string(MlpActivation activation)
{
    switch (activation)
    {
    case MlpActivation::exp:
        return "exp";
    case MlpActivation::relu:
        return "relu";
    case MlpActivation::sigmoid:
        return "sigmoid";
    }
    return "?";
}

Site parse_site(std::string_view name)
{
    for (Site s : {Site::encoder_self, Site::causal, Site::cross})
        if (to_string(s) == name)
            return s;
    throw DomainError("unknown attention site '" + std::string(name) + "'");
}

StrategyKind parse_strategy_kind(std::string_view name)
{
    for (const auto& [k, n] : kStrategyNames)
        if (n == name)
            return k;
    throw DomainError("unknown strategy '" + std::string(name) + "'");
}

MlpActivation parse_activation(std::string_view name)
{
    for (MlpActivation a : {MlpActivation::exp, MlpActivation::relu, MlpActivation::sigmoid})
        if (to_string(a) == name)
            return a;
    throw DomainError("unknown activation '" + std::string(name) + "'");
}

double AttentionConfig::effective_temperature() const
{
    return temperature.value_or(std::sqrt(static_cast<double>(d_head)));
}

std::size_t AttentionConfig::slots() const
{
    switch (strategy.kind)
    {
    case StrategyKind::softmax:
        return 0;
    case StrategyKind::identity:
        return strategy.max_len;
    default:
        return strategy.n;
    }
}

void AttentionConfig::validate() const
{
    if (heads == 0 || d_head == 0 || heads * d_head != d_model)
        throw DomainError("attention config: heads * d_head must equal d_model");
    if (temperature && !(*temperature > 0.0))
        throw DomainError("attention config: temperature must be positive");
    const StrategySpec& s = strategy;
    if (s.bounded() && s.kind != StrategyKind::identity && s.n == 0)
        throw DomainError("attention config: memory size n must be at least 1");
    if (s.max_len == 0)
        throw DomainError("attention config: max_len must be positive");
    if (site == Site::causal && s.kind == StrategyKind::cluster)
        throw DomainError("attention config: clustering reads every key and cannot serve causal attention");
    if (site != Site::causal && s.kind == StrategyKind::dilated)
        throw DomainError("attention config: the dilated pattern is defined for causal attention only");
    if (s.kind == StrategyKind::local_to_global)
    {
        if (s.globals.empty() && s.n > s.max_len)
            throw DomainError("attention config: more global tokens than positions");
        if (!s.globals.empty())
        {
            if (s.globals.size() != s.n)
                throw DomainError("attention config: globals must list exactly n positions");
            for (std::size_t i = 0; i < s.globals.size(); ++i)
            {
                if (s.globals[i] == 0 || s.globals[i] > s.max_len)
                    throw DomainError("attention config: global position out of range");
                if (i > 0 && s.globals[i] <= s.globals[i - 1])
                    throw DomainError("attention config: globals must be strictly increasing");
            }
        }
    }
}

LayerParams LayerParams::zeros(std::size_t d_model)
{
    return {Matrix(d_model, d_model), Matrix(d_model, d_model), Matrix(d_model, d_model), Matrix(d_model, d_model)};
}

LayerParams LayerParams::init(std::size_t d_model, SeededRng& rng)
{
    const double sd = 1.0 / std::sqrt(static_cast<double>(d_model));
    LayerParams p;
    p.wq = rng.normal_matrix(d_model, d_model, sd);
    p.wk = rng.normal_matrix(d_model, d_model, sd);
    p.wv = rng.normal_matrix(d_model, d_model, sd);
    p.wo = rng.normal_matrix(d_model, d_model, sd);
    return p;
}

StrategyParams StrategyParams::zeros_for(const AttentionConfig& cfg)
{
    StrategyParams p;
    if (cfg.strategy.kind == StrategyKind::mlp)
        p.w_phi = Matrix(cfg.strategy.n, cfg.d_model);
    else if (cfg.strategy.kind == StrategyKind::linformer)
        p.w_lf = Matrix(cfg.strategy.n, cfg.strategy.max_len);
    return p;
}

StrategyParams StrategyParams::init(const AttentionConfig& cfg, SeededRng& rng)
{
    StrategyParams p;
    if (cfg.strategy.kind == StrategyKind::mlp)
        p.w_phi = rng.normal_matrix(cfg.strategy.n, cfg.d_model, 1.0 / std::sqrt(static_cast<double>(cfg.d_model)));
    else if (cfg.strategy.kind == StrategyKind::linformer)
        p.w_lf = rng.normal_matrix(cfg.strategy.n, cfg.strategy.max_len,
                                   1.0 / std::sqrt(static_cast<double>(cfg.strategy.max_len)));
    return p;
}

ControlStrategy make_control(const StrategySpec& spec, const StrategyParams& params, Site site)
{
    switch (spec.kind)
    {
    case StrategyKind::softmax:
        throw DomainError("make_control: softmax attention has no control strategy");
    case StrategyKind::cluster:
        throw DomainError("make_control: cluster membership depends on the keys of each sequence");
    case StrategyKind::identity: {
        LocalToGlobalControl c;
        c.globals.resize(spec.max_len);
        std::iota(c.globals.begin(), c.globals.end(), std::size_t{1});
        return c;
    }
    case StrategyKind::linformer:
        if (params.w_lf.rows() != spec.n)
            throw DomainError("make_control: linformer projection has the wrong number of rows");
        return LinformerControl{params.w_lf};
    case StrategyKind::local_to_global: {
        LocalToGlobalControl c;
        c.globals = spec.globals;
        if (c.globals.empty())
            for (std::size_t i = 0; i < spec.n; ++i)
                c.globals.push_back(1 + i * spec.max_len / spec.n);
        return c;
    }
    case StrategyKind::random:
        return RandomControl::make(spec.n, spec.seed, spec.max_len);
    case StrategyKind::compressive: {
        const std::size_t c = spec.compression ? spec.compression : (spec.max_len + spec.n - 1) / spec.n;
        return CompressiveControl{spec.n, c};
    }
    case StrategyKind::window:
        return WindowControl{spec.n};
    case StrategyKind::dilated:
        return DilatedControl{spec.n};
    case StrategyKind::mlp:
        if (params.w_phi.rows() != spec.n)
            throw DomainError("make_control: W_phi has the wrong number of rows");
        return MlpControl{params.w_phi, site == Site::causal ? Normalization::prefix : Normalization::sequence,
                          spec.activation, spec.clamp_logits};
    }
    throw DomainError("make_control: unknown strategy");
}

// --------------------------------------------------------------------------
// tape

namespace detail
{

struct HeadTape
{
    Matrix q, k, v;
    // Dense path: the attended rows and the probabilities over them.
    Matrix phi;  ///< per-head control rows (clustering only)
    Matrix kmem, vmem, p;
    // Causal recurrent path: per-position memory snapshots (position t owns
    // rows t*n .. t*n + n - 1) and running normalizers.
    Matrix kbar, vbar, norm;
};

struct TapeData
{
    const LayerParams* params = nullptr;
    const StrategyParams* strategy = nullptr;
    AttentionConfig cfg;
    Matrix xq, xkv;
    Matrix concat;
    /// Control rows: normalized phi (non-causal) or write weights (causal,
    /// raw activations for mlp).
    Matrix phi;
    Matrix alpha;
    Vector alpha_sum;
    std::vector<HeadTape> heads;
};

}  // namespace detail

GradTape::GradTape() = default;
GradTape::~GradTape() = default;
GradTape::GradTape(GradTape&&) noexcept = default;
GradTape& GradTape::operator=(GradTape&&) noexcept = default;
GradTape::GradTape(std::unique_ptr<detail::TapeData> data) : data_(std::move(data)) {}

detail::TapeData& GradTape::data()
{
    if (!data_)
        throw UsageError("GradTape: empty tape");
    return *data_;
}

// --------------------------------------------------------------------------
// causal recurrent path

namespace
{

// Runs the memory recurrence for one head, reading after every write.
void causal_forward(const Matrix& w, std::size_t lanes, bool shift, bool normalized, double tau,
                    detail::HeadTape& ht, Matrix& o)
{
    const std::size_t N = ht.q.rows();
    const std::size_t n = w.cols();
    const std::size_t dh = ht.q.cols();
    struct Lane
    {
        Matrix a_k, a_v;
        Vector s;
        std::vector<unsigned char> written;
    };
    std::vector<Lane> lane(lanes, Lane{Matrix(n, dh), Matrix(n, dh), Vector(n, 0.0), std::vector<unsigned char>(n, 0)});
    ht.kbar = Matrix(N * n, dh);
    ht.vbar = Matrix(N * n, dh);
    ht.p = Matrix(N, n);
    if (normalized)
        ht.norm = Matrix(N, n);
    o = Matrix(N, dh);

    Vector scores(n);
    for (std::size_t t = 0; t < N; ++t)
    {
        Lane& L = lane[lane_at(lanes, t)];
        if (shift)
        {
            for (Matrix* m : {&L.a_k, &L.a_v})
            {
                auto f = m->flat();
                std::copy(f.begin() + static_cast<std::ptrdiff_t>(dh), f.end(), f.begin());
                std::fill(f.end() - static_cast<std::ptrdiff_t>(dh), f.end(), 0.0);
            }
            std::copy(L.written.begin() + 1, L.written.end(), L.written.begin());
            L.written.back() = 0;
        }
        auto kt = ht.k.row(t);
        auto vt = ht.v.row(t);
        for (std::size_t l = 0; l < n; ++l)
        {
            const double wl = w(t, l);
            if (wl == 0.0)
                continue;
            L.written[l] = 1;
            L.s[l] += wl;
            auto ak = L.a_k.row(l);
            auto av = L.a_v.row(l);
            for (std::size_t j = 0; j < dh; ++j)
            {
                ak[j] += wl * kt[j];
                av[j] += wl * vt[j];
            }
        }

        double mx = -INFINITY;
        for (std::size_t l = 0; l < n; ++l)
        {
            auto kb = ht.kbar.row(t * n + l);
            auto vb = ht.vbar.row(t * n + l);
            const double inv = !normalized ? 1.0 : (L.s[l] > 0.0 ? 1.0 / L.s[l] : 0.0);
            auto ak = L.a_k.row(l);
            auto av = L.a_v.row(l);
            for (std::size_t j = 0; j < dh; ++j)
            {
                kb[j] = ak[j] * inv;
                vb[j] = av[j] * inv;
            }
            if (normalized)
                ht.norm(t, l) = L.s[l];
            if (L.written[l])
            {
                scores[l] = dot(kb, ht.q.row(t)) / tau;
                mx = std::max(mx, scores[l]);
            }
        }
        if (mx == -INFINITY)
            continue;
        if (!std::isfinite(mx))
            throw NumericError("attention: non-finite score");
        double sum = 0.0;
        for (std::size_t l = 0; l < n; ++l)
        {
            const double e = L.written[l] ? std::exp(scores[l] - mx) : 0.0;
            ht.p(t, l) = e;
            sum += e;
        }
        auto ot = o.row(t);
        for (std::size_t l = 0; l < n; ++l)
        {
            const double pl = ht.p(t, l) /= sum;
            if (pl == 0.0)
                continue;
            auto vb = ht.vbar.row(t * n + l);
            for (std::size_t j = 0; j < dh; ++j)
                ot[j] += pl * vb[j];
        }
    }
}

// Adjoint of causal_forward. Accumulates into dw (gradient of the write
// weights) and returns dq, dk, dv for the head.
DenseGrads causal_backward(const Matrix& w, std::size_t lanes, bool shift, bool normalized, double tau,
                           const detail::HeadTape& ht, const Matrix& d_o, Matrix& dw)
{
    const std::size_t N = ht.q.rows();
    const std::size_t n = w.cols();
    const std::size_t dh = ht.q.cols();
    DenseGrads g{Matrix(N, dh), Matrix(N, dh), Matrix(N, dh)};
    struct Adj
    {
        Matrix gk, gv;
        Vector gs;
    };
    std::vector<Adj> adj(lanes, Adj{Matrix(n, dh), Matrix(n, dh), Vector(n, 0.0)});
    Matrix dkbar(n, dh), dvbar(n, dh);
    Vector dp(n);

    for (std::size_t t = N; t-- > 0;)
    {
        Adj& A = adj[lane_at(lanes, t)];
        auto dot_t = d_o.row(t);
        auto qt = ht.q.row(t);
        auto pt = ht.p.row(t);

        // Readout.
        double c = 0.0;
        for (std::size_t l = 0; l < n; ++l)
        {
            dp[l] = pt[l] == 0.0 ? 0.0 : dot(ht.vbar.row(t * n + l), dot_t);
            c += pt[l] * dp[l];
        }
        auto dqt = g.dq.row(t);
        for (std::size_t l = 0; l < n; ++l)
        {
            auto dkb = dkbar.row(l);
            auto dvb = dvbar.row(l);
            const double pl = pt[l];
            if (pl == 0.0)
            {
                std::fill(dkb.begin(), dkb.end(), 0.0);
                std::fill(dvb.begin(), dvb.end(), 0.0);
                continue;
            }
            const double ds = pl * (dp[l] - c) / tau;
            auto kb = ht.kbar.row(t * n + l);
            for (std::size_t j = 0; j < dh; ++j)
            {
                dqt[j] += ds * kb[j];
                dkb[j] = ds * qt[j];
                dvb[j] = pl * dot_t[j];
            }
        }

        // Normalization, then accumulate into the lane adjoint.
        for (std::size_t l = 0; l < n; ++l)
        {
            auto dkb = dkbar.row(l);
            auto dvb = dvbar.row(l);
            auto gk = A.gk.row(l);
            auto gv = A.gv.row(l);
            if (!normalized)
            {
                for (std::size_t j = 0; j < dh; ++j)
                {
                    gk[j] += dkb[j];
                    gv[j] += dvb[j];
                }
                continue;
            }
            const double s = ht.norm(t, l);
            if (!(s > 0.0))
                continue;
            for (std::size_t j = 0; j < dh; ++j)
            {
                gk[j] += dkb[j] / s;
                gv[j] += dvb[j] / s;
            }
            A.gs[l] -= (dot(dkb, ht.kbar.row(t * n + l)) + dot(dvb, ht.vbar.row(t * n + l))) / s;
        }

        // Write.
        auto kt = ht.k.row(t);
        auto vt = ht.v.row(t);
        auto dkt = g.dk.row(t);
        auto dvt = g.dv.row(t);
        for (std::size_t l = 0; l < n; ++l)
        {
            const double wl = w(t, l);
            auto gk = A.gk.row(l);
            auto gv = A.gv.row(l);
            if (wl != 0.0)
                for (std::size_t j = 0; j < dh; ++j)
                {
                    dkt[j] += wl * gk[j];
                    dvt[j] += wl * gv[j];
                }
            dw(t, l) += dot(gk, kt) + dot(gv, vt) + (normalized ? A.gs[l] : 0.0);
        }

        // Transition adjoint: U^T moves row i to row i + 1.
        if (shift)
        {
            for (Matrix* m : {&A.gk, &A.gv})
            {
                auto f = m->flat();
                std::copy_backward(f.begin(), f.end() - static_cast<std::ptrdiff_t>(dh), f.end());
                std::fill(f.begin(), f.begin() + static_cast<std::ptrdiff_t>(dh), 0.0);
            }
        }
    }
    return g;
}

// Write weights for the causal recurrence, one row per position.
Matrix causal_weights(const Matrix& xkv, const StrategyParams& sp, const AttentionConfig& cfg)
{
    const StrategySpec& spec = cfg.strategy;
    const std::size_t N = xkv.rows();
    if (spec.kind == StrategyKind::mlp)
        return mlp_alpha_rows(xkv, sp.w_phi, spec);
    if (uses_shift(spec.kind))
    {
        Matrix w(N, spec.n);
        for (std::size_t t = 0; t < N; ++t)
            w(t, spec.n - 1) = 1.0;
        return w;
    }
    return phi_rows(make_control(spec, sp, cfg.site), nullptr, N);
}

}  // namespace

// --------------------------------------------------------------------------
// batch forward / backward

AttentionOutput mha_forward(const Matrix& xq, const Matrix& xkv, const LayerParams& params,
                            const StrategyParams& strategy, const AttentionConfig& cfg)
{
    cfg.validate();
    const std::size_t D = cfg.d_model;
    if (xq.cols() != D || xkv.cols() != D)
        throw DomainError("mha_forward: token width does not match d_model");
    if (cfg.site != Site::cross && xq.rows() != xkv.rows())
        throw DomainError("mha_forward: self-attention needs the same sequence on both sides");
    if (xkv.rows() == 0 || xq.rows() == 0)
        throw DomainError("mha_forward: empty sequence");

    auto tape = std::make_unique<detail::TapeData>();
    detail::TapeData& T = *tape;
    T.params = &params;
    T.strategy = &strategy;
    T.cfg = cfg;
    T.xq = xq;
    T.xkv = xkv;

    const Matrix q = matmul(xq, params.wq);
    const Matrix k = matmul(xkv, params.wk);
    const Matrix v = matmul(xkv, params.wv);
    const double tau = cfg.effective_temperature();
    const StrategyKind kind = cfg.strategy.kind;
    const bool causal = cfg.site == Site::causal;

    if (kind != StrategyKind::softmax && kind != StrategyKind::cluster)
    {
        if (causal)
        {
            T.phi = causal_weights(xkv, strategy, cfg);
            if (kind == StrategyKind::mlp)
                T.alpha = T.phi;
        }
        else
            T.phi = noncausal_phi(xkv, strategy, cfg, &T.alpha, &T.alpha_sum);
    }
    const std::vector<unsigned char> shared_written =
        (!causal && !T.phi.empty()) ? written_columns(T.phi) : std::vector<unsigned char>{};

    T.concat = Matrix(xq.rows(), D);
    T.heads.resize(cfg.heads);
    for (std::size_t h = 0; h < cfg.heads; ++h)
    {
        detail::HeadTape& ht = T.heads[h];
        ht.q = head_cols(q, h, cfg.d_head);
        ht.k = head_cols(k, h, cfg.d_head);
        ht.v = head_cols(v, h, cfg.d_head);
        Matrix o;
        if (kind == StrategyKind::softmax)
        {
            ht.kmem = ht.k;
            ht.vmem = ht.v;
            dense_attend(ht.q, ht.kmem, ht.vmem, causal ? MaskKind::causal : MaskKind::none, {}, tau, ht.p, o);
        }
        else if (causal)
        {
            causal_forward(T.phi, lanes_of(kind), uses_shift(kind), kind == StrategyKind::mlp, tau, ht, o);
        }
        else
        {
            const Matrix* phi = &T.phi;
            std::vector<unsigned char> head_written;
            if (kind == StrategyKind::cluster)
            {
                ht.phi = cluster_phi(ht.k, cfg.strategy, h);
                phi = &ht.phi;
                head_written = written_columns(ht.phi);
            }
            ht.kmem = matmul_tn(*phi, ht.k);
            ht.vmem = matmul_tn(*phi, ht.v);
            dense_attend(ht.q, ht.kmem, ht.vmem, MaskKind::written,
                         kind == StrategyKind::cluster ? head_written : shared_written, tau, ht.p, o);
        }
        T.concat.set_col_slice(h * cfg.d_head, o);
    }

    AttentionOutput result;
    result.out = matmul(T.concat, params.wo);
    result.tape = GradTape(std::move(tape));
    return result;
}

AttentionGrads mha_backward(GradTape& tape, const Matrix& d_out)
{
    if (tape.consumed())
        throw UsageError("mha_backward: tape already consumed");
    detail::TapeData& T = tape.data();
    tape.mark_consumed();

    const AttentionConfig& cfg = T.cfg;
    const LayerParams& params = *T.params;
    const StrategyParams& sp = *T.strategy;
    const std::size_t D = cfg.d_model;
    const std::size_t dh = cfg.d_head;
    if (d_out.rows() != T.xq.rows() || d_out.cols() != D)
        throw DomainError("mha_backward: gradient shape does not match the forward output");

    const StrategyKind kind = cfg.strategy.kind;
    const bool causal = cfg.site == Site::causal;
    const double tau = cfg.effective_temperature();

    AttentionGrads g;
    g.d_params.wo = matmul_tn(T.concat, d_out);
    const Matrix d_concat = matmul_nt(d_out, params.wo);

    Matrix dq(T.xq.rows(), D), dk(T.xkv.rows(), D), dv(T.xkv.rows(), D);
    Matrix dphi(T.phi.rows(), T.phi.cols());
    for (std::size_t h = 0; h < cfg.heads; ++h)
    {
        const detail::HeadTape& ht = T.heads[h];
        const Matrix d_o = head_cols(d_concat, h, dh);
        DenseGrads hg;
        if (kind == StrategyKind::softmax)
        {
            hg = dense_attend_backward(ht.q, ht.kmem, ht.vmem, ht.p, d_o, tau);
        }
        else if (causal)
        {
            hg = causal_backward(T.phi, lanes_of(kind), uses_shift(kind), kind == StrategyKind::mlp, tau, ht, d_o,
                                 dphi);
        }
        else
        {
            const DenseGrads mg = dense_attend_backward(ht.q, ht.kmem, ht.vmem, ht.p, d_o, tau);
            const Matrix& phi = kind == StrategyKind::cluster ? ht.phi : T.phi;
            hg.dq = mg.dq;
            hg.dk = matmul(phi, mg.dk);
            hg.dv = matmul(phi, mg.dv);
            if (kind != StrategyKind::cluster)
            {
                dphi += matmul_nt(ht.k, mg.dk);
                dphi += matmul_nt(ht.v, mg.dv);
            }
        }
        dq.set_col_slice(h * dh, hg.dq);
        dk.set_col_slice(h * dh, hg.dk);
        dv.set_col_slice(h * dh, hg.dv);
    }

    g.d_params.wq = matmul_tn(T.xq, dq);
    g.d_params.wk = matmul_tn(T.xkv, dk);
    g.d_params.wv = matmul_tn(T.xkv, dv);
    g.d_xq = matmul_nt(dq, params.wq);
    g.d_xkv = matmul_nt(dk, params.wk);
    g.d_xkv += matmul_nt(dv, params.wv);

    g.d_strategy = StrategyParams::zeros_for(cfg);
    if (kind == StrategyKind::linformer)
    {
        for (std::size_t i = 0; i < dphi.rows(); ++i)
            for (std::size_t l = 0; l < dphi.cols(); ++l)
                g.d_strategy.w_lf(l, i) = dphi(i, l);
    }
    else if (kind == StrategyKind::mlp)
    {
        // dphi is the gradient of the raw activations in the causal case; in
        // the sequence-normalized case map it through phi = alpha / sum.
        Matrix dalpha = dphi;
        if (!causal)
        {
            for (std::size_t l = 0; l < dphi.cols(); ++l)
            {
                const double s = T.alpha_sum[l];
                if (!(s > 0.0))
                {
                    for (std::size_t i = 0; i < dphi.rows(); ++i)
                        dalpha(i, l) = 0.0;
                    continue;
                }
                double c = 0.0;
                for (std::size_t i = 0; i < dphi.rows(); ++i)
                    c += dphi(i, l) * T.phi(i, l);
                for (std::size_t i = 0; i < dphi.rows(); ++i)
                    dalpha(i, l) = (dphi(i, l) - c) / s;
            }
        }
        Matrix dz(dalpha.rows(), dalpha.cols());
        for (std::size_t i = 0; i < dz.rows(); ++i)
            for (std::size_t l = 0; l < dz.cols(); ++l)
            {
                const double z = dot(sp.w_phi.row(l), T.xkv.row(i));
                dz(i, l) =
                    dalpha(i, l) * activation_grad(z, T.alpha(i, l), cfg.strategy.activation, cfg.strategy.clamp_logits);
            }
        g.d_strategy.w_phi = matmul_tn(dz, T.xkv);
        g.d_xkv += matmul(dz, sp.w_phi);
    }
    return g;
}

// --------------------------------------------------------------------------
// streaming

std::size_t AttentionStream::state_bytes() const noexcept
{
    std::size_t bytes = 0;
    for (const auto& m : memories)
        bytes += m.state_bytes();
    for (std::size_t h = 0; h < key_cache.size(); ++h)
        bytes += 2 * cached * key_cache[h].cols() * sizeof(double);
    return bytes;
}

AttentionStream start_stream(const AttentionConfig& cfg, const StrategyParams& strategy)
{
    cfg.validate();
    if (cfg.site != Site::causal)
        throw DomainError("start_stream: token-by-token decoding needs a causal site");
    AttentionStream s;
    s.site = Site::causal;
    const StrategyKind kind = cfg.strategy.kind;
    if (kind == StrategyKind::softmax)
    {
        s.key_cache.assign(cfg.heads, Matrix(16, cfg.d_head));
        s.value_cache.assign(cfg.heads, Matrix(16, cfg.d_head));
        return s;
    }
    const std::size_t n = cfg.slots();
    for (std::size_t i = 0; i < cfg.heads * lanes_of(kind); ++i)
        s.memories.push_back(BoundedMemory::zeros(n, cfg.d_head, kind == StrategyKind::mlp));
    if (kind != StrategyKind::mlp && !uses_shift(kind))
        s.control = make_control(cfg.strategy, strategy, Site::causal);
    return s;
}

namespace
{

Vector head_slice(const Vector& x, std::size_t h, std::size_t dh)
{
    return Vector(x.begin() + static_cast<std::ptrdiff_t>(h * dh), x.begin() + static_cast<std::ptrdiff_t>((h + 1) * dh));
}

}  // namespace

Vector mha_step(std::span<const double> x, const LayerParams& params, const StrategyParams& strategy,
                const AttentionConfig& cfg, AttentionStream& stream)
{
    if (x.size() != cfg.d_model)
        throw DomainError("mha_step: token width does not match d_model");
    const std::size_t dh = cfg.d_head;
    const double tau = cfg.effective_temperature();
    const StrategyKind kind = cfg.strategy.kind;
    const std::size_t t = ++stream.position;

    const Vector q = matvec_t(params.wq, x);
    const Vector k = matvec_t(params.wk, x);
    const Vector v = matvec_t(params.wv, x);
    Vector concat(cfg.d_model, 0.0);

    if (kind == StrategyKind::softmax)
    {
        if (stream.cached == stream.key_cache.front().rows())
            for (std::size_t h = 0; h < cfg.heads; ++h)
                for (Matrix* m : {&stream.key_cache[h], &stream.value_cache[h]})
                {
                    Matrix grown(2 * m->rows(), dh);
                    std::copy(m->flat().begin(), m->flat().end(), grown.flat().begin());
                    *m = std::move(grown);
                }
        for (std::size_t h = 0; h < cfg.heads; ++h)
        {
            std::copy_n(k.begin() + static_cast<std::ptrdiff_t>(h * dh), dh, stream.key_cache[h].row(stream.cached).begin());
            std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(h * dh), dh,
                        stream.value_cache[h].row(stream.cached).begin());
        }
        ++stream.cached;
        for (std::size_t h = 0; h < cfg.heads; ++h)
        {
            const Vector qh = head_slice(q, h, dh);
            kernels::cached_attention(qh, stream.key_cache[h], stream.value_cache[h], stream.cached, tau,
                                      std::span<double>(concat).subspan(h * dh, dh));
        }
        return matvec_t(params.wo, concat);
    }

    Vector phi;
    TransitionKind transition = TransitionKind::identity;
    if (kind == StrategyKind::mlp)
        phi = mlp_alpha(strategy.w_phi, x, cfg.strategy.activation, cfg.strategy.clamp_logits);
    else if (uses_shift(kind))
    {
        phi.assign(cfg.strategy.n, 0.0);
        phi.back() = 1.0;
        transition = TransitionKind::upper_shift;
    }
    else
        phi = phi_at(*stream.control, t, nullptr, t).phi.weights;

    const std::size_t lanes = lanes_of(kind);
    const std::size_t lane = lane_at(lanes, t - 1);
    for (std::size_t h = 0; h < cfg.heads; ++h)
    {
        BoundedMemory& mem = stream.memories[h * lanes + lane];
        step_inplace(mem, phi, head_slice(k, h, dh), head_slice(v, h, dh), transition);
        if (mem.written_count() == 0)
            continue;
        const Vector qh = head_slice(q, h, dh);
        const Vector o = kind == StrategyKind::mlp ? readout_normalized(qh, mem, tau) : readout(qh, mem, tau);
        std::copy(o.begin(), o.end(), concat.begin() + static_cast<std::ptrdiff_t>(h * dh));
    }
    return matvec_t(params.wo, concat);
}

AttentionStream build_cross_stream(const Matrix& xkv, const LayerParams& params, const StrategyParams& strategy,
                                   const AttentionConfig& cfg)
{
    cfg.validate();
    if (cfg.site == Site::causal)
        throw DomainError("build_cross_stream: causal sites are decoded with start_stream");
    if (xkv.cols() != cfg.d_model || xkv.rows() == 0)
        throw DomainError("build_cross_stream: bad encoder output shape");
    AttentionStream s;
    s.site = cfg.site;
    s.position = xkv.rows();
    const Matrix k = matmul(xkv, params.wk);
    const Matrix v = matmul(xkv, params.wv);
    const StrategyKind kind = cfg.strategy.kind;
    if (kind == StrategyKind::softmax)
    {
        for (std::size_t h = 0; h < cfg.heads; ++h)
        {
            s.key_cache.push_back(head_cols(k, h, cfg.d_head));
            s.value_cache.push_back(head_cols(v, h, cfg.d_head));
        }
        s.cached = xkv.rows();
        return s;
    }
    Matrix shared;
    if (kind != StrategyKind::cluster)
        shared = noncausal_phi(xkv, strategy, cfg, nullptr, nullptr);
    for (std::size_t h = 0; h < cfg.heads; ++h)
    {
        const Matrix kh = head_cols(k, h, cfg.d_head);
        const Matrix vh = head_cols(v, h, cfg.d_head);
        const Matrix phi = kind == StrategyKind::cluster ? cluster_phi(kh, cfg.strategy, h) : shared;
        s.memories.push_back(build_memory(phi, kh, vh));
    }
    return s;
}

Vector mha_read(std::span<const double> xq, const LayerParams& params, const AttentionConfig& cfg,
                const AttentionStream& stream)
{
    if (xq.size() != cfg.d_model)
        throw DomainError("mha_read: query width does not match d_model");
    const std::size_t dh = cfg.d_head;
    const double tau = cfg.effective_temperature();
    const Vector q = matvec_t(params.wq, xq);
    Vector concat(cfg.d_model, 0.0);
    for (std::size_t h = 0; h < cfg.heads; ++h)
    {
        const Vector qh = head_slice(q, h, dh);
        auto dst = std::span<double>(concat).subspan(h * dh, dh);
        if (!stream.key_cache.empty())
            kernels::cached_attention(qh, stream.key_cache[h], stream.value_cache[h], stream.cached, tau, dst);
        else
        {
            const Vector o = readout(qh, stream.memories[h], tau);
            std::copy(o.begin(), o.end(), dst.begin());
        }
    }
    return matvec_t(params.wo, concat);
}

Matrix pseudo_query_memory(const Matrix& w_phi, const Matrix& inputs, const Matrix& keys)
{
    if (w_phi.cols() != inputs.cols())
        throw DomainError("pseudo_query_memory: W_phi width does not match inputs");
    if (inputs.rows() != keys.rows() || inputs.rows() == 0)
        throw DomainError("pseudo_query_memory: inputs and keys differ in length");
    Matrix out(w_phi.rows(), keys.cols());
    Vector scores(inputs.rows());
    for (std::size_t l = 0; l < w_phi.rows(); ++l)
    {
        for (std::size_t i = 0; i < inputs.rows(); ++i)
            scores[i] = dot(w_phi.row(l), inputs.row(i));
        const Vector p = softmax(scores);
        auto row = out.row(l);
        for (std::size_t i = 0; i < inputs.rows(); ++i)
            for (std::size_t j = 0; j < keys.cols(); ++j)
                row[j] += p[i] * keys(i, j);
    }
    return out;
}

}  // namespace abc
