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

#include "abc/model.hpp"

#include <algorithm>
#include <cmath>

namespace abc
{

namespace
{

constexpr double kLnEps = 1e-5;

void add_into(Matrix& dst, const Matrix& src)
{
    if (src.empty())
        return;
    if (dst.empty())
        dst = src;
    else
        dst += src;
}

void add_into(StrategyParams& dst, const StrategyParams& src)
{
    add_into(dst.w_phi, src.w_phi);
    add_into(dst.w_lf, src.w_lf);
}

void add_into(LayerParams& dst, const LayerParams& src)
{
    add_into(dst.wq, src.wq);
    add_into(dst.wk, src.wk);
    add_into(dst.wv, src.wv);
    add_into(dst.wo, src.wo);
}

LayerNormParams ln_init(std::size_t d)
{
    return {Matrix(1, d, 1.0), Matrix(1, d, 0.0)};
}

// ---- layer norm ----------------------------------------------------------

struct LnCache
{
    Matrix xhat;
    Vector rstd;
};

Matrix ln_forward(const Matrix& x, const LayerNormParams& p, LnCache* cache)
{
    const std::size_t d = x.cols();
    Matrix y(x.rows(), d);
    if (cache)
    {
        cache->xhat = Matrix(x.rows(), d);
        cache->rstd.assign(x.rows(), 0.0);
    }
    for (std::size_t i = 0; i < x.rows(); ++i)
    {
        auto xr = x.row(i);
        double mean = 0.0;
        for (double v : xr)
            mean += v;
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (double v : xr)
            var += (v - mean) * (v - mean);
        var /= static_cast<double>(d);
        const double rstd = 1.0 / std::sqrt(var + kLnEps);
        auto yr = y.row(i);
        for (std::size_t j = 0; j < d; ++j)
        {
            const double xh = (xr[j] - mean) * rstd;
            yr[j] = xh * p.gamma(0, j) + p.beta(0, j);
            if (cache)
                cache->xhat(i, j) = xh;
        }
        if (cache)
            cache->rstd[i] = rstd;
    }
    return y;
}

Vector ln_row(std::span<const double> x, const LayerNormParams& p)
{
    return ln_forward(Matrix::row_vector(x), p, nullptr).row_copy(0);
}

Matrix ln_backward(const Matrix& dy, const LayerNormParams& p, const LnCache& c, LayerNormParams& g)
{
    const std::size_t d = dy.cols();
    if (g.gamma.empty())
        g = {Matrix(1, d), Matrix(1, d)};
    Matrix dx(dy.rows(), d);
    Vector dxhat(d);
    for (std::size_t i = 0; i < dy.rows(); ++i)
    {
        double m1 = 0.0, m2 = 0.0;
        for (std::size_t j = 0; j < d; ++j)
        {
            g.gamma(0, j) += dy(i, j) * c.xhat(i, j);
            g.beta(0, j) += dy(i, j);
            dxhat[j] = dy(i, j) * p.gamma(0, j);
            m1 += dxhat[j];
            m2 += dxhat[j] * c.xhat(i, j);
        }
        m1 /= static_cast<double>(d);
        m2 /= static_cast<double>(d);
        for (std::size_t j = 0; j < d; ++j)
            dx(i, j) = c.rstd[i] * (dxhat[j] - m1 - c.xhat(i, j) * m2);
    }
    return dx;
}

// ---- feed-forward --------------------------------------------------------

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)

double gelu(double h)
{
    return 0.5 * h * (1.0 + std::tanh(kGeluC * (h + 0.044715 * h * h * h)));
}

double gelu_grad(double h)
{
    const double th = std::tanh(kGeluC * (h + 0.044715 * h * h * h));
    return 0.5 * (1.0 + th) + 0.5 * h * (1.0 - th * th) * kGeluC * (1.0 + 3.0 * 0.044715 * h * h);
}

void add_bias(Matrix& m, const Matrix& b)
{
    for (std::size_t i = 0; i < m.rows(); ++i)
    {
        auto r = m.row(i);
        for (std::size_t j = 0; j < r.size(); ++j)
            r[j] += b(0, j);
    }
}

Matrix column_sum_row(const Matrix& m)
{
    Matrix s(1, m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j)
            s(0, j) += m(i, j);
    return s;
}

struct FfnCache
{
    Matrix x, h, a;
};

Matrix ffn_forward(const Matrix& x, const FfnParams& p, FfnCache* cache)
{
    Matrix h = matmul(x, p.w1);
    add_bias(h, p.b1);
    Matrix a(h.rows(), h.cols());
    for (std::size_t i = 0; i < h.size(); ++i)
        a.flat()[i] = gelu(h.flat()[i]);
    Matrix y = matmul(a, p.w2);
    add_bias(y, p.b2);
    if (cache)
    {
        cache->x = x;
        cache->h = std::move(h);
        cache->a = std::move(a);
    }
    return y;
}

Matrix ffn_backward(const Matrix& dy, const FfnParams& p, const FfnCache& c, FfnParams& g)
{
    add_into(g.w2, matmul_tn(c.a, dy));
    add_into(g.b2, column_sum_row(dy));
    Matrix dh = matmul_nt(dy, p.w2);
    for (std::size_t i = 0; i < dh.size(); ++i)
        dh.flat()[i] *= gelu_grad(c.h.flat()[i]);
    add_into(g.w1, matmul_tn(c.x, dh));
    add_into(g.b1, column_sum_row(dh));
    return matmul_nt(dh, p.w1);
}

// ---- embedding -----------------------------------------------------------

Matrix embed(const ModelParams& p, const Tokens& tokens, std::size_t vocab)
{
    if (tokens.size() > p.positions.rows())
        throw DomainError("model: sequence of " + std::to_string(tokens.size()) + " tokens exceeds max positions " +
                          std::to_string(p.positions.rows()));
    Matrix x(tokens.size(), p.embed.cols());
    for (std::size_t i = 0; i < tokens.size(); ++i)
    {
        if (tokens[i] >= vocab)
            throw DomainError("model: token id " + std::to_string(tokens[i]) + " outside the vocabulary");
        auto r = x.row(i);
        auto e = p.embed.row(tokens[i]);
        auto q = p.positions.row(i);
        for (std::size_t j = 0; j < r.size(); ++j)
            r[j] = e[j] + q[j];
    }
    return x;
}

void embed_backward(const Matrix& dx, const Tokens& tokens, ModelParams& g)
{
    for (std::size_t i = 0; i < tokens.size(); ++i)
    {
        auto d = dx.row(i);
        auto e = g.embed.row(tokens[i]);
        auto q = g.positions.row(i);
        for (std::size_t j = 0; j < d.size(); ++j)
        {
            e[j] += d[j];
            q[j] += d[j];
        }
    }
}

// ---- whole-model forward with tapes --------------------------------------

struct BlockTape
{
    LnCache ln_self, ln_cross, ln_ffn;
    GradTape self, cross;
    FfnCache ffn;
};

struct ModelTape
{
    std::vector<BlockTape> encoder, decoder;
    LnCache enc_final, dec_final;
    Matrix enc_out;
    Matrix dec_hidden;  ///< final LayerNorm output
};

AttentionConfig site_config(const ToyModel& m, Site site, bool clamp)
{
    AttentionConfig cfg = m.config.attention(site);
    cfg.strategy.clamp_logits = clamp;
    return cfg;
}

Matrix run_encoder(const ToyModel& m, const Tokens& source, ModelTape* tape, bool clamp)
{
    const auto& P = m.params;
    const AttentionConfig cfg = site_config(m, Site::encoder_self, clamp);
    Matrix x = embed(P, source, m.config.vocab);
    if (tape)
        tape->encoder.resize(m.config.layers);
    for (std::size_t l = 0; l < m.config.layers; ++l)
    {
        const BlockParams& B = P.encoder[l];
        BlockTape* bt = tape ? &tape->encoder[l] : nullptr;
        const Matrix h = ln_forward(x, B.ln_self, bt ? &bt->ln_self : nullptr);
        AttentionOutput a = mha_forward(h, h, B.self, m.strategy(Site::encoder_self, l), cfg);
        x += a.out;
        if (bt)
            bt->self = std::move(a.tape);
        const Matrix h2 = ln_forward(x, B.ln_ffn, bt ? &bt->ln_ffn : nullptr);
        x += ffn_forward(h2, B.ffn, bt ? &bt->ffn : nullptr);
    }
    return ln_forward(x, P.encoder_final, tape ? &tape->enc_final : nullptr);
}

Matrix run_decoder(const ToyModel& m, const Tokens& input, const Matrix* enc, ModelTape* tape, bool clamp)
{
    const auto& P = m.params;
    const AttentionConfig self_cfg = site_config(m, Site::causal, clamp);
    const AttentionConfig cross_cfg = site_config(m, Site::cross, clamp);
    Matrix x = embed(P, input, m.config.vocab);
    if (tape)
        tape->decoder.resize(m.config.layers);
    for (std::size_t l = 0; l < m.config.layers; ++l)
    {
        const BlockParams& B = P.decoder[l];
        BlockTape* bt = tape ? &tape->decoder[l] : nullptr;
        const Matrix h = ln_forward(x, B.ln_self, bt ? &bt->ln_self : nullptr);
        AttentionOutput a = mha_forward(h, h, B.self, m.strategy(Site::causal, l), self_cfg);
        x += a.out;
        if (bt)
            bt->self = std::move(a.tape);
        if (enc)
        {
            const Matrix hc = ln_forward(x, B.ln_cross, bt ? &bt->ln_cross : nullptr);
            AttentionOutput c = mha_forward(hc, *enc, B.cross, m.strategy(Site::cross, l), cross_cfg);
            x += c.out;
            if (bt)
                bt->cross = std::move(c.tape);
        }
        const Matrix h2 = ln_forward(x, B.ln_ffn, bt ? &bt->ln_ffn : nullptr);
        x += ffn_forward(h2, B.ffn, bt ? &bt->ffn : nullptr);
    }
    Matrix hf = ln_forward(x, P.decoder_final, tape ? &tape->dec_final : nullptr);
    Matrix logits = matmul(hf, P.w_out);
    add_bias(logits, P.b_out);
    if (tape)
        tape->dec_hidden = std::move(hf);
    return logits;
}

void check_example(const ToyModel& m, const Example& ex)
{
    if (ex.input.empty())
        throw DomainError("model: empty input sequence");
    if (m.config.kind == ModelKind::seq2seq && ex.source.empty())
        throw DomainError("model: encoder-decoder model needs a source sequence");
    if (!ex.target.empty() && ex.target.size() != ex.input.size())
        throw DomainError("model: target length differs from input length");
    if (!ex.mask.empty() && ex.mask.size() != ex.input.size())
        throw DomainError("model: mask length differs from input length");
}

StrategyParams& strategy_grad(ModelParams& g, const ToyModelConfig& cfg, Site site, std::size_t layer)
{
    if (cfg.tie_phi)
        return site == Site::encoder_self ? g.tied_encoder_self : site == Site::causal ? g.tied_causal : g.tied_cross;
    return site == Site::encoder_self ? g.encoder[layer].self_strategy
           : site == Site::causal     ? g.decoder[layer].self_strategy
                                      : g.decoder[layer].cross_strategy;
}

LossGrad score(const Matrix& logits, const Example& ex, Matrix* dlogits)
{
    LossGrad r;
    if (dlogits)
        *dlogits = Matrix(logits.rows(), logits.cols());
    for (std::size_t i = 0; i < logits.rows(); ++i)
    {
        if (!ex.mask.empty() && !ex.mask[i])
            continue;
        const std::size_t y = ex.target[i];
        if (y >= logits.cols())
            throw DomainError("model: target id outside the vocabulary");
        const Vector p = softmax(logits.row(i));
        r.loss -= std::log(std::max(p[y], 1e-300));
        ++r.tokens;
        const auto best = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
        if (best == y)
            ++r.correct;
        if (dlogits)
        {
            auto d = dlogits->row(i);
            for (std::size_t j = 0; j < p.size(); ++j)
                d[j] = p[j];
            d[y] -= 1.0;
        }
    }
    return r;
}

}  // namespace

// --------------------------------------------------------------------------
// config and parameters

AttentionConfig ToyModelConfig::attention(Site site) const
{
    AttentionConfig cfg;
    cfg.heads = heads;
    cfg.d_model = d_model;
    cfg.d_head = heads ? d_model / heads : 0;
    cfg.site = site;
    cfg.strategy = site == Site::encoder_self ? encoder_self : site == Site::causal ? causal : cross;
    cfg.strategy.max_len = max_positions;
    cfg.tie_phi_across_layers = tie_phi;
    return cfg;
}

void ToyModelConfig::validate() const
{
    if (layers == 0 || d_model == 0 || ffn_mult == 0)
        throw DomainError("model config: layers, d_model and ffn_mult must be positive");
    if (vocab <= kFirstContent)
        throw DomainError("model config: vocabulary must hold the reserved ids and at least one content token");
    if (max_positions == 0)
        throw DomainError("model config: max_positions must be positive");
    if (!(adam.lr > 0.0) || !(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0) ||
        !(adam.eps > 0.0))
        throw DomainError("model config: invalid optimizer settings");
    attention(Site::causal).validate();
    if (kind == ModelKind::seq2seq)
    {
        attention(Site::encoder_self).validate();
        attention(Site::cross).validate();
    }
}

void ModelParams::visit(const std::function<void(const std::string&, Matrix&)>& fn)
{
    auto v = [&](const std::string& name, Matrix& m) {
        if (!m.empty())
            fn(name, m);
    };
    auto block = [&](const std::string& pre, BlockParams& b) {
        v(pre + ".ln_self.gamma", b.ln_self.gamma);
        v(pre + ".ln_self.beta", b.ln_self.beta);
        v(pre + ".self.wq", b.self.wq);
        v(pre + ".self.wk", b.self.wk);
        v(pre + ".self.wv", b.self.wv);
        v(pre + ".self.wo", b.self.wo);
        v(pre + ".self.w_phi", b.self_strategy.w_phi);
        v(pre + ".self.w_lf", b.self_strategy.w_lf);
        v(pre + ".ln_cross.gamma", b.ln_cross.gamma);
        v(pre + ".ln_cross.beta", b.ln_cross.beta);
        v(pre + ".cross.wq", b.cross.wq);
        v(pre + ".cross.wk", b.cross.wk);
        v(pre + ".cross.wv", b.cross.wv);
        v(pre + ".cross.wo", b.cross.wo);
        v(pre + ".cross.w_phi", b.cross_strategy.w_phi);
        v(pre + ".cross.w_lf", b.cross_strategy.w_lf);
        v(pre + ".ln_ffn.gamma", b.ln_ffn.gamma);
        v(pre + ".ln_ffn.beta", b.ln_ffn.beta);
        v(pre + ".ffn.w1", b.ffn.w1);
        v(pre + ".ffn.b1", b.ffn.b1);
        v(pre + ".ffn.w2", b.ffn.w2);
        v(pre + ".ffn.b2", b.ffn.b2);
    };
    v("embed", embed);
    v("positions", positions);
    for (std::size_t l = 0; l < encoder.size(); ++l)
        block("encoder." + std::to_string(l), encoder[l]);
    v("encoder_final.gamma", encoder_final.gamma);
    v("encoder_final.beta", encoder_final.beta);
    for (std::size_t l = 0; l < decoder.size(); ++l)
        block("decoder." + std::to_string(l), decoder[l]);
    v("decoder_final.gamma", decoder_final.gamma);
    v("decoder_final.beta", decoder_final.beta);
    v("w_out", w_out);
    v("b_out", b_out);
    v("tied.encoder_self.w_phi", tied_encoder_self.w_phi);
    v("tied.encoder_self.w_lf", tied_encoder_self.w_lf);
    v("tied.causal.w_phi", tied_causal.w_phi);
    v("tied.causal.w_lf", tied_causal.w_lf);
    v("tied.cross.w_phi", tied_cross.w_phi);
    v("tied.cross.w_lf", tied_cross.w_lf);
}

void ModelParams::visit(const std::function<void(const std::string&, const Matrix&)>& fn) const
{
    const_cast<ModelParams*>(this)->visit([&](const std::string& name, Matrix& m) { fn(name, m); });
}

std::size_t ModelParams::parameter_count() const
{
    std::size_t n = 0;
    visit([&](const std::string&, const Matrix& m) { n += m.size(); });
    return n;
}

ModelParams ModelParams::zeros_like() const
{
    ModelParams z = *this;
    z.visit([](const std::string&, Matrix& m) { m.fill(0.0); });
    return z;
}

ToyModel ToyModel::init(const ToyModelConfig& cfg)
{
    cfg.validate();
    ToyModel m;
    m.config = cfg;
    SeededRng rng(cfg.seed);
    const std::size_t D = cfg.d_model;
    const std::size_t F = cfg.d_model * cfg.ffn_mult;
    ModelParams& P = m.params;
    P.embed = rng.normal_matrix(cfg.vocab, D, 0.02);
    P.positions = rng.normal_matrix(cfg.max_positions, D, 0.02);

    auto strategy_init = [&](Site site) {
        return StrategyParams::init(cfg.attention(site), rng);
    };
    auto block_init = [&](bool decoder) {
        BlockParams b;
        b.ln_self = ln_init(D);
        b.self = LayerParams::init(D, rng);
        const Site self_site = decoder ? Site::causal : Site::encoder_self;
        if (!cfg.tie_phi)
            b.self_strategy = strategy_init(self_site);
        if (decoder && cfg.kind == ModelKind::seq2seq)
        {
            b.ln_cross = ln_init(D);
            b.cross = LayerParams::init(D, rng);
            if (!cfg.tie_phi)
                b.cross_strategy = strategy_init(Site::cross);
        }
        b.ln_ffn = ln_init(D);
        b.ffn.w1 = rng.normal_matrix(D, F, 1.0 / std::sqrt(static_cast<double>(D)));
        b.ffn.b1 = Matrix(1, F);
        b.ffn.w2 = rng.normal_matrix(F, D, 1.0 / std::sqrt(static_cast<double>(F)));
        b.ffn.b2 = Matrix(1, D);
        return b;
    };

    if (cfg.kind == ModelKind::seq2seq)
    {
        for (std::size_t l = 0; l < cfg.layers; ++l)
            P.encoder.push_back(block_init(false));
        P.encoder_final = ln_init(D);
    }
    for (std::size_t l = 0; l < cfg.layers; ++l)
        P.decoder.push_back(block_init(true));
    P.decoder_final = ln_init(D);
    P.w_out = rng.normal_matrix(D, cfg.vocab, 0.02);
    P.b_out = Matrix(1, cfg.vocab);
    if (cfg.tie_phi)
    {
        P.tied_causal = strategy_init(Site::causal);
        if (cfg.kind == ModelKind::seq2seq)
        {
            P.tied_encoder_self = strategy_init(Site::encoder_self);
            P.tied_cross = strategy_init(Site::cross);
        }
    }
    return m;
}

const StrategyParams& ToyModel::strategy(Site site, std::size_t layer) const
{
    if (config.tie_phi)
        return site == Site::encoder_self ? params.tied_encoder_self
               : site == Site::causal     ? params.tied_causal
                                          : params.tied_cross;
    return site == Site::encoder_self ? params.encoder.at(layer).self_strategy
           : site == Site::causal     ? params.decoder.at(layer).self_strategy
                                      : params.decoder.at(layer).cross_strategy;
}

std::size_t ToyModel::strategy_parameter_count() const
{
    std::size_t n = 0;
    params.visit([&](const std::string& name, const Matrix& m) {
        if (name.ends_with(".w_phi") || name.ends_with(".w_lf"))
            n += m.size();
    });
    return n;
}

// --------------------------------------------------------------------------
// forward / backward

Matrix forward_logits(const ToyModel& model, const Example& ex)
{
    check_example(model, ex);
    if (model.config.kind == ModelKind::seq2seq)
    {
        const Matrix enc = run_encoder(model, ex.source, nullptr, false);
        return run_decoder(model, ex.input, &enc, nullptr, false);
    }
    return run_decoder(model, ex.input, nullptr, nullptr, false);
}

LossGrad evaluate(const ToyModel& model, const Example& ex)
{
    return score(forward_logits(model, ex), ex, nullptr);
}

LossGrad loss_and_grad(const ToyModel& model, const Example& ex, ModelParams& g, bool clamp)
{
    check_example(model, ex);
    if (ex.target.empty())
        throw DomainError("loss_and_grad: example has no targets");
    const ToyModelConfig& cfg = model.config;
    const ModelParams& P = model.params;
    const bool s2s = cfg.kind == ModelKind::seq2seq;

    ModelTape tape;
    Matrix enc;
    if (s2s)
        enc = run_encoder(model, ex.source, &tape, clamp);
    const Matrix logits = run_decoder(model, ex.input, s2s ? &enc : nullptr, &tape, clamp);
    Matrix dlogits;
    const LossGrad result = score(logits, ex, &dlogits);

    add_into(g.w_out, matmul_tn(tape.dec_hidden, dlogits));
    add_into(g.b_out, column_sum_row(dlogits));
    Matrix dx = ln_backward(matmul_nt(dlogits, P.w_out), P.decoder_final, tape.dec_final, g.decoder_final);

    Matrix d_enc;
    if (s2s)
        d_enc = Matrix(enc.rows(), enc.cols());
    for (std::size_t l = cfg.layers; l-- > 0;)
    {
        const BlockParams& B = P.decoder[l];
        BlockParams& G = g.decoder[l];
        BlockTape& bt = tape.decoder[l];
        dx += ln_backward(ffn_backward(dx, B.ffn, bt.ffn, G.ffn), B.ln_ffn, bt.ln_ffn, G.ln_ffn);
        if (s2s)
        {
            AttentionGrads cg = mha_backward(bt.cross, dx);
            add_into(G.cross, cg.d_params);
            add_into(strategy_grad(g, cfg, Site::cross, l), cg.d_strategy);
            d_enc += cg.d_xkv;
            dx += ln_backward(cg.d_xq, B.ln_cross, bt.ln_cross, G.ln_cross);
        }
        AttentionGrads sg = mha_backward(bt.self, dx);
        add_into(G.self, sg.d_params);
        add_into(strategy_grad(g, cfg, Site::causal, l), sg.d_strategy);
        sg.d_xq += sg.d_xkv;
        dx += ln_backward(sg.d_xq, B.ln_self, bt.ln_self, G.ln_self);
    }
    embed_backward(dx, ex.input, g);

    if (s2s)
    {
        Matrix de = ln_backward(d_enc, P.encoder_final, tape.enc_final, g.encoder_final);
        for (std::size_t l = cfg.layers; l-- > 0;)
        {
            const BlockParams& B = P.encoder[l];
            BlockParams& G = g.encoder[l];
            BlockTape& bt = tape.encoder[l];
            de += ln_backward(ffn_backward(de, B.ffn, bt.ffn, G.ffn), B.ln_ffn, bt.ln_ffn, G.ln_ffn);
            AttentionGrads sg = mha_backward(bt.self, de);
            add_into(G.self, sg.d_params);
            add_into(strategy_grad(g, cfg, Site::encoder_self, l), sg.d_strategy);
            sg.d_xq += sg.d_xkv;
            de += ln_backward(sg.d_xq, B.ln_self, bt.ln_self, G.ln_self);
        }
        embed_backward(de, ex.source, g);
    }
    return result;
}

// --------------------------------------------------------------------------
// streaming decode

std::size_t DecoderState::state_bytes() const noexcept
{
    std::size_t b = 0;
    for (const auto& s : self)
        b += s.state_bytes();
    return b;
}

DecoderState start_decoding(const ToyModel& model, const Tokens& source)
{
    DecoderState st;
    const ToyModelConfig& cfg = model.config;
    const AttentionConfig self_cfg = cfg.attention(Site::causal);
    for (std::size_t l = 0; l < cfg.layers; ++l)
        st.self.push_back(start_stream(self_cfg, model.strategy(Site::causal, l)));
    if (cfg.kind == ModelKind::seq2seq)
    {
        if (source.empty())
            throw DomainError("start_decoding: encoder-decoder model needs a source sequence");
        const Matrix enc = run_encoder(model, source, nullptr, false);
        const AttentionConfig cross_cfg = cfg.attention(Site::cross);
        for (std::size_t l = 0; l < cfg.layers; ++l)
            st.cross.push_back(
                build_cross_stream(enc, model.params.decoder[l].cross, model.strategy(Site::cross, l), cross_cfg));
    }
    return st;
}

Vector decode_step(const ToyModel& model, DecoderState& st, std::size_t token)
{
    const ToyModelConfig& cfg = model.config;
    const ModelParams& P = model.params;
    if (token >= cfg.vocab)
        throw DomainError("decode_step: token id outside the vocabulary");
    if (st.position >= cfg.max_positions)
        throw DomainError("decode_step: sequence exceeds max positions");
    const AttentionConfig self_cfg = cfg.attention(Site::causal);
    const AttentionConfig cross_cfg = cfg.attention(Site::cross);

    Vector x(cfg.d_model);
    for (std::size_t j = 0; j < cfg.d_model; ++j)
        x[j] = P.embed(token, j) + P.positions(st.position, j);
    auto add = [&](const Vector& y) {
        for (std::size_t j = 0; j < x.size(); ++j)
            x[j] += y[j];
    };
    for (std::size_t l = 0; l < cfg.layers; ++l)
    {
        const BlockParams& B = P.decoder[l];
        add(mha_step(ln_row(x, B.ln_self), B.self, model.strategy(Site::causal, l), self_cfg, st.self[l]));
        if (!st.cross.empty())
            add(mha_read(ln_row(x, B.ln_cross), B.cross, cross_cfg, st.cross[l]));
        add(ffn_forward(Matrix::row_vector(ln_row(x, B.ln_ffn)), B.ffn, nullptr).row_copy(0));
    }
    ++st.position;
    const Vector hf = ln_row(x, P.decoder_final);
    Vector logits = matvec_t(P.w_out, hf);
    for (std::size_t j = 0; j < logits.size(); ++j)
        logits[j] += P.b_out(0, j);
    return logits;
}

namespace
{

std::size_t argmax(std::span<const double> v)
{
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

Tokens greedy_decode(const ToyModel& model, const Tokens& prompt, std::size_t max_len, DecodeMode mode)
{
    Tokens out;
    if (max_len == 0)
        return out;
    const bool s2s = model.config.kind == ModelKind::seq2seq;
    Tokens prefix = s2s ? Tokens{kBos} : prompt;
    if (prefix.empty())
        prefix.push_back(kBos);
    if (prefix.size() + max_len - 1 > model.config.max_positions)
        throw DomainError("greedy_decode: prompt plus output exceed max positions");

    if (mode == DecodeMode::batch)
    {
        Example ex;
        if (s2s)
            ex.source = prompt;
        ex.input = prefix;
        for (std::size_t i = 0; i < max_len; ++i)
        {
            const Matrix logits = forward_logits(model, ex);
            const std::size_t next = argmax(logits.row(logits.rows() - 1));
            out.push_back(next);
            ex.input.push_back(next);
        }
        return out;
    }

    DecoderState st = start_decoding(model, s2s ? prompt : Tokens{});
    Vector logits;
    for (std::size_t tok : prefix)
        logits = decode_step(model, st, tok);
    for (std::size_t i = 0; i < max_len; ++i)
    {
        const std::size_t next = argmax(logits);
        out.push_back(next);
        if (i + 1 < max_len)
            logits = decode_step(model, st, next);
    }
    return out;
}

}  // namespace abc
