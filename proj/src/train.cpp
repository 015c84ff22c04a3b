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
#include <array>
#include <cmath>
#include <fstream>
#include <iterator>

namespace abc
{

std::string_view to_string(TaskKind kind)
{
    switch (kind)
    {
    case TaskKind::copy:
        return "copy";
    case TaskKind::reverse:
        return "reverse";
    case TaskKind::char_lm:
        return "char_lm";
    }
    return "?";
}

TaskKind parse_task_kind(std::string_view name)
{
    for (TaskKind k : {TaskKind::copy, TaskKind::reverse, TaskKind::char_lm})
        if (to_string(k) == name)
            return k;
    throw DomainError("unknown task '" + std::string(name) + "'");
}

TaskSampler::TaskSampler(const TaskSpec& spec, ModelKind model_kind, std::uint64_t seed)
    : spec_(spec), model_kind_(model_kind), rng_(seed)
{
    if (spec.min_len == 0 || spec.min_len > spec.max_len)
        throw DomainError("task: need 1 <= min_len <= max_len");
    if (spec.vocab <= kFirstContent)
        throw DomainError("task: vocabulary must hold the reserved ids and at least one content token");
    if (spec.kind != TaskKind::char_lm)
        return;
    if (model_kind != ModelKind::lm)
        throw DomainError("task: char_lm needs the decoder-only model");
    std::ifstream in(spec.corpus_path, std::ios::binary);
    if (!in)
        throw IoError("task: cannot read corpus '" + spec.corpus_path + "'");
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (text.size() < spec.max_len + 1)
        throw DomainError("task: corpus shorter than one training window");

    // Frequency rank, ties by byte value; rare bytes share the last id.
    std::array<std::size_t, 256> freq{};
    for (unsigned char c : text)
        ++freq[c];
    std::array<std::size_t, 256> order{};
    for (std::size_t i = 0; i < 256; ++i)
        order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return freq[a] > freq[b]; });
    std::array<std::size_t, 256> id{};
    const std::size_t slots = spec.vocab - kFirstContent;
    for (std::size_t r = 0; r < 256; ++r)
        id[order[r]] = kFirstContent + std::min(r, slots - 1);
    corpus_.reserve(text.size());
    for (unsigned char c : text)
        corpus_.push_back(id[c]);
}

std::size_t TaskSampler::max_sequence() const
{
    if (spec_.kind == TaskKind::char_lm || model_kind_ == ModelKind::seq2seq)
        return spec_.max_len;
    return 2 * spec_.max_len + 1;
}

Example TaskSampler::next()
{
    Example ex;
    const std::size_t len = spec_.min_len + rng_.uniform_index(spec_.max_len - spec_.min_len + 1);
    if (spec_.kind == TaskKind::char_lm)
    {
        const std::size_t start = rng_.uniform_index(corpus_.size() - len);
        ex.input.assign(corpus_.begin() + static_cast<std::ptrdiff_t>(start),
                        corpus_.begin() + static_cast<std::ptrdiff_t>(start + len));
        ex.target.assign(corpus_.begin() + static_cast<std::ptrdiff_t>(start + 1),
                         corpus_.begin() + static_cast<std::ptrdiff_t>(start + len + 1));
        ex.mask.assign(len, 1);
        return ex;
    }

    Tokens src(len);
    for (auto& t : src)
        t = kFirstContent + rng_.uniform_index(spec_.vocab - kFirstContent);
    Tokens out = src;
    if (spec_.kind == TaskKind::reverse)
        std::reverse(out.begin(), out.end());

    if (model_kind_ == ModelKind::seq2seq)
    {
        ex.source = std::move(src);
        ex.input.push_back(kBos);
        ex.input.insert(ex.input.end(), out.begin(), out.end() - 1);
        ex.target = std::move(out);
        ex.mask.assign(len, 1);
        return ex;
    }

    // BOS source SEP output; only the output tokens are scored.
    Tokens seq{kBos};
    seq.insert(seq.end(), src.begin(), src.end());
    seq.push_back(kSep);
    seq.insert(seq.end(), out.begin(), out.end());
    ex.input.assign(seq.begin(), seq.end() - 1);
    ex.target.assign(seq.begin() + 1, seq.end());
    ex.mask.assign(ex.input.size(), 0);
    for (std::size_t i = len + 1; i < ex.input.size(); ++i)
        ex.mask[i] = 1;
    return ex;
}

std::string_view to_string(LrSchedule s)
{
    return s == LrSchedule::cosine ? "cosine" : "constant";
}

LrSchedule parse_lr_schedule(std::string_view name)
{
    for (LrSchedule s : {LrSchedule::constant, LrSchedule::cosine})
        if (to_string(s) == name)
            return s;
    throw DomainError("unknown step-size schedule '" + std::string(name) + "'");
}

double TrainConfig::lr_scale(std::size_t step) const
{
    if (step <= warmup_steps)
        return static_cast<double>(step) / static_cast<double>(warmup_steps + 1);
    if (schedule == LrSchedule::constant)
        return 1.0;
    // Reaches zero one step past the end, so the last update still moves.
    const double span = static_cast<double>(steps - warmup_steps + 1);
    const double progress = static_cast<double>(step - warmup_steps) / span;
    return 0.5 * (1.0 + std::cos(M_PI * progress));
}

double TrainResult::perplexity() const
{
    return std::exp(heldout_loss);
}

Adam::Adam(const ModelParams& shape, AdamConfig cfg) : cfg_(cfg), m_(shape.zeros_like()), v_(shape.zeros_like()) {}

void Adam::step(ModelParams& params, const ModelParams& grads, double scale)
{
    const double lr = cfg_.lr * scale;
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    std::vector<Matrix*> p, m, v;
    std::vector<const Matrix*> g;
    params.visit([&](const std::string&, Matrix& x) { p.push_back(&x); });
    m_.visit([&](const std::string&, Matrix& x) { m.push_back(&x); });
    v_.visit([&](const std::string&, Matrix& x) { v.push_back(&x); });
    grads.visit([&](const std::string&, const Matrix& x) { g.push_back(&x); });
    if (p.size() != g.size() || p.size() != m.size())
        throw DomainError("Adam: gradient layout does not match the parameters");
    for (std::size_t a = 0; a < p.size(); ++a)
    {
        if (p[a]->size() != g[a]->size())
            throw DomainError("Adam: gradient shape does not match the parameters");
        auto pf = p[a]->flat();
        auto gf = g[a]->flat();
        auto mf = m[a]->flat();
        auto vf = v[a]->flat();
        for (std::size_t i = 0; i < pf.size(); ++i)
        {
            mf[i] = cfg_.beta1 * mf[i] + (1.0 - cfg_.beta1) * gf[i];
            vf[i] = cfg_.beta2 * vf[i] + (1.0 - cfg_.beta2) * gf[i] * gf[i];
            pf[i] -= lr * (mf[i] / c1) / (std::sqrt(vf[i] / c2) + cfg_.eps);
        }
    }
}

namespace
{

void check_task_fits(const ToyModel& model, const TaskSpec& task, const TaskSampler& sampler)
{
    if (sampler.max_sequence() > model.config.max_positions)
        throw DomainError("train: task sequences of up to " + std::to_string(sampler.max_sequence()) +
                          " tokens exceed max positions " + std::to_string(model.config.max_positions));
    if (task.vocab > model.config.vocab)
        throw DomainError("train: task vocabulary larger than the model's");
}

// Held-out examples use a stream unrelated to the training one.
constexpr std::uint64_t kHeldoutSalt = 0x5eed0f4e1d0u;

}  // namespace

TrainResult evaluate_task(const ToyModel& model, const TaskSpec& task, std::size_t count, std::uint64_t seed)
{
    TaskSampler sampler(task, model.config.kind, seed ^ kHeldoutSalt);
    check_task_fits(model, task, sampler);
    double loss = 0.0;
    std::size_t tokens = 0, correct = 0;
    for (std::size_t i = 0; i < count; ++i)
    {
        const LossGrad r = evaluate(model, sampler.next());
        loss += r.loss;
        tokens += r.tokens;
        correct += r.correct;
    }
    TrainResult out;
    if (tokens > 0)
    {
        out.heldout_loss = loss / static_cast<double>(tokens);
        out.heldout_accuracy = static_cast<double>(correct) / static_cast<double>(tokens);
    }
    return out;
}

TrainResult train(ToyModel& model, const TaskSpec& task, const TrainConfig& cfg,
                  const std::function<void(const CurvePoint&)>& on_step)
{
    if (cfg.batch == 0)
        throw DomainError("train: batch size must be positive");
    if (cfg.warmup_steps > cfg.steps)
        throw DomainError("train: warmup longer than training");
    TaskSampler sampler(task, model.config.kind, cfg.seed);
    check_task_fits(model, task, sampler);
    Adam adam(model.params, model.config.adam);

    TrainResult result;
    for (std::size_t step = 1; step <= cfg.steps; ++step)
    {
        ModelParams grads = model.params.zeros_like();
        double loss = 0.0;
        std::size_t tokens = 0, correct = 0;
        for (std::size_t b = 0; b < cfg.batch; ++b)
        {
            const LossGrad r = loss_and_grad(model, sampler.next(), grads, cfg.clamp_logits);
            loss += r.loss;
            tokens += r.tokens;
            correct += r.correct;
        }
        if (!std::isfinite(loss))
            throw NumericError("train: loss became non-finite at step " + std::to_string(step));
        const double scale = tokens ? 1.0 / static_cast<double>(tokens) : 0.0;
        grads.visit([&](const std::string&, Matrix& g) { g *= scale; });
        adam.step(model.params, grads, cfg.lr_scale(step));

        CurvePoint pt{step, loss * scale, static_cast<double>(correct) * scale};
        result.curve.push_back(pt);
        if (on_step)
            on_step(pt);
    }
    const TrainResult held = evaluate_task(model, task, cfg.eval_examples, cfg.seed);
    result.heldout_loss = held.heldout_loss;
    result.heldout_accuracy = held.heldout_accuracy;
    return result;
}

}  // namespace abc
