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

#include "doctest.h"

#include "abc/config.hpp"
#include "abc/model.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>

using namespace abc;

namespace
{

ToyModelConfig tiny(ModelKind kind, StrategyKind strategy, std::size_t n = 3)
{
    ToyModelConfig c;
    c.kind = kind;
    c.layers = 2;
    c.d_model = 8;
    c.heads = 2;
    c.ffn_mult = 2;
    c.vocab = 9;
    c.max_positions = 16;
    c.causal = make_spec(strategy, n);
    c.cross = make_spec(strategy == StrategyKind::window || strategy == StrategyKind::dilated ? StrategyKind::mlp
                                                                                               : strategy,
                        n);
    c.encoder_self = make_spec(StrategyKind::softmax);
    c.seed = 3;
    return c;
}

Example random_example(const ToyModelConfig& c, std::size_t len, SeededRng& rng)
{
    Example ex;
    for (std::size_t i = 0; i < len; ++i)
    {
        ex.input.push_back(rng.uniform_index(c.vocab));
        ex.target.push_back(rng.uniform_index(c.vocab));
    }
    ex.mask.assign(len, 1);
    ex.mask[0] = 0;
    if (c.kind == ModelKind::seq2seq)
        for (std::size_t i = 0; i < len + 1; ++i)
            ex.source.push_back(rng.uniform_index(c.vocab));
    return ex;
}

std::string read_bytes(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string temp_path(const std::string& name)
{
    return (std::filesystem::temp_directory_path() / ("abc_test_" + name)).string();
}

}  // namespace

TEST_CASE("untrained model predicts close to uniform")
{
    ToyModelConfig c;
    c.vocab = 32;
    const ToyModel m = ToyModel::init(c);
    SeededRng rng(1);
    Example ex = random_example(c, 40, rng);
    ex.mask.assign(40, 1);
    const LossGrad r = evaluate(m, ex);
    const double per_token = r.loss / static_cast<double>(r.tokens);
    CHECK(std::abs(per_token - std::log(32.0)) <= 0.05 * std::log(32.0));
}

TEST_CASE("identity control reproduces the softmax transformer")
{
    for (ModelKind kind : {ModelKind::lm, ModelKind::seq2seq})
    {
        ToyModelConfig soft = tiny(kind, StrategyKind::softmax);
        soft.encoder_self = make_spec(StrategyKind::softmax);
        ToyModelConfig ident = soft;
        ident.causal = make_spec(StrategyKind::identity);
        ident.cross = make_spec(StrategyKind::identity);
        ident.encoder_self = make_spec(StrategyKind::identity);
        const ToyModel a = ToyModel::init(soft);
        ToyModel b = ToyModel::init(ident);
        b.params = a.params;
        SeededRng rng(2);
        const Example ex = random_example(soft, 12, rng);
        CHECK(max_abs_diff(forward_logits(a, ex), forward_logits(b, ex)) <= 1e-8);
    }
}

TEST_CASE("batch logits equal streaming logits")
{
    for (ModelKind kind : {ModelKind::lm, ModelKind::seq2seq})
        for (StrategyKind s : {StrategyKind::softmax, StrategyKind::mlp, StrategyKind::window, StrategyKind::dilated,
                               StrategyKind::linformer, StrategyKind::random, StrategyKind::compressive})
        {
            CAPTURE(to_string(s));
            const ToyModel m = ToyModel::init(tiny(kind, s));
            SeededRng rng(4);
            const Example ex = random_example(m.config, 14, rng);
            const Matrix batch = forward_logits(m, ex);
            DecoderState st = start_decoding(m, ex.source);
            double worst = 0.0;
            for (std::size_t t = 0; t < ex.input.size(); ++t)
                worst = std::max(worst, max_abs_diff(decode_step(m, st, ex.input[t]), batch.row(t)));
            CHECK(worst <= 1e-8);
        }
}

TEST_CASE("model gradients match finite differences")
{
    struct Case
    {
        ModelKind kind;
        StrategyKind strategy;
        MlpActivation act;
        bool tie;
    };
    const Case cases[] = {
        {ModelKind::lm, StrategyKind::mlp, MlpActivation::exp, true},
        {ModelKind::lm, StrategyKind::mlp, MlpActivation::relu, true},
        {ModelKind::lm, StrategyKind::mlp, MlpActivation::sigmoid, false},
        {ModelKind::lm, StrategyKind::linformer, MlpActivation::exp, true},
        {ModelKind::seq2seq, StrategyKind::mlp, MlpActivation::exp, true},
        {ModelKind::seq2seq, StrategyKind::linformer, MlpActivation::exp, false},
        {ModelKind::seq2seq, StrategyKind::softmax, MlpActivation::exp, true},
    };
    for (const Case& k : cases)
    {
        CAPTURE(to_string(k.strategy));
        CAPTURE(to_string(k.act));
        ToyModelConfig c = tiny(k.kind, k.strategy);
        c.causal.activation = c.cross.activation = k.act;
        c.tie_phi = k.tie;
        ToyModel m = ToyModel::init(c);
        SeededRng rng(5);
        const Example ex = random_example(c, 6, rng);
        ModelParams g = m.params.zeros_like();
        loss_and_grad(m, ex, g);

        std::vector<Matrix*> ps;
        std::vector<const Matrix*> gs;
        m.params.visit([&](const std::string&, Matrix& x) { ps.push_back(&x); });
        g.visit([&](const std::string&, const Matrix& x) { gs.push_back(&x); });
        REQUIRE(ps.size() == gs.size());
        double worst = 0.0;
        const double h = 1e-4;
        for (std::size_t a = 0; a < ps.size(); ++a)
            for (std::size_t i = 0; i < ps[a]->size(); ++i)
            {
                double& x = ps[a]->flat()[i];
                const double x0 = x;
                auto loss_at = [&](double dx) {
                    x = x0 + dx;
                    return evaluate(m, ex).loss;
                };
                const double num = (loss_at(-2 * h) - 8 * loss_at(-h) + 8 * loss_at(h) - loss_at(2 * h)) / (12 * h);
                x = x0;
                const double ana = gs[a]->flat()[i];
                worst = std::max(worst, std::abs(num - ana) / std::max({std::abs(num), std::abs(ana), 1e-6}));
            }
        CHECK(worst <= 1e-4);
    }
}

TEST_CASE("training")
{
    SUBCASE("zero steps leave parameters bitwise unchanged")
    {
        ToyModel m = ToyModel::init(tiny(ModelKind::seq2seq, StrategyKind::mlp));
        const ModelParams before = m.params;
        TaskSpec t;
        t.min_len = t.max_len = 6;
        t.vocab = 9;
        TrainConfig tc;
        tc.steps = 0;
        tc.eval_examples = 2;
        const TrainResult r = train(m, t, tc);
        CHECK(r.curve.empty());
        std::vector<const Matrix*> a, b;
        before.visit([&](const std::string&, const Matrix& x) { a.push_back(&x); });
        m.params.visit([&](const std::string&, const Matrix& x) { b.push_back(&x); });
        for (std::size_t i = 0; i < a.size(); ++i)
            CHECK(*a[i] == *b[i]);
    }
    SUBCASE("loss on a fixed batch strictly decreases over the first 10 steps")
    {
        ToyModelConfig c = tiny(ModelKind::seq2seq, StrategyKind::mlp, 4);
        c.d_model = 16;
        c.vocab = 12;
        c.adam.lr = 1e-3;
        ToyModel m = ToyModel::init(c);
        TaskSpec t;
        t.min_len = t.max_len = 8;
        t.vocab = 12;
        TaskSampler sampler(t, c.kind, 9);
        std::vector<Example> batch;
        for (int i = 0; i < 4; ++i)
            batch.push_back(sampler.next());
        Adam adam(m.params, c.adam);
        double prev = INFINITY;
        for (int step = 0; step < 11; ++step)
        {
            ModelParams g = m.params.zeros_like();
            double loss = 0.0;
            for (const auto& ex : batch)
                loss += loss_and_grad(m, ex, g, true).loss;
            if (step > 0)
                CHECK(loss < prev);
            prev = loss;
            adam.step(m.params, g);
        }
    }
    SUBCASE("training is deterministic")
    {
        TaskSpec t;
        t.min_len = 4;
        t.max_len = 6;
        t.vocab = 9;
        TrainConfig tc;
        tc.steps = 3;
        tc.batch = 2;
        tc.eval_examples = 2;
        ToyModel a = ToyModel::init(tiny(ModelKind::lm, StrategyKind::mlp));
        ToyModel b = ToyModel::init(tiny(ModelKind::lm, StrategyKind::mlp));
        const TrainResult ra = train(a, t, tc);
        const TrainResult rb = train(b, t, tc);
        REQUIRE(ra.curve.size() == 3);
        for (std::size_t i = 0; i < 3; ++i)
            CHECK(ra.curve[i].loss == rb.curve[i].loss);
        CHECK(a.params.w_out == b.params.w_out);
    }
    SUBCASE("step-size schedule")
    {
        TrainConfig tc;
        tc.steps = 10;
        CHECK(tc.lr_scale(1) == 1.0);
        CHECK(tc.lr_scale(10) == 1.0);
        tc.warmup_steps = 3;
        CHECK(tc.lr_scale(1) == doctest::Approx(0.25));
        CHECK(tc.lr_scale(3) == doctest::Approx(0.75));
        CHECK(tc.lr_scale(4) == 1.0);
        tc.schedule = LrSchedule::cosine;
        CHECK(tc.lr_scale(3) == doctest::Approx(0.75));
        CHECK(tc.lr_scale(4) < 1.0);
        for (std::size_t s = 4; s < 10; ++s)
            CHECK(tc.lr_scale(s + 1) < tc.lr_scale(s));
        CHECK(tc.lr_scale(10) > 0.0);
        tc.warmup_steps = 11;
        ToyModel m = ToyModel::init(tiny(ModelKind::lm, StrategyKind::mlp));
        TaskSpec t;
        t.min_len = t.max_len = 4;
        t.vocab = 9;
        CHECK_THROWS_AS(train(m, t, tc), DomainError);
    }
    SUBCASE("overlong tasks are rejected")
    {
        ToyModel m = ToyModel::init(tiny(ModelKind::lm, StrategyKind::mlp));
        TaskSpec t;
        t.min_len = t.max_len = 10;  // 2 * 10 + 1 tokens > 16 positions
        t.vocab = 9;
        CHECK_THROWS_AS(train(m, t, TrainConfig{}), DomainError);
    }
}

TEST_CASE("task examples")
{
    TaskSpec t;
    t.min_len = t.max_len = 5;
    t.vocab = 10;
    SUBCASE("seq2seq copy")
    {
        TaskSampler s(t, ModelKind::seq2seq, 1);
        const Example ex = s.next();
        CHECK(ex.source.size() == 5);
        CHECK(ex.target == ex.source);
        CHECK(ex.input.front() == kBos);
        CHECK(std::equal(ex.input.begin() + 1, ex.input.end(), ex.target.begin()));
        for (auto tok : ex.source)
            CHECK((tok >= kFirstContent && tok < 10));
    }
    SUBCASE("lm reverse")
    {
        t.kind = TaskKind::reverse;
        TaskSampler s(t, ModelKind::lm, 1);
        const Example ex = s.next();
        REQUIRE(ex.input.size() == 11);
        CHECK(ex.input[0] == kBos);
        CHECK(ex.input[6] == kSep);
        for (std::size_t i = 0; i < 5; ++i)
        {
            CHECK(ex.target[6 + i] == ex.input[5 - i]);
            CHECK(ex.mask[6 + i] == 1);
        }
        CHECK(std::count(ex.mask.begin(), ex.mask.end(), 1) == 5);
    }
    SUBCASE("char_lm")
    {
        const std::string path = temp_path("corpus.txt");
        {
            std::ofstream out(path);
            out << "abracadabra abracadabra abracadabra";
        }
        t.kind = TaskKind::char_lm;
        t.corpus_path = path;
        TaskSampler s(t, ModelKind::lm, 1);
        const Example ex = s.next();
        CHECK(ex.input.size() == 5);
        CHECK(std::equal(ex.input.begin() + 1, ex.input.end(), ex.target.begin()));
        CHECK_THROWS_AS(TaskSampler(t, ModelKind::seq2seq, 1), DomainError);
        std::remove(path.c_str());
        t.corpus_path = path + ".missing";
        CHECK_THROWS_AS(TaskSampler(t, ModelKind::lm, 1), IoError);
    }
}

TEST_CASE("greedy decoding")
{
    SUBCASE("streaming and batch paths agree")
    {
        for (ModelKind kind : {ModelKind::lm, ModelKind::seq2seq})
        {
            const ToyModel m = ToyModel::init(tiny(kind, StrategyKind::mlp));
            const Tokens prompt{3, 5, 4, 7};
            CHECK(greedy_decode(m, prompt, 8, DecodeMode::streaming) == greedy_decode(m, prompt, 8, DecodeMode::batch));
        }
    }
    SUBCASE("zero length")
    {
        const ToyModel m = ToyModel::init(tiny(ModelKind::lm, StrategyKind::mlp));
        CHECK(greedy_decode(m, {3, 4}, 0).empty());
    }
    SUBCASE("ties go to the lowest id")
    {
        ToyModel m = ToyModel::init(tiny(ModelKind::lm, StrategyKind::window));
        m.params.w_out.fill(0.0);
        m.params.b_out.fill(0.0);
        m.params.b_out(0, 6) = 1.0;
        m.params.b_out(0, 4) = 1.0;
        CHECK(greedy_decode(m, {3}, 3) == Tokens{4, 4, 4});
    }
    SUBCASE("overlong decoding is rejected")
    {
        const ToyModel m = ToyModel::init(tiny(ModelKind::lm, StrategyKind::mlp));
        CHECK_THROWS_AS(greedy_decode(m, {3, 4}, 20), DomainError);
    }
}

TEST_CASE("decoder state size does not grow with length")
{
    ToyModelConfig c = tiny(ModelKind::lm, StrategyKind::mlp, 4);
    const ToyModel m = ToyModel::init(c);
    DecoderState st = start_decoding(m);
    const std::size_t expect = c.layers * c.heads * (2 * 4 * c.d_head() + 4) * sizeof(double);
    for (std::size_t t = 0; t < 12; ++t)
    {
        decode_step(m, st, 3 + t % 5);
        CHECK(st.state_bytes() == expect);
    }
}

TEST_CASE("strategy parameters are counted once when tied")
{
    ToyModelConfig c;
    c.layers = 4;
    c.causal = make_spec(StrategyKind::mlp, 8);
    const ToyModel tied = ToyModel::init(c);
    CHECK(tied.strategy_parameter_count() == 8 * c.d_model);
    c.tie_phi = false;
    const ToyModel untied = ToyModel::init(c);
    CHECK(untied.strategy_parameter_count() == 4 * 8 * c.d_model);
    CHECK(untied.params.parameter_count() - tied.params.parameter_count() == 3 * 8 * c.d_model);
}

TEST_CASE("checkpoints round-trip byte for byte")
{
    const std::string path = temp_path("ckpt.bin");
    ToyModel m = ToyModel::init(tiny(ModelKind::seq2seq, StrategyKind::linformer));
    m.params.embed(0, 0) = 0.1 + 0.2;  // not exactly representable in decimal
    save_checkpoint(path, m);
    const ToyModel back = load_checkpoint(path);
    const std::string first = read_bytes(path);
    save_checkpoint(path, back);
    CHECK(read_bytes(path) == first);
    CHECK(back.params.embed == m.params.embed);
    CHECK(back.params.parameter_count() == m.params.parameter_count());

    // Header: magic, version 1, array count.
    REQUIRE(first.size() > 12);
    CHECK(first.substr(0, 4) == "ABCK");
    CHECK(static_cast<unsigned char>(first[4]) == 1);

    std::ofstream(path, std::ios::binary | std::ios::trunc) << "XXXX";
    CHECK_THROWS_AS(load_arrays(path), IoError);
    CHECK_THROWS_AS(load_arrays(path + ".missing"), IoError);
    std::remove(path.c_str());
    std::remove((path + ".json").c_str());
}

TEST_CASE("config JSON")
{
    ToyModelConfig c = tiny(ModelKind::seq2seq, StrategyKind::mlp);
    c.causal.activation = MlpActivation::sigmoid;
    const Json j = to_json(c);
    const ToyModelConfig back = model_config_from_json(j);
    CHECK(to_json(back) == j);

    Json bad = j;
    bad["causal"]["temperature"] = 2;
    try
    {
        model_config_from_json(bad);
        FAIL("expected ConfigError");
    }
    catch (const ConfigError& e)
    {
        CHECK(e.key_path() == "model.causal.temperature");
    }
    bad = j;
    bad["layers"] = "two";
    CHECK_THROWS_AS(model_config_from_json(bad), ConfigError);
    bad = j;
    bad["causal"]["kind"] = "cluster";
    CHECK_THROWS_AS(model_config_from_json(bad), ConfigError);
    bad = j;
    bad["heads"] = 3;
    CHECK_THROWS_AS(model_config_from_json(bad), ConfigError);
}
