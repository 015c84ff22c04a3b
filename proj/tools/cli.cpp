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

#include "cli.hpp"

#include "abc/verify.hpp"

#include "CLI11.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>

namespace abc::cli
{

namespace
{

DecodeMode parse_mode(const std::string& s)
{
    if (s == "streaming")
        return DecodeMode::streaming;
    if (s == "batch")
        return DecodeMode::batch;
    throw DomainError("unknown decode mode '" + s + "'");
}

DecodeConfig decode_from_json(const Json& j, const std::string& path)
{
    DecodeConfig d;
    detail::ObjectReader r(j, path);
    r.get("checkpoint", d.checkpoint);
    r.get("prompt", d.prompt);
    r.get("max_len", d.max_len);
    if (r.child("mode"))
    {
        std::string mode;
        r.get("mode", mode);
        try
        {
            d.mode = parse_mode(mode);
        }
        catch (const DomainError& e)
        {
            throw ConfigError(r.key_path("mode"), e.what());
        }
    }
    r.finish();
    return d;
}

void apply_seed(RunConfig& c)
{
    if (!c.seed)
        return;
    const std::uint64_t s = *c.seed;
    for (ToyModelConfig* m : {&c.model, &c.bench.model})
    {
        m->seed = s;
        m->encoder_self.seed = m->causal.seed = m->cross.seed = s;
    }
    c.train.seed = s;
}

}  // namespace

RunConfig run_config_from_json(const Json& j)
{
    RunConfig c;
    detail::ObjectReader r(j, "config");
    if (r.child("seed"))
    {
        std::uint64_t s = 0;
        r.get("seed", s);
        c.seed = s;
    }
    r.get("output_dir", c.output_dir);
    if (const Json* v = r.child("verify"))
    {
        detail::ObjectReader vr(*v, "verify");
        vr.get("suite", c.suite);
        vr.finish();
    }
    if (const Json* b = r.child("bench"))
        c.bench = bench_spec_from_json(*b);
    if (const Json* m = r.child("model"))
        c.model = model_config_from_json(*m);
    if (const Json* t = r.child("task"))
        c.task = task_from_json(*t);
    if (const Json* t = r.child("train"))
        c.train = train_config_from_json(*t);
    if (const Json* d = r.child("decode"))
        c.decode = decode_from_json(*d, "decode");
    r.finish();
    apply_seed(c);
    return c;
}

namespace
{

struct Flags
{
    std::string config_path;
    std::optional<std::string> output_dir;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> suite;
    std::vector<std::string> strategies;
    std::vector<std::size_t> ns, lens;
    std::optional<std::size_t> batch, reps, warmup, steps, len, vocab, max_len;
    bool parallel = false;
    std::optional<std::string> task, kind, corpus, ckpt, mode;
    std::optional<double> lr;
    std::vector<std::size_t> prompt;
};

// Flags are written into the document before parsing, so they go through the
// same validation as the file and win over it.
void merge_flags(const std::string& command, const Flags& f, Json& j)
{
    if (f.output_dir)
        j["output_dir"] = *f.output_dir;
    if (f.seed)
        j["seed"] = *f.seed;
    if (command == "verify" && f.suite)
        j["verify"]["suite"] = *f.suite;
    if (command == "bench")
    {
        Json& b = j["bench"];
        if (!f.strategies.empty())
            b["strategies"] = f.strategies;
        if (!f.ns.empty())
            b["ns"] = f.ns;
        if (!f.lens.empty())
            b["lengths"] = f.lens;
        if (f.batch)
            b["batch"] = *f.batch;
        if (f.reps)
            b["repetitions"] = *f.reps;
        if (f.warmup)
            b["warmup"] = *f.warmup;
        if (f.parallel)
            b["parallel"] = true;
    }
    if (command == "train")
    {
        Json& m = j["model"];
        if (f.kind)
            m["kind"] = *f.kind;
        for (const char* site : {"causal", "cross"})
        {
            if (!f.strategies.empty())
                m[site]["kind"] = f.strategies.front();
            if (!f.ns.empty())
                m[site]["n"] = f.ns.front();
        }
        if (f.lr)
            m["adam"]["lr"] = *f.lr;
        Json& t = j["task"];
        if (f.task)
            t["kind"] = *f.task;
        if (f.len)
            t["min_len"] = t["max_len"] = *f.len;
        if (f.vocab)
            t["vocab"] = *f.vocab;
        if (f.corpus)
            t["corpus"] = *f.corpus;
        if (f.steps)
            j["train"]["steps"] = *f.steps;
        if (f.batch)
            j["train"]["batch"] = *f.batch;
    }
    if (command == "decode")
    {
        Json& d = j["decode"];
        if (f.ckpt)
            d["checkpoint"] = *f.ckpt;
        if (!f.prompt.empty())
            d["prompt"] = f.prompt;
        if (f.max_len)
            d["max_len"] = *f.max_len;
        if (f.mode)
            d["mode"] = *f.mode;
    }
}

std::string output_path(const RunConfig& c, const std::string& file)
{
    std::filesystem::create_directories(c.output_dir);
    return (std::filesystem::path(c.output_dir) / file).string();
}

int cmd_verify(const RunConfig& c, std::ostream& out, std::ostream& err)
{
    std::vector<std::string_view> names;
    if (c.suite.empty())
        names = suite_names();
    else if (std::find(suite_names().begin(), suite_names().end(), c.suite) != suite_names().end())
        names.push_back(c.suite);
    else
    {
        err << "unknown suite '" << c.suite << "'; choose one of:";
        for (auto n : suite_names())
            err << ' ' << n;
        err << '\n';
        return kExitUsage;
    }
    bool ok = true;
    for (auto name : names)
    {
        const SuiteResult r = run_suite(name, c.seed.value_or(0));
        out << std::left << std::setw(18) << r.name << (r.passed ? " PASS" : " FAIL") << "  max error "
            << std::scientific << std::setprecision(3) << r.worst << "  (" << r.instances << " instances, "
            << std::fixed << std::setprecision(2) << r.seconds << " s)\n";
        ok = ok && r.passed;
    }
    return ok ? kExitOk : kExitFailed;
}

int cmd_bench(const RunConfig& c, std::ostream& out)
{
    const auto records = run_decode_bench(c.bench);
    out << format_summary(records);
    const std::string path = output_path(c, "bench.csv");
    emit_csv(records, path);
    out << "wrote " << path << '\n';
    for (const auto& r : records)
        if (r.failed)
            return kExitFailed;
    return kExitOk;
}

int cmd_train(const RunConfig& c, std::ostream& out)
{
    ToyModel model = ToyModel::init(c.model);
    const std::string curve_path = output_path(c, "curve.csv");
    std::ofstream curve(curve_path, std::ios::trunc);
    if (!curve)
        throw IoError("cannot write '" + curve_path + "'");
    curve << "step,loss,accuracy\n" << std::setprecision(17);
    const TrainResult r = train(model, c.task, c.train, [&](const CurvePoint& p) {
        curve << p.step << ',' << p.loss << ',' << p.accuracy << '\n';
        if (p.step % 100 == 0)
            out << "step " << p.step << " loss " << std::fixed << std::setprecision(4) << p.loss << " acc "
                << p.accuracy << '\n';
    });
    curve.close();
    const std::string ckpt = output_path(c, "model.ckpt");
    save_checkpoint(ckpt, model);
    out << std::fixed << std::setprecision(4) << "heldout accuracy " << r.heldout_accuracy << " loss "
        << r.heldout_loss << " perplexity " << r.perplexity() << '\n'
        << "wrote " << ckpt << " and " << curve_path << '\n';
    return kExitOk;
}

int cmd_decode(const RunConfig& c, std::ostream& out, std::ostream& err)
{
    if (c.decode.checkpoint.empty())
    {
        err << "decode needs a checkpoint (--ckpt or decode.checkpoint)\n";
        return kExitUsage;
    }
    const ToyModel model = load_checkpoint(c.decode.checkpoint);
    Tokens prompt = c.decode.prompt;
    if (prompt.empty() && model.config.kind == ModelKind::lm)
        prompt.push_back(kBos);
    const Tokens toks = greedy_decode(model, prompt, c.decode.max_len, c.decode.mode);
    for (std::size_t i = 0; i < toks.size(); ++i)
        out << (i ? " " : "") << toks[i];
    out << '\n';
    return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Attention with bounded-memory control: verification, training, decoding, benchmarks", "abc"};
    app.require_subcommand(1);
    Flags f;
    auto common = [&](CLI::App* sub) {
        sub->add_option("-c,--config", f.config_path, "JSON config file");
        sub->add_option("-o,--output-dir", f.output_dir, "directory for outputs");
        sub->add_option("--seed", f.seed, "seed for every random stream");
    };
    CLI::App* verify = app.add_subcommand("verify", "run the equivalence, causality and gradient suites");
    common(verify);
    verify->add_option("--suite", f.suite, "run one suite only");

    CLI::App* bench = app.add_subcommand("bench", "decode latency and state size against length");
    common(bench);
    bench->add_option("--strategy", f.strategies, "strategies, comma separated")->delimiter(',');
    bench->add_option("--n", f.ns, "memory sizes, comma separated")->delimiter(',');
    bench->add_option("--lens", f.lens, "sequence lengths, comma separated")->delimiter(',');
    bench->add_option("--batch", f.batch);
    bench->add_option("--reps", f.reps);
    bench->add_option("--warmup", f.warmup);
    bench->add_flag("--parallel", f.parallel, "shard cells across threads");

    CLI::App* trainc = app.add_subcommand("train", "train a toy model");
    common(trainc);
    trainc->add_option("--task", f.task, "copy, reverse or char_lm");
    trainc->add_option("--model", f.kind, "lm or seq2seq");
    trainc->add_option("--strategy", f.strategies, "causal and cross strategy")->expected(1);
    trainc->add_option("--n", f.ns, "causal and cross memory size")->expected(1);
    trainc->add_option("--steps", f.steps);
    trainc->add_option("--batch", f.batch);
    trainc->add_option("--len", f.len, "task sequence length");
    trainc->add_option("--vocab", f.vocab, "task vocabulary");
    trainc->add_option("--corpus", f.corpus, "text file for char_lm");
    trainc->add_option("--lr", f.lr);

    CLI::App* decode = app.add_subcommand("decode", "greedy decoding from a checkpoint");
    common(decode);
    decode->add_option("--ckpt", f.ckpt, "checkpoint written by train");
    decode->add_option("--prompt", f.prompt, "token ids, comma separated")->delimiter(',');
    decode->add_option("--max-len", f.max_len);
    decode->add_option("--mode", f.mode, "streaming or batch");

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError& e)
    {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    try
    {
        Json doc = f.config_path.empty() ? Json::object() : read_json_file(f.config_path);
        if (!doc.is_object())
            throw ConfigError("config", "expected an object");
        if (const char* env = std::getenv(kOutputDirEnv); env && *env)
            doc["output_dir"] = env;
        merge_flags(command, f, doc);
        RunConfig cfg = run_config_from_json(doc);
        cfg.command = command;
        if (command == "verify")
            return cmd_verify(cfg, out, err);
        if (command == "bench")
            return cmd_bench(cfg, out);
        if (command == "train")
            return cmd_train(cfg, out);
        return cmd_decode(cfg, out, err);
    }
    catch (const ConfigError& e)
    {
        err << "config error at " << e.key_path() << ": " << e.what() << '\n';
        return kExitUsage;
    }
    catch (const IoError& e)
    {
        err << e.what() << '\n';
        return kExitUsage;
    }
    catch (const DomainError& e)
    {
        err << e.what() << '\n';
        return kExitUsage;
    }
    catch (const NumericError& e)
    {
        err << e.what() << '\n';
        return kExitFailed;
    }
}

}  // namespace abc::cli
