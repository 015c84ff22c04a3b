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

#include "cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

using namespace abc;
namespace fs = std::filesystem;

namespace
{

struct Run
{
    int code;
    std::string out, err;
};

Run run(std::vector<std::string> args)
{
    args.insert(args.begin(), "abc");
    std::vector<const char*> argv;
    for (const auto& a : args)
        argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::size_t line_count(const fs::path& p)
{
    const std::string s = slurp(p);
    return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

fs::path fresh_dir(const std::string& name)
{
    const fs::path d = fs::temp_directory_path() / ("abc_cli_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

void write(const fs::path& p, const std::string& text)
{
    std::ofstream(p) << text;
}

const char* kTinyTrain = R"({
  "seed": 4,
  "model": {"kind": "seq2seq", "layers": 1, "d_model": 8, "heads": 2, "ffn_mult": 2, "vocab": 8,
            "max_positions": 8, "causal": {"kind": "mlp", "n": 2}, "cross": {"kind": "mlp", "n": 2}},
  "task": {"kind": "copy", "min_len": 4, "max_len": 4, "vocab": 8},
  "train": {"steps": 3, "batch": 2, "eval_examples": 4}
})";

}  // namespace

TEST_CASE("verify")
{
    const Run ok = run({"verify", "--suite", "softmax-recovery"});
    CHECK(ok.code == 0);
    CHECK(ok.out.find("softmax-recovery") != std::string::npos);
    CHECK(ok.out.find("PASS") != std::string::npos);

    const Run bad = run({"verify", "--suite", "no-such-suite"});
    CHECK(bad.code == 2);
    CHECK(bad.err.find("gradcheck") != std::string::npos);
}

TEST_CASE("usage errors")
{
    CHECK(run({}).code == 2);
    CHECK(run({"frobnicate"}).code == 2);
    CHECK(run({"bench", "--reps", "many"}).code == 2);
    CHECK(run({"verify", "--help"}).code == 0);
}

TEST_CASE("decode with a missing checkpoint")
{
    CHECK(run({"decode", "--ckpt", "missing.bin"}).code == 2);
    CHECK(run({"decode"}).code == 2);
}

TEST_CASE("bench writes one row per cell")
{
    const fs::path dir = fresh_dir("bench");
    const fs::path cfg = dir / "cfg.json";
    write(cfg, R"({"bench": {"batch": 3, "repetitions": 3, "warmup": 0,
                   "model": {"layers": 1, "d_model": 8, "heads": 2, "vocab": 8}}})");
    const Run r = run({"bench", "-c", cfg.string(), "-o", dir.string(), "--strategy", "mlp,window", "--n", "2,4",
                       "--lens", "8,16", "--batch", "1"});
    REQUIRE(r.code == 0);
    const auto records = parse_csv((dir / "bench.csv").string());
    CHECK(records.size() == 2 * 2 * 2);
    for (const auto& rec : records)
        CHECK(rec.batch == 1);  // flag beats file
}

TEST_CASE("config errors name the key")
{
    const fs::path dir = fresh_dir("config");
    const fs::path cfg = dir / "cfg.json";
    write(cfg, R"({"bench": {"repetitions": 3, "colour": "blue"}})");
    const Run r = run({"bench", "-c", cfg.string(), "-o", dir.string()});
    CHECK(r.code == 2);
    CHECK(r.err.find("bench.colour") != std::string::npos);

    write(cfg, R"({"verbose": true})");
    CHECK(run({"verify", "-c", cfg.string(), "--suite", "pseudo-query"}).code == 2);

    write(cfg, R"({"train": {"steps": 3,})");
    CHECK(run({"train", "-c", cfg.string()}).code == 2);

    CHECK(run({"train", "-c", (dir / "absent.json").string()}).code == 2);
    CHECK(run({"train", "-o", dir.string(), "--strategy", "cluster"}).code == 2);
}

TEST_CASE("train, then decode from the checkpoint")
{
    const fs::path a = fresh_dir("train_a"), b = fresh_dir("train_b");
    const fs::path cfg = a / "cfg.json";
    write(cfg, kTinyTrain);
    const Run ra = run({"train", "-c", cfg.string(), "-o", a.string()});
    REQUIRE(ra.code == 0);
    CHECK(ra.out.find("heldout accuracy") != std::string::npos);
    CHECK(line_count(a / "curve.csv") == 4);

    SUBCASE("same config and seed give identical files")
    {
        REQUIRE(run({"train", "-c", cfg.string(), "-o", b.string()}).code == 0);
        CHECK(slurp(a / "model.ckpt") == slurp(b / "model.ckpt"));
        CHECK(slurp(a / "model.ckpt.json") == slurp(b / "model.ckpt.json"));
        CHECK(slurp(a / "curve.csv") == slurp(b / "curve.csv"));
    }
    SUBCASE("another seed changes the weights")
    {
        REQUIRE(run({"train", "-c", cfg.string(), "-o", b.string(), "--seed", "5"}).code == 0);
        CHECK(slurp(a / "model.ckpt") != slurp(b / "model.ckpt"));
    }
    SUBCASE("decode")
    {
        const std::string ckpt = (a / "model.ckpt").string();
        const Run s = run({"decode", "--ckpt", ckpt, "--prompt", "3,4,5,6", "--max-len", "4"});
        REQUIRE(s.code == 0);
        std::istringstream toks(s.out);
        std::vector<int> ids{std::istream_iterator<int>(toks), std::istream_iterator<int>()};
        CHECK(ids.size() == 4);
        const Run t = run({"decode", "--ckpt", ckpt, "--prompt", "3,4,5,6", "--max-len", "4", "--mode", "batch"});
        CHECK(t.out == s.out);
        CHECK(run({"decode", "--ckpt", ckpt, "--mode", "sideways"}).code == 2);
    }
}

TEST_CASE("output directory from the environment")
{
    const fs::path dir = fresh_dir("env");
    const fs::path cfg = dir / "cfg.json";
    write(cfg, kTinyTrain);
    ::setenv(cli::kOutputDirEnv, (dir / "from_env").string().c_str(), 1);
    const Run r = run({"train", "-c", cfg.string()});
    ::unsetenv(cli::kOutputDirEnv);
    REQUIRE(r.code == 0);
    CHECK(fs::exists(dir / "from_env" / "model.ckpt"));
}
