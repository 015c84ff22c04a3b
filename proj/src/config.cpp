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

#include "abc/config.hpp"

#include <algorithm>
#include <fstream>

namespace abc
{

namespace detail
{

ObjectReader::ObjectReader(const Json& j, std::string path) : j_(j), path_(std::move(path))
{
    if (!j_.is_object())
        throw ConfigError(path_, "expected an object");
}

namespace
{

const Json* lookup(const Json& j, const char* key, std::vector<std::string>& seen)
{
    auto it = j.find(key);
    if (it == j.end())
        return nullptr;
    seen.emplace_back(key);
    return &*it;
}

template <class U>
void get_unsigned(const Json* v, const std::string& path, U& out)
{
    if (!v)
        return;
    if (!v->is_number_integer() || (v->is_number_integer() && !v->is_number_unsigned() && v->get<long long>() < 0))
        throw ConfigError(path, "expected a non-negative integer");
    out = v->get<U>();
}

}  // namespace

void ObjectReader::get(const char* key, unsigned long& out)
{
    get_unsigned(lookup(j_, key, seen_), key_path(key), out);
}

void ObjectReader::get(const char* key, unsigned long long& out)
{
    get_unsigned(lookup(j_, key, seen_), key_path(key), out);
}

void ObjectReader::get(const char* key, double& out)
{
    const Json* v = lookup(j_, key, seen_);
    if (!v)
        return;
    if (!v->is_number())
        throw ConfigError(key_path(key), "expected a number");
    out = v->get<double>();
}

void ObjectReader::get(const char* key, bool& out)
{
    const Json* v = lookup(j_, key, seen_);
    if (!v)
        return;
    if (!v->is_boolean())
        throw ConfigError(key_path(key), "expected true or false");
    out = v->get<bool>();
}

void ObjectReader::get(const char* key, std::string& out)
{
    const Json* v = lookup(j_, key, seen_);
    if (!v)
        return;
    if (!v->is_string())
        throw ConfigError(key_path(key), "expected a string");
    out = v->get<std::string>();
}

void ObjectReader::get(const char* key, std::vector<std::size_t>& out)
{
    const Json* v = lookup(j_, key, seen_);
    if (!v)
        return;
    if (!v->is_array())
        throw ConfigError(key_path(key), "expected an array of non-negative integers");
    out.clear();
    for (std::size_t i = 0; i < v->size(); ++i)
    {
        std::size_t x = 0;
        get_unsigned(&(*v)[i], key_path(key) + "[" + std::to_string(i) + "]", x);
        out.push_back(x);
    }
}

const Json* ObjectReader::child(const char* key)
{
    return lookup(j_, key, seen_);
}

void ObjectReader::finish() const
{
    for (auto it = j_.begin(); it != j_.end(); ++it)
        if (std::find(seen_.begin(), seen_.end(), it.key()) == seen_.end())
            throw ConfigError(path_ + "." + it.key(), "unknown key");
}

}  // namespace detail

namespace
{

template <class E, class Parse>
void get_enum(detail::ObjectReader& r, const char* key, E& out, Parse parse)
{
    std::string name;
    if (!r.child(key))
        return;
    r.get(key, name);
    try
    {
        out = parse(name);
    }
    catch (const DomainError& e)
    {
        throw ConfigError(r.key_path(key), e.what());
    }
}

ModelKind parse_model_kind(std::string_view s)
{
    if (s == "lm")
        return ModelKind::lm;
    if (s == "seq2seq")
        return ModelKind::seq2seq;
    throw DomainError("unknown model kind '" + std::string(s) + "'");
}

}  // namespace

Json to_json(const StrategySpec& s)
{
    Json j;
    j["kind"] = std::string(to_string(s.kind));
    j["n"] = s.n;
    j["activation"] = std::string(to_string(s.activation));
    j["compression"] = s.compression;
    j["globals"] = s.globals;
    j["seed"] = s.seed;
    j["cluster_iters"] = s.cluster_iters;
    return j;
}

StrategySpec strategy_from_json(const Json& j, const std::string& path)
{
    StrategySpec s;
    detail::ObjectReader r(j, path);
    get_enum(r, "kind", s.kind, parse_strategy_kind);
    r.get("n", s.n);
    get_enum(r, "activation", s.activation, parse_activation);
    r.get("compression", s.compression);
    r.get("globals", s.globals);
    r.get("seed", s.seed);
    r.get("cluster_iters", s.cluster_iters);
    r.finish();
    return s;
}

Json to_json(const ToyModelConfig& c)
{
    Json j;
    j["kind"] = c.kind == ModelKind::lm ? "lm" : "seq2seq";
    j["layers"] = c.layers;
    j["d_model"] = c.d_model;
    j["heads"] = c.heads;
    j["ffn_mult"] = c.ffn_mult;
    j["vocab"] = c.vocab;
    j["max_positions"] = c.max_positions;
    j["encoder_self"] = to_json(c.encoder_self);
    j["causal"] = to_json(c.causal);
    j["cross"] = to_json(c.cross);
    j["tie_phi"] = c.tie_phi;
    j["adam"] = {{"lr", c.adam.lr}, {"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"eps", c.adam.eps}};
    j["seed"] = c.seed;
    return j;
}

ToyModelConfig model_config_from_json(const Json& j, const std::string& path)
{
    ToyModelConfig c;
    detail::ObjectReader r(j, path);
    get_enum(r, "kind", c.kind, parse_model_kind);
    r.get("layers", c.layers);
    r.get("d_model", c.d_model);
    r.get("heads", c.heads);
    r.get("ffn_mult", c.ffn_mult);
    r.get("vocab", c.vocab);
    r.get("max_positions", c.max_positions);
    if (const Json* s = r.child("encoder_self"))
        c.encoder_self = strategy_from_json(*s, path + ".encoder_self");
    if (const Json* s = r.child("causal"))
        c.causal = strategy_from_json(*s, path + ".causal");
    if (const Json* s = r.child("cross"))
        c.cross = strategy_from_json(*s, path + ".cross");
    r.get("tie_phi", c.tie_phi);
    if (const Json* a = r.child("adam"))
    {
        detail::ObjectReader ar(*a, path + ".adam");
        ar.get("lr", c.adam.lr);
        ar.get("beta1", c.adam.beta1);
        ar.get("beta2", c.adam.beta2);
        ar.get("eps", c.adam.eps);
        ar.finish();
    }
    r.get("seed", c.seed);
    r.finish();
    try
    {
        c.validate();
    }
    catch (const DomainError& e)
    {
        throw ConfigError(path, e.what());
    }
    return c;
}

Json to_json(const TaskSpec& t)
{
    Json j;
    j["kind"] = std::string(to_string(t.kind));
    j["min_len"] = t.min_len;
    j["max_len"] = t.max_len;
    j["vocab"] = t.vocab;
    j["corpus"] = t.corpus_path;
    return j;
}

TaskSpec task_from_json(const Json& j, const std::string& path)
{
    TaskSpec t;
    detail::ObjectReader r(j, path);
    get_enum(r, "kind", t.kind, parse_task_kind);
    r.get("min_len", t.min_len);
    r.get("max_len", t.max_len);
    r.get("vocab", t.vocab);
    r.get("corpus", t.corpus_path);
    r.finish();
    if (t.min_len == 0 || t.min_len > t.max_len)
        throw ConfigError(path + ".min_len", "need 1 <= min_len <= max_len");
    return t;
}

Json to_json(const TrainConfig& t)
{
    Json j;
    j["steps"] = t.steps;
    j["batch"] = t.batch;
    j["eval_examples"] = t.eval_examples;
    j["clamp_logits"] = t.clamp_logits;
    j["warmup_steps"] = t.warmup_steps;
    j["schedule"] = std::string(to_string(t.schedule));
    j["seed"] = t.seed;
    return j;
}

TrainConfig train_config_from_json(const Json& j, const std::string& path)
{
    TrainConfig t;
    detail::ObjectReader r(j, path);
    r.get("steps", t.steps);
    r.get("batch", t.batch);
    r.get("eval_examples", t.eval_examples);
    r.get("clamp_logits", t.clamp_logits);
    r.get("warmup_steps", t.warmup_steps);
    get_enum(r, "schedule", t.schedule, parse_lr_schedule);
    r.get("seed", t.seed);
    r.finish();
    if (t.batch == 0)
        throw ConfigError(path + ".batch", "must be positive");
    if (t.warmup_steps > t.steps)
        throw ConfigError(path + ".warmup_steps", "exceeds the number of steps");
    return t;
}

Json to_json(const BenchSpec& b)
{
    Json j;
    Json kinds = Json::array();
    for (StrategyKind k : b.strategies)
        kinds.push_back(std::string(to_string(k)));
    j["strategies"] = kinds;
    j["lengths"] = b.lengths;
    j["ns"] = b.ns;
    j["batch"] = b.batch;
    j["repetitions"] = b.repetitions;
    j["warmup"] = b.warmup;
    j["parallel"] = b.parallel;
    j["model"] = to_json(b.model);
    return j;
}

BenchSpec bench_spec_from_json(const Json& j, const std::string& path)
{
    BenchSpec b;
    detail::ObjectReader r(j, path);
    if (const Json* s = r.child("strategies"))
    {
        const std::string key = path + ".strategies";
        if (!s->is_array())
            throw ConfigError(key, "expected an array of strategy names");
        b.strategies.clear();
        for (std::size_t i = 0; i < s->size(); ++i)
        {
            const std::string item = key + "[" + std::to_string(i) + "]";
            if (!(*s)[i].is_string())
                throw ConfigError(item, "expected a string");
            try
            {
                b.strategies.push_back(parse_strategy_kind((*s)[i].get<std::string>()));
            }
            catch (const DomainError& e)
            {
                throw ConfigError(item, e.what());
            }
        }
    }
    r.get("lengths", b.lengths);
    r.get("ns", b.ns);
    r.get("batch", b.batch);
    r.get("repetitions", b.repetitions);
    r.get("warmup", b.warmup);
    r.get("parallel", b.parallel);
    if (const Json* m = r.child("model"))
        b.model = model_config_from_json(*m, path + ".model");
    r.finish();
    try
    {
        b.validate();
    }
    catch (const DomainError& e)
    {
        throw ConfigError(path, e.what());
    }
    return b;
}

Json read_json_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open '" + path + "'");
    try
    {
        return Json::parse(in);
    }
    catch (const nlohmann::json::parse_error& e)
    {
        throw ConfigError(path, std::string("malformed JSON: ") + e.what());
    }
}

}  // namespace abc
