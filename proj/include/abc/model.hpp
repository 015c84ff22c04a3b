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

// Small pre-norm transformers for exercising every attention site: a
// decoder-only language model and an encoder-decoder model. Every block is
//
//   x = x + Attn(LN(x))            (causal in the decoder)
//   x = x + Cross(LN(x), enc)      (encoder-decoder only)
//   x = x + FFN(LN(x))             (GELU, tanh approximation)
//
// followed by a final LayerNorm and a linear read-out to the vocabulary.

#pragma once

#include "abc/attention.hpp"
#include "abc/numerics.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace abc
{

enum class ModelKind
{
    lm,
    seq2seq,
};

struct AdamConfig
{
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.98;
    double eps = 1e-9;
};

struct ToyModelConfig
{
    ModelKind kind = ModelKind::lm;
    std::size_t layers = 2;  ///< blocks in the decoder, and in the encoder for seq2seq
    std::size_t d_model = 64;
    std::size_t heads = 4;
    std::size_t ffn_mult = 4;
    std::size_t vocab = 64;
    std::size_t max_positions = 128;
    StrategySpec encoder_self = make_spec(StrategyKind::softmax);
    StrategySpec causal = make_spec(StrategyKind::mlp);
    StrategySpec cross = make_spec(StrategyKind::mlp);
    bool tie_phi = true;
    AdamConfig adam;
    std::uint64_t seed = 0;

    std::size_t d_head() const { return d_model / heads; }
    AttentionConfig attention(Site site) const;
    void validate() const;
};

struct LayerNormParams
{
    Matrix gamma, beta;  ///< 1-by-d_model
};

struct FfnParams
{
    Matrix w1, b1;  ///< d_model-by-hidden, 1-by-hidden
    Matrix w2, b2;  ///< hidden-by-d_model, 1-by-d_model
};

struct BlockParams
{
    LayerNormParams ln_self;
    LayerParams self;
    StrategyParams self_strategy;  ///< used when strategy parameters are untied
    LayerNormParams ln_cross;      ///< decoder blocks of seq2seq only
    LayerParams cross;
    StrategyParams cross_strategy;
    LayerNormParams ln_ffn;
    FfnParams ffn;
};

/// Parameters of a whole model. Gradients use the same type.
struct ModelParams
{
    Matrix embed;      ///< vocab-by-d_model, shared by source and target
    Matrix positions;  ///< max_positions-by-d_model
    std::vector<BlockParams> encoder;
    std::vector<BlockParams> decoder;
    LayerNormParams encoder_final;
    LayerNormParams decoder_final;
    Matrix w_out, b_out;  ///< d_model-by-vocab, 1-by-vocab
    /// Strategy parameters shared by all layers when tying is on.
    StrategyParams tied_encoder_self, tied_causal, tied_cross;

    /// Visits every parameter array with a stable name, in a fixed order.
    /// Empty arrays are skipped.
    void visit(const std::function<void(const std::string&, Matrix&)>& fn);
    void visit(const std::function<void(const std::string&, const Matrix&)>& fn) const;
    std::size_t parameter_count() const;
    /// Same shapes, all zeros.
    ModelParams zeros_like() const;
};

struct ToyModel
{
    ToyModelConfig config;
    ModelParams params;

    /// Seeded initialization (config.seed).
    static ToyModel init(const ToyModelConfig& cfg);

    const StrategyParams& strategy(Site site, std::size_t layer) const;
    /// Count of strategy parameters (W_phi, W_LF), each tied array once.
    std::size_t strategy_parameter_count() const;
};

/// Token ids of the reserved symbols. Content tokens start at kFirstContent.
inline constexpr std::size_t kBos = 1;
inline constexpr std::size_t kSep = 2;
inline constexpr std::size_t kFirstContent = 3;

using Tokens = std::vector<std::size_t>;

/// One training example. For the LM, `input` is the token sequence and
/// `target[i]` the token expected after input[0..i]; for seq2seq, `source`
/// feeds the encoder and `input` is the shifted target. Positions with
/// mask[i] == 0 do not contribute to the loss.
struct Example
{
    Tokens source;
    Tokens input;
    Tokens target;
    std::vector<unsigned char> mask;
};

/// Forward pass without recording for backward.
Matrix forward_logits(const ToyModel& model, const Example& ex);

struct LossGrad
{
    double loss = 0.0;       ///< summed NLL over unmasked positions
    std::size_t tokens = 0;  ///< unmasked positions
    std::size_t correct = 0; ///< argmax hits among them
};

/// Adds the gradient of the summed NLL of `ex` into `grads`.
LossGrad loss_and_grad(const ToyModel& model, const Example& ex, ModelParams& grads, bool clamp_logits = false);

/// Loss and accuracy without gradients.
LossGrad evaluate(const ToyModel& model, const Example& ex);

/// Token-by-token decoder state: one stream per decoder layer and site.
struct DecoderState
{
    std::vector<AttentionStream> self;
    std::vector<AttentionStream> cross;
    std::size_t position = 0;

    std::size_t state_bytes() const noexcept;
};

/// Empty state; `source` is encoded (seq2seq only) and its cross memories
/// built once.
DecoderState start_decoding(const ToyModel& model, const Tokens& source = {});

/// Feeds one token; returns the next-token logits.
Vector decode_step(const ToyModel& model, DecoderState& state, std::size_t token);

enum class DecodeMode
{
    streaming,
    batch,  ///< reruns the full forward pass on the prefix every step
};

/// Greedy decoding: argmax at every step, ties to the lowest id. The LM
/// continues `prompt`; seq2seq starts from BOS and reads `prompt` as source.
Tokens greedy_decode(const ToyModel& model, const Tokens& prompt, std::size_t max_len,
                     DecodeMode mode = DecodeMode::streaming);

// --------------------------------------------------------------------------
// tasks and training

enum class TaskKind
{
    copy,
    reverse,
    char_lm,
};

struct TaskSpec
{
    TaskKind kind = TaskKind::copy;
    std::size_t min_len = 64;
    std::size_t max_len = 64;
    std::size_t vocab = 32;
    std::string corpus_path;  ///< char_lm only
};

std::string_view to_string(TaskKind kind);
TaskKind parse_task_kind(std::string_view name);

/// Draws examples for a task. char_lm reads the corpus once and samples
/// windows from it; bytes map to ids by frequency rank.
class TaskSampler
{
public:
    TaskSampler(const TaskSpec& spec, ModelKind model_kind, std::uint64_t seed);

    Example next();
    /// Largest sequence length any example can have on either side.
    std::size_t max_sequence() const;
    const TaskSpec& spec() const noexcept { return spec_; }

private:
    TaskSpec spec_;
    ModelKind model_kind_;
    SeededRng rng_;
    Tokens corpus_;
};

enum class LrSchedule
{
    constant,
    cosine,  ///< half-cosine decay from the peak to zero over the steps after warmup
};

std::string_view to_string(LrSchedule s);
LrSchedule parse_lr_schedule(std::string_view name);

struct TrainConfig
{
    std::size_t steps = 2000;
    std::size_t batch = 8;
    std::size_t eval_examples = 64;
    bool clamp_logits = true;
    std::size_t warmup_steps = 0;  ///< linear ramp from 0 to the peak step size
    LrSchedule schedule = LrSchedule::constant;
    std::uint64_t seed = 0;

    /// Multiplier on the optimizer step size for 1-based `step`.
    double lr_scale(std::size_t step) const;
};

struct CurvePoint
{
    std::size_t step = 0;
    double loss = 0.0;      ///< mean token NLL of the training batch
    double accuracy = 0.0;  ///< next-token accuracy of the training batch
};

struct TrainResult
{
    std::vector<CurvePoint> curve;
    double heldout_loss = 0.0;
    double heldout_accuracy = 0.0;
    double perplexity() const;
};

/// Adam state for one model.
class Adam
{
public:
    Adam(const ModelParams& shape, AdamConfig cfg);
    /// params -= scale * lr * m_hat / (sqrt(v_hat) + eps), with bias correction.
    void step(ModelParams& params, const ModelParams& grads, double scale = 1.0);
    std::size_t steps() const noexcept { return t_; }

private:
    AdamConfig cfg_;
    ModelParams m_, v_;
    std::size_t t_ = 0;
};

/// Trains in place; deterministic for a given config and seed. Throws
/// NumericError if the loss becomes non-finite.
TrainResult train(ToyModel& model, const TaskSpec& task, const TrainConfig& cfg,
                  const std::function<void(const CurvePoint&)>& on_step = {});

/// Held-out loss and accuracy on `count` fresh examples drawn with `seed`.
TrainResult evaluate_task(const ToyModel& model, const TaskSpec& task, std::size_t count, std::uint64_t seed);

// --------------------------------------------------------------------------
// checkpoints

/// Named-array container: "ABCK", u32 version, u32 count, then per array
/// u32 name length, name bytes, u64 rows, u64 cols; then every payload as
/// little-endian float64 in header order.
void save_arrays(const std::string& path, const std::vector<std::pair<std::string, Matrix>>& arrays);
std::vector<std::pair<std::string, Matrix>> load_arrays(const std::string& path);

/// Writes the parameters to `path` and the config to `path + ".json"`.
void save_checkpoint(const std::string& path, const ToyModel& model);
ToyModel load_checkpoint(const std::string& path);

}  // namespace abc
