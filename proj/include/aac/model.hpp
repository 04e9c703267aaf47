#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "aac/tensor.hpp"
#include "aac/text.hpp"

namespace aac::model {

using text::TokenSequence;

struct ModelConfig {
    std::size_t d_model = 256;
    std::size_t layers = 6;
    std::size_t heads = 4;
    std::size_t ffn_dim = 1024;
    double dropout = 0.2;
    std::size_t d_enc = 64;
    std::size_t d_sent = 768;
    std::size_t max_len = 30;
    std::size_t vocab_size = 0;
    // frozen sentence encoder
    std::size_t sent_layers = 2;
    std::size_t sent_heads = 4;
    std::size_t sent_ffn_dim = 3072;
    double sent_output_scale = 0.15;
    std::uint64_t sent_seed = 1234;

    void validate() const;
};

struct NamedParameter {
    std::string name;
    Tensor tensor;
    bool decay_exempt = false;
};

/// Name → flat values, used for snapshots and checkpoints.
using StateDict = std::map<std::string, std::vector<double>>;

struct Linear {
    Tensor weight;  // [in × out]
    Tensor bias;    // [out]
    Tensor operator()(const Tensor& x) const { return add_bias(matmul(x, weight), bias); }
};

struct LayerNorm {
    Tensor gamma;
    Tensor beta;
    double eps = 1e-5;
    Tensor operator()(const Tensor& x) const { return layer_norm(x, gamma, beta, eps); }
};

struct Attention {
    Linear q, k, v, o;
};

struct DecoderLayer {
    Attention self_attn;
    Attention cross_attn;
    LayerNorm ln1, ln2, ln3;
    Linear ff1, ff2;
};

struct EncoderLayer {
    Attention attn;
    LayerNorm ln1, ln2;
    Linear ff1, ff2;
};

struct DecoderOutput {
    Tensor token_embeddings;  // [L × d_model], the next-token embeddings
    Tensor logits;            // [L × V]
};

struct ForwardMode {
    bool training = false;
    Rng* rng = nullptr;  // required when training with dropout > 0
};

/// Keys/values cached for incremental decoding of one hypothesis.
struct DecoderCache {
    std::vector<Tensor> self_k, self_v, mem_k, mem_v;
    std::size_t length = 0;
};

/// Scaled dot-product attention over already-projected q/k/v, split into
/// `heads` column blocks. `mask`, when given, is added to the scores.
Tensor attend(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads, const Tensor* mask);

/// [n × n] additive mask: 0 on and below the diagonal, -inf above.
Tensor causal_mask(std::size_t n);

/// Rows [offset, offset+n) of the sinusoidal position table for width d.
Tensor sinusoidal_positions(std::size_t offset, std::size_t n, std::size_t d);

/// Encoder projection + transformer decoder with a token classifier head and
/// an optional sentence-embedding regression (SER) projection head.
class Captioner {
public:
    Captioner(ModelConfig config, std::uint64_t seed, bool with_ser_head = true);
    Captioner(Captioner&&) noexcept = default;
    Captioner& operator=(Captioner&&) noexcept = default;
    Captioner(const Captioner&) = delete;
    Captioner& operator=(const Captioner&) = delete;

    Captioner clone() const;

    const ModelConfig& config() const noexcept { return config_; }
    bool has_ser_head() const noexcept { return has_ser_; }

    /// Per-frame projection of [T × d_enc] features to [T × d_model].
    Tensor encode_project(const Tensor& features) const;

    /// Causal decoding of `prev_tokens` (framed with bos) attending to memory.
    DecoderOutput decode_teacher_forced(const Tensor& memory, const TokenSequence& prev_tokens,
                                        const ForwardMode& mode = {}) const;

    /// Next-token logits after `prefix`, eval mode.
    std::vector<double> step_logits(const Tensor& memory, const TokenSequence& prefix) const;

    /// Maps [L × d_model] token embeddings to [L × d_sent].
    Tensor ser_project(const Tensor& token_embeddings) const;

    DecoderCache start_cache(const Tensor& memory) const;
    /// Feeds one token and returns the logits predicted after it. Matches
    /// step_logits on the same prefix.
    std::vector<double> advance(DecoderCache& cache, int token) const;

    std::vector<NamedParameter> parameters() const;
    StateDict state() const;
    void load_state(const StateDict& state);
    std::size_t parameter_count() const;

private:
    Tensor decoder_input(const TokenSequence& tokens, std::size_t offset, const ForwardMode& mode) const;

    ModelConfig config_;
    bool has_ser_ = true;
    Linear enc_proj_;
    Tensor tok_emb_;
    std::vector<DecoderLayer> layers_;
    Linear classifier_;
    Linear ser_proj_;
};

/// Word → synonym-group id. Tokens in the same group get correlated rows in
/// the sentence encoder's embedding table.
using LexicalGroups = std::unordered_map<std::string, int>;

/// Frozen stand-in for a pretrained sentence encoder: embedding table,
/// transformer encoder body, mean pooling and a linear projection.
/// Parameters are drawn from fixed seeds and never receive gradients.
class SentenceEncoder {
public:
    SentenceEncoder(const ModelConfig& config, const text::Vocabulary& vocab, const LexicalGroups& groups = {});

    std::size_t dim() const noexcept { return dim_; }
    const text::Vocabulary& vocabulary() const noexcept { return vocab_; }

    /// Rows of the embedding table for `ids`: [L × d_sent].
    Tensor embed_tokens(const TokenSequence& ids) const;
    /// Full path: embedding table → body → pooled [1 × d_sent].
    Tensor from_tokens(const TokenSequence& ids) const;
    /// Body only (embedding layer bypassed); differentiable w.r.t. `vectors`.
    Tensor from_vectors(const Tensor& vectors) const;

    /// Token ids fed to the encoder for a normalized sentence: the encoding
    /// without the leading bos, so the sequence ends with eos.
    TokenSequence sentence_ids(std::string_view text) const;
    std::vector<double> embed_text(std::string_view text) const;

    std::vector<NamedParameter> parameters() const;
    std::uint64_t parameter_hash() const;

private:
    std::size_t dim_;
    std::size_t heads_;
    text::Vocabulary vocab_;
    Tensor table_;
    std::vector<EncoderLayer> layers_;
    Linear head_;
};

/// Non-exempt parameters' joint L2 norm.
double decayed_parameter_norm(const std::vector<NamedParameter>& params);
double exempt_parameter_norm(const std::vector<NamedParameter>& params);

}  // namespace aac::model
