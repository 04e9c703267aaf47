#include "aac/model.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace aac::model {

namespace {

constexpr std::uint64_t kSerHeadStream = 0x5e5f00d5ULL;
constexpr std::uint64_t kGroupStream = 0x67726f7570ULL;

std::uint64_t string_hash(std::string_view s) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::vector<double> normal_values(std::size_t n, double stddev, Rng& rng) {
    std::normal_distribution<double> dist(0.0, stddev);
    std::vector<double> v(n);
    for (auto& x : v) x = dist(rng);
    return v;
}

Linear make_linear(std::size_t in, std::size_t out, Rng& rng, bool trainable = true, double gain = 1.0) {
    const double limit = gain * std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    std::vector<double> w(in * out);
    for (auto& x : w) x = dist(rng);
    Linear l;
    l.weight = Tensor::from({in, out}, std::move(w));
    l.bias = Tensor::zeros({out});
    l.weight.set_requires_grad(trainable);
    l.bias.set_requires_grad(trainable);
    return l;
}

LayerNorm make_layer_norm(std::size_t d, bool trainable = true) {
    LayerNorm ln;
    ln.gamma = Tensor::full({d}, 1.0);
    ln.beta = Tensor::zeros({d});
    ln.gamma.set_requires_grad(trainable);
    ln.beta.set_requires_grad(trainable);
    return ln;
}

Attention make_attention(std::size_t d, Rng& rng, bool trainable = true) {
    Attention a;
    a.q = make_linear(d, d, rng, trainable);
    a.k = make_linear(d, d, rng, trainable);
    a.v = make_linear(d, d, rng, trainable);
    a.o = make_linear(d, d, rng, trainable);
    return a;
}

void push_linear(std::vector<NamedParameter>& out, const std::string& name, const Linear& l) {
    out.push_back({name + ".weight", l.weight, false});
    out.push_back({name + ".bias", l.bias, true});
}

void push_norm(std::vector<NamedParameter>& out, const std::string& name, const LayerNorm& ln) {
    out.push_back({name + ".weight", ln.gamma, false});
    out.push_back({name + ".bias", ln.beta, true});
}

void push_attention(std::vector<NamedParameter>& out, const std::string& name, const Attention& a) {
    push_linear(out, name + ".q", a.q);
    push_linear(out, name + ".k", a.k);
    push_linear(out, name + ".v", a.v);
    push_linear(out, name + ".o", a.o);
}

Tensor drop(const Tensor& x, double p, const ForwardMode& mode) {
    if (!mode.training || p == 0.0) return x;
    if (mode.rng == nullptr) throw std::logic_error("training forward with dropout needs an rng");
    return dropout(x, p, true, *mode.rng);
}

Tensor decoder_layer_forward(const DecoderLayer& layer, const Tensor& x, const Tensor& self_k, const Tensor& self_v,
                             const Tensor& mem_k, const Tensor& mem_v, const Tensor* mask, std::size_t heads,
                             double p, const ForwardMode& mode) {
    const auto& sa = layer.self_attn;
    Tensor h = sa.o(attend(sa.q(x), self_k, self_v, heads, mask));
    Tensor y = layer.ln1(add(x, drop(h, p, mode)));
    const auto& ca = layer.cross_attn;
    h = ca.o(attend(ca.q(y), mem_k, mem_v, heads, nullptr));
    y = layer.ln2(add(y, drop(h, p, mode)));
    h = layer.ff2(drop(gelu(layer.ff1(y)), p, mode));
    return layer.ln3(add(y, drop(h, p, mode)));
}

}  // namespace

void ModelConfig::validate() const {
    auto need = [](bool ok, const char* what) {
        if (!ok) throw std::invalid_argument(std::string("model config: ") + what);
    };
    need(d_model >= 2 && layers >= 1 && heads >= 1 && ffn_dim >= 1, "dims must be positive (d_model >= 2)");
    need(d_model % heads == 0, "d_model must be divisible by heads");
    need(dropout >= 0.0 && dropout < 1.0, "dropout must be in [0, 1)");
    need(d_enc >= 1 && max_len >= 1, "d_enc and max_len must be >= 1");
    need(d_sent >= 2 && sent_heads >= 1 && d_sent % sent_heads == 0, "d_sent must be divisible by sent_heads");
    need(sent_layers >= 1 && sent_ffn_dim >= 1, "sentence encoder dims must be positive");
    need(vocab_size >= 5, "vocab_size must be >= 5");
}

Tensor causal_mask(std::size_t n) {
    std::vector<double> m(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) m[i * n + j] = -std::numeric_limits<double>::infinity();
    return Tensor::from({n, n}, std::move(m));
}

Tensor sinusoidal_positions(std::size_t offset, std::size_t n, std::size_t d) {
    std::vector<double> pe(n * d);
    for (std::size_t r = 0; r < n; ++r) {
        const double pos = static_cast<double>(offset + r);
        for (std::size_t i = 0; i < d; i += 2) {
            const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(d));
            pe[r * d + i] = std::sin(pos * freq);
            if (i + 1 < d) pe[r * d + i + 1] = std::cos(pos * freq);
        }
    }
    return Tensor::from({n, d}, std::move(pe));
}

Tensor attend(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads, const Tensor* mask) {
    const std::size_t d = q.cols();
    const std::size_t dh = d / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<Tensor> outs;
    outs.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        Tensor qh = heads == 1 ? q : slice_cols(q, h * dh, dh);
        Tensor kh = heads == 1 ? k : slice_cols(k, h * dh, dh);
        Tensor vh = heads == 1 ? v : slice_cols(v, h * dh, dh);
        Tensor scores = scale(matmul(qh, transpose(kh)), inv_sqrt);
        if (mask != nullptr) scores = add(scores, *mask);
        outs.push_back(matmul(softmax(scores), vh));
    }
    return heads == 1 ? outs.front() : concat_cols(outs);
}

// ---- Captioner ------------------------------------------------------------

Captioner::Captioner(ModelConfig config, std::uint64_t seed, bool with_ser_head)
    : config_(config), has_ser_(with_ser_head) {
    config_.validate();
    Rng rng(seed);
    const std::size_t d = config_.d_model;
    enc_proj_ = make_linear(config_.d_enc, d, rng);
    tok_emb_ = Tensor::parameter({config_.vocab_size, d}, normal_values(config_.vocab_size * d, 1.0, rng));
    layers_.reserve(config_.layers);
    for (std::size_t i = 0; i < config_.layers; ++i) {
        DecoderLayer layer;
        layer.self_attn = make_attention(d, rng);
        layer.cross_attn = make_attention(d, rng);
        layer.ln1 = make_layer_norm(d);
        layer.ln2 = make_layer_norm(d);
        layer.ln3 = make_layer_norm(d);
        layer.ff1 = make_linear(d, config_.ffn_dim, rng);
        layer.ff2 = make_linear(config_.ffn_dim, d, rng);
        layers_.push_back(std::move(layer));
    }
    classifier_ = make_linear(d, config_.vocab_size, rng);
    if (has_ser_) {
        // Separate stream so that enabling the head leaves every other
        // parameter's initialization unchanged.
        Rng ser_rng(mix(seed, kSerHeadStream));
        ser_proj_ = make_linear(d, config_.d_sent, ser_rng);
    }
}

Captioner Captioner::clone() const {
    Captioner copy(config_, 0, has_ser_);
    copy.load_state(state());
    return copy;
}

Tensor Captioner::encode_project(const Tensor& features) const {
    if (features.ndim() != 2 || features.cols() != config_.d_enc)
        throw std::invalid_argument("encode_project: expected [T x " + std::to_string(config_.d_enc) + "] features, got " +
                                    shape_str(features.shape()));
    if (features.rows() == 0) throw std::invalid_argument("encode_project: no frames");
    return enc_proj_(features);
}

Tensor Captioner::decoder_input(const TokenSequence& tokens, std::size_t offset, const ForwardMode& mode) const {
    Tensor x = add(embedding(tok_emb_, tokens), sinusoidal_positions(offset, tokens.size(), config_.d_model));
    return drop(x, config_.dropout, mode);
}

DecoderOutput Captioner::decode_teacher_forced(const Tensor& memory, const TokenSequence& prev_tokens,
                                               const ForwardMode& mode) const {
    if (prev_tokens.empty() || prev_tokens.front() != text::kBos)
        throw std::invalid_argument("decode_teacher_forced: tokens must start with bos");
    if (prev_tokens.size() > config_.max_len + 1)
        throw std::length_error("decode_teacher_forced: " + std::to_string(prev_tokens.size()) +
                                " tokens exceed max_len + 1 = " + std::to_string(config_.max_len + 1));
    if (memory.ndim() != 2 || memory.cols() != config_.d_model)
        throw std::invalid_argument("decode_teacher_forced: memory must be [T x d_model]");
    const std::size_t n = prev_tokens.size();
    const Tensor mask = causal_mask(n);
    Tensor x = decoder_input(prev_tokens, 0, mode);
    for (const auto& layer : layers_) {
        const auto& ca = layer.cross_attn;
        x = decoder_layer_forward(layer, x, layer.self_attn.k(x), layer.self_attn.v(x), ca.k(memory), ca.v(memory),
                                  &mask, config_.heads, config_.dropout, mode);
    }
    return {x, classifier_(x)};
}

std::vector<double> Captioner::step_logits(const Tensor& memory, const TokenSequence& prefix) const {
    NoGradGuard no_grad;
    auto out = decode_teacher_forced(memory, prefix);
    const std::size_t v = out.logits.cols();
    auto d = out.logits.data();
    return {d.end() - static_cast<std::ptrdiff_t>(v), d.end()};
}

Tensor Captioner::ser_project(const Tensor& token_embeddings) const {
    if (!has_ser_) throw std::logic_error("ser_project: model built without the SER head");
    return ser_proj_(token_embeddings);
}

DecoderCache Captioner::start_cache(const Tensor& memory) const {
    NoGradGuard no_grad;
    DecoderCache cache;
    cache.self_k.resize(layers_.size());
    cache.self_v.resize(layers_.size());
    for (const auto& layer : layers_) {
        cache.mem_k.push_back(layer.cross_attn.k(memory));
        cache.mem_v.push_back(layer.cross_attn.v(memory));
    }
    return cache;
}

std::vector<double> Captioner::advance(DecoderCache& cache, int token) const {
    NoGradGuard no_grad;
    if (cache.length + 1 > config_.max_len + 1) throw std::length_error("advance: sequence exceeds max_len + 1");
    const std::size_t pos = cache.length;
    Tensor x = decoder_input({token}, pos, {});
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const auto& layer = layers_[l];
        Tensor k_new = layer.self_attn.k(x);
        Tensor v_new = layer.self_attn.v(x);
        cache.self_k[l] = pos == 0 ? k_new : concat_rows({cache.self_k[l], k_new});
        cache.self_v[l] = pos == 0 ? v_new : concat_rows({cache.self_v[l], v_new});
        x = decoder_layer_forward(layer, x, cache.self_k[l], cache.self_v[l], cache.mem_k[l], cache.mem_v[l], nullptr,
                                  config_.heads, config_.dropout, {});
    }
    ++cache.length;
    const Tensor logits = classifier_(x);
    return {logits.data().begin(), logits.data().end()};
}

std::vector<NamedParameter> Captioner::parameters() const {
    std::vector<NamedParameter> out;
    push_linear(out, "enc_proj", enc_proj_);
    out.push_back({"tok_emb.weight", tok_emb_, false});
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const std::string p = "layers." + std::to_string(i);
        const auto& l = layers_[i];
        push_attention(out, p + ".self_attn", l.self_attn);
        push_attention(out, p + ".cross_attn", l.cross_attn);
        push_norm(out, p + ".ln1", l.ln1);
        push_norm(out, p + ".ln2", l.ln2);
        push_norm(out, p + ".ln3", l.ln3);
        push_linear(out, p + ".ff1", l.ff1);
        push_linear(out, p + ".ff2", l.ff2);
    }
    push_linear(out, "classifier", classifier_);
    if (has_ser_) push_linear(out, "ser_proj", ser_proj_);
    return out;
}

StateDict Captioner::state() const {
    StateDict s;
    for (const auto& p : parameters()) s[p.name] = {p.tensor.data().begin(), p.tensor.data().end()};
    return s;
}

void Captioner::load_state(const StateDict& state) {
    for (auto& p : parameters()) {
        auto it = state.find(p.name);
        if (it == state.end()) throw std::runtime_error("load_state: missing parameter " + p.name);
        if (it->second.size() != p.tensor.size())
            throw std::runtime_error("load_state: size mismatch for " + p.name);
        std::copy(it->second.begin(), it->second.end(), p.tensor.mutable_data().begin());
    }
}

std::size_t Captioner::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : parameters()) n += p.tensor.size();
    return n;
}

// ---- SentenceEncoder ------------------------------------------------------

SentenceEncoder::SentenceEncoder(const ModelConfig& config, const text::Vocabulary& vocab, const LexicalGroups& groups)
    : dim_(config.d_sent), heads_(config.sent_heads), vocab_(vocab) {
    const std::size_t d = dim_;
    // Each row depends only on the token string (and its synonym group), so a
    // word gets the same vector under any vocabulary.
    std::vector<double> table;
    table.reserve(vocab.size() * d);
    for (const auto& tok : vocab.tokens()) {
        Rng row_rng(mix(config.sent_seed, string_hash(tok)));
        auto own = normal_values(d, 1.0, row_rng);
        auto g = groups.find(tok);
        if (g != groups.end()) {
            Rng group_rng(mix(mix(config.sent_seed, kGroupStream), static_cast<std::uint64_t>(g->second)));
            auto shared = normal_values(d, 1.0, group_rng);
            for (std::size_t j = 0; j < d; ++j) own[j] = 0.8 * shared[j] + 0.6 * own[j];
        }
        table.insert(table.end(), own.begin(), own.end());
    }
    table_ = Tensor::from({vocab.size(), d}, std::move(table));

    Rng rng(config.sent_seed);
    for (std::size_t i = 0; i < config.sent_layers; ++i) {
        EncoderLayer layer;
        layer.attn = make_attention(d, rng, false);
        layer.ln1 = make_layer_norm(d, false);
        layer.ln2 = make_layer_norm(d, false);
        layer.ff1 = make_linear(d, config.sent_ffn_dim, rng, false);
        layer.ff2 = make_linear(config.sent_ffn_dim, d, rng, false);
        layers_.push_back(std::move(layer));
    }
    head_.weight = Tensor::from({d, d}, normal_values(d * d, config.sent_output_scale / std::sqrt(static_cast<double>(d)), rng));
    head_.bias = Tensor::zeros({d});
}

Tensor SentenceEncoder::embed_tokens(const TokenSequence& ids) const { return embedding(table_, ids); }

Tensor SentenceEncoder::from_tokens(const TokenSequence& ids) const { return from_vectors(embed_tokens(ids)); }

Tensor SentenceEncoder::from_vectors(const Tensor& vectors) const {
    if (vectors.ndim() != 2 || vectors.cols() != dim_)
        throw std::invalid_argument("sentence encoder: expected [L x " + std::to_string(dim_) + "] input, got " +
                                    shape_str(vectors.shape()));
    if (vectors.rows() == 0) throw std::invalid_argument("sentence encoder: empty sequence");
    Tensor x = add(vectors, sinusoidal_positions(0, vectors.rows(), dim_));
    for (const auto& layer : layers_) {
        const auto& a = layer.attn;
        x = layer.ln1(add(x, a.o(attend(a.q(x), a.k(x), a.v(x), heads_, nullptr))));
        x = layer.ln2(add(x, layer.ff2(gelu(layer.ff1(x)))));
    }
    return head_(mean_rows(x));
}

TokenSequence SentenceEncoder::sentence_ids(std::string_view text) const {
    auto ids = text::encode(vocab_, text);
    ids.erase(ids.begin());
    return ids;
}

std::vector<double> SentenceEncoder::embed_text(std::string_view text) const {
    NoGradGuard no_grad;
    auto e = from_tokens(sentence_ids(text));
    return {e.data().begin(), e.data().end()};
}

std::vector<NamedParameter> SentenceEncoder::parameters() const {
    std::vector<NamedParameter> out;
    out.push_back({"table", table_, false});
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const std::string p = "layers." + std::to_string(i);
        push_attention(out, p + ".attn", layers_[i].attn);
        push_norm(out, p + ".ln1", layers_[i].ln1);
        push_norm(out, p + ".ln2", layers_[i].ln2);
        push_linear(out, p + ".ff1", layers_[i].ff1);
        push_linear(out, p + ".ff2", layers_[i].ff2);
    }
    push_linear(out, "head", head_);
    return out;
}

std::uint64_t SentenceEncoder::parameter_hash() const {
    std::uint64_t h = 14695981039346656037ULL;
    for (const auto& p : parameters()) h = hash_values(p.tensor.data(), h);
    return h;
}

namespace {

double norm_where(const std::vector<NamedParameter>& params, bool exempt) {
    double s = 0.0;
    for (const auto& p : params)
        if (p.decay_exempt == exempt)
            for (double v : p.tensor.data()) s += v * v;
    return std::sqrt(s);
}

}  // namespace

double decayed_parameter_norm(const std::vector<NamedParameter>& params) { return norm_where(params, false); }
double exempt_parameter_norm(const std::vector<NamedParameter>& params) { return norm_where(params, true); }

}  // namespace aac::model
