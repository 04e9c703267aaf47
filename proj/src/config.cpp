#include "aac/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace aac::harness {

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

template <class T>
T parse_number(std::string_view key, std::string_view v) {
    T out{};
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size())
        throw std::invalid_argument("bad value '" + std::string(v) + "' for " + std::string(key));
    return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw std::invalid_argument("bad boolean '" + std::string(v) + "' for " + std::string(key));
}

struct Field {
    const char* key;
    std::function<std::string(const ExperimentConfig&)> get;
    std::function<void(ExperimentConfig&, std::string_view)> set;
};

#define AAC_SIZE(KEY, MEMBER)                                                                        \
    Field {                                                                                          \
        KEY, [](const ExperimentConfig& c) { return std::to_string(c.MEMBER); },                     \
            [](ExperimentConfig& c, std::string_view v) { c.MEMBER = parse_number<std::size_t>(KEY, v); } \
    }
#define AAC_U64(KEY, MEMBER)                                                                           \
    Field {                                                                                            \
        KEY, [](const ExperimentConfig& c) { return std::to_string(c.MEMBER); },                       \
            [](ExperimentConfig& c, std::string_view v) { c.MEMBER = parse_number<std::uint64_t>(KEY, v); } \
    }
#define AAC_REAL(KEY, MEMBER)                                                                    \
    Field {                                                                                      \
        KEY, [](const ExperimentConfig& c) { return fmt(c.MEMBER); },                            \
            [](ExperimentConfig& c, std::string_view v) { c.MEMBER = parse_number<double>(KEY, v); } \
    }

const std::vector<Field>& fields() {
    static const std::vector<Field> f{
        AAC_SIZE("model.d_model", model.d_model),
        AAC_SIZE("model.layers", model.layers),
        AAC_SIZE("model.heads", model.heads),
        AAC_SIZE("model.ffn_dim", model.ffn_dim),
        AAC_REAL("model.dropout", model.dropout),
        AAC_SIZE("model.d_sent", model.d_sent),
        AAC_SIZE("model.max_len", model.max_len),
        AAC_SIZE("model.sent_layers", model.sent_layers),
        AAC_SIZE("model.sent_heads", model.sent_heads),
        AAC_SIZE("model.sent_ffn_dim", model.sent_ffn_dim),
        AAC_REAL("model.sent_output_scale", model.sent_output_scale),
        AAC_U64("model.sent_seed", model.sent_seed),
        AAC_REAL("loss.label_smoothing", loss.label_smoothing),
        AAC_REAL("loss.lambda", loss.lambda),
        AAC_REAL("loss.beta", loss.beta),
        Field{"loss.criterion", [](const ExperimentConfig& c) { return loss::to_string(c.loss.criterion); },
              [](ExperimentConfig& c, std::string_view v) { c.loss.criterion = loss::ser_criterion_from_string(v); }},
        Field{"loss.ser_enabled", [](const ExperimentConfig& c) { return std::string(c.loss.ser_enabled ? "true" : "false"); },
              [](ExperimentConfig& c, std::string_view v) { c.loss.ser_enabled = parse_bool("loss.ser_enabled", v); }},
        AAC_REAL("optim.lr0", optim.lr0),
        AAC_REAL("optim.beta1", optim.beta1),
        AAC_REAL("optim.beta2", optim.beta2),
        AAC_REAL("optim.eps", optim.eps),
        AAC_REAL("optim.wd", optim.weight_decay),
        AAC_REAL("optim.clip_norm", optim.clip_norm),
        AAC_SIZE("optim.epochs", optim.epochs),
        AAC_SIZE("decode.beam", beam_size),
        AAC_SIZE("decode.min_len", min_len),
        AAC_SIZE("decode.max_len", max_len),
        AAC_U64("data.seed", data.seed),
        AAC_SIZE("data.n_train", data.n_train),
        AAC_SIZE("data.n_val", data.n_val),
        AAC_SIZE("data.n_test", data.n_test),
        AAC_SIZE("data.train_refs", data.train_refs),
        AAC_SIZE("data.eval_refs", data.eval_refs),
        AAC_REAL("data.noise_sigma", data.noise_sigma),
        AAC_SIZE("data.frames", data.frames),
        AAC_SIZE("data.d_enc", data.d_enc),
        Field{"text.tokenizer", [](const ExperimentConfig& c) { return text::to_string(c.tokenizer); },
              [](ExperimentConfig& c, std::string_view v) { c.tokenizer = text::vocab_kind_from_string(v); }},
        AAC_SIZE("text.min_count", min_count),
        AAC_SIZE("text.subword_size", subword_size),
        AAC_U64("train.seed", train.seed),
        AAC_SIZE("train.batch_size", train.batch_size),
        AAC_SIZE("train.n_seeds", train.n_seeds),
        AAC_SIZE("train.val_clips", train.val_clips),
    };
    return f;
}

#undef AAC_SIZE
#undef AAC_U64
#undef AAC_REAL

}  // namespace

void ExperimentConfig::validate() const {
    auto m = model;
    m.vocab_size = std::max<std::size_t>(m.vocab_size, 5);
    m.d_enc = data.d_enc;
    m.validate();
    loss.validate();
    optim.validate();
    decode_config().validate();
    if (max_len > model.max_len) throw std::invalid_argument("decode.max_len exceeds model.max_len");
    if (train.batch_size == 0) throw std::invalid_argument("train.batch_size must be >= 1");
    if (train.n_seeds == 0) throw std::invalid_argument("train.n_seeds must be >= 1");
    if (data.n_train == 0 || data.n_val == 0 || data.n_test == 0) throw std::invalid_argument("data split sizes must be >= 1");
    if (data.train_refs != 1 && data.train_refs != 5) throw std::invalid_argument("data.train_refs must be 1 or 5");
    if (data.eval_refs != 1 && data.eval_refs != 5) throw std::invalid_argument("data.eval_refs must be 1 or 5");
    if (data.noise_sigma < 0.0) throw std::invalid_argument("data.noise_sigma must be >= 0");
}

decode::DecodeConfig ExperimentConfig::decode_config() const {
    decode::DecodeConfig d;
    d.beam_size = beam_size;
    d.min_len = min_len;
    d.max_len = max_len;
    return d;
}

std::map<std::string, std::string> to_key_values(const ExperimentConfig& config) {
    std::map<std::string, std::string> out;
    for (const auto& f : fields()) out[f.key] = f.get(config);
    return out;
}

std::string serialize(const ExperimentConfig& config) {
    std::string out, section;
    for (const auto& f : fields()) {
        const std::string key = f.key;
        const auto dot = key.find('.');
        if (key.substr(0, dot) != section) {
            if (!section.empty()) out += '\n';
            section = key.substr(0, dot);
            out += "[" + section + "]\n";
        }
        out += key.substr(dot + 1) + " = " + f.get(config) + "\n";
    }
    return out;
}

void set_value(ExperimentConfig& config, std::string_view key, std::string_view value) {
    for (const auto& f : fields())
        if (key == f.key) {
            f.set(config, value);
            return;
        }
    throw std::invalid_argument("unknown config key '" + std::string(key) + "'");
}

ExperimentConfig parse_config(std::string_view text) {
    ExperimentConfig c;
    std::istringstream in{std::string(text)};
    std::string line, section;
    for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
        const auto hash = line.find('#');
        const std::string s = trim(std::string_view(line).substr(0, hash));
        if (s.empty()) continue;
        try {
            if (s.front() == '[') {
                if (s.back() != ']') throw std::invalid_argument("unterminated section header");
                section = trim(std::string_view(s).substr(1, s.size() - 2));
                continue;
            }
            const auto eq = s.find('=');
            if (eq == std::string::npos) throw std::invalid_argument("expected key = value");
            std::string key = trim(std::string_view(s).substr(0, eq));
            const std::string value = trim(std::string_view(s).substr(eq + 1));
            if (key.find('.') == std::string::npos && !section.empty()) key = section + "." + key;
            set_value(c, key, value);
        } catch (const std::exception& e) {
            throw std::invalid_argument("config line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    c.validate();
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read config " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

}  // namespace aac::harness
