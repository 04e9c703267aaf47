#include "aac/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace aac::harness {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoints are written in host byte order");

constexpr char kMagic[8] = {'A', 'A', 'C', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

class Writer {
public:
    template <class T>
    void pod(const T& v) {
        out_.append(reinterpret_cast<const char*>(&v), sizeof(T));
    }
    void u64(std::uint64_t v) { pod(v); }
    void str(std::string_view s) {
        u64(s.size());
        out_.append(s);
    }
    void doubles(const std::vector<double>& v) {
        u64(v.size());
        out_.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
    }
    void raw(const char* p, std::size_t n) { out_.append(p, n); }
    std::string take() { return std::move(out_); }

private:
    std::string out_;
};

class Reader {
public:
    explicit Reader(std::string_view in) : in_(in) {}
    template <class T>
    T pod() {
        T v{};
        need(sizeof(T));
        std::memcpy(&v, in_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::uint64_t u64() { return pod<std::uint64_t>(); }
    std::string str() {
        const auto n = u64();
        need(n);
        std::string s(in_.substr(pos_, n));
        pos_ += n;
        return s;
    }
    std::vector<double> doubles() {
        const auto n = u64();
        need(n * sizeof(double));
        std::vector<double> v(n);
        std::memcpy(v.data(), in_.data() + pos_, n * sizeof(double));
        pos_ += n * sizeof(double);
        return v;
    }
    bool done() const { return pos_ == in_.size(); }

private:
    void need(std::uint64_t n) const {
        if (n > in_.size() - pos_) throw std::runtime_error("checkpoint truncated");
    }
    std::string_view in_;
    std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const Checkpoint& c) {
    Writer w;
    w.raw(kMagic, sizeof kMagic);
    w.pod(kVersion);
    w.str(c.config);
    w.str(c.vocabulary);
    w.u64(c.epoch);
    w.pod(c.val_fense);
    w.u64(c.best_epoch);
    w.pod(c.best_fense);
    w.str(c.rng_state);
    w.u64(c.model.size());
    for (const auto& [name, values] : c.model) {
        w.str(name);
        w.doubles(values);
    }
    w.u64(c.best_model.size());
    for (const auto& [name, values] : c.best_model) {
        w.str(name);
        w.doubles(values);
    }
    w.u64(c.optimizer.step);
    w.u64(c.optimizer.moments.size());
    for (const auto& [name, mv] : c.optimizer.moments) {
        w.str(name);
        w.doubles(mv.m);
        w.doubles(mv.v);
    }
    w.u64(c.curve.size());
    for (const auto& r : c.curve) w.doubles({r.epoch, r.train_loss, r.val_ce, r.val_sbert, r.val_fense, r.lr});
    return w.take();
}

Checkpoint decode_checkpoint(std::string_view bytes) {
    if (bytes.size() < sizeof kMagic || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
        throw std::runtime_error("not a checkpoint file");
    Reader r(bytes.substr(sizeof kMagic));
    const auto version = r.pod<std::uint32_t>();
    if (version != kVersion) throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
    Checkpoint c;
    c.config = r.str();
    c.vocabulary = r.str();
    c.epoch = r.u64();
    c.val_fense = r.pod<double>();
    c.best_epoch = r.u64();
    c.best_fense = r.pod<double>();
    c.rng_state = r.str();
    for (auto n = r.u64(); n > 0; --n) {
        auto name = r.str();
        c.model[name] = r.doubles();
    }
    for (auto n = r.u64(); n > 0; --n) {
        auto name = r.str();
        c.best_model[name] = r.doubles();
    }
    c.optimizer.step = r.u64();
    for (auto n = r.u64(); n > 0; --n) {
        auto name = r.str();
        auto& mv = c.optimizer.moments[name];
        mv.m = r.doubles();
        mv.v = r.doubles();
    }
    for (auto n = r.u64(); n > 0; --n) {
        const auto v = r.doubles();
        if (v.size() != 6) throw std::runtime_error("checkpoint curve row has " + std::to_string(v.size()) + " fields");
        c.curve.push_back({v[0], v[1], v[2], v[3], v[4], v[5]});
    }
    if (!r.done()) throw std::runtime_error("checkpoint has trailing bytes");
    return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    const auto bytes = encode_checkpoint(ckpt);
    // write then rename so an interrupted save never leaves a torn file
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw std::runtime_error("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read checkpoint " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return decode_checkpoint(ss.str());
    } catch (const std::exception& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
}

}  // namespace aac::harness
