#include "vad/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace vad {

namespace {

class Writer {
public:
    explicit Writer(std::ostream& os) : os_(os) {}

    template <typename U>
    void put(U value) {
        std::uint64_t bits = 0;
        if constexpr (std::is_same_v<U, double>) {
            bits = std::bit_cast<std::uint64_t>(value);
        } else if constexpr (std::is_same_v<U, float>) {
            bits = std::bit_cast<std::uint32_t>(value);
        } else {
            bits = static_cast<std::uint64_t>(value);
        }
        char bytes[sizeof(U)];
        for (std::size_t i = 0; i < sizeof(U); ++i) {
            bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xffu);
        }
        os_.write(bytes, sizeof(U));
    }

    void tensor(const Tensor<float>& t) {
        put<std::uint32_t>(static_cast<std::uint32_t>(t.rows()));
        put<std::uint32_t>(static_cast<std::uint32_t>(t.cols()));
        for (Eigen::Index i = 0; i < t.size(); ++i) {
            put<float>(t.data()[i]);
        }
    }

private:
    std::ostream& os_;
};

class Reader {
public:
    Reader(std::vector<unsigned char> bytes, std::string name)
        : bytes_(std::move(bytes)), name_(std::move(name)) {}

    template <typename U>
    U get() {
        if (pos_ + sizeof(U) > bytes_.size()) {
            throw DataError(name_ + ": truncated checkpoint");
        }
        std::uint64_t bits = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i) {
            bits |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
        }
        pos_ += sizeof(U);
        if constexpr (std::is_same_v<U, double>) {
            return std::bit_cast<double>(bits);
        } else if constexpr (std::is_same_v<U, float>) {
            return std::bit_cast<float>(static_cast<std::uint32_t>(bits));
        } else {
            return static_cast<U>(bits);
        }
    }

    void tensor(Tensor<float>& t) {
        const auto rows = get<std::uint32_t>();
        const auto cols = get<std::uint32_t>();
        if (rows != t.rows() || cols != t.cols()) {
            std::ostringstream msg;
            msg << name_ << ": tensor shape " << rows << "x" << cols << " does not match config ("
                << t.rows() << "x" << t.cols() << ")";
            throw DataError(msg.str());
        }
        for (Eigen::Index i = 0; i < t.size(); ++i) {
            t.data()[i] = get<float>();
        }
    }

    bool at_end() const { return pos_ == bytes_.size(); }
    std::size_t position() const { return pos_; }
    const std::vector<unsigned char>& bytes() const { return bytes_; }

private:
    std::vector<unsigned char> bytes_;
    std::string name_;
    std::size_t pos_ = 0;
};

void write_params(Writer& w, const DenoiserParams<float>& p) {
    w.tensor(p.frequencies);
    for (const Tensor<float>* t : p.trainable()) {
        w.tensor(*t);
    }
}

void read_params(Reader& r, DenoiserParams<float>& p) {
    r.tensor(p.frequencies);
    for (Tensor<float>* t : p.trainable()) {
        r.tensor(*t);
    }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    const NetworkConfig& cfg = ckpt.params.config;
    if (!(ckpt.ema.config == cfg)) {
        throw UsageError("save_checkpoint: EMA and raw parameters have different shapes");
    }
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw DataError("cannot write " + tmp.string());
        }
        Writer w(out);
        out.write(kCheckpointMagic, 4);
        w.put<std::uint16_t>(kCheckpointVersion);
        w.put<std::uint32_t>(static_cast<std::uint32_t>(cfg.input_dim));
        w.put<std::uint32_t>(static_cast<std::uint32_t>(cfg.encoder_widths.size()));
        for (auto width : cfg.encoder_widths) {
            w.put<std::uint32_t>(static_cast<std::uint32_t>(width));
        }
        w.put<std::uint32_t>(static_cast<std::uint32_t>(cfg.decoder_widths.size()));
        for (auto width : cfg.decoder_widths) {
            w.put<std::uint32_t>(static_cast<std::uint32_t>(width));
        }
        w.put<std::uint32_t>(static_cast<std::uint32_t>(cfg.embed_dim));
        w.put<std::uint8_t>(static_cast<std::uint8_t>(cfg.activation));
        w.put<double>(ckpt.stats.sigma_data);
        w.put<std::uint8_t>(ckpt.stats.centered() ? 1 : 0);
        if (ckpt.stats.centered()) {
            if (ckpt.stats.means.size() != cfg.input_dim) {
                throw UsageError("save_checkpoint: centering means do not match input_dim");
            }
            for (double m : ckpt.stats.means) {
                w.put<double>(m);
            }
        }
        w.put<double>(ckpt.noise.p_mean);
        w.put<double>(ckpt.noise.p_std);
        write_params(w, ckpt.params);
        write_params(w, ckpt.ema);
        if (!out) {
            throw DataError("write failed for " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open " + path.string());
    }
    Reader r({std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()},
             path.string());
    if (r.bytes().size() < 4 || std::memcmp(r.bytes().data(), kCheckpointMagic, 4) != 0) {
        throw DataError(path.string() + ": bad magic (expected VADW)");
    }
    for (int i = 0; i < 4; ++i) {
        r.get<std::uint8_t>();
    }
    const auto version = r.get<std::uint16_t>();
    if (version != kCheckpointVersion) {
        throw DataError(path.string() + ": unsupported checkpoint version " +
                        std::to_string(version));
    }
    NetworkConfig cfg;
    cfg.input_dim = r.get<std::uint32_t>();
    cfg.encoder_widths.resize(r.get<std::uint32_t>());
    for (auto& width : cfg.encoder_widths) {
        width = r.get<std::uint32_t>();
    }
    cfg.decoder_widths.resize(r.get<std::uint32_t>());
    for (auto& width : cfg.decoder_widths) {
        width = r.get<std::uint32_t>();
    }
    cfg.embed_dim = r.get<std::uint32_t>();
    const auto activation = r.get<std::uint8_t>();
    if (activation > static_cast<std::uint8_t>(Activation::Tanh)) {
        throw DataError(path.string() + ": unknown activation code");
    }
    cfg.activation = static_cast<Activation>(activation);
    try {
        cfg.validate();
    } catch (const UsageError& e) {
        throw DataError(path.string() + ": invalid network config: " + e.what());
    }

    Checkpoint ckpt{DenoiserParams<float>::zeros(cfg), DenoiserParams<float>::zeros(cfg), {}, {}};
    ckpt.stats.sigma_data = r.get<double>();
    if (r.get<std::uint8_t>() != 0) {
        ckpt.stats.means.resize(cfg.input_dim);
        for (auto& m : ckpt.stats.means) {
            m = r.get<double>();
        }
    }
    ckpt.noise.p_mean = r.get<double>();
    ckpt.noise.p_std = r.get<double>();
    read_params(r, ckpt.params);
    read_params(r, ckpt.ema);
    if (!r.at_end()) {
        throw DataError(path.string() + ": trailing bytes after checkpoint payload");
    }
    if (!(ckpt.stats.sigma_data > 0.0)) {
        throw DataError(path.string() + ": non-positive sigma_data");
    }
    return ckpt;
}

}  // namespace vad
