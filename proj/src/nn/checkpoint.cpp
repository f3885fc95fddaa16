#include "sni_sight/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "sni_sight/error.hpp"

namespace sni_sight::nn {
namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T v) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    const U bits = std::bit_cast<U>(v);
    for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}
    [[nodiscard]] bool done() const { return pos_ == b_.size(); }
    [[nodiscard]] std::size_t pos() const { return pos_; }

    template <typename T>
    T get(const char* what) {
        using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
        need(sizeof(U), what);
        U bits = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i) bits |= static_cast<U>(b_[pos_ + i]) << (8 * i);
        pos_ += sizeof(U);
        return std::bit_cast<T>(bits);
    }
    std::string str(std::size_t n, const char* what) {
        need(n, what);
        std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    void need(std::size_t n, const char* what) const {
        if (b_.size() - pos_ < n) {
            throw Error(ErrorCode::CorruptTensor,
                        std::string(what) + " at byte " + std::to_string(pos_) + " runs past end of file");
        }
    }

private:
    std::span<const std::uint8_t> b_;
    std::size_t pos_ = 0;
};

}  // namespace

void Checkpoint::put(std::string name, Tensor t) {
    for (auto& [n, existing] : tensors) {
        if (n == name) {
            existing = std::move(t);
            return;
        }
    }
    tensors.emplace_back(std::move(name), std::move(t));
}

const Tensor& Checkpoint::get(const std::string& name) const {
    for (const auto& [n, t] : tensors) {
        if (n == name) return t;
    }
    throw Error(ErrorCode::CorruptTensor, "checkpoint has no tensor \"" + name + "\"");
}

bool Checkpoint::has(const std::string& name) const {
    for (const auto& [n, t] : tensors) {
        if (n == name) return true;
    }
    return false;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
    std::vector<std::uint8_t> out(kCheckpointMagic, kCheckpointMagic + 4);
    put_le(out, kCheckpointVersion);
    const std::string meta = ckpt.metadata.dump();
    put_le(out, static_cast<std::uint32_t>(meta.size()));
    out.insert(out.end(), meta.begin(), meta.end());
    for (const auto& [name, t] : ckpt.tensors) {
        put_le(out, static_cast<std::uint32_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        put_le(out, static_cast<std::uint32_t>(t.rank()));
        for (auto d : t.shape()) put_le(out, static_cast<std::uint64_t>(d));
        for (double v : t.values()) put_le(out, v);
    }
    return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
        throw Error(ErrorCode::BadMagic, "not a checkpoint (expected \"SNIM\")");
    }
    Reader r(bytes.subspan(4));
    const auto version = r.get<std::uint32_t>("format version");
    if (version != kCheckpointVersion) {
        throw Error(ErrorCode::VersionMismatch, "checkpoint format " + std::to_string(version) + ", this build reads " +
                                                    std::to_string(kCheckpointVersion));
    }
    Checkpoint ckpt;
    const auto meta_len = r.get<std::uint32_t>("metadata length");
    try {
        ckpt.metadata = nlohmann::json::parse(r.str(meta_len, "metadata"));
    } catch (const nlohmann::json::exception& ex) {
        throw Error(ErrorCode::CorruptTensor, std::string("metadata: ") + ex.what());
    }
    while (!r.done()) {
        const auto name_len = r.get<std::uint32_t>("tensor name length");
        std::string name = r.str(name_len, "tensor name");
        const auto rank = r.get<std::uint32_t>("tensor rank");
        if (rank > 8) throw Error(ErrorCode::CorruptTensor, name + ": implausible rank " + std::to_string(rank));
        std::vector<std::size_t> shape;
        std::uint64_t count = 1;
        for (std::uint32_t i = 0; i < rank; ++i) {
            const auto d = r.get<std::uint64_t>("tensor dimension");
            if (d != 0 && count > (bytes.size() / 8) / d) {
                throw Error(ErrorCode::CorruptTensor, name + ": dimensions exceed file size");
            }
            count *= d;
            shape.push_back(static_cast<std::size_t>(d));
        }
        r.need(count * 8, "tensor values");
        Tensor t(shape);
        for (double& v : t.values()) v = r.get<double>("tensor value");
        ckpt.tensors.emplace_back(std::move(name), std::move(t));
    }
    return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    const auto bytes = encode_checkpoint(ckpt);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    return decode_checkpoint(bytes);
}

}  // namespace sni_sight::nn
