#include "nseg/core/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>

namespace nseg {
namespace {

using Kind = CheckpointError::Kind;

template <class U>
void put_le(std::ostream& out, U value) {
    unsigned char bytes[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<unsigned char>((value >> (8 * i)) & 0xFF);
    out.write(reinterpret_cast<const char*>(bytes), sizeof(U));
}

class Reader {
public:
    explicit Reader(std::istream& in) : in_(in) {
        const auto start = in_.tellg();
        if (start != std::streampos(-1) && in_.seekg(0, std::ios::end)) {
            limit_ = static_cast<std::uint64_t>(in_.tellg() - start);
            in_.seekg(start);
        }
        in_.clear();
        consumed_ = 0;
    }

    // Guards allocations against corrupt size fields when the stream length is known.
    void require(std::uint64_t n, const char* what) const {
        if (limit_ && consumed_ + n > *limit_)
            throw CheckpointError(Kind::truncated, std::string("checkpoint truncated while reading ") + what);
    }

    void bytes(void* dst, std::size_t n, const char* what) {
        in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
        consumed_ += static_cast<std::uint64_t>(in_.gcount());
        if (static_cast<std::size_t>(in_.gcount()) != n)
            throw CheckpointError(Kind::truncated, std::string("checkpoint truncated while reading ") + what);
    }

    template <class U>
    U le(const char* what) {
        unsigned char b[sizeof(U)];
        bytes(b, sizeof(U), what);
        U v = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(b[i]) << (8 * i));
        return v;
    }

    bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

private:
    std::istream& in_;
    std::optional<std::uint64_t> limit_ = std::nullopt;
    std::uint64_t consumed_ = 0;
};

}  // namespace

void write_checkpoint(std::ostream& out, const CheckpointData& data) {
    if (data.tensors.size() > std::numeric_limits<std::uint32_t>::max())
        throw CheckpointError(Kind::io, "too many tensors for checkpoint");
    out.write(kCheckpointMagic, 4);
    put_le<std::uint16_t>(out, kCheckpointVersion);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(data.tensors.size()));
    for (const auto& nt : data.tensors) {
        if (nt.name.empty() || nt.name.size() > std::numeric_limits<std::uint16_t>::max())
            throw CheckpointError(Kind::io, "checkpoint tensor name length out of range: '" + nt.name + "'");
        const auto& dims = nt.tensor.shape().dims();
        if (dims.size() > std::numeric_limits<std::uint8_t>::max())
            throw CheckpointError(Kind::io, "tensor rank too large for checkpoint: " + nt.name);
        put_le<std::uint16_t>(out, static_cast<std::uint16_t>(nt.name.size()));
        out.write(nt.name.data(), static_cast<std::streamsize>(nt.name.size()));
        put_le<std::uint8_t>(out, static_cast<std::uint8_t>(dims.size()));
        for (auto d : dims) {
            if (d > std::numeric_limits<std::uint32_t>::max())
                throw CheckpointError(Kind::io, "dimension too large for checkpoint: " + nt.name);
            put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
        }
        for (float v : nt.tensor.data()) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
    }
    if (data.metadata.size() > std::numeric_limits<std::uint32_t>::max())
        throw CheckpointError(Kind::io, "checkpoint metadata too large");
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(data.metadata.size()));
    out.write(data.metadata.data(), static_cast<std::streamsize>(data.metadata.size()));
    if (!out) throw CheckpointError(Kind::io, "failed writing checkpoint");
}

CheckpointData read_checkpoint(std::istream& in) {
    Reader r(in);
    char magic[4];
    r.bytes(magic, 4, "magic");
    if (std::memcmp(magic, kCheckpointMagic, 4) != 0)
        throw CheckpointError(Kind::bad_magic, "not a checkpoint: unknown magic bytes");
    const auto version = r.le<std::uint16_t>("version");
    if (version != kCheckpointVersion)
        throw CheckpointError(Kind::version_mismatch, "checkpoint format version " + std::to_string(version) +
                                                          " is not supported (expected " +
                                                          std::to_string(kCheckpointVersion) + ")");
    const auto count = r.le<std::uint32_t>("tensor count");

    CheckpointData data;
    for (std::uint32_t t = 0; t < count; ++t) {
        const auto name_len = r.le<std::uint16_t>("name length");
        if (name_len == 0) throw CheckpointError(Kind::corrupt, "checkpoint tensor with empty name");
        std::string name(name_len, '\0');
        r.bytes(name.data(), name_len, "tensor name");
        const auto rank = r.le<std::uint8_t>("rank");
        std::vector<std::int64_t> dims(rank);
        for (auto& d : dims) d = r.le<std::uint32_t>("dims");
        Shape shape(dims);
        r.require(4 * static_cast<std::uint64_t>(shape.numel()), "tensor data");
        std::vector<float> values(shape.numel());
        for (auto& v : values) v = std::bit_cast<float>(r.le<std::uint32_t>("tensor data"));
        data.tensors.push_back({std::move(name), Tensor<float>(std::move(shape), std::move(values))});
    }
    const auto meta_len = r.le<std::uint32_t>("metadata length");
    r.require(meta_len, "metadata");
    data.metadata.resize(meta_len);
    r.bytes(data.metadata.data(), meta_len, "metadata");
    if (!r.at_end()) throw CheckpointError(Kind::corrupt, "trailing bytes after checkpoint metadata");
    return data;
}

void save_checkpoint_file(const std::filesystem::path& path, const CheckpointData& data) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw CheckpointError(Kind::io, "cannot open " + tmp.string() + " for writing");
        write_checkpoint(out, data);
        out.flush();
        if (!out) throw CheckpointError(Kind::io, "failed writing " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

CheckpointData load_checkpoint_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError(Kind::io, "cannot open checkpoint " + path.string());
    return read_checkpoint(in);
}

}  // namespace nseg
