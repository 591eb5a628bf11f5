#include "ffkit/checkpoint.hpp"

#include "ffkit/binio.hpp"
#include "ffkit/rng.hpp"

namespace ffkit {

namespace {
constexpr char kMagic[8] = {'F', 'F', 'C', 'K', 'P', 'T', '0', '1'};
}

const Tensor* Checkpoint::find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return &t;
    return nullptr;
}

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
    ByteWriter w;
    w.raw(kMagic, 8);
    w.u32(ck.version);
    w.str(ck.metadata_json);
    w.u32(uint32_t(ck.tensors.size()));
    for (const auto& [name, t] : ck.tensors) {
        w.str(name);
        w.u8(uint8_t(t.dtype()));
        w.u32(uint32_t(t.rank()));
        for (int64_t d : t.shape()) w.i64(d);
        w.raw(t.raw(), t.raw_size());
    }
    ByteWriter out = std::move(w);
    const uint64_t checksum = fnv1a64(out.bytes().data(), out.size());
    out.u64(checksum);
    write_file_bytes(path, out.bytes().data(), out.size());
}

Checkpoint load_checkpoint(const std::string& path) {
    auto bytes = read_file_bytes(path);
    if (bytes.size() < 16) throw TruncatedFile("checkpoint too small: " + path);
    const std::size_t payload = bytes.size() - 8;
    uint64_t stored;
    std::memcpy(&stored, bytes.data() + payload, 8);
    if (fnv1a64(bytes.data(), payload) != stored)
        throw IoError("checkpoint checksum mismatch: " + path);

    ByteReader r(bytes.data(), payload);
    char magic[8];
    r.raw(magic, 8);
    if (std::memcmp(magic, kMagic, 8) != 0) throw IoError("not a checkpoint file: " + path);
    Checkpoint ck;
    ck.version = r.u32();
    if (ck.version != 1) throw IoError("unsupported checkpoint version");
    ck.metadata_json = r.str();
    const uint32_t count = r.u32();
    ck.tensors.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        std::string name = r.str();
        const Dtype dt = Dtype(r.u8());
        const uint32_t ndim = r.u32();
        std::vector<int64_t> shape(ndim);
        for (uint32_t j = 0; j < ndim; ++j) shape[j] = r.i64();
        Tensor t(shape, dt);
        r.raw(t.raw(), t.raw_size());
        ck.tensors.emplace_back(std::move(name), std::move(t));
    }
    return ck;
}

}  // namespace ffkit
