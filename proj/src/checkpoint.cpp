#include "csanmt/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace csanmt {

namespace {

constexpr char kMagic[4] = {'C', 'S', 'N', 'T'};
constexpr uint32_t kVersion = 1;

void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_i64(std::ostream& os, int64_t v) {
    unsigned char b[8];
    uint64_t u = static_cast<uint64_t>(v);
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

void put_str(std::ostream& os, const std::string& s) {
    put_u32(os, static_cast<uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
    return v;
}

int64_t get_i64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return static_cast<int64_t>(v);
}

std::string get_str(std::istream& is) {
    uint32_t n = get_u32(is);
    std::string s(n, '\0');
    is.read(s.data(), static_cast<std::streamsize>(n));
    return s;
}

} // namespace

void Checkpoint::save(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw ConfigError("cannot open checkpoint for writing: " + path.string());
    os.write(kMagic, 4);
    put_u32(os, kVersion);
    put_u32(os, static_cast<uint32_t>(meta.size()));
    for (const auto& [k, v] : meta) {
        put_str(os, k);
        put_str(os, v);
    }
    put_u32(os, static_cast<uint32_t>(params.size()));
    for (size_t i = 0; i < params.size(); ++i) {
        put_str(os, params.names()[i]);
        const Tensor& t = params.tensor(i);
        put_u32(os, static_cast<uint32_t>(t.shape.size()));
        for (int64_t d : t.shape) put_i64(os, d);
        // Doubles round-trip bit-exactly; little-endian is assumed on every
        // platform this runs on.
        os.write(reinterpret_cast<const char*>(t.data.data()),
                 static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    }
    if (!os) throw ConfigError("checkpoint write failed: " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("cannot open checkpoint: " + path.string());
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw ParseError("not a checkpoint file: " + path.string());
    uint32_t version = get_u32(is);
    if (version != kVersion)
        throw ParseError("unsupported checkpoint version " + std::to_string(version));
    Checkpoint ck;
    uint32_t n_meta = get_u32(is);
    for (uint32_t i = 0; i < n_meta; ++i) {
        std::string k = get_str(is);
        ck.meta[k] = get_str(is);
    }
    uint32_t n_tensors = get_u32(is);
    for (uint32_t i = 0; i < n_tensors; ++i) {
        std::string name = get_str(is);
        uint32_t ndim = get_u32(is);
        std::vector<int64_t> shape(ndim);
        for (uint32_t d = 0; d < ndim; ++d) shape[d] = get_i64(is);
        Tensor t(shape);
        is.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(t.data.size() * sizeof(double)));
        ck.params.put(name, std::move(t));
    }
    if (!is) throw ParseError("truncated checkpoint: " + path.string());
    return ck;
}

const std::string& Checkpoint::require_meta(const std::string& key) const {
    auto it = meta.find(key);
    if (it == meta.end()) throw ParseError("checkpoint missing meta key: " + key);
    return it->second;
}

int Checkpoint::meta_int(const std::string& key) const {
    return std::stoi(require_meta(key));
}

} // namespace csanmt
