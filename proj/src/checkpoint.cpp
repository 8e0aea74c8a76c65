#include "sparsevid/checkpoint.hpp"

#include <openssl/evp.h>

#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include "sparsevid/errors.hpp"

namespace sparsevid {
namespace {

constexpr char kMagic[8] = {'S', 'V', 'C', 'K', 'P', 'T', '1', '\n'};

void write_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<char*>(b), 4);
}

uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw FormatError("checkpoint: truncated file");
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void write_str(std::ostream& os, const std::string& s) {
    write_u32(os, static_cast<uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_str(std::istream& is) {
    const uint32_t n = read_u32(is);
    if (n > (1u << 20)) throw FormatError("checkpoint: implausible string length");
    std::string s(n, '\0');
    if (!is.read(s.data(), n)) throw FormatError("checkpoint: truncated file");
    return s;
}

struct Manifest {
    std::string kind;
    std::vector<std::pair<std::string, std::string>> meta;
    std::vector<std::pair<std::string, std::vector<int>>> shapes;
};

void write_checkpoint(const std::string& path, const std::string& kind,
                      const std::vector<std::pair<std::string, std::string>>& meta,
                      const ParamStore& params) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("checkpoint: cannot open '" + path + "' for writing");
    os.write(kMagic, 8);
    write_str(os, kind);
    write_u32(os, static_cast<uint32_t>(meta.size()));
    for (const auto& [k, v] : meta) {
        write_str(os, k);
        write_str(os, v);
    }
    write_u32(os, static_cast<uint32_t>(params.all().size()));
    for (const auto& [name, t] : params.all()) {
        write_str(os, name);
        write_u32(os, static_cast<uint32_t>(t.shape().size()));
        for (int d : t.shape()) write_u32(os, static_cast<uint32_t>(d));
    }
    for (const auto& [name, t] : params.all())
        os.write(reinterpret_cast<const char*>(t.data()),
                 static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!os) throw IoError("checkpoint: write failed for '" + path + "'");
}

Manifest read_manifest(std::istream& is) {
    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
        throw FormatError("checkpoint: bad magic");
    Manifest m;
    m.kind = read_str(is);
    const uint32_t nmeta = read_u32(is);
    for (uint32_t i = 0; i < nmeta; ++i) {
        std::string k = read_str(is);
        std::string v = read_str(is);
        m.meta.emplace_back(std::move(k), std::move(v));
    }
    const uint32_t nparams = read_u32(is);
    for (uint32_t i = 0; i < nparams; ++i) {
        std::string name = read_str(is);
        const uint32_t rank = read_u32(is);
        if (rank > 8) throw FormatError("checkpoint: implausible tensor rank");
        std::vector<int> shape(rank);
        for (uint32_t d = 0; d < rank; ++d) shape[d] = static_cast<int>(read_u32(is));
        m.shapes.emplace_back(std::move(name), std::move(shape));
    }
    return m;
}

void read_params_into(std::istream& is, const Manifest& m, ParamStore& params) {
    if (m.shapes.size() != params.all().size())
        throw FormatError("checkpoint: parameter count does not match architecture");
    for (size_t i = 0; i < m.shapes.size(); ++i) {
        auto& [name, t] = params.all()[i];
        if (m.shapes[i].first != name)
            throw FormatError("checkpoint: parameter name mismatch at '" + name + "'");
        if (m.shapes[i].second != t.shape())
            throw FormatError("checkpoint: shape mismatch for '" + name + "'");
    }
    for (auto& [name, t] : params.all()) {
        if (!is.read(reinterpret_cast<char*>(t.data()),
                     static_cast<std::streamsize>(t.size() * sizeof(double))))
            throw FormatError("checkpoint: truncated parameter data");
    }
    // Reject trailing garbage.
    char extra;
    if (is.read(&extra, 1)) throw FormatError("checkpoint: trailing bytes after parameters");
}

std::string meta_value(const Manifest& m, const std::string& key) {
    for (const auto& [k, v] : m.meta)
        if (k == key) return v;
    throw FormatError("checkpoint: missing meta key '" + key + "'");
}

std::vector<std::pair<std::string, std::string>> arch_meta(const Manifest& m) {
    std::vector<std::pair<std::string, std::string>> kv;
    for (const auto& [k, v] : m.meta)
        if (k.rfind("arch.", 0) == 0) kv.emplace_back(k.substr(5), v);
    return kv;
}

}  // namespace

void save_backbone(const std::string& path, const Backbone& net) {
    std::vector<std::pair<std::string, std::string>> meta;
    for (const auto& [k, v] : net.config().to_kv()) meta.emplace_back("arch." + k, v);
    write_checkpoint(path, "backbone", meta, net.params());
}

std::unique_ptr<Backbone> load_backbone(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("checkpoint: cannot open '" + path + "'");
    Manifest m = read_manifest(is);
    if (m.kind != "backbone") throw FormatError("checkpoint: not a backbone checkpoint");
    auto net = std::make_unique<Backbone>(ArchConfig::from_kv(arch_meta(m)), /*seed=*/0);
    read_params_into(is, m, net->params());
    return net;
}

void save_encoder(const std::string& path, const SparseEncoder& net) {
    std::vector<std::pair<std::string, std::string>> meta;
    for (const auto& [k, v] : net.config().to_kv()) meta.emplace_back("arch." + k, v);
    meta.emplace_back("variant", variant_name(net.variant()));
    meta.emplace_back("modality", modality_name(net.modality()));
    write_checkpoint(path, "encoder", meta, net.params());
}

std::unique_ptr<SparseEncoder> load_encoder(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("checkpoint: cannot open '" + path + "'");
    Manifest m = read_manifest(is);
    if (m.kind != "encoder") throw FormatError("checkpoint: not an encoder checkpoint");
    auto net = std::make_unique<SparseEncoder>(ArchConfig::from_kv(arch_meta(m)),
                                               variant_from_name(meta_value(m, "variant")),
                                               modality_from_name(meta_value(m, "modality")),
                                               /*seed=*/0);
    read_params_into(is, m, net->params());
    return net;
}

std::string sha256_hex(const void* data, size_t len) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int dlen = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    EVP_DigestUpdate(ctx, data, len);
    EVP_DigestFinal_ex(ctx, digest, &dlen);
    EVP_MD_CTX_free(ctx);
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(2 * dlen);
    for (unsigned int i = 0; i < dlen; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0xf];
    }
    return out;
}

std::string params_digest(const ParamStore& params) {
    std::ostringstream buf(std::ios::binary);
    for (const auto& [name, t] : params.all()) {
        buf.write(name.data(), static_cast<std::streamsize>(name.size()));
        buf.put('\0');
        for (int d : t.shape()) write_u32(buf, static_cast<uint32_t>(d));
        buf.write(reinterpret_cast<const char*>(t.data()),
                  static_cast<std::streamsize>(t.size() * sizeof(double)));
    }
    const std::string s = buf.str();
    return sha256_hex(s.data(), s.size());
}

std::string file_digest(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("file_digest: cannot open '" + path + "'");
    std::ostringstream ss;
    ss << is.rdbuf();
    const std::string s = ss.str();
    return sha256_hex(s.data(), s.size());
}

}  // namespace sparsevid
