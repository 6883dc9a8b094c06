#include "fgvi/core/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "fgvi/core/error.hpp"

namespace fgvi::core {

namespace {

constexpr char kMagic[8] = {'F', 'G', 'V', 'I', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw FormatError("checkpoint truncated");
    return v;
}

void put_str(std::ostream& os, const std::string& s) {
    put<std::uint64_t>(os, s.size());
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_str(std::istream& is) {
    auto n = get<std::uint64_t>(is);
    std::string s(n, '\0');
    is.read(s.data(), static_cast<std::streamsize>(n));
    if (!is) throw FormatError("checkpoint truncated");
    return s;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open for write: " + path);
    os.write(kMagic, sizeof(kMagic));
    put(os, kVersion);
    put_str(os, ckpt.config_json);
    put<std::uint64_t>(os, ckpt.tensors.size());
    for (const auto& [name, t] : ckpt.tensors) {
        put_str(os, name);
        put<std::uint32_t>(os, static_cast<std::uint32_t>(t.dim()));
        for (Dim d : t.shape()) put<std::int64_t>(os, d);
        os.write(reinterpret_cast<const char*>(t.data()),
                 static_cast<std::streamsize>(t.numel() * sizeof(double)));
    }
    if (!os) throw FormatError("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open: " + path);
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw FormatError("not a checkpoint file: " + path);
    auto version = get<std::uint32_t>(is);
    if (version != kVersion) throw FormatError("unsupported checkpoint version");
    Checkpoint ckpt;
    ckpt.config_json = get_str(is);
    auto count = get<std::uint64_t>(is);
    for (std::uint64_t i = 0; i < count; ++i) {
        std::string name = get_str(is);
        auto nd = get<std::uint32_t>(is);
        Shape shape(nd);
        for (auto& d : shape) d = get<std::int64_t>(is);
        Tensor t(shape);
        is.read(reinterpret_cast<char*>(t.data()),
                static_cast<std::streamsize>(t.numel() * sizeof(double)));
        if (!is) throw FormatError("checkpoint truncated in tensor " + name);
        ckpt.tensors[name] = std::move(t);
    }
    return ckpt;
}

}  // namespace fgvi::core
