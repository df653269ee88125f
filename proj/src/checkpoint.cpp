#include "wcdm/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace wcdm::checkpoint {

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    require(bool(is), "checkpoint: truncated file");
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
           (std::uint32_t(b[3]) << 24);
}

void put_f32(std::ostream& os, float v) {
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    put_u32(os, u);
}

float get_f32(std::istream& is) {
    std::uint32_t u = get_u32(is);
    float v;
    std::memcpy(&v, &u, 4);
    return v;
}

}  // namespace

void save(const std::string& path, const std::vector<Entry>& entries) {
    std::ofstream os(path, std::ios::binary);
    require(bool(os), "checkpoint: cannot open for writing: " + path);
    put_u32(os, std::uint32_t(entries.size()));
    for (const Entry& e : entries) {
        put_u32(os, std::uint32_t(e.name.size()));
        os.write(e.name.data(), std::streamsize(e.name.size()));
        put_u32(os, std::uint32_t(e.tensor.shape.b));
        put_u32(os, std::uint32_t(e.tensor.shape.c));
        put_u32(os, std::uint32_t(e.tensor.shape.h));
        put_u32(os, std::uint32_t(e.tensor.shape.w));
        for (std::int64_t i = 0; i < e.tensor.numel(); ++i) put_f32(os, e.tensor.data[i]);
    }
    require(bool(os), "checkpoint: write failed: " + path);
}

std::vector<Entry> load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    require(bool(is), "checkpoint: cannot open: " + path);
    const std::uint32_t count = get_u32(is);
    std::vector<Entry> entries;
    entries.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        Entry e;
        const std::uint32_t nlen = get_u32(is);
        e.name.resize(nlen);
        is.read(e.name.data(), std::streamsize(nlen));
        require(bool(is), "checkpoint: truncated name");
        Shape s;
        s.b = int(get_u32(is));
        s.c = int(get_u32(is));
        s.h = int(get_u32(is));
        s.w = int(get_u32(is));
        e.tensor = Tensor(s);
        for (std::int64_t j = 0; j < e.tensor.numel(); ++j) e.tensor.data[j] = get_f32(is);
        entries.push_back(std::move(e));
    }
    return entries;
}

const Tensor* find(const std::vector<Entry>& entries, const std::string& name) {
    for (const Entry& e : entries)
        if (e.name == name) return &e.tensor;
    return nullptr;
}

}  // namespace wcdm::checkpoint
