#include "wcdm/image_io.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>

namespace wcdm::data {

namespace {

constexpr unsigned char kSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

void put_u32be(std::string& out, std::uint32_t v) {
    out.push_back(char(v >> 24));
    out.push_back(char(v >> 16));
    out.push_back(char(v >> 8));
    out.push_back(char(v));
}

std::uint32_t get_u32be(const unsigned char* p) {
    return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) | (std::uint32_t(p[2]) << 8) |
           std::uint32_t(p[3]);
}

void append_chunk(std::string& out, const char type[4], const std::string& payload) {
    put_u32be(out, std::uint32_t(payload.size()));
    std::string body(type, 4);
    body += payload;
    out += body;
    const auto crc =
        crc32(0, reinterpret_cast<const Bytef*>(body.data()), uInt(body.size()));
    put_u32be(out, std::uint32_t(crc));
}

int paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

}  // namespace

void save_image(const Tensor& image, const std::string& path) {
    require(image.shape.b == 1 && image.shape.c == 3 && image.shape.h > 0 && image.shape.w > 0,
            "save_image: expected (1,3,H,W) tensor, got " + image.shape.str());
    const int h = image.shape.h, w = image.shape.w;

    std::string raw;
    raw.reserve(std::size_t(h) * (1 + std::size_t(w) * 3));
    for (int y = 0; y < h; ++y) {
        raw.push_back('\0');  // filter type None
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) {
                const float v = std::min(1.0f, std::max(0.0f, image.at(0, c, y, x)));
                raw.push_back(char(static_cast<unsigned char>(std::floor(v * 255.0f + 0.5f))));
            }
    }

    uLongf bound = compressBound(uLong(raw.size()));
    std::string compressed(bound, '\0');
    const int rc = compress2(reinterpret_cast<Bytef*>(compressed.data()), &bound,
                             reinterpret_cast<const Bytef*>(raw.data()), uLong(raw.size()), 6);
    require(rc == Z_OK, "save_image: deflate failed");
    compressed.resize(bound);

    std::string out(reinterpret_cast<const char*>(kSignature), 8);
    std::string ihdr;
    put_u32be(ihdr, std::uint32_t(w));
    put_u32be(ihdr, std::uint32_t(h));
    ihdr.push_back(8);   // bit depth
    ihdr.push_back(2);   // color type RGB
    ihdr.push_back(0);   // compression
    ihdr.push_back(0);   // filter
    ihdr.push_back(0);   // interlace
    append_chunk(out, "IHDR", ihdr);
    append_chunk(out, "IDAT", compressed);
    append_chunk(out, "IEND", "");

    std::ofstream os(path, std::ios::binary);
    require(bool(os), "save_image: cannot open for writing: " + path);
    os.write(out.data(), std::streamsize(out.size()));
    require(bool(os), "save_image: write failed: " + path);
}

Tensor load_image(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    require(bool(is), "load_image: cannot open: " + path);
    std::string file((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    require(file.size() > 8 && std::memcmp(file.data(), kSignature, 8) == 0, "load_image: not a PNG: " + path);

    int w = 0, h = 0, color_type = -1;
    std::string idat;
    std::size_t pos = 8;
    while (pos + 8 <= file.size()) {
        const std::uint32_t len = get_u32be(reinterpret_cast<const unsigned char*>(file.data() + pos));
        require(pos + 12 + len <= file.size(), "load_image: truncated chunk");
        const std::string type = file.substr(pos + 4, 4);
        const char* payload = file.data() + pos + 8;
        if (type == "IHDR") {
            require(len == 13, "load_image: bad IHDR");
            w = int(get_u32be(reinterpret_cast<const unsigned char*>(payload)));
            h = int(get_u32be(reinterpret_cast<const unsigned char*>(payload + 4)));
            const int depth = payload[8];
            color_type = payload[9];
            require(depth == 8, "load_image: only 8-bit PNGs supported");
            require(color_type == 0 || color_type == 2 || color_type == 6,
                    "load_image: unsupported color type " + std::to_string(color_type));
            require(payload[12] == 0, "load_image: interlaced PNGs not supported");
        } else if (type == "IDAT") {
            idat.append(payload, len);
        } else if (type == "IEND") {
            break;
        }
        pos += 12 + len;
    }
    require(w > 0 && h > 0 && !idat.empty(), "load_image: missing image data");

    const int nch = color_type == 0 ? 1 : (color_type == 2 ? 3 : 4);
    const std::size_t stride = std::size_t(w) * std::size_t(nch);
    std::string raw(std::size_t(h) * (1 + stride), '\0');
    uLongf raw_len = uLongf(raw.size());
    const int rc = uncompress(reinterpret_cast<Bytef*>(raw.data()), &raw_len,
                              reinterpret_cast<const Bytef*>(idat.data()), uLong(idat.size()));
    require(rc == Z_OK && raw_len == raw.size(), "load_image: inflate failed");

    // undo per-scanline filters in place
    std::vector<unsigned char> prev(stride, 0), cur(stride, 0);
    Tensor img({1, 3, h, w});
    for (int y = 0; y < h; ++y) {
        const unsigned char* line = reinterpret_cast<const unsigned char*>(raw.data()) + std::size_t(y) * (1 + stride);
        const int filter = line[0];
        require(filter >= 0 && filter <= 4, "load_image: bad filter type");
        for (std::size_t i = 0; i < stride; ++i) {
            const int x = int(line[1 + i]);
            const int a = i >= std::size_t(nch) ? cur[i - std::size_t(nch)] : 0;
            const int b = prev[i];
            const int c = i >= std::size_t(nch) ? prev[i - std::size_t(nch)] : 0;
            int v = x;
            switch (filter) {
                case 0: v = x; break;
                case 1: v = x + a; break;
                case 2: v = x + b; break;
                case 3: v = x + (a + b) / 2; break;
                case 4: v = x + paeth(a, b, c); break;
            }
            cur[i] = static_cast<unsigned char>(v & 0xff);
        }
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) {
                const unsigned char byte = cur[std::size_t(x) * std::size_t(nch) + std::size_t(nch == 1 ? 0 : c)];
                img.at(0, c, y, x) = float(byte) / 255.0f;
            }
        std::swap(prev, cur);
    }
    return img;
}

}  // namespace wcdm::data
