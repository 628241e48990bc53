#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <zlib.h>

#include "gradroute/core/error.hpp"

namespace gradroute {

// 28x28 images normalized to mean/std 0.5: pixel -> ((p/255) - 0.5)/0.5.
struct MnistDataset {
    size_t n = 0;
    size_t rows = 28, cols = 28;
    std::vector<float> images; // n * rows * cols
    std::vector<int> labels;   // n, digits 0-9
};

namespace detail {

inline std::vector<uint8_t> read_file_maybe_gzip(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw format_error("cannot open " + path);
    std::vector<uint8_t> raw((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
    if (raw.size() < 2 || raw[0] != 0x1f || raw[1] != 0x8b) return raw;

    // gzip-compressed: inflate with a growing output buffer
    std::vector<uint8_t> out;
    out.resize(std::max<size_t>(raw.size() * 4, 1 << 20));
    z_stream zs{};
    if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK)
        throw format_error("zlib init failed for " + path);
    zs.next_in = raw.data();
    zs.avail_in = static_cast<uInt>(raw.size());
    size_t written = 0;
    int rc = Z_OK;
    do {
        if (written == out.size()) out.resize(out.size() * 2);
        zs.next_out = out.data() + written;
        zs.avail_out = static_cast<uInt>(out.size() - written);
        rc = inflate(&zs, Z_NO_FLUSH);
        if (rc != Z_OK && rc != Z_STREAM_END) {
            inflateEnd(&zs);
            throw format_error("gzip decompression failed for " + path);
        }
        written = out.size() - zs.avail_out;
    } while (rc != Z_STREAM_END);
    inflateEnd(&zs);
    out.resize(written);
    return out;
}

inline uint32_t be32(const std::vector<uint8_t>& b, size_t off, const std::string& path) {
    if (off + 4 > b.size()) throw format_error("truncated IDX file " + path);
    return (uint32_t(b[off]) << 24) | (uint32_t(b[off + 1]) << 16) | (uint32_t(b[off + 2]) << 8) |
           uint32_t(b[off + 3]);
}

} // namespace detail

// IDX format (big-endian), optionally gzip-compressed. Magic 2051 for images,
// 2049 for labels.
inline MnistDataset load_mnist(const std::string& image_path, const std::string& label_path) {
    auto img = detail::read_file_maybe_gzip(image_path);
    if (detail::be32(img, 0, image_path) != 2051)
        throw format_error("bad IDX image magic in " + image_path);
    size_t n = detail::be32(img, 4, image_path);
    size_t rows = detail::be32(img, 8, image_path);
    size_t cols = detail::be32(img, 12, image_path);
    if (img.size() != 16 + n * rows * cols)
        throw format_error("IDX image payload size mismatch in " + image_path);

    auto lab = detail::read_file_maybe_gzip(label_path);
    if (detail::be32(lab, 0, label_path) != 2049)
        throw format_error("bad IDX label magic in " + label_path);
    size_t nl = detail::be32(lab, 4, label_path);
    if (nl != n)
        throw format_error("IDX image/label count mismatch: " + std::to_string(n) + " vs " +
                           std::to_string(nl));
    if (lab.size() != 8 + n) throw format_error("IDX label payload size mismatch in " + label_path);

    MnistDataset ds;
    ds.n = n;
    ds.rows = rows;
    ds.cols = cols;
    ds.images.resize(n * rows * cols);
    for (size_t i = 0; i < ds.images.size(); ++i)
        ds.images[i] = (float(img[16 + i]) / 255.0f - 0.5f) / 0.5f;
    ds.labels.assign(lab.begin() + 8, lab.end());
    return ds;
}

} // namespace gradroute
