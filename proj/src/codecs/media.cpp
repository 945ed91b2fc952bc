#include "avdit/codecs/media.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <memory>

#include <png.h>

namespace avdit::codecs {

namespace {

template <class T>
void put(std::ostream& os, T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) os.put(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff));
}

template <class T>
T get(std::istream& is) {
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        const int c = is.get();
        if (c == EOF) throw Error("read_wav: truncated file");
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
    }
    return static_cast<T>(v);
}

void write_gray_or_rgb(const std::filesystem::path& path, std::size_t h, std::size_t w, int color_type,
                       const std::vector<unsigned char>& pixels) {
    std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
    if (!fp) throw Error("write_png: cannot open " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw Error("write_png: libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error("write_png: libpng error writing " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8, color_type, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const std::size_t stride = pixels.size() / h;
    for (std::size_t y = 0; y < h; ++y) png_write_row(png, const_cast<png_bytep>(pixels.data() + y * stride));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

unsigned char to_byte(double v) { return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

}  // namespace

void write_wav(const std::filesystem::path& path, const Waveform& wav) {
    if (wav.channels.empty()) throw Error("write_wav: no channels");
    const std::size_t n = wav.samples();
    for (const auto& ch : wav.channels)
        if (ch.size() != n) throw Error("write_wav: channel lengths differ");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("write_wav: cannot open " + path.string());
    const auto channels = static_cast<std::uint16_t>(wav.channels.size());
    const auto rate = static_cast<std::uint32_t>(std::lround(wav.sample_rate));
    const auto data_bytes = static_cast<std::uint32_t>(n * channels * 2);
    os.write("RIFF", 4);
    put<std::uint32_t>(os, 36 + data_bytes);
    os.write("WAVEfmt ", 8);
    put<std::uint32_t>(os, 16);
    put<std::uint16_t>(os, 1);
    put<std::uint16_t>(os, channels);
    put<std::uint32_t>(os, rate);
    put<std::uint32_t>(os, rate * channels * 2);
    put<std::uint16_t>(os, static_cast<std::uint16_t>(channels * 2));
    put<std::uint16_t>(os, 16);
    os.write("data", 4);
    put<std::uint32_t>(os, data_bytes);
    for (std::size_t i = 0; i < n; ++i) {
        for (const auto& ch : wav.channels) {
            const auto s = static_cast<std::int16_t>(std::lround(std::clamp(ch[i], -1.0, 1.0) * 32767.0));
            put<std::uint16_t>(os, static_cast<std::uint16_t>(s));
        }
    }
    if (!os) throw Error("write_wav: write failed for " + path.string());
}

Waveform read_wav(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("read_wav: cannot open " + path.string());
    char tag[4];
    is.read(tag, 4);
    if (std::string(tag, 4) != "RIFF") throw Error("read_wav: not a RIFF file");
    get<std::uint32_t>(is);
    is.read(tag, 4);
    if (std::string(tag, 4) != "WAVE") throw Error("read_wav: not a WAVE file");
    std::uint16_t channels = 0, bits = 0;
    std::uint32_t rate = 0;
    while (is.read(tag, 4)) {
        const auto size = get<std::uint32_t>(is);
        const std::string id(tag, 4);
        if (id == "fmt ") {
            if (get<std::uint16_t>(is) != 1) throw Error("read_wav: only PCM supported");
            channels = get<std::uint16_t>(is);
            rate = get<std::uint32_t>(is);
            get<std::uint32_t>(is);
            get<std::uint16_t>(is);
            bits = get<std::uint16_t>(is);
            is.ignore(size - 16);
        } else if (id == "data") {
            if (bits != 16 || channels == 0) throw Error("read_wav: only 16-bit PCM supported");
            const std::size_t n = size / (2u * channels);
            Waveform w;
            w.sample_rate = rate;
            w.channels.assign(channels, std::vector<double>(n));
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t c = 0; c < channels; ++c)
                    w.channels[c][i] = static_cast<std::int16_t>(get<std::uint16_t>(is)) / 32767.0;
            return w;
        } else {
            is.ignore(size);
        }
    }
    throw Error("read_wav: no data chunk");
}

void write_png(const std::filesystem::path& path, const Tensor& rgb) {
    if (rgb.rank() != 3 || rgb.dim(2) != 3) throw Error("write_png: expected [H, W, 3], got " + shape_str(rgb.shape()));
    std::vector<unsigned char> px(rgb.numel());
    for (std::size_t i = 0; i < px.size(); ++i) px[i] = to_byte(rgb[i]);
    write_gray_or_rgb(path, rgb.dim(0), rgb.dim(1), PNG_COLOR_TYPE_RGB, px);
}

void write_heatmap_png(const std::filesystem::path& path, const Tensor& map, std::size_t cell) {
    if (map.rank() != 2 || map.numel() == 0 || cell == 0) throw Error("write_heatmap_png: expected a non-empty 2D map");
    const std::size_t h = map.dim(0), w = map.dim(1);
    const auto [lo, hi] = std::minmax_element(map.data().begin(), map.data().end());
    const double span = *hi - *lo;
    std::vector<unsigned char> px(h * cell * w * cell);
    for (std::size_t y = 0; y < h * cell; ++y)
        for (std::size_t x = 0; x < w * cell; ++x) {
            const double v = map[(y / cell) * w + x / cell];
            px[y * w * cell + x] = to_byte(span > 0.0 ? (v - *lo) / span : 0.0);
        }
    write_gray_or_rgb(path, h * cell, w * cell, PNG_COLOR_TYPE_GRAY, px);
}

}  // namespace avdit::codecs
