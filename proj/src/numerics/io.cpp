#include "avdit/numerics/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace avdit {

static_assert(std::endian::native == std::endian::little, "AVT1 IO assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'A', 'V', 'T', '1'};

template <class T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
    T v{};
    if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw Error("AVT1: truncated stream");
    return v;
}

}  // namespace

void write_avt(std::ostream& os, const Tensor& t) {
    os.write(kMagic, 4);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put<std::uint64_t>(os, d);
    os.write(reinterpret_cast<const char*>(t.ptr()), static_cast<std::streamsize>(t.numel() * sizeof(double)));
    if (!os) throw Error("AVT1: write failed");
}

Tensor read_avt(std::istream& is) {
    char magic[4];
    if (!is.read(magic, 4)) throw Error("AVT1: truncated stream");
    if (std::memcmp(magic, kMagic, 4) != 0) throw Error("AVT1: bad magic");
    const auto rank = get<std::uint32_t>(is);
    if (rank > 16) throw Error("AVT1: implausible rank " + std::to_string(rank));
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(get<std::uint64_t>(is));
    Tensor t(shape);
    if (!is.read(reinterpret_cast<char*>(t.ptr()), static_cast<std::streamsize>(t.numel() * sizeof(double)))) {
        throw Error("AVT1: truncated payload");
    }
    return t;
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) { save_tensors(path, {t}); }

Tensor load_tensor(const std::filesystem::path& path) {
    auto ts = load_tensors(path);
    if (ts.size() != 1) throw Error("AVT1: expected one tensor in " + path.string());
    return ts.front();
}

void save_tensors(const std::filesystem::path& path, const std::vector<Tensor>& ts) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot open " + path.string() + " for writing");
    for (const auto& t : ts) write_avt(os, t);
}

std::vector<Tensor> load_tensors(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open " + path.string());
    std::vector<Tensor> out;
    while (is.peek() != std::char_traits<char>::eof()) out.push_back(read_avt(is));
    return out;
}

}  // namespace avdit
