#include "vsdf/io/checkpoint.hpp"

#include "vsdf/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace vsdf {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'V', 'S', 'D', 'F'};
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 36;

std::size_t dtype_size(Checkpoint::DType t) {
    switch (t) {
        case Checkpoint::DType::F32: return 4;
        case Checkpoint::DType::F64: return 8;
        case Checkpoint::DType::I32: return 4;
        case Checkpoint::DType::U8: return 1;
    }
    throw InvalidArgument("checkpoint: unknown dtype");
}

template <typename T>
std::vector<std::uint8_t> to_bytes(std::span<const T> values) {
    std::vector<std::uint8_t> out(values.size_bytes());
    if (!values.empty()) std::memcpy(out.data(), values.data(), out.size());
    return out;
}

template <typename T>
void write_pod(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T read_pod(std::istream& is, const char* what) {
    T v{};
    if (!is.read(reinterpret_cast<char*>(&v), sizeof v))
        throw InvalidArgument(fmt::format("checkpoint: truncated while reading {}", what));
    return v;
}

}  // namespace

std::uint64_t Checkpoint::Section::element_count() const {
    std::uint64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

void Checkpoint::put(Section s) {
    if (s.name.empty()) throw InvalidArgument("checkpoint: empty section name");
    if (has(s.name)) throw InvalidArgument(fmt::format("checkpoint: duplicate section '{}'", s.name));
    if (s.element_count() * dtype_size(s.dtype) != s.payload.size())
        throw InvalidArgument(fmt::format("checkpoint: section '{}' shape does not match its {} payload bytes",
                                          s.name, s.payload.size()));
    sections_.push_back(std::move(s));
}

void Checkpoint::put_f32(const std::string& name, std::vector<std::uint64_t> shape, std::span<const float> values) {
    put({name, DType::F32, std::move(shape), to_bytes(values)});
}
void Checkpoint::put_f64(const std::string& name, std::vector<std::uint64_t> shape, std::span<const double> values) {
    put({name, DType::F64, std::move(shape), to_bytes(values)});
}
void Checkpoint::put_i32(const std::string& name, std::vector<std::uint64_t> shape,
                         std::span<const std::int32_t> values) {
    put({name, DType::I32, std::move(shape), to_bytes(values)});
}
void Checkpoint::put_text(const std::string& name, const std::string& text) {
    put({name, DType::U8, {text.size()}, std::vector<std::uint8_t>(text.begin(), text.end())});
}

bool Checkpoint::has(const std::string& name) const {
    return std::any_of(sections_.begin(), sections_.end(), [&](const Section& s) { return s.name == name; });
}

const Checkpoint::Section& Checkpoint::section(const std::string& name) const {
    for (const auto& s : sections_)
        if (s.name == name) return s;
    throw InvalidArgument(fmt::format("checkpoint: no section '{}'", name));
}

namespace {

template <typename T>
std::vector<T> typed(const Checkpoint::Section& s, Checkpoint::DType want, std::vector<std::uint64_t>* shape) {
    if (s.dtype != want) throw InvalidArgument(fmt::format("checkpoint: section '{}' has another dtype", s.name));
    std::vector<T> out(s.payload.size() / sizeof(T));
    if (!out.empty()) std::memcpy(out.data(), s.payload.data(), s.payload.size());
    if (shape) *shape = s.shape;
    return out;
}

}  // namespace

std::vector<float> Checkpoint::get_f32(const std::string& name, std::vector<std::uint64_t>* shape) const {
    return typed<float>(section(name), DType::F32, shape);
}
std::vector<double> Checkpoint::get_f64(const std::string& name, std::vector<std::uint64_t>* shape) const {
    return typed<double>(section(name), DType::F64, shape);
}
std::vector<std::int32_t> Checkpoint::get_i32(const std::string& name, std::vector<std::uint64_t>* shape) const {
    return typed<std::int32_t>(section(name), DType::I32, shape);
}
std::string Checkpoint::get_text(const std::string& name) const {
    const auto& s = section(name);
    if (s.dtype != DType::U8) throw InvalidArgument(fmt::format("checkpoint: section '{}' is not text", name));
    return {s.payload.begin(), s.payload.end()};
}

void Checkpoint::write(std::ostream& os) const {
    os.write(kMagic, 4);
    write_pod<std::uint32_t>(os, kVersion);
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(sections_.size()));
    for (const auto& s : sections_) {
        write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(s.name.size()));
        os.write(s.name.data(), static_cast<std::streamsize>(s.name.size()));
        write_pod<std::uint8_t>(os, static_cast<std::uint8_t>(s.dtype));
        write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(s.shape.size()));
        for (auto d : s.shape) write_pod<std::uint64_t>(os, d);
        os.write(reinterpret_cast<const char*>(s.payload.data()), static_cast<std::streamsize>(s.payload.size()));
    }
    if (!os) throw std::runtime_error("checkpoint: write failed");
}

void Checkpoint::write(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("checkpoint: cannot open " + path.string() + " for writing");
    write(os);
}

Checkpoint Checkpoint::read(std::istream& is) {
    char magic[4];
    if (!is.read(magic, 4) || !std::equal(magic, magic + 4, kMagic))
        throw InvalidArgument("checkpoint: bad magic, not a VSDF container");
    const auto version = read_pod<std::uint32_t>(is, "version");
    if (version == 0 || version > kVersion)
        throw InvalidArgument(fmt::format("checkpoint: unsupported format version {}", version));
    const auto count = read_pod<std::uint32_t>(is, "section count");
    Checkpoint ck;
    for (std::uint32_t i = 0; i < count; ++i) {
        Section s;
        const auto len = read_pod<std::uint32_t>(is, "name length");
        if (len > 4096) throw InvalidArgument("checkpoint: section name too long");
        s.name.resize(len);
        if (!is.read(s.name.data(), len)) throw InvalidArgument("checkpoint: truncated section name");
        const auto dtype = read_pod<std::uint8_t>(is, "dtype");
        if (dtype > static_cast<std::uint8_t>(DType::U8))
            throw InvalidArgument(fmt::format("checkpoint: section '{}' has unknown dtype {}", s.name, dtype));
        s.dtype = static_cast<DType>(dtype);
        const auto rank = read_pod<std::uint32_t>(is, "rank");
        if (rank > 8) throw InvalidArgument(fmt::format("checkpoint: section '{}' rank {} too large", s.name, rank));
        std::uint64_t n = 1;
        for (std::uint32_t r = 0; r < rank; ++r) {
            const auto d = read_pod<std::uint64_t>(is, "shape");
            if (d != 0 && n > kMaxElements / d)
                throw InvalidArgument(fmt::format("checkpoint: section '{}' is too large", s.name));
            n *= d;
            s.shape.push_back(d);
        }
        s.payload.resize(n * dtype_size(s.dtype));
        if (!is.read(reinterpret_cast<char*>(s.payload.data()), static_cast<std::streamsize>(s.payload.size())))
            throw InvalidArgument(fmt::format("checkpoint: section '{}' payload shorter than its shape", s.name));
        ck.put(std::move(s));
    }
    return ck;
}

Checkpoint Checkpoint::read(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw InvalidArgument("checkpoint: cannot open " + path.string());
    return read(is);
}

}  // namespace vsdf
