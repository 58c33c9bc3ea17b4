#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace vsdf {

/// Binary container of named, typed arrays.
///
/// Layout (all integers little-endian):
///   "VSDF" | u32 version | u32 section count | sections...
///   section: u32 name length | name | u8 dtype | u32 rank | u64 dims[rank] | payload
/// Payload elements are little-endian, dense, in the order the writer
/// produced them. Sections keep insertion order, so write -> read -> write is
/// byte-identical. Readers look sections up by name and ignore the rest.
class Checkpoint {
public:
    static constexpr std::uint32_t kVersion = 1;

    enum class DType : std::uint8_t { F32 = 0, F64 = 1, I32 = 2, U8 = 3 };

    struct Section {
        std::string name;
        DType dtype;
        std::vector<std::uint64_t> shape;
        std::vector<std::uint8_t> payload;  // little-endian bytes

        std::uint64_t element_count() const;
    };

    void put_f32(const std::string& name, std::vector<std::uint64_t> shape, std::span<const float> values);
    void put_f64(const std::string& name, std::vector<std::uint64_t> shape, std::span<const double> values);
    void put_i32(const std::string& name, std::vector<std::uint64_t> shape, std::span<const std::int32_t> values);
    void put_text(const std::string& name, const std::string& text);

    bool has(const std::string& name) const;
    const Section& section(const std::string& name) const;
    const std::vector<Section>& sections() const { return sections_; }

    /// Throw InvalidArgument when the section is missing or has another dtype.
    std::vector<float> get_f32(const std::string& name, std::vector<std::uint64_t>* shape = nullptr) const;
    std::vector<double> get_f64(const std::string& name, std::vector<std::uint64_t>* shape = nullptr) const;
    std::vector<std::int32_t> get_i32(const std::string& name, std::vector<std::uint64_t>* shape = nullptr) const;
    std::string get_text(const std::string& name) const;

    void write(std::ostream& os) const;
    void write(const std::filesystem::path& path) const;
    /// Throws InvalidArgument on bad magic, unsupported version, truncation or
    /// a shape that does not match the payload size.
    static Checkpoint read(std::istream& is);
    static Checkpoint read(const std::filesystem::path& path);

private:
    void put(Section s);
    std::vector<Section> sections_;
};

}  // namespace vsdf
