#pragma once

// Little-endian byte writer/reader shared by the model file formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "instrec/error.hpp"

namespace instrec {

using Bytes = std::vector<std::uint8_t>;

class ByteWriter {
public:
    void u8(std::uint8_t v) { out_.push_back(v); }
    void u32(std::uint32_t v) { put_le(v); }
    void u64(std::uint64_t v) { put_le(v); }
    void f64(double v) { put_le(std::bit_cast<std::uint64_t>(v)); }

    void str(std::string_view s) {
        u32(static_cast<std::uint32_t>(s.size()));
        out_.insert(out_.end(), s.begin(), s.end());
    }

    void magic(std::string_view m) { out_.insert(out_.end(), m.begin(), m.end()); }

    void blob(std::span<const std::uint8_t> b) {
        u64(b.size());
        out_.insert(out_.end(), b.begin(), b.end());
    }

    const Bytes& bytes() const& { return out_; }
    Bytes bytes() && { return std::move(out_); }

private:
    template <class T>
    void put_le(T v) {
        for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }

    Bytes out_;
};

class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

    std::uint8_t u8() { return get_le<std::uint8_t>(); }
    std::uint32_t u32() { return get_le<std::uint32_t>(); }
    std::uint64_t u64() { return get_le<std::uint64_t>(); }
    double f64() { return std::bit_cast<double>(get_le<std::uint64_t>()); }

    std::string str() {
        const std::uint32_t n = u32();
        need(n);
        std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
        pos_ += n;
        return s;
    }

    void expect_magic(std::string_view m) {
        need(m.size());
        if (std::memcmp(data_.data() + pos_, m.data(), m.size()) != 0)
            throw FormatError("bad magic at offset " + std::to_string(pos_) + ", expected '" +
                              std::string(m) + "'");
        pos_ += m.size();
    }

    std::span<const std::uint8_t> blob() {
        const std::uint64_t n = u64();
        need(n);
        auto s = data_.subspan(pos_, n);
        pos_ += n;
        return s;
    }

    std::size_t offset() const { return pos_; }
    bool at_end() const { return pos_ == data_.size(); }

    void expect_end() const {
        if (!at_end())
            throw FormatError("trailing bytes at offset " + std::to_string(pos_));
    }

private:
    void need(std::uint64_t n) const {
        if (n > data_.size() - pos_)
            throw FormatError("unexpected end of data at offset " + std::to_string(pos_));
    }

    template <class T>
    T get_le() {
        need(sizeof(T));
        T v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(data_[pos_ + i]) << (8 * i));
        pos_ += sizeof(T);
        return v;
    }

    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
};

inline Bytes read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for '" + path + "'");
}

}  // namespace instrec
