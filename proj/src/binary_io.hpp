#pragma once

#include "hscnn/common.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

namespace hscnn::detail {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
T to_little(T v)
{
    if constexpr (std::endian::native == std::endian::big) {
        auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
        std::reverse(bytes.begin(), bytes.end());
        return std::bit_cast<T>(bytes);
    }
    return v;
}

class ByteWriter {
public:
    template <typename T>
    void put(T v)
    {
        v = to_little(v);
        const auto* p = reinterpret_cast<const char*>(&v);
        bytes_.insert(bytes_.end(), p, p + sizeof(T));
    }
    void put_f32(float v) { put(std::bit_cast<std::uint32_t>(v)); }
    void put_raw(const std::string& s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
    void put_string(const std::string& s)
    {
        put(static_cast<std::uint32_t>(s.size()));
        put_raw(s);
    }

    const std::vector<char>& bytes() const { return bytes_; }
    std::vector<char>& bytes() { return bytes_; }

private:
    std::vector<char> bytes_;
};

class ByteReader {
public:
    ByteReader(const char* data, std::size_t size, std::string what) : data_(data), size_(size), what_(std::move(what))
    {
    }

    template <typename T>
    T get()
    {
        need(sizeof(T));
        T v;
        std::memcpy(&v, data_ + pos_, sizeof(T));
        pos_ += sizeof(T);
        return to_little(v);
    }
    float get_f32() { return std::bit_cast<float>(get<std::uint32_t>()); }
    std::string get_raw(std::size_t n)
    {
        need(n);
        std::string s(data_ + pos_, n);
        pos_ += n;
        return s;
    }
    std::string get_string() { return get_raw(get<std::uint32_t>()); }

    std::size_t position() const { return pos_; }
    std::size_t remaining() const { return size_ - pos_; }

private:
    void need(std::size_t n) const
    {
        if (size_ - pos_ < n)
            throw DataError(what_ + ": truncated file");
    }

    const char* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
    std::string what_;
};

std::uint32_t crc32(const char* data, std::size_t size);

std::vector<char> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<char>& bytes);
void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

} // namespace hscnn::detail
