#pragma once

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <limits>
#include <string>
#include <string_view>
#include <type_traits>

#include "r3d/error.h"

namespace r3d::io {

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);
std::string lower_extension(const std::filesystem::path& path);

/// Shortest representation that parses back to the same value.
void append_number(std::string& out, double v);
void append_number(std::string& out, float v);

/// Parses the whole token or returns false.
template <typename T>
bool parse_number(std::string_view token, T& value) {
    if (token.empty()) return false;
    const char* first = token.data();
    const char* last = token.data() + token.size();
    if constexpr (std::is_integral_v<T>) {
        if (*first == '+') ++first;
    }
    const auto [ptr, ec] = std::from_chars(first, last, value);
    return ec == std::errc() && ptr == last;
}

/// Whitespace-separated tokens with 1-based line tracking.
class TextCursor {
public:
    TextCursor(std::string_view text, std::size_t offset, std::uint64_t line, std::string name)
        : text_(text), pos_(offset), line_(line), name_(std::move(name)) {}

    /// Next token, or false at end of input.
    bool next(std::string_view& token);
    /// Next token; fails with `what` at end of input.
    std::string_view expect(const char* what);
    /// True if only whitespace remains.
    bool at_end();

    std::uint64_t line() const { return line_; }
    std::size_t remaining() const { return text_.size() - pos_; }
    [[noreturn]] void fail(const std::string& what) const {
        throw ParseError(name_, ParseError::Unit::kLine, line_, what);
    }

    template <typename T>
    T number(const char* what) {
        const std::string_view token = expect(what);
        T value;
        if (!parse_number(token, value)) fail(std::string("invalid ") + what + " '" + std::string(token.substr(0, 32)) + "'");
        return value;
    }

private:
    void skip_space();
    std::string_view text_;
    std::size_t pos_;
    std::uint64_t line_;
    std::string name_;
};

/// Little-endian binary reader with byte-offset errors.
class ByteCursor {
public:
    ByteCursor(std::string_view bytes, std::size_t offset, std::string name)
        : bytes_(bytes), pos_(offset), name_(std::move(name)) {}

    std::size_t offset() const { return pos_; }
    std::size_t remaining() const { return bytes_.size() - pos_; }
    [[noreturn]] void fail(const std::string& what) const { fail_at(pos_, what); }
    [[noreturn]] void fail_at(std::size_t offset, const std::string& what) const {
        throw ParseError(name_, ParseError::Unit::kByte, offset, what);
    }

    template <typename T>
    T read_le() {
        if (remaining() < sizeof(T)) fail("unexpected end of data");
        T v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
        if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) v = byteswap(v);
        pos_ += sizeof(T);
        return v;
    }

private:
    template <typename T>
    static T byteswap(T v) {
        unsigned char b[sizeof(T)];
        std::memcpy(b, &v, sizeof(T));
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
        std::memcpy(&v, b, sizeof(T));
        return v;
    }
    std::string_view bytes_;
    std::size_t pos_;
    std::string name_;
};

template <typename T>
void append_le(std::string& out, T v) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big)
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    out.append(reinterpret_cast<const char*>(b), sizeof(T));
}

}  // namespace r3d::io
