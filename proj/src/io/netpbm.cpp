#include <algorithm>
#include <cstdint>
#include <string>

#include "formats.h"
#include "io_common.h"

namespace r3d::io {
namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\v' || c == '\f'; }

// Header scanner: tokens separated by whitespace, '#' comments to end of line.
class HeaderScanner {
public:
    HeaderScanner(std::string_view bytes, const std::string& name) : bytes_(bytes), name_(name) {}

    std::uint64_t number(const char* what) {
        while (pos_ < bytes_.size()) {
            if (bytes_[pos_] == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
            } else if (is_space(bytes_[pos_])) {
                if (bytes_[pos_] == '\n') ++line_;
                ++pos_;
            } else {
                break;
            }
        }
        const std::size_t start = pos_;
        while (pos_ < bytes_.size() && bytes_[pos_] >= '0' && bytes_[pos_] <= '9') ++pos_;
        std::uint64_t v = 0;
        if (pos_ == start || pos_ - start > 12 || !parse_number(bytes_.substr(start, pos_ - start), v))
            fail(std::string("expected ") + what);
        return v;
    }

    // Exactly one whitespace byte separates maxval from the raster.
    std::size_t raster_offset() {
        if (pos_ >= bytes_.size() || !is_space(bytes_[pos_])) fail("expected whitespace after maxval");
        return pos_ + 1;
    }

    [[noreturn]] void fail(const std::string& what) const {
        throw ParseError(name_, ParseError::Unit::kLine, line_, what);
    }

private:
    std::size_t pos_ = 2;
    std::string_view bytes_;
    std::string name_;
    std::uint64_t line_ = 1;
};

}  // namespace

Image parse_netpbm(std::string_view bytes, const std::string& name, int expected_channels) {
    if (bytes.size() < 2 || bytes[0] != 'P') throw ParseError(name, ParseError::Unit::kLine, 1, "bad magic, expected P5 or P6");
    int channels = 0;
    if (bytes[1] == '5') {
        channels = 1;
    } else if (bytes[1] == '6') {
        channels = 3;
    } else if (bytes[1] >= '1' && bytes[1] <= '4') {
        throw UnsupportedFeature(name, ParseError::Unit::kLine, 1, "only binary Netpbm (P5, P6) is supported");
    } else {
        throw ParseError(name, ParseError::Unit::kLine, 1, "bad magic, expected P5 or P6");
    }
    if (expected_channels != 0 && channels != expected_channels)
        throw ParseError(name, ParseError::Unit::kLine, 1,
                         expected_channels == 1 ? "expected a P5 graymap" : "expected a P6 pixmap");
    if (bytes.size() > 2 && !is_space(bytes[2]) && bytes[2] != '#')
        throw ParseError(name, ParseError::Unit::kLine, 1, "bad magic, expected P5 or P6");

    HeaderScanner scan(bytes, name);
    const std::uint64_t width = scan.number("width");
    const std::uint64_t height = scan.number("height");
    const std::uint64_t maxval = scan.number("maxval");
    if (width == 0 || height == 0 || width > INT32_MAX || height > INT32_MAX) scan.fail("invalid image size");
    if (maxval == 0 || maxval > 65535) scan.fail("maxval must be in 1..65535");
    std::size_t offset = scan.raster_offset();

    const int bps = maxval < 256 ? 1 : 2;
    const std::uint64_t samples = width * height * channels;
    const std::uint64_t available = bytes.size() - std::min(offset, bytes.size());
    if (samples > available / bps)
        throw ParseError(name, ParseError::Unit::kByte, bytes.size(),
                         "raster needs " + std::to_string(samples * bps) + " bytes but only " +
                             std::to_string(available) + " remain");
    if (available != samples * bps)
        throw ParseError(name, ParseError::Unit::kByte, offset + samples * bps, "unexpected data after the raster");

    Image image(static_cast<int>(width), static_cast<int>(height), channels,
                bps == 1 ? PixelType::kUInt8 : PixelType::kUInt16);
    const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data()) + offset;
    auto check = [&](std::uint64_t v, std::uint64_t i) {
        if (v > maxval)
            throw ParseError(name, ParseError::Unit::kByte, offset + i * bps,
                             "sample " + std::to_string(v) + " exceeds maxval " + std::to_string(maxval));
    };
    if (bps == 1) {
        auto px = image.data<std::uint8_t>();
        for (std::uint64_t i = 0; i < samples; ++i) {
            check(raw[i], i);
            px[i] = raw[i];
        }
    } else {
        auto px = image.data<std::uint16_t>();
        for (std::uint64_t i = 0; i < samples; ++i) {
            const std::uint16_t v = static_cast<std::uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1]);
            check(v, i);
            px[i] = v;
        }
    }
    return image;
}

std::string format_netpbm(const Image& image) {
    if (image.empty()) throw InvalidArgument("write_image: image is empty");
    if (image.type() == PixelType::kFloat32) throw InvalidArgument("write_image: only 8- and 16-bit images can be written");
    const bool wide = image.type() == PixelType::kUInt16;
    std::string out = image.channels() == 1 ? "P5\n" : "P6\n";
    out += std::to_string(image.width()) + " " + std::to_string(image.height()) + "\n" + (wide ? "65535" : "255") + "\n";
    if (wide) {
        for (const std::uint16_t v : image.data<std::uint16_t>()) {
            out.push_back(static_cast<char>(v >> 8));
            out.push_back(static_cast<char>(v & 0xFF));
        }
    } else {
        const auto px = image.data<std::uint8_t>();
        out.append(reinterpret_cast<const char*>(px.data()), px.size());
    }
    return out;
}

}  // namespace r3d::io
