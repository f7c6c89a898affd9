#pragma once

#include <cstdint>
#include <span>
#include <variant>
#include <vector>

namespace r3d {

enum class PixelType { kUInt8, kUInt16, kFloat32 };

/// Row-major 2D image with 1 or 3 interleaved channels.
class Image {
public:
    Image() = default;
    /// Zero-filled. Throws InvalidArgument for negative sizes or channels other than 1 or 3.
    Image(int width, int height, int channels, PixelType type);

    int width() const { return width_; }
    int height() const { return height_; }
    int channels() const { return channels_; }
    PixelType type() const;
    bool empty() const { return width_ == 0 || height_ == 0; }
    std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * height_; }

    /// The whole buffer; T must match type() or InvalidArgument is thrown.
    template <typename T>
    std::span<T> data() {
        return std::span<T>(buffer<T>());
    }
    template <typename T>
    std::span<const T> data() const {
        return std::span<const T>(const_cast<Image*>(this)->buffer<T>());
    }

    template <typename T>
    T& at(int u, int v, int c = 0) {
        return buffer<T>()[index(u, v, c)];
    }
    template <typename T>
    T at(int u, int v, int c = 0) const {
        return const_cast<Image*>(this)->buffer<T>()[index(u, v, c)];
    }

    bool operator==(const Image& rhs) const = default;

private:
    std::size_t index(int u, int v, int c) const {
        return (static_cast<std::size_t>(v) * width_ + u) * channels_ + c;
    }

    template <typename T>
    std::vector<T>& buffer();

    int width_ = 0;
    int height_ = 0;
    int channels_ = 1;
    std::variant<std::vector<std::uint8_t>, std::vector<std::uint16_t>, std::vector<float>>
        pixels_;
};

/// A color image and a metric depth image of equal resolution.
/// color: 3 channels, 8-bit or float in [0,1]; depth: 1 channel float, meters, 0 = invalid.
struct RGBDImage {
    Image color;
    Image depth;
};

/// Validates and pairs the two images. Throws InvalidArgument on a channel,
/// type or resolution mismatch, or on a negative depth value.
RGBDImage create_rgbd_image(Image color, Image depth);

/// depth = raw / depth_scale; values above depth_trunc become 0.
Image depth_from_raw(const Image& raw, double depth_scale, double depth_trunc);

struct PinholeCameraIntrinsic {
    int width = 0;
    int height = 0;
    double fx = 0.0;
    double fy = 0.0;
    double cx = 0.0;
    double cy = 0.0;

    /// Throws InvalidArgument unless fx, fy > 0 and the principal point lies inside the image.
    void validate() const;
};

}  // namespace r3d
