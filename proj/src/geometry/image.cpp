#include "r3d/image.h"

#include <string>

#include "r3d/error.h"

namespace r3d {

Image::Image(int width, int height, int channels, PixelType type)
    : width_(width), height_(height), channels_(channels) {
    if (width < 0 || height < 0) throw InvalidArgument("image size must be non-negative");
    if (channels != 1 && channels != 3) throw InvalidArgument("image must have 1 or 3 channels");
    const std::size_t n = pixel_count() * channels;
    switch (type) {
        case PixelType::kUInt8: pixels_ = std::vector<std::uint8_t>(n, 0); break;
        case PixelType::kUInt16: pixels_ = std::vector<std::uint16_t>(n, 0); break;
        case PixelType::kFloat32: pixels_ = std::vector<float>(n, 0.0f); break;
    }
}

PixelType Image::type() const { return static_cast<PixelType>(pixels_.index()); }

template <typename T>
std::vector<T>& Image::buffer() {
    auto* v = std::get_if<std::vector<T>>(&pixels_);
    if (v == nullptr) throw InvalidArgument("image pixel type mismatch");
    return *v;
}

template std::vector<std::uint8_t>& Image::buffer<std::uint8_t>();
template std::vector<std::uint16_t>& Image::buffer<std::uint16_t>();
template std::vector<float>& Image::buffer<float>();

RGBDImage create_rgbd_image(Image color, Image depth) {
    if (color.channels() != 3 || color.type() == PixelType::kUInt16)
        throw InvalidArgument("color image must be 3-channel 8-bit or float");
    if (depth.channels() != 1 || depth.type() != PixelType::kFloat32)
        throw InvalidArgument("depth image must be 1-channel float (meters)");
    if (color.width() != depth.width() || color.height() != depth.height())
        throw InvalidArgument("color and depth resolutions differ");
    for (float d : depth.data<float>()) {
        if (!(d >= 0.0f)) throw InvalidArgument("depth values must be non-negative");
    }
    return RGBDImage{std::move(color), std::move(depth)};
}

Image depth_from_raw(const Image& raw, double depth_scale, double depth_trunc) {
    if (!(depth_scale > 0.0)) throw InvalidArgument("depth_scale must be positive");
    if (!(depth_trunc > 0.0)) throw InvalidArgument("depth_trunc must be positive");
    if (raw.channels() != 1 || raw.type() != PixelType::kUInt16)
        throw InvalidArgument("raw depth must be a 1-channel 16-bit image");
    Image depth(raw.width(), raw.height(), 1, PixelType::kFloat32);
    auto src = raw.data<std::uint16_t>();
    auto dst = depth.data<float>();
    for (std::size_t i = 0; i < src.size(); ++i) {
        const double d = src[i] / depth_scale;
        dst[i] = d > depth_trunc ? 0.0f : static_cast<float>(d);
    }
    return depth;
}

void PinholeCameraIntrinsic::validate() const {
    if (width <= 0 || height <= 0) throw InvalidArgument("intrinsic resolution must be positive");
    if (!(fx > 0.0) || !(fy > 0.0)) throw InvalidArgument("focal lengths must be positive");
    if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height))
        throw InvalidArgument("principal point (" + std::to_string(cx) + ", " +
                              std::to_string(cy) + ") lies outside the image");
}

}  // namespace r3d
