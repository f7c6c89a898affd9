#include <algorithm>
#include <variant>

#include "../io/io_common.h"
#include "r3d/error.h"
#include "r3d/io.h"
#include "r3d/pipeline.h"

namespace r3d {
namespace {

using Field = std::variant<int PipelineConfig::*, double PipelineConfig::*, std::uint64_t PipelineConfig::*>;

struct FieldEntry {
    const char* key;
    Field field;
};

const std::vector<FieldEntry>& fields() {
    static const std::vector<FieldEntry> table = {
        {"fragment_size", &PipelineConfig::fragment_size},
        {"voxel_size", &PipelineConfig::voxel_size},
        {"normal_radius", &PipelineConfig::normal_radius},
        {"normal_max_nn", &PipelineConfig::normal_max_nn},
        {"fpfh_radius", &PipelineConfig::fpfh_radius},
        {"fpfh_max_nn", &PipelineConfig::fpfh_max_nn},
        {"ransac_distance", &PipelineConfig::ransac_distance},
        {"ransac_n", &PipelineConfig::ransac_n},
        {"edge_similarity", &PipelineConfig::edge_similarity},
        {"ransac_max_iteration", &PipelineConfig::ransac_max_iteration},
        {"ransac_max_validation", &PipelineConfig::ransac_max_validation},
        {"icp_distance", &PipelineConfig::icp_distance},
        {"min_pair_fitness", &PipelineConfig::min_pair_fitness},
        {"frame_voxel_size", &PipelineConfig::frame_voxel_size},
        {"odometry_distance", &PipelineConfig::odometry_distance},
        {"skip_k", &PipelineConfig::skip_k},
        {"preference_loop_closure", &PipelineConfig::preference_loop_closure},
        {"tsdf_voxel_size", &PipelineConfig::tsdf_voxel_size},
        {"sdf_trunc", &PipelineConfig::sdf_trunc},
        {"depth_scale", &PipelineConfig::depth_scale},
        {"depth_trunc", &PipelineConfig::depth_trunc},
        {"seed", &PipelineConfig::seed},
        {"threads", &PipelineConfig::threads},
    };
    return table;
}

bool is_frame_name(const std::filesystem::path& p, const char* ext) {
    const std::string stem = p.stem().string();
    return io::lower_extension(p) == ext && !stem.empty() && stem.size() <= 9 &&
           std::all_of(stem.begin(), stem.end(), [](unsigned char c) { return c >= '0' && c <= '9'; });
}

std::vector<std::filesystem::path> list_frames(const std::filesystem::path& dir, const char* ext) {
    if (!std::filesystem::is_directory(dir)) throw IoError("missing directory '" + dir.string() + "'");
    std::vector<std::pair<int, std::filesystem::path>> found;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (!entry.is_regular_file() || !is_frame_name(entry.path(), ext)) continue;
        found.emplace_back(std::stoi(entry.path().stem().string()), entry.path());
    }
    std::sort(found.begin(), found.end());
    std::vector<std::filesystem::path> out;
    for (std::size_t i = 0; i < found.size(); ++i) {
        if (found[i].first != static_cast<int>(i)) {
            throw InvalidArgument("frame " + std::to_string(i) + " is missing from '" + dir.string() +
                                  "' (frames must be numbered consecutively from 0)");
        }
        out.push_back(found[i].second);
    }
    return out;
}

}  // namespace

const std::vector<std::string>& PipelineConfig::keys() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> n;
        for (const auto& f : fields()) n.emplace_back(f.key);
        return n;
    }();
    return names;
}

void PipelineConfig::set(std::string_view key, std::string_view value) {
    for (const auto& f : fields()) {
        if (key != f.key) continue;
        const bool ok = std::visit(
            [&](auto member) {
                auto& slot = this->*member;
                std::remove_reference_t<decltype(slot)> parsed;
                if (!io::parse_number(value, parsed)) return false;
                slot = parsed;
                return true;
            },
            f.field);
        if (!ok) throw InvalidArgument("invalid value '" + std::string(value) + "' for " + std::string(key));
        return;
    }
    throw InvalidArgument("unknown config key '" + std::string(key) + "'");
}

std::string PipelineConfig::value(std::string_view key) const {
    for (const auto& f : fields()) {
        if (key != f.key) continue;
        return std::visit(
            [&](auto member) {
                const auto v = this->*member;
                if constexpr (std::is_floating_point_v<decltype(v)>) {
                    std::string out;
                    io::append_number(out, v);
                    return out;
                } else {
                    return std::to_string(v);
                }
            },
            f.field);
    }
    throw InvalidArgument("unknown config key '" + std::string(key) + "'");
}

void PipelineConfig::validate() const {
    auto positive = [](double v, const char* name) {
        if (!(v > 0.0)) throw InvalidArgument(std::string(name) + " must be positive");
    };
    if (fragment_size < 2) throw InvalidArgument("fragment_size must be at least 2");
    positive(voxel_size, "voxel_size");
    positive(normal_radius, "normal_radius");
    positive(normal_max_nn, "normal_max_nn");
    positive(fpfh_radius, "fpfh_radius");
    positive(fpfh_max_nn, "fpfh_max_nn");
    positive(ransac_distance, "ransac_distance");
    if (ransac_n < 3) throw InvalidArgument("ransac_n must be at least 3");
    if (!(edge_similarity > 0.0 && edge_similarity <= 1.0)) throw InvalidArgument("edge_similarity must be in (0, 1]");
    positive(ransac_max_iteration, "ransac_max_iteration");
    positive(ransac_max_validation, "ransac_max_validation");
    positive(icp_distance, "icp_distance");
    if (!(min_pair_fitness >= 0.0 && min_pair_fitness <= 1.0)) throw InvalidArgument("min_pair_fitness must be in [0, 1]");
    positive(frame_voxel_size, "frame_voxel_size");
    positive(odometry_distance, "odometry_distance");
    if (skip_k < 2) throw InvalidArgument("skip_k must be at least 2");
    if (!(preference_loop_closure >= 0.0 && preference_loop_closure <= 1.0))
        throw InvalidArgument("preference_loop_closure must be in [0, 1]");
    positive(tsdf_voxel_size, "tsdf_voxel_size");
    positive(sdf_trunc, "sdf_trunc");
    positive(depth_scale, "depth_scale");
    positive(depth_trunc, "depth_trunc");
    if (threads < 0) throw InvalidArgument("threads must not be negative");
}

void parse_pipeline_config(std::string_view text, const std::string& name, PipelineConfig& config) {
    std::uint64_t line_no = 0;
    std::size_t pos = 0;
    auto trim = [](std::string_view s) {
        while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
        while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
        return s;
    };
    while (pos < text.size()) {
        ++line_no;
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        std::string_view line = text.substr(pos, eol - pos);
        pos = eol + 1;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ParseError(name, ParseError::Unit::kLine, line_no, "expected key = value");
        try {
            config.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        } catch (const InvalidArgument& e) {
            throw ParseError(name, ParseError::Unit::kLine, line_no, e.what());
        }
    }
}

PipelineConfig read_pipeline_config(const std::filesystem::path& path) {
    PipelineConfig config;
    parse_pipeline_config(io::read_file(path), path.string(), config);
    return config;
}

PinholeCameraIntrinsic read_intrinsic(const std::filesystem::path& path) {
    const std::string text = io::read_file(path);
    io::TextCursor cur(text, 0, 1, path.string());
    PinholeCameraIntrinsic k;
    k.width = cur.number<int>("width");
    k.height = cur.number<int>("height");
    k.fx = cur.number<double>("fx");
    k.fy = cur.number<double>("fy");
    k.cx = cur.number<double>("cx");
    k.cy = cur.number<double>("cy");
    if (!cur.at_end()) cur.fail("unexpected data after cy");
    try {
        k.validate();
    } catch (const InvalidArgument& e) {
        cur.fail(e.what());
    }
    return k;
}

void write_intrinsic(const std::filesystem::path& path, const PinholeCameraIntrinsic& k) {
    std::string out = std::to_string(k.width) + " " + std::to_string(k.height);
    for (const double v : {k.fx, k.fy, k.cx, k.cy}) {
        out += ' ';
        io::append_number(out, v);
    }
    out += '\n';
    io::write_file(path, out);
}

Dataset open_dataset(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw IoError("dataset directory '" + dir.string() + "' does not exist");
    Dataset d;
    d.intrinsic = read_intrinsic(dir / "intrinsic.txt");
    d.color = list_frames(dir / "color", ".ppm");
    d.depth = list_frames(dir / "depth", ".pgm");
    if (d.color.empty()) throw InvalidArgument("dataset '" + dir.string() + "' has no frames");
    if (d.color.size() != d.depth.size()) {
        const std::size_t first = std::min(d.color.size(), d.depth.size());
        throw InvalidArgument("frame " + std::to_string(first) + " has a " +
                              (d.color.size() > d.depth.size() ? "color image but no depth image"
                                                               : "depth image but no color image"));
    }
    // Read every header now so that a bad frame fails before any processing.
    for (std::size_t i = 0; i < d.size(); ++i) {
        const Image c = read_image(d.color[i]);
        const Image z = read_image(d.depth[i]);
        if (c.width() != d.intrinsic.width || c.height() != d.intrinsic.height || z.width() != c.width() ||
            z.height() != c.height())
            throw InvalidArgument("frame " + std::to_string(i) + ": image size does not match intrinsic.txt");
        if (c.type() != PixelType::kUInt8) throw InvalidArgument("'" + d.color[i].string() + "' must be 8-bit");
        if (z.type() != PixelType::kUInt16) throw InvalidArgument("'" + d.depth[i].string() + "' must be 16-bit");
    }
    return d;
}

RGBDImage load_frame(const Dataset& dataset, std::size_t index, const PipelineConfig& config) {
    Image color = read_image(dataset.color.at(index));
    Image depth = depth_from_raw(read_image(dataset.depth.at(index)), config.depth_scale, config.depth_trunc);
    return create_rgbd_image(std::move(color), std::move(depth));
}

}  // namespace r3d
