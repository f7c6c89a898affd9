#include <bit>
#include <cstdint>
#include <string>
#include <vector>

#include "formats.h"
#include "io_common.h"

namespace r3d::io {
namespace {

struct PcdField {
    std::string name;
    int size = 4;
    char type = 'F';
    std::uint64_t count = 1;
};

std::vector<std::string_view> split(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
        const std::size_t start = i;
        while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
        if (i > start) out.push_back(line.substr(start, i - start));
    }
    return out;
}

int find_field(const std::vector<PcdField>& fields, std::string_view name) {
    for (std::size_t i = 0; i < fields.size(); ++i)
        if (fields[i].name == name) return static_cast<int>(i);
    return -1;
}

double read_value(TextCursor& cur, const PcdField& f) {
    if (f.type == 'F') {
        if (f.size == 4) return cur.number<float>("float value");
        return cur.number<double>("double value");
    }
    if (f.type == 'U') {
        const auto v = cur.number<std::uint64_t>("unsigned value");
        if (f.size < 8 && v >> (8 * f.size)) cur.fail("unsigned value out of range");
        return static_cast<double>(v);
    }
    const auto v = cur.number<std::int64_t>("signed value");
    if (f.size < 8) {
        const std::int64_t lim = std::int64_t{1} << (8 * f.size - 1);
        if (v < -lim || v >= lim) cur.fail("signed value out of range");
    }
    return static_cast<double>(v);
}

// Packed color: the low 24 bits are 0xRRGGBB, stored either as the bits of a
// float or as an unsigned integer.
Eigen::Vector3d unpack_rgb(TextCursor& cur, const PcdField& f) {
    std::uint32_t bits = 0;
    if (f.type == 'F') {
        const float v = cur.number<float>("packed rgb value");
        bits = std::bit_cast<std::uint32_t>(v);
    } else {
        const auto v = cur.number<std::uint64_t>("packed rgb value");
        if (v > UINT32_MAX) cur.fail("packed rgb value out of range");
        bits = static_cast<std::uint32_t>(v);
    }
    return Eigen::Vector3d((bits >> 16) & 0xFF, (bits >> 8) & 0xFF, bits & 0xFF) / 255.0;
}

}  // namespace

PointCloud parse_pcd(std::string_view bytes, const std::string& name) {
    std::vector<PcdField> fields;
    std::uint64_t width = 0, height = 0, points = 0;
    bool have_fields = false, have_size = false, have_type = false, have_width = false, have_height = false,
         have_points = false;
    std::size_t pos = 0;
    std::uint64_t line_no = 0;
    auto fail = [&](const std::string& what) { throw ParseError(name, ParseError::Unit::kLine, line_no, what); };

    while (true) {
        ++line_no;
        if (pos >= bytes.size()) fail("header is missing the DATA line");
        std::size_t eol = bytes.find('\n', pos);
        if (eol == std::string_view::npos) eol = bytes.size();
        std::string_view line = bytes.substr(pos, eol - pos);
        pos = eol + 1;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        const auto tok = split(line);
        if (tok.empty() || tok[0].front() == '#') {
            if (line_no == 1 && tok.empty()) fail("bad magic, empty first line");
            continue;
        }
        const std::string_view key = tok[0];
        auto need_fields = [&] {
            if (!have_fields) fail(std::string(key) + " before FIELDS");
            if (tok.size() != fields.size() + 1) fail(std::string(key) + " must list one entry per field");
        };
        if (key == "VERSION") {
            if (tok.size() != 2) fail("malformed VERSION line");
        } else if (key == "FIELDS") {
            if (have_fields) fail("duplicate FIELDS line");
            if (tok.size() < 2) fail("FIELDS lists no field");
            for (std::size_t i = 1; i < tok.size(); ++i) fields.push_back({std::string(tok[i])});
            have_fields = true;
        } else if (key == "SIZE") {
            need_fields();
            for (std::size_t i = 1; i < tok.size(); ++i) {
                int s = 0;
                if (!parse_number(tok[i], s) || (s != 1 && s != 2 && s != 4 && s != 8))
                    fail("invalid SIZE entry '" + std::string(tok[i]) + "'");
                fields[i - 1].size = s;
            }
            have_size = true;
        } else if (key == "TYPE") {
            need_fields();
            for (std::size_t i = 1; i < tok.size(); ++i) {
                if (tok[i] != "F" && tok[i] != "U" && tok[i] != "I")
                    fail("unknown field type '" + std::string(tok[i]) + "'");
                fields[i - 1].type = tok[i][0];
            }
            have_type = true;
        } else if (key == "COUNT") {
            need_fields();
            for (std::size_t i = 1; i < tok.size(); ++i)
                if (!parse_number(tok[i], fields[i - 1].count) || fields[i - 1].count == 0 || fields[i - 1].count > 4096)
                    fail("invalid COUNT entry '" + std::string(tok[i]) + "'");
        } else if (key == "WIDTH" || key == "HEIGHT" || key == "POINTS") {
            std::uint64_t v = 0;
            if (tok.size() != 2 || !parse_number(tok[1], v)) fail("malformed " + std::string(key) + " line");
            if (key == "WIDTH") width = v, have_width = true;
            else if (key == "HEIGHT") height = v, have_height = true;
            else points = v, have_points = true;
        } else if (key == "VIEWPOINT") {
            if (tok.size() != 8) fail("VIEWPOINT needs 7 values");
            for (std::size_t i = 1; i < tok.size(); ++i) {
                double v;
                if (!parse_number(tok[i], v)) fail("invalid VIEWPOINT value");
            }
        } else if (key == "DATA") {
            if (tok.size() != 2) fail("malformed DATA line");
            if (tok[1] == "binary" || tok[1] == "binary_compressed")
                throw UnsupportedFeature(name, ParseError::Unit::kLine, line_no, "binary PCD is not supported");
            if (tok[1] != "ascii") fail("unknown DATA encoding '" + std::string(tok[1]) + "'");
            break;
        } else {
            fail("unexpected header keyword '" + std::string(key.substr(0, 32)) + "'");
        }
    }

    if (!have_fields || !have_size || !have_type) fail("header lacks FIELDS, SIZE or TYPE");
    if (!have_width || !have_height) fail("header lacks WIDTH or HEIGHT");
    if (!have_points) points = width * height;
    if (height != 0 && width > UINT64_MAX / height) fail("WIDTH * HEIGHT overflows");
    if (width * height != points) fail("POINTS does not equal WIDTH * HEIGHT");
    const int ix = find_field(fields, "x"), iy = find_field(fields, "y"), iz = find_field(fields, "z");
    if (ix < 0 || iy < 0 || iz < 0) fail("FIELDS lacks x, y or z");
    const int inx = find_field(fields, "normal_x"), iny = find_field(fields, "normal_y"),
              inz = find_field(fields, "normal_z");
    int irgb = find_field(fields, "rgb");
    if (irgb < 0) irgb = find_field(fields, "rgba");
    const bool normals = inx >= 0 && iny >= 0 && inz >= 0;
    for (const int i : {ix, iy, iz, inx, iny, inz, irgb})
        if (i >= 0 && fields[i].count != 1) fail("field '" + fields[i].name + "' must have COUNT 1");
    if (irgb >= 0 && fields[irgb].size != 4) fail("packed rgb must have SIZE 4");

    std::uint64_t per_point = 0;
    for (const auto& f : fields) per_point += f.count;
    TextCursor cur(bytes, std::min(pos, bytes.size()), line_no + 1, name);
    // Each value takes at least one character plus a separator.
    if (points > (cur.remaining() / 2 + 1) / per_point) fail("POINTS exceeds what the data section can hold");

    PointCloud cloud;
    cloud.points.reserve(points);
    if (normals) cloud.normals.reserve(points);
    if (irgb >= 0) cloud.colors.reserve(points);
    std::vector<double> values(fields.size());
    for (std::uint64_t p = 0; p < points; ++p) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (static_cast<int>(i) == irgb) {
                cloud.colors.push_back(unpack_rgb(cur, fields[i]));
                continue;
            }
            for (std::uint64_t c = 0; c < fields[i].count; ++c) values[i] = read_value(cur, fields[i]);
        }
        cloud.points.emplace_back(values[ix], values[iy], values[iz]);
        if (normals) cloud.normals.emplace_back(values[inx], values[iny], values[inz]);
    }
    if (!cur.at_end()) cur.fail("unexpected data after the last point");
    return cloud;
}

std::string format_pcd(const PointCloud& cloud) {
    const bool normals = cloud.has_normals();
    const bool colors = cloud.has_colors();
    const std::string n = std::to_string(cloud.size());
    std::string out = "# .PCD v0.7 - Point Cloud Data file format\nVERSION 0.7\nFIELDS x y z";
    if (normals) out += " normal_x normal_y normal_z";
    if (colors) out += " rgb";
    out += "\nSIZE 8 8 8";
    if (normals) out += " 8 8 8";
    if (colors) out += " 4";
    out += "\nTYPE F F F";
    if (normals) out += " F F F";
    if (colors) out += " F";
    out += "\nCOUNT 1 1 1";
    if (normals) out += " 1 1 1";
    if (colors) out += " 1";
    out += "\nWIDTH " + n + "\nHEIGHT 1\nVIEWPOINT 0 0 0 1 0 0 0\nPOINTS " + n + "\nDATA ascii\n";

    for (std::size_t i = 0; i < cloud.size(); ++i) {
        for (int k = 0; k < 3; ++k) {
            if (k) out += ' ';
            append_number(out, cloud.points[i][k]);
        }
        if (normals)
            for (int k = 0; k < 3; ++k) {
                out += ' ';
                append_number(out, cloud.normals[i][k]);
            }
        if (colors) {
            std::uint32_t bits = 0;
            for (int k = 0; k < 3; ++k) {
                const auto v = static_cast<std::uint32_t>(std::lround(std::clamp(cloud.colors[i][k], 0.0, 1.0) * 255.0));
                bits = (bits << 8) | v;
            }
            out += ' ';
            append_number(out, std::bit_cast<float>(bits));
        }
        out += '\n';
    }
    return out;
}

}  // namespace r3d::io
