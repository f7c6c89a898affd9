#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "formats.h"
#include "io_common.h"

namespace r3d::io {
namespace {

enum class PlyType { kInt8, kUInt8, kInt16, kUInt16, kInt32, kUInt32, kFloat32, kFloat64 };

std::optional<PlyType> ply_type(std::string_view name) {
    if (name == "char" || name == "int8") return PlyType::kInt8;
    if (name == "uchar" || name == "uint8") return PlyType::kUInt8;
    if (name == "short" || name == "int16") return PlyType::kInt16;
    if (name == "ushort" || name == "uint16") return PlyType::kUInt16;
    if (name == "int" || name == "int32") return PlyType::kInt32;
    if (name == "uint" || name == "uint32") return PlyType::kUInt32;
    if (name == "float" || name == "float32") return PlyType::kFloat32;
    if (name == "double" || name == "float64") return PlyType::kFloat64;
    return std::nullopt;
}

std::size_t type_size(PlyType t) {
    switch (t) {
        case PlyType::kInt8:
        case PlyType::kUInt8: return 1;
        case PlyType::kInt16:
        case PlyType::kUInt16: return 2;
        case PlyType::kInt32:
        case PlyType::kUInt32:
        case PlyType::kFloat32: return 4;
        case PlyType::kFloat64: return 8;
    }
    return 8;
}

bool is_integer(PlyType t) { return t != PlyType::kFloat32 && t != PlyType::kFloat64; }

// Range of an integer type, used both for ASCII range checks and color scaling.
std::int64_t type_min(PlyType t) {
    switch (t) {
        case PlyType::kInt8: return INT8_MIN;
        case PlyType::kInt16: return INT16_MIN;
        case PlyType::kInt32: return INT32_MIN;
        default: return 0;
    }
}

std::int64_t type_max(PlyType t) {
    switch (t) {
        case PlyType::kInt8: return INT8_MAX;
        case PlyType::kUInt8: return UINT8_MAX;
        case PlyType::kInt16: return INT16_MAX;
        case PlyType::kUInt16: return UINT16_MAX;
        case PlyType::kInt32: return INT32_MAX;
        case PlyType::kUInt32: return UINT32_MAX;
        default: return 0;
    }
}

struct PlyProperty {
    std::string name;
    PlyType type = PlyType::kFloat64;
    bool list = false;
    PlyType count_type = PlyType::kUInt8;
};

struct PlyElement {
    std::string name;
    std::uint64_t count = 0;
    std::uint64_t line = 0;
    std::vector<PlyProperty> properties;

    int find(std::string_view prop) const {
        for (std::size_t i = 0; i < properties.size(); ++i)
            if (properties[i].name == prop) return static_cast<int>(i);
        return -1;
    }
};

struct PlyHeader {
    bool binary = false;
    std::vector<PlyElement> elements;
    std::size_t body_offset = 0;
    std::uint64_t body_line = 0;
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

PlyHeader parse_header(std::string_view bytes, const std::string& name) {
    PlyHeader header;
    std::size_t pos = 0;
    std::uint64_t line_no = 0;
    bool have_format = false;
    auto fail = [&](const std::string& what) -> void { throw ParseError(name, ParseError::Unit::kLine, line_no, what); };

    while (true) {
        ++line_no;
        const std::size_t eol = bytes.find('\n', pos);
        if (eol == std::string_view::npos) {
            fail(line_no == 1 ? "bad magic, expected 'ply'" : "header is missing 'end_header'");
        }
        std::string_view line = bytes.substr(pos, eol - pos);
        pos = eol + 1;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

        if (line_no == 1) {
            if (line != "ply") fail("bad magic, expected 'ply'");
            continue;
        }
        const auto tok = split(line);
        if (tok.empty()) fail("empty header line");
        const std::string_view key = tok[0];
        if (key == "comment" || key == "obj_info") continue;
        if (key == "format") {
            if (have_format) fail("duplicate format line");
            if (tok.size() != 3) fail("malformed format line");
            if (tok[2] != "1.0") fail("unsupported PLY version '" + std::string(tok[2]) + "'");
            if (tok[1] == "ascii") {
                header.binary = false;
            } else if (tok[1] == "binary_little_endian") {
                header.binary = true;
            } else if (tok[1] == "binary_big_endian") {
                throw UnsupportedFeature(name, ParseError::Unit::kLine, line_no, "big-endian PLY is not supported");
            } else {
                fail("unknown PLY encoding '" + std::string(tok[1]) + "'");
            }
            have_format = true;
        } else if (key == "element") {
            if (!have_format) fail("element before format line");
            if (tok.size() != 3) fail("malformed element line");
            PlyElement e;
            e.name = tok[1];
            e.line = line_no;
            if (!parse_number(tok[2], e.count)) fail("invalid element count '" + std::string(tok[2]) + "'");
            header.elements.push_back(std::move(e));
        } else if (key == "property") {
            if (header.elements.empty()) fail("property before any element");
            PlyProperty p;
            if (tok.size() >= 2 && tok[1] == "list") {
                if (tok.size() != 5) fail("malformed list property line");
                const auto ct = ply_type(tok[2]);
                const auto it = ply_type(tok[3]);
                if (!ct) fail("unknown property type '" + std::string(tok[2]) + "'");
                if (!it) fail("unknown property type '" + std::string(tok[3]) + "'");
                if (!is_integer(*ct)) fail("list count type must be an integer type");
                p.list = true;
                p.count_type = *ct;
                p.type = *it;
                p.name = tok[4];
            } else {
                if (tok.size() != 3) fail("malformed property line");
                const auto t = ply_type(tok[1]);
                if (!t) fail("unknown property type '" + std::string(tok[1]) + "'");
                p.type = *t;
                p.name = tok[2];
            }
            header.elements.back().properties.push_back(std::move(p));
        } else if (key == "end_header") {
            if (tok.size() != 1) fail("malformed end_header line");
            if (!have_format) fail("header has no format line");
            header.body_offset = pos;
            header.body_line = line_no + 1;
            return header;
        } else {
            fail("unexpected header keyword '" + std::string(key.substr(0, 32)) + "'");
        }
    }
}

class AsciiSource {
public:
    AsciiSource(std::string_view bytes, const PlyHeader& h, const std::string& name)
        : cursor_(bytes, h.body_offset, h.body_line, name), name_(name) {}

    void mark_record() {
        cursor_.at_end();
        record_line_ = cursor_.line();
    }
    [[noreturn]] void fail_record(const std::string& what, bool unsupported) const {
        if (unsupported) throw UnsupportedFeature(name_, ParseError::Unit::kLine, record_line_, what);
        throw ParseError(name_, ParseError::Unit::kLine, record_line_, what);
    }
    [[noreturn]] void fail(const std::string& what) const { cursor_.fail(what); }

    double scalar(PlyType t) {
        if (t == PlyType::kFloat32) return cursor_.number<float>("float value");
        if (t == PlyType::kFloat64) return cursor_.number<double>("double value");
        const auto v = cursor_.number<std::int64_t>("integer value");
        if (v < type_min(t) || v > type_max(t)) cursor_.fail("integer value " + std::to_string(v) + " out of range");
        return static_cast<double>(v);
    }

    // Each value takes at least one character plus a separator.
    bool can_hold(std::uint64_t values) const { return values <= cursor_.remaining() / 2 + 1; }

    void finish() {
        if (!cursor_.at_end()) cursor_.fail("unexpected data after the last element");
    }

private:
    TextCursor cursor_;
    std::string name_;
    std::uint64_t record_line_ = 0;
};

class BinarySource {
public:
    BinarySource(std::string_view bytes, const PlyHeader& h, const std::string& name)
        : cursor_(bytes, h.body_offset, name), name_(name) {}

    void mark_record() { record_offset_ = cursor_.offset(); }
    [[noreturn]] void fail_record(const std::string& what, bool unsupported) const {
        if (unsupported) throw UnsupportedFeature(name_, ParseError::Unit::kByte, record_offset_, what);
        throw ParseError(name_, ParseError::Unit::kByte, record_offset_, what);
    }
    [[noreturn]] void fail(const std::string& what) const { cursor_.fail(what); }

    double scalar(PlyType t) {
        switch (t) {
            case PlyType::kInt8: return cursor_.read_le<std::int8_t>();
            case PlyType::kUInt8: return cursor_.read_le<std::uint8_t>();
            case PlyType::kInt16: return cursor_.read_le<std::int16_t>();
            case PlyType::kUInt16: return cursor_.read_le<std::uint16_t>();
            case PlyType::kInt32: return cursor_.read_le<std::int32_t>();
            case PlyType::kUInt32: return cursor_.read_le<std::uint32_t>();
            case PlyType::kFloat32: return cursor_.read_le<float>();
            case PlyType::kFloat64: return cursor_.read_le<double>();
        }
        return 0.0;
    }

    std::size_t remaining() const { return cursor_.remaining(); }

    void finish() {
        if (cursor_.remaining() != 0) cursor_.fail("unexpected data after the last element");
    }

private:
    ByteCursor cursor_;
    std::string name_;
    std::size_t record_offset_ = 0;
};

// Smallest encoded size of one record: scalars plus list counts of empty lists.
std::uint64_t min_record_bytes(const PlyElement& e) {
    std::uint64_t n = 0;
    for (const auto& p : e.properties) n += p.list ? type_size(p.count_type) : type_size(p.type);
    return n;
}

bool element_fits(const BinarySource& src, const PlyElement& e) {
    const std::uint64_t rec = min_record_bytes(e);
    return rec == 0 || e.count <= src.remaining() / rec;
}

bool element_fits(const AsciiSource& src, const PlyElement& e) {
    if (e.properties.empty()) return true;
    return e.count <= std::numeric_limits<std::uint64_t>::max() / e.properties.size() &&
           src.can_hold(e.count * e.properties.size());
}

bool list_fits(const BinarySource& src, std::uint64_t n, PlyType item) {
    return n <= src.remaining() / type_size(item);
}

bool list_fits(const AsciiSource& src, std::uint64_t n, PlyType) { return src.can_hold(n); }

template <typename Source>
std::uint64_t read_list_count(Source& src, const PlyProperty& p) {
    const double c = src.scalar(p.count_type);
    if (c < 0) src.fail_record("negative list length in property '" + p.name + "'", false);
    const auto n = static_cast<std::uint64_t>(c);
    if (!list_fits(src, n, p.type)) src.fail_record("list length " + std::to_string(n) + " exceeds the remaining data", false);
    return n;
}

double color_scale(PlyType t) { return is_integer(t) ? 1.0 / static_cast<double>(type_max(t)) : 1.0; }

template <typename Source>
PlyData read_body(Source& src, const PlyHeader& header, const std::string& name) {
    PlyData data;
    const PlyElement* vertex = nullptr;
    for (const auto& e : header.elements)
        if (e.name == "vertex") {
            if (vertex) throw ParseError(name, ParseError::Unit::kLine, e.line, "duplicate vertex element");
            vertex = &e;
        }
    if (!vertex) throw ParseError(name, ParseError::Unit::kLine, 1, "no vertex element");

    for (const auto& e : header.elements) {
        auto header_error = [&](const std::string& what) {
            throw ParseError(name, ParseError::Unit::kLine, e.line, what);
        };
        if (e.properties.empty()) continue;
        src.mark_record();
        if (!element_fits(src, e))
            src.fail_record("element '" + e.name + "' declares " + std::to_string(e.count) +
                                " records, more than the remaining data can hold",
                            false);

        if (e.name == "vertex") {
            int idx[9];
            const char* names[9] = {"x", "y", "z", "nx", "ny", "nz", "red", "green", "blue"};
            for (int k = 0; k < 9; ++k) {
                idx[k] = e.find(names[k]);
                if (idx[k] >= 0 && e.properties[idx[k]].list) header_error(std::string("property '") + names[k] + "' must be a scalar");
            }
            if (idx[0] < 0 || idx[1] < 0 || idx[2] < 0) header_error("vertex element lacks x, y or z");
            const bool normals = idx[3] >= 0 && idx[4] >= 0 && idx[5] >= 0;
            const bool colors = idx[6] >= 0 && idx[7] >= 0 && idx[8] >= 0;
            double scale[3] = {1, 1, 1};
            if (colors)
                for (int k = 0; k < 3; ++k) scale[k] = color_scale(e.properties[idx[6 + k]].type);

            data.points.reserve(e.count);
            if (normals) data.normals.reserve(e.count);
            if (colors) data.colors.reserve(e.count);
            std::vector<double> values(e.properties.size());
            for (std::uint64_t r = 0; r < e.count; ++r) {
                src.mark_record();
                for (std::size_t k = 0; k < e.properties.size(); ++k) {
                    const auto& p = e.properties[k];
                    if (p.list) {
                        const std::uint64_t n = read_list_count(src, p);
                        for (std::uint64_t m = 0; m < n; ++m) src.scalar(p.type);
                    } else {
                        values[k] = src.scalar(p.type);
                    }
                }
                data.points.emplace_back(values[idx[0]], values[idx[1]], values[idx[2]]);
                if (normals) data.normals.emplace_back(values[idx[3]], values[idx[4]], values[idx[5]]);
                if (colors)
                    data.colors.emplace_back(values[idx[6]] * scale[0], values[idx[7]] * scale[1],
                                             values[idx[8]] * scale[2]);
            }
        } else if (e.name == "face") {
            int li = e.find("vertex_indices");
            if (li < 0) li = e.find("vertex_index");
            if (li < 0 || !e.properties[li].list) header_error("face element lacks a vertex_indices list");
            if (!is_integer(e.properties[li].type)) header_error("vertex_indices must have an integer item type");

            data.triangles.reserve(e.count);
            for (std::uint64_t r = 0; r < e.count; ++r) {
                src.mark_record();
                Eigen::Vector3i tri;
                for (std::size_t k = 0; k < e.properties.size(); ++k) {
                    const auto& p = e.properties[k];
                    if (!p.list) {
                        src.scalar(p.type);
                        continue;
                    }
                    const std::uint64_t n = read_list_count(src, p);
                    if (static_cast<int>(k) == li && n != 3)
                        src.fail_record("face " + std::to_string(r) + " has " + std::to_string(n) +
                                            " vertices; only triangles are supported",
                                        true);
                    for (std::uint64_t m = 0; m < n; ++m) {
                        const double v = src.scalar(p.type);
                        if (static_cast<int>(k) != li) continue;
                        if (v < 0 || v >= static_cast<double>(vertex->count))
                            src.fail_record("face " + std::to_string(r) + " references missing vertex " +
                                                std::to_string(static_cast<long long>(v)),
                                            false);
                        tri[static_cast<int>(m)] = static_cast<int>(v);
                    }
                }
                data.triangles.push_back(tri);
            }
        } else {
            for (std::uint64_t r = 0; r < e.count; ++r) {
                src.mark_record();
                for (const auto& p : e.properties) {
                    const std::uint64_t n = p.list ? read_list_count(src, p) : 1;
                    for (std::uint64_t m = 0; m < n; ++m) src.scalar(p.type);
                }
            }
        }
    }
    src.finish();
    return data;
}

void append_color(std::string& out, const Eigen::Vector3d& c, bool binary) {
    for (int k = 0; k < 3; ++k) {
        const auto v = static_cast<std::uint8_t>(std::lround(std::clamp(c[k], 0.0, 1.0) * 255.0));
        if (binary) {
            out.push_back(static_cast<char>(v));
        } else {
            out += ' ';
            out += std::to_string(v);
        }
    }
}

}  // namespace

PlyData parse_ply(std::string_view bytes, const std::string& name) {
    const PlyHeader header = parse_header(bytes, name);
    if (header.binary) {
        BinarySource src(bytes, header, name);
        return read_body(src, header, name);
    }
    AsciiSource src(bytes, header, name);
    return read_body(src, header, name);
}

std::string format_ply(const std::vector<Eigen::Vector3d>& points, const std::vector<Eigen::Vector3d>& normals,
                       const std::vector<Eigen::Vector3d>& colors, const std::vector<Eigen::Vector3i>& triangles,
                       bool with_faces, bool binary) {
    const bool has_n = !normals.empty();
    const bool has_c = !colors.empty();
    std::string out;
    out += "ply\nformat ";
    out += binary ? "binary_little_endian" : "ascii";
    out += " 1.0\nelement vertex " + std::to_string(points.size()) + "\n";
    out += "property double x\nproperty double y\nproperty double z\n";
    if (has_n) out += "property double nx\nproperty double ny\nproperty double nz\n";
    if (has_c) out += "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    if (with_faces) {
        out += "element face " + std::to_string(triangles.size()) + "\n";
        out += "property list uchar int vertex_indices\n";
    }
    out += "end_header\n";

    for (std::size_t i = 0; i < points.size(); ++i) {
        if (binary) {
            for (int k = 0; k < 3; ++k) append_le(out, points[i][k]);
            if (has_n)
                for (int k = 0; k < 3; ++k) append_le(out, normals[i][k]);
        } else {
            for (int k = 0; k < 3; ++k) {
                if (k) out += ' ';
                append_number(out, points[i][k]);
            }
            if (has_n)
                for (int k = 0; k < 3; ++k) {
                    out += ' ';
                    append_number(out, normals[i][k]);
                }
        }
        if (has_c) append_color(out, colors[i], binary);
        if (!binary) out += '\n';
    }
    if (with_faces) {
        for (const auto& t : triangles) {
            if (binary) {
                out.push_back(3);
                for (int k = 0; k < 3; ++k) append_le<std::int32_t>(out, t[k]);
            } else {
                out += "3 " + std::to_string(t[0]) + ' ' + std::to_string(t[1]) + ' ' + std::to_string(t[2]) + '\n';
            }
        }
    }
    return out;
}

}  // namespace r3d::io
