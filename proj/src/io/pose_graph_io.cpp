#include <json.hpp>
#include <string>

#include "formats.h"
#include "io_common.h"

namespace r3d::io {
namespace {

using nlohmann::json;

constexpr int kPoseGraphVersion = 1;

// Semantic errors carry the JSON path of the offending value; the location is
// the byte offset 0 because the document has already been parsed.
[[noreturn]] void semantic_error(const std::string& name, const std::string& where, const std::string& what) {
    throw ParseError(name, ParseError::Unit::kByte, 0, where + ": " + what);
}

template <int N>
Eigen::Matrix<double, N, N> read_matrix(const json& j, const std::string& name, const std::string& where) {
    if (!j.is_array() || j.size() != static_cast<std::size_t>(N * N))
        semantic_error(name, where, "expected an array of " + std::to_string(N * N) + " numbers");
    Eigen::Matrix<double, N, N> m;
    for (int r = 0; r < N; ++r)
        for (int c = 0; c < N; ++c) {
            const json& v = j[static_cast<std::size_t>(r * N + c)];
            if (!v.is_number()) semantic_error(name, where, "expected a number");
            m(r, c) = v.get<double>();
        }
    return m;
}

RigidTransform read_transform(const json& j, const std::string& name, const std::string& where) {
    const Eigen::Matrix4d m = read_matrix<4>(j, name, where);
    if (!RigidTransform::is_rigid(m)) semantic_error(name, where, "matrix is not a rigid transform");
    return RigidTransform::from_matrix(m);
}

template <typename Derived>
json write_matrix(const Eigen::MatrixBase<Derived>& m) {
    json a = json::array();
    for (int r = 0; r < m.rows(); ++r)
        for (int c = 0; c < m.cols(); ++c) a.push_back(m(r, c));
    return a;
}

const json& member(const json& obj, const char* key, const std::string& name, const std::string& where) {
    const auto it = obj.find(key);
    if (it == obj.end()) semantic_error(name, where, std::string("missing member '") + key + "'");
    return *it;
}

}  // namespace

PoseGraph parse_pose_graph(std::string_view bytes, const std::string& name) {
    json doc;
    try {
        doc = json::parse(bytes.begin(), bytes.end());
    } catch (const json::parse_error& e) {
        throw ParseError(name, ParseError::Unit::kByte, e.byte > 0 ? e.byte - 1 : 0, "malformed JSON");
    } catch (const json::exception& e) {
        // Number overflow and similar lexer failures carry no position.
        throw ParseError(name, ParseError::Unit::kByte, 0, std::string("malformed JSON: ") + e.what());
    }
    if (!doc.is_object()) semantic_error(name, "/", "expected an object");
    const json& format = member(doc, "format", name, "/");
    if (!format.is_string() || format.get<std::string>() != "r3d-pose-graph")
        semantic_error(name, "/format", "expected \"r3d-pose-graph\"");
    const json& version = member(doc, "version", name, "/");
    if (!version.is_number_integer()) semantic_error(name, "/version", "expected an integer");
    if (version.get<long long>() != kPoseGraphVersion)
        throw VersionError(name + ": pose graph version " + std::to_string(version.get<long long>()) +
                           " is not supported (expected " + std::to_string(kPoseGraphVersion) + ")");

    PoseGraph graph;
    const json& nodes = member(doc, "nodes", name, "/");
    if (!nodes.is_array()) semantic_error(name, "/nodes", "expected an array");
    for (std::size_t i = 0; i < nodes.size(); ++i)
        graph.nodes.push_back(read_transform(nodes[i], name, "/nodes/" + std::to_string(i)));

    const json& edges = member(doc, "edges", name, "/");
    if (!edges.is_array()) semantic_error(name, "/edges", "expected an array");
    for (std::size_t i = 0; i < edges.size(); ++i) {
        const std::string where = "/edges/" + std::to_string(i);
        const json& e = edges[i];
        if (!e.is_object()) semantic_error(name, where, "expected an object");
        PoseGraphEdge edge;
        const json& s = member(e, "source", name, where);
        const json& t = member(e, "target", name, where);
        if (!s.is_number_integer() || !t.is_number_integer())
            semantic_error(name, where, "source and target must be integers");
        const long long si = s.get<long long>(), ti = t.get<long long>();
        const auto n = static_cast<long long>(graph.nodes.size());
        if (si < 0 || si >= n || ti < 0 || ti >= n) semantic_error(name, where, "endpoint out of range");
        edge.source = static_cast<int>(si);
        edge.target = static_cast<int>(ti);
        edge.transformation = read_transform(member(e, "transformation", name, where), name, where + "/transformation");
        edge.information = read_matrix<6>(member(e, "information", name, where), name, where + "/information");
        const json& u = member(e, "uncertain", name, where);
        if (!u.is_boolean()) semantic_error(name, where + "/uncertain", "expected a boolean");
        edge.uncertain = u.get<bool>();
        const json& c = member(e, "confidence", name, where);
        if (!c.is_number()) semantic_error(name, where + "/confidence", "expected a number");
        edge.confidence = c.get<double>();
        graph.edges.push_back(edge);
    }
    try {
        graph.validate();
    } catch (const InvalidArgument& e) {
        semantic_error(name, "/edges", e.what());
    }
    return graph;
}

std::string format_pose_graph(const PoseGraph& graph) {
    json doc;
    doc["format"] = "r3d-pose-graph";
    doc["version"] = kPoseGraphVersion;
    doc["nodes"] = json::array();
    for (const auto& n : graph.nodes) doc["nodes"].push_back(write_matrix(n.matrix()));
    doc["edges"] = json::array();
    for (const auto& e : graph.edges) {
        json j;
        j["source"] = e.source;
        j["target"] = e.target;
        j["transformation"] = write_matrix(e.transformation.matrix());
        j["information"] = write_matrix(e.information);
        j["uncertain"] = e.uncertain;
        j["confidence"] = e.confidence;
        doc["edges"].push_back(std::move(j));
    }
    return doc.dump(1) + "\n";
}

}  // namespace r3d::io
