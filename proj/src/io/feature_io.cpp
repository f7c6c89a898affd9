#include <algorithm>
#include <string>

#include "formats.h"
#include "io_common.h"

namespace r3d::io {
namespace {
constexpr int kFeatureVersion = 1;
}

// Layout: "# r3d-feature <version>" line, then "FPFH <n> 33", then n rows of
// 33 numbers. The version line may be absent, which reads as version 1.
FeatureMatrix parse_feature(std::string_view bytes, const std::string& name) {
    std::size_t start = 0;
    if (bytes.starts_with("#")) {
        const std::size_t eol = std::min(bytes.find('\n'), bytes.size());
        TextCursor vc(bytes.substr(0, eol), 1, 1, name);
        if (vc.expect("'r3d-feature'") != "r3d-feature") vc.fail("expected '# r3d-feature <version>'");
        const int version = vc.number<int>("version");
        if (!vc.at_end()) vc.fail("unexpected data after the version");
        if (version != kFeatureVersion)
            throw VersionError(name + ": feature file version " + std::to_string(version) +
                               " is not supported (expected " + std::to_string(kFeatureVersion) + ")");
        start = eol;
    }
    TextCursor cur(bytes, start, 1, name);
    if (cur.expect("'FPFH'") != "FPFH") cur.fail("bad magic, expected 'FPFH'");
    const auto rows = cur.number<std::uint64_t>("row count");
    const auto dim = cur.number<std::uint64_t>("dimension");
    if (dim != kFpfhDimension)
        throw UnsupportedFeature(name, ParseError::Unit::kLine, cur.line(),
                                 "feature dimension " + std::to_string(dim) + " is not supported");
    if (rows > (cur.remaining() / 2 + 1) / kFpfhDimension) cur.fail("row count exceeds what the file can hold");

    FeatureMatrix f(static_cast<Eigen::Index>(rows), kFpfhDimension);
    for (Eigen::Index r = 0; r < f.rows(); ++r)
        for (int c = 0; c < kFpfhDimension; ++c) f(r, c) = cur.number<double>("feature value");
    if (!cur.at_end()) cur.fail("unexpected data after the last row");
    return f;
}

std::string format_feature(const FeatureMatrix& feature) {
    std::string out = "# r3d-feature " + std::to_string(kFeatureVersion) + "\nFPFH " + std::to_string(feature.rows()) +
                      " " + std::to_string(kFpfhDimension) + "\n";
    for (Eigen::Index r = 0; r < feature.rows(); ++r) {
        for (int c = 0; c < kFpfhDimension; ++c) {
            if (c) out += ' ';
            append_number(out, feature(r, c));
        }
        out += '\n';
    }
    return out;
}

}  // namespace r3d::io
