#include "r3d/error.h"

namespace r3d {

namespace {
std::string format_location(const std::string& path, ParseError::Unit unit,
                            std::uint64_t location, const std::string& what) {
    const char* label = unit == ParseError::Unit::kLine ? "line " : "byte ";
    return path + ":" + label + std::to_string(location) + ": " + what;
}
}  // namespace

ParseError::ParseError(const std::string& path, Unit unit, std::uint64_t location,
                       const std::string& what)
    : Error(format_location(path, unit, location, what)), unit_(unit), location_(location) {}

}  // namespace r3d
