#pragma once

#include <array>
#include <vector>

namespace r3d::mc {

// Cube corner c sits at offset (c & 1, (c >> 1) & 1, (c >> 2) & 1).
struct Edge {
    int a;
    int b;
    int axis;  // b = a + unit step along axis
};

const std::array<Edge, 12>& edges();

/// Triangles of one cube configuration as triples of edge indices.
/// Bit c of the configuration is set when corner c is inside (tsdf < 0).
const std::vector<std::array<int, 3>>& triangles(int configuration);

}  // namespace r3d::mc
