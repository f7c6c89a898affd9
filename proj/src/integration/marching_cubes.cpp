#include "marching_cubes.h"

#include <stdexcept>

namespace r3d::mc {

// The 256-case table is derived from the cube faces instead of being
// transcribed. On every face, each maximal run of inside corners (in
// counter-clockwise order seen from outside the cube) is cut off by one
// segment from its exit crossing to its entry crossing. Faces with two
// diagonal inside corners therefore keep those corners apart, and since the
// rule only looks at the face, both cells sharing a face cut it identically.
// Chaining the segments gives closed loops, which are fanned into triangles.

namespace {

std::array<Edge, 12> make_edges() {
    std::array<Edge, 12> out{};
    int n = 0;
    for (int a = 0; a < 8; ++a)
        for (int axis = 0; axis < 3; ++axis)
            if (!(a & (1 << axis))) out[n++] = Edge{a, a | (1 << axis), axis};
    return out;
}

int edge_between(int a, int b) {
    if (a > b) std::swap(a, b);
    const auto& e = edges();
    for (int k = 0; k < 12; ++k)
        if (e[k].a == a && e[k].b == b) return k;
    throw std::logic_error("not a cube edge");
}

std::array<std::array<int, 4>, 6> make_faces() {
    std::array<std::array<int, 4>, 6> faces{};
    const int uv[3][2] = {{1, 2}, {2, 0}, {0, 1}};
    const int ccw[4][2] = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
    const int cw[4][2] = {{0, 0}, {0, 1}, {1, 1}, {1, 0}};
    int f = 0;
    for (int axis = 0; axis < 3; ++axis) {
        for (int side = 0; side < 2; ++side) {
            const auto& order = side ? ccw : cw;
            for (int q = 0; q < 4; ++q)
                faces[f][q] = (side << axis) | (order[q][0] << uv[axis][0]) | (order[q][1] << uv[axis][1]);
            ++f;
        }
    }
    return faces;
}

std::vector<std::array<int, 3>> triangulate(int config) {
    static const auto faces = make_faces();
    std::array<int, 12> next;
    next.fill(-1);
    for (const auto& q : faces) {
        bool in[4];
        for (int i = 0; i < 4; ++i) in[i] = (config >> q[i]) & 1;
        for (int i = 0; i < 4; ++i) {
            if (!in[i] || in[(i + 3) % 4]) continue;
            int k = i;
            while (in[(k + 1) % 4]) k = (k + 1) % 4;
            const int entry = edge_between(q[(i + 3) % 4], q[i]);
            const int exit = edge_between(q[k], q[(k + 1) % 4]);
            if (next[exit] != -1) throw std::logic_error("marching cubes edge used twice");
            next[exit] = entry;
        }
    }
    std::vector<std::array<int, 3>> tris;
    std::array<bool, 12> seen{};
    for (int start = 0; start < 12; ++start) {
        if (next[start] < 0 || seen[start]) continue;
        std::vector<int> loop;
        for (int e = start; !seen[e]; e = next[e]) {
            if (next[e] < 0) throw std::logic_error("open marching cubes loop");
            seen[e] = true;
            loop.push_back(e);
        }
        // Reverse the loop order so triangles face the positive side.
        for (std::size_t k = 1; k + 1 < loop.size(); ++k) tris.push_back({loop[0], loop[k + 1], loop[k]});
    }
    return tris;
}

}  // namespace

const std::array<Edge, 12>& edges() {
    static const std::array<Edge, 12> e = make_edges();
    return e;
}

const std::vector<std::array<int, 3>>& triangles(int configuration) {
    static const auto table = [] {
        std::array<std::vector<std::array<int, 3>>, 256> t;
        for (int c = 0; c < 256; ++c) t[c] = triangulate(c);
        return t;
    }();
    return table[configuration];
}

}  // namespace r3d::mc
