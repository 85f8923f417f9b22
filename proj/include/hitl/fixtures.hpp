#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hitl/mesh.hpp"

// Procedural test models. All are closed or cleanly bounded manifolds with
// outward (counter-clockwise) winding.
namespace hitl::fixtures {

/// Icosahedron subdivided `levels` times and projected to the unit sphere:
/// 20 * 4^levels faces (level 3 -> 1280).
inline TriangleMesh icosphere(int levels) {
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    TriangleMesh m;
    m.vertices = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                  {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
    for (auto& v : m.vertices) v.normalize();
    m.faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
               {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
               {3, 8, 9},  {4, 9, 5},  {2, 4, 11}, {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
    for (int l = 0; l < levels; ++l) {
        std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t> midpoint;
        auto mid = [&](std::uint32_t a, std::uint32_t b) {
            auto key = std::make_pair(std::min(a, b), std::max(a, b));
            if (auto it = midpoint.find(key); it != midpoint.end()) return it->second;
            const auto idx = static_cast<std::uint32_t>(m.vertices.size());
            m.vertices.push_back((0.5 * (m.vertices[a] + m.vertices[b])).normalized());
            midpoint.emplace(key, idx);
            return idx;
        };
        std::vector<Face> next;
        next.reserve(m.faces.size() * 4);
        for (const auto& f : m.faces) {
            auto ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
            next.push_back({f[0], ab, ca});
            next.push_back({f[1], bc, ab});
            next.push_back({f[2], ca, bc});
            next.push_back({ab, bc, ca});
        }
        m.faces = std::move(next);
    }
    return m;
}

/// Torus around the y axis: 2 * rings * sides faces.
inline TriangleMesh torus(double major, double minor, std::uint32_t rings, std::uint32_t sides) {
    TriangleMesh m;
    for (std::uint32_t i = 0; i < rings; ++i) {
        const double u = 2.0 * std::numbers::pi * i / rings;
        for (std::uint32_t j = 0; j < sides; ++j) {
            const double v = 2.0 * std::numbers::pi * j / sides;
            const double r = major + minor * std::cos(v);
            m.vertices.emplace_back(r * std::cos(u), minor * std::sin(v), r * std::sin(u));
        }
    }
    auto at = [&](std::uint32_t i, std::uint32_t j) { return (i % rings) * sides + (j % sides); };
    for (std::uint32_t i = 0; i < rings; ++i)
        for (std::uint32_t j = 0; j < sides; ++j) {
            auto a = at(i, j), b = at(i + 1, j), c = at(i + 1, j + 1), d = at(i, j + 1);
            m.faces.push_back({a, d, c});
            m.faces.push_back({a, c, b});
        }
    return m;
}

/// Axis-aligned cube [-1,1]^3 with each side split into n x n quads:
/// 12 * n^2 faces, shared edge vertices welded.
inline TriangleMesh subdivided_cube(std::uint32_t n) {
    TriangleMesh m;
    std::map<std::array<long, 3>, std::uint32_t> index;
    auto vertex = [&](const Vec3& p) {
        std::array<long, 3> key{std::lround(p.x() * n * 2), std::lround(p.y() * n * 2), std::lround(p.z() * n * 2)};
        if (auto it = index.find(key); it != index.end()) return it->second;
        const auto idx = static_cast<std::uint32_t>(m.vertices.size());
        m.vertices.push_back(p);
        index.emplace(key, idx);
        return idx;
    };
    // (normal axis, sign): u x v = outward normal
    const std::array<std::array<Vec3, 3>, 6> sides{{
        {Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)},
        {Vec3(-1, 0, 0), Vec3(0, 0, 1), Vec3(0, 1, 0)},
        {Vec3(0, 1, 0), Vec3(0, 0, 1), Vec3(1, 0, 0)},
        {Vec3(0, -1, 0), Vec3(1, 0, 0), Vec3(0, 0, 1)},
        {Vec3(0, 0, 1), Vec3(1, 0, 0), Vec3(0, 1, 0)},
        {Vec3(0, 0, -1), Vec3(0, 1, 0), Vec3(1, 0, 0)},
    }};
    for (const auto& s : sides) {
        const Vec3& normal = s[0];
        const Vec3& du = s[1];
        const Vec3& dv = s[2];
        auto p = [&](std::uint32_t i, std::uint32_t j) {
            return vertex(normal + du * (-1.0 + 2.0 * i / n) + dv * (-1.0 + 2.0 * j / n));
        };
        for (std::uint32_t i = 0; i < n; ++i)
            for (std::uint32_t j = 0; j < n; ++j) {
                auto a = p(i, j), b = p(i + 1, j), c = p(i + 1, j + 1), d = p(i, j + 1);
                m.faces.push_back({a, b, c});
                m.faces.push_back({a, c, d});
            }
    }
    return m;
}

/// Open height field z = 0.15 sin(3x) cos(2y) over [-1,1]^2 (has a boundary).
inline TriangleMesh wave_grid(std::uint32_t n) {
    TriangleMesh m;
    for (std::uint32_t i = 0; i <= n; ++i)
        for (std::uint32_t j = 0; j <= n; ++j) {
            const double x = -1.0 + 2.0 * i / n, y = -1.0 + 2.0 * j / n;
            m.vertices.emplace_back(x, y, 0.15 * std::sin(3.0 * x) * std::cos(2.0 * y));
        }
    auto at = [&](std::uint32_t i, std::uint32_t j) { return i * (n + 1) + j; };
    for (std::uint32_t i = 0; i < n; ++i)
        for (std::uint32_t j = 0; j < n; ++j) {
            m.faces.push_back({at(i, j), at(i + 1, j), at(i + 1, j + 1)});
            m.faces.push_back({at(i, j), at(i + 1, j + 1), at(i, j + 1)});
        }
    return m;
}

/// Closed cylinder along y with fan caps: 2 * segments * (rings + 1) faces.
inline TriangleMesh capped_cylinder(std::uint32_t segments, std::uint32_t rings, double radius = 0.5,
                                    double height = 2.0) {
    TriangleMesh m;
    for (std::uint32_t r = 0; r <= rings; ++r) {
        const double y = -0.5 * height + height * r / rings;
        for (std::uint32_t s = 0; s < segments; ++s) {
            const double a = 2.0 * std::numbers::pi * s / segments;
            m.vertices.emplace_back(radius * std::cos(a), y, radius * std::sin(a));
        }
    }
    auto at = [&](std::uint32_t r, std::uint32_t s) { return r * segments + (s % segments); };
    for (std::uint32_t r = 0; r < rings; ++r)
        for (std::uint32_t s = 0; s < segments; ++s) {
            auto a = at(r, s), b = at(r, s + 1), c = at(r + 1, s + 1), d = at(r + 1, s);
            m.faces.push_back({a, c, b});
            m.faces.push_back({a, d, c});
        }
    const auto bottom = static_cast<std::uint32_t>(m.vertices.size());
    m.vertices.emplace_back(0.0, -0.5 * height, 0.0);
    const auto top = bottom + 1;
    m.vertices.emplace_back(0.0, 0.5 * height, 0.0);
    for (std::uint32_t s = 0; s < segments; ++s) {
        m.faces.push_back({bottom, at(0, s), at(0, s + 1)});
        m.faces.push_back({top, at(rings, s + 1), at(rings, s)});
    }
    return m;
}

/// Named bundled models used by the tools and the acceptance suite.
inline std::vector<std::string_view> names() {
    return {"icosphere", "torus", "cube", "wave", "cylinder"};
}

/// Small (<= 500 faces) variants for brute-force geometric checks.
inline TriangleMesh small(std::string_view name) {
    if (name == "icosphere") return icosphere(2);        // 320
    if (name == "torus") return torus(1.0, 0.35, 16, 12); // 384
    if (name == "cube") return subdivided_cube(6);       // 432
    if (name == "wave") return wave_grid(14);            // 392
    if (name == "cylinder") return capped_cylinder(24, 6); // 336
    throw Error("unknown fixture '" + std::string(name) + "'");
}

/// Denser variants for rendering and the optimization loop.
inline TriangleMesh standard(std::string_view name) {
    if (name == "icosphere") return icosphere(3);          // 1280
    if (name == "torus") return torus(1.0, 0.35, 40, 20);  // 1600
    if (name == "cube") return subdivided_cube(12);        // 1728
    if (name == "wave") return wave_grid(30);              // 1800
    if (name == "cylinder") return capped_cylinder(48, 12); // 1248
    throw Error("unknown fixture '" + std::string(name) + "'");
}

} // namespace hitl::fixtures
