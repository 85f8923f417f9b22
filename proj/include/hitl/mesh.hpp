#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "hitl/error.hpp"

namespace hitl {

using Vec3 = Eigen::Vector3d;
using Face = std::array<std::uint32_t, 3>;

struct BoundingBox {
    Vec3 min = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 max = Vec3::Constant(-std::numeric_limits<double>::infinity());

    Vec3 center() const { return 0.5 * (min + max); }
    Vec3 extent() const { return max - min; }
    double diagonal() const { return extent().norm(); }
};

/// Indexed triangle mesh. `face_valid` is either empty (every face valid)
/// or holds one flag per face; the decimator uses it to mark flipped faces.
struct TriangleMesh {
    std::vector<Vec3> vertices;
    std::vector<Face> faces;
    std::vector<bool> face_valid;

    std::size_t vertex_count() const { return vertices.size(); }
    std::size_t face_count() const { return faces.size(); }

    BoundingBox bounds() const {
        BoundingBox box;
        for (const auto& v : vertices) {
            box.min = box.min.cwiseMin(v);
            box.max = box.max.cwiseMax(v);
        }
        return box;
    }

    Vec3 face_normal(std::size_t f) const {
        const auto& t = faces[f];
        return (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]);
    }

    double face_area(std::size_t f) const { return 0.5 * face_normal(f).norm(); }

    bool operator==(const TriangleMesh&) const = default;
};

/// Throws MeshError unless the mesh satisfies the structural invariants:
/// at least one face, indices in range, no repeated index within a face,
/// finite coordinates.
inline void validate(const TriangleMesh& mesh) {
    if (mesh.faces.empty()) throw MeshError("mesh has no faces");
    if (!mesh.face_valid.empty() && mesh.face_valid.size() != mesh.faces.size())
        throw MeshError("face_valid size does not match face count");
    const auto n = mesh.vertices.size();
    for (std::size_t i = 0; i < mesh.faces.size(); ++i) {
        const auto& f = mesh.faces[i];
        for (auto idx : f)
            if (idx >= n)
                throw MeshError("face " + std::to_string(i) + " references vertex " +
                                std::to_string(idx) + " of " + std::to_string(n));
        if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2])
            throw MeshError("face " + std::to_string(i) + " is degenerate");
    }
    for (const auto& v : mesh.vertices)
        if (!v.allFinite()) throw MeshError("non-finite vertex coordinate");
}

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split_ws(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
        std::size_t j = i;
        while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
        if (j > i) out.push_back(s.substr(i, j - i));
        i = j;
    }
    return out;
}

inline double parse_double(std::string_view tok, std::size_t line) {
    // std::from_chars for double is available in libstdc++ >= 11.
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size())
        throw ParseError(line, "malformed number '" + std::string(tok) + "'");
    if (!std::isfinite(v)) throw ParseError(line, "non-finite coordinate");
    return v;
}

} // namespace detail

/// Reads ASCII OBJ `v` and `f` records. Polygons are fan-triangulated;
/// `f` entries may use the `v/vt/vn` forms and negative (relative) indices.
/// Everything else (vt, vn, groups, materials) is ignored.
inline TriangleMesh load_obj(std::istream& in) {
    TriangleMesh mesh;
    std::string raw;
    std::size_t line_no = 0;
    std::vector<std::uint32_t> poly;
    while (std::getline(in, raw)) {
        ++line_no;
        auto line = detail::trim(raw);
        if (auto hash = line.find('#'); hash != std::string_view::npos) line = detail::trim(line.substr(0, hash));
        if (line.empty()) continue;
        auto toks = detail::split_ws(line);
        if (toks[0] == "v") {
            if (toks.size() < 4) throw ParseError(line_no, "vertex record needs 3 coordinates");
            mesh.vertices.emplace_back(detail::parse_double(toks[1], line_no),
                                       detail::parse_double(toks[2], line_no),
                                       detail::parse_double(toks[3], line_no));
        } else if (toks[0] == "f") {
            if (toks.size() < 4) throw ParseError(line_no, "face record needs at least 3 vertices");
            poly.clear();
            for (std::size_t k = 1; k < toks.size(); ++k) {
                auto tok = toks[k];
                auto slash = tok.find('/');
                auto idx_tok = tok.substr(0, slash);
                long long idx = 0;
                auto [ptr, ec] = std::from_chars(idx_tok.data(), idx_tok.data() + idx_tok.size(), idx);
                if (ec != std::errc() || ptr != idx_tok.data() + idx_tok.size() || idx == 0)
                    throw ParseError(line_no, "malformed face index '" + std::string(tok) + "'");
                const auto nv = static_cast<long long>(mesh.vertices.size());
                long long resolved = idx > 0 ? idx - 1 : nv + idx;
                if (resolved < 0 || resolved >= nv)
                    throw ParseError(line_no, "face index " + std::to_string(idx) + " out of range (" +
                                                  std::to_string(nv) + " vertices)");
                poly.push_back(static_cast<std::uint32_t>(resolved));
            }
            for (std::size_t k = 1; k + 1 < poly.size(); ++k) {
                Face f{poly[0], poly[k], poly[k + 1]};
                if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2])
                    throw ParseError(line_no, "degenerate face (repeated vertex)");
                mesh.faces.push_back(f);
            }
        }
    }
    if (mesh.faces.empty()) throw ParseError(line_no, "no faces");
    return mesh;
}

inline TriangleMesh load_obj_string(std::string_view text) {
    std::istringstream in{std::string(text)};
    return load_obj(in);
}

inline void write_obj(std::ostream& out, const TriangleMesh& mesh) {
    char buf[96];
    for (const auto& v : mesh.vertices) {
        std::snprintf(buf, sizeof buf, "v %.17g %.17g %.17g\n", v.x(), v.y(), v.z());
        out << buf;
    }
    for (const auto& f : mesh.faces) out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
}

inline std::string to_obj_string(const TriangleMesh& mesh) {
    std::ostringstream out;
    write_obj(out, mesh);
    return out.str();
}

} // namespace hitl
