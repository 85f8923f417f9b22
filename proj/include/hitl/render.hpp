#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <string_view>
#include <vector>

#include "hitl/mesh.hpp"

namespace hitl {

enum class View { front, back, left, right, top };

inline constexpr std::array<View, 5> kCanonicalViews{View::front, View::back, View::left, View::right, View::top};

inline std::string_view view_name(View v) {
    switch (v) {
    case View::front: return "front";
    case View::back: return "back";
    case View::left: return "left";
    case View::right: return "right";
    case View::top: return "top";
    }
    return "?";
}

/// Row-major luminance image, values in [0,1], row 0 at the top.
struct RenderImage {
    int width = 0;
    int height = 0;
    std::vector<double> luminance;

    double at(int x, int y) const { return luminance[static_cast<std::size_t>(y) * width + x]; }
    double& at(int x, int y) { return luminance[static_cast<std::size_t>(y) * width + x]; }

    bool operator==(const RenderImage&) const = default;
};

/// Orthographic camera basis. `forward` is the viewing direction.
struct Camera {
    Vec3 right, up, forward;
};

inline Camera camera_for(View v) {
    switch (v) {
    case View::front: return {Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, -1)};
    case View::back: return {Vec3(-1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)};
    case View::left: return {Vec3(0, 0, 1), Vec3(0, 1, 0), Vec3(1, 0, 0)};
    case View::right: return {Vec3(0, 0, -1), Vec3(0, 1, 0), Vec3(-1, 0, 0)};
    case View::top: return {Vec3(1, 0, 0), Vec3(0, 0, -1), Vec3(0, -1, 0)};
    }
    return {};
}

/// Region of model space mapped onto the image: a cube of half-size
/// `half_extent` around `center`.
struct Framing {
    Vec3 center = Vec3::Zero();
    double half_extent = 1.0;
};

/// Frames a mesh by its bounding box with a 5% margin. Uses the largest box
/// side so every view shares one scale.
inline Framing fit_framing(const TriangleMesh& mesh) {
    const auto box = mesh.bounds();
    const double side = box.extent().maxCoeff();
    return {box.center(), side > 0.0 ? 0.525 * side : 1.0};
}

struct ShadingModel {
    double ambient = 0.1;
    double diffuse = 0.9;
};

/// Rasterized frame: luminance plus the index of the face seen at each
/// pixel (-1 for background).
struct Frame {
    RenderImage image;
    std::vector<std::int32_t> face_id;
};

/// Z-buffered flat-shaded orthographic rasterization with a headlight along
/// the viewing direction. Pixel (x, y) samples its center.
inline Frame rasterize(const TriangleMesh& mesh, View view, int size, const Framing& framing,
                       const ShadingModel& shading = {}) {
    if (mesh.faces.empty()) throw MeshError("cannot render an empty mesh");
    if (size < 16) throw Error("render size must be at least 16 pixels");
    const Camera cam = camera_for(view);
    const std::size_t npix = static_cast<std::size_t>(size) * size;
    Frame frame;
    frame.image.width = frame.image.height = size;
    frame.image.luminance.assign(npix, 0.0);
    frame.face_id.assign(npix, -1);
    std::vector<double> depth(npix, std::numeric_limits<double>::infinity());

    const double scale = 0.5 * size / framing.half_extent;
    struct Projected {
        double x, y, z;
    };
    std::vector<Projected> proj(mesh.vertices.size());
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
        const Vec3 d = mesh.vertices[i] - framing.center;
        proj[i] = {0.5 * size + d.dot(cam.right) * scale, 0.5 * size - d.dot(cam.up) * scale, d.dot(cam.forward)};
    }

    for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
        const auto& t = mesh.faces[f];
        const auto& a = proj[t[0]];
        const auto& b = proj[t[1]];
        const auto& c = proj[t[2]];
        const double area = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
        if (area == 0.0 || !std::isfinite(area)) continue;

        Vec3 n = mesh.face_normal(f);
        const double len = n.norm();
        const double lambert = len > 0.0 ? std::max(0.0, -n.dot(cam.forward) / len) : 0.0;
        const double lum = std::clamp(shading.ambient + shading.diffuse * lambert, 0.0, 1.0);

        const int x0 = std::max(0, static_cast<int>(std::floor(std::min({a.x, b.x, c.x}))));
        const int x1 = std::min(size - 1, static_cast<int>(std::ceil(std::max({a.x, b.x, c.x}))));
        const int y0 = std::max(0, static_cast<int>(std::floor(std::min({a.y, b.y, c.y}))));
        const int y1 = std::min(size - 1, static_cast<int>(std::ceil(std::max({a.y, b.y, c.y}))));
        for (int y = y0; y <= y1; ++y) {
            const double py = y + 0.5;
            for (int x = x0; x <= x1; ++x) {
                const double px = x + 0.5;
                double w0 = ((b.x - px) * (c.y - py) - (b.y - py) * (c.x - px)) / area;
                double w1 = ((c.x - px) * (a.y - py) - (c.y - py) * (a.x - px)) / area;
                double w2 = ((a.x - px) * (b.y - py) - (a.y - py) * (b.x - px)) / area;
                if (w0 < 0.0 || w1 < 0.0 || w2 < 0.0) continue;
                const double z = w0 * a.z + w1 * b.z + w2 * c.z;
                const std::size_t idx = static_cast<std::size_t>(y) * size + x;
                if (z < depth[idx]) {
                    depth[idx] = z;
                    frame.image.luminance[idx] = lum;
                    frame.face_id[idx] = static_cast<std::int32_t>(f);
                }
            }
        }
    }
    return frame;
}

inline RenderImage render(const TriangleMesh& mesh, View view, int size, const Framing& framing) {
    return rasterize(mesh, view, size, framing).image;
}

inline RenderImage render(const TriangleMesh& mesh, View view, int size) {
    if (mesh.faces.empty()) throw MeshError("cannot render an empty mesh");
    return render(mesh, view, size, fit_framing(mesh));
}

/// Binary 8-bit PGM (P5) dump for debugging.
inline void write_pgm(std::ostream& out, const RenderImage& img) {
    out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
    for (double v : img.luminance) out.put(static_cast<char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
}

} // namespace hitl
