#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <queue>
#include <utility>
#include <vector>

#include "hitl/mesh.hpp"
#include "hitl/params.hpp"
#include "hitl/quadric.hpp"

namespace hitl {

struct ReductionResult {
    TriangleMesh mesh;
    double reduction_ratio = 0.0;
    bool faulty = false;
    std::size_t flipped_faces = 0;
    std::chrono::nanoseconds elapsed{0};
};

/// Scale factors that turn the [0,1] parameter slots into collapse-cost terms.
/// Quadric errors are in squared model units; every penalty is too.
struct CollapseTuning {
    double boundary_plane_weight = 100.0; // x boundary_weight
    double feature_plane_weight = 10.0;
    double seam_plane_weight = 100.0;     // x seam_preservation_weight
    double min_feature_angle_deg = 15.0;  // feature_angle = 0
    double max_feature_angle_deg = 165.0; // feature_angle = 1
    double flip_cost = 1.0;               // x normal_flip_penalty x bbox_diag^2 per flipped face
    double aspect_cost = 0.01;            // x aspect_ratio_penalty x edge_len^2
    double length_cost = 0.01;            // x edge_length_regularizer x edge_len^2
    double max_condition = 1e12;
    double faulty_fraction = 0.01;
};

namespace detail {

// 4*sqrt(3)*area / sum of squared edge lengths; 1 for equilateral, 0 for slivers.
inline double triangle_quality(const Vec3& a, const Vec3& b, const Vec3& c) {
    const double l = (b - a).squaredNorm() + (c - b).squaredNorm() + (a - c).squaredNorm();
    if (l <= 0.0) return 0.0;
    return 2.0 * std::numbers::sqrt3 * (b - a).cross(c - a).norm() / l;
}

class EdgeCollapser {
public:
    EdgeCollapser(const TriangleMesh& mesh, const ReductionParams& params, const CollapseTuning& tuning)
        : params_(params), tuning_(tuning), pos_(mesh.vertices), faces_(mesh.faces),
          face_alive_(mesh.face_count(), 1), vertex_alive_(mesh.vertex_count(), 1),
          version_(mesh.vertex_count(), 0), vfaces_(mesh.vertex_count()), quadric_(mesh.vertex_count()),
          orig_normal_(mesh.face_count()), alive_faces_(mesh.face_count()) {
        const auto box = mesh.bounds();
        diag2_ = box.extent().squaredNorm();

        for (std::uint32_t f = 0; f < faces_.size(); ++f) {
            for (auto v : faces_[f]) vfaces_[v].push_back(f);
            const Vec3 n = mesh.face_normal(f);
            const double len = n.norm();
            orig_normal_[f] = len > 0.0 ? Vec3(n / len) : Vec3::Zero();
        }

        const auto weights = face_weights(mesh, params[Slot::quadric_area_weighting]);
        for (std::size_t f = 0; f < faces_.size(); ++f) {
            const auto q = face_quadric(mesh, f, weights[f]);
            for (auto v : faces_[f]) quadric_[v] += q;
        }

        add_edge_constraints(mesh, weights);
        add_seam_constraints(mesh, box);

        std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
        for (const auto& f : faces_)
            for (int k = 0; k < 3; ++k) {
                auto a = f[k], b = f[(k + 1) % 3];
                edges.emplace_back(std::min(a, b), std::max(a, b));
            }
        std::sort(edges.begin(), edges.end());
        edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
        for (auto [a, b] : edges) push(a, b);
    }

    void run(std::size_t target_faces) {
        while (alive_faces_ > target_faces && !heap_.empty()) {
            const Entry e = heap_.top();
            heap_.pop();
            if (!vertex_alive_[e.a] || !vertex_alive_[e.b]) continue;
            if (version_[e.a] != e.version_a || version_[e.b] != e.version_b) continue;
            if (!collapse_allowed(e.a, e.b)) continue;
            collapse(e.a, e.b, e.target);
        }
    }

    ReductionResult finish(std::size_t original_faces) const {
        ReductionResult result;
        std::vector<std::uint32_t> remap(pos_.size(), UINT32_MAX);
        std::vector<char> used(pos_.size(), 0);
        for (std::size_t f = 0; f < faces_.size(); ++f)
            if (face_alive_[f])
                for (auto v : faces_[f]) used[v] = 1;
        for (std::uint32_t v = 0; v < pos_.size(); ++v)
            if (used[v]) {
                remap[v] = static_cast<std::uint32_t>(result.mesh.vertices.size());
                result.mesh.vertices.push_back(pos_[v]);
            }
        for (std::size_t f = 0; f < faces_.size(); ++f) {
            if (!face_alive_[f]) continue;
            const auto& t = faces_[f];
            result.mesh.faces.push_back({remap[t[0]], remap[t[1]], remap[t[2]]});
            const bool flipped = is_flipped(f, pos_[t[0]], pos_[t[1]], pos_[t[2]]);
            result.mesh.face_valid.push_back(!flipped);
            if (flipped) ++result.flipped_faces;
        }
        const auto out = result.mesh.face_count();
        result.reduction_ratio = static_cast<double>(original_faces - out) / static_cast<double>(original_faces);
        result.faulty = static_cast<double>(result.flipped_faces) > tuning_.faulty_fraction * static_cast<double>(out);
        return result;
    }

private:
    struct Entry {
        double cost;
        std::uint32_t a, b; // a < b
        std::uint32_t version_a, version_b;
        Vec3 target;
    };
    struct Later {
        bool operator()(const Entry& x, const Entry& y) const {
            if (x.cost != y.cost) return x.cost > y.cost;
            if (x.a != y.a) return x.a > y.a;
            return x.b > y.b;
        }
    };

    void add_edge_constraints(const TriangleMesh& mesh, const std::vector<double>& weights) {
        std::map<std::pair<std::uint32_t, std::uint32_t>, std::vector<std::uint32_t>> edge_faces;
        for (std::uint32_t f = 0; f < faces_.size(); ++f)
            for (int k = 0; k < 3; ++k) {
                auto a = faces_[f][k], b = faces_[f][(k + 1) % 3];
                edge_faces[{std::min(a, b), std::max(a, b)}].push_back(f);
            }
        const double boundary_w = tuning_.boundary_plane_weight * params_[Slot::boundary_weight];
        const double angle_deg = tuning_.min_feature_angle_deg +
                                 (tuning_.max_feature_angle_deg - tuning_.min_feature_angle_deg) *
                                     params_[Slot::feature_angle];
        const double cos_threshold = std::cos(angle_deg * std::numbers::pi / 180.0);

        auto constrain = [&](std::uint32_t a, std::uint32_t b, std::uint32_t f, double w) {
            const Vec3 edge = mesh.vertices[b] - mesh.vertices[a];
            const Vec3 n = edge.cross(orig_normal_[f]);
            const auto q = Quadric::plane_through(mesh.vertices[a], n, w * weights[f]);
            quadric_[a] += q;
            quadric_[b] += q;
        };

        for (const auto& [edge, fs] : edge_faces) {
            if (fs.size() == 1) {
                if (boundary_w > 0.0) constrain(edge.first, edge.second, fs[0], boundary_w);
            } else if (fs.size() == 2) {
                // dihedral angle between face normals above the threshold marks a hard edge
                if (orig_normal_[fs[0]].dot(orig_normal_[fs[1]]) < cos_threshold) {
                    constrain(edge.first, edge.second, fs[0], tuning_.feature_plane_weight);
                    constrain(edge.first, edge.second, fs[1], tuning_.feature_plane_weight);
                }
            }
        }
    }

    // Vertices on the bounding-box mid-plane x = c stay on it.
    void add_seam_constraints(const TriangleMesh& mesh, const BoundingBox& box) {
        const double w = tuning_.seam_plane_weight * params_[Slot::seam_preservation_weight];
        if (w <= 0.0) return;
        const double cx = box.center().x();
        const double tol = 1e-6 * std::sqrt(diag2_);
        const auto q = Quadric::plane(Vec3::UnitX(), -cx, w);
        for (std::size_t v = 0; v < mesh.vertex_count(); ++v)
            if (std::abs(mesh.vertices[v].x() - cx) <= tol && !vfaces_[v].empty()) quadric_[v] += q;
    }

    bool is_flipped(std::size_t f, const Vec3& a, const Vec3& b, const Vec3& c) const {
        const Vec3 n = (b - a).cross(c - a);
        if (n.squaredNorm() <= 1e-24 * diag2_ * diag2_) return true;
        return n.dot(orig_normal_[f]) < 0.0;
    }

    std::vector<std::uint32_t> neighbors(std::uint32_t v) const {
        std::vector<std::uint32_t> out;
        for (auto f : vfaces_[v])
            for (auto w : faces_[f])
                if (w != v) out.push_back(w);
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }

    bool on_boundary(std::uint32_t v) const {
        std::vector<std::uint32_t> around;
        for (auto f : vfaces_[v])
            for (auto w : faces_[f])
                if (w != v) around.push_back(w);
        std::sort(around.begin(), around.end());
        for (std::size_t i = 0; i < around.size();) {
            std::size_t j = i;
            while (j < around.size() && around[j] == around[i]) ++j;
            if (j - i == 1) return true;
            i = j;
        }
        return false;
    }

    // Link condition plus the guards that keep the surface manifold.
    bool collapse_allowed(std::uint32_t u, std::uint32_t v) const {
        std::vector<std::uint32_t> opposite;
        for (auto f : vfaces_[u]) {
            const auto& t = faces_[f];
            if (t[0] != v && t[1] != v && t[2] != v) continue;
            for (auto w : t)
                if (w != u && w != v) opposite.push_back(w);
        }
        if (opposite.empty() || opposite.size() > 2) return false;
        if (alive_faces_ < 4 + opposite.size()) return false;
        std::sort(opposite.begin(), opposite.end());

        const auto nu = neighbors(u);
        const auto nv = neighbors(v);
        std::vector<std::uint32_t> common;
        std::set_intersection(nu.begin(), nu.end(), nv.begin(), nv.end(), std::back_inserter(common));
        if (common != opposite) return false;
        if (nu.size() + nv.size() - common.size() < 5) return false;
        if (opposite.size() == 2 && on_boundary(u) && on_boundary(v)) return false;
        return true;
    }

    std::optional<std::pair<double, Vec3>> collapse_cost(std::uint32_t u, std::uint32_t v) const {
        if (!collapse_allowed(u, v)) return std::nullopt;
        const Quadric q = quadric_[u] + quadric_[v];
        const Vec3 mid = 0.5 * (pos_[u] + pos_[v]);
        Vec3 optimal = mid;
        if (!q.minimizer(optimal, tuning_.max_condition)) optimal = mid;
        const double blend = params_[Slot::placement_policy_blend];
        const Vec3 target = (1.0 - blend) * mid + blend * optimal;

        const double error = std::max(0.0, q.evaluate(target));
        std::size_t flips = 0;
        double worst_quality = 1.0;
        auto visit = [&](std::uint32_t moving) {
            for (auto f : vfaces_[moving]) {
                const auto& t = faces_[f];
                if ((t[0] == u || t[1] == u || t[2] == u) && (t[0] == v || t[1] == v || t[2] == v)) continue;
                std::array<Vec3, 3> p{pos_[t[0]], pos_[t[1]], pos_[t[2]]};
                for (int k = 0; k < 3; ++k)
                    if (t[k] == moving) p[k] = target;
                if (is_flipped(f, p[0], p[1], p[2])) ++flips;
                worst_quality = std::min(worst_quality, triangle_quality(p[0], p[1], p[2]));
            }
        };
        visit(u);
        visit(v);

        const double len2 = (pos_[u] - pos_[v]).squaredNorm();
        const double cost = error +
                            tuning_.flip_cost * params_[Slot::normal_flip_penalty] * diag2_ * static_cast<double>(flips) +
                            tuning_.aspect_cost * params_[Slot::aspect_ratio_penalty] * len2 * (1.0 - worst_quality) +
                            tuning_.length_cost * params_[Slot::edge_length_regularizer] * len2;
        return std::make_pair(cost, target);
    }

    void push(std::uint32_t a, std::uint32_t b) {
        if (a > b) std::swap(a, b);
        if (auto c = collapse_cost(a, b)) heap_.push(Entry{c->first, a, b, version_[a], version_[b], c->second});
    }

    // Merges b into a (a < b); a takes the new position.
    void collapse(std::uint32_t a, std::uint32_t b, const Vec3& target) {
        pos_[a] = target;
        quadric_[a] += quadric_[b];
        for (auto f : vfaces_[b]) {
            auto& t = faces_[f];
            if (t[0] == a || t[1] == a || t[2] == a) {
                face_alive_[f] = 0;
                --alive_faces_;
            } else {
                for (auto& w : t)
                    if (w == b) w = a;
                vfaces_[a].push_back(f);
            }
        }
        vfaces_[b].clear();
        vertex_alive_[b] = 0;

        std::vector<std::uint32_t> ring = neighbors_with_dead(a);
        for (auto w : ring) purge(w);
        purge(a);
        ring = neighbors(a);

        ++version_[a];
        for (auto w : ring) ++version_[w];

        std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
        ring.push_back(a);
        for (auto w : ring)
            for (auto x : neighbors(w)) edges.emplace_back(std::min(w, x), std::max(w, x));
        std::sort(edges.begin(), edges.end());
        edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
        for (auto [x, y] : edges) push(x, y);
    }

    std::vector<std::uint32_t> neighbors_with_dead(std::uint32_t v) const {
        std::vector<std::uint32_t> out;
        for (auto f : vfaces_[v])
            for (auto w : faces_[f])
                if (w != v) out.push_back(w);
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }

    void purge(std::uint32_t v) {
        auto& fs = vfaces_[v];
        fs.erase(std::remove_if(fs.begin(), fs.end(), [&](std::uint32_t f) { return !face_alive_[f]; }), fs.end());
    }

    ReductionParams params_;
    CollapseTuning tuning_;
    std::vector<Vec3> pos_;
    std::vector<Face> faces_;
    std::vector<char> face_alive_;
    std::vector<char> vertex_alive_;
    std::vector<std::uint32_t> version_;
    std::vector<std::vector<std::uint32_t>> vfaces_;
    std::vector<Quadric> quadric_;
    std::vector<Vec3> orig_normal_;
    std::size_t alive_faces_;
    double diag2_ = 0.0;
    std::priority_queue<Entry, std::vector<Entry>, Later> heap_;
};

} // namespace detail

/// Face count the decimator aims for: round((1 - fraction) * faces).
inline std::size_t target_face_count(std::size_t original_faces, const ReductionParams& params) {
    const double keep = 1.0 - target_fraction(params[Slot::target_ratio]);
    return static_cast<std::size_t>(std::llround(keep * static_cast<double>(original_faces)));
}

/// Greedy quadric-error edge-collapse decimation. Deterministic for a given
/// (mesh, params): ties in the collapse queue break on the vertex indices.
inline ReductionResult decimate(const TriangleMesh& mesh, const ReductionParams& params,
                                const CollapseTuning& tuning = {}) {
    const auto start = std::chrono::steady_clock::now();
    validate(mesh);
    if (mesh.face_count() < 4) throw MeshError("refusing to decimate a mesh with fewer than 4 faces");

    const auto target = target_face_count(mesh.face_count(), params);
    if (target >= mesh.face_count()) {
        ReductionResult r;
        r.mesh = mesh;
        r.mesh.face_valid.assign(mesh.face_count(), true);
        r.elapsed = std::chrono::steady_clock::now() - start;
        return r;
    }
    detail::EdgeCollapser collapser(mesh, params, tuning);
    collapser.run(target);
    auto result = collapser.finish(mesh.face_count());
    result.elapsed = std::chrono::steady_clock::now() - start;
    return result;
}

} // namespace hitl
