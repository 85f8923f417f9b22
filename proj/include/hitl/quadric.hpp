#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SVD>

#include "hitl/mesh.hpp"

namespace hitl {

/// Symmetric 4x4 error quadric. Q(p) = [p;1]^T A [p;1] is a weighted sum of
/// squared distances from p to a set of planes.
class Quadric {
public:
    Quadric() : m_(Eigen::Matrix4d::Zero()) {}
    explicit Quadric(const Eigen::Matrix4d& m) : m_(m) {}

    /// Fundamental quadric of the plane n.x + d = 0 (n need not be unit; it
    /// is normalized here), scaled by weight.
    static Quadric plane(const Vec3& normal, double d, double weight = 1.0) {
        const double len = normal.norm();
        if (len == 0.0) return {};
        Eigen::Vector4d p(normal.x() / len, normal.y() / len, normal.z() / len, d / len);
        return Quadric(weight * p * p.transpose());
    }

    static Quadric plane_through(const Vec3& point, const Vec3& normal, double weight = 1.0) {
        return plane(normal, -normal.dot(point), weight);
    }

    double evaluate(const Vec3& p) const {
        Eigen::Vector4d h(p.x(), p.y(), p.z(), 1.0);
        return h.dot(m_ * h);
    }

    double evaluate(const Eigen::Vector4d& h) const { return h.dot(m_ * h); }

    Quadric& operator+=(const Quadric& o) {
        m_ += o.m_;
        return *this;
    }
    friend Quadric operator+(Quadric a, const Quadric& b) { return a += b; }
    friend Quadric operator*(double s, const Quadric& q) { return Quadric(s * q.m_); }

    const Eigen::Matrix4d& matrix() const { return m_; }

    /// Minimizer of Q, or nothing when the 3x3 block's condition estimate
    /// exceeds max_condition.
    bool minimizer(Vec3& out, double max_condition = 1e12) const {
        const Eigen::Matrix3d a = m_.topLeftCorner<3, 3>();
        const Vec3 b = m_.topRightCorner<3, 1>();
        Eigen::JacobiSVD<Eigen::Matrix3d> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
        const auto& s = svd.singularValues();
        if (s(0) <= 0.0 || s(2) <= 0.0 || s(0) / s(2) > max_condition) return false;
        out = svd.solve(-b);
        return out.allFinite();
    }

private:
    Eigen::Matrix4d m_;
};

/// Per-face weights blending unit weight (0) and area relative to the mean
/// face area (1).
inline std::vector<double> face_weights(const TriangleMesh& mesh, double area_weighting) {
    std::vector<double> area(mesh.face_count());
    for (std::size_t f = 0; f < area.size(); ++f) area[f] = mesh.face_area(f);
    const double total = std::accumulate(area.begin(), area.end(), 0.0);
    const double mean = area.empty() ? 0.0 : total / static_cast<double>(area.size());
    std::vector<double> w(area.size());
    for (std::size_t f = 0; f < area.size(); ++f)
        w[f] = (1.0 - area_weighting) + area_weighting * (mean > 0.0 ? area[f] / mean : 1.0);
    return w;
}

inline Quadric face_quadric(const TriangleMesh& mesh, std::size_t f, double weight = 1.0) {
    return Quadric::plane_through(mesh.vertices[mesh.faces[f][0]], mesh.face_normal(f), weight);
}

/// Sum of the plane quadrics of all faces incident to `vertex`.
inline Quadric vertex_quadric(const TriangleMesh& mesh, std::uint32_t vertex, double area_weighting) {
    if (vertex >= mesh.vertex_count()) throw MeshError("vertex index out of range");
    const auto weights = face_weights(mesh, area_weighting);
    Quadric q;
    bool incident = false;
    for (std::size_t f = 0; f < mesh.face_count(); ++f) {
        const auto& t = mesh.faces[f];
        if (t[0] == vertex || t[1] == vertex || t[2] == vertex) {
            q += face_quadric(mesh, f, weights[f]);
            incident = true;
        }
    }
    if (!incident) throw MeshError("isolated vertex " + std::to_string(vertex) + " has no incident faces");
    return q;
}

} // namespace hitl
