#pragma once

#include <array>
#include <numeric>
#include <vector>

#include "hitl/render.hpp"

namespace hitl {

struct SsimOptions {
    int window = 8;
    double c1 = 0.01 * 0.01;
    double c2 = 0.03 * 0.03;
};

namespace detail {

// (w+1)x(h+1) summed-area table
inline std::vector<double> integral(const std::vector<double>& v, int w, int h) {
    std::vector<double> s(static_cast<std::size_t>(w + 1) * (h + 1), 0.0);
    for (int y = 0; y < h; ++y) {
        double row = 0.0;
        for (int x = 0; x < w; ++x) {
            row += v[static_cast<std::size_t>(y) * w + x];
            s[static_cast<std::size_t>(y + 1) * (w + 1) + x + 1] = s[static_cast<std::size_t>(y) * (w + 1) + x + 1] + row;
        }
    }
    return s;
}

inline double box_sum(const std::vector<double>& s, int w, int x, int y, int k) {
    const auto stride = static_cast<std::size_t>(w + 1);
    return s[(y + k) * stride + x + k] - s[y * stride + x + k] - s[(y + k) * stride + x] + s[y * stride + x];
}

} // namespace detail

/// Mean structural similarity over all k x k windows (stride 1, uniform
/// weights) of two luminance images in [0,1].
inline double ssim(const RenderImage& a, const RenderImage& b, const SsimOptions& opt = {}) {
    if (a.width != b.width || a.height != b.height) throw Error("ssim: image dimensions differ");
    const int w = a.width, h = a.height, k = opt.window;
    if (w < k || h < k) throw Error("ssim: image smaller than the window");

    const auto n = a.luminance.size();
    std::vector<double> aa(n), bb(n), ab(n);
    for (std::size_t i = 0; i < n; ++i) {
        aa[i] = a.luminance[i] * a.luminance[i];
        bb[i] = b.luminance[i] * b.luminance[i];
        ab[i] = a.luminance[i] * b.luminance[i];
    }
    const auto sa = detail::integral(a.luminance, w, h);
    const auto sb = detail::integral(b.luminance, w, h);
    const auto saa = detail::integral(aa, w, h);
    const auto sbb = detail::integral(bb, w, h);
    const auto sab = detail::integral(ab, w, h);

    const double inv = 1.0 / (k * k);
    double total = 0.0;
    for (int y = 0; y + k <= h; ++y)
        for (int x = 0; x + k <= w; ++x) {
            const double mu_a = detail::box_sum(sa, w, x, y, k) * inv;
            const double mu_b = detail::box_sum(sb, w, x, y, k) * inv;
            const double var_a = detail::box_sum(saa, w, x, y, k) * inv - mu_a * mu_a;
            const double var_b = detail::box_sum(sbb, w, x, y, k) * inv - mu_b * mu_b;
            const double cov = detail::box_sum(sab, w, x, y, k) * inv - mu_a * mu_b;
            const double num = (2.0 * mu_a * mu_b + opt.c1) * (2.0 * cov + opt.c2);
            const double den = (mu_a * mu_a + mu_b * mu_b + opt.c1) * (var_a + var_b + opt.c2);
            total += num / den;
        }
    return total / (static_cast<double>(w - k + 1) * (h - k + 1));
}

struct QualityScore {
    std::array<double, 5> per_view{};
    double mean = 0.0;

    bool operator==(const QualityScore&) const = default;
};

inline QualityScore make_quality(const std::array<double, 5>& per_view) {
    QualityScore q{per_view, 0.0};
    q.mean = std::accumulate(per_view.begin(), per_view.end(), 0.0) / 5.0;
    return q;
}

inline constexpr int kQualityResolution = 256;

/// Five-view SSIM of a variant against the original. Both meshes are framed
/// by the original's bounding box so the views line up.
inline QualityScore perceived_quality(const TriangleMesh& original, const TriangleMesh& variant,
                                      int size = kQualityResolution) {
    validate(original);
    validate(variant);
    const Framing framing = fit_framing(original);
    std::array<double, 5> per_view{};
    for (std::size_t i = 0; i < kCanonicalViews.size(); ++i) {
        const auto view = kCanonicalViews[i];
        per_view[i] = ssim(render(original, view, size, framing), render(variant, view, size, framing));
    }
    return make_quality(per_view);
}

} // namespace hitl
