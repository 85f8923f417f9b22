#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/LU>

#include "hitl/preference.hpp"

namespace hitl {

namespace probit {

inline double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

inline double log_cdf(double z) {
    if (z > -30.0) return std::log(normal_cdf(z));
    // asymptotic tail: Phi(z) ~ phi(z)/(-z) * (1 - 1/z^2 + 3/z^4)
    const double z2 = z * z;
    return -0.5 * z2 - std::log(-z) - 0.5 * std::log(2.0 * std::numbers::pi) + std::log1p(-1.0 / z2 + 3.0 / (z2 * z2));
}

/// Inverse Mills ratio phi(z)/Phi(z), stable in the left tail.
inline double mills(double z) {
    if (z > -30.0) return normal_pdf(z) / normal_cdf(z);
    const double z2 = z * z;
    return -z / (1.0 - 1.0 / z2 + 3.0 / (z2 * z2));
}

} // namespace probit

/// Pairwise probit likelihood sum_k log Phi((f_i - f_j) / (sqrt(2) * noise)).
class PairLikelihood {
public:
    PairLikelihood(std::span<const PreferencePair> pairs, double noise)
        : pairs_(pairs.begin(), pairs.end()), scale_(1.0 / (std::numbers::sqrt2 * noise)) {}

    double value(const Eigen::VectorXd& f) const {
        double s = 0.0;
        for (const auto& p : pairs_) s += probit::log_cdf(z(f, p));
        return s;
    }

    Eigen::VectorXd gradient(const Eigen::VectorXd& f) const {
        Eigen::VectorXd g = Eigen::VectorXd::Zero(f.size());
        for (const auto& p : pairs_) {
            const double d = probit::mills(z(f, p)) * scale_;
            g(static_cast<Eigen::Index>(p.preferred)) += d;
            g(static_cast<Eigen::Index>(p.less_preferred)) -= d;
        }
        return g;
    }

    /// W = -Hessian of the log-likelihood (positive semidefinite).
    Eigen::MatrixXd neg_hessian(const Eigen::VectorXd& f) const {
        Eigen::MatrixXd w = Eigen::MatrixXd::Zero(f.size(), f.size());
        for (const auto& p : pairs_) {
            const double zz = z(f, p);
            const double r = probit::mills(zz);
            const double c = r * (zz + r) * scale_ * scale_;
            const auto i = static_cast<Eigen::Index>(p.preferred);
            const auto j = static_cast<Eigen::Index>(p.less_preferred);
            w(i, i) += c;
            w(j, j) += c;
            w(i, j) -= c;
            w(j, i) -= c;
        }
        return w;
    }

    const std::vector<PreferencePair>& pairs() const { return pairs_; }

private:
    double z(const Eigen::VectorXd& f, const PreferencePair& p) const {
        return (f(static_cast<Eigen::Index>(p.preferred)) - f(static_cast<Eigen::Index>(p.less_preferred))) * scale_;
    }

    std::vector<PreferencePair> pairs_;
    double scale_;
};

struct FitOptions {
    double tolerance = 1e-6; // gradient norm of the log posterior
    int max_iterations = 100;
    double jitter = 1e-8;
    double max_jitter = 1e-4;
};

/// Laplace approximation to the GP posterior over latent utilities at the
/// training inputs. Immutable once fitted.
struct PreferenceModel {
    std::vector<ReductionParams> inputs;
    std::vector<PreferencePair> pairs;
    KernelConfig kernel;

    Eigen::VectorXd mode;          // posterior mode of f at the inputs
    Eigen::VectorXd alpha;         // K^-1 mode
    Eigen::MatrixXd predict_gain;  // W (I + K W)^-1, for predictive variances
    Eigen::MatrixXd covariance;    // (K^-1 + W)^-1
    Eigen::MatrixXd covariance_factor; // lower Cholesky factor of covariance (+ jitter)
    double jitter = 0.0;
    int iterations = 0;
    double gradient_norm = 0.0;

    bool empty() const { return inputs.empty(); }
};

struct Prediction {
    double mean;
    double variance;
};

namespace detail {

// Cholesky with escalating diagonal jitter; returns the jitter used.
inline double robust_cholesky(const Eigen::MatrixXd& a, double jitter, double max_jitter, Eigen::MatrixXd& lower) {
    const auto n = a.rows();
    for (double j = jitter; j <= max_jitter * (1.0 + 1e-9); j *= 10.0) {
        Eigen::LLT<Eigen::MatrixXd> llt(a + j * Eigen::MatrixXd::Identity(n, n));
        if (llt.info() == Eigen::Success) {
            lower = llt.matrixL();
            return j;
        }
    }
    throw NumericalError("Cholesky factorization failed at maximum jitter");
}

} // namespace detail

/// Finds the posterior mode by damped Newton iterations on
/// log p(pairs | f) - f^T K^-1 f / 2, parameterized as f = K a so K is never
/// inverted.
inline PreferenceModel fit(std::span<const PreferencePair> pairs, std::span<const ReductionParams> inputs,
                           const KernelConfig& kernel = {}, const FitOptions& opt = {}) {
    kernel.check();
    if (pairs.empty()) throw Error("fit needs at least one preference pair");
    for (const auto& p : pairs) {
        if (p.preferred >= inputs.size() || p.less_preferred >= inputs.size())
            throw Error("preference pair references an unknown input");
        if (p.preferred == p.less_preferred) throw Error("preference pair compares an input with itself");
    }

    PreferenceModel model;
    model.inputs.assign(inputs.begin(), inputs.end());
    model.pairs.assign(pairs.begin(), pairs.end());
    model.kernel = kernel;

    const auto n = static_cast<Eigen::Index>(inputs.size());
    const Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(n, n);
    Eigen::MatrixXd k = gram(inputs, kernel);
    {
        Eigen::MatrixXd unused;
        model.jitter = detail::robust_cholesky(k, opt.jitter, opt.max_jitter, unused);
    }
    k += model.jitter * identity;

    const PairLikelihood lik(pairs, kernel.noise);
    Eigen::VectorXd a = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd f = Eigen::VectorXd::Zero(n);
    auto objective = [&](const Eigen::VectorXd& ff, const Eigen::VectorXd& aa) { return lik.value(ff) - 0.5 * aa.dot(ff); };
    double psi = objective(f, a);

    int it = 0;
    double gnorm = (lik.gradient(f) - a).norm();
    for (; it < opt.max_iterations && gnorm > opt.tolerance; ++it) {
        const Eigen::MatrixXd w = lik.neg_hessian(f);
        const Eigen::VectorXd b = w * f + lik.gradient(f);
        const Eigen::VectorXd a_new = (identity + w * k).partialPivLu().solve(b);
        const Eigen::VectorXd da = a_new - a;

        double step = 1.0;
        bool improved = false;
        for (int halving = 0; halving < 30; ++halving, step *= 0.5) {
            const Eigen::VectorXd a_try = a + step * da;
            const Eigen::VectorXd f_try = k * a_try;
            const double psi_try = objective(f_try, a_try);
            if (psi_try >= psi) {
                a = a_try;
                f = f_try;
                psi = psi_try;
                improved = true;
                break;
            }
        }
        gnorm = (lik.gradient(f) - a).norm();
        if (!improved) break;
    }
    model.iterations = it;
    model.gradient_norm = gnorm;
    model.mode = f;
    model.alpha = a;

    const Eigen::MatrixXd w = lik.neg_hessian(f);
    model.predict_gain = w * (identity + k * w).partialPivLu().inverse();
    Eigen::MatrixXd cov = k - k * model.predict_gain * k;
    cov = 0.5 * (cov + cov.transpose()).eval();
    model.covariance = cov;
    detail::robust_cholesky(cov, opt.jitter, opt.max_jitter, model.covariance_factor);
    return model;
}

inline Eigen::VectorXd cross_covariance(const PreferenceModel& model, const ReductionParams& p) {
    Eigen::VectorXd kx(static_cast<Eigen::Index>(model.inputs.size()));
    for (std::size_t i = 0; i < model.inputs.size(); ++i)
        kx(static_cast<Eigen::Index>(i)) = matern52(model.inputs[i], p, model.kernel);
    return kx;
}

/// Predictive mean and variance of the latent utility; the prior for an
/// empty model.
inline Prediction predict(const PreferenceModel& model, const ReductionParams& p) {
    if (model.empty()) return {0.0, model.kernel.signal_variance};
    const Eigen::VectorXd kx = cross_covariance(model, p);
    const double mean = kx.dot(model.alpha);
    const double var = model.kernel.signal_variance - kx.dot(model.predict_gain * kx);
    return {mean, std::max(0.0, var)};
}

} // namespace hitl
