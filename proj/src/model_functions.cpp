#include "curvemix/model_functions.hpp"

#include <algorithm>
#include <cmath>

namespace curvemix {

namespace {

inline double softplus(double z) {
    // log(1 + e^z) without overflow
    return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
}

inline double logistic(double u) { return 1.0 / (1.0 + std::exp(-u)); }

inline double logit(double p) { return std::log(p / (1.0 - p)); }

}  // namespace

double soft_clip(double x, const SoftClipMean& p) {
    if (!(p.beta > 0.0)) {
        throw InvalidHyperparameter("soft_clip: beta must be > 0");
    }
    const double v = p.alpha2 * x + p.alpha3;
    return p.alpha1 / p.beta * (softplus(p.beta * v) - softplus(p.beta * (v - 1.0)));
}

double se_kernel(double xi, double xj, const SquaredExponentialKernel& p) {
    if (!(p.process_std > 0.0) || !(p.length_scale > 0.0)) {
        throw InvalidHyperparameter("se_kernel: process_std and length_scale must be > 0");
    }
    const double d = xi - xj;
    return p.process_std * p.process_std * std::exp(-0.5 * d * d / (p.length_scale * p.length_scale));
}

double constant_kernel(double /*xi*/, double /*xj*/, const ConstantKernel& p) {
    return p.level;
}

double kernel_value(double xi, double xj, const KernelSpec& kernel) {
    return std::visit(
        [&](const auto& k) -> double {
            using T = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<T, SquaredExponentialKernel>) return se_kernel(xi, xj, k);
            else return constant_kernel(xi, xj, k);
        },
        kernel);
}

double mean_value(double x, const MeanSpec& mean) {
    return std::visit(
        [&](const auto& m) -> double {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, ZeroMean>) return 0.0;
            else if constexpr (std::is_same_v<T, ConstantMean>) return m.value;
            else return soft_clip(x, m);
        },
        mean);
}

Eigen::MatrixXd gram_matrix(const Eigen::VectorXd& x1, const Eigen::VectorXd& x2,
                            const KernelSpec& kernel) {
    const Eigen::Index n1 = x1.size(), n2 = x2.size();
    Eigen::MatrixXd out(n1, n2);
    if (std::holds_alternative<SquaredExponentialKernel>(kernel)) {
        const auto& k = std::get<SquaredExponentialKernel>(kernel);
        if (!(k.process_std > 0.0) || !(k.length_scale > 0.0)) {
            throw InvalidHyperparameter("gram_matrix: invalid squared-exponential parameters");
        }
        const double s2 = k.process_std * k.process_std;
        const double inv2l2 = 0.5 / (k.length_scale * k.length_scale);
        for (Eigen::Index j = 0; j < n2; ++j) {
            out.col(j) = (s2 * (-(x1.array() - x2[j]).square() * inv2l2).exp()).matrix();
        }
    } else {
        out.setConstant(std::get<ConstantKernel>(kernel).level);
    }
    return out;
}

Eigen::VectorXd gram_diagonal(const Eigen::VectorXd& x, const KernelSpec& kernel) {
    Eigen::VectorXd out(x.size());
    if (std::holds_alternative<SquaredExponentialKernel>(kernel)) {
        const auto& k = std::get<SquaredExponentialKernel>(kernel);
        out.setConstant(k.process_std * k.process_std);
    } else {
        out.setConstant(std::get<ConstantKernel>(kernel).level);
    }
    return out;
}

Eigen::VectorXd mean_vector(const Eigen::VectorXd& x, const MeanSpec& mean) {
    Eigen::VectorXd out(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) out[i] = mean_value(x[i], mean);
    return out;
}

double ParamTransform::to_internal(double natural) const {
    if (kind == Kind::Linear) return natural;
    const double llo = std::log(lo), lhi = std::log(hi);
    double t = (std::log(std::clamp(natural, lo, hi)) - llo) / (lhi - llo);
    t = std::clamp(t, 1e-9, 1.0 - 1e-9);
    return logit(t);
}

double ParamTransform::to_natural(double internal) const {
    if (kind == Kind::Linear) return internal;
    const double llo = std::log(lo), lhi = std::log(hi);
    return std::exp(llo + (lhi - llo) * logistic(internal));
}

void append_mean_params(const MeanSpec& mean, PackedParams& out) {
    std::visit(
        [&](const auto& m) {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, ConstantMean>) {
                out.natural.push_back(m.value);
                out.transforms.push_back(ParamTransform::linear());
                out.affects_kernel.push_back(false);
            } else if constexpr (std::is_same_v<T, SoftClipMean>) {
                const HyperBounds b;
                out.natural.insert(out.natural.end(), {m.alpha1, m.alpha2, m.alpha3, m.beta});
                out.transforms.insert(out.transforms.end(),
                                      {ParamTransform::linear(), ParamTransform::linear(),
                                       ParamTransform::linear(),
                                       ParamTransform::log_bounded(b.beta_lo, b.beta_hi)});
                out.affects_kernel.insert(out.affects_kernel.end(), {false, false, false, false});
            }
        },
        mean);
}

void append_kernel_params(const KernelSpec& kernel, const HyperBounds& bounds, PackedParams& out) {
    std::visit(
        [&](const auto& k) {
            using T = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<T, SquaredExponentialKernel>) {
                out.natural.insert(out.natural.end(), {k.process_std, k.length_scale});
                out.transforms.insert(
                    out.transforms.end(),
                    {ParamTransform::log_bounded(bounds.process_std_lo, bounds.process_std_hi),
                     ParamTransform::log_bounded(bounds.length_scale_lo, bounds.length_scale_hi)});
                out.affects_kernel.insert(out.affects_kernel.end(), {true, true});
            } else {
                out.natural.push_back(k.level);
                out.transforms.push_back(ParamTransform::log_bounded(bounds.level_lo, bounds.level_hi));
                out.affects_kernel.push_back(true);
            }
        },
        kernel);
}

int mean_param_count(const MeanSpec& mean) {
    if (std::holds_alternative<ZeroMean>(mean)) return 0;
    if (std::holds_alternative<ConstantMean>(mean)) return 1;
    return 4;
}

int kernel_param_count(const KernelSpec& kernel) {
    return std::holds_alternative<SquaredExponentialKernel>(kernel) ? 2 : 1;
}

MeanSpec mean_with_params(const MeanSpec& proto, const double* natural) {
    if (std::holds_alternative<ZeroMean>(proto)) return ZeroMean{};
    if (std::holds_alternative<ConstantMean>(proto)) return ConstantMean{natural[0]};
    return SoftClipMean{natural[0], natural[1], natural[2], natural[3]};
}

KernelSpec kernel_with_params(const KernelSpec& proto, const double* natural) {
    if (std::holds_alternative<SquaredExponentialKernel>(proto)) {
        return SquaredExponentialKernel{natural[0], natural[1]};
    }
    return ConstantKernel{natural[0]};
}

}  // namespace curvemix
