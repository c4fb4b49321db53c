#include "curvemix/optimize.hpp"

#include <cmath>
#include <deque>
#include <limits>

namespace curvemix {

namespace {
constexpr double kFdStep = 6.055454452393343e-6;  // cbrt(machine eps)
constexpr double kArmijoC1 = 1e-4;
constexpr int kMaxBacktracks = 40;
constexpr int kHistory = 8;

inline bool finite(double v) { return std::isfinite(v); }
}  // namespace

Eigen::VectorXd central_difference_gradient(const Objective& f, const Eigen::VectorXd& x,
                                            double f0) {
    const Eigen::Index n = x.size();
    Eigen::VectorXd g(n);
    Eigen::VectorXd xt = x;
    for (Eigen::Index j = 0; j < n; ++j) {
        const double h = kFdStep * std::max(1.0, std::abs(x[j]));
        xt[j] = x[j] + h;
        const double fp = f(xt);
        xt[j] = x[j] - h;
        const double fm = f(xt);
        xt[j] = x[j];
        if (finite(fp) && finite(fm)) {
            g[j] = (fp - fm) / (2.0 * h);
        } else if (finite(fp)) {
            g[j] = (fp - f0) / h;
        } else if (finite(fm)) {
            g[j] = (f0 - fm) / h;
        } else {
            g[j] = 0.0;
        }
    }
    return g;
}

OptimizeResult minimize_lbfgs(const Objective& f, const Eigen::VectorXd& x0, int max_iter,
                              double tolerance) {
    OptimizeResult res;
    res.x = x0;
    res.value = f(x0);
    res.trace.push_back(res.value);
    if (!finite(res.value)) {
        res.value = std::numeric_limits<double>::infinity();
        return res;
    }

    Eigen::VectorXd x = x0;
    double fx = res.value;
    Eigen::VectorXd g = central_difference_gradient(f, x, fx);

    std::deque<Eigen::VectorXd> s_hist, y_hist;
    std::deque<double> rho_hist;

    for (int iter = 0; iter < max_iter; ++iter) {
        if (g.lpNorm<Eigen::Infinity>() <= 1e-9 * std::max(1.0, std::abs(fx))) break;

        // two-loop recursion
        Eigen::VectorXd d = -g;
        std::vector<double> alpha(s_hist.size());
        for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
            alpha[i] = rho_hist[i] * s_hist[i].dot(d);
            d -= alpha[i] * y_hist[i];
        }
        if (!s_hist.empty()) {
            const auto& s = s_hist.back();
            const auto& y = y_hist.back();
            d *= s.dot(y) / y.squaredNorm();
        }
        for (std::size_t i = 0; i < s_hist.size(); ++i) {
            const double beta = rho_hist[i] * y_hist[i].dot(d);
            d += (alpha[i] - beta) * s_hist[i];
        }

        double dir_deriv = g.dot(d);
        if (!(dir_deriv < 0.0)) {  // not a descent direction: restart from steepest descent
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            d = -g;
            dir_deriv = g.dot(d);
            if (!(dir_deriv < 0.0)) break;
        }

        // backtracking Armijo line search
        double step = 1.0;
        double f_new = std::numeric_limits<double>::infinity();
        Eigen::VectorXd x_new;
        bool accepted = false;
        for (int bt = 0; bt < kMaxBacktracks; ++bt) {
            x_new = x + step * d;
            f_new = f(x_new);
            if (finite(f_new) && f_new <= fx + kArmijoC1 * step * dir_deriv) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;

        Eigen::VectorXd g_new = central_difference_gradient(f, x_new, f_new);
        Eigen::VectorXd s = x_new - x;
        Eigen::VectorXd y = g_new - g;
        const double sy = s.dot(y);
        if (finite(sy) && sy > 1e-12 * s.norm() * y.norm()) {
            s_hist.push_back(std::move(s));
            y_hist.push_back(std::move(y));
            rho_hist.push_back(1.0 / sy);
            if (static_cast<int>(s_hist.size()) > kHistory) {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
        }

        const double delta = fx - f_new;
        x = std::move(x_new);
        fx = f_new;
        g = std::move(g_new);
        res.trace.push_back(fx);
        res.iterations = iter + 1;
        if (delta <= tolerance * std::max(1.0, std::abs(fx))) break;
    }

    if (fx < res.value) {
        res.value = fx;
        res.x = x;
        res.improved = true;
    }
    return res;
}

}  // namespace curvemix
