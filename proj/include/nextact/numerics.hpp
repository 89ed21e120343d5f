#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "nextact/errors.hpp"

namespace nextact {

using Vec = std::vector<double>;

// Dense row-major matrix. Small sizes throughout (hidden state is 10),
// so no attempt at blocking or vectorized kernels.
struct Mat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    Vec v;

    Mat() = default;
    Mat(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), v(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return v[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return v[r * cols + c]; }

    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

    static Mat identity(std::size_t n) {
        Mat m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }
};

inline bool all_finite(const Vec& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

inline bool all_finite(const Mat& m) { return all_finite(m.v); }

// y = M x
inline Vec matvec(const Mat& m, const Vec& x) {
    if (x.size() != m.cols) throw DimensionError("matvec: x has size " + std::to_string(x.size()) + ", expected " + std::to_string(m.cols));
    Vec y(m.rows, 0.0);
    for (std::size_t r = 0; r < m.rows; ++r) {
        double acc = 0.0;
        const double* row = m.v.data() + r * m.cols;
        for (std::size_t c = 0; c < m.cols; ++c) acc += row[c] * x[c];
        y[r] = acc;
    }
    return y;
}

// y = M^T x
inline Vec matvec_t(const Mat& m, const Vec& x) {
    if (x.size() != m.rows) throw DimensionError("matvec_t: x has size " + std::to_string(x.size()) + ", expected " + std::to_string(m.rows));
    Vec y(m.cols, 0.0);
    for (std::size_t r = 0; r < m.rows; ++r) {
        const double* row = m.v.data() + r * m.cols;
        for (std::size_t c = 0; c < m.cols; ++c) y[c] += row[c] * x[r];
    }
    return y;
}

// M += a b^T
inline void add_outer(Mat& m, const Vec& a, const Vec& b) {
    if (a.size() != m.rows || b.size() != m.cols) throw DimensionError("add_outer: shape mismatch");
    for (std::size_t r = 0; r < m.rows; ++r) {
        double* row = m.v.data() + r * m.cols;
        for (std::size_t c = 0; c < m.cols; ++c) row[c] += a[r] * b[c];
    }
}

inline double dot(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw DimensionError("dot: size mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

inline double norm2(const Vec& v) { return std::sqrt(dot(v, v)); }

inline void axpy(double a, const Vec& x, Vec& y) {
    if (x.size() != y.size()) throw DimensionError("axpy: size mismatch");
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

// Max-subtracted softmax. Output sums to 1 within 1e-12.
inline Vec softmax(const Vec& logits) {
    if (logits.empty()) throw DimensionError("softmax: empty input");
    double mx = logits[0];
    for (double x : logits) {
        if (!std::isfinite(x)) throw NumericError("softmax: non-finite logit");
        if (x > mx) mx = x;
    }
    Vec out(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - mx);
        sum += out[i];
    }
    for (double& x : out) x /= sum;
    return out;
}

// log(sum_i exp(x_i)), max-subtracted.
inline double log_sum_exp(const Vec& logits) {
    if (logits.empty()) throw DimensionError("log_sum_exp: empty input");
    double mx = logits[0];
    for (double x : logits) mx = std::max(mx, x);
    double sum = 0.0;
    for (double x : logits) sum += std::exp(x - mx);
    return mx + std::log(sum);
}

// Solves the square system A x = b in place by Gaussian elimination with
// partial pivoting. A is consumed.
inline Vec solve_linear(Mat a, Vec b) {
    const std::size_t n = a.rows;
    if (a.cols != n || b.size() != n) throw DimensionError("solve_linear: need square system");
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t piv = k;
        for (std::size_t r = k + 1; r < n; ++r)
            if (std::fabs(a(r, k)) > std::fabs(a(piv, k))) piv = r;
        if (piv != k) {
            for (std::size_t c = 0; c < n; ++c) std::swap(a(k, c), a(piv, c));
            std::swap(b[k], b[piv]);
        }
        const double d = a(k, k);
        if (d == 0.0) throw NumericError("solve_linear: singular system");
        for (std::size_t r = k + 1; r < n; ++r) {
            const double f = a(r, k) / d;
            if (f == 0.0) continue;
            for (std::size_t c = k; c < n; ++c) a(r, c) -= f * a(k, c);
            b[r] -= f * b[k];
        }
    }
    Vec x(n, 0.0);
    for (std::size_t k = n; k-- > 0;) {
        double acc = b[k];
        for (std::size_t c = k + 1; c < n; ++c) acc -= a(k, c) * x[c];
        x[k] = acc / a(k, k);
    }
    return x;
}

// Least-squares coefficients for design (n x d) against targets (n x m),
// via normal equations with a fixed ridge lambda = 1e-8. One-hot regressors
// are collinear by construction, so the damping keeps the system solvable;
// it leaves fitted values unchanged to well below any tolerance used here.
inline Mat solve_ols(const Mat& design, const Mat& targets, double ridge = 1e-8) {
    if (design.rows != targets.rows) throw DimensionError("solve_ols: design has " + std::to_string(design.rows) + " rows, targets " + std::to_string(targets.rows));
    if (design.rows == 0 || design.cols == 0) throw DimensionError("solve_ols: empty design");
    const std::size_t n = design.rows, d = design.cols, m = targets.cols;

    Mat gram(d, d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t a = 0; a < d; ++a) {
            const double xa = design(i, a);
            if (xa == 0.0) continue;
            for (std::size_t b = 0; b < d; ++b) gram(a, b) += xa * design(i, b);
        }
    for (std::size_t a = 0; a < d; ++a) gram(a, a) += ridge;

    Mat rhs(d, m);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t a = 0; a < d; ++a) {
            const double xa = design(i, a);
            if (xa == 0.0) continue;
            for (std::size_t j = 0; j < m; ++j) rhs(a, j) += xa * targets(i, j);
        }

    Mat coef(d, m);
    for (std::size_t j = 0; j < m; ++j) {
        Vec b(d);
        for (std::size_t a = 0; a < d; ++a) b[a] = rhs(a, j);
        Vec x = solve_linear(gram, b);
        for (std::size_t a = 0; a < d; ++a) coef(a, j) = x[a];
    }
    if (!all_finite(coef)) throw NumericError("solve_ols: non-finite coefficients");
    return coef;
}

// Sum of squared residuals ||design * coef - targets||_F^2.
inline double ols_residual(const Mat& design, const Mat& coef, const Mat& targets) {
    double acc = 0.0;
    for (std::size_t i = 0; i < design.rows; ++i)
        for (std::size_t j = 0; j < targets.cols; ++j) {
            double pred = 0.0;
            for (std::size_t a = 0; a < design.cols; ++a) pred += design(i, a) * coef(a, j);
            const double r = pred - targets(i, j);
            acc += r * r;
        }
    return acc;
}

struct AdamState {
    Mat first_moment;
    Mat second_moment;
    std::size_t step_count = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double learning_rate = 0.01;

    static AdamState for_param(const Mat& param, double lr = 0.01) {
        AdamState s;
        s.first_moment = Mat(param.rows, param.cols);
        s.second_moment = Mat(param.rows, param.cols);
        s.learning_rate = lr;
        return s;
    }
};

// One Adam update with bias correction. Returns the new parameter and the
// advanced state; inputs are untouched.
inline std::pair<Mat, AdamState> adam_step(const Mat& param, const Mat& grad, const AdamState& state) {
    if (!param.same_shape(grad) || !param.same_shape(state.first_moment) || !param.same_shape(state.second_moment))
        throw DimensionError("adam_step: shape mismatch");
    AdamState next = state;
    next.step_count = state.step_count + 1;
    const double t = static_cast<double>(next.step_count);
    const double bc1 = 1.0 - std::pow(state.beta1, t);
    const double bc2 = 1.0 - std::pow(state.beta2, t);
    Mat out = param;
    for (std::size_t i = 0; i < param.v.size(); ++i) {
        const double g = grad.v[i];
        next.first_moment.v[i] = state.beta1 * state.first_moment.v[i] + (1.0 - state.beta1) * g;
        next.second_moment.v[i] = state.beta2 * state.second_moment.v[i] + (1.0 - state.beta2) * g * g;
        const double mhat = next.first_moment.v[i] / bc1;
        const double vhat = next.second_moment.v[i] / bc2;
        out.v[i] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon);
    }
    return {std::move(out), std::move(next)};
}

// Central finite differences (f(p+h e_i) - f(p-h e_i)) / 2h. Used as the
// independent check on hand-derived gradients.
inline Vec finite_diff_grad(const std::function<double(const Vec&)>& loss_fn, const Vec& params, double h) {
    if (h <= 0.0) throw NumericError("finite_diff_grad: h must be positive");
    Vec grad(params.size());
    Vec p = params;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double orig = p[i];
        p[i] = orig + h;
        const double up = loss_fn(p);
        p[i] = orig - h;
        const double down = loss_fn(p);
        p[i] = orig;
        if (!std::isfinite(up) || !std::isfinite(down)) throw NumericError("finite_diff_grad: non-finite loss at coordinate " + std::to_string(i));
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

}  // namespace nextact
