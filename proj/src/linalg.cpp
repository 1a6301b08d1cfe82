#include "ncf/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ncf {

Tensor solve_linear(Tensor a, Tensor b) {
    if (a.rank() != 2 || a.shape()[0] != a.shape()[1])
        throw ValidationError("solve_linear: A must be square, got " + shape_str(a.shape()));
    const std::size_t n = a.shape()[0];
    if (b.rank() != 2 || b.shape()[0] != n)
        throw ValidationError("solve_linear: B rows must match A, got " + shape_str(b.shape()));
    const std::size_t k = b.shape()[1];

    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::fabs(a.at(r, col)) > std::fabs(a.at(pivot, col))) pivot = r;
        if (std::fabs(a.at(pivot, col)) < 1e-300) throw NumericError("solve_linear: singular matrix");
        if (pivot != col) {
            for (std::size_t c = 0; c < n; ++c) std::swap(a.at(pivot, c), a.at(col, c));
            for (std::size_t c = 0; c < k; ++c) std::swap(b.at(pivot, c), b.at(col, c));
        }
        const double inv = 1.0 / a.at(col, col);
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = a.at(r, col) * inv;
            if (f == 0.0) continue;
            for (std::size_t c = col; c < n; ++c) a.at(r, c) -= f * a.at(col, c);
            for (std::size_t c = 0; c < k; ++c) b.at(r, c) -= f * b.at(col, c);
        }
    }
    Tensor x(Shape{n, k});
    for (std::size_t r = n; r-- > 0;) {
        for (std::size_t c = 0; c < k; ++c) {
            double acc = b.at(r, c);
            for (std::size_t j = r + 1; j < n; ++j) acc -= a.at(r, j) * x.at(j, c);
            x.at(r, c) = acc / a.at(r, r);
        }
    }
    return x;
}

std::vector<double> principal_axis(const Tensor& rows) {
    if (rows.rank() != 2 || rows.shape()[0] < 2) throw ValidationError("principal_axis: need [n>=2, d]");
    const std::size_t n = rows.shape()[0], d = rows.shape()[1];
    std::vector<double> mean(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) mean[j] += rows.at(i, j);
    for (double& v : mean) v /= static_cast<double>(n);

    Tensor cov(Shape{d, d});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t a = 0; a < d; ++a)
            for (std::size_t b = 0; b < d; ++b)
                cov.at(a, b) += (rows.at(i, a) - mean[a]) * (rows.at(i, b) - mean[b]);

    std::vector<double> v(d);
    for (std::size_t j = 0; j < d; ++j) v[j] = 1.0 / std::sqrt(static_cast<double>(d)) + 1e-3 * (j + 1);
    for (int it = 0; it < 200; ++it) {
        std::vector<double> w(d, 0.0);
        for (std::size_t a = 0; a < d; ++a)
            for (std::size_t b = 0; b < d; ++b) w[a] += cov.at(a, b) * v[b];
        double norm = 0.0;
        for (double x : w) norm += x * x;
        norm = std::sqrt(norm);
        if (norm < 1e-300) break;
        for (std::size_t j = 0; j < d; ++j) v[j] = w[j] / norm;
    }
    return v;
}

namespace {

std::vector<double> ranks(const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j);  // average rank for ties
        for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
        i = j + 1;
    }
    return r;
}

}  // namespace

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2) throw ValidationError("spearman: need two equal series");
    const std::vector<double> ra = ranks(a), rb = ranks(b);
    const double n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += ra[i];
        mb += rb[i];
    }
    ma /= n;
    mb /= n;
    double num = 0, va = 0, vb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (ra[i] - ma) * (rb[i] - mb);
        va += (ra[i] - ma) * (ra[i] - ma);
        vb += (rb[i] - mb) * (rb[i] - mb);
    }
    if (va < 1e-300 || vb < 1e-300) return 0.0;
    return num / std::sqrt(va * vb);
}

}  // namespace ncf
