#include "ncf/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

namespace ncf {

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ',';
        os << s[i];
    }
    os << ']';
    return os.str();
}

std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != data_.size())
        throw ValidationError("tensor: data length " + std::to_string(data_.size()) +
                              " does not match shape " + shape_str(shape_));
}

Tensor Tensor::scalar(double v) {
    Tensor t;
    t.data_.assign(1, v);
    return t;
}

double Tensor::item() const {
    if (size() != 1) throw ValidationError("item: tensor has " + std::to_string(size()) + " elements");
    return data_[0];
}

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

double Tensor::max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::fabs(v));
    return m;
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool bits_equal(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) return false;
    return std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw ValidationError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                              shape_str(b.shape()));
}

template <class F>
Tensor map2(const Tensor& a, const Tensor& b, const char* op, F f) {
    require_same_shape(a, b, op);
    Tensor out(a.shape());
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    const std::size_t n = a.size();
    for (std::size_t i = 0; i < n; ++i) po[i] = f(pa[i], pb[i]);
    return out;
}

template <class F>
Tensor map1(const Tensor& a, F f) {
    Tensor out(a.shape());
    const double* pa = a.data();
    double* po = out.data();
    const std::size_t n = a.size();
    for (std::size_t i = 0; i < n; ++i) po[i] = f(pa[i]);
    return out;
}

struct MatDims {
    std::size_t m, k, n;
    bool lhs_vec;
};

MatDims matmul_dims(const Tensor& a, const Tensor& b, const char* op) {
    if (b.rank() != 2) throw ValidationError(std::string(op) + ": rhs must be rank 2, got " + shape_str(b.shape()));
    if (a.rank() == 2) {
        if (a.shape()[1] != b.shape()[0])
            throw ValidationError(std::string(op) + ": inner dims " + shape_str(a.shape()) + " vs " +
                                  shape_str(b.shape()));
        return {a.shape()[0], a.shape()[1], b.shape()[1], false};
    }
    if (a.rank() == 1) {
        if (a.shape()[0] != b.shape()[0])
            throw ValidationError(std::string(op) + ": inner dims " + shape_str(a.shape()) + " vs " +
                                  shape_str(b.shape()));
        return {1, a.shape()[0], b.shape()[1], true};
    }
    throw ValidationError(std::string(op) + ": lhs must be rank 1 or 2, got " + shape_str(a.shape()));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return map2(a, b, "add", [](double x, double y) { return x + y; }); }
Tensor sub(const Tensor& a, const Tensor& b) { return map2(a, b, "sub", [](double x, double y) { return x - y; }); }
Tensor mul(const Tensor& a, const Tensor& b) { return map2(a, b, "mul", [](double x, double y) { return x * y; }); }
Tensor div(const Tensor& a, const Tensor& b) { return map2(a, b, "div", [](double x, double y) { return x / y; }); }
Tensor neg(const Tensor& a) { return map1(a, [](double x) { return -x; }); }
Tensor smul(const Tensor& a, double c) { return map1(a, [c](double x) { return x * c; }); }
Tensor sadd(const Tensor& a, double c) { return map1(a, [c](double x) { return x + c; }); }

Tensor matmul(const Tensor& a, const Tensor& b) {
    const MatDims d = matmul_dims(a, b, "matmul");
    Tensor out(d.lhs_vec ? Shape{d.n} : Shape{d.m, d.n});
    mm_nn_acc(a, b, out);
    return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    // a [m,k] x b^T where b is [n,k]
    if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[1])
        throw ValidationError("matmul_nt: bad shapes " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor out(Shape{a.shape()[0], b.shape()[0]});
    mm_nt_acc(a, b, out);
    return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
    // a^T x b where a is [k,m], b is [k,n]
    if (a.rank() != 2 || b.rank() != 2 || a.shape()[0] != b.shape()[0])
        throw ValidationError("matmul_tn: bad shapes " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor out(Shape{a.shape()[1], b.shape()[1]});
    mm_tn_acc(a, b, out);
    return out;
}

void mm_nn_acc(const Tensor& a, const Tensor& b, Tensor& into) {
    const MatDims d = matmul_dims(a, b, "matmul");
    const double* pa = a.data();
    const double* pb = b.data();
    double* pc = into.data();
    for (std::size_t i = 0; i < d.m; ++i) {
        double* ci = pc + i * d.n;
        const double* ai = pa + i * d.k;
        for (std::size_t l = 0; l < d.k; ++l) {
            const double av = ai[l];
            const double* bl = pb + l * d.n;
            for (std::size_t j = 0; j < d.n; ++j) ci[j] += av * bl[j];
        }
    }
}

void mm_nt_acc(const Tensor& a, const Tensor& b, Tensor& into) {
    // into[m,n] += a[m,k] x b[n,k]^T
    const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
    const double* pa = a.data();
    const double* pb = b.data();
    double* pc = into.data();
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = pa + i * k;
        double* ci = pc + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const double* bj = pb + j * k;
            double s = 0.0;
            for (std::size_t l = 0; l < k; ++l) s += ai[l] * bj[l];
            ci[j] += s;
        }
    }
}

void mm_tn_acc(const Tensor& a, const Tensor& b, Tensor& into) {
    // into[m,n] += a[k,m]^T x b[k,n]
    const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
    const double* pa = a.data();
    const double* pb = b.data();
    double* pc = into.data();
    for (std::size_t l = 0; l < k; ++l) {
        const double* al = pa + l * m;
        const double* bl = pb + l * n;
        for (std::size_t i = 0; i < m; ++i) {
            const double av = al[i];
            double* ci = pc + i * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += av * bl[j];
        }
    }
}

Tensor add_rowvec(const Tensor& x, const Tensor& v) {
    if (v.rank() != 1 || x.rank() < 1 || x.shape().back() != v.shape()[0])
        throw ValidationError("add_rowvec: shapes " + shape_str(x.shape()) + " vs " + shape_str(v.shape()));
    Tensor out = x;
    const std::size_t w = v.shape()[0];
    const std::size_t rows = x.size() / w;
    const double* pv = v.data();
    double* po = out.data();
    for (std::size_t r = 0; r < rows; ++r) {
        double* pr = po + r * w;
        for (std::size_t j = 0; j < w; ++j) pr[j] += pv[j];
    }
    return out;
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
    if (a.rank() == 1 && b.rank() == 1) {
        Tensor out(Shape{a.size() + b.size()});
        std::copy(a.data(), a.data() + a.size(), out.data());
        std::copy(b.data(), b.data() + b.size(), out.data() + a.size());
        return out;
    }
    if (a.rank() != 2 || b.rank() != 2 || a.shape()[0] != b.shape()[0])
        throw ValidationError("concat_cols: shapes " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const std::size_t rows = a.shape()[0], wa = a.shape()[1], wb = b.shape()[1];
    Tensor out(Shape{rows, wa + wb});
    for (std::size_t r = 0; r < rows; ++r) {
        std::copy(a.data() + r * wa, a.data() + (r + 1) * wa, out.data() + r * (wa + wb));
        std::copy(b.data() + r * wb, b.data() + (r + 1) * wb, out.data() + r * (wa + wb) + wa);
    }
    return out;
}

Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& idx) {
    if (x.rank() < 1) throw ValidationError("gather_rows: need rank >= 1");
    const std::size_t nrows = x.shape()[0];
    const std::size_t w = x.size() / std::max<std::size_t>(nrows, 1);
    Shape out_shape = x.shape();
    out_shape[0] = idx.size();
    Tensor out(out_shape);
    for (std::size_t r = 0; r < idx.size(); ++r) {
        if (idx[r] >= nrows) throw ValidationError("gather_rows: index " + std::to_string(idx[r]) + " out of range");
        std::copy(x.data() + idx[r] * w, x.data() + (idx[r] + 1) * w, out.data() + r * w);
    }
    return out;
}

Tensor slice_cols(const Tensor& x, std::size_t lo, std::size_t hi) {
    if (x.rank() < 1 || lo > hi || hi > x.shape().back())
        throw ValidationError("slice_cols: bad range [" + std::to_string(lo) + "," + std::to_string(hi) +
                              ") for shape " + shape_str(x.shape()));
    const std::size_t w = x.shape().back();
    const std::size_t rows = x.size() / w;
    Shape out_shape = x.shape();
    out_shape.back() = hi - lo;
    Tensor out(out_shape);
    for (std::size_t r = 0; r < rows; ++r)
        std::copy(x.data() + r * w + lo, x.data() + r * w + hi, out.data() + r * (hi - lo));
    return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.size())
        throw ValidationError("reshape: " + shape_str(x.shape()) + " to " + shape_str(shape));
    return Tensor(std::move(shape), x.vec());
}

Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.vec()) s += v;
    return Tensor::scalar(s);
}

Tensor mean(const Tensor& a) {
    if (a.size() == 0) throw ValidationError("mean: empty tensor");
    return Tensor::scalar(sum(a).item() / static_cast<double>(a.size()));
}

Tensor abs(const Tensor& a) { return map1(a, [](double x) { return std::fabs(x); }); }
Tensor square(const Tensor& a) { return map1(a, [](double x) { return x * x; }); }
Tensor sin(const Tensor& a) { return map1(a, [](double x) { return std::sin(x); }); }
Tensor cos(const Tensor& a) { return map1(a, [](double x) { return std::cos(x); }); }
Tensor exp(const Tensor& a) { return map1(a, [](double x) { return std::exp(x); }); }
Tensor tanh(const Tensor& a) { return map1(a, [](double x) { return std::tanh(x); }); }

namespace {
inline double sigmoid1(double x) { return 1.0 / (1.0 + std::exp(-x)); }
}  // namespace

Tensor swish(const Tensor& a) { return map1(a, [](double x) { return x * sigmoid1(x); }); }
Tensor sigmoid(const Tensor& a) { return map1(a, [](double x) { return sigmoid1(x); }); }
Tensor sqrt(const Tensor& a) { return map1(a, [](double x) { return std::sqrt(x); }); }
Tensor sign(const Tensor& a) {
    return map1(a, [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

void acc_add(Tensor& into, const Tensor& x) {
    require_same_shape(into, x, "acc_add");
    double* p = into.data();
    const double* q = x.data();
    for (std::size_t i = 0; i < x.size(); ++i) p[i] += q[i];
}

void acc_sub(Tensor& into, const Tensor& x) {
    require_same_shape(into, x, "acc_sub");
    double* p = into.data();
    const double* q = x.data();
    for (std::size_t i = 0; i < x.size(); ++i) p[i] -= q[i];
}

void acc_scaled(Tensor& into, const Tensor& x, double c) {
    require_same_shape(into, x, "acc_scaled");
    double* p = into.data();
    const double* q = x.data();
    for (std::size_t i = 0; i < x.size(); ++i) p[i] += c * q[i];
}

void acc_mul(Tensor& into, const Tensor& x, const Tensor& y) {
    require_same_shape(into, x, "acc_mul");
    require_same_shape(x, y, "acc_mul");
    double* p = into.data();
    const double* qx = x.data();
    const double* qy = y.data();
    for (std::size_t i = 0; i < x.size(); ++i) p[i] += qx[i] * qy[i];
}

void acc_colsum(Tensor& into, const Tensor& x) {
    const std::size_t w = into.size();
    if (x.size() % w != 0) throw ValidationError("acc_colsum: incompatible sizes");
    const std::size_t rows = x.size() / w;
    double* p = into.data();
    const double* q = x.data();
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < w; ++j) p[j] += q[r * w + j];
}

}  // namespace ncf
