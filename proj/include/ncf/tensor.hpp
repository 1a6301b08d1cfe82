#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "ncf/error.hpp"

namespace ncf {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);

// Dense row-major float64 tensor. Rank 0 (empty shape) is a scalar holding
// one element.
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor scalar(double v);
    static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
    static Tensor full(Shape shape, double v) { return Tensor(std::move(shape), v); }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // 2-D accessors; rank-1 tensors behave as a single row.
    std::size_t rows() const { return rank() == 2 ? shape_[0] : 1; }
    std::size_t cols() const {
        return rank() == 2 ? shape_[1] : (rank() == 1 ? shape_[0] : 1);
    }
    double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

    // Scalar extraction; throws unless the tensor holds exactly one element.
    double item() const;

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
    bool all_finite() const;
    double max_abs() const;

    void fill(double v);

  private:
    Shape shape_;
    std::vector<double> data_;
};

std::size_t shape_numel(const Shape& s);
bool bits_equal(const Tensor& a, const Tensor& b);

// ---- forward kernels (plain tensor arithmetic, no differentiation) ----

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor smul(const Tensor& a, double c);
Tensor sadd(const Tensor& a, double c);

// matmul: [m,k]x[k,n] -> [m,n]; a rank-1 lhs [k] is treated as [1,k] and the
// result collapses back to rank 1.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // a x b^T
Tensor matmul_tn(const Tensor& a, const Tensor& b);  // a^T x b

// x[..., w] + v[w], v broadcast across leading rows.
Tensor add_rowvec(const Tensor& x, const Tensor& v);
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& idx);
Tensor slice_cols(const Tensor& x, std::size_t lo, std::size_t hi);
Tensor reshape(const Tensor& x, Shape shape);

Tensor sum(const Tensor& a);   // scalar
Tensor mean(const Tensor& a);  // scalar

Tensor abs(const Tensor& a);
Tensor square(const Tensor& a);
Tensor sin(const Tensor& a);
Tensor cos(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor swish(const Tensor& a);  // x * sigmoid(x)

// Non-primitive helpers used outside differentiated code paths.
Tensor sigmoid(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor sign(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

// ---- in-place accumulation helpers (gradient plumbing) ----

void acc_add(Tensor& into, const Tensor& x);                    // into += x
void acc_sub(Tensor& into, const Tensor& x);                    // into -= x
void acc_scaled(Tensor& into, const Tensor& x, double c);      // into += c*x
void acc_mul(Tensor& into, const Tensor& x, const Tensor& y);  // into += x.*y
void acc_colsum(Tensor& into, const Tensor& x);                // into[w] += sum_rows x
void mm_nn_acc(const Tensor& a, const Tensor& b, Tensor& into);
void mm_nt_acc(const Tensor& a, const Tensor& b, Tensor& into);
void mm_tn_acc(const Tensor& a, const Tensor& b, Tensor& into);

}  // namespace ncf
