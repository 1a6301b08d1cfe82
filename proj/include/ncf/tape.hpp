#pragma once

#include <deque>
#include <functional>
#include <vector>

#include "ncf/tensor.hpp"

namespace ncf {

class Tape;

// Handle to a tape node. Cheap to copy; valid while its tape is alive.
class Var {
  public:
    Var() = default;
    Var(Tape* tape, int id) : tape_(tape), id_(id) {}

    const Tensor& value() const;
    Tensor grad() const;  // zeros if never touched by backward
    Tape* tape() const { return tape_; }
    int id() const { return id_; }
    bool valid() const { return tape_ != nullptr; }

  private:
    Tape* tape_ = nullptr;
    int id_ = -1;
};

// Eager tape for reverse-mode differentiation. Creation order is a valid
// topological order, so one reverse sweep suffices. Nodes live in a deque so
// value references stay stable while the tape grows. One tape per gradient
// evaluation; tapes are not shared across threads.
class Tape {
  public:
    using BackwardFn = std::function<void(Tape&, int)>;

    struct Node {
        Tensor value;
        Tensor grad;
        bool has_grad = false;
        bool requires_grad = false;
        int parent0 = -1;
        int parent1 = -1;
        const char* op = "";
        BackwardFn backward;
    };

    Var leaf(Tensor value, bool requires_grad = true);
    Var constant(Tensor value) { return leaf(std::move(value), false); }
    int add_node(Tensor value, int p0, int p1, const char* op, BackwardFn backward);

    Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
    const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
    std::size_t size() const { return nodes_.size(); }

    // Accumulates into a node's gradient buffer unless it does not require
    // grad. Allocates the buffer on first touch.
    void accum(int id, const Tensor& g);
    Tensor& grad_buf(int id);

    // Runs the reverse sweep from a node (its gradient is seeded with ones).
    // Node buffers behind the sweep front are released as they are consumed.
    void backward_from(int root);

  private:
    std::deque<Node> nodes_;
};

// ---- primitive ops on Var ----

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var neg(const Var& a);
Var smul(const Var& a, double c);
Var sadd(const Var& a, double c);

Var matmul(const Var& a, const Var& b);
Var add_rowvec(const Var& x, const Var& v);
Var concat_cols(const Var& a, const Var& b);
Var gather_rows(const Var& x, const std::vector<std::size_t>& idx);
Var slice_cols(const Var& x, std::size_t lo, std::size_t hi);
Var reshape(const Var& x, Shape shape);

Var sum(const Var& a);
Var mean(const Var& a);

Var abs(const Var& a);
Var square(const Var& a);
Var sin(const Var& a);
Var cos(const Var& a);
Var exp(const Var& a);
Var tanh(const Var& a);
Var swish(const Var& a);
Var sigmoid(const Var& a);  // composed from exp/div, not a primitive node

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator-(const Var& a) { return neg(a); }

}  // namespace ncf
