#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace persona {
class Rng;
}

namespace persona::nn {

// Row-major tensor of finite doubles. Everything on the tape is 2-D
// (rows x cols); vectors travel as 1 x d.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(int rows, int cols, double fill = 0.0)
        : shape{rows, cols}, data(static_cast<std::size_t>(rows) * cols, fill) {}

    int rows() const { return shape.empty() ? 0 : shape[0]; }
    int cols() const { return shape.size() < 2 ? 1 : shape[1]; }
    std::size_t size() const { return data.size(); }
    double& at(int i, int j) { return data[static_cast<std::size_t>(i) * cols() + j]; }
    double at(int i, int j) const { return data[static_cast<std::size_t>(i) * cols() + j]; }
    bool same_shape(const Tensor& o) const { return shape == o.shape; }
    std::string shape_str() const;
};

struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad; // same shape, accumulated by Tape::backward

    Parameter() = default;
    Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)) {
        grad = Tensor(value.rows(), value.cols());
    }
    void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0); }
};

// Glorot-uniform init for weights; zeros for biases; ones where asked.
Tensor glorot_uniform(int rows, int cols, Rng& rng);

// Handle into a Tape node.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Reverse-mode autodiff over a recorded op list. One Tape per forward pass;
// backward() walks the record in reverse and accumulates into bound
// Parameter::grad fields.
class Tape {
public:
    Var leaf(Tensor value);                       // constant, no gradient tracking
    Var param(Parameter& p);                      // leaf bound to a parameter
    Var frozen(const Parameter& p);               // parameter used as a constant

    Var matmul(Var a, Var b);                     // (n,k)x(k,m)
    Var matmul_nt(Var a, Var b);                  // a * b^T, (n,k)x(m,k)
    Var dense(Var x, Var weight, Var bias);       // x*W + b, bias broadcast over rows
    Var add(Var a, Var b);                        // same shape
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);                        // elementwise
    Var add_rowvec(Var m, Var v);                 // broadcast 1xd over rows
    Var mul_scalar(Var a, Var s);                 // s is 1x1, broadcast
    Var affine(Var a, double scale, double shift);
    Var relu(Var a);
    Var sigmoid(Var a);
    Var softmax_rows(Var a);
    Var layer_norm_rows(Var a, Var gain, Var bias, double eps = 1e-5);
    Var mean_rows(Var a);                         // (n,d) -> (1,d)
    Var concat_cols(Var a, Var b);                // (n,p)|(n,q) -> (n,p+q)
    Var slice_cols(Var a, int c0, int c1);        // columns [c0, c1)
    // tokens_ij = w_i * v_j + E_ij for w (1,F), v (1,d), E (F,d)
    Var outer_add(Var w, Var v, Var e);
    // mean over listed rows of an embedding table; rows may repeat
    Var embedding_mean(Var table, std::vector<int> row_ids);
    Var cross_entropy(Var logits, int label);     // logits (1,C) -> scalar (1,1)
    Var cosine_similarity(Var a, Var b);          // (1,d),(1,d) -> scalar

    const Tensor& value(Var v) const;
    // Seeds d(loss)=1 and accumulates into every bound parameter's grad.
    void backward(Var loss);

    // True when a cosine_similarity call on this tape saw a zero vector.
    bool saw_zero_cosine() const { return saw_zero_cosine_; }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        std::function<void(Tape&, Node&)> backprop; // null for leaves
        Parameter* bound = nullptr;
    };

    Node& node(Var v) { return nodes_[static_cast<std::size_t>(v.id)]; }
    Tensor& grad_of(Var v);
    Var push(Tensor value, std::function<void(Tape&, Node&)> backprop);

    std::vector<Node> nodes_;
    bool backward_done_ = false;
    bool saw_zero_cosine_ = false;
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Per-parameter moments keyed by parameter name.
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    // Bias-corrected update; leaves gradients untouched (caller zeroes them).
    void step(std::vector<Parameter*>& params);
    std::int64_t steps_taken() const { return t_; }
    const AdamConfig& config() const { return cfg_; }

private:
    struct Moments {
        Tensor m, v;
    };
    AdamConfig cfg_;
    std::map<std::string, Moments> state_;
    std::int64_t t_ = 0;
};

struct MhaParams {
    Parameter w_q, w_k, w_v, w_o;
    Parameter b_q, b_k, b_v, b_o;
};

// Parameter vars bound once per tape so a minibatch shares one set of leaves.
struct MhaVars {
    Var w_q, w_k, w_v, w_o, b_q, b_k, b_v, b_o;
    static MhaVars bind(Tape& tape, MhaParams& p);
    static MhaVars bind_frozen(Tape& tape, const MhaParams& p);
};

// Scaled dot-product multi-head attention over X (tokens x d_model) with
// per-head slices of the fused projections. Attention rows (softmax outputs)
// are appended to *attention when provided, one (tokens x tokens) map per
// head, so callers can aggregate importance later.
Var multi_head_attention(Tape& tape, Var x, const MhaVars& p, int n_heads,
                         std::vector<Var>* attention = nullptr);

} // namespace persona::nn
