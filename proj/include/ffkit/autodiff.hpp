#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ffkit/tensor.hpp"

namespace ffkit::ad {

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
    Tensor value;
    Tensor grad;  // allocated lazily during backward
    bool requires_grad = false;
    std::string name;  // set for parameters
    std::vector<Var> inputs;
    std::function<void(Node&)> backward_fn;

    Tensor& ensure_grad();
};

enum class EwKind { relu, add, mul, scale };

// Reverse-mode tape. Ops are recorded in execution order, which is a valid
// topological order; backward() visits each node exactly once in reverse.
// Every op validates shapes and rejects non-finite outputs (NumericError).
class Graph {
public:
    Var leaf(Tensor value, bool requires_grad = false, std::string name = {});

    Var matmul(Var a, Var b);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var a, double s);
    Var add_scalar(Var a, double s);
    Var relu(Var a);

    // spec-level elementwise dispatcher
    Var elementwise(EwKind kind, Var a);
    Var elementwise(EwKind kind, Var a, Var b);
    Var elementwise(EwKind kind, Var a, double s);

    Var add_rowvec(Var x, Var b);               // x: r x c, b: 1 x c
    Var reduce_max_rows(Var x);                 // n x c -> 1 x c, ties to first row
    Var softmax_rows(Var x);
    Var mean_rows(Var x);                       // n x c -> 1 x c
    Var broadcast_rows(Var x, int64_t rows);    // 1 x c -> rows x c
    Var concat_cols(const std::vector<Var>& xs);
    Var slice_cols(Var x, int64_t from, int64_t to);
    Var transpose(Var x);
    Var reshape(Var x, std::vector<int64_t> shape);
    Var conv2d(Var x, Var w, Var bias, int64_t stride, int64_t pad);
    Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
    Var gather_col(Var x, int64_t col);         // 1 x c -> 1 x 1

    // mean over rows of -log softmax(logits)[target]; targets.size() == rows
    Var softmax_cross_entropy(Var logits, std::vector<int64_t> targets);
    // sum of elementwise huber(pred - target), delta = 1
    Var smooth_l1_sum(Var pred, const Tensor& target);

    void backward(const Var& root);                      // root must be 1x1
    void backward(const Var& root, const Tensor& seed);  // arbitrary root shape

    std::size_t size() const { return tape_.size(); }

private:
    Var record(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> bw,
               const char* op);
    std::vector<Var> tape_;
};

struct AttentionParams {
    Var wq, bq, wk, bk, wv, bv, wo, bo;
};

// Standard scaled dot-product self-attention per head, concatenated and
// output-projected; built from graph primitives.
Var multihead_self_attention(Graph& g, Var x, int64_t heads, const AttentionParams& p);

}  // namespace ffkit::ad
