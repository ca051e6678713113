#pragma once
// Reverse-mode autodiff on a linear tape. Nodes are recorded in construction
// order, which is a topological order by construction; backward() walks the
// tape in reverse and accumulates gradients into the owning ParameterSet.
//
// The primitive set is the minimal closure over the models in this repo:
// elementwise arithmetic, matmul (plain and A*B^T), row gather, row p-norms
// and sums, sigmoid / log-sigmoid / GELU / cos / sin, row softmax, layer
// norm, dropout, concat / slice, reductions, and a fused softmax
// cross-entropy.

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "kepler/rng.hpp"
#include "kepler/tensor.hpp"

namespace kepler {

struct Param {
    std::string name;
    Tensor value;
    Tensor grad;
    // adaptive-moment state
    Tensor m;
    Tensor v;
};

class ParameterSet {
public:
    // Returns the slot index. Values are rounded to 32-bit storage precision
    // on entry; see quantize_storage().
    int add(const std::string& name, Tensor init);

    int find(const std::string& name) const; // -1 when absent
    bool has(const std::string& name) const { return find(name) >= 0; }
    Param& at(int slot) { return params_[static_cast<std::size_t>(slot)]; }
    const Param& at(int slot) const { return params_[static_cast<std::size_t>(slot)]; }
    Param& at(const std::string& name);
    const Param& at(const std::string& name) const;

    int count() const { return static_cast<int>(params_.size()); }
    std::int64_t total_values() const;

    void zero_grads();

    // Parameter values are kept exactly representable in 32-bit floats at all
    // times (math still runs in 64-bit). This makes the f32 checkpoint
    // container lossless: save -> load -> evaluate is bit-identical.
    void quantize_storage();

private:
    std::vector<Param> params_;
    std::unordered_map<std::string, int> index_;
};

double quantize_f32(double v);

enum class Op : std::uint8_t {
    Input, ParamLeaf,
    Add, AddRow, Sub, Mul, MulRow, Affine,
    MatMul, MatMulNT,
    GatherRows,
    RowSum, RowPNorm,
    SumAll, MeanAll,
    Sigmoid, LogSigmoid, Gelu, Cos, Sin,
    SoftmaxRows, LayerNorm, Dropout,
    ConcatRows, ConcatCols, SliceRows, SliceCols,
    CrossEntropy,
};

class Tape {
public:
    using Id = std::int32_t;

    explicit Tape(ParameterSet* params = nullptr) : params_(params) {}

    Id input(Tensor v);
    Id scalar(double v) { return input(Tensor::scalar(v)); }
    Id param(int slot);
    Id param(const std::string& name);

    Id add(Id a, Id b);
    Id add_row(Id m, Id row);   // (r,c) + (1,c)
    Id sub(Id a, Id b);
    Id mul(Id a, Id b);
    Id mul_row(Id m, Id row);   // (r,c) * (1,c)
    Id affine(Id a, double scale, double shift);

    Id matmul(Id a, Id b);      // A(m,k) * B(k,n)
    Id matmul_nt(Id a, Id b);   // A(m,k) * B(n,k)^T

    Id gather_rows(Id a, std::vector<int> rows);

    Id row_sum(Id a);               // (m,n) -> (m,1)
    Id row_pnorm(Id a, int p);      // p in {1,2}; |.|_1 subgradient is 0 at 0
    Id sum_all(Id a);
    Id mean_all(Id a);

    Id sigmoid(Id a);
    Id log_sigmoid(Id a);           // stable branch form
    Id gelu(Id a);                  // exact erf form
    Id cos(Id a);
    Id sin(Id a);

    Id softmax_rows(Id a);
    Id layer_norm(Id a, double eps = 1e-5);
    Id dropout(Id a, double rate, Rng& rng, bool training);

    Id concat_rows(const std::vector<Id>& parts);
    Id concat_cols(const std::vector<Id>& parts);
    Id slice_rows(Id a, int start, int len);
    Id slice_cols(Id a, int start, int len);

    // Mean cross-entropy of row-wise softmax classification against labels.
    Id cross_entropy(Id logits, std::vector<int> labels);

    const Tensor& value(Id id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    std::size_t node_count() const { return nodes_.size(); }

    // Accumulates d loss / d param into every referenced ParameterSet slot.
    // loss must be 1x1.
    void backward(Id loss);

private:
    struct Node {
        Op op;
        Id a = -1, b = -1;
        std::vector<Id> srcs;
        std::vector<int> idx;
        double s0 = 0.0, s1 = 0.0;
        int param_slot = -1;
        Tensor value;
        Tensor aux;
    };

    Id push(Node n);
    const Tensor& val(Id id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    [[noreturn]] static void shape_error(const char* op, const Tensor& a, const Tensor& b);
    [[noreturn]] static void shape_error(const char* op, const Tensor& a);

    ParameterSet* params_ = nullptr;
    std::vector<Node> nodes_;
};

} // namespace kepler
