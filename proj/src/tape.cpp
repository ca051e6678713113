#include "kepler/tape.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "kepler/kernels.hpp"

namespace kepler {

double quantize_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

int ParameterSet::add(const std::string& name, Tensor init) {
    if (index_.count(name)) throw std::invalid_argument("ParameterSet: duplicate name " + name);
    for (std::int64_t i = 0; i < init.size(); ++i) init[i] = quantize_f32(init[i]);
    Param p;
    p.name = name;
    p.grad = Tensor(init.rows(), init.cols());
    p.m = Tensor(init.rows(), init.cols());
    p.v = Tensor(init.rows(), init.cols());
    p.value = std::move(init);
    const int slot = static_cast<int>(params_.size());
    params_.push_back(std::move(p));
    index_[name] = slot;
    return slot;
}

int ParameterSet::find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? -1 : it->second;
}

Param& ParameterSet::at(const std::string& name) {
    const int slot = find(name);
    if (slot < 0) throw std::out_of_range("ParameterSet: no parameter named " + name);
    return params_[static_cast<std::size_t>(slot)];
}

const Param& ParameterSet::at(const std::string& name) const {
    const int slot = find(name);
    if (slot < 0) throw std::out_of_range("ParameterSet: no parameter named " + name);
    return params_[static_cast<std::size_t>(slot)];
}

std::int64_t ParameterSet::total_values() const {
    std::int64_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
}

void ParameterSet::zero_grads() {
    for (auto& p : params_) p.grad.fill(0.0);
}

void ParameterSet::quantize_storage() {
    for (auto& p : params_)
        for (std::int64_t i = 0; i < p.value.size(); ++i) p.value[i] = quantize_f32(p.value[i]);
}

void Tape::shape_error(const char* op, const Tensor& a, const Tensor& b) {
    throw std::invalid_argument(std::string(op) + ": incompatible shapes " + a.shape_str() +
                                " and " + b.shape_str());
}

void Tape::shape_error(const char* op, const Tensor& a) {
    throw std::invalid_argument(std::string(op) + ": invalid shape " + a.shape_str());
}

Tape::Id Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size() - 1);
}

Tape::Id Tape::input(Tensor v) {
    Node n;
    n.op = Op::Input;
    n.value = std::move(v);
    return push(std::move(n));
}

Tape::Id Tape::param(int slot) {
    if (!params_) throw std::logic_error("Tape::param: tape has no ParameterSet");
    Node n;
    n.op = Op::ParamLeaf;
    n.param_slot = slot;
    n.value = params_->at(slot).value;
    return push(std::move(n));
}

Tape::Id Tape::param(const std::string& name) {
    if (!params_) throw std::logic_error("Tape::param: tape has no ParameterSet");
    const int slot = params_->find(name);
    if (slot < 0) throw std::out_of_range("Tape::param: no parameter named " + name);
    return param(slot);
}

Tape::Id Tape::add(Id a, Id b) {
    const Tensor &va = val(a), &vb = val(b);
    if (!va.same_shape(vb)) shape_error("add", va, vb);
    Node n;
    n.op = Op::Add;
    n.a = a;
    n.b = b;
    n.value = va;
    for (std::int64_t i = 0; i < vb.size(); ++i) n.value[i] += vb[i];
    return push(std::move(n));
}

Tape::Id Tape::add_row(Id m, Id row) {
    const Tensor &vm = val(m), &vr = val(row);
    if (vr.rows() != 1 || vr.cols() != vm.cols()) shape_error("add_row", vm, vr);
    Node n;
    n.op = Op::AddRow;
    n.a = m;
    n.b = row;
    n.value = vm;
    for (int i = 0; i < vm.rows(); ++i)
        for (int j = 0; j < vm.cols(); ++j) n.value.at(i, j) += vr[j];
    return push(std::move(n));
}

Tape::Id Tape::sub(Id a, Id b) {
    const Tensor &va = val(a), &vb = val(b);
    if (!va.same_shape(vb)) shape_error("sub", va, vb);
    Node n;
    n.op = Op::Sub;
    n.a = a;
    n.b = b;
    n.value = va;
    for (std::int64_t i = 0; i < vb.size(); ++i) n.value[i] -= vb[i];
    return push(std::move(n));
}

Tape::Id Tape::mul(Id a, Id b) {
    const Tensor &va = val(a), &vb = val(b);
    if (!va.same_shape(vb)) shape_error("mul", va, vb);
    Node n;
    n.op = Op::Mul;
    n.a = a;
    n.b = b;
    n.value = va;
    for (std::int64_t i = 0; i < vb.size(); ++i) n.value[i] *= vb[i];
    return push(std::move(n));
}

Tape::Id Tape::mul_row(Id m, Id row) {
    const Tensor &vm = val(m), &vr = val(row);
    if (vr.rows() != 1 || vr.cols() != vm.cols()) shape_error("mul_row", vm, vr);
    Node n;
    n.op = Op::MulRow;
    n.a = m;
    n.b = row;
    n.value = vm;
    for (int i = 0; i < vm.rows(); ++i)
        for (int j = 0; j < vm.cols(); ++j) n.value.at(i, j) *= vr[j];
    return push(std::move(n));
}

Tape::Id Tape::affine(Id a, double scale, double shift) {
    Node n;
    n.op = Op::Affine;
    n.a = a;
    n.s0 = scale;
    n.s1 = shift;
    n.value = val(a);
    for (std::int64_t i = 0; i < n.value.size(); ++i) n.value[i] = scale * n.value[i] + shift;
    return push(std::move(n));
}

Tape::Id Tape::matmul(Id a, Id b) {
    const Tensor &va = val(a), &vb = val(b);
    if (va.cols() != vb.rows()) shape_error("matmul", va, vb);
    Node n;
    n.op = Op::MatMul;
    n.a = a;
    n.b = b;
    n.value = Tensor(va.rows(), vb.cols());
    kernels::matmul(va.data(), vb.data(), n.value.data(), va.rows(), va.cols(), vb.cols(),
                    false, false);
    return push(std::move(n));
}

Tape::Id Tape::matmul_nt(Id a, Id b) {
    const Tensor &va = val(a), &vb = val(b);
    if (va.cols() != vb.cols()) shape_error("matmul_nt", va, vb);
    Node n;
    n.op = Op::MatMulNT;
    n.a = a;
    n.b = b;
    n.value = Tensor(va.rows(), vb.rows());
    kernels::matmul(va.data(), vb.data(), n.value.data(), va.rows(), va.cols(), vb.rows(),
                    false, true);
    return push(std::move(n));
}

Tape::Id Tape::gather_rows(Id a, std::vector<int> rows) {
    const Tensor& va = val(a);
    for (int r : rows)
        if (r < 0 || r >= va.rows())
            throw std::out_of_range("gather_rows: row " + std::to_string(r) + " out of " +
                                    std::to_string(va.rows()));
    Node n;
    n.op = Op::GatherRows;
    n.a = a;
    n.value = Tensor(static_cast<int>(rows.size()), va.cols());
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::copy(va.row_ptr(rows[i]), va.row_ptr(rows[i]) + va.cols(),
                  n.value.row_ptr(static_cast<int>(i)));
    n.idx = std::move(rows);
    return push(std::move(n));
}

Tape::Id Tape::row_sum(Id a) {
    const Tensor& va = val(a);
    Node n;
    n.op = Op::RowSum;
    n.a = a;
    n.value = Tensor(va.rows(), 1);
    for (int i = 0; i < va.rows(); ++i) {
        double acc = 0.0;
        for (int j = 0; j < va.cols(); ++j) acc += va.at(i, j);
        n.value.at(i, 0) = acc;
    }
    return push(std::move(n));
}

Tape::Id Tape::row_pnorm(Id a, int p) {
    if (p != 1 && p != 2) throw std::invalid_argument("row_pnorm: p must be 1 or 2");
    const Tensor& va = val(a);
    Node n;
    n.op = Op::RowPNorm;
    n.a = a;
    n.s0 = p;
    n.value = Tensor(va.rows(), 1);
    for (int i = 0; i < va.rows(); ++i) {
        double acc = 0.0;
        if (p == 1)
            for (int j = 0; j < va.cols(); ++j) acc += std::fabs(va.at(i, j));
        else {
            for (int j = 0; j < va.cols(); ++j) acc += va.at(i, j) * va.at(i, j);
            acc = std::sqrt(acc);
        }
        n.value.at(i, 0) = acc;
    }
    return push(std::move(n));
}

Tape::Id Tape::sum_all(Id a) {
    const Tensor& va = val(a);
    Node n;
    n.op = Op::SumAll;
    n.a = a;
    double acc = 0.0;
    for (std::int64_t i = 0; i < va.size(); ++i) acc += va[i];
    n.value = Tensor::scalar(acc);
    return push(std::move(n));
}

Tape::Id Tape::mean_all(Id a) {
    const Tensor& va = val(a);
    if (va.size() == 0) shape_error("mean_all", va);
    Node n;
    n.op = Op::MeanAll;
    n.a = a;
    double acc = 0.0;
    for (std::int64_t i = 0; i < va.size(); ++i) acc += va[i];
    n.value = Tensor::scalar(acc / static_cast<double>(va.size()));
    return push(std::move(n));
}

namespace {
inline double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}
inline double stable_log_sigmoid(double x) {
    // log sigma(x) = -log(1 + e^{-x}) for x >= 0, x - log(1 + e^{x}) otherwise
    if (x >= 0.0) return -std::log1p(std::exp(-x));
    return x - std::log1p(std::exp(x));
}
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
} // namespace

Tape::Id Tape::sigmoid(Id a) {
    Node n;
    n.op = Op::Sigmoid;
    n.a = a;
    n.value = val(a);
    for (std::int64_t i = 0; i < n.value.size(); ++i) n.value[i] = stable_sigmoid(n.value[i]);
    return push(std::move(n));
}

Tape::Id Tape::log_sigmoid(Id a) {
    Node n;
    n.op = Op::LogSigmoid;
    n.a = a;
    n.value = val(a);
    for (std::int64_t i = 0; i < n.value.size(); ++i) n.value[i] = stable_log_sigmoid(n.value[i]);
    return push(std::move(n));
}

Tape::Id Tape::gelu(Id a) {
    Node n;
    n.op = Op::Gelu;
    n.a = a;
    n.value = val(a);
    for (std::int64_t i = 0; i < n.value.size(); ++i) {
        const double x = n.value[i];
        n.value[i] = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
    }
    return push(std::move(n));
}

Tape::Id Tape::cos(Id a) {
    Node n;
    n.op = Op::Cos;
    n.a = a;
    n.value = val(a);
    for (std::int64_t i = 0; i < n.value.size(); ++i) n.value[i] = std::cos(n.value[i]);
    return push(std::move(n));
}

Tape::Id Tape::sin(Id a) {
    Node n;
    n.op = Op::Sin;
    n.a = a;
    n.value = val(a);
    for (std::int64_t i = 0; i < n.value.size(); ++i) n.value[i] = std::sin(n.value[i]);
    return push(std::move(n));
}

Tape::Id Tape::softmax_rows(Id a) {
    const Tensor& va = val(a);
    if (va.cols() < 1) shape_error("softmax_rows", va);
    Node n;
    n.op = Op::SoftmaxRows;
    n.a = a;
    n.value = va;
    for (int i = 0; i < va.rows(); ++i) {
        double* row = n.value.row_ptr(i);
        double mx = row[0];
        for (int j = 1; j < va.cols(); ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (int j = 0; j < va.cols(); ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
        }
        for (int j = 0; j < va.cols(); ++j) row[j] /= sum;
    }
    return push(std::move(n));
}

Tape::Id Tape::layer_norm(Id a, double eps) {
    const Tensor& va = val(a);
    if (va.cols() < 1) shape_error("layer_norm", va);
    Node n;
    n.op = Op::LayerNorm;
    n.a = a;
    n.s0 = eps;
    n.value = Tensor(va.rows(), va.cols());
    n.aux = Tensor(va.rows(), 1); // 1 / sqrt(var + eps) per row
    for (int i = 0; i < va.rows(); ++i) {
        const double* x = va.row_ptr(i);
        double mean = 0.0;
        for (int j = 0; j < va.cols(); ++j) mean += x[j];
        mean /= va.cols();
        double var = 0.0;
        for (int j = 0; j < va.cols(); ++j) var += (x[j] - mean) * (x[j] - mean);
        var /= va.cols();
        const double inv = 1.0 / std::sqrt(var + eps);
        n.aux.at(i, 0) = inv;
        for (int j = 0; j < va.cols(); ++j) n.value.at(i, j) = (x[j] - mean) * inv;
    }
    return push(std::move(n));
}

Tape::Id Tape::dropout(Id a, double rate, Rng& rng, bool training) {
    if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate must be in [0,1)");
    if (!training || rate == 0.0) return a;
    const Tensor& va = val(a);
    Node n;
    n.op = Op::Dropout;
    n.a = a;
    n.s0 = rate;
    n.aux = Tensor(va.rows(), va.cols());
    const double keep_scale = 1.0 / (1.0 - rate);
    for (std::int64_t i = 0; i < n.aux.size(); ++i)
        n.aux[i] = rng.uniform() < rate ? 0.0 : keep_scale;
    n.value = va;
    for (std::int64_t i = 0; i < n.value.size(); ++i) n.value[i] *= n.aux[i];
    return push(std::move(n));
}

Tape::Id Tape::concat_rows(const std::vector<Id>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: empty part list");
    int rows = 0;
    const int cols = val(parts[0]).cols();
    for (Id p : parts) {
        if (val(p).cols() != cols) shape_error("concat_rows", val(parts[0]), val(p));
        rows += val(p).rows();
    }
    Node n;
    n.op = Op::ConcatRows;
    n.srcs = parts;
    n.value = Tensor(rows, cols);
    int r = 0;
    for (Id p : parts) {
        const Tensor& v = val(p);
        std::copy(v.data(), v.data() + v.size(), n.value.row_ptr(r));
        r += v.rows();
    }
    return push(std::move(n));
}

Tape::Id Tape::concat_cols(const std::vector<Id>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: empty part list");
    const int rows = val(parts[0]).rows();
    int cols = 0;
    for (Id p : parts) {
        if (val(p).rows() != rows) shape_error("concat_cols", val(parts[0]), val(p));
        cols += val(p).cols();
    }
    Node n;
    n.op = Op::ConcatCols;
    n.srcs = parts;
    n.value = Tensor(rows, cols);
    int c = 0;
    for (Id p : parts) {
        const Tensor& v = val(p);
        for (int i = 0; i < rows; ++i)
            std::copy(v.row_ptr(i), v.row_ptr(i) + v.cols(), n.value.row_ptr(i) + c);
        c += v.cols();
    }
    return push(std::move(n));
}

Tape::Id Tape::slice_rows(Id a, int start, int len) {
    const Tensor& va = val(a);
    if (start < 0 || len < 0 || start + len > va.rows())
        throw std::out_of_range("slice_rows: [" + std::to_string(start) + "," +
                                std::to_string(start + len) + ") out of " + va.shape_str());
    Node n;
    n.op = Op::SliceRows;
    n.a = a;
    n.s0 = start;
    n.value = Tensor(len, va.cols());
    std::copy(va.row_ptr(start), va.row_ptr(start) + static_cast<std::size_t>(len) * va.cols(),
              n.value.data());
    return push(std::move(n));
}

Tape::Id Tape::slice_cols(Id a, int start, int len) {
    const Tensor& va = val(a);
    if (start < 0 || len < 0 || start + len > va.cols())
        throw std::out_of_range("slice_cols: [" + std::to_string(start) + "," +
                                std::to_string(start + len) + ") out of " + va.shape_str());
    Node n;
    n.op = Op::SliceCols;
    n.a = a;
    n.s0 = start;
    n.value = Tensor(va.rows(), len);
    for (int i = 0; i < va.rows(); ++i)
        std::copy(va.row_ptr(i) + start, va.row_ptr(i) + start + len, n.value.row_ptr(i));
    return push(std::move(n));
}

Tape::Id Tape::cross_entropy(Id logits, std::vector<int> labels) {
    const Tensor& vl = val(logits);
    if (static_cast<int>(labels.size()) != vl.rows())
        throw std::invalid_argument("cross_entropy: " + std::to_string(labels.size()) +
                                    " labels for " + std::to_string(vl.rows()) + " rows");
    if (vl.rows() == 0) throw std::invalid_argument("cross_entropy: empty batch");
    for (int y : labels)
        if (y < 0 || y >= vl.cols())
            throw std::out_of_range("cross_entropy: label " + std::to_string(y) + " out of " +
                                    std::to_string(vl.cols()));
    Node n;
    n.op = Op::CrossEntropy;
    n.a = logits;
    n.aux = Tensor(vl.rows(), vl.cols()); // row softmax, reused in backward
    double total = 0.0;
    for (int i = 0; i < vl.rows(); ++i) {
        const double* row = vl.row_ptr(i);
        double mx = row[0];
        for (int j = 1; j < vl.cols(); ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (int j = 0; j < vl.cols(); ++j) {
            const double e = std::exp(row[j] - mx);
            n.aux.at(i, j) = e;
            sum += e;
        }
        for (int j = 0; j < vl.cols(); ++j) n.aux.at(i, j) /= sum;
        total += -(row[labels[static_cast<std::size_t>(i)]] - mx - std::log(sum));
    }
    n.idx = std::move(labels);
    n.value = Tensor::scalar(total / vl.rows());
    return push(std::move(n));
}

void Tape::backward(Id loss) {
    if (loss < 0 || static_cast<std::size_t>(loss) >= nodes_.size())
        throw std::out_of_range("backward: bad loss id");
    if (val(loss).size() != 1)
        throw std::invalid_argument("backward: loss must be scalar, got " +
                                    val(loss).shape_str());

    std::vector<Tensor> grads(nodes_.size());
    auto grad_of = [&](Id id) -> Tensor& {
        Tensor& g = grads[static_cast<std::size_t>(id)];
        if (g.empty()) g = Tensor(val(id).rows(), val(id).cols());
        return g;
    };
    grad_of(loss)[0] = 1.0;

    for (Id id = loss; id >= 0; --id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        Tensor& g = grads[static_cast<std::size_t>(id)];
        if (g.empty()) continue; // not on a path to the loss

        switch (n.op) {
        case Op::Input:
            break;
        case Op::ParamLeaf: {
            Tensor& pg = params_->at(n.param_slot).grad;
            for (std::int64_t i = 0; i < g.size(); ++i) pg[i] += g[i];
            break;
        }
        case Op::Add: {
            Tensor &ga = grad_of(n.a), &gb = grad_of(n.b);
            for (std::int64_t i = 0; i < g.size(); ++i) {
                ga[i] += g[i];
                gb[i] += g[i];
            }
            break;
        }
        case Op::AddRow: {
            Tensor &ga = grad_of(n.a), &gb = grad_of(n.b);
            for (int i = 0; i < g.rows(); ++i)
                for (int j = 0; j < g.cols(); ++j) {
                    ga.at(i, j) += g.at(i, j);
                    gb[j] += g.at(i, j);
                }
            break;
        }
        case Op::Sub: {
            Tensor &ga = grad_of(n.a), &gb = grad_of(n.b);
            for (std::int64_t i = 0; i < g.size(); ++i) {
                ga[i] += g[i];
                gb[i] -= g[i];
            }
            break;
        }
        case Op::Mul: {
            Tensor &ga = grad_of(n.a), &gb = grad_of(n.b);
            const Tensor &va = val(n.a), &vb = val(n.b);
            for (std::int64_t i = 0; i < g.size(); ++i) {
                ga[i] += g[i] * vb[i];
                gb[i] += g[i] * va[i];
            }
            break;
        }
        case Op::MulRow: {
            Tensor &ga = grad_of(n.a), &gb = grad_of(n.b);
            const Tensor &va = val(n.a), &vb = val(n.b);
            for (int i = 0; i < g.rows(); ++i)
                for (int j = 0; j < g.cols(); ++j) {
                    ga.at(i, j) += g.at(i, j) * vb[j];
                    gb[j] += g.at(i, j) * va.at(i, j);
                }
            break;
        }
        case Op::Affine: {
            Tensor& ga = grad_of(n.a);
            for (std::int64_t i = 0; i < g.size(); ++i) ga[i] += n.s0 * g[i];
            break;
        }
        case Op::MatMul: {
            // C = A B : dA += G B^T, dB += A^T G
            const Tensor &va = val(n.a), &vb = val(n.b);
            Tensor da(va.rows(), va.cols()), db(vb.rows(), vb.cols());
            kernels::matmul(g.data(), vb.data(), da.data(), g.rows(), g.cols(), vb.rows(),
                            false, true);
            kernels::matmul(va.data(), g.data(), db.data(), va.cols(), va.rows(), g.cols(),
                            true, false);
            Tensor &ga = grad_of(n.a), &gb = grad_of(n.b);
            for (std::int64_t i = 0; i < da.size(); ++i) ga[i] += da[i];
            for (std::int64_t i = 0; i < db.size(); ++i) gb[i] += db[i];
            break;
        }
        case Op::MatMulNT: {
            // C = A B^T : dA += G B, dB += G^T A
            const Tensor &va = val(n.a), &vb = val(n.b);
            Tensor da(va.rows(), va.cols()), db(vb.rows(), vb.cols());
            kernels::matmul(g.data(), vb.data(), da.data(), g.rows(), g.cols(), vb.cols(),
                            false, false);
            kernels::matmul(g.data(), va.data(), db.data(), g.cols(), g.rows(), va.cols(),
                            true, false);
            Tensor &ga = grad_of(n.a), &gb = grad_of(n.b);
            for (std::int64_t i = 0; i < da.size(); ++i) ga[i] += da[i];
            for (std::int64_t i = 0; i < db.size(); ++i) gb[i] += db[i];
            break;
        }
        case Op::GatherRows: {
            Tensor& ga = grad_of(n.a);
            for (std::size_t i = 0; i < n.idx.size(); ++i) {
                double* dst = ga.row_ptr(n.idx[i]);
                const double* src = g.row_ptr(static_cast<int>(i));
                for (int j = 0; j < g.cols(); ++j) dst[j] += src[j];
            }
            break;
        }
        case Op::RowSum: {
            Tensor& ga = grad_of(n.a);
            for (int i = 0; i < ga.rows(); ++i)
                for (int j = 0; j < ga.cols(); ++j) ga.at(i, j) += g.at(i, 0);
            break;
        }
        case Op::RowPNorm: {
            Tensor& ga = grad_of(n.a);
            const Tensor& va = val(n.a);
            if (static_cast<int>(n.s0) == 1) {
                for (int i = 0; i < ga.rows(); ++i)
                    for (int j = 0; j < ga.cols(); ++j) {
                        const double x = va.at(i, j);
                        const double s = x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
                        ga.at(i, j) += g.at(i, 0) * s;
                    }
            } else {
                for (int i = 0; i < ga.rows(); ++i) {
                    const double norm = n.value.at(i, 0);
                    if (norm == 0.0) continue;
                    for (int j = 0; j < ga.cols(); ++j)
                        ga.at(i, j) += g.at(i, 0) * va.at(i, j) / norm;
                }
            }
            break;
        }
        case Op::SumAll: {
            Tensor& ga = grad_of(n.a);
            for (std::int64_t i = 0; i < ga.size(); ++i) ga[i] += g[0];
            break;
        }
        case Op::MeanAll: {
            Tensor& ga = grad_of(n.a);
            const double s = g[0] / static_cast<double>(ga.size());
            for (std::int64_t i = 0; i < ga.size(); ++i) ga[i] += s;
            break;
        }
        case Op::Sigmoid: {
            Tensor& ga = grad_of(n.a);
            for (std::int64_t i = 0; i < ga.size(); ++i)
                ga[i] += g[i] * n.value[i] * (1.0 - n.value[i]);
            break;
        }
        case Op::LogSigmoid: {
            // d/dx log sigma(x) = sigma(-x)
            Tensor& ga = grad_of(n.a);
            const Tensor& va = val(n.a);
            for (std::int64_t i = 0; i < ga.size(); ++i)
                ga[i] += g[i] * stable_sigmoid(-va[i]);
            break;
        }
        case Op::Gelu: {
            Tensor& ga = grad_of(n.a);
            const Tensor& va = val(n.a);
            for (std::int64_t i = 0; i < ga.size(); ++i) {
                const double x = va[i];
                const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
                const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
                ga[i] += g[i] * (cdf + x * pdf);
            }
            break;
        }
        case Op::Cos: {
            Tensor& ga = grad_of(n.a);
            const Tensor& va = val(n.a);
            for (std::int64_t i = 0; i < ga.size(); ++i) ga[i] -= g[i] * std::sin(va[i]);
            break;
        }
        case Op::Sin: {
            Tensor& ga = grad_of(n.a);
            const Tensor& va = val(n.a);
            for (std::int64_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * std::cos(va[i]);
            break;
        }
        case Op::SoftmaxRows: {
            // dx = y * (dy - sum_j dy_j y_j)
            Tensor& ga = grad_of(n.a);
            for (int i = 0; i < ga.rows(); ++i) {
                double dot = 0.0;
                for (int j = 0; j < ga.cols(); ++j) dot += g.at(i, j) * n.value.at(i, j);
                for (int j = 0; j < ga.cols(); ++j)
                    ga.at(i, j) += n.value.at(i, j) * (g.at(i, j) - dot);
            }
            break;
        }
        case Op::LayerNorm: {
            // dx = inv * (dy - mean(dy) - y * mean(dy * y))
            Tensor& ga = grad_of(n.a);
            const int c = ga.cols();
            for (int i = 0; i < ga.rows(); ++i) {
                const double inv = n.aux.at(i, 0);
                double mean_dy = 0.0, mean_dyy = 0.0;
                for (int j = 0; j < c; ++j) {
                    mean_dy += g.at(i, j);
                    mean_dyy += g.at(i, j) * n.value.at(i, j);
                }
                mean_dy /= c;
                mean_dyy /= c;
                for (int j = 0; j < c; ++j)
                    ga.at(i, j) +=
                        inv * (g.at(i, j) - mean_dy - n.value.at(i, j) * mean_dyy);
            }
            break;
        }
        case Op::Dropout: {
            Tensor& ga = grad_of(n.a);
            for (std::int64_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * n.aux[i];
            break;
        }
        case Op::ConcatRows: {
            int r = 0;
            for (Id p : n.srcs) {
                Tensor& gp = grad_of(p);
                for (int i = 0; i < gp.rows(); ++i)
                    for (int j = 0; j < gp.cols(); ++j) gp.at(i, j) += g.at(r + i, j);
                r += gp.rows();
            }
            break;
        }
        case Op::ConcatCols: {
            int c = 0;
            for (Id p : n.srcs) {
                Tensor& gp = grad_of(p);
                for (int i = 0; i < gp.rows(); ++i)
                    for (int j = 0; j < gp.cols(); ++j) gp.at(i, j) += g.at(i, c + j);
                c += gp.cols();
            }
            break;
        }
        case Op::SliceRows: {
            Tensor& ga = grad_of(n.a);
            const int start = static_cast<int>(n.s0);
            for (int i = 0; i < g.rows(); ++i)
                for (int j = 0; j < g.cols(); ++j) ga.at(start + i, j) += g.at(i, j);
            break;
        }
        case Op::SliceCols: {
            Tensor& ga = grad_of(n.a);
            const int start = static_cast<int>(n.s0);
            for (int i = 0; i < g.rows(); ++i)
                for (int j = 0; j < g.cols(); ++j) ga.at(i, start + j) += g.at(i, j);
            break;
        }
        case Op::CrossEntropy: {
            // d logits = (softmax - onehot) * g / batch
            Tensor& ga = grad_of(n.a);
            const double scale = g[0] / ga.rows();
            for (int i = 0; i < ga.rows(); ++i) {
                for (int j = 0; j < ga.cols(); ++j) ga.at(i, j) += scale * n.aux.at(i, j);
                ga.at(i, n.idx[static_cast<std::size_t>(i)]) -= scale;
            }
            break;
        }
        }
    }
}

} // namespace kepler
