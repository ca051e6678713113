#pragma once
// Dense row-major matrix of doubles. Everything trainable in the repo is a
// rank-2 tensor; scalars are 1x1, vectors are 1xN.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace kepler {

class Tensor {
public:
    Tensor() = default;
    Tensor(int rows, int cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, fill) {
        if (rows < 0 || cols < 0) throw std::invalid_argument("Tensor: negative shape");
    }

    static Tensor scalar(double v) {
        Tensor t(1, 1);
        t.data_[0] = v;
        return t;
    }

    static Tensor row(std::initializer_list<double> vs) {
        Tensor t(1, static_cast<int>(vs.size()));
        std::size_t i = 0;
        for (double v : vs) t.data_[i++] = v;
        return t;
    }

    static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows) {
        const int r = static_cast<int>(rows.size());
        const int c = r > 0 ? static_cast<int>(rows.begin()->size()) : 0;
        Tensor t(r, c);
        int i = 0;
        for (const auto& rv : rows) {
            if (static_cast<int>(rv.size()) != c) throw std::invalid_argument("Tensor: ragged rows");
            int j = 0;
            for (double v : rv) t.at(i, j++) = v;
            ++i;
        }
        return t;
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    std::int64_t size() const { return static_cast<std::int64_t>(rows_) * cols_; }
    bool empty() const { return size() == 0; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& at(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
    double at(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
    double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    const double* row_ptr(int r) const { return data_.data() + static_cast<std::size_t>(r) * cols_; }
    double* row_ptr(int r) { return data_.data() + static_cast<std::size_t>(r) * cols_; }

    // Value of a 1x1 tensor
    double item() const {
        if (size() != 1) throw std::logic_error("Tensor::item: not a scalar, shape " + shape_str());
        return data_[0];
    }

    bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    std::string shape_str() const {
        return "(" + std::to_string(rows_) + "x" + std::to_string(cols_) + ")";
    }

    bool operator==(const Tensor& o) const {
        return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
    }

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> data_;
};

} // namespace kepler
