#pragma once

#include <cstddef>
#include <stdexcept>
#include <utility>
#include <vector>

#include "robba/errors.hpp"

namespace robba {

// Dense matrix over a ring-like element type (coefficients, series, boxes).
// Elements carry their own ring handle and precision, so every constructor
// takes a zero prototype to seed entries. Determinants use Laplace expansion:
// the ranks in play are small and exactness beats asymptotics here.
template <typename Elem>
class Matrix {
public:
    Matrix() = default;

    Matrix(size_t rows, size_t cols, const Elem& zero)
        : rows_(rows), cols_(cols), data_(rows * cols, zero) {}

    static Matrix identity(size_t n, const Elem& zero, const Elem& one) {
        Matrix m(n, n, zero);
        for (size_t i = 0; i < n; ++i) m.at(i, i) = one;
        return m;
    }

    size_t rows() const { return rows_; }
    size_t cols() const { return cols_; }
    bool square() const { return rows_ == cols_; }

    Elem& at(size_t i, size_t j) { return data_.at(i * cols_ + j); }
    const Elem& at(size_t i, size_t j) const { return data_.at(i * cols_ + j); }

    friend Matrix operator+(const Matrix& a, const Matrix& b) {
        a.require_shape(b.rows_, b.cols_);
        Matrix r = a;
        for (size_t k = 0; k < r.data_.size(); ++k) r.data_[k] = r.data_[k] + b.data_[k];
        return r;
    }

    friend Matrix operator-(const Matrix& a, const Matrix& b) {
        a.require_shape(b.rows_, b.cols_);
        Matrix r = a;
        for (size_t k = 0; k < r.data_.size(); ++k) r.data_[k] = r.data_[k] - b.data_[k];
        return r;
    }

    friend Matrix operator*(const Matrix& a, const Matrix& b) {
        if (a.cols_ != b.rows_) throw std::logic_error("matrix product shape mismatch");
        Matrix r(a.rows_, b.cols_, a.zero_like());
        for (size_t i = 0; i < a.rows_; ++i)
            for (size_t j = 0; j < b.cols_; ++j) {
                Elem acc = a.at(i, 0) * b.at(0, j);
                for (size_t k = 1; k < a.cols_; ++k) acc = acc + a.at(i, k) * b.at(k, j);
                r.at(i, j) = acc;
            }
        return r;
    }

    Matrix operator-() const {
        Matrix r = *this;
        for (auto& e : r.data_) e = -e;
        return r;
    }

    Matrix scaled(const Elem& c) const {
        Matrix r = *this;
        for (auto& e : r.data_) e = e * c;
        return r;
    }

    Matrix transpose() const {
        Matrix r(cols_, rows_, zero_like());
        for (size_t i = 0; i < rows_; ++i)
            for (size_t j = 0; j < cols_; ++j) r.at(j, i) = at(i, j);
        return r;
    }

    template <typename F>
    Matrix map(F&& f) const {
        Matrix r = *this;
        for (auto& e : r.data_) e = f(e);
        return r;
    }

    Matrix submatrix(const std::vector<size_t>& rows, const std::vector<size_t>& cols) const {
        Matrix r(rows.size(), cols.size(), zero_like());
        for (size_t i = 0; i < rows.size(); ++i)
            for (size_t j = 0; j < cols.size(); ++j) r.at(i, j) = at(rows[i], cols[j]);
        return r;
    }

    Elem det() const {
        if (!square()) throw std::logic_error("determinant of a nonsquare matrix");
        if (rows_ == 0) throw std::logic_error("determinant of an empty matrix");
        std::vector<size_t> idx(rows_);
        for (size_t i = 0; i < rows_; ++i) idx[i] = i;
        return det_rec(idx, idx);
    }

    // Index tuples 0 <= i_1 < ... < i_k < n in lexicographic order; shared by
    // the compound construction and anyone labeling its rows.
    static std::vector<std::vector<size_t>> index_tuples(size_t n, unsigned k) {
        std::vector<std::vector<size_t>> out;
        std::vector<size_t> cur(k);
        for (size_t i = 0; i < k; ++i) cur[i] = i;
        if (k > n) return out;
        for (;;) {
            out.push_back(cur);
            size_t t = k;
            while (t > 0 && cur[t - 1] == n - k + t - 1) --t;
            if (t == 0) break;
            ++cur[t - 1];
            for (size_t s = t; s < k; ++s) cur[s] = cur[s - 1] + 1;
        }
        return out;
    }

    // k-th exterior power: entries are the k x k minors, rows and columns
    // indexed by ascending tuples in lexicographic order.
    Matrix compound(unsigned k) const {
        if (!square()) throw std::logic_error("compound of a nonsquare matrix");
        auto tuples = index_tuples(rows_, k);
        Matrix r(tuples.size(), tuples.size(), zero_like());
        for (size_t i = 0; i < tuples.size(); ++i)
            for (size_t j = 0; j < tuples.size(); ++j)
                r.at(i, j) = det_rec(tuples[i], tuples[j]);
        return r;
    }

    // Adjugate via signed minors; inverse = adjugate * det^{-1} with the
    // element inversion supplied by the caller (each ring has its own).
    Matrix adjugate() const {
        if (!square()) throw std::logic_error("adjugate of a nonsquare matrix");
        Matrix r(rows_, cols_, zero_like());
        for (size_t i = 0; i < rows_; ++i)
            for (size_t j = 0; j < cols_; ++j) {
                std::vector<size_t> ri, ci;
                for (size_t t = 0; t < rows_; ++t)
                    if (t != i) ri.push_back(t);
                for (size_t t = 0; t < cols_; ++t)
                    if (t != j) ci.push_back(t);
                Elem m = ri.empty() ? one_fallback() : det_rec(ri, ci);
                r.at(j, i) = ((i + j) % 2 == 0) ? m : -m;
            }
        return r;
    }

    template <typename Inv>
    Matrix inverse(Inv&& invert) const {
        if (rows_ == 1 && cols_ == 1) {
            Matrix r = *this;
            r.at(0, 0) = invert(at(0, 0));
            return r;
        }
        Elem dinv = invert(det());
        return adjugate().scaled(dinv);
    }

private:
    Elem zero_like() const {
        if (data_.empty()) throw std::logic_error("matrix has no prototype element");
        return data_[0] - data_[0];
    }

    Elem one_fallback() const {
        throw std::logic_error("adjugate of a 1x1 matrix needs a ring unit; handle rank 1 directly");
    }

    Elem det_rec(const std::vector<size_t>& rows, const std::vector<size_t>& cols) const {
        size_t n = rows.size();
        if (n == 1) return at(rows[0], cols[0]);
        if (n == 2)
            return at(rows[0], cols[0]) * at(rows[1], cols[1]) -
                   at(rows[0], cols[1]) * at(rows[1], cols[0]);
        std::vector<size_t> sub(rows.begin() + 1, rows.end());
        Elem acc = zero_like();
        std::vector<size_t> rest(n - 1);
        for (size_t j = 0; j < n; ++j) {
            size_t t = 0;
            for (size_t s = 0; s < n; ++s)
                if (s != j) rest[t++] = cols[s];
            Elem term = at(rows[0], cols[j]) * det_rec(sub, rest);
            acc = (j % 2 == 0) ? acc + term : acc - term;
        }
        return acc;
    }

    void require_shape(size_t r, size_t c) const {
        if (rows_ != r || cols_ != c) throw std::logic_error("matrix shape mismatch");
    }

    size_t rows_ = 0, cols_ = 0;
    std::vector<Elem> data_;
};

}  // namespace robba
