#pragma once

#include "pnpk/core.hpp"

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include <algorithm>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>

namespace pnpk {

/// Compressed sparse row matrix. Column indices are strictly increasing in
/// every row and there are no duplicate entries.
class CsrMatrix {
public:
    CsrMatrix() = default;
    CsrMatrix(Index rows, Index cols, std::vector<Index> offsets, std::vector<Index> indices, std::vector<double> values)
        : rows_(rows), cols_(cols), offsets_(std::move(offsets)), indices_(std::move(indices)), values_(std::move(values)) {
        require(static_cast<Index>(offsets_.size()) == rows_ + 1, "CsrMatrix: offsets length must be rows+1");
        require(offsets_.front() == 0 && offsets_.back() == static_cast<Index>(indices_.size()),
                "CsrMatrix: last offset must equal nnz");
        require(indices_.size() == values_.size(), "CsrMatrix: index/value length mismatch");
        for (Index r = 0; r < rows_; ++r) {
            require(offsets_[r] <= offsets_[r + 1], "CsrMatrix: offsets must be nondecreasing");
            for (Index k = offsets_[r]; k < offsets_[r + 1]; ++k) {
                require(indices_[k] >= 0 && indices_[k] < cols_, "CsrMatrix: column out of range");
                if (k > offsets_[r]) require(indices_[k - 1] < indices_[k], "CsrMatrix: columns must strictly increase");
            }
        }
    }

    static CsrMatrix identity(Index n) {
        std::vector<Index> off(n + 1), idx(n);
        std::iota(off.begin(), off.end(), 0);
        std::iota(idx.begin(), idx.end(), 0);
        return CsrMatrix(n, n, std::move(off), std::move(idx), std::vector<double>(n, 1.0));
    }

    Index rows() const noexcept { return rows_; }
    Index cols() const noexcept { return cols_; }
    Index nnz() const noexcept { return static_cast<Index>(values_.size()); }
    const std::vector<Index>& offsets() const noexcept { return offsets_; }
    const std::vector<Index>& indices() const noexcept { return indices_; }
    const std::vector<double>& values() const noexcept { return values_; }

    double at(Index r, Index c) const {
        auto b = indices_.begin() + offsets_[r], e = indices_.begin() + offsets_[r + 1];
        auto it = std::lower_bound(b, e, c);
        return (it != e && *it == c) ? values_[it - indices_.begin()] : 0.0;
    }

    CsrMatrix transpose() const;
    CsrMatrix scaled(double s) const {
        CsrMatrix m = *this;
        for (double& v : m.values_) v *= s;
        return m;
    }

private:
    Index rows_ = 0, cols_ = 0;
    std::vector<Index> offsets_{0};
    std::vector<Index> indices_;
    std::vector<double> values_;
};

/// Accumulates (row, col, value) contributions; duplicates are summed.
class TripletBuilder {
public:
    TripletBuilder(Index rows, Index cols) : rows_(rows), cols_(cols) {}

    void add(Index r, Index c, double v) { entries_.push_back({r, c, v}); }
    void reserve(std::size_t n) { entries_.reserve(n); }
    Index rows() const noexcept { return rows_; }
    Index cols() const noexcept { return cols_; }

    /// Appends every entry of `m`, shifted by (row0, col0) and scaled.
    void add_block(const CsrMatrix& m, Index row0, Index col0, double scale = 1.0) {
        for (Index r = 0; r < m.rows(); ++r)
            for (Index k = m.offsets()[r]; k < m.offsets()[r + 1]; ++k)
                add(row0 + r, col0 + m.indices()[k], scale * m.values()[k]);
    }

    CsrMatrix build() const {
        std::vector<Entry> sorted = entries_;
        std::sort(sorted.begin(), sorted.end(),
                  [](const Entry& a, const Entry& b) { return a.r != b.r ? a.r < b.r : a.c < b.c; });
        std::vector<Index> off(rows_ + 1, 0), idx;
        std::vector<double> val;
        idx.reserve(sorted.size());
        val.reserve(sorted.size());
        for (std::size_t k = 0; k < sorted.size();) {
            const Entry& e = sorted[k];
            require(e.r >= 0 && e.r < rows_ && e.c >= 0 && e.c < cols_, "TripletBuilder: entry out of range");
            double v = 0.0;
            std::size_t j = k;
            for (; j < sorted.size() && sorted[j].r == e.r && sorted[j].c == e.c; ++j) v += sorted[j].v;
            idx.push_back(e.c);
            val.push_back(v);
            ++off[e.r + 1];
            k = j;
        }
        for (Index r = 0; r < rows_; ++r) off[r + 1] += off[r];
        return CsrMatrix(rows_, cols_, std::move(off), std::move(idx), std::move(val));
    }

private:
    struct Entry {
        Index r, c;
        double v;
    };
    Index rows_, cols_;
    std::vector<Entry> entries_;
};

inline CsrMatrix CsrMatrix::transpose() const {
    TripletBuilder b(cols_, rows_);
    b.reserve(values_.size());
    for (Index r = 0; r < rows_; ++r)
        for (Index k = offsets_[r]; k < offsets_[r + 1]; ++k) b.add(indices_[k], r, values_[k]);
    return b.build();
}

inline std::vector<double> spmv(const CsrMatrix& a, std::span<const double> x) {
    require(static_cast<Index>(x.size()) == a.cols(), "spmv: dimension mismatch");
    std::vector<double> y(static_cast<std::size_t>(a.rows()), 0.0);
    const auto& off = a.offsets();
    const auto& idx = a.indices();
    const auto& val = a.values();
    for (Index r = 0; r < a.rows(); ++r) {
        double s = 0.0;
        for (Index k = off[r]; k < off[r + 1]; ++k) s += val[k] * x[idx[k]];
        y[r] = s;
    }
    return y;
}

/// x^T A y.
inline double bilinear(const CsrMatrix& a, std::span<const double> x, std::span<const double> y) {
    const auto ay = spmv(a, y);
    require(x.size() == ay.size(), "bilinear: dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * ay[i];
    return s;
}

inline double norm2(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

class SingularMatrixError : public std::runtime_error {
public:
    SingularMatrixError(const std::string& what, Index pivot) : std::runtime_error(what), pivot(pivot) {}

    Index pivot; ///< column of the offending pivot in the original ordering
};

/// Sparse LU factorization with partial pivoting (Eigen's supernodal SparseLU
/// behind a CSR interface). Factor once, solve many.
class SparseLu {
public:
    explicit SparseLu(const CsrMatrix& a) : n_(a.rows()) {
        require(a.rows() == a.cols(), "solve_sparse: matrix must be square");
        std::vector<Eigen::Triplet<double>> trips;
        trips.reserve(a.values().size());
        double amax = 0.0;
        for (Index r = 0; r < a.rows(); ++r)
            for (Index k = a.offsets()[r]; k < a.offsets()[r + 1]; ++k) {
                trips.emplace_back(r, a.indices()[k], a.values()[k]);
                amax = std::max(amax, std::abs(a.values()[k]));
            }
        Eigen::SparseMatrix<double> m(n_, n_);
        m.setFromTriplets(trips.begin(), trips.end());
        m.makeCompressed();
        lu_.analyzePattern(m);
        lu_.factorize(m);
        if (lu_.info() != Eigen::Success) {
            const std::string msg = lu_.lastErrorMessage();
            Index pivot = -1;
            const auto pos = msg.find_last_not_of("0123456789");
            if (pos != std::string::npos && pos + 1 < msg.size()) pivot = lu_.original_column(std::stoi(msg.substr(pos + 1)) - 1);
            throw SingularMatrixError("sparse LU: zero pivot (" + msg + ")", pivot);
        }
        const auto [col, value] = lu_.smallest_pivot();
        if (n_ > 0 && !(std::abs(value) > n_ * std::numeric_limits<double>::epsilon() * amax)) {
            std::ostringstream os;
            os << "sparse LU: matrix singular to working precision (pivot " << value << " at column " << col << ")";
            throw SingularMatrixError(os.str(), col);
        }
    }

    std::vector<double> solve(std::span<const double> b) const {
        require(static_cast<Index>(b.size()) == n_, "solve_sparse: right-hand side has wrong length");
        Eigen::Map<const Eigen::VectorXd> rhs(b.data(), n_);
        Eigen::VectorXd x = lu_.solve(rhs);
        return std::vector<double>(x.data(), x.data() + n_);
    }

    Index size() const noexcept { return n_; }

private:
    struct Lu : Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> {
        Index original_column(Index permuted) const {
            if (permuted < 0 || permuted >= m_perm_c.size()) return -1;
            for (Index j = 0; j < m_perm_c.size(); ++j)
                if (m_perm_c.indices()(j) == permuted) return j;
            return -1;
        }
        /// Diagonal of U with the smallest magnitude, as (original column, value).
        std::pair<Index, double> smallest_pivot() const {
            Index where = -1;
            double best = std::numeric_limits<double>::infinity();
            for (Index j = 0; j < this->cols(); ++j) {
                double d = 0.0;
                for (SCMatrix::InnerIterator it(m_Lstore, j); it; ++it)
                    if (it.index() == j) {
                        d = it.value();
                        break;
                    }
                if (std::abs(d) < std::abs(best)) {
                    best = d;
                    where = j;
                }
            }
            return {original_column(where), best};
        }
    };

    Index n_;
    Lu lu_;
};

/// Solves A x = b; throws SingularMatrixError when A is singular to working precision.
inline std::vector<double> solve_sparse(const CsrMatrix& a, std::span<const double> b) {
    return SparseLu(a).solve(b);
}

} // namespace pnpk
