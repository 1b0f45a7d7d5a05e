#include "fiss/numkit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "fiss/error.hpp"

namespace fiss::num {

//---------------------------------------------------------------------------//
// Matrix
//---------------------------------------------------------------------------//

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill)
{
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> entries)
    : rows_(rows), cols_(cols), data_(std::move(entries))
{
    require(data_.size() == rows_ * cols_, Errc::DimensionMismatch,
            "entry count must equal rows*cols");
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows)
{
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        require(r.size() == cols_, Errc::DimensionMismatch, "ragged matrix literal");
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

Matrix Matrix::identity(std::size_t n)
{
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        m(i, i) = 1.0;
    }
    return m;
}

Matrix Matrix::diagonal(std::span<const double> diag)
{
    Matrix m(diag.size(), diag.size());
    for (std::size_t i = 0; i < diag.size(); ++i) {
        m(i, i) = diag[i];
    }
    return m;
}

Matrix Matrix::column(std::span<const double> v)
{
    return Matrix(v.size(), 1, std::vector<double>(v.begin(), v.end()));
}

Vector Matrix::col(std::size_t j) const
{
    Vector out(rows_);
    for (std::size_t i = 0; i < rows_; ++i) {
        out[i] = (*this)(i, j);
    }
    return out;
}

bool Matrix::all_finite() const noexcept
{
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

//---------------------------------------------------------------------------//
// Algebra
//---------------------------------------------------------------------------//

Matrix transpose(const Matrix& m)
{
    Matrix t(m.cols(), m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            t(j, i) = m(i, j);
        }
    }
    return t;
}

Matrix multiply(const Matrix& a, const Matrix& b)
{
    require(a.cols() == b.rows(), Errc::DimensionMismatch, "multiply: inner dimensions differ");
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto crow = c.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) {
                continue;
            }
            auto brow = b.row(k);
            for (std::size_t j = 0; j < b.cols(); ++j) {
                crow[j] += aik * brow[j];
            }
        }
    }
    return c;
}

Vector multiply(const Matrix& a, std::span<const double> x)
{
    require(a.cols() == x.size(), Errc::DimensionMismatch, "matvec: dimension mismatch");
    Vector y(a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        y[i] = dot(a.row(i), x);
    }
    return y;
}

Vector multiply_transposed(const Matrix& a, std::span<const double> x)
{
    require(a.rows() == x.size(), Errc::DimensionMismatch, "matvec^T: dimension mismatch");
    Vector y(a.cols(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double xi = x[i];
        auto arow = a.row(i);
        for (std::size_t j = 0; j < a.cols(); ++j) {
            y[j] += arow[j] * xi;
        }
    }
    return y;
}

Matrix gram(const Matrix& a)
{
    const std::size_t p = a.cols();
    Matrix g(p, p);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto r = a.row(i);
        for (std::size_t j = 0; j < p; ++j) {
            const double rj = r[j];
            if (rj == 0.0) {
                continue;
            }
            for (std::size_t k = j; k < p; ++k) {
                g(j, k) += rj * r[k];
            }
        }
    }
    for (std::size_t j = 0; j < p; ++j) {
        for (std::size_t k = 0; k < j; ++k) {
            g(j, k) = g(k, j);
        }
    }
    return g;
}

Matrix weighted_gram(const Matrix& a, std::span<const double> w)
{
    require(a.rows() == w.size(), Errc::DimensionMismatch, "weighted_gram: weight length");
    const std::size_t p = a.cols();
    Matrix g(p, p);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto r = a.row(i);
        for (std::size_t j = 0; j < p; ++j) {
            const double rj = r[j] * w[i];
            for (std::size_t k = j; k < p; ++k) {
                g(j, k) += rj * r[k];
            }
        }
    }
    for (std::size_t j = 0; j < p; ++j) {
        for (std::size_t k = 0; k < j; ++k) {
            g(j, k) = g(k, j);
        }
    }
    return g;
}

Matrix add(const Matrix& a, const Matrix& b)
{
    require(a.rows() == b.rows() && a.cols() == b.cols(), Errc::DimensionMismatch, "add");
    Matrix c = a;
    auto ce = c.entries();
    auto be = b.entries();
    for (std::size_t i = 0; i < ce.size(); ++i) {
        ce[i] += be[i];
    }
    return c;
}

Matrix subtract(const Matrix& a, const Matrix& b)
{
    require(a.rows() == b.rows() && a.cols() == b.cols(), Errc::DimensionMismatch, "subtract");
    Matrix c = a;
    auto ce = c.entries();
    auto be = b.entries();
    for (std::size_t i = 0; i < ce.size(); ++i) {
        ce[i] -= be[i];
    }
    return c;
}

Matrix scale(const Matrix& a, double s)
{
    Matrix c = a;
    for (double& v : c.entries()) {
        v *= s;
    }
    return c;
}

Matrix select_columns(const Matrix& a, std::span<const std::size_t> cols)
{
    Matrix out(a.rows(), cols.size());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < cols.size(); ++j) {
            out(i, j) = a(i, cols[j]);
        }
    }
    return out;
}

Matrix select_rows(const Matrix& a, std::span<const std::size_t> rows)
{
    Matrix out(rows.size(), a.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        auto src = a.row(rows[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

double frobenius_norm(const Matrix& a)
{
    return norm2(a.entries());
}

bool is_symmetric(const Matrix& m, double rel_tol)
{
    if (!m.is_square()) {
        return false;
    }
    const double scale_ref = std::max(frobenius_norm(m), 1e-300);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            if (std::abs(m(i, j) - m(j, i)) > rel_tol * scale_ref) {
                return false;
            }
        }
    }
    return true;
}

Matrix symmetrize(const Matrix& m, double rel_tol)
{
    require(m.is_square(), Errc::NonSquare, "matrix must be square");
    require(m.all_finite(), Errc::DomainError, "matrix has non-finite entries");
    require(is_symmetric(m, rel_tol), Errc::DomainError, "matrix is not symmetric");
    Matrix s = m;
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            const double v = 0.5 * (m(i, j) + m(j, i));
            s(i, j) = v;
            s(j, i) = v;
        }
    }
    return s;
}

double dot(std::span<const double> a, std::span<const double> b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a[i] * b[i];
    }
    return s;
}

double norm2(std::span<const double> a)
{
    return std::sqrt(dot(a, a));
}

double norm_inf(std::span<const double> a)
{
    double m = 0.0;
    for (double v : a) {
        m = std::max(m, std::abs(v));
    }
    return m;
}

Vector axpy(double a, std::span<const double> x, std::span<const double> y)
{
    Vector out(y.begin(), y.end());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] += a * x[i];
    }
    return out;
}

//---------------------------------------------------------------------------//
// Factorizations
//---------------------------------------------------------------------------//

Matrix cholesky(const Matrix& m)
{
    const Matrix s = symmetrize(m);
    const std::size_t n = s.rows();
    Matrix l(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double d = s(j, j);
        for (std::size_t k = 0; k < j; ++k) {
            d -= l(j, k) * l(j, k);
        }
        if (!(d > 0.0)) {
            fail(Errc::NotPositiveDefinite, "non-positive pivot at column " + std::to_string(j));
        }
        const double ljj = std::sqrt(d);
        l(j, j) = ljj;
        for (std::size_t i = j + 1; i < n; ++i) {
            double v = s(i, j);
            for (std::size_t k = 0; k < j; ++k) {
                v -= l(i, k) * l(j, k);
            }
            l(i, j) = v / ljj;
        }
    }
    return l;
}

Vector cholesky_solve(const Matrix& lower, std::span<const double> rhs)
{
    const std::size_t n = lower.rows();
    require(rhs.size() == n, Errc::DimensionMismatch, "cholesky_solve: rhs length");
    Vector y(rhs.begin(), rhs.end());
    for (std::size_t i = 0; i < n; ++i) {
        double v = y[i];
        for (std::size_t k = 0; k < i; ++k) {
            v -= lower(i, k) * y[k];
        }
        y[i] = v / lower(i, i);
    }
    for (std::size_t ii = n; ii-- > 0;) {
        double v = y[ii];
        for (std::size_t k = ii + 1; k < n; ++k) {
            v -= lower(k, ii) * y[k];
        }
        y[ii] = v / lower(ii, ii);
    }
    return y;
}

Vector solve_spd(const Matrix& m, std::span<const double> rhs)
{
    return cholesky_solve(cholesky(m), rhs);
}

Matrix spd_inverse(const Matrix& m)
{
    const Matrix l = cholesky(m);
    const std::size_t n = m.rows();
    Matrix inv(n, n);
    Vector e(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        std::fill(e.begin(), e.end(), 0.0);
        e[j] = 1.0;
        const Vector col = cholesky_solve(l, e);
        for (std::size_t i = 0; i < n; ++i) {
            inv(i, j) = col[i];
        }
    }
    return symmetrize(inv, 1e-6);
}

SymEigen sym_eigen(const Matrix& m)
{
    require(m.is_square(), Errc::NonSquare, "sym_eigen requires a square matrix");
    Matrix a = symmetrize(m);
    const std::size_t n = a.rows();
    Matrix v = Matrix::identity(n);
    const double target = 1e-12 * std::max(frobenius_norm(a), 1e-300);

    auto off_norm = [&] {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                s += 2.0 * a(i, j) * a(i, j);
            }
        }
        return std::sqrt(s);
    };

    for (int sweep = 0; sweep < 100 && off_norm() > target; ++sweep) {
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (std::abs(apq) < 1e-300) {
                    continue;
                }
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0)
                                 / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k);
                    const double aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p);
                    const double vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });
    SymEigen out{Vector(n), Matrix(n, n)};
    for (std::size_t j = 0; j < n; ++j) {
        out.values[j] = a(order[j], order[j]);
        for (std::size_t k = 0; k < n; ++k) {
            out.vectors(k, j) = v(k, order[j]);
        }
    }
    return out;
}

Matrix spd_inverse_sqrt(const Matrix& m)
{
    const SymEigen e = sym_eigen(m);
    const std::size_t n = m.rows();
    const double tol = 1e-14 * std::max(std::abs(e.values.empty() ? 0.0 : e.values.front()), 1e-300);
    for (double lam : e.values) {
        if (!(lam > tol)) {
            fail(Errc::NotPositiveDefinite, "spd_inverse_sqrt: non-positive eigenvalue");
        }
    }
    Matrix out(n, n);
    for (std::size_t k = 0; k < n; ++k) {
        const double w = 1.0 / std::sqrt(e.values[k]);
        for (std::size_t i = 0; i < n; ++i) {
            const double vik = e.vectors(i, k) * w;
            for (std::size_t j = 0; j < n; ++j) {
                out(i, j) += vik * e.vectors(j, k);
            }
        }
    }
    return out;
}

//---------------------------------------------------------------------------//
// Special functions
//---------------------------------------------------------------------------//

namespace {

// Inverts a nondecreasing cdf on [lo, hi] to a bracket of width 1e-10.
template <class Cdf>
double bisect_cdf(Cdf&& cdf, double p, double lo, double hi)
{
    for (int it = 0; it < 400 && hi - lo > 1e-10; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid == lo || mid == hi) {
            break;
        }
        if (cdf(mid) < p) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

void check_probability(double p)
{
    require(p > 0.0 && p < 1.0, Errc::DomainError, "probability must lie in (0, 1)");
}

}  // namespace

double log_gamma(double x)
{
    require(x > 0.0 && std::isfinite(x), Errc::DomainError, "log_gamma requires x > 0");
    return boost::math::lgamma(x);
}

double normal_cdf(double x)
{
    require(!std::isnan(x), Errc::DomainError, "normal_cdf of NaN");
    return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

double normal_quantile(double p)
{
    check_probability(p);
    return bisect_cdf([](double x) { return normal_cdf(x); }, p, -38.5, 38.5);
}

double chisq_cdf(double x, double df)
{
    require(df >= 0.0, Errc::DomainError, "chi-square df must be nonnegative");
    if (df == 0.0) {
        return x >= 0.0 ? 1.0 : 0.0;
    }
    if (x <= 0.0) {
        return 0.0;
    }
    return boost::math::gamma_p(0.5 * df, 0.5 * x);
}

double chisq_quantile(double p, double df)
{
    check_probability(p);
    require(df >= 0.0, Errc::DomainError, "chi-square df must be nonnegative");
    if (df == 0.0) {
        return 0.0;  // point mass at zero
    }
    double hi = std::max(1.0, df);
    while (chisq_cdf(hi, df) < p) {
        hi *= 2.0;
    }
    return bisect_cdf([df](double x) { return chisq_cdf(x, df); }, p, 0.0, hi);
}

double t_cdf(double x, double df)
{
    require(df > 0.0, Errc::DomainError, "t df must be positive");
    require(!std::isnan(x), Errc::DomainError, "t_cdf of NaN");
    if (std::isinf(x)) {
        return x > 0 ? 1.0 : 0.0;
    }
    const double tail = 0.5 * boost::math::ibeta(0.5 * df, 0.5, df / (df + x * x));
    return x >= 0.0 ? 1.0 - tail : tail;
}

double t_quantile(double p, double df)
{
    check_probability(p);
    require(df > 0.0, Errc::DomainError, "t df must be positive");
    double hi = 8.0;
    while (t_cdf(hi, df) < p) {
        hi *= 2.0;
    }
    double lo = -8.0;
    while (t_cdf(lo, df) > p) {
        lo *= 2.0;
    }
    return bisect_cdf([df](double x) { return t_cdf(x, df); }, p, lo, hi);
}

}  // namespace fiss::num
