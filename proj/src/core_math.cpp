#include "vca/core_math.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace vca {

bool all_finite(std::span<const double> xs) {
    return std::all_of(xs.begin(), xs.end(), [](double x) { return std::isfinite(x); });
}

void ensure_finite(std::span<const double> xs, const char* what) {
    if (!all_finite(xs)) {
        throw NumericError(std::string(what) + ": non-finite entry");
    }
}

double dot(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw ArgumentError("dot: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm(const Vec& v) { return std::sqrt(dot(v, v)); }

Vec add(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw ArgumentError("add: length mismatch");
    Vec out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    return out;
}

Vec sub(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw ArgumentError("sub: length mismatch");
    Vec out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
    return out;
}

Vec scaled(const Vec& v, double s) {
    Vec out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] * s;
    return out;
}

double distance(const Vec& a, const Vec& b) { return norm(sub(a, b)); }

Mat Mat::identity(std::size_t n) {
    Mat m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Vec matvec(const Mat& m, const Vec& v) {
    if (m.cols() != v.size()) throw ArgumentError("matvec: dimension mismatch");
    Vec out(m.rows(), 0.0);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < m.cols(); ++c) s += m(r, c) * v[c];
        out[r] = s;
    }
    return out;
}

Vec matvec_transposed(const Mat& m, const Vec& v) {
    if (m.rows() != v.size()) throw ArgumentError("matvec_transposed: dimension mismatch");
    Vec out(m.cols(), 0.0);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) out[c] += m(r, c) * v[r];
    }
    return out;
}

Mat matmul(const Mat& a, const Mat& b) {
    if (a.cols() != b.rows()) throw ArgumentError("matmul: dimension mismatch");
    Mat out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
        }
    }
    return out;
}

Mat transpose(const Mat& m) {
    Mat out(m.cols(), m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c) out(c, r) = m(r, c);
    return out;
}

Mat outer(const Vec& a, const Vec& b) {
    Mat out(a.size(), b.size());
    for (std::size_t r = 0; r < a.size(); ++r)
        for (std::size_t c = 0; c < b.size(); ++c) out(r, c) = a[r] * b[c];
    return out;
}

Mat mat_add(const Mat& a, const Mat& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw ArgumentError("mat_add: dimension mismatch");
    Mat out = a;
    for (std::size_t i = 0; i < out.data().size(); ++i) out.data()[i] += b.data()[i];
    return out;
}

Mat mat_scaled(const Mat& m, double s) {
    Mat out = m;
    for (double& x : out.data()) x *= s;
    return out;
}

double frobenius_norm(const Mat& m) {
    double s = 0.0;
    for (double x : m.data()) s += x * x;
    return std::sqrt(s);
}

Vec solve_linear(Mat a, Vec b) {
    const std::size_t n = a.rows();
    if (a.cols() != n || b.size() != n) throw ArgumentError("solve_linear: need square system");
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(a(r, col)) > std::abs(a(pivot, col))) pivot = r;
        if (std::abs(a(pivot, col)) < 1e-14)
            throw DegenerateInputError("solve_linear: singular matrix");
        if (pivot != col) {
            for (std::size_t c = 0; c < n; ++c) std::swap(a(pivot, c), a(col, c));
            std::swap(b[pivot], b[col]);
        }
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = a(r, col) / a(col, col);
            if (f == 0.0) continue;
            for (std::size_t c = col; c < n; ++c) a(r, c) -= f * a(col, c);
            b[r] -= f * b[col];
        }
    }
    Vec x(n, 0.0);
    for (std::size_t ri = n; ri-- > 0;) {
        double s = b[ri];
        for (std::size_t c = ri + 1; c < n; ++c) s -= a(ri, c) * x[c];
        x[ri] = s / a(ri, ri);
    }
    return x;
}

namespace {

inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

} // namespace

std::uint64_t SeededRng::next_u64() {
    state_ += kGolden;
    return mix64(state_);
}

double SeededRng::next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::int64_t SeededRng::next_int(std::int64_t lo, std::int64_t hi) {
    if (lo > hi) throw ArgumentError("next_int: empty range");
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(next_u64() % span);
}

double SeededRng::next_gaussian() {
    double u1 = next_double();
    const double u2 = next_double();
    if (u1 <= 0.0) u1 = 0x1.0p-53; // log(0) guard
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

SeededRng SeededRng::split(std::uint64_t stream_id) const {
    return SeededRng(mix64(mix64(seed_) + kGolden * (stream_id + 1)));
}

double cosine_similarity(const Vec& u, const Vec& v) {
    const double nu = norm(u);
    const double nv = norm(v);
    if (nu == 0.0 || nv == 0.0)
        throw DegenerateInputError("cosine_similarity: zero-norm input");
    return dot(u, v) / (nu * nv);
}

Vec sample_gaussian(SeededRng& rng, std::size_t dim, double sigma) {
    if (sigma < 0.0) throw ArgumentError("sample_gaussian: negative sigma");
    Vec out(dim, 0.0);
    if (sigma == 0.0) return out;
    for (double& x : out) x = sigma * rng.next_gaussian();
    return out;
}

double spectral_norm(const Mat& m) {
    if (m.rows() == 0 || m.cols() == 0 || frobenius_norm(m) == 0.0)
        throw DegenerateInputError("spectral_norm: zero matrix");
    // Iterate v <- normalize(m^T m v); the start vector comes from a fixed
    // internal stream so estimates are reproducible.
    SeededRng rng(0x5eeded);
    Vec v(m.cols());
    for (double& x : v) x = rng.next_gaussian();
    double vn = norm(v);
    for (double& x : v) x /= vn;

    double estimate = 0.0;
    for (int iter = 0; iter < 200; ++iter) {
        const Vec mv = matvec(m, v);
        const double next = norm(mv);
        if (next == 0.0) return 0.0;
        Vec w = matvec_transposed(m, mv);
        const double wn = norm(w);
        if (wn == 0.0) return next;
        for (double& x : w) x /= wn;
        v = std::move(w);
        if (iter > 0 && std::abs(next - estimate) <= 1e-12 * next) {
            return next;
        }
        estimate = next;
    }
    return estimate;
}

double spectral_norm_exact(const Mat& m) {
    if (m.rows() == 0 || m.cols() == 0 || frobenius_norm(m) == 0.0)
        throw DegenerateInputError("spectral_norm_exact: zero matrix");
    const std::size_t n = m.cols();
    Mat s = matmul(transpose(m), m);
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                if (s(p, q) == 0.0) continue;
                off = std::max(off, std::abs(s(p, q)));
                const double theta = (s(q, q) - s(p, p)) / (2.0 * s(p, q));
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(1.0 + theta * theta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double sn = c * t;
                for (std::size_t i = 0; i < n; ++i) {
                    const double sip = s(i, p), siq = s(i, q);
                    s(i, p) = c * sip - sn * siq;
                    s(i, q) = sn * sip + c * siq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double spi = s(p, i), sqi = s(q, i);
                    s(p, i) = c * spi - sn * sqi;
                    s(q, i) = sn * spi + c * sqi;
                }
            }
        }
        if (off < 1e-18 * frobenius_norm(s)) break;
    }
    double top = 0.0;
    for (std::size_t i = 0; i < n; ++i) top = std::max(top, s(i, i));
    return std::sqrt(std::max(top, 0.0));
}

Mat spectral_rescale(const Mat& m, double target_norm) {
    if (target_norm <= 0.0) throw ArgumentError("spectral_rescale: target must be > 0");
    const double top = spectral_norm(m); // throws on zero matrix
    return mat_scaled(m, target_norm / top);
}

Vec finite_diff_gradient(const std::function<double(const Vec&)>& f, const Vec& x, double h) {
    if (h <= 0.0) throw ArgumentError("finite_diff_gradient: h must be > 0");
    Vec grad(x.size(), 0.0);
    Vec probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        probe[i] = x[i] + h;
        const double fp = f(probe);
        probe[i] = x[i] - h;
        const double fm = f(probe);
        probe[i] = x[i];
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw NumericError("finite_diff_gradient: non-finite evaluation");
        grad[i] = (fp - fm) / (2.0 * h);
    }
    return grad;
}

FeatureExtractor::FeatureExtractor(std::size_t feature_dim, std::size_t latent_dim,
                                   std::uint64_t seed)
    : projection_(feature_dim, latent_dim) {
    if (feature_dim == 0 || latent_dim == 0)
        throw ArgumentError("FeatureExtractor: zero dimension");
    SeededRng rng = split_stream(seed, Stream::FeatureExtractor);
    const double scale = 1.0 / std::sqrt(static_cast<double>(latent_dim));
    for (double& x : projection_.data()) x = scale * rng.next_gaussian();
}

Vec FeatureExtractor::operator()(const Vec& z) const {
    return matvec(projection_, z);
}

} // namespace vca
