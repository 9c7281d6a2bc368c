#pragma once

#include <cstdint>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "vca/errors.hpp"

namespace vca {

/// Dense real vector. All entries are 64-bit doubles; routines that ingest
/// external data validate finiteness at the boundary (see ensure_finite).
using Vec = std::vector<double>;

bool all_finite(std::span<const double> xs);
void ensure_finite(std::span<const double> xs, const char* what);

double dot(const Vec& a, const Vec& b);
double norm(const Vec& v);
Vec add(const Vec& a, const Vec& b);
Vec sub(const Vec& a, const Vec& b);
Vec scaled(const Vec& v, double s);
double distance(const Vec& a, const Vec& b);

/// Dense row-major matrix with immutable dimensions.
class Mat {
public:
    Mat() = default;
    Mat(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Mat identity(std::size_t n);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool operator==(const Mat& other) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Vec matvec(const Mat& m, const Vec& v);
Vec matvec_transposed(const Mat& m, const Vec& v); // m^T v
Mat matmul(const Mat& a, const Mat& b);
Mat transpose(const Mat& m);
Mat outer(const Vec& a, const Vec& b);
Mat mat_add(const Mat& a, const Mat& b);
Mat mat_scaled(const Mat& m, double s);
double frobenius_norm(const Mat& m);

/// Solves a x = b by Gaussian elimination with partial pivoting (small dense
/// systems; throws DegenerateInputError on a numerically singular pivot).
Vec solve_linear(Mat a, Vec b);

/// Deterministic pseudo-random generator: a splitmix64 counter stream.
/// Uniform doubles take the top 53 bits; Gaussians are Box-Muller, two
/// uniforms per draw, no cached spare. Identical seeds give bit-identical
/// sequences. split(id) derives an independent child stream as a pure
/// function of (original seed, id): drawing from the parent never affects
/// children, and distinct ids give unrelated streams. Instances are
/// single-owner; concurrent users must split first.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed) : seed_(seed), state_(seed) {}

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64();
    /// Uniform in [0, 1).
    double next_double();
    /// Uniform integer in [lo, hi] inclusive.
    std::int64_t next_int(std::int64_t lo, std::int64_t hi);
    /// Standard normal draw.
    double next_gaussian();

    SeededRng split(std::uint64_t stream_id) const;

private:
    std::uint64_t seed_;
    std::uint64_t state_;
};

/// Stream ids used to derive every generator from the single run seed.
enum class Stream : std::uint64_t {
    FeatureExtractor = 1,
    DenoiserInit = 2,
    ScorerInit = 3,
    ScorerTraining = 4,
    DataSynthesis = 5,
    TrainingLoop = 6,
    Dialogue = 7,
    Convergence = 8,
    LoraInit = 9,
};

inline SeededRng split_stream(std::uint64_t seed, Stream id) {
    return SeededRng(seed).split(static_cast<std::uint64_t>(id));
}

/// (u . v) / (|u||v|). Zero-norm inputs are refused rather than mapped to 0.
double cosine_similarity(const Vec& u, const Vec& v);

/// sigma * eps with eps ~ N(0, I); sigma = 0 returns the zero vector.
Vec sample_gaussian(SeededRng& rng, std::size_t dim, double sigma);

/// Largest singular value, estimated by power iteration on m^T m
/// (200 iterations or relative change < 1e-12, whichever first).
double spectral_norm(const Mat& m);

/// Largest singular value via cyclic Jacobi diagonalization of m^T m.
/// Machine-precision accurate regardless of the spectral gap, where power
/// iteration stalls; used when a bound must survive many repeated rescales.
double spectral_norm_exact(const Mat& m);

/// Returns m scaled so its largest singular value equals target_norm.
Mat spectral_rescale(const Mat& m, double target_norm);

/// Central-difference gradient: component i is (f(x+h e_i) - f(x-h e_i)) / 2h.
Vec finite_diff_gradient(const std::function<double(const Vec&)>& f, const Vec& x, double h);

/// Frozen random linear projection R^d -> R^k. Never trained; the projection
/// is fixed at construction from the seed.
class FeatureExtractor {
public:
    FeatureExtractor(std::size_t feature_dim, std::size_t latent_dim, std::uint64_t seed);

    Vec operator()(const Vec& z) const;

    std::size_t feature_dim() const { return projection_.rows(); }
    std::size_t latent_dim() const { return projection_.cols(); }
    const Mat& projection() const { return projection_; }

private:
    Mat projection_;
};

} // namespace vca
