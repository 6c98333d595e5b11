#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace ctlasso {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Error categories map 1:1 onto CLI exit codes (2/3/4).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline double expit(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double logit(double p) {
    return std::log(p / (1.0 - p));
}

inline double clamp_prob(double p, double lo, double hi) {
    return p < lo ? lo : (p > hi ? hi : p);
}

// Symmetric form: clamp into [eps, 1 - eps].
inline double clamp_prob(double p, double eps) {
    return clamp_prob(p, eps, 1.0 - eps);
}

// Probabilities that feed a logit offset are kept away from {0,1}.
constexpr double kProbEps = 1e-6;

inline double nudge_unit_interval(double p) {
    return clamp_prob(p, kProbEps, 1.0 - kProbEps);
}

// Mean negative log-likelihood of a Bernoulli/quasi-binomial fit,
// valid for responses anywhere in [0,1].
double mean_binomial_nll(const VectorXd& y, const VectorXd& p);

double mean_of(const VectorXd& v);
// Sample standard deviation (n-1 denominator); 0 for n < 2.
double sd_of(const VectorXd& v);
// Population standard deviation (n denominator).
double sd_pop(const VectorXd& v);

double mean_of(const std::vector<double>& v);
double sd_of(const std::vector<double>& v);
double sd_pop(const std::vector<double>& v);

// Deterministic RNG: mt19937_64 engine with hand-rolled transforms so the
// stream does not depend on the standard library's distribution details.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }
    // Uniform double in [0, 1) with 53 random bits.
    double uniform01();
    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);
    // Standard normal via Box-Muller (one value per two uniforms).
    double normal();
    double normal(double mean, double sd) { return mean + sd * normal(); }
    bool bernoulli(double p) { return uniform01() < p; }
    // Fisher-Yates shuffle.
    void shuffle(std::vector<int>& v);

    // Derives an independent stream for a sub-task, stable across runs.
    static std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

  private:
    std::mt19937_64 engine_;
};

// Runs fn(i) for i in [0, n). With threads <= 1 this is a plain loop; with
// more threads tasks are pulled from a shared counter. Results must be
// written to per-index slots so the schedule cannot affect the output.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

// FNV-1a, used to stamp outputs with a hash of the generating config.
std::uint64_t fnv1a(const std::string& bytes);

// Shortest round-trip decimal rendering of a double ("%.17g" pruned),
// identical across runs; used by every writer that must be byte-stable.
std::string format_double(double v);

std::string to_hex(std::uint64_t v);

}  // namespace ctlasso
