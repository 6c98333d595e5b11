#include "ctlasso/common.hpp"

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <thread>

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
}

namespace ctlasso {

double mean_binomial_nll(const VectorXd& y, const VectorXd& p) {
    const Eigen::Index n = y.size();
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double pi = clamp_prob(p[i], 1e-12, 1.0 - 1e-12);
        acc -= y[i] * std::log(pi) + (1.0 - y[i]) * std::log(1.0 - pi);
    }
    return acc / static_cast<double>(n);
}

double mean_of(const VectorXd& v) {
    return v.size() == 0 ? 0.0 : v.sum() / static_cast<double>(v.size());
}

double sd_of(const VectorXd& v) {
    const Eigen::Index n = v.size();
    if (n < 2) return 0.0;
    const double m = mean_of(v);
    double ss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double d = v[i] - m;
        ss += d * d;
    }
    return std::sqrt(ss / static_cast<double>(n - 1));
}

double sd_pop(const VectorXd& v) {
    const Eigen::Index n = v.size();
    if (n < 1) return 0.0;
    const double m = mean_of(v);
    double ss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double d = v[i] - m;
        ss += d * d;
    }
    return std::sqrt(ss / static_cast<double>(n));
}

namespace {
VectorXd to_eigen(const std::vector<double>& v) {
    return Eigen::Map<const VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}
}  // namespace

double mean_of(const std::vector<double>& v) { return mean_of(to_eigen(v)); }
double sd_of(const std::vector<double>& v) { return sd_of(to_eigen(v)); }
double sd_pop(const std::vector<double>& v) { return sd_pop(to_eigen(v)); }

double Rng::uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::below(std::uint64_t n) {
    if (n == 0) return 0;
    // Mask-and-reject keeps the draw exactly uniform.
    std::uint64_t mask = n - 1;
    mask |= mask >> 1;
    mask |= mask >> 2;
    mask |= mask >> 4;
    mask |= mask >> 8;
    mask |= mask >> 16;
    mask |= mask >> 32;
    for (;;) {
        const std::uint64_t r = engine_() & mask;
        if (r < n) return r;
    }
}

double Rng::normal() {
    // u1 in (0,1] so the log is finite.
    const double u1 = (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

void Rng::shuffle(std::vector<int>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(below(i));
        std::swap(v[i - 1], v[j]);
    }
}

std::uint64_t Rng::derive_seed(std::uint64_t base, std::uint64_t stream) {
    // splitmix64 over (base, stream); decorrelates per-task streams.
    std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
    if (threads <= 1 || n <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    auto worker = [&]() {
        for (;;) {
            const int i = next.fetch_add(1);
            if (i >= n) return;
            fn(i);
        }
    };
    std::vector<std::thread> pool;
    const int k = std::min(threads, n);
    pool.reserve(static_cast<std::size_t>(k));
    for (int t = 0; t < k; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
}

std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string format_double(double v) {
    // Shortest decimal that round-trips: try increasing precision.
    char buf[64];
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

std::string to_hex(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace ctlasso
