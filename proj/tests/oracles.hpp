#pragma once

// Independent reference evaluations used only by the tests. They rely on
// 50-digit Boost.Multiprecision arithmetic and never call into the library.

#include <boost/math/distributions/normal.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>

namespace oracle {

using hp = boost::multiprecision::cpp_bin_float_50;

inline hp normal_pdf(hp x, hp mu, hp sigma) {
    const hp z = (x - mu) / sigma;
    return exp(-z * z / 2) / (sigma * sqrt(2 * boost::math::constants::pi<hp>()));
}

inline hp normal_cdf(hp x, hp mu, hp sigma) {
    return erfc(-(x - mu) / (sigma * sqrt(hp(2)))) / 2;
}

inline hp tn_pdf(hp a, hp mu, hp sigma) {
    return normal_pdf(a, mu, sigma) / (normal_cdf(1, mu, sigma) - normal_cdf(0, mu, sigma));
}

inline double tn_pdf_d(double a, double mu, double sigma) { return static_cast<double>(tn_pdf(a, mu, sigma)); }

inline double tn_cdf_d(double a, double mu, double sigma) {
    const hp lo = normal_cdf(0, mu, sigma);
    return static_cast<double>((normal_cdf(a, mu, sigma) - lo) / (normal_cdf(1, mu, sigma) - lo));
}

// Mean of N(mu, sigma^2) truncated to [0, 1]: mu + sigma (phi(alpha) - phi(beta)) / Z.
inline double tn_mean_d(double mu, double sigma) {
    const hp alpha = (hp(0) - mu) / sigma;
    const hp beta = (hp(1) - mu) / sigma;
    const hp z = normal_cdf(beta, 0, 1) - normal_cdf(alpha, 0, 1);
    return static_cast<double>(mu + sigma * (normal_pdf(alpha, 0, 1) - normal_pdf(beta, 0, 1)) / z);
}

}  // namespace oracle

namespace testing_support {

class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("tnagg-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

}  // namespace testing_support

namespace oracle {

// Double-precision Boost variant for bulk evaluation.
inline double tn_cdf_fast(double a, double mu, double sigma) {
    const boost::math::normal_distribution<double> n(mu, sigma);
    const double lo = boost::math::cdf(n, 0.0);
    return (boost::math::cdf(n, a) - lo) / (boost::math::cdf(n, 1.0) - lo);
}

}  // namespace oracle
