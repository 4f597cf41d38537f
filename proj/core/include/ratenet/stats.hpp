#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace ratenet {

enum class SpectralWindow { hann, rectangular };

/// One-sided power spectrum of a uniformly sampled real signal. Powers are
/// normalized so that their sum equals the energy sum(x_i^2) of the
/// (mean-removed, windowed) signal; frequencies are in cycles per time unit.
struct SpectrumResult {
    std::vector<double> frequency;
    std::vector<double> power;
    double df = 0.0;
    std::size_t n = 0;
    std::string window;
    double parseval_rel_error = 0.0;  // |sum(power) - energy| / energy

    /// Index of the strongest bin with frequency >= f_min.
    std::size_t peak_bin(double f_min = 0.0) const;
    /// Amplitude of a pure sinusoid that would produce the peak bin
    /// (window coherent gain corrected).
    double peak_amplitude(double f_min = 0.0) const;
};

SpectrumResult power_spectrum(std::span<const double> signal, double dt,
                              SpectralWindow window = SpectralWindow::hann);

/// In-place complex FFT for any length (radix-2 with Bluestein fallback);
/// inverse = true applies the unscaled inverse transform divided by n.
void fft(std::vector<std::complex<double>>& data, bool inverse = false);

struct TestReport {
    std::string test;
    double statistic = 0.0;
    double p_value = 0.0;
    std::size_t n = 0;
    double alpha = 0.05;
    double critical_value = 0.0;
    bool reject = false;

    std::string to_json_string() const;
};

/// One-sample Kolmogorov-Smirnov test of samples against Gaussian(mu, v),
/// asymptotic p-value from the KS series. Requires n >= 20 and v > 0.
TestReport ks_gaussian_test(std::span<const double> samples, double mu, double v,
                            double alpha = 0.05);

/// Exact KS statistic: max gap between the empirical CDF and Gaussian(mu,v).
double ks_statistic_gaussian(std::span<const double> samples, double mu, double v);

/// Survival function of the asymptotic KS distribution, truncated series.
double ks_asymptotic_sf(double x);

/// Pearson correlation with two-sided t-approximation p-value under the
/// independence null. Requires equal lengths n >= 10 and nonzero variances.
TestReport independence_test(std::span<const double> x, std::span<const double> y,
                             double alpha = 0.05);

struct SlopeFit {
    double slope = 0.0;
    double intercept = 0.0;  // in log space
};

/// Least-squares line through (log N, log discrepancy). Requires >= 3
/// distinct N and positive discrepancies.
SlopeFit convergence_rate(std::span<const std::pair<double, double>> n_discrepancy);

}  // namespace ratenet
