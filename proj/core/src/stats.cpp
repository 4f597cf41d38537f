#include "ratenet/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "ratenet/model.hpp"

namespace ratenet {

namespace {

using cd = std::complex<double>;

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

void fft_radix2(std::vector<cd>& a, bool inverse) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1)
            j ^= bit;
        j ^= bit;
        if (i < j)
            std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = 2.0 * std::numbers::pi / double(len) * (inverse ? 1.0 : -1.0);
        const cd wl(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            cd w(1.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const cd u = a[i + k];
                const cd v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
    if (inverse)
        for (auto& x : a)
            x /= double(n);
}

// Bluestein's chirp-z transform turns any-length DFT into a power-of-two
// convolution
void fft_bluestein(std::vector<cd>& a, bool inverse) {
    const std::size_t n = a.size();
    std::size_t m = 1;
    while (m < 2 * n - 1)
        m <<= 1;
    std::vector<cd> chirp(n);
    const double sign = inverse ? 1.0 : -1.0;
    for (std::size_t k = 0; k < n; ++k) {
        // k^2 mod 2n avoids precision loss for large k
        const std::size_t k2 = (std::size_t(k) * k) % (2 * n);
        const double ang = sign * std::numbers::pi * double(k2) / double(n);
        chirp[k] = cd(std::cos(ang), std::sin(ang));
    }
    std::vector<cd> x(m, cd(0.0)), y(m, cd(0.0));
    for (std::size_t k = 0; k < n; ++k)
        x[k] = a[k] * chirp[k];
    y[0] = std::conj(chirp[0]);
    for (std::size_t k = 1; k < n; ++k)
        y[k] = y[m - k] = std::conj(chirp[k]);
    fft_radix2(x, false);
    fft_radix2(y, false);
    for (std::size_t k = 0; k < m; ++k)
        x[k] *= y[k];
    fft_radix2(x, true);
    for (std::size_t k = 0; k < n; ++k)
        a[k] = x[k] * chirp[k];
    if (inverse)
        for (auto& v : a)
            v /= double(n);
}

}  // namespace

void fft(std::vector<cd>& data, bool inverse) {
    if (data.empty())
        return;
    if (is_power_of_two(data.size()))
        fft_radix2(data, inverse);
    else
        fft_bluestein(data, inverse);
}

std::size_t SpectrumResult::peak_bin(double f_min) const {
    std::size_t best = 0;
    double best_power = -1.0;
    for (std::size_t k = 0; k < frequency.size(); ++k) {
        if (frequency[k] < f_min || k == 0)
            continue;
        if (power[k] > best_power) {
            best_power = power[k];
            best = k;
        }
    }
    return best;
}

double SpectrumResult::peak_amplitude(double f_min) const {
    const std::size_t k = peak_bin(f_min);
    if (k == 0)
        return 0.0;
    // one-sided power of a sinusoid A sin(2 pi f t) after windowing:
    // P = (A * cg * n)^2 / (2n) * 2 = A^2 cg^2 n ... solved for A below
    const double cg = window == "hann" ? 0.5 : 1.0;
    return std::sqrt(2.0 * power[k] / double(n)) / cg;
}

SpectrumResult power_spectrum(std::span<const double> signal, double dt, SpectralWindow window) {
    if (signal.size() < 16)
        throw std::invalid_argument("power_spectrum: need at least 16 samples");
    if (!(dt > 0.0))
        throw std::invalid_argument("power_spectrum: dt must be > 0");
    const std::size_t n = signal.size();
    const double mean = std::accumulate(signal.begin(), signal.end(), 0.0) / double(n);

    std::vector<cd> data(n);
    double energy = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        double w = 1.0;
        if (window == SpectralWindow::hann)
            w = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * double(k) / double(n)));
        const double x = (signal[k] - mean) * w;
        data[k] = cd(x, 0.0);
        energy += x * x;
    }
    fft(data);

    SpectrumResult out;
    out.n = n;
    out.window = window == SpectralWindow::hann ? "hann" : "rectangular";
    out.df = 1.0 / (double(n) * dt);
    const std::size_t half = n / 2;
    out.frequency.resize(half + 1);
    out.power.resize(half + 1);
    double total = 0.0;
    for (std::size_t k = 0; k <= half; ++k) {
        out.frequency[k] = double(k) * out.df;
        double pw = std::norm(data[k]) / double(n);
        if (k != 0 && !(n % 2 == 0 && k == half))
            pw *= 2.0;  // fold the mirrored negative-frequency bin
        out.power[k] = pw;
        total += pw;
    }
    out.parseval_rel_error = energy > 0.0 ? std::abs(total - energy) / energy : std::abs(total);
    return out;
}

double ks_statistic_gaussian(std::span<const double> samples, double mu, double v) {
    std::vector<double> sorted(samples.begin(), samples.end());
    std::sort(sorted.begin(), sorted.end());
    const double n = double(sorted.size());
    const double sd = std::sqrt(v);
    double d = 0.0;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        const double cdf = normal_cdf((sorted[i] - mu) / sd);
        d = std::max(d, std::abs(cdf - double(i + 1) / n));
        d = std::max(d, std::abs(cdf - double(i) / n));
    }
    return d;
}

double ks_asymptotic_sf(double x) {
    if (x <= 0.0)
        return 1.0;
    double sum = 0.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = std::exp(-2.0 * double(k) * double(k) * x * x);
        sum += (k % 2 == 1 ? term : -term);
        if (term < 1e-16)
            break;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

namespace {

// inverse of the asymptotic KS survival function, bisected; used for
// critical values
double ks_asymptotic_isf(double alpha) {
    double lo = 1e-3, hi = 5.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (ks_asymptotic_sf(mid) > alpha)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace

TestReport ks_gaussian_test(std::span<const double> samples, double mu, double v, double alpha) {
    if (samples.size() < 20)
        throw std::invalid_argument("ks_gaussian_test: need n >= 20");
    if (!(v > 0.0))
        throw std::invalid_argument("ks_gaussian_test: variance must be > 0");
    TestReport rep;
    rep.test = "kolmogorov_smirnov_gaussian";
    rep.n = samples.size();
    rep.alpha = alpha;
    rep.statistic = ks_statistic_gaussian(samples, mu, v);
    const double sqrt_n = std::sqrt(double(rep.n));
    rep.p_value = ks_asymptotic_sf(sqrt_n * rep.statistic);
    rep.critical_value = ks_asymptotic_isf(alpha) / sqrt_n;
    rep.reject = rep.statistic > rep.critical_value;
    return rep;
}

namespace {

// regularized incomplete beta by Lentz's continued fraction
double betacf(double a, double b, double x) {
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0, d = 1.0 - qab * x / qap;
    const double tiny = 1e-300;
    if (std::abs(d) < tiny)
        d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 300; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny)
            d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny)
            c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny)
            d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny)
            c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < 1e-14)
            break;
    }
    return h;
}

double incbeta(double a, double b, double x) {
    if (x <= 0.0)
        return 0.0;
    if (x >= 1.0)
        return 1.0;
    const double ln_bt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                         a * std::log(x) + b * std::log1p(-x);
    const double bt = std::exp(ln_bt);
    if (x < (a + 1.0) / (a + b + 2.0))
        return bt * betacf(a, b, x) / a;
    return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

// two-sided p-value of Student's t with dof degrees of freedom
double student_t_two_sided(double t, double dof) {
    const double x = dof / (dof + t * t);
    return incbeta(dof / 2.0, 0.5, x);
}

}  // namespace

TestReport independence_test(std::span<const double> x, std::span<const double> y, double alpha) {
    if (x.size() != y.size())
        throw std::invalid_argument("independence_test: length mismatch");
    if (x.size() < 10)
        throw std::invalid_argument("independence_test: need n >= 10");
    const double n = double(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx == 0.0 || syy == 0.0)
        throw std::invalid_argument("independence_test: zero-variance input");
    const double r = sxy / std::sqrt(sxx * syy);
    TestReport rep;
    rep.test = "pearson_independence";
    rep.n = x.size();
    rep.alpha = alpha;
    rep.statistic = r;
    const double dof = n - 2.0;
    if (std::abs(r) >= 1.0) {
        rep.p_value = 0.0;
    } else {
        const double t = r * std::sqrt(dof / (1.0 - r * r));
        rep.p_value = student_t_two_sided(t, dof);
    }
    // critical |r| for the two-sided test at alpha
    double lo = 0.0, hi = 1.0 - 1e-12;
    for (int it = 0; it < 100; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double t = mid * std::sqrt(dof / (1.0 - mid * mid));
        if (student_t_two_sided(t, dof) > alpha)
            lo = mid;
        else
            hi = mid;
    }
    rep.critical_value = 0.5 * (lo + hi);
    rep.reject = rep.p_value < alpha;
    return rep;
}

SlopeFit convergence_rate(std::span<const std::pair<double, double>> n_discrepancy) {
    if (n_discrepancy.size() < 3)
        throw std::invalid_argument("convergence_rate: need at least 3 points");
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (const auto& [n, d] : n_discrepancy) {
        if (!(n > 0.0) || !(d > 0.0))
            throw std::invalid_argument("convergence_rate: N and discrepancy must be positive");
        const double lx = std::log(n), ly = std::log(d);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    const double m = double(n_discrepancy.size());
    const double denom = m * sxx - sx * sx;
    if (std::abs(denom) < 1e-12)
        throw std::invalid_argument("convergence_rate: need at least 3 distinct N values");
    SlopeFit fit;
    fit.slope = (m * sxy - sx * sy) / denom;
    fit.intercept = (sy - fit.slope * sx) / m;
    return fit;
}

std::string TestReport::to_json_string() const {
    std::ostringstream os;
    os.precision(17);
    os << "{\"test\":\"" << test << "\",\"statistic\":" << statistic
       << ",\"p_value\":" << p_value << ",\"n\":" << n << ",\"alpha\":" << alpha
       << ",\"critical_value\":" << critical_value
       << ",\"verdict\":\"" << (reject ? "reject" : "fail_to_reject") << "\"}";
    return os.str();
}

}  // namespace ratenet
