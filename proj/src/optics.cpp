#include "defocus/optics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <unordered_map>

#include "defocus/errors.hpp"
#include "defocus/pgm.hpp"
#include "defocus/threading.hpp"

namespace defocus {

void OpticalConfig::validate() const {
    if (!(wavelength_nm > 0)) throw std::invalid_argument("wavelength must be positive");
    if (!(numerical_aperture > 0)) throw std::invalid_argument("numerical aperture must be positive");
    if (!(refractive_index > 0)) throw std::invalid_argument("refractive index must be positive");
    if (!(pixel_pitch_um > 0)) throw std::invalid_argument("pixel pitch must be positive");
    if (!(level_step_um > 0)) throw std::invalid_argument("level step must be positive");
    if (num_levels < 1) throw std::invalid_argument("num_levels must be at least 1");
    if (kernel_radius_cap_px < 1) throw std::invalid_argument("kernel radius cap must be at least 1");
}

double OpticalConfig::wavenumber_per_um() const {
    return 2.0 * std::numbers::pi / (wavelength_nm * 1e-3);
}

DefocusLevel DefocusLevel::at(int index, const OpticalConfig& cfg) {
    if (index < 0 || index >= cfg.num_levels)
        throw std::invalid_argument("defocus level index " + std::to_string(index) +
                                    " outside [0, " + std::to_string(cfg.num_levels - 1) + "]");
    return DefocusLevel{index, index * cfg.level_step_um};
}

// ---------------------------------------------------------------------------
// Bessel J0

double bessel_j0(double x) {
    if (!std::isfinite(x)) throw std::domain_error("bessel_j0: non-finite argument");
    x = std::fabs(x);

    if (x <= 12.0) {
        // Alternating power series; extended precision absorbs the
        // cancellation (ratio of largest term to sum is ~1e5 at x = 12).
        const long double q = static_cast<long double>(x) * x / 4.0L;
        long double term = 1.0L, sum = 1.0L;
        for (int k = 1; k <= 200; ++k) {
            term *= -q / (static_cast<long double>(k) * k);
            sum += term;
            if (std::fabs(static_cast<double>(term)) < 1e-20L * std::fabs(static_cast<double>(sum)) + 1e-25L)
                break;
        }
        return static_cast<double>(sum);
    }

    // Hankel expansion J0(x) = sqrt(2/(pi x)) [P cos(x - pi/4) - Q sin(x - pi/4)]
    // with A_m = prod_{i<=m}(2i-1)^2 / m!; even terms feed P, odd terms feed Q,
    // sign (-1)^ceil(m/2). The series is asymptotic: stop at the smallest term.
    const long double inv8x = 1.0L / (8.0L * x);
    long double p = 0.0L, qsum = 0.0L;
    long double term = 1.0L;
    long double prev = std::numeric_limits<long double>::max();
    for (int m = 0; m <= 40; ++m) {
        if (m > 0) {
            const long double odd = 2.0L * m - 1.0L;
            term *= odd * odd / m * inv8x;
            if (std::fabs(term) >= prev) break;  // divergence onset
        }
        prev = std::fabs(term);
        const int sign = (((m + 1) / 2) % 2 == 0) ? 1 : -1;
        if (m % 2 == 0)
            p += sign * term;
        else
            qsum += sign * term;
        if (prev < 1e-19L) break;
    }
    const long double chi = static_cast<long double>(x) - std::numbers::pi_v<long double> / 4.0L;
    const long double amp = std::sqrt(2.0L / (std::numbers::pi_v<long double> * x));
    return static_cast<double>(amp * (p * std::cos(chi) - qsum * std::sin(chi)));
}

// ---------------------------------------------------------------------------
// Gauss-Legendre nodes on [0,1], cached per node count.

namespace {

struct GaussRule {
    std::vector<double> nodes;    // on [0,1]
    std::vector<double> weights;  // sum to 1
};

GaussRule compute_gauss_rule(int n) {
    GaussRule rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    for (int i = 0; i < (n + 1) / 2; ++i) {
        // Newton iteration on the Legendre polynomial, standard initial guess.
        double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::fabs(dx) < 1e-15) break;
        }
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        rule.nodes[i] = 0.5 * (1.0 - x);  // map [-1,1] -> [0,1], descending x first
        rule.weights[i] = 0.5 * w;
        rule.nodes[n - 1 - i] = 0.5 * (1.0 + x);
        rule.weights[n - 1 - i] = 0.5 * w;
    }
    return rule;
}

const GaussRule& gauss_rule(int n) {
    static std::map<int, GaussRule> cache;
    static std::mutex mutex;
    std::lock_guard<std::mutex> lock(mutex);
    auto it = cache.find(n);
    if (it == cache.end()) it = cache.emplace(n, compute_gauss_rule(n)).first;
    return it->second;
}

// Complex pupil integral over rho in [0,1] with n nodes.
void pupil_integral(double r_um, double z_um, const OpticalConfig& cfg, int n, double& re,
                    double& im) {
    const double k = cfg.wavenumber_per_um();
    const double na_over_n = cfg.numerical_aperture / cfg.refractive_index;
    const double radial = k * na_over_n * r_um;          // J0 argument scale
    const double axial = 0.5 * k * z_um * na_over_n * na_over_n;  // quadratic phase scale
    const GaussRule& rule = gauss_rule(n);
    double sum_re = 0.0, sum_im = 0.0;
    for (int i = 0; i < n; ++i) {
        const double rho = rule.nodes[i];
        const double j0 = bessel_j0(radial * rho);
        const double phase = -axial * rho * rho;
        const double a = j0 * rho * rule.weights[i];
        sum_re += a * std::cos(phase);
        sum_im += a * std::sin(phase);
    }
    re = sum_re;
    im = sum_im;
}

}  // namespace

double psf_value_fixed_nodes(double r_um, double z_um, const OpticalConfig& cfg, int nodes) {
    if (r_um < 0) throw std::domain_error("psf_value: negative radius");
    cfg.validate();
    double re, im;
    pupil_integral(r_um, z_um, cfg, nodes, re, im);
    return re * re + im * im;
}

double psf_value(double r_um, double z_um, const OpticalConfig& cfg) {
    if (r_um < 0) throw std::domain_error("psf_value: negative radius");
    if (!std::isfinite(r_um) || !std::isfinite(z_um))
        throw std::domain_error("psf_value: non-finite argument");
    cfg.validate();

    // Node doubling until two successive estimates of the complex integral
    // agree to 1e-10 absolute in both components.
    int n = 64;
    double re, im;
    pupil_integral(r_um, z_um, cfg, n, re, im);
    for (; n <= (1 << 16); ) {
        n *= 2;
        double re2, im2;
        pupil_integral(r_um, z_um, cfg, n, re2, im2);
        const bool converged = std::fabs(re2 - re) < 1e-10 && std::fabs(im2 - im) < 1e-10;
        re = re2;
        im = im2;
        if (converged) break;
    }
    return re * re + im * im;
}

double on_axis_psf(double z_um, const OpticalConfig& cfg) {
    cfg.validate();
    const double na_over_n = cfg.numerical_aperture / cfg.refractive_index;
    const double a = cfg.wavenumber_per_um() * z_um * na_over_n * na_over_n;
    if (a == 0.0) return 0.25;
    const double s = std::sin(a / 4.0);
    return 4.0 * s * s / (a * a);
}

// ---------------------------------------------------------------------------
// Kernel construction

namespace {

// Values keyed by squared pixel radius; one quadrature per distinct radius
// keeps the eight-fold lattice symmetry exact by construction.
class RadialTable {
public:
    RadialTable(double z_um, const OpticalConfig& cfg) : z_(z_um), cfg_(cfg) {}

    // Computes any missing entries for the given squared radii (parallel),
    // then leaves the table ready for lookup.
    void ensure(const std::vector<long>& d2_list) {
        std::vector<long> missing;
        for (long d2 : d2_list)
            if (table_.find(d2) == table_.end() && d2 >= 0) missing.push_back(d2);
        std::sort(missing.begin(), missing.end());
        missing.erase(std::unique(missing.begin(), missing.end()), missing.end());
        std::vector<double> vals(missing.size());
#pragma omp parallel for schedule(dynamic) num_threads(max_threads())
        for (long i = 0; i < static_cast<long>(missing.size()); ++i) {
            const double r = cfg_.pixel_pitch_um * std::sqrt(static_cast<double>(missing[i]));
            vals[i] = psf_value(r, z_, cfg_);
        }
        for (size_t i = 0; i < missing.size(); ++i) table_[missing[i]] = vals[i];
    }

    double at(long d2) const { return table_.at(d2); }

private:
    double z_;
    const OpticalConfig& cfg_;
    std::unordered_map<long, double> table_;
};

// Lattice pixels whose rounded Euclidean radius equals r.
std::vector<std::pair<int, int>> ring_pixels(int r) {
    std::vector<std::pair<int, int>> px;
    const double lo = r - 0.5, hi = r + 0.5;
    const int bound = r + 1;
    for (int y = -bound; y <= bound; ++y) {
        for (int x = -bound; x <= bound; ++x) {
            const double d = std::hypot(static_cast<double>(x), static_cast<double>(y));
            if ((r == 0 && d < hi) || (r > 0 && d >= lo && d < hi)) px.emplace_back(x, y);
        }
    }
    return px;
}

}  // namespace

PsfKernel build_psf_kernel(const DefocusLevel& level, const OpticalConfig& cfg) {
    cfg.validate();
    if (level.index < 0 || level.index >= cfg.num_levels)
        throw std::invalid_argument("build_psf_kernel: level index out of range");

    RadialTable table(level.depth_um, cfg);

    // Energy criterion: grow the support ring by ring until three consecutive
    // rings each add less than 1e-3 of the mass accumulated so far. The Airy
    // tail of the pupil model sheds energy like 1/r, so an absolute tail-mass
    // cut would not terminate at a usable size; the marginal criterion keeps
    // the support proportional to the defocus disc.
    constexpr double kRingFraction = 1e-3;
    constexpr int kConsecutive = 3;

    double total = 0.0;
    int radius = -1;
    int quiet_rings = 0;
    for (int r = 0; ; ++r) {
        if (r > cfg.kernel_radius_cap_px)
            throw KernelSizeError("build_psf_kernel: support exceeds radius cap of " +
                                      std::to_string(cfg.kernel_radius_cap_px) + " px",
                                  level.index);
        const auto px = ring_pixels(r);
        std::vector<long> d2s;
        d2s.reserve(px.size());
        for (auto [x, y] : px) d2s.push_back(static_cast<long>(x) * x + static_cast<long>(y) * y);
        table.ensure(d2s);
        double ring_mass = 0.0;
        for (long d2 : d2s) ring_mass += table.at(d2);
        total += ring_mass;
        if (r >= 1 && ring_mass < kRingFraction * total) {
            if (++quiet_rings >= kConsecutive) {
                radius = r;
                break;
            }
        } else {
            quiet_rings = 0;
        }
    }

    const int size = 2 * radius + 1;
    PsfKernel kernel;
    kernel.level = level;
    kernel.size = size;
    kernel.pixel_pitch_um = cfg.pixel_pitch_um;
    kernel.values.assign(static_cast<size_t>(size) * size, 0.0);

    // Corner radii exceed the probed rings; compute whatever is still missing.
    std::vector<long> all_d2;
    all_d2.reserve(kernel.values.size());
    for (int y = -radius; y <= radius; ++y)
        for (int x = -radius; x <= radius; ++x)
            all_d2.push_back(static_cast<long>(x) * x + static_cast<long>(y) * y);
    table.ensure(all_d2);

    double sum = 0.0;
    size_t idx = 0;
    for (int y = -radius; y <= radius; ++y) {
        for (int x = -radius; x <= radius; ++x, ++idx) {
            const long d2 = static_cast<long>(x) * x + static_cast<long>(y) * y;
            kernel.values[idx] = table.at(d2);
            sum += kernel.values[idx];
        }
    }
    for (double& v : kernel.values) v /= sum;
    return kernel;
}

void export_kernel_pgm(const PsfKernel& kernel, const std::filesystem::path& pgm_path,
                       const std::filesystem::path& sidecar_path) {
    double maxv = 0.0;
    for (double v : kernel.values) maxv = std::max(maxv, v);
    Image16 img(kernel.size, kernel.size);
    for (size_t i = 0; i < kernel.values.size(); ++i)
        img.data[i] = static_cast<uint16_t>(std::lround(kernel.values[i] / maxv * 65535.0));
    write_pgm(img, pgm_path);

    std::ofstream side(sidecar_path, std::ios::trunc);
    if (!side) throw FormatError(sidecar_path.string() + ": cannot open for writing");
    side << "level " << kernel.level.index << "\n"
         << "depth_um " << kernel.level.depth_um << "\n"
         << "pixel_pitch_um " << kernel.pixel_pitch_um << "\n"
         << "width " << kernel.size << "\n"
         << "height " << kernel.size << "\n";
}

}  // namespace defocus
