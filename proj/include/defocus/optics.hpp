#pragma once

#include <filesystem>
#include <vector>

#include "defocus/image.hpp"

namespace defocus {

// Physical constants of the widefield microscope model.
struct OpticalConfig {
    double wavelength_nm = 451.0;
    double numerical_aperture = 0.5;
    double refractive_index = 1.0;
    double pixel_pitch_um = 0.65;   // lateral sampling of the discretized kernels
    double level_step_um = 2.0;     // axial increment between defocus levels
    int num_levels = 11;            // level 0 = in focus
    int kernel_radius_cap_px = 256;

    void validate() const;  // throws std::invalid_argument
    double wavenumber_per_um() const;  // k = 2*pi/lambda
};

struct DefocusLevel {
    int index = 0;
    double depth_um = 0.0;

    static DefocusLevel at(int index, const OpticalConfig& cfg);
};

// Discretized, unit-sum PSF for one defocus level. Odd square support;
// values depend on pixel radius only, so all eight lattice symmetries
// hold exactly.
struct PsfKernel {
    DefocusLevel level;
    int size = 0;  // odd
    double pixel_pitch_um = 0.0;
    std::vector<double> values;  // size*size, row-major, sums to 1

    int radius() const { return size / 2; }
    double at(int x, int y) const { return values[static_cast<size_t>(y) * size + x]; }
};

// J0(x), absolute error below 1e-9 for |x| <= 200 (and smaller beyond).
// Power series up to |x| = 12, Hankel asymptotic expansion above.
double bessel_j0(double x);

// Squared modulus of the pupil integral at lateral radius r (micrometers)
// and defocus depth z (micrometers). Adaptive Gauss-Legendre quadrature.
double psf_value(double r_um, double z_um, const OpticalConfig& cfg);

// Same integral with a fixed node count (convergence checks).
double psf_value_fixed_nodes(double r_um, double z_um, const OpticalConfig& cfg, int nodes);

// Closed-form on-axis value: 4*sin^2(a/4)/a^2 with a = k*z*NA^2/n^2,
// and 1/4 at a = 0.
double on_axis_psf(double z_um, const OpticalConfig& cfg);

PsfKernel build_psf_kernel(const DefocusLevel& level, const OpticalConfig& cfg);

// 16-bit PGM rescaled by the kernel maximum, plus a plain-text sidecar
// (level, depth, pixel pitch, dimensions).
void export_kernel_pgm(const PsfKernel& kernel, const std::filesystem::path& pgm_path,
                       const std::filesystem::path& sidecar_path);

}  // namespace defocus
