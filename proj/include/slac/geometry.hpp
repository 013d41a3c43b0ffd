#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <string>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "slac/errors.hpp"

namespace slac {

using Vec3 = Eigen::Vector3d;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;
using cplx = std::complex<double>;

inline constexpr double kSpeedOfLight = 299792458.0;
inline constexpr cplx kJ{0.0, 1.0};

/// Carrier description. Construct through `from_frequency` or `from_lambda`.
struct Wavelength {
    double carrier_hz = 0.0;
    double lambda = 0.0;

    static Wavelength from_frequency(double hz) {
        if (!(hz > 0.0)) throw InvalidArgument("carrier frequency must be positive");
        return {hz, kSpeedOfLight / hz};
    }
    static Wavelength from_lambda(double meters) {
        if (!(meters > 0.0)) throw InvalidArgument("wavelength must be positive");
        return {kSpeedOfLight / meters, meters};
    }
    double wavenumber() const noexcept { return 2.0 * std::numbers::pi / lambda; }
};

/// Wraps an angle into (-pi, pi].
inline double wrap_angle(double a) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    a = std::fmod(a + std::numbers::pi, two_pi);
    if (a <= 0.0) a += two_pi;
    return a - std::numbers::pi;
}

/// Pointing direction in the global frame: from the array toward the far-field
/// point (source or destination). Azimuth in (-pi, pi], elevation in [-pi/2, pi/2].
struct Direction {
    double azimuth = 0.0;
    double elevation = 0.0;

    Direction() = default;
    Direction(double az, double el) : azimuth(wrap_angle(az)), elevation(el) {
        if (!(el >= -std::numbers::pi / 2 && el <= std::numbers::pi / 2))
            throw InvalidArgument("elevation outside [-pi/2, pi/2]");
    }

    Vec3 unit() const {
        const double ce = std::cos(elevation);
        return {ce * std::cos(azimuth), ce * std::sin(azimuth), std::sin(elevation)};
    }

    static Direction from_vector(const Vec3& v) {
        const double n = v.norm();
        if (!(n > 0.0)) throw InvalidArgument("direction of a zero vector");
        const double el = std::asin(std::clamp(v.z() / n, -1.0, 1.0));
        const double az = std::atan2(v.y(), v.x());
        return {az, el};
    }
};

enum class ArrayKind { ULA, UPA };

/// Planar or linear array of isotropic elements on a regular grid.
///
/// Elements are indexed m = ix + nx * iz, with ix along `axis_u` and iz along
/// `axis_v`. A ULA uses only `axis_u` (nz == 1). The layout is centered on
/// `reference`.
class ArraySpec {
public:
    static ArraySpec ula(int n, double spacing, const Vec3& reference = Vec3::Zero(),
                         const Vec3& axis = Vec3::UnitX()) {
        const Vec3 helper = std::abs(axis.normalized().z()) < 0.9 ? Vec3::UnitZ() : Vec3::UnitX();
        return ArraySpec(ArrayKind::ULA, n, 1, spacing, reference, axis, helper);
    }

    /// Default plane is x-z, matching an RIS mounted on a wall at y = 0.
    static ArraySpec upa(int nx, int nz, double spacing, const Vec3& reference = Vec3::Zero(),
                         const Vec3& axis_u = Vec3::UnitX(), const Vec3& axis_v = Vec3::UnitZ()) {
        return ArraySpec(ArrayKind::UPA, nx, nz, spacing, reference, axis_u, axis_v);
    }

    ArrayKind kind() const noexcept { return kind_; }
    int nx() const noexcept { return nx_; }
    int nz() const noexcept { return nz_; }
    int size() const noexcept { return nx_ * nz_; }
    double spacing() const noexcept { return spacing_; }
    const Vec3& reference() const noexcept { return reference_; }
    const Vec3& axis_u() const noexcept { return axis_u_; }
    const Vec3& axis_v() const noexcept { return axis_v_; }
    Vec3 normal() const { return axis_u_.cross(axis_v_).normalized(); }

    ArraySpec translated(const Vec3& offset) const {
        ArraySpec out = *this;
        out.reference_ += offset;
        return out;
    }

    /// Offset of element m from the reference point.
    Vec3 offset(int m) const {
        const int ix = m % nx_;
        const int iz = m / nx_;
        const double cu = (ix - 0.5 * (nx_ - 1)) * spacing_;
        const double cv = (iz - 0.5 * (nz_ - 1)) * spacing_;
        return cu * axis_u_ + cv * axis_v_;
    }

    /// Largest aperture dimension (grid diagonal).
    double aperture() const {
        return spacing_ * std::hypot(double(nx_ - 1), double(nz_ - 1));
    }

private:
    ArraySpec(ArrayKind kind, int nx, int nz, double spacing, const Vec3& reference,
              const Vec3& axis_u, const Vec3& axis_v)
        : kind_(kind), nx_(nx), nz_(nz), spacing_(spacing), reference_(reference) {
        if (nx < 1 || nz < 1) throw InvalidArgument("array needs at least one element");
        if (!(spacing > 0.0)) throw InvalidArgument("element spacing must be positive");
        if (!(axis_u.norm() > 0.0) || !(axis_v.norm() > 0.0))
            throw InvalidArgument("array axes must be nonzero");
        axis_u_ = axis_u.normalized();
        axis_v_ = axis_v - axis_v.dot(axis_u_) * axis_u_;
        if (axis_v_.norm() < 1e-12) throw InvalidArgument("array axes are parallel");
        axis_v_.normalize();
    }

    ArrayKind kind_;
    int nx_;
    int nz_;
    double spacing_;
    Vec3 reference_;
    Vec3 axis_u_;
    Vec3 axis_v_;
};

inline std::vector<Vec3> element_positions(const ArraySpec& array) {
    std::vector<Vec3> out;
    out.reserve(static_cast<std::size_t>(array.size()));
    for (int m = 0; m < array.size(); ++m) out.push_back(array.reference() + array.offset(m));
    return out;
}

/// Far-field array response toward `dir`:
/// entry m = exp(+j k <d, r_m - ref>), i.e. exp(-j k <u, r_m - ref>) with the
/// propagation vector u = -d. Broadside gives the all-ones vector.
inline CVec steering_vector(const ArraySpec& array, const Direction& dir, const Wavelength& wl) {
    const Vec3 d = dir.unit();
    const double k = wl.wavenumber();
    CVec a(array.size());
    for (int m = 0; m < array.size(); ++m) a[m] = std::polar(1.0, k * d.dot(array.offset(m)));
    return a;
}

/// Spherical-wavefront response to a point `source`, phase-referenced to the
/// array center: entry m = exp(-j k (|s - r_m| - |s - ref|)).
inline CVec near_field_response(const ArraySpec& array, const Vec3& source, const Wavelength& wl) {
    const double k = wl.wavenumber();
    const Vec3 rel = source - array.reference();
    const double r0 = rel.norm();
    CVec b(array.size());
    double min_dist = std::numeric_limits<double>::infinity();
    for (int m = 0; m < array.size(); ++m) {
        const double rm = (rel - array.offset(m)).norm();
        min_dist = std::min(min_dist, rm);
        b[m] = std::polar(1.0, -k * (rm - r0));
    }
    if (min_dist < array.spacing() / 10.0)
        throw SourceOnArray("point lies on the array (distance " + std::to_string(min_dist) + " m)");
    return b;
}

/// 2 D^2 / lambda with D the largest aperture dimension.
inline double fraunhofer_distance(const ArraySpec& array, const Wavelength& wl) {
    const double d = array.aperture();
    return 2.0 * d * d / wl.lambda;
}

}  // namespace slac
