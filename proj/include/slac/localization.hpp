#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Eigenvalues>

#include "slac/ris.hpp"

namespace slac {

/// Narrowband SISO observation model through a single RIS:
///   mu_t = sqrt(P) s_t (g_d + g_r c_t(p)),  c_t(p) = sum_m w_tm b_m(bs) b_m(p)
/// with b the near-field RIS response. Position enters only through the
/// wavefront across the RIS aperture.
struct SisoLocModel {
    Vec3 bs_position;
    ArraySpec ris;
    Vec3 user_position;
    Wavelength wl;
    std::optional<cplx> g_direct;
    cplx g_ris{1.0, 0.0};
    double power = 1.0;
    double noise_variance = 1.0;
    std::vector<cplx> pilots;  // |s_t| = 1
    std::vector<RisProfile> profiles;

    int slots() const { return static_cast<int>(profiles.size()); }

    void validate() const {
        if (pilots.size() != profiles.size()) throw DimensionMismatch("one pilot per RIS profile expected");
        for (const auto& p : profiles)
            if (p.size() != ris.size()) throw DimensionMismatch("profile length differs from RIS size");
        if (!(noise_variance > 0.0)) throw InvalidArgument("noise variance must be positive");
        if (!(power >= 0.0)) throw InvalidArgument("power must be non-negative");
    }

    /// Number of real parameters: position, g_r, and g_d when present.
    int parameter_count() const { return g_direct ? 7 : 5; }
};

/// Unit pilots and the given profiles.
inline SisoLocModel make_siso_model(const Vec3& bs, const ArraySpec& ris, const Vec3& user, const Wavelength& wl,
                                    std::optional<cplx> g_direct, cplx g_ris, double power, double noise_variance,
                                    std::vector<RisProfile> profiles) {
    SisoLocModel m{bs, ris, user, wl, g_direct, g_ris, power, noise_variance,
                   std::vector<cplx>(profiles.size(), cplx(1.0)), std::move(profiles)};
    m.validate();
    return m;
}

inline cplx model_mean(const SisoLocModel& model, int t) {
    const CVec cascade = near_field_response(model.ris, model.bs_position, model.wl)
                             .cwiseProduct(near_field_response(model.ris, model.user_position, model.wl));
    const cplx c = compound_gain(model.profiles.at(std::size_t(t)), cascade);
    return std::sqrt(model.power) * model.pilots.at(std::size_t(t)) * (model.g_direct.value_or(0.0) + model.g_ris * c);
}

struct FisherSummary {
    Eigen::MatrixXd fim;  // over [p_x, p_y, p_z, Re g_r, Im g_r, (Re g_d, Im g_d)]
    double peb = std::numeric_limits<double>::infinity();
    /// Position block of the inverse FIM (CRB); empty when PEB is infinite.
    Eigen::Matrix3d position_crb = Eigen::Matrix3d::Zero();
};

namespace detail {

/// d mu_t / d eta for every slot, as rows of a complex T x P matrix.
inline CMat mean_jacobian(const SisoLocModel& model) {
    model.validate();
    const int n = model.ris.size();
    const double k = model.wl.wavenumber();
    const CVec b_bs = near_field_response(model.ris, model.bs_position, model.wl);
    const CVec b_p = near_field_response(model.ris, model.user_position, model.wl);
    const Vec3 rel = model.user_position - model.ris.reference();
    const Vec3 e0 = rel / rel.norm();
    // d b_m(p) / dp = -j k b_m(p) (e_m - e_0), e_m the unit vector from element m
    Eigen::Matrix<cplx, Eigen::Dynamic, 3> db(n, 3);
    CVec cascade(n);
    for (int m = 0; m < n; ++m) {
        const Vec3 d = rel - model.ris.offset(m);
        const Vec3 em = d / d.norm();
        cascade[m] = b_bs[m] * b_p[m];
        const cplx f = -kJ * k * cascade[m];
        for (int i = 0; i < 3; ++i) db(m, i) = f * (em[i] - e0[i]);
    }
    const int pc = model.parameter_count();
    CMat jac(model.slots(), pc);
    const double amp = std::sqrt(model.power);
    for (int t = 0; t < model.slots(); ++t) {
        const CVec& w = model.profiles[std::size_t(t)].coefficients();
        const cplx s = amp * model.pilots[std::size_t(t)];
        const cplx c = (w.array() * cascade.array()).sum();
        for (int i = 0; i < 3; ++i) jac(t, i) = s * model.g_ris * (w.array() * db.col(i).array()).sum();
        jac(t, 3) = s * c;
        jac(t, 4) = s * kJ * c;
        if (model.g_direct) {
            jac(t, 5) = s;
            jac(t, 6) = s * kJ;
        }
    }
    return jac;
}

}  // namespace detail

/// Position error bound from a FIM: sqrt(tr([J^-1]_pos)). Infinite when a
/// position coordinate is not identifiable (J singular along a direction
/// with a position component).
inline double peb_from_fim(const Eigen::MatrixXd& j, Eigen::Matrix3d* crb = nullptr) {
    const Eigen::Index n = j.rows();
    Eigen::VectorXd scale(n);
    for (Eigen::Index i = 0; i < n; ++i) scale[i] = j(i, i) > 0.0 ? 1.0 / std::sqrt(j(i, i)) : 0.0;
    if ((scale.head(3).array() == 0.0).any()) return std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 3; i < n; ++i)
        if (scale[i] == 0.0) scale[i] = 1.0;
    const Eigen::MatrixXd js = scale.asDiagonal() * j * scale.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(js);
    const Eigen::VectorXd ev = eig.eigenvalues();
    const Eigen::MatrixXd& v = eig.eigenvectors();
    const double tol = 1e-10 * std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
    Eigen::MatrixXd inv = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (ev[i] > tol) {
            inv += v.col(i) * v.col(i).transpose() / ev[i];
        } else if (v.col(i).head(3).norm() > 1e-6) {
            return std::numeric_limits<double>::infinity();
        }
    }
    const Eigen::MatrixXd full = scale.asDiagonal() * inv * scale.asDiagonal();
    const Eigen::Matrix3d pos = full.topLeftCorner(3, 3);
    if (crb) *crb = pos;
    return std::sqrt(pos.trace());
}

/// J = (2 / sigma^2) sum_t Re{ (d mu_t / d eta)^H (d mu_t / d eta) }.
inline FisherSummary fim(const SisoLocModel& model) {
    const CMat jac = detail::mean_jacobian(model);
    FisherSummary out;
    out.fim = (2.0 / model.noise_variance) * (jac.adjoint() * jac).real();
    out.fim = 0.5 * (out.fim + out.fim.transpose()).eval();
    out.peb = peb_from_fim(out.fim, &out.position_crb);
    return out;
}

inline double peb(const FisherSummary& summary) { return peb_from_fim(summary.fim); }

struct Ray {
    Vec3 origin;
    Vec3 direction;  // need not be normalized
};

struct CoarseLocationOptions {
    /// Range along the first ray used when the rays are (near-)parallel;
    /// disabled when empty.
    std::optional<double> fallback_range = 10.0;
    double parallel_tolerance_rad = 1e-3;
};

/// Least-squares closest point of two rays (midpoint of the common
/// perpendicular). Near-parallel rays fall back to a point on `first` at the
/// configured range.
inline Vec3 coarse_location(const Ray& first, const Ray& second, const CoarseLocationOptions& opts = {}) {
    const Vec3 d1 = first.direction.normalized();
    const Vec3 d2 = second.direction.normalized();
    const double angle = std::acos(std::clamp(std::abs(d1.dot(d2)), 0.0, 1.0));
    if (angle < opts.parallel_tolerance_rad) {
        if (!opts.fallback_range) throw DegenerateGeometry("rays are parallel within tolerance");
        return first.origin + *opts.fallback_range * d1;
    }
    // minimize |o1 + s d1 - o2 - t d2|^2
    Eigen::Matrix2d a;
    a << 1.0, -d1.dot(d2), d1.dot(d2), -1.0;
    const Vec3 w = first.origin - second.origin;
    const Eigen::Vector2d rhs(-w.dot(d1), -w.dot(d2));
    const Eigen::Vector2d st = a.partialPivLu().solve(rhs);
    const Vec3 p1 = first.origin + st[0] * d1;
    const Vec3 p2 = second.origin + st[1] * d2;
    return 0.5 * (p1 + p2);
}

/// Beam-based coarse location: the RIS departure ray of the selected RIS beam
/// intersected with the BS-to-MS ray implied by the MS arrival beam of the
/// LoS path (arrival direction points from the MS back toward the BS).
inline Vec3 coarse_location_from_beams(const Vec3& ris_position, const Direction& ris_departure,
                                       const Vec3& bs_position, const Direction& ms_arrival,
                                       const CoarseLocationOptions& opts = {}) {
    return coarse_location(Ray{ris_position, ris_departure.unit()}, Ray{bs_position, -ms_arrival.unit()}, opts);
}

}  // namespace slac
