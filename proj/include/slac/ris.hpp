#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <vector>

#include "slac/geometry.hpp"
#include "slac/random.hpp"

namespace slac {

/// Per-element reflection coefficients of a passive RIS for one slot.
/// Every coefficient has unit magnitude, or is exactly zero (absorbing element).
class RisProfile {
public:
    RisProfile() = default;
    explicit RisProfile(CVec coefficients, std::optional<int> bits = std::nullopt)
        : coeffs_(std::move(coefficients)), bits_(bits) {
        for (Eigen::Index m = 0; m < coeffs_.size(); ++m) {
            const double mag2 = std::norm(coeffs_[m]);
            if (mag2 != 0.0 && std::abs(mag2 - 1.0) > 2e-9)
                throw InvalidArgument("RIS coefficient magnitude must be 1 (or 0)");
        }
        if (bits_ && (*bits_ < 1 || *bits_ > 16))
            throw InvalidArgument("quantization bits must be in [1, 16]");
    }

    /// All elements absorbing; used to switch the RIS path off.
    static RisProfile absorbing(int n) { return RisProfile(CVec::Zero(n)); }

    const CVec& coefficients() const noexcept { return coeffs_; }
    std::optional<int> bits() const noexcept { return bits_; }
    int size() const noexcept { return static_cast<int>(coeffs_.size()); }
    cplx operator[](int m) const { return coeffs_[m]; }

private:
    CVec coeffs_;
    std::optional<int> bits_;
};

/// Unit-modulus profile from phases.
inline RisProfile profile_from_phases(const Eigen::VectorXd& phases) {
    CVec c(phases.size());
    for (Eigen::Index m = 0; m < phases.size(); ++m) c[m] = std::polar(1.0, phases[m]);
    return RisProfile(std::move(c));
}

/// Projects every unit-modulus coefficient onto the nearest phase of the
/// 2^bits uniform set {2 pi k / 2^bits}. Absorbing elements are kept.
inline RisProfile quantize(const RisProfile& p, int bits) {
    if (bits < 1 || bits > 16) throw InvalidArgument("quantization bits must be in [1, 16]");
    const double levels = std::ldexp(1.0, bits);
    const double step = 2.0 * std::numbers::pi / levels;
    CVec c = p.coefficients();
    for (Eigen::Index m = 0; m < c.size(); ++m) {
        if (c[m] == cplx(0.0)) continue;
        double k = std::round(std::arg(c[m]) / step);
        k = std::fmod(std::fmod(k, levels) + levels, levels);
        c[m] = std::polar(1.0, k * step);
    }
    return RisProfile(std::move(c), bits);
}

inline RisProfile random_profile(int n, std::uint64_t seed, std::optional<int> bits = std::nullopt) {
    if (n < 1) throw InvalidArgument("RIS needs at least one element");
    Rng rng(seed);
    Eigen::VectorXd ph(n);
    for (int m = 0; m < n; ++m) ph[m] = uniform_phase(rng);
    RisProfile p = profile_from_phases(ph);
    return bits ? quantize(p, *bits) : p;
}

/// Conjugate match to the far-field pair (incident, departure): the compound
/// array factor sum_m w_m a_m(inc) a_m(dep) equals N exactly.
inline RisProfile directional_profile(const Direction& incident, const Direction& departure,
                                      const ArraySpec& ris, const Wavelength& wl) {
    const Vec3 d = incident.unit() + departure.unit();
    const double k = wl.wavenumber();
    CVec c(ris.size());
    for (int m = 0; m < ris.size(); ++m) c[m] = std::polar(1.0, -k * d.dot(ris.offset(m)));
    return RisProfile(std::move(c));
}

/// Near-field focusing from `source` onto `focus`.
inline RisProfile positional_profile(const Vec3& source, const Vec3& focus, const ArraySpec& ris,
                                     const Wavelength& wl) {
    const CVec b_src = near_field_response(ris, source, wl);
    const CVec b_foc = near_field_response(ris, focus, wl);
    return RisProfile(b_src.cwiseProduct(b_foc).conjugate());
}

/// Compound response sum_m w_m x_m for a per-element cascade vector x.
inline cplx compound_gain(const RisProfile& p, const CVec& cascade) {
    if (cascade.size() != p.size()) throw DimensionMismatch("profile and cascade lengths differ");
    return (p.coefficients().array() * cascade.array()).sum();
}

enum class PolicyKind { Random, Directional, Positional };

struct ProfilePolicy {
    PolicyKind kind = PolicyKind::Random;
    std::optional<Vec3> prior;
    double uncertainty_radius = 0.0;
    double dither = 0.3;
    std::optional<int> bits;
};

struct TrainingProfiles {
    std::vector<RisProfile> profiles;
    /// Set when all slots carry the same profile (no dither), which leaves
    /// position unidentifiable in the localization model.
    bool degenerate = false;
};

/// Pilot-phase RIS profiles for T_p slots.
///
/// Random: i.i.d. uniform phases per slot. Directional / Positional: a
/// profile toward `policy.prior` (illuminated from `source`) with i.i.d.
/// element phase dither uniform on [-dither, dither] in every slot. A nonzero
/// uncertainty radius moves each slot's focus to a uniform point in the ball
/// of that radius around the prior.
inline TrainingProfiles training_profiles(const ProfilePolicy& policy, int t_p, const ArraySpec& ris,
                                          const Wavelength& wl, std::uint64_t seed,
                                          const Vec3& source) {
    if (t_p < 1) throw InvalidArgument("T_p must be at least 1");
    if (policy.dither < 0.0) throw InvalidArgument("dither must be non-negative");
    if (policy.uncertainty_radius < 0.0) throw InvalidArgument("uncertainty radius must be non-negative");
    TrainingProfiles out;
    out.profiles.reserve(static_cast<std::size_t>(t_p));
    if (policy.kind == PolicyKind::Random) {
        for (int t = 0; t < t_p; ++t)
            out.profiles.push_back(random_profile(ris.size(), derive_seed(seed, {std::uint64_t(t)}), policy.bits));
        return out;
    }
    if (!policy.prior) throw MissingPrior("directional/positional training needs a prior position");

    // Phases of the profile toward `focus`, matching directional_profile /
    // positional_profile.
    const double k = wl.wavenumber();
    const Vec3 src_rel = source - ris.reference();
    const Vec3 src_dir = Direction::from_vector(src_rel).unit();
    auto phases = [&](const Vec3& focus) {
        Eigen::VectorXd ph(ris.size());
        const Vec3 rel = focus - ris.reference();
        if (policy.kind == PolicyKind::Directional) {
            const Vec3 d = src_dir + Direction::from_vector(rel).unit();
            for (int m = 0; m < ris.size(); ++m) ph[m] = -k * d.dot(ris.offset(m));
        } else {
            const double r0 = src_rel.norm() + rel.norm();
            double closest = std::numeric_limits<double>::infinity();
            for (int m = 0; m < ris.size(); ++m) {
                const Vec3 off = ris.offset(m);
                const double rs = (src_rel - off).norm(), rf = (rel - off).norm();
                closest = std::min({closest, rs, rf});
                ph[m] = k * (rs + rf - r0);
            }
            if (closest < ris.spacing() / 10.0) throw SourceOnArray("source or focus lies on the RIS");
        }
        return ph;
    };
    const Eigen::VectorXd base = phases(*policy.prior);

    Rng rng(seed);
    for (int t = 0; t < t_p; ++t) {
        Eigen::VectorXd ph = base;
        if (policy.uncertainty_radius > 0.0) {
            // focus drawn uniformly in the ball of the given radius around the prior
            Vec3 v;
            do {
                v = Vec3(uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0));
            } while (v.squaredNorm() > 1.0);
            ph = phases(*policy.prior + policy.uncertainty_radius * v);
        }
        if (policy.dither > 0.0)
            for (Eigen::Index m = 0; m < ph.size(); ++m) ph[m] += uniform(rng, -policy.dither, policy.dither);
        RisProfile p = profile_from_phases(ph);
        out.profiles.push_back(policy.bits ? quantize(p, *policy.bits) : p);
    }
    out.degenerate = t_p > 1 && policy.dither == 0.0 && policy.uncertainty_radius == 0.0;
    return out;
}

}  // namespace slac
