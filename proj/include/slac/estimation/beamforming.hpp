#pragma once

#include <cmath>
#include <tuple>
#include <utility>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "slac/estimation/training.hpp"

namespace slac {

/// Data-phase configuration of all three terminals.
struct Beamformers {
    CVec precoder;  // unit norm
    CVec combiner;  // unit norm
    RisProfile profile;
};

/// |w^H H(w) q|^2 on a channel.
inline double beamforming_gain(const ChannelMatrices& ch, const Beamformers& bf) {
    const CMat h = effective_matrix(ch, bf.profile);
    return std::norm(bf.combiner.dot(h * bf.precoder));
}

namespace detail {

inline CVec phase_only(const CVec& v) {
    CVec out(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i)
        out[i] = v[i] == cplx(0.0) ? cplx(1.0) : v[i] / std::abs(v[i]);
    return out;
}

/// Dominant left/right singular vectors of h.
inline std::pair<CVec, CVec> dominant_pair(const CMat& h) {
    Eigen::SelfAdjointEigenSolver<CMat> eig(h.adjoint() * h);
    const CVec q = eig.eigenvectors().col(h.cols() - 1);
    const CVec hq = h * q;
    const double n = hq.norm();
    if (!(n > 0.0)) {
        CVec w = CVec::Zero(h.rows());
        w[0] = 1.0;
        return {w, q};
    }
    return {hq / n, q};
}

}  // namespace detail

/// Joint active/passive beamforming by alternating maximization of
/// |w^H (D + sum_m w_m C_m) q|:
///   - fixed RIS profile: (w, q) are the dominant singular vectors of H(w);
///   - fixed (w, q): each w_m co-phases its term with the direct term.
/// The profile is initialised from the dominant right singular vector of the
/// cascade, which is optimal for a rank-one cascade.
inline Beamformers optimize_beamformers(const CascadedChannel& ch, int alternations = 20) {
    const int n_ris = ch.n_ris();
    CVec omega;
    {
        const CMat gram = ch.cascade.adjoint() * ch.cascade;
        Eigen::SelfAdjointEigenSolver<CMat> eig(gram);
        omega = detail::phase_only(eig.eigenvectors().col(n_ris - 1));
    }
    Beamformers bf;
    for (int it = 0; it <= alternations; ++it) {
        const CMat h = ch.effective(omega);
        std::tie(bf.combiner, bf.precoder) = detail::dominant_pair(h);
        if (it == alternations) break;
        const CMat wq = bf.combiner * bf.precoder.adjoint();
        const Eigen::Map<const CVec> z(wq.data(), wq.size());
        // b_m = w^H C_m q, a = w^H D q
        const CVec b = ch.cascade.transpose() * z.conjugate();
        const cplx a = ch.direct ? z.dot(*ch.direct) : cplx(0.0);
        const cplx a_phase = std::abs(a) > 0.0 ? a / std::abs(a) : cplx(1.0);
        for (int m = 0; m < n_ris; ++m) {
            if (std::abs(b[m]) > 0.0)
                omega[m] = a_phase * std::conj(b[m]) / std::abs(b[m]);
        }
        if (std::abs(a) == 0.0) {
            // no direct term: any common phase is optimal; keep element 0 real
            // for a deterministic result
            omega *= std::conj(omega[0]);
        }
    }
    bf.profile = RisProfile(omega);
    return bf;
}

}  // namespace slac
