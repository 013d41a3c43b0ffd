#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <vector>

#include "slac/geometry.hpp"
#include "slac/random.hpp"
#include "slac/ris.hpp"

namespace slac {

struct PathParams {
    cplx gain{1.0, 0.0};
    Direction aoa;  // at the receiver
    Direction aod;  // at the transmitter
    double delay = 0.0;  // carried, not applied (narrowband synthesis)
};

/// Sparse multipath MIMO link: sum_l g_l a_rx(aoa_l) a_tx(aod_l)^H.
struct GeometricChannel {
    ArraySpec tx;
    ArraySpec rx;
    Wavelength wl;
    std::vector<PathParams> paths;

    CMat matrix() const {
        CMat h = CMat::Zero(rx.size(), tx.size());
        for (const auto& p : paths) {
            if (p.delay < 0.0) throw InvalidArgument("path delay must be non-negative");
            h.noalias() += p.gain * steering_vector(rx, p.aoa, wl) *
                           steering_vector(tx, p.aod, wl).adjoint();
        }
        return h;
    }
};

/// Matrices of the three links. `direct` is zero when LoS is blocked.
struct ChannelMatrices {
    CMat direct;  // N_MS x N_BS
    CMat bs_ris;  // F: N_RIS x N_BS
    CMat ris_ms;  // G: N_MS x N_RIS

    int n_bs() const { return static_cast<int>(bs_ris.cols()); }
    int n_ris() const { return static_cast<int>(bs_ris.rows()); }
    int n_ms() const { return static_cast<int>(ris_ms.rows()); }
};

struct EffectiveChannel {
    std::optional<GeometricChannel> direct;
    GeometricChannel bs_ris;
    GeometricChannel ris_ms;

    ChannelMatrices matrices() const {
        if (bs_ris.rx.size() != ris_ms.tx.size())
            throw DimensionMismatch("BS-RIS receive size differs from RIS-MS transmit size");
        ChannelMatrices m;
        m.bs_ris = bs_ris.matrix();
        m.ris_ms = ris_ms.matrix();
        if (direct) {
            if (direct->tx.size() != bs_ris.tx.size() || direct->rx.size() != ris_ms.rx.size())
                throw DimensionMismatch("direct link dimensions differ from the RIS links");
            m.direct = direct->matrix();
        } else {
            m.direct = CMat::Zero(ris_ms.rx.size(), bs_ris.tx.size());
        }
        return m;
    }
};

/// H = H_direct + G diag(w) F.
inline CMat effective_matrix(const ChannelMatrices& ch, const CVec& omega) {
    if (omega.size() != ch.n_ris() || ch.ris_ms.cols() != ch.n_ris() ||
        ch.direct.rows() != ch.n_ms() || ch.direct.cols() != ch.n_bs())
        throw DimensionMismatch("profile/channel dimensions do not agree");
    return ch.direct + ch.ris_ms * omega.asDiagonal() * ch.bs_ris;
}

inline CMat effective_matrix(const ChannelMatrices& ch, const RisProfile& profile) {
    return effective_matrix(ch, profile.coefficients());
}

inline CMat effective_matrix(const EffectiveChannel& ch, const RisProfile& profile) {
    return effective_matrix(ch.matrices(), profile);
}

/// Noise per complex receive sample; SNR is referenced to unit-power signal
/// over unit-gain normalized paths.
struct NoiseModel {
    double variance = 1.0;

    static NoiseModel from_snr_db(double snr_db) { return {std::pow(10.0, -snr_db / 10.0)}; }
    double snr_db() const { return -10.0 * std::log10(variance); }
};

inline Direction random_direction(Rng& rng) {
    const double az = uniform(rng, -std::numbers::pi, std::numbers::pi);
    const double el = uniform(rng, -std::numbers::pi / 2, std::numbers::pi / 2);
    return {az, el};
}

/// Draws `num_paths` (+1 when `include_los`) paths with uniform angles and
/// unit-magnitude, uniform-phase gains. The LoS path, when present, is first.
inline GeometricChannel random_channel(std::uint64_t seed, const ArraySpec& tx, const ArraySpec& rx,
                                       int num_paths, bool include_los, const Wavelength& wl) {
    if (num_paths < 0) throw InvalidArgument("num_paths must be non-negative");
    Rng rng(seed);
    GeometricChannel ch{tx, rx, wl, {}};
    const int total = num_paths + (include_los ? 1 : 0);
    for (int l = 0; l < total; ++l) {
        PathParams p;
        p.aoa = random_direction(rng);
        p.aod = random_direction(rng);
        p.gain = std::polar(1.0, uniform_phase(rng));
        ch.paths.push_back(p);
    }
    return ch;
}

/// Per-slot downlink training inputs.
struct PilotSlot {
    RisProfile profile;
    CVec precoder;  // N_BS, unit norm
    CMat combiner;  // N_MS x n_rf, unit-norm columns
    cplx pilot{1.0, 0.0};
};

/// y_t = W_t^H H(w_t) q_t s_t + W_t^H n_t, n_t ~ CN(0, sigma^2 I).
inline std::vector<CVec> receive_pilots(const ChannelMatrices& ch, const std::vector<PilotSlot>& slots,
                                        const NoiseModel& noise, std::uint64_t seed) {
    if (!(noise.variance >= 0.0)) throw InvalidArgument("noise variance must be non-negative");
    Rng rng(seed);
    std::vector<CVec> out;
    out.reserve(slots.size());
    for (const auto& s : slots) {
        if (s.precoder.size() != ch.n_bs() || s.combiner.rows() != ch.n_ms())
            throw DimensionMismatch("precoder/combiner size does not match the channel");
        const CMat h = effective_matrix(ch, s.profile);
        CVec n(ch.n_ms());
        for (Eigen::Index i = 0; i < n.size(); ++i) n[i] = complex_normal(rng, noise.variance);
        out.push_back(s.combiner.adjoint() * (h * s.precoder * s.pilot + n));
    }
    return out;
}

}  // namespace slac
