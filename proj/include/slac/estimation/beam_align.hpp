#pragma once

#include <cmath>
#include <numbers>
#include <utility>
#include <vector>

#include "slac/estimation/result.hpp"

namespace slac {

/// Half-wavelength ULA response at spatial frequency u (centered phase
/// reference): entry m = exp(j pi u (m - (n-1)/2)). Matches steering_vector
/// for u = <d, axis>.
inline CVec ula_atom(int n, double u) {
    CVec a(n);
    const double c0 = 0.5 * (n - 1);
    for (int m = 0; m < n; ++m) a[m] = std::polar(1.0, std::numbers::pi * u * (m - c0));
    return a;
}

/// Uniform grid of `size` spatial frequencies over [-1, 1).
inline std::vector<double> frequency_grid(int size) {
    std::vector<double> g(static_cast<std::size_t>(size));
    for (int c = 0; c < size; ++c) g[std::size_t(c)] = -1.0 + 2.0 * c / size;
    return g;
}

/// Unit-norm DFT beams; `size` = oversampling * n gives an oversampled codebook.
inline CMat dft_codebook(int n, int size) {
    CMat cb(n, size);
    const auto grid = frequency_grid(size);
    for (int c = 0; c < size; ++c) cb.col(c) = ula_atom(n, grid[std::size_t(c)]) / std::sqrt(double(n));
    return cb;
}

/// Unit-modulus RIS beams co-phasing a cascaded spatial frequency.
inline CMat ris_dft_codebook(int n, int size) {
    CMat cb(n, size);
    const auto grid = frequency_grid(size);
    for (int c = 0; c < size; ++c) cb.col(c) = ula_atom(n, grid[std::size_t(c)]).conjugate();
    return cb;
}

struct Codebooks {
    CMat bs;   // N_BS x C_BS, unit-norm columns
    CMat ms;   // N_MS x C_MS, unit-norm columns; received in parallel every slot
    CMat ris;  // N_RIS x C_RIS, unit-modulus columns

    Eigen::Index sweep_size() const { return bs.cols() * ris.cols(); }
};

inline Codebooks dft_codebooks(int n_bs, int n_ms, int n_ris, int oversampling) {
    if (oversampling < 1) throw InvalidArgument("codebook oversampling must be >= 1");
    return {dft_codebook(n_bs, oversampling * n_bs), dft_codebook(n_ms, oversampling * n_ms),
            ris_dft_codebook(n_ris, oversampling * n_ris)};
}

struct BeamSweep {
    Codebooks books;
    TrainingDesign design;
    std::vector<std::pair<int, int>> slot_beams;  // (ris index, bs index) per slot
};

/// Sweep schedule: RIS beams in the outer loop, BS beams inner, the MS
/// codebook received in parallel in every slot; truncated to `budget` slots.
inline BeamSweep make_beam_sweep(const Codebooks& books, int budget, bool with_direct) {
    if (budget < 1) throw InvalidArgument("beam sweep budget must be >= 1");
    BeamSweep s;
    s.books = books;
    s.design.n_bs = static_cast<int>(books.bs.rows());
    s.design.n_ms = static_cast<int>(books.ms.rows());
    s.design.n_ris = static_cast<int>(books.ris.rows());
    s.design.with_direct = with_direct;
    for (int r = 0; r < books.ris.cols(); ++r) {
        for (int b = 0; b < books.bs.cols(); ++b) {
            if (static_cast<int>(s.slot_beams.size()) == budget) return s;
            PilotSlot slot;
            slot.profile = RisProfile(books.ris.col(r));
            slot.precoder = books.bs.col(b);
            slot.combiner = books.ms;
            s.design.slots.push_back(std::move(slot));
            s.slot_beams.emplace_back(r, b);
        }
    }
    return s;
}

struct BeamAlignment {
    int bs = 0;
    int ms = 0;
    int ris = 0;
    double power = 0.0;
    EstimationResult result;
};

/// Picks the (BS, MS, RIS) triple with the largest received power over the
/// sweep; ties go to the earliest slot, then the lowest MS index.
inline BeamAlignment beam_align(const std::vector<CVec>& observations, const BeamSweep& sweep, int t_p) {
    if (sweep.design.t_p() > t_p)
        throw BudgetExceeded("beam sweep of " + std::to_string(sweep.design.t_p()) +
                             " slots exceeds T_p = " + std::to_string(t_p));
    if (observations.size() != sweep.slot_beams.size())
        throw DimensionMismatch("one observation vector per sweep slot expected");
    BeamAlignment best;
    best.power = -1.0;
    cplx measured{0.0};
    for (std::size_t t = 0; t < observations.size(); ++t) {
        for (Eigen::Index i = 0; i < observations[t].size(); ++i) {
            const double p = std::norm(observations[t][i]);
            if (p > best.power) {
                best.power = p;
                best.ris = sweep.slot_beams[t].first;
                best.bs = sweep.slot_beams[t].second;
                best.ms = static_cast<int>(i);
                measured = observations[t][i] / sweep.design.slots[t].pilot;
            }
        }
    }

    const auto& d = sweep.design;
    Beamformers bf{sweep.books.bs.col(best.bs), sweep.books.ms.col(best.ms),
                   RisProfile(sweep.books.ris.col(best.ris))};
    // Rank-one implied channel: measured gain along the selected atoms, with
    // C w_sel = y w q^H.
    const CMat wq = bf.combiner * bf.precoder.adjoint();
    const Eigen::Map<const CVec> z(wq.data(), wq.size());
    CascadedChannel est;
    est.n_ms = d.n_ms;
    est.n_bs = d.n_bs;
    est.cascade = (measured / double(d.n_ris)) * z * bf.profile.coefficients().adjoint();
    if (d.with_direct) est.direct = CVec::Zero(z.size());
    best.result.estimate = std::move(est);
    best.result.beamformers = std::move(bf);
    return best;
}

}  // namespace slac
