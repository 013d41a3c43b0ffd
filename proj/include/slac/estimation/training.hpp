#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "slac/channel.hpp"

namespace slac {

/// Cascaded BS-RIS-MS channel in per-element form.
///
/// Column m of `cascade` is vec(G[:, m] F[m, :]) (column-major, length
/// N_MS * N_BS); `direct` is vec(H_direct) when the LoS link is modelled.
/// The same storage, read column-major as an N_MS x (N_BS * N_RIS) matrix,
/// is the reshaping on which low-rank structure is exploited.
struct CascadedChannel {
    int n_ms = 0;
    int n_bs = 0;
    CMat cascade;
    std::optional<CVec> direct;

    int n_ris() const { return static_cast<int>(cascade.cols()); }

    static CascadedChannel from_matrices(const ChannelMatrices& ch, bool with_direct) {
        CascadedChannel c;
        c.n_ms = ch.n_ms();
        c.n_bs = ch.n_bs();
        c.cascade.resize(Eigen::Index(c.n_ms) * c.n_bs, ch.n_ris());
        for (int m = 0; m < ch.n_ris(); ++m) {
            const CMat outer = ch.ris_ms.col(m) * ch.bs_ris.row(m);
            c.cascade.col(m) = Eigen::Map<const CVec>(outer.data(), outer.size());
        }
        if (with_direct) c.direct = Eigen::Map<const CVec>(ch.direct.data(), ch.direct.size());
        return c;
    }

    /// H(w) = H_direct + sum_m w_m G[:, m] F[m, :], as an N_MS x N_BS matrix.
    CMat effective(const CVec& omega) const {
        if (omega.size() != cascade.cols()) throw DimensionMismatch("profile length differs from N_RIS");
        CVec v = cascade * omega;
        if (direct) v += *direct;
        return Eigen::Map<const CMat>(v.data(), n_ms, n_bs);
    }

    /// Unknown vector [vec(cascade); direct].
    CVec stacked() const {
        const Eigen::Index nc = cascade.size();
        CVec h(nc + (direct ? direct->size() : 0));
        h.head(nc) = Eigen::Map<const CVec>(cascade.data(), nc);
        if (direct) h.tail(direct->size()) = *direct;
        return h;
    }

    static CascadedChannel from_stacked(const CVec& h, int n_ms, int n_bs, int n_ris, bool with_direct) {
        CascadedChannel c;
        c.n_ms = n_ms;
        c.n_bs = n_bs;
        const Eigen::Index nc = Eigen::Index(n_ms) * n_bs * n_ris;
        const Eigen::Index nd = with_direct ? Eigen::Index(n_ms) * n_bs : 0;
        if (h.size() != nc + nd) throw DimensionMismatch("stacked channel has the wrong length");
        c.cascade = Eigen::Map<const CMat>(h.data(), Eigen::Index(n_ms) * n_bs, n_ris);
        if (with_direct) c.direct = h.tail(nd);
        return c;
    }
};

/// ||est - truth||_F^2 / ||truth||_F^2.
inline double nmse(const CVec& estimate, const CVec& truth) {
    if (estimate.size() != truth.size()) throw DimensionMismatch("estimate and truth sizes differ");
    const double denom = truth.squaredNorm();
    if (!(denom > 0.0)) throw ZeroTruth("NMSE undefined for an all-zero truth");
    return (estimate - truth).squaredNorm() / denom;
}

inline double nmse(const CascadedChannel& estimate, const CascadedChannel& truth) {
    if (estimate.direct.has_value() != truth.direct.has_value())
        throw DimensionMismatch("estimate and truth disagree on the direct link");
    return nmse(estimate.stacked(), truth.stacked());
}

/// Pilot schedule shared by every estimator.
struct TrainingDesign {
    int n_bs = 0;
    int n_ms = 0;
    int n_ris = 0;
    bool with_direct = false;
    std::vector<PilotSlot> slots;

    int t_p() const { return static_cast<int>(slots.size()); }

    int unknowns() const {
        return n_ms * n_bs * n_ris + (with_direct ? n_ms * n_bs : 0);
    }

    int observations() const {
        int n = 0;
        for (const auto& s : slots) n += static_cast<int>(s.combiner.cols());
        return n;
    }

    void validate() const {
        if (slots.empty()) throw InvalidArgument("training design needs T_p >= 1");
        for (const auto& s : slots) {
            if (s.profile.size() != n_ris || s.precoder.size() != n_bs || s.combiner.rows() != n_ms)
                throw DimensionMismatch("training slot dimensions do not match the design");
        }
    }
};

inline CVec unit_modulus_vector(Rng& rng, int n) {
    CVec v(n);
    for (int i = 0; i < n; ++i) v[i] = std::polar(1.0 / std::sqrt(double(n)), uniform_phase(rng));
    return v;
}

/// Random training: i.i.d. random-phase precoders and RIS profiles, full
/// (identity) combining at the MS, unit pilots.
inline TrainingDesign random_training(int n_bs, int n_ms, int n_ris, int t_p, bool with_direct,
                                      std::uint64_t seed) {
    if (t_p < 1) throw InvalidArgument("T_p must be at least 1");
    Rng rng(seed);
    TrainingDesign d{n_bs, n_ms, n_ris, with_direct, {}};
    d.slots.reserve(static_cast<std::size_t>(t_p));
    for (int t = 0; t < t_p; ++t) {
        PilotSlot s;
        s.precoder = n_bs == 1 ? CVec::Ones(1) : unit_modulus_vector(rng, n_bs);
        Eigen::VectorXd ph(n_ris);
        for (int m = 0; m < n_ris; ++m) ph[m] = uniform_phase(rng);
        s.profile = profile_from_phases(ph);
        s.combiner = CMat::Identity(n_ms, n_ms);
        d.slots.push_back(std::move(s));
    }
    return d;
}

/// Receives the design's pilots over `ch`; one observation vector per slot.
inline std::vector<CVec> observe(const ChannelMatrices& ch, const TrainingDesign& design,
                                 const NoiseModel& noise, std::uint64_t seed) {
    design.validate();
    return receive_pilots(ch, design.slots, noise, seed);
}

inline CVec stack_observations(const std::vector<CVec>& obs) {
    Eigen::Index n = 0;
    for (const auto& o : obs) n += o.size();
    CVec y(n);
    Eigen::Index off = 0;
    for (const auto& o : obs) {
        y.segment(off, o.size()) = o;
        off += o.size();
    }
    return y;
}

/// The linear map h -> y of a training design, applied slot by slot:
/// y_t = s_t W_t^H reshape(C w_t + d) q_t.
class MeasurementOperator {
public:
    explicit MeasurementOperator(const TrainingDesign& design) : design_(design) {
        design_.validate();
        closed_form_ = design_.n_bs == 1;
        for (const auto& s : design_.slots)
            closed_form_ = closed_form_ && s.combiner.cols() == design_.n_ms && s.combiner.isIdentity(0.0) &&
                           std::abs(std::abs(s.pilot * s.precoder[0]) - 1.0) < 1e-12;
        if (closed_form_) {
            profile_gram_ = CMat::Zero(design_.n_ris, design_.n_ris);
            profile_sum_ = CVec::Zero(design_.n_ris);
            for (const auto& s : design_.slots) {
                profile_gram_.noalias() += s.profile.coefficients() * s.profile.coefficients().adjoint();
                profile_sum_ += s.profile.coefficients();
            }
        }
    }

    const TrainingDesign& design() const noexcept { return design_; }
    Eigen::Index rows() const { return design_.observations(); }
    Eigen::Index cols() const { return design_.unknowns(); }

    CVec apply(const CVec& h) const {
        const int nmb = design_.n_ms * design_.n_bs;
        const Eigen::Map<const CMat> c(h.data(), nmb, design_.n_ris);
        CVec y(rows());
        Eigen::Index off = 0;
        for (const auto& s : design_.slots) {
            CVec v = c * s.profile.coefficients();
            if (design_.with_direct) v += h.tail(nmb);
            const Eigen::Map<const CMat> x(v.data(), design_.n_ms, design_.n_bs);
            const Eigen::Index k = s.combiner.cols();
            y.segment(off, k) = s.pilot * (s.combiner.adjoint() * (x * s.precoder));
            off += k;
        }
        return y;
    }

    CVec adjoint(const CVec& r) const {
        const int nmb = design_.n_ms * design_.n_bs;
        CVec h = CVec::Zero(cols());
        Eigen::Map<CMat> c(h.data(), nmb, design_.n_ris);
        Eigen::Index off = 0;
        for (const auto& s : design_.slots) {
            const Eigen::Index k = s.combiner.cols();
            const CMat d = std::conj(s.pilot) * (s.combiner * r.segment(off, k)) * s.precoder.adjoint();
            const Eigen::Map<const CVec> dv(d.data(), d.size());
            c.noalias() += dv * s.profile.coefficients().adjoint();
            if (design_.with_direct) h.tail(nmb) += dv;
            off += k;
        }
        return h;
    }

    /// A^H A h. With a single BS antenna, identity combining and unit-modulus
    /// pilots this is C P + d s^H (cascade) and C s + T_p d (direct), where
    /// P and s are the sum of w_t w_t^H and of w_t over the slots.
    CVec normal(const CVec& h) const {
        if (!closed_form_) return adjoint(apply(h));
        const Eigen::Index n_ms = design_.n_ms, n_ris = design_.n_ris;
        const Eigen::Map<const CMat> c(h.data(), n_ms, n_ris);
        CVec out(h.size());
        Eigen::Map<CMat> oc(out.data(), n_ms, n_ris);
        oc.noalias() = c * profile_gram_;
        if (design_.with_direct) {
            const auto d = h.tail(n_ms);
            oc.noalias() += d * profile_sum_.adjoint();
            out.tail(n_ms) = c * profile_sum_ + double(design_.t_p()) * d;
        }
        return out;
    }

    /// Dense matrix form; column j is apply(e_j).
    CMat dense() const {
        CMat a(rows(), cols());
        CVec e = CVec::Zero(cols());
        for (Eigen::Index j = 0; j < cols(); ++j) {
            e[j] = 1.0;
            a.col(j) = apply(e);
            e[j] = 0.0;
        }
        return a;
    }

private:
    TrainingDesign design_;
    bool closed_form_ = false;
    CMat profile_gram_;
    CVec profile_sum_;
};

}  // namespace slac
