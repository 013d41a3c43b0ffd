#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include <Eigen/Cholesky>

#include "slac/estimation/beam_align.hpp"

namespace slac {

struct SparseOptions {
    /// Grid density per dimension, in multiples of the array size.
    int oversampling = 1;
    int max_paths = 6;
    /// Per-sample noise variance; sets the detection threshold.
    double noise_variance = 1.0;
    /// Threshold = noise_variance * (ln(#atoms) + margin).
    double detection_margin = 4.0;
    int newton_iterations = 30;
    bool refine = true;
};

/// Two-stage off-grid estimator for sparse ULA channels.
///
/// Stage 1 is orthogonal matching pursuit over a DFT grid of cascaded atoms
/// (MS frequency, BS frequency, RIS cascaded frequency) and, when the design
/// models the direct link, direct atoms (MS frequency, BS frequency).
/// Stage 2 refines all detected frequencies jointly by damped Gauss-Newton
/// steps on the squared residual (analytic Jacobian, gains as nuisance
/// parameters); a step is kept only if the residual after re-fitting the
/// gains by least squares decreases.
class SparseEstimator {
public:
    struct Stage {
        std::vector<PathEstimate> paths;
        double residual = 0.0;  // ||y - X g||^2
    };

    SparseEstimator(const TrainingDesign& design, SparseOptions opts)
        : design_(design), opts_(opts) {
        design_.validate();
        if (opts_.oversampling < 1) throw InvalidArgument("grid oversampling must be >= 1");
        if (opts_.max_paths < 1) throw InvalidArgument("max_paths must be >= 1");
        const int t_p = design_.t_p();
        identity_combiners_ = true;
        for (const auto& s : design_.slots)
            identity_combiners_ = identity_combiners_ && s.combiner.cols() == design_.n_ms &&
                                  s.combiner.isIdentity(0.0);

        g_ms_ = frequency_grid(opts_.oversampling * design_.n_ms);
        g_bs_ = frequency_grid(opts_.oversampling * design_.n_bs);
        g_ris_ = frequency_grid(opts_.oversampling * design_.n_ris);
        const int n1 = static_cast<int>(g_ms_.size());
        const int n2 = static_cast<int>(g_bs_.size());
        const int n3 = static_cast<int>(g_ris_.size());

        CMat a_ms(design_.n_ms, n1);
        for (int i = 0; i < n1; ++i) a_ms.col(i) = ula_atom(design_.n_ms, g_ms_[std::size_t(i)]);
        wa_.reserve(std::size_t(t_p));
        a_norm_.resize(n1, t_p);
        beta_.resize(n2, t_p);
        gamma_.resize(n3, t_p);
        for (int t = 0; t < t_p; ++t) {
            const auto& s = design_.slots[std::size_t(t)];
            wa_.push_back(s.combiner.adjoint() * a_ms);
            a_norm_.col(t) = wa_.back().colwise().squaredNorm().transpose();
            for (int i = 0; i < n2; ++i)
                beta_(i, t) = ula_atom(design_.n_bs, g_bs_[std::size_t(i)]).dot(s.precoder);
            for (int i = 0; i < n3; ++i)
                gamma_(i, t) = (ula_atom(design_.n_ris, g_ris_[std::size_t(i)]).array() *
                                s.profile.coefficients().array()).sum();
        }
    }

    const SparseOptions& options() const noexcept { return opts_; }

    /// Stage 1: on-grid orthogonal matching pursuit.
    Stage detect(const CVec& y) const {
        const int t_p = design_.t_p();
        const int n1 = static_cast<int>(g_ms_.size());
        const int n2 = static_cast<int>(g_bs_.size());
        const int n3 = static_cast<int>(g_ris_.size());
        const double n_atoms = double(n1) * n2 * (n3 + (design_.with_direct ? 1 : 0));
        const double threshold = opts_.noise_variance * (std::log(n_atoms) + opts_.detection_margin);

        const Eigen::MatrixXd beta2 = beta_.cwiseAbs2();
        const Eigen::MatrixXd gamma2 = gamma_.cwiseAbs2();
        Eigen::MatrixXd nrm(Eigen::Index(n1) * n2, t_p);
        for (int b = 0; b < n2; ++b)
            for (int a = 0; a < n1; ++a) nrm.row(a + n1 * b) = a_norm_.row(a).cwiseProduct(beta2.row(b));
        const Eigen::MatrixXd casc_norm = nrm * gamma2.transpose();
        const Eigen::VectorXd dir_norm = nrm.rowwise().sum();

        Stage st;
        CVec residual = y;
        CMat x(y.size(), 0);
        for (int iter = 0; iter < opts_.max_paths; ++iter) {
            CMat z(n1, t_p);
            Eigen::Index off = 0;
            for (int t = 0; t < t_p; ++t) {
                const Eigen::Index k = wa_[std::size_t(t)].rows();
                z.col(t) = wa_[std::size_t(t)].adjoint() * residual.segment(off, k) *
                           std::conj(design_.slots[std::size_t(t)].pilot);
                off += k;
            }
            CMat mm(Eigen::Index(n1) * n2, t_p);
            for (int b = 0; b < n2; ++b)
                for (int a = 0; a < n1; ++a)
                    mm.row(a + n1 * b) = z.row(a).cwiseProduct(beta_.row(b).conjugate());
            const CMat casc = mm * gamma_.conjugate().transpose();

            double best = -1.0;
            PathEstimate pick;
            for (int r = 0; r < n3; ++r) {
                for (Eigen::Index ab = 0; ab < casc.rows(); ++ab) {
                    const double den = casc_norm(ab, r);
                    if (!(den > 0.0)) continue;
                    const double score = std::norm(casc(ab, r)) / den;
                    if (score > best) {
                        best = score;
                        pick = {cplx(0.0), g_ms_[std::size_t(ab % n1)], g_bs_[std::size_t(ab / n1)],
                                g_ris_[std::size_t(r)]};
                    }
                }
            }
            if (design_.with_direct) {
                const CVec dir = mm.rowwise().sum();
                for (Eigen::Index ab = 0; ab < dir.size(); ++ab) {
                    if (!(dir_norm[ab] > 0.0)) continue;
                    const double score = std::norm(dir[ab]) / dir_norm[ab];
                    if (score > best) {
                        best = score;
                        pick = {cplx(0.0), g_ms_[std::size_t(ab % n1)], g_bs_[std::size_t(ab / n1)],
                                std::nullopt};
                    }
                }
            }
            if (best < threshold) break;
            st.paths.push_back(pick);
            x.conservativeResize(Eigen::NoChange, x.cols() + 1);
            x.col(x.cols() - 1) = response(pick);
            const CVec g = fit_gains(x, y);
            residual = y - x * g;
            for (std::size_t p = 0; p < st.paths.size(); ++p) st.paths[p].gain = g[Eigen::Index(p)];
        }
        if (st.paths.empty()) throw NoPathDetected("no atom exceeds the detection threshold");
        st.residual = residual.squaredNorm();
        return st;
    }

    /// Stage 2: off-grid refinement; never increases the residual.
    Stage refine(const CVec& y, Stage st) const {
        CMat x = responses(st.paths);
        double f = objective(x, y);
        double mu = 1e-3;
        const double max_step =
            2.0 / (opts_.oversampling * std::max({design_.n_ms, design_.n_bs, design_.n_ris}));
        for (int it = 0; it < opts_.newton_iterations; ++it) {
            const CVec g = fit_gains(x, y);
            const CVec r = y - x * g;
            const Eigen::MatrixXd jac = real_jacobian(st.paths, x, g);
            Eigen::VectorXd rr(2 * r.size());
            rr << r.real(), r.imag();
            const Eigen::MatrixXd jtj = jac.transpose() * jac;
            const Eigen::VectorXd jtr = jac.transpose() * rr;
            const Eigen::Index nf = jtj.rows() - 2 * Eigen::Index(st.paths.size());
            bool accepted = false;
            for (int tries = 0; tries < 12 && !accepted; ++tries) {
                Eigen::MatrixXd lhs = jtj;
                lhs.diagonal() += mu * jtj.diagonal().cwiseMax(1e-300);
                const Eigen::VectorXd step = lhs.ldlt().solve(jtr);
                Eigen::VectorXd df = step.tail(nf);
                if (!df.allFinite()) break;
                const double big = df.cwiseAbs().maxCoeff();
                if (big > max_step) df *= max_step / big;
                auto trial = st.paths;
                Eigen::Index k = 0;
                for (auto& p : trial)
                    for (int i = 0; i < param_count(p); ++i) param(p, i) += df[k++];
                CMat xt = responses(trial);
                const double ft = objective(xt, y);
                if (ft < f) {
                    accepted = true;
                    const double gain = f - ft;
                    st.paths = std::move(trial);
                    x = std::move(xt);
                    f = ft;
                    mu = std::max(mu / 3, 1e-12);
                    if (gain <= 1e-12 * f || big < 1e-12) it = opts_.newton_iterations;
                } else {
                    mu *= 4;
                }
            }
            if (!accepted) break;
        }
        const CVec g = fit_gains(x, y);
        for (std::size_t p = 0; p < st.paths.size(); ++p) {
            auto& path = st.paths[p];
            path.gain = g[Eigen::Index(p)];
            path.ms_freq = wrap_frequency(path.ms_freq);
            path.bs_freq = wrap_frequency(path.bs_freq);
            if (path.ris_freq) path.ris_freq = wrap_frequency(*path.ris_freq);
        }
        st.residual = f;
        return st;
    }

    EstimationResult estimate(const std::vector<CVec>& observations) const {
        const CVec y = stack_observations(observations);
        Stage st = detect(y);
        if (opts_.refine) st = refine(y, std::move(st));
        EstimationResult r;
        r.estimate = reconstruct(st.paths);
        r.path_estimates = std::move(st.paths);
        r.beamformers = optimize_beamformers(r.estimate);
        return r;
    }

    /// Cascade (and direct link) implied by a set of paths.
    CascadedChannel reconstruct(const std::vector<PathEstimate>& paths) const {
        CascadedChannel c;
        c.n_ms = design_.n_ms;
        c.n_bs = design_.n_bs;
        const Eigen::Index nmb = Eigen::Index(c.n_ms) * c.n_bs;
        c.cascade = CMat::Zero(nmb, design_.n_ris);
        if (design_.with_direct) c.direct = CVec::Zero(nmb);
        for (const auto& p : paths) {
            const CMat outer = ula_atom(c.n_ms, p.ms_freq) * ula_atom(c.n_bs, p.bs_freq).adjoint();
            const Eigen::Map<const CVec> v(outer.data(), outer.size());
            if (p.ris_freq) {
                c.cascade.noalias() += p.gain * v * ula_atom(design_.n_ris, *p.ris_freq).transpose();
            } else if (c.direct) {
                *c.direct += p.gain * v;
            }
        }
        return c;
    }

    /// Noiseless observation vector of a unit-gain path.
    CVec response(const PathEstimate& p) const { return response_and_derivatives(p, nullptr); }

private:
    static double wrap_frequency(double u) {
        u = std::fmod(u + 1.0, 2.0);
        if (u < 0.0) u += 2.0;
        return u - 1.0;
    }

    /// Least-squares gains with a noise-level ridge, which keeps nearly
    /// collinear atoms from taking large cancelling gains.
    CVec fit_gains(const CMat& x, const CVec& y) const {
        CMat gram = x.adjoint() * x;
        gram.diagonal().array() += opts_.noise_variance;
        return gram.ldlt().solve(x.adjoint() * y);
    }

    double objective(const CMat& x, const CVec& y) const {
        return (y - x * fit_gains(x, y)).squaredNorm();
    }

    static int param_count(const PathEstimate& p) { return p.ris_freq ? 3 : 2; }

    static double& param(PathEstimate& p, int i) {
        if (i == 0) return p.ms_freq;
        if (i == 1) return p.bs_freq;
        return *p.ris_freq;
    }

    static CVec ramp(int n) {
        CVec d(n);
        const double c0 = 0.5 * (n - 1);
        for (int m = 0; m < n; ++m) d[m] = cplx(0.0, std::numbers::pi * (m - c0));
        return d;
    }

    /// Response of a unit-gain path and, if `deriv` is given, its derivatives
    /// with respect to the path's frequencies (one column per parameter).
    CVec response_and_derivatives(const PathEstimate& p, CMat* deriv) const {
        const Eigen::Index rows = design_.observations();
        CVec out(rows);
        const CVec a_ms = ula_atom(design_.n_ms, p.ms_freq);
        const CVec a_bs = ula_atom(design_.n_bs, p.bs_freq);
        const CVec v = p.ris_freq ? ula_atom(design_.n_ris, *p.ris_freq) : CVec();
        CVec da_ms, da_bs, dv;
        if (deriv) {
            deriv->resize(rows, param_count(p));
            da_ms = ramp(design_.n_ms).cwiseProduct(a_ms);
            da_bs = ramp(design_.n_bs).cwiseProduct(a_bs);
            if (p.ris_freq) dv = ramp(design_.n_ris).cwiseProduct(v);
        }
        Eigen::Index off = 0;
        for (const auto& s : design_.slots) {
            const cplx beta = a_bs.dot(s.precoder);
            const cplx gamma = p.ris_freq ? (v.array() * s.profile.coefficients().array()).sum() : cplx(1.0);
            const Eigen::Index k = s.combiner.cols();
            const CVec w_ms = identity_combiners_ ? a_ms : CVec(s.combiner.adjoint() * a_ms);
            out.segment(off, k) = s.pilot * beta * gamma * w_ms;
            if (deriv) {
                const CVec w_dms = identity_combiners_ ? da_ms : CVec(s.combiner.adjoint() * da_ms);
                deriv->col(0).segment(off, k) = s.pilot * beta * gamma * w_dms;
                deriv->col(1).segment(off, k) = s.pilot * da_bs.dot(s.precoder) * gamma * w_ms;
                if (p.ris_freq)
                    deriv->col(2).segment(off, k) =
                        s.pilot * beta * (dv.array() * s.profile.coefficients().array()).sum() * w_ms;
            }
            off += k;
        }
        return out;
    }

    CMat responses(const std::vector<PathEstimate>& paths) const {
        CMat x(design_.observations(), Eigen::Index(paths.size()));
        for (std::size_t p = 0; p < paths.size(); ++p) x.col(Eigen::Index(p)) = response(paths[p]);
        return x;
    }

    /// Real Jacobian of the model X(theta) g, stacked [Re; Im]. Columns: real
    /// and imaginary part of every gain, then every frequency parameter.
    Eigen::MatrixXd real_jacobian(const std::vector<PathEstimate>& paths, const CMat& x, const CVec& g) const {
        Eigen::Index nf = 0;
        for (const auto& p : paths) nf += param_count(p);
        const Eigen::Index np = Eigen::Index(paths.size()), rows = x.rows();
        CMat jc(rows, 2 * np + nf);
        jc.leftCols(np) = x;
        jc.middleCols(np, np) = x * cplx(0.0, 1.0);
        Eigen::Index col = 2 * np;
        CMat d;
        for (Eigen::Index p = 0; p < np; ++p) {
            response_and_derivatives(paths[std::size_t(p)], &d);
            jc.middleCols(col, d.cols()) = g[p] * d;
            col += d.cols();
        }
        Eigen::MatrixXd jr(2 * rows, jc.cols());
        jr << jc.real(), jc.imag();
        return jr;
    }

    TrainingDesign design_;
    SparseOptions opts_;
    bool identity_combiners_ = false;
    std::vector<double> g_ms_, g_bs_, g_ris_;
    std::vector<CMat> wa_;      // per slot: W_t^H A_ms
    Eigen::MatrixXd a_norm_;    // |W_t^H a_ms(u)|^2, grid x slot
    CMat beta_;                 // a_bs(u)^H q_t, grid x slot
    CMat gamma_;                // v(k)^T w_t, grid x slot
};

inline EstimationResult sparse_estimate(const std::vector<CVec>& observations, const TrainingDesign& design,
                                        const SparseOptions& opts = {}) {
    return SparseEstimator(design, opts).estimate(observations);
}

}  // namespace slac
