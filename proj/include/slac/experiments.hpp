#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Cholesky>

#include "slac/estimation/least_squares.hpp"
#include "slac/estimation/sparse.hpp"
#include "slac/estimation/unfolded.hpp"
#include "slac/localization.hpp"
#include "slac/parallel.hpp"

namespace slac {

/// (1 - T_p / T_c) log2(1 + snr).
inline double effective_se(double snr_linear, int t_p, int t_c) {
    if (t_c < 1 || t_p < 0 || t_p > t_c) throw InvalidArgument("need 0 <= T_p <= T_c and T_c >= 1");
    if (!(snr_linear >= 0.0)) throw InvalidArgument("SNR must be non-negative");
    return (1.0 - double(t_p) / double(t_c)) * std::log2(1.0 + snr_linear);
}

struct FrameConfig {
    int t_c = 500;
    std::vector<int> t_p;
    int trials = 100;
    std::uint64_t seed = 1;

    void validate() const {
        if (t_c < 1) throw InvalidArgument("T_c must be >= 1");
        if (trials < 1) throw InvalidArgument("trials must be >= 1");
        for (int t : t_p)
            if (t < 0 || t > t_c) throw InvalidArgument("T_p must lie in [0, T_c]");
    }
};

enum class EstimatorKind { FullCsi, LeastSquares, Sparse, BeamAlign, Unfolded };

inline const char* estimator_name(EstimatorKind k) {
    switch (k) {
        case EstimatorKind::FullCsi: return "full_csi";
        case EstimatorKind::LeastSquares: return "ls";
        case EstimatorKind::Sparse: return "sparse";
        case EstimatorKind::BeamAlign: return "beam_align";
        case EstimatorKind::Unfolded: return "unfolded";
    }
    return "";
}

inline std::optional<EstimatorKind> parse_estimator(const std::string& name) {
    for (auto k : {EstimatorKind::FullCsi, EstimatorKind::LeastSquares, EstimatorKind::Sparse,
                   EstimatorKind::BeamAlign, EstimatorKind::Unfolded})
        if (name == estimator_name(k)) return k;
    return std::nullopt;
}

inline const char* policy_name(PolicyKind k) {
    switch (k) {
        case PolicyKind::Random: return "random";
        case PolicyKind::Directional: return "directional";
        case PolicyKind::Positional: return "positional";
    }
    return "";
}

struct ArrayConfig {
    ArrayKind kind = ArrayKind::ULA;
    int nx = 1;
    int nz = 1;
    std::optional<double> spacing;  // half a wavelength when empty
    Vec3 position = Vec3::Zero();

    int size() const { return nx * nz; }

    ArraySpec build(const Wavelength& wl) const {
        const double d = spacing.value_or(wl.lambda / 2);
        return kind == ArrayKind::ULA ? ArraySpec::ula(nx, d, position) : ArraySpec::upa(nx, nz, d, position);
    }
};

struct UnfoldConfig {
    int depth = 10;
    int samples = 200;
    int epochs = 15;
    double learning_rate = 0.1;
};

struct CeBenchConfig {
    double carrier_hz = 28e9;
    std::vector<double> snr_db;
    ArrayConfig bs, ms, ris;
    int direct_paths = 2;  // NLoS paths of the direct link, besides the LoS
    bool blocked_los = false;
    FrameConfig frame;
    /// Per-estimator pilot budgets; `frame.t_p` applies where absent.
    std::map<EstimatorKind, std::vector<int>> t_p_override;
    std::vector<EstimatorKind> estimators;
    int codebook_oversampling = 1;
    int sparse_max_paths = 6;
    UnfoldConfig unfold;
    int threads = 1;

    std::vector<int> budgets(EstimatorKind k) const {
        if (k == EstimatorKind::FullCsi) return {0};
        const auto it = t_p_override.find(k);
        return it != t_p_override.end() ? it->second : frame.t_p;
    }
};

struct CeBenchRow {
    std::string estimator;
    int t_p = 0;
    double snr_db = 0.0;
    double nmse = 0.0;
    double eff_se = 0.0;
};

namespace detail {

/// The three links of one Monte Carlo draw.
inline ChannelMatrices draw_channel(const CeBenchConfig& cfg, const ArraySpec& bs, const ArraySpec& ms,
                                    const ArraySpec& ris, const Wavelength& wl, std::uint64_t seed) {
    ChannelMatrices ch;
    ch.bs_ris = random_channel(derive_seed(seed, {1}), bs, ris, 0, true, wl).matrix();
    ch.ris_ms = random_channel(derive_seed(seed, {2}), ris, ms, 0, true, wl).matrix();
    if (cfg.blocked_los && cfg.direct_paths == 0)
        ch.direct = CMat::Zero(ms.size(), bs.size());
    else
        ch.direct = random_channel(derive_seed(seed, {3}), bs, ms, cfg.direct_paths, !cfg.blocked_los, wl).matrix();
    return ch;
}

struct TrialOutcome {
    double nmse = 0.0;
    double se = 0.0;
};

}  // namespace detail

/// Monte Carlo channel-estimation benchmark. Every (estimator, T_p, SNR) cell
/// sees the same channel draws; the training design is fixed per
/// (estimator, T_p). Rows follow the configured estimator order, then T_p,
/// then SNR.
inline std::vector<CeBenchRow> run_ce_benchmark(const CeBenchConfig& cfg) {
    cfg.frame.validate();
    if (cfg.estimators.empty()) throw InvalidArgument("no estimators enabled");
    if (cfg.snr_db.empty()) throw InvalidArgument("no SNR points configured");
    const Wavelength wl = Wavelength::from_frequency(cfg.carrier_hz);
    const ArraySpec bs = cfg.bs.build(wl), ms = cfg.ms.build(wl), ris = cfg.ris.build(wl);
    const bool with_direct = !cfg.blocked_los || cfg.direct_paths > 0;
    const std::uint64_t root = cfg.frame.seed;
    const auto trials = std::size_t(cfg.frame.trials);

    std::vector<ChannelMatrices> channels(trials);
    parallel_for(trials, cfg.threads, [&](std::size_t i) {
        channels[i] = detail::draw_channel(cfg, bs, ms, ris, wl, derive_seed(root, {1, i}));
    });
    std::vector<CascadedChannel> truths;
    truths.reserve(trials);
    for (const auto& ch : channels) truths.push_back(CascadedChannel::from_matrices(ch, with_direct));

    std::vector<CeBenchRow> rows;
    for (EstimatorKind kind : cfg.estimators) {
        const auto kid = std::uint64_t(kind);
        for (int t_p : cfg.budgets(kind)) {
            const auto tp = std::uint64_t(t_p);
            std::optional<TrainingDesign> design;
            std::optional<LeastSquaresEstimator> ls;
            std::optional<BeamSweep> sweep;
            if (kind == EstimatorKind::LeastSquares || kind == EstimatorKind::Sparse ||
                kind == EstimatorKind::Unfolded) {
                if (t_p < 1) throw InvalidArgument(std::string(estimator_name(kind)) + " needs T_p >= 1");
                design = random_training(bs.size(), ms.size(), ris.size(), t_p, with_direct,
                                         derive_seed(root, {2, kid, tp}));
                if (kind == EstimatorKind::LeastSquares) ls.emplace(*design);
            } else if (kind == EstimatorKind::BeamAlign) {
                sweep = make_beam_sweep(dft_codebooks(bs.size(), ms.size(), ris.size(), cfg.codebook_oversampling),
                                        t_p, with_direct);
            }

            for (std::size_t si = 0; si < cfg.snr_db.size(); ++si) {
                const double snr_db = cfg.snr_db[si];
                const NoiseModel noise = NoiseModel::from_snr_db(snr_db);
                std::optional<UnfoldedEstimator> unfolded;
                std::optional<MeasurementOperator> op;
                if (kind == EstimatorKind::Unfolded) {
                    op.emplace(*design);
                    std::vector<UnfoldSample> data(std::size_t(cfg.unfold.samples));
                    parallel_for(data.size(), cfg.threads, [&](std::size_t i) {
                        const auto s = derive_seed(root, {4, tp, si, i});
                        const auto ch = detail::draw_channel(cfg, bs, ms, ris, wl, derive_seed(s, {0}));
                        data[i].observations = stack_observations(observe(ch, *design, noise, derive_seed(s, {1})));
                        data[i].truth = CascadedChannel::from_matrices(ch, with_direct).stacked();
                    });
                    const double l = operator_norm_squared(*op);
                    const auto init = UnfoldedEstimator::uniform(cfg.unfold.depth, 1.0 / l, 0.0);
                    unfolded = unfolded_train(init, *op, data,
                                              {cfg.unfold.epochs, cfg.unfold.learning_rate, 1e-4});
                }
                std::optional<SparseEstimator> sparse;
                if (kind == EstimatorKind::Sparse) {
                    SparseOptions so;
                    so.oversampling = cfg.codebook_oversampling;
                    so.max_paths = cfg.sparse_max_paths;
                    so.noise_variance = noise.variance;
                    sparse.emplace(*design, so);
                }

                std::vector<detail::TrialOutcome> out(trials);
                parallel_for(trials, cfg.threads, [&](std::size_t i) {
                    const auto& ch = channels[i];
                    const auto noise_seed = derive_seed(root, {3, kid, tp, si, i});
                    EstimationResult r;
                    switch (kind) {
                        case EstimatorKind::FullCsi:
                            r.estimate = truths[i];
                            r.beamformers = optimize_beamformers(truths[i]);
                            break;
                        case EstimatorKind::LeastSquares:
                            r = ls->estimate(observe(ch, *design, noise, noise_seed));
                            break;
                        case EstimatorKind::Sparse:
                            try {
                                r = sparse->estimate(observe(ch, *design, noise, noise_seed));
                            } catch (const NoPathDetected&) {
                                r.estimate = CascadedChannel::from_stacked(CVec::Zero(design->unknowns()), ms.size(),
                                                                           bs.size(), ris.size(), with_direct);
                                r.beamformers = optimize_beamformers(r.estimate);
                            }
                            break;
                        case EstimatorKind::BeamAlign:
                            r = beam_align(observe(ch, sweep->design, noise, noise_seed), *sweep, t_p).result;
                            break;
                        case EstimatorKind::Unfolded:
                            r = unfolded->estimate(*op, observe(ch, *design, noise, noise_seed));
                            break;
                    }
                    out[i].nmse = kind == EstimatorKind::FullCsi ? 0.0 : nmse(r.estimate, truths[i]);
                    out[i].se = effective_se(beamforming_gain(ch, r.beamformers) / noise.variance, t_p,
                                             cfg.frame.t_c);
                });
                CeBenchRow row{estimator_name(kind), t_p, snr_db, 0.0, 0.0};
                for (const auto& o : out) {
                    row.nmse += o.nmse;
                    row.eff_se += o.se;
                }
                row.nmse /= double(trials);
                row.eff_se /= double(trials);
                rows.push_back(row);
            }
        }
    }
    return rows;
}

struct TradeoffConfig {
    double carrier_hz = 30e9;
    Vec3 bs_position{1.0, 1.0, 0.0};
    Vec3 ris_position{0.0, 0.0, 0.0};
    Vec3 user_position{5.0, 5.0, -5.0};
    std::vector<std::pair<int, int>> ris_sizes{{16, 16}, {32, 32}};
    std::vector<PolicyKind> policies{PolicyKind::Random, PolicyKind::Directional};
    std::optional<double> prior_sigma_m;
    double dither_rad = 0.3;
    double uncertainty_radius_m = 0.0;
    /// Per-element SNR of the via-RIS path, |g_r|^2 P / sigma^2.
    double element_snr_db = -10.0;
    /// Narrowband observations per pilot slot (e.g. subcarriers); scales the FIM.
    int pilot_subcarriers = 1;
    FrameConfig frame{1000, {4, 6, 8, 12, 16, 25, 50, 100, 200, 400, 800, 1000}, 500, 1};
    int threads = 1;

    void validate() const {
        frame.validate();
        if (!std::is_sorted(frame.t_p.begin(), frame.t_p.end())) throw InvalidArgument("T_p list must be ascending");
        if (frame.t_p.empty() || frame.t_p.front() < 1) throw InvalidArgument("tradeoff needs T_p >= 1");
        for (auto p : policies) {
            if (p == PolicyKind::Positional) throw InvalidArgument("tradeoff policies are random or directional");
            if (p == PolicyKind::Directional && !prior_sigma_m) throw MissingPrior("directional policy needs prior_sigma_m");
        }
        if (prior_sigma_m && !(*prior_sigma_m >= 0.0)) throw InvalidArgument("prior_sigma_m must be >= 0");
        if (pilot_subcarriers < 1) throw InvalidArgument("pilot_subcarriers must be >= 1");
    }
};

struct TradeoffPoint {
    int t_p = 0;
    double peb = std::numeric_limits<double>::infinity();
    double eff_se = 0.0;
    PolicyKind policy = PolicyKind::Random;
    int ris_elements = 0;
};

namespace detail {

/// PEB and effective SE of one Monte Carlo realization (prior, pilot
/// profiles, position estimates) at every configured T_p.
inline void tradeoff_trial(const TradeoffConfig& cfg, const ArraySpec& ris, const Wavelength& wl,
                           const CVec& cascade, PolicyKind policy, std::uint64_t seed, double* peb_out,
                           double* se_out) {
    const double snr = std::pow(10.0, cfg.element_snr_db / 10.0);
    Rng rng(seed);
    std::normal_distribution<double> n01;
    ProfilePolicy pp;
    pp.kind = policy;
    pp.dither = cfg.dither_rad;
    pp.uncertainty_radius = cfg.uncertainty_radius_m;
    if (policy != PolicyKind::Random) {
        Vec3 prior = cfg.user_position;
        for (int i = 0; i < 3; ++i) prior[i] += *cfg.prior_sigma_m * n01(rng);
        pp.prior = prior;
    }
    const int t_max = cfg.frame.t_p.back();
    auto profiles = training_profiles(pp, t_max, ris, wl, rng(), cfg.bs_position).profiles;

    // g_d does not enter the position information; unit magnitude.
    const SisoLocModel model{cfg.bs_position, ris, cfg.user_position, wl, cplx(1.0, 0.0),
                             cplx(std::sqrt(snr), 0.0), 1.0, 1.0,
                             std::vector<cplx>(std::size_t(t_max), cplx(1.0)), std::move(profiles)};
    const CMat jac = mean_jacobian(model);

    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(jac.cols(), jac.cols());
    int done = 0;
    for (std::size_t ti = 0; ti < cfg.frame.t_p.size(); ++ti) {
        const int t_p = cfg.frame.t_p[ti];
        for (; done < t_p; ++done)
            j += 2.0 * cfg.pilot_subcarriers * (jac.row(done).adjoint() * jac.row(done)).real();
        Eigen::Matrix3d crb;
        peb_out[ti] = peb_from_fim(j, &crb);

        // The estimate used for data transmission also draws on the prior
        // when the policy has one (Bayesian bound).
        bool informed = std::isfinite(peb_out[ti]);
        Eigen::Matrix3d cov = crb;
        if (pp.prior) {
            informed = true;
            const double s2 = std::pow(*cfg.prior_sigma_m, 2);
            if (s2 > 0.0) {
                Eigen::MatrixXd jb = j;
                jb.topLeftCorner(3, 3) += Eigen::Matrix3d::Identity() / s2;
                if (!std::isfinite(peb_from_fim(jb, &cov))) cov = Eigen::Matrix3d::Identity() * s2;
            } else {
                cov.setZero();
            }
        }
        RisProfile data;
        if (informed) {
            Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(0.5 * (cov + cov.transpose()));
            const Eigen::Matrix3d root_cov =
                eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
            for (int attempt = 0; attempt < 8 && data.size() == 0; ++attempt) {
                const Vec3 z(n01(rng), n01(rng), n01(rng));
                try {
                    data = positional_profile(cfg.bs_position, cfg.user_position + root_cov * z, ris, wl);
                } catch (const SourceOnArray&) {
                }
            }
        }
        if (data.size() == 0) data = random_profile(ris.size(), rng());
        se_out[ti] = effective_se(snr * std::norm(compound_gain(data, cascade)), t_p, cfg.frame.t_c);
    }
}

}  // namespace detail

/// PEB and NLoS effective SE over the pilot budget for each RIS size and
/// pilot policy, averaged over trials. Each trial draws its own prior and
/// pilot profiles; profiles are nested in T_p, so the FIM is accumulated slot
/// by slot. Communication uses a positional profile toward a position drawn
/// from the CRB Gaussian around the true position; with a prior the CRB
/// includes the prior information. Without any position information the data
/// profile is random.
inline std::vector<TradeoffPoint> run_tradeoff_sweep(const TradeoffConfig& cfg) {
    cfg.validate();
    const Wavelength wl = Wavelength::from_frequency(cfg.carrier_hz);
    const std::uint64_t root = cfg.frame.seed;
    const std::size_t n_tp = cfg.frame.t_p.size();
    const auto trials = std::size_t(cfg.frame.trials);
    std::vector<TradeoffPoint> points;

    for (std::size_t zi = 0; zi < cfg.ris_sizes.size(); ++zi) {
        const auto [nx, nz] = cfg.ris_sizes[zi];
        const ArraySpec ris = ArraySpec::upa(nx, nz, wl.lambda / 2, cfg.ris_position);
        const CVec cascade = near_field_response(ris, cfg.bs_position, wl)
                                 .cwiseProduct(near_field_response(ris, cfg.user_position, wl));
        for (PolicyKind policy : cfg.policies) {
            std::vector<double> peb(trials * n_tp), se(trials * n_tp);
            parallel_for(trials, cfg.threads, [&](std::size_t i) {
                detail::tradeoff_trial(cfg, ris, wl, cascade, policy,
                                       derive_seed(root, {5, zi, std::uint64_t(policy), i}), &peb[i * n_tp],
                                       &se[i * n_tp]);
            });
            for (std::size_t ti = 0; ti < n_tp; ++ti) {
                TradeoffPoint pt{cfg.frame.t_p[ti], 0.0, 0.0, policy, ris.size()};
                for (std::size_t i = 0; i < trials; ++i) {
                    pt.peb += peb[i * n_tp + ti];
                    pt.eff_se += se[i * n_tp + ti];
                }
                pt.peb /= double(trials);
                pt.eff_se /= double(trials);
                points.push_back(pt);
            }
        }
    }
    return points;
}

}  // namespace slac
