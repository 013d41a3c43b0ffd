#pragma once

#include <Eigen/QR>

#include "slac/estimation/result.hpp"

namespace slac {

/// Least-squares cascade estimation; the design's factorisation is computed
/// once and reused across noise realisations.
class LeastSquaresEstimator {
public:
    explicit LeastSquaresEstimator(const TrainingDesign& design)
        : op_(design), qr_(op_.dense()) {
        if (qr_.rank() < op_.cols())
            throw RankDeficient("measurement matrix has column rank " + std::to_string(qr_.rank()) +
                                " < " + std::to_string(op_.cols()) + " unknowns; increase T_p");
    }

    const MeasurementOperator& op() const noexcept { return op_; }

    CVec solve(const CVec& y) const { return qr_.solve(y); }

    EstimationResult estimate(const std::vector<CVec>& observations) const {
        const auto& d = op_.design();
        EstimationResult r;
        r.estimate = CascadedChannel::from_stacked(solve(stack_observations(observations)), d.n_ms,
                                                   d.n_bs, d.n_ris, d.with_direct);
        r.beamformers = optimize_beamformers(r.estimate);
        return r;
    }

private:
    MeasurementOperator op_;
    Eigen::ColPivHouseholderQR<CMat> qr_;
};

inline EstimationResult ls_estimate(const std::vector<CVec>& observations, const TrainingDesign& design) {
    return LeastSquaresEstimator(design).estimate(observations);
}

}  // namespace slac
