#pragma once

#include <optional>
#include <vector>

#include "slac/estimation/beamforming.hpp"

namespace slac {

/// One extracted propagation path. ULA angles are reported as spatial
/// frequencies u = <d, axis> (half-wavelength units, u in [-1, 1)).
struct PathEstimate {
    cplx gain;
    double ms_freq = 0.0;
    double bs_freq = 0.0;
    /// Present for paths through the RIS: cascaded spatial frequency.
    std::optional<double> ris_freq;
};

struct EstimationResult {
    CascadedChannel estimate;
    std::vector<PathEstimate> path_estimates;
    /// Filled by the caller when the truth is known.
    std::optional<double> nmse;
    Beamformers beamformers;
};

}  // namespace slac
