#pragma once

#include "resobs/linalg.hpp"

#include <optional>
#include <string>
#include <vector>

namespace resobs {

struct ObserverSample {
    std::optional<Vector> estimate;
    bool failed = false;
    int iterations = 0;
};

struct TraceSample {
    int k = 0;
    Vector x_true;
    Vector u;
    Vector y_clean;     ///< C x + D u
    Vector y_measured;  ///< y_clean + noise + attack
    Vector attack;
    double residue = 0.0;
    bool alarm = false;
    double theta_residual = 0.0;
    std::vector<ObserverSample> observers;
};

/// Time series of one closed-loop run.
struct EstimateTrace {
    std::vector<std::string> observer_names;
    std::vector<std::string> state_names;
    std::vector<TraceSample> samples;
    int attack_onset = -1;  ///< -1 when no attack was configured
    int warmup = 0;         ///< first sample at which every observer reports
};

}  // namespace resobs
