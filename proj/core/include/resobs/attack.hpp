#pragma once

#include "resobs/linalg.hpp"
#include "resobs/model.hpp"

#include <random>
#include <string>
#include <vector>

namespace resobs::attack {

enum class MagnitudeLaw { Constant, Ramp, Random };

MagnitudeLaw law_from_string(const std::string& name);
const char* to_string(MagnitudeLaw law);

/// False-data injection schedule on a fixed set of measurement channels.
struct AttackPlan {
    std::vector<int> support;  ///< attacked channel indices, sorted
    int onset = 200;
    MagnitudeLaw law = MagnitudeLaw::Ramp;
    Vector magnitude;          ///< full-scale injection per attacked channel (support order)
    int ramp_samples = 10;
    double random_low = 0.5;   ///< Random law draws uniformly in [random_low, 1] x magnitude
    bool stealth = true;
    double stealth_threshold = 0.05;
    double leak_weight = 100.0;  ///< penalty on range-space leakage outside the support

    void validate(int outputs) const;
    [[nodiscard]] double attacked_fraction(int outputs) const {
        return static_cast<double>(support.size()) / outputs;
    }
};

/// Normalized least-squares residue ||y - C x_ls - D u|| / max(||y||, floor).
struct ResidueEntry {
    double residue = 0.0;
    double threshold = 0.0;
    bool alarm = false;
};

inline constexpr double kResidueFloor = 1e-9;

class BadDataDetector {
public:
    BadDataDetector(const model::DiscreteLinearSystem& sys, double threshold);

    [[nodiscard]] ResidueEntry test(const Vector& y, const Vector& u) const;
    [[nodiscard]] double threshold() const { return threshold_; }

private:
    Matrix c_;
    Matrix d_;
    Eigen::ColPivHouseholderQR<Matrix> qr_;
    double threshold_;
};

ResidueEntry bdd_residue_test(const Vector& y, const Vector& u, const model::DiscreteLinearSystem& sys,
                              double threshold);

struct InjectionInfo {
    double scale = 1.0;       ///< fraction of the requested injection kept after stealth scaling
    bool active = false;
};

/// Multiplier of the magnitude at sample k (0 before onset).
double magnitude_profile(const AttackPlan& plan, int k);

/**
 * Injection vector e_k for the clean measurement y_clean. Zero before onset and
 * off the support. With `stealth` the injection follows C c restricted to the
 * support and is scaled down until the residue of y_clean + e_k stays below
 * 0.9 x stealth_threshold.
 */
Vector generate_fdia(const AttackPlan& plan, const model::DiscreteLinearSystem& sys, const Vector& y_clean,
                     const Vector& u, int k, std::mt19937_64& rng, InjectionInfo* info = nullptr);

/// Support of `count` channels drawn without replacement from `candidates`.
std::vector<int> choose_support(const std::vector<int>& candidates, int count, std::uint64_t seed);

}  // namespace resobs::attack
