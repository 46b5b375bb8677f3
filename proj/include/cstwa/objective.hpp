#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cstwa/errors.hpp"

namespace cstwa::obj {

// Predictions are clamped to [kProbEps, 1-kProbEps] before any log or ratio.
inline constexpr double kProbEps = 1e-7;

inline double clamp_prob(double p) {
    if (p < kProbEps) return kProbEps;
    if (p > 1.0 - kProbEps) return 1.0 - kProbEps;
    return p;
}

struct LossWeights {
    double w1 = 1.0, w2 = 1.0, w3 = 0.6;
    void validate() const;
};

struct CurseConfig {
    double gamma = 3.0;
    double cap = 4.0;
    bool enabled = true;
    void validate() const;
};

struct LossReport {
    double l_ctr = 0.0, l_ce = 0.0, l_co = 0.0, total = 0.0;
    double mean_a = 1.0, mean_b = 1.0;
    double pos = 0.0, neg = 0.0;
};

// Ring buffer over the most recent CTR predictions; supplies nearest-rank
// percentile thresholds. Weighting stays disabled until warmup_min values
// have been seen.
class ThresholdTracker {
public:
    explicit ThresholdTracker(int capacity = 10000, int warmup_min = 1000, int pos_pct = 99,
                              int neg_pct = 10);

    void push(std::span<const double> values);

    struct Thresholds {
        double pos = 0.0, neg = 0.0;
        bool active = false;
    };
    Thresholds thresholds() const;

    int fill() const { return fill_; }
    int capacity() const { return static_cast<int>(buf_.size()); }

private:
    std::vector<double> buf_;
    int cursor_ = 0;
    int fill_ = 0;
    int warmup_min_;
    int pos_pct_, neg_pct_;
};

// Value at 1-based index ceil(pct/100 * n) of the ascending sort.
double nearest_rank_percentile(std::span<const double> values, int pct);

struct LossGrad {
    double value = 0.0;
    std::vector<double> dpred;
};

// Mean binary cross entropy; shares the clamping path with the weighted loss.
LossGrad bce_loss(std::span<const double> p, std::span<const std::uint8_t> labels);

// A_i = min(cap, max(1, (neg/yhat_i)^gamma)); B_i = min(cap, max(1, (yhat_i/pos)^gamma)).
// Unit weights when disabled or the tracker is inactive.
void curse_weights(std::span<const double> yhat, double pos, double neg, const CurseConfig& cfg,
                   bool active, std::vector<double>& a, std::vector<double>& b);

// Mean of per-sample weighted BCE; A and B are constants for differentiation.
LossGrad weighted_cvr_loss(std::span<const double> zhat, std::span<const std::uint8_t> labels,
                           std::span<const double> a, std::span<const double> b);

struct CalibGrad {
    double value = 0.0;
    std::vector<double> dz, dy;
};

// Mean hinge penalty max(zhat - yhat, 0); zero gradient on the boundary.
CalibGrad calib_loss(std::span<const double> zhat, std::span<const double> yhat);

LossReport total_loss(double l_ctr, double l_ce, double l_co, const LossWeights& w);

} // namespace cstwa::obj
