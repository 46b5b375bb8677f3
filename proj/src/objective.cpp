#include "cstwa/objective.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace cstwa::obj {

void LossWeights::validate() const {
    if (w1 < 0 || w2 < 0 || w3 < 0) throw ConfigError("loss weights must be nonnegative");
}

void CurseConfig::validate() const {
    if (gamma < 0) throw ConfigError("curse gamma must be >= 0");
    if (cap < 1) throw ConfigError("curse cap must be >= 1");
}

ThresholdTracker::ThresholdTracker(int capacity, int warmup_min, int pos_pct, int neg_pct)
    : buf_(static_cast<std::size_t>(capacity)), warmup_min_(warmup_min), pos_pct_(pos_pct),
      neg_pct_(neg_pct) {
    if (capacity < 1) throw ConfigError("tracker capacity must be >= 1");
    if (warmup_min < 1) throw ConfigError("tracker warmup must be >= 1");
    if (pos_pct < 1 || pos_pct > 100 || neg_pct < 1 || neg_pct > 100)
        throw ConfigError("tracker percentiles must be in [1,100]");
}

void ThresholdTracker::push(std::span<const double> values) {
    for (const double v : values) {
        buf_[static_cast<std::size_t>(cursor_)] = v;
        cursor_ = (cursor_ + 1) % capacity();
        if (fill_ < capacity()) ++fill_;
    }
}

double nearest_rank_percentile(std::span<const double> values, int pct) {
    std::vector<double> sorted(values.begin(), values.end());
    const auto n = static_cast<double>(sorted.size());
    auto rank = static_cast<std::size_t>(std::ceil(static_cast<double>(pct) / 100.0 * n));
    if (rank < 1) rank = 1;
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(rank - 1), sorted.end());
    return sorted[rank - 1];
}

ThresholdTracker::Thresholds ThresholdTracker::thresholds() const {
    Thresholds t;
    if (fill_ < warmup_min_) return t;
    const std::span<const double> window(buf_.data(), static_cast<std::size_t>(fill_));
    t.pos = nearest_rank_percentile(window, pos_pct_);
    t.neg = nearest_rank_percentile(window, neg_pct_);
    t.active = true;
    return t;
}

LossGrad bce_loss(std::span<const double> p, std::span<const std::uint8_t> labels) {
    const std::vector<double> ones(p.size(), 1.0);
    return weighted_cvr_loss(p, labels, ones, ones);
}

void curse_weights(std::span<const double> yhat, double pos, double neg, const CurseConfig& cfg,
                   bool active, std::vector<double>& a, std::vector<double>& b) {
    cfg.validate();
    a.assign(yhat.size(), 1.0);
    b.assign(yhat.size(), 1.0);
    if (!cfg.enabled || !active) return;
    if (!(pos > 0.0) || !(neg > 0.0)) throw ConfigError("curse thresholds must be positive");
    for (std::size_t i = 0; i < yhat.size(); ++i) {
        const double y = clamp_prob(yhat[i]);
        a[i] = std::min(cfg.cap, std::max(1.0, std::pow(neg / y, cfg.gamma)));
        b[i] = std::min(cfg.cap, std::max(1.0, std::pow(y / pos, cfg.gamma)));
    }
}

LossGrad weighted_cvr_loss(std::span<const double> zhat, std::span<const std::uint8_t> labels,
                           std::span<const double> a, std::span<const double> b) {
    if (zhat.size() != labels.size() || zhat.size() != a.size() || zhat.size() != b.size())
        throw ShapeError("weighted_cvr_loss: mismatched lengths");
    if (zhat.empty()) return {};
    const auto n = static_cast<double>(zhat.size());
    LossGrad out;
    out.dpred.assign(zhat.size(), 0.0);
    double sum = 0.0;
    for (std::size_t i = 0; i < zhat.size(); ++i) {
        if (labels[i] > 1) throw DataError("label outside {0,1} at position " + std::to_string(i));
        const double p = clamp_prob(zhat[i]);
        if (labels[i] == 1) {
            sum += -a[i] * std::log(p);
            out.dpred[i] = -a[i] / p / n;
        } else {
            sum += -b[i] * std::log(1.0 - p);
            out.dpred[i] = b[i] / (1.0 - p) / n;
        }
    }
    out.value = sum / n;
    return out;
}

CalibGrad calib_loss(std::span<const double> zhat, std::span<const double> yhat) {
    if (zhat.size() != yhat.size()) throw ShapeError("calib_loss: mismatched lengths");
    if (zhat.empty()) return {};
    const auto n = static_cast<double>(zhat.size());
    CalibGrad out;
    out.dz.assign(zhat.size(), 0.0);
    out.dy.assign(yhat.size(), 0.0);
    double sum = 0.0;
    for (std::size_t i = 0; i < zhat.size(); ++i) {
        const double gap = zhat[i] - yhat[i];
        if (gap > 0.0) {
            sum += gap;
            out.dz[i] = 1.0 / n;
            out.dy[i] = -1.0 / n;
        }
    }
    out.value = sum / n;
    return out;
}

LossReport total_loss(double l_ctr, double l_ce, double l_co, const LossWeights& w) {
    w.validate();
    LossReport r;
    r.l_ctr = l_ctr;
    r.l_ce = l_ce;
    r.l_co = l_co;
    r.total = w.w1 * l_ctr + w.w2 * l_ce + w.w3 * l_co;
    return r;
}

} // namespace cstwa::obj
