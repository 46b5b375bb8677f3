#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cstwa/errors.hpp"

namespace cstwa::metrics {

// Mann-Whitney AUC via sort-and-rank; ties contribute 0.5 per pair. Throws
// NumericError when labels are single-class (the metric is undefined).
double auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

struct SeedMetrics {
    std::uint64_t seed = 0;
    double click_auc = 0.0;
    double purchase_auc = 0.0;
};

struct MetricSummary {
    double mean = 0.0;
    std::optional<double> std;  // sample std; absent with < 2 seeds
};

struct EvalReport {
    std::string model;
    std::uint64_t config_hash = 0;
    std::vector<SeedMetrics> per_seed;
    MetricSummary click, purchase;
};

EvalReport aggregate_seeds(std::string model, std::uint64_t config_hash,
                           std::vector<SeedMetrics> per_seed);

struct Gains {
    double click = 0.0;
    double purchase = 0.0;
};

Gains compare(const EvalReport& report, const EvalReport& baseline);

// Aligned plain-text table: model, click AUC (+-std), gain, purchase AUC
// (+-std), gain. Gains are relative to `baseline`.
std::string format_table(std::span<const EvalReport> reports, const EvalReport& baseline);
std::string format_csv(std::span<const EvalReport> reports, const EvalReport& baseline);

} // namespace cstwa::metrics
