#include "cstwa/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <iomanip>

namespace cstwa::metrics {

double auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    if (scores.size() != labels.size()) throw ShapeError("auc: scores/labels length mismatch");
    const std::size_t n = scores.size();
    std::size_t n_pos = 0;
    for (const auto l : labels) {
        if (l > 1) throw DataError("auc: label outside {0,1}");
        n_pos += l;
    }
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0)
        throw NumericError("auc undefined: labels are single-class (" + std::to_string(n_pos) +
                           " positives of " + std::to_string(n) + ")");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&scores](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // average ranks over tie groups; ranks are 1-based
    double pos_rank_sum = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t t = i; t <= j; ++t)
            if (labels[order[t]] == 1) pos_rank_sum += avg_rank;
        i = j + 1;
    }
    const double p = static_cast<double>(n_pos);
    return (pos_rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(n_neg));
}

EvalReport aggregate_seeds(std::string model, std::uint64_t config_hash,
                           std::vector<SeedMetrics> per_seed) {
    if (per_seed.empty()) throw ConfigError("aggregate_seeds: no per-seed metrics");
    EvalReport r;
    r.model = std::move(model);
    r.config_hash = config_hash;
    r.per_seed = std::move(per_seed);
    auto summarize = [&r](auto pick) {
        MetricSummary s;
        double sum = 0.0;
        for (const auto& m : r.per_seed) sum += pick(m);
        s.mean = sum / static_cast<double>(r.per_seed.size());
        if (r.per_seed.size() >= 2) {
            double sq = 0.0;
            for (const auto& m : r.per_seed) {
                const double d = pick(m) - s.mean;
                sq += d * d;
            }
            s.std = std::sqrt(sq / static_cast<double>(r.per_seed.size() - 1));
        }
        return s;
    };
    r.click = summarize([](const SeedMetrics& m) { return m.click_auc; });
    r.purchase = summarize([](const SeedMetrics& m) { return m.purchase_auc; });
    return r;
}

Gains compare(const EvalReport& report, const EvalReport& baseline) {
    return {report.click.mean - baseline.click.mean, report.purchase.mean - baseline.purchase.mean};
}

namespace {

std::string fmt_pm(const MetricSummary& s) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4) << s.mean;
    if (s.std) os << "+-" << std::fixed << std::setprecision(4) << *s.std;
    return os.str();
}

std::string fmt_gain(double g) {
    std::ostringstream os;
    os << (g >= 0 ? "+" : "") << std::fixed << std::setprecision(4) << g;
    return os.str();
}

} // namespace

std::string format_table(std::span<const EvalReport> reports, const EvalReport& baseline) {
    std::ostringstream os;
    os << std::left << std::setw(12) << "model" << std::setw(18) << "click_auc" << std::setw(10)
       << "gain" << std::setw(18) << "purchase_auc" << std::setw(10) << "gain" << "\n";
    for (const auto& r : reports) {
        const Gains g = compare(r, baseline);
        const bool is_base = &r == &baseline || r.model == baseline.model;
        os << std::left << std::setw(12) << r.model << std::setw(18) << fmt_pm(r.click)
           << std::setw(10) << (is_base ? "-" : fmt_gain(g.click)) << std::setw(18)
           << fmt_pm(r.purchase) << std::setw(10) << (is_base ? "-" : fmt_gain(g.purchase)) << "\n";
    }
    return os.str();
}

std::string format_csv(std::span<const EvalReport> reports, const EvalReport& baseline) {
    std::ostringstream os;
    os << "model,click_auc_mean,click_auc_std,click_gain,purchase_auc_mean,purchase_auc_std,purchase_gain,seeds\n";
    os << std::setprecision(10);
    for (const auto& r : reports) {
        const Gains g = compare(r, baseline);
        const bool is_base = r.model == baseline.model;
        os << r.model << "," << r.click.mean << "," << (r.click.std ? std::to_string(*r.click.std) : "")
           << "," << (is_base ? 0.0 : g.click) << "," << r.purchase.mean << ","
           << (r.purchase.std ? std::to_string(*r.purchase.std) : "") << ","
           << (is_base ? 0.0 : g.purchase) << "," << r.per_seed.size() << "\n";
    }
    return os.str();
}

} // namespace cstwa::metrics
