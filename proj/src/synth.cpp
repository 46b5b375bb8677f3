#include "cstwa/synth.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <vector>

#include "cstwa/features.hpp"
#include "cstwa/metrics.hpp"
#include "cstwa/rng.hpp"

namespace cstwa::data {

namespace {

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// Monotone bisection for the intercept c with weighted_mean(sigmoid(l + c)) = target.
double calibrate_intercept(std::span<const double> logits, std::span<const double> weights,
                           double target) {
    auto rate_at = [&](double c) {
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < logits.size(); ++i) {
            const double w = weights.empty() ? 1.0 : weights[i];
            num += w * sigmoid(logits[i] + c);
            den += w;
        }
        return num / den;
    };
    double lo = -30.0, hi = 30.0;
    if (!(rate_at(lo) <= target && target <= rate_at(hi)))
        throw ConfigError("synthetic generator: base rate unreachable by intercept calibration");
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (rate_at(mid) < target) lo = mid;
        else hi = mid;
    }
    return 0.5 * (lo + hi);
}

struct LatentSet {
    std::vector<double> click, conv;  // n * dim
    int dim = 0;
};

// Conversion latents reuse the click latents with weight `overlap` and an
// independent draw with weight sqrt(1-overlap^2), preserving the variance.
LatentSet draw_latents(std::int64_t n, int n_clusters, std::span<const int> cluster_of,
                       const SynthConfig& cfg, Rng& rng) {
    const int d = cfg.latent_dim;
    const double mix = cfg.latent_overlap;
    const double mix_ind = std::sqrt(std::max(0.0, 1.0 - mix * mix));
    std::vector<double> centers_click(static_cast<std::size_t>(n_clusters) * d);
    std::vector<double> centers_ind(static_cast<std::size_t>(n_clusters) * d);
    for (auto& x : centers_click) x = rng.normal() * cfg.cluster_spread;
    for (auto& x : centers_ind) x = rng.normal() * cfg.cluster_spread;

    LatentSet out;
    out.dim = d;
    out.click.resize(static_cast<std::size_t>(n) * d);
    out.conv.resize(static_cast<std::size_t>(n) * d);
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    for (std::int64_t e = 0; e < n; ++e) {
        const int c = cluster_of[static_cast<std::size_t>(e)];
        for (int k = 0; k < d; ++k) {
            const double noise_click = rng.normal() * cfg.entity_noise;
            const double noise_ind = rng.normal() * cfg.entity_noise;
            const double click = centers_click[static_cast<std::size_t>(c) * d + k] + noise_click;
            const double ind = centers_ind[static_cast<std::size_t>(c) * d + k] + noise_ind;
            out.click[static_cast<std::size_t>(e) * d + k] = click * inv_sqrt_d;
            out.conv[static_cast<std::size_t>(e) * d + k] = (mix * click + mix_ind * ind) * inv_sqrt_d;
        }
    }
    return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

void write_rows(const std::filesystem::path& csv_path, const std::filesystem::path& truth_path,
                std::span<const std::int64_t> users, std::span<const std::int64_t> items,
                std::span<const int> ctx, std::span<const std::uint8_t> y,
                std::span<const std::uint8_t> z, std::span<const double> p_click,
                std::span<const double> p_conv, std::span<const int> user_cluster,
                std::span<const int> item_cluster, std::size_t begin, std::size_t end) {
    std::ofstream csv(csv_path);
    std::ofstream truth(truth_path);
    if (!csv || !truth) throw DataError("cannot write synthetic dataset files");
    csv << "click,conversion,user_id,user_cluster,item_id,item_cluster,ctx_noise\n";
    truth << "p_click,p_conv_given_click\n";
    char buf[80];
    for (std::size_t i = begin; i < end; ++i) {
        const auto u = users[i];
        const auto it = items[i];
        csv << int(y[i]) << "," << int(z[i]) << ",u" << u << ",uc"
            << user_cluster[static_cast<std::size_t>(u)] << ",i" << it << ",ic"
            << item_cluster[static_cast<std::size_t>(it)] << ",c" << ctx[i] << "\n";
        std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", p_click[i], p_conv[i]);
        truth << buf;
    }
}

} // namespace

void SynthConfig::validate() const {
    if (n_users < 1 || n_items < 1) throw ConfigError("synthetic generator needs users and items");
    if (n_user_clusters < 1 || n_item_clusters < 1) throw ConfigError("cluster counts must be >= 1");
    if (latent_dim < 1) throw ConfigError("latent_dim must be >= 1");
    if (!(latent_overlap >= 0.0 && latent_overlap <= 1.0))
        throw ConfigError("latent_overlap must be in [0,1]");
    if (!(base_click_rate > 0.0 && base_click_rate < 1.0) ||
        !(base_conv_rate_given_click > 0.0 && base_conv_rate_given_click < 1.0))
        throw ConfigError("base rates must be in (0,1)");
    if (!(contradictory_fraction >= 0.0 && contradictory_fraction <= 1.0))
        throw ConfigError("contradictory_fraction must be in [0,1]");
    if (n_train < 1 || n_val < 1 || n_test < 1) throw ConfigError("split sizes must be >= 1");
    if (n_ctx_values < 1) throw ConfigError("n_ctx_values must be >= 1");
}

SynthStats gen_synthetic(const SynthConfig& cfg, const std::filesystem::path& out_dir) {
    cfg.validate();
    std::filesystem::create_directories(out_dir);
    Rng root(cfg.seed);

    // cluster assignments
    Rng cl_rng = root.child("clusters");
    std::vector<int> user_cluster(static_cast<std::size_t>(cfg.n_users));
    std::vector<int> item_cluster(static_cast<std::size_t>(cfg.n_items));
    for (auto& c : user_cluster) c = static_cast<int>(cl_rng.below(static_cast<std::uint64_t>(cfg.n_user_clusters)));
    for (auto& c : item_cluster) c = static_cast<int>(cl_rng.below(static_cast<std::uint64_t>(cfg.n_item_clusters)));

    // flagged (contradictory) item clusters
    const int n_flagged = static_cast<int>(
        std::llround(cfg.contradictory_fraction * static_cast<double>(cfg.n_item_clusters)));
    std::vector<char> flagged(static_cast<std::size_t>(cfg.n_item_clusters), 0);
    {
        Rng frng = root.child("flagged");
        std::vector<int> order(static_cast<std::size_t>(cfg.n_item_clusters));
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[static_cast<std::size_t>(frng.below(i))]);
        for (int i = 0; i < n_flagged; ++i) flagged[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = 1;
    }

    Rng urng = root.child("user_latents");
    Rng irng = root.child("item_latents");
    const LatentSet users_l = draw_latents(cfg.n_users, cfg.n_user_clusters, user_cluster, cfg, urng);
    const LatentSet items_l = draw_latents(cfg.n_items, cfg.n_item_clusters, item_cluster, cfg, irng);

    Rng prng = root.child("popularity");
    std::vector<double> popularity(static_cast<std::size_t>(cfg.n_items));
    for (auto& p : popularity) p = prng.normal() * cfg.popularity_scale;

    // impressions
    const std::size_t n_total = static_cast<std::size_t>(cfg.n_train + cfg.n_val + cfg.n_test);
    std::vector<std::int64_t> imp_user(n_total), imp_item(n_total);
    std::vector<int> imp_ctx(n_total);
    Rng imp_rng = root.child("impressions");
    for (std::size_t i = 0; i < n_total; ++i) {
        imp_user[i] = static_cast<std::int64_t>(imp_rng.below(static_cast<std::uint64_t>(cfg.n_users)));
        imp_item[i] = static_cast<std::int64_t>(imp_rng.below(static_cast<std::uint64_t>(cfg.n_items)));
        imp_ctx[i] = static_cast<int>(imp_rng.below(static_cast<std::uint64_t>(cfg.n_ctx_values)));
    }

    // raw logits (no intercept yet)
    const int d = cfg.latent_dim;
    std::vector<double> click_logit(n_total), conv_logit(n_total);
    for (std::size_t i = 0; i < n_total; ++i) {
        const auto u = static_cast<std::size_t>(imp_user[i]);
        const auto it = static_cast<std::size_t>(imp_item[i]);
        const std::span<const double> uc(users_l.click.data() + u * d, static_cast<std::size_t>(d));
        const std::span<const double> ic(items_l.click.data() + it * d, static_cast<std::size_t>(d));
        const std::span<const double> uv(users_l.conv.data() + u * d, static_cast<std::size_t>(d));
        const std::span<const double> iv(items_l.conv.data() + it * d, static_cast<std::size_t>(d));
        const bool flag = flagged[static_cast<std::size_t>(item_cluster[it])] != 0;
        click_logit[i] = cfg.interaction_scale * dot(uc, ic) + popularity[it] +
                         (flag ? cfg.contradiction_strength : 0.0);
        conv_logit[i] = cfg.interaction_scale * dot(uv, iv) - (flag ? cfg.contradiction_strength : 0.0);
    }

    SynthStats stats;
    stats.click_intercept = calibrate_intercept(click_logit, {}, cfg.base_click_rate);
    std::vector<double> p_click(n_total);
    for (std::size_t i = 0; i < n_total; ++i) p_click[i] = sigmoid(click_logit[i] + stats.click_intercept);
    stats.conv_intercept = calibrate_intercept(conv_logit, p_click, cfg.base_conv_rate_given_click);
    std::vector<double> p_conv(n_total);
    for (std::size_t i = 0; i < n_total; ++i) p_conv[i] = sigmoid(conv_logit[i] + stats.conv_intercept);

    // labels
    std::vector<std::uint8_t> y(n_total), z(n_total);
    Rng lrng = root.child("labels");
    std::size_t n_click = 0, n_conv = 0;
    for (std::size_t i = 0; i < n_total; ++i) {
        y[i] = lrng.next_double() < p_click[i] ? 1 : 0;
        z[i] = (y[i] == 1 && lrng.next_double() < p_conv[i]) ? 1 : 0;
        n_click += y[i];
        n_conv += z[i];
    }
    stats.click_rate = static_cast<double>(n_click) / static_cast<double>(n_total);
    stats.conv_rate_given_click = n_click ? static_cast<double>(n_conv) / static_cast<double>(n_click) : 0.0;
    stats.conv_rate_overall = static_cast<double>(n_conv) / static_cast<double>(n_total);

    // flagged-vs-rest ground truth aggregates and p correlation
    {
        double sf_c = 0, su_c = 0, sf_v = 0, su_v = 0;
        std::size_t nf = 0, nu = 0;
        double mc = 0, mv = 0;
        for (std::size_t i = 0; i < n_total; ++i) {
            const bool flag = flagged[static_cast<std::size_t>(item_cluster[static_cast<std::size_t>(imp_item[i])])] != 0;
            if (flag) { sf_c += p_click[i]; sf_v += p_conv[i]; ++nf; }
            else { su_c += p_click[i]; su_v += p_conv[i]; ++nu; }
            mc += p_click[i];
            mv += p_conv[i];
        }
        stats.mean_p_click_flagged = nf ? sf_c / static_cast<double>(nf) : 0.0;
        stats.mean_p_click_unflagged = nu ? su_c / static_cast<double>(nu) : 0.0;
        stats.mean_p_conv_flagged = nf ? sf_v / static_cast<double>(nf) : 0.0;
        stats.mean_p_conv_unflagged = nu ? su_v / static_cast<double>(nu) : 0.0;
        mc /= static_cast<double>(n_total);
        mv /= static_cast<double>(n_total);
        double cov = 0, vc = 0, vv = 0;
        for (std::size_t i = 0; i < n_total; ++i) {
            cov += (p_click[i] - mc) * (p_conv[i] - mv);
            vc += (p_click[i] - mc) * (p_click[i] - mc);
            vv += (p_conv[i] - mv) * (p_conv[i] - mv);
        }
        stats.p_click_p_conv_correlation = cov / std::sqrt(vc * vv);
    }

    // field specs + files
    std::vector<feat::FieldSpec> specs = {
        {"user_id", feat::Side::User, true},     {"user_cluster", feat::Side::User, false},
        {"item_id", feat::Side::Item, true},     {"item_cluster", feat::Side::Item, false},
        {"ctx_noise", feat::Side::Context, false}};
    feat::save_field_specs(specs, out_dir / "field_specs.txt");

    const auto nt = static_cast<std::size_t>(cfg.n_train);
    const auto nv = static_cast<std::size_t>(cfg.n_val);
    write_rows(out_dir / "train.csv", out_dir / "truth_train.csv", imp_user, imp_item, imp_ctx, y, z,
               p_click, p_conv, user_cluster, item_cluster, 0, nt);
    write_rows(out_dir / "val.csv", out_dir / "truth_val.csv", imp_user, imp_item, imp_ctx, y, z,
               p_click, p_conv, user_cluster, item_cluster, nt, nt + nv);
    write_rows(out_dir / "test.csv", out_dir / "truth_test.csv", imp_user, imp_item, imp_ctx, y, z,
               p_click, p_conv, user_cluster, item_cluster, nt + nv, n_total);

    std::ofstream st(out_dir / "synth_stats.txt");
    char buf[160];
    std::snprintf(buf, sizeof buf, "click_rate %.6f\nconv_rate_given_click %.6f\nconv_rate_overall %.6f\n",
                  stats.click_rate, stats.conv_rate_given_click, stats.conv_rate_overall);
    st << buf;
    std::snprintf(buf, sizeof buf, "p_click flagged/unflagged %.6f / %.6f\np_conv flagged/unflagged %.6f / %.6f\n",
                  stats.mean_p_click_flagged, stats.mean_p_click_unflagged, stats.mean_p_conv_flagged,
                  stats.mean_p_conv_unflagged);
    st << buf;
    std::snprintf(buf, sizeof buf, "p_click/p_conv correlation %.6f\n", stats.p_click_p_conv_correlation);
    st << buf;
    return stats;
}

GroundTruth load_ground_truth(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open ground truth file: " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != "p_click,p_conv_given_click")
        throw DataError("bad ground truth header in " + path.string());
    GroundTruth gt;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const std::size_t comma = line.find(',');
        if (comma == std::string::npos) throw DataError("bad ground truth row in " + path.string());
        gt.p_click.push_back(std::stod(line.substr(0, comma)));
        gt.p_conv_given_click.push_back(std::stod(line.substr(comma + 1)));
    }
    return gt;
}

double oracle_auc(std::span<const double> p, std::span<const std::uint8_t> labels) {
    return metrics::auc(p, labels);
}

} // namespace cstwa::data
