#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "cstwa/errors.hpp"

namespace cstwa::data {

// Synthetic impression -> click -> conversion funnel. Users and items live in
// cluster-structured latent spaces; a flagged fraction of item clusters gets a
// click-logit boost and a conversion-logit penalty of `contradiction_strength`
// each, so click appeal and conversion quality disagree there. The context
// field is pure noise.
struct SynthConfig {
    std::int64_t n_users = 2000;
    std::int64_t n_items = 1000;
    int n_user_clusters = 20;
    int n_item_clusters = 20;
    int latent_dim = 8;
    double latent_overlap = 0.4;  // 1 = conversion latents identical to click latents
    double cluster_spread = 1.0;
    double entity_noise = 0.35;
    double interaction_scale = 3.0;
    double popularity_scale = 1.2;
    int n_ctx_values = 50;
    double base_click_rate = 0.05;
    double base_conv_rate_given_click = 0.06;
    double contradictory_fraction = 0.25;
    double contradiction_strength = 2.0;
    std::int64_t n_train = 200000;
    std::int64_t n_val = 20000;
    std::int64_t n_test = 50000;
    std::uint64_t seed = 1;

    void validate() const;
};

struct SynthStats {
    double click_rate = 0.0;
    double conv_rate_given_click = 0.0;
    double conv_rate_overall = 0.0;
    double click_intercept = 0.0;
    double conv_intercept = 0.0;
    double mean_p_click_flagged = 0.0, mean_p_click_unflagged = 0.0;
    double mean_p_conv_flagged = 0.0, mean_p_conv_unflagged = 0.0;
    double p_click_p_conv_correlation = 0.0;
};

// Writes field_specs.txt, {train,val,test}.csv and truth_{train,val,test}.csv
// (p_click,p_conv_given_click per row) into out_dir. Byte-identical for
// identical configs.
SynthStats gen_synthetic(const SynthConfig& cfg, const std::filesystem::path& out_dir);

struct GroundTruth {
    std::vector<double> p_click;
    std::vector<double> p_conv_given_click;
};
GroundTruth load_ground_truth(const std::filesystem::path& path);

// AUC of the generating probabilities against realized labels: the score no
// model should beat systematically.
double oracle_auc(std::span<const double> p, std::span<const std::uint8_t> labels);

} // namespace cstwa::data
