#pragma once

// Shared fixtures for the model-level tests and the acceptance suite.

#include <string>
#include <vector>

#include "cstwa/model.hpp"

namespace cstwa::testsupport {

struct TinyWorld {
    feat::FieldLayout layout;
    feat::Vocabulary vocab;
    feat::Dataset train, val;
    sm::EntityMap users, items;
    sm::SparseGraph gu, gi;
    model::ModelConfig cfg;
};

// Four fields (user id+group, item id, context), tiny towers, graphs mined
// from a random table. Labels respect z <= y.
inline TinyWorld make_tiny_world(std::uint64_t seed, int n_users = 6, int n_items = 5,
                                 int n_train = 64, int n_val = 32) {
    TinyWorld w;
    w.layout = feat::make_layout({{"user_id", feat::Side::User, true},
                                  {"user_grp", feat::Side::User, false},
                                  {"item_id", feat::Side::Item, true},
                                  {"ctx", feat::Side::Context, false}});

    feat::RawRecords raw;
    raw.header = {"click", "conversion", "user_id", "user_grp", "item_id", "ctx"};
    Rng rng = Rng(seed).child("tiny_world");
    auto add_row = [&raw](std::vector<std::string> cells) {
        raw.cells.insert(raw.cells.end(), cells.begin(), cells.end());
        ++raw.n_rows;
    };
    const int total = n_train + n_val;
    for (int r = 0; r < total; ++r) {
        const auto u = rng.below(static_cast<std::uint64_t>(n_users));
        const auto i = rng.below(static_cast<std::uint64_t>(n_items));
        const int y = rng.next_double() < 0.5 ? 1 : 0;
        const int z = (y == 1 && rng.next_double() < 0.4) ? 1 : 0;
        add_row({std::to_string(y), std::to_string(z), "u" + std::to_string(u),
                 "g" + std::to_string(u % 3), "i" + std::to_string(i),
                 "c" + std::to_string(rng.below(4))});
    }
    const std::vector<int> cols = {2, 3, 4, 5};
    w.vocab = feat::build_vocab(raw, w.layout, cols, 1);
    feat::Dataset all;
    all.n_fields = 4;
    for (std::size_t r = 0; r < raw.n_rows; ++r) {
        std::string err;
        all.push(*feat::encode_sample(raw.row(r), w.vocab, w.layout, cols, 0, 1, &err));
    }
    w.train.n_fields = w.val.n_fields = 4;
    for (std::size_t r = 0; r < all.size(); ++r) {
        feat::Dataset& dst = r < static_cast<std::size_t>(n_train) ? w.train : w.val;
        const auto xs = all.row(r);
        dst.x.insert(dst.x.end(), xs.begin(), xs.end());
        dst.y.push_back(all.y[r]);
        dst.z.push_back(all.z[r]);
        dst.user_index.push_back(all.user_index[r]);
        dst.item_index.push_back(all.item_index[r]);
    }

    w.users = sm::build_entity_map(w.train, w.layout, w.vocab, feat::Side::User);
    w.items = sm::build_entity_map(w.train, w.layout, w.vocab, feat::Side::Item);

    Rng table_rng = Rng(seed).child("pre_table");
    const feat::EmbeddingTable pre = feat::EmbeddingTable::make("T_pre", 2, w.vocab, table_rng);
    w.gu = sm::normalize_graph(
        sm::topk_similarity_graph(sm::assemble_reps(pre, w.users, w.layout).values, 3));
    w.gi = sm::normalize_graph(
        sm::topk_similarity_graph(sm::assemble_reps(pre, w.items, w.layout).values, 3));

    w.cfg.enable_sm = w.cfg.enable_cp = w.cfg.enable_ce = true;
    w.cfg.d = 2;
    w.cfg.tower_dims = {6, 4};
    w.cfg.dropout = {0.1, 0.3};
    w.cfg.d_out = 4;
    w.cfg.lr = 0.01;
    w.cfg.batch = 16;
    w.cfg.epochs = 2;
    w.cfg.l2 = 1e-6;
    w.cfg.structure = {.k = 3, .layers = 1, .alpha = 0.3};
    w.cfg.tracker_window = 64;
    w.cfg.tracker_warmup = 16;
    w.cfg.seed = seed;
    return w;
}

struct DenseGrads {
    std::vector<double> v, t, ru, ri;
};

inline void densify(const feat::RowGrads& acc, std::size_t rows, std::vector<double>& out) {
    out.assign(rows * static_cast<std::size_t>(acc.dim), 0.0);
    for (std::size_t s = 0; s < acc.rows.size(); ++s) {
        const auto g = acc.grad_of(s);
        std::copy(g.begin(), g.end(),
                  out.begin() + static_cast<std::size_t>(acc.rows[s]) * static_cast<std::size_t>(acc.dim));
    }
}

// Full-loss closure with detached curse weights; eval-mode dropout keeps it
// deterministic.
inline double full_loss(model::CstwaParams& p, const model::ModelConfig& cfg,
                        const feat::Dataset& data, std::span<const std::size_t> rows,
                        std::span<const double> a, std::span<const double> b) {
    Rng rng(0);
    model::ForwardCache cache;
    model::forward_click(p, data, rows, nn::Mode::Eval, rng, cache);
    model::forward_conv(p, data, rows, nn::Mode::Eval, rng, cache);
    std::vector<std::uint8_t> ys(rows.size()), zs(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        ys[i] = data.y[rows[i]];
        zs[i] = data.z[rows[i]];
    }
    const auto ctr = obj::bce_loss(cache.yhat, ys);
    const auto ce = obj::weighted_cvr_loss(cache.zhat, zs, a, b);
    const auto co = obj::calib_loss(cache.zhat, cache.yhat);
    return obj::total_loss(ctr.value, ce.value, co.value, cfg.weights).total;
}

// Analytic gradients of full_loss into `grads` (same forward path, eval mode).
inline void full_loss_grads(model::CstwaParams& p, const model::ModelConfig& cfg,
                            const feat::Dataset& data, std::span<const std::size_t> rows,
                            std::span<const double> a, std::span<const double> b,
                            model::GradSet& grads) {
    Rng rng(0);
    model::ForwardCache cache;
    model::forward_click(p, data, rows, nn::Mode::Eval, rng, cache);
    model::forward_conv(p, data, rows, nn::Mode::Eval, rng, cache);
    std::vector<std::uint8_t> ys(rows.size()), zs(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        ys[i] = data.y[rows[i]];
        zs[i] = data.z[rows[i]];
    }
    const auto ctr = obj::bce_loss(cache.yhat, ys);
    const auto ce = obj::weighted_cvr_loss(cache.zhat, zs, a, b);
    const auto co = obj::calib_loss(cache.zhat, cache.yhat);
    std::vector<double> dyhat(rows.size()), dzhat(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        dyhat[i] = cfg.weights.w1 * ctr.dpred[i] + cfg.weights.w3 * co.dy[i];
        dzhat[i] = cfg.weights.w2 * ce.dpred[i] + cfg.weights.w3 * co.dz[i];
    }
    grads.reset(p);
    Matrix dh_t;
    model::backward_click_head(p, cache, dyhat, grads, dh_t);
    model::backward_conv(p, data, cache, dzhat, cfg.stop_grad_click_gate, grads, dh_t);
    model::backward_click_hidden(p, data, cache, dh_t, grads);
}

// End-to-end finite-difference check over every parameter group. Returns the
// max relative error. The step balances truncation against cancellation for
// gradients down to ~1e-7.
inline double whole_model_grad_check(model::CstwaParams& p, const model::ModelConfig& cfg,
                                     const feat::Dataset& data, std::span<const std::size_t> rows,
                                     std::span<const double> a, std::span<const double> b,
                                     double eps = 1e-5) {
    model::GradSet grads;
    full_loss_grads(p, cfg, data, rows, a, b, grads);

    DenseGrads dense;
    densify(grads.v_rows, static_cast<std::size_t>(p.V.rows), dense.v);
    densify(grads.t_rows, static_cast<std::size_t>(p.T.rows), dense.t);
    if (p.enable_sm) {
        densify(grads.ru_rows, static_cast<std::size_t>(p.ru.n()), dense.ru);
        densify(grads.ri_rows, static_cast<std::size_t>(p.ri.n()), dense.ri);
    }

    std::vector<nn::ParamView> views;
    auto add_mlp = [&views](const char* name, nn::Mlp& net, nn::MlpGrads& g) {
        for (std::size_t l = 0; l < net.layers.size(); ++l) {
            views.push_back({std::string(name) + "/w" + std::to_string(l), net.layers[l].w.v, g.gw[l].v});
            views.push_back({std::string(name) + "/b" + std::to_string(l), net.layers[l].b, g.gb[l]});
        }
    };
    add_mlp("click_tower", p.click_tower, grads.click_tower);
    add_mlp("conv_tower", p.conv_tower, grads.conv_tower);
    add_mlp("info", p.info_layer, grads.info_layer);
    add_mlp("click_head", p.click_head, grads.click_head);
    add_mlp("conv_head", p.conv_head, grads.conv_head);
    views.push_back({"V", p.V.values, dense.v});
    views.push_back({"T", p.T.values, dense.t});
    if (p.enable_sm) {
        views.push_back({"RU", p.ru.values.v, dense.ru});
        views.push_back({"RI", p.ri.values.v, dense.ri});
    }

    auto loss = [&]() { return full_loss(p, cfg, data, rows, a, b); };
    return nn::grad_check(loss, views, eps);
}

} // namespace cstwa::testsupport
