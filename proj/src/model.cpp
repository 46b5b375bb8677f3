#include "cstwa/model.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>

#include "cstwa/metrics.hpp"

namespace cstwa::model {

namespace {

Matrix column(std::span<const double> values) {
    Matrix m(static_cast<Index>(values.size()), 1);
    std::copy(values.begin(), values.end(), m.v.begin());
    return m;
}

std::vector<double> flatten(const Matrix& m) { return m.v; }

void write_matrix(std::ofstream& out, const Matrix& m) {
    out.write(reinterpret_cast<const char*>(&m.rows), 8);
    out.write(reinterpret_cast<const char*>(&m.cols), 8);
    out.write(reinterpret_cast<const char*>(m.v.data()),
              static_cast<std::streamsize>(m.v.size() * sizeof(double)));
}

Matrix read_matrix(std::ifstream& in) {
    Matrix m;
    in.read(reinterpret_cast<char*>(&m.rows), 8);
    in.read(reinterpret_cast<char*>(&m.cols), 8);
    m.v.resize(static_cast<std::size_t>(m.rows * m.cols));
    in.read(reinterpret_cast<char*>(m.v.data()),
            static_cast<std::streamsize>(m.v.size() * sizeof(double)));
    return m;
}

void write_string(std::ofstream& out, const std::string& s) {
    const std::int64_t n = static_cast<std::int64_t>(s.size());
    out.write(reinterpret_cast<const char*>(&n), 8);
    out.write(s.data(), n);
}

std::string read_string(std::ifstream& in) {
    std::int64_t n = 0;
    in.read(reinterpret_cast<char*>(&n), 8);
    std::string s(static_cast<std::size_t>(n), '\0');
    in.read(s.data(), n);
    return s;
}

void write_mlp(std::ofstream& out, const nn::Mlp& net) {
    const std::int64_t layers = static_cast<std::int64_t>(net.layers.size());
    out.write(reinterpret_cast<const char*>(&layers), 8);
    for (const auto& p : net.layers) {
        write_matrix(out, p.w);
        const std::int64_t bn = static_cast<std::int64_t>(p.b.size());
        out.write(reinterpret_cast<const char*>(&bn), 8);
        out.write(reinterpret_cast<const char*>(p.b.data()),
                  static_cast<std::streamsize>(p.b.size() * sizeof(double)));
    }
}

void read_mlp(std::ifstream& in, nn::Mlp& net) {
    std::int64_t layers = 0;
    in.read(reinterpret_cast<char*>(&layers), 8);
    if (layers != static_cast<std::int64_t>(net.layers.size()))
        throw DataError("checkpoint layer count does not match the configured network");
    for (auto& p : net.layers) {
        const Matrix w = read_matrix(in);
        require_same_shape(w, p.w, "checkpoint mlp weights");
        p.w = w;
        std::int64_t bn = 0;
        in.read(reinterpret_cast<char*>(&bn), 8);
        if (bn != static_cast<std::int64_t>(p.b.size())) throw DataError("checkpoint bias length mismatch");
        in.read(reinterpret_cast<char*>(p.b.data()),
                static_cast<std::streamsize>(p.b.size() * sizeof(double)));
    }
}

} // namespace

void ModelConfig::validate() const {
    if (d < 1) throw ConfigError("embedding dim must be >= 1");
    if (tower_dims.empty()) throw ConfigError("tower_dims must be non-empty");
    if (tower_dims.back() != d_out)
        throw ConfigError("tower_dims last element must equal d_out");
    if (dropout.size() != tower_dims.size())
        throw ConfigError("dropout list length must equal tower depth");
    if (!(lr > 0.0)) throw ConfigError("lr must be positive");
    if (batch < 1) throw ConfigError("batch must be >= 1");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (l2 < 0.0) throw ConfigError("l2 must be >= 0");
    structure.validate();
    curse.validate();
    weights.validate();
    if (tracker_window < 1 || tracker_warmup < 1)
        throw ConfigError("tracker window and warmup must be >= 1");
}

CstwaParams build_params(const ModelConfig& cfg, const feat::FieldLayout& layout,
                         const feat::Vocabulary& vocab, const sm::EntityMap* users,
                         const sm::EntityMap* items, Rng& rng) {
    cfg.validate();
    CstwaParams p;
    p.layout = layout;
    p.enable_sm = cfg.enable_sm;
    p.enable_cp = cfg.enable_cp;
    p.enable_ce = cfg.enable_ce;
    p.baseline_mlp = cfg.baseline_mlp;
    p.d = cfg.d;

    p.V = feat::EmbeddingTable::make("V", cfg.d, vocab, rng);
    p.T = feat::EmbeddingTable::make("T", cfg.d, vocab, rng);

    const Index d_in = p.input_dim();
    Rng init = rng.child("mlp_init");
    p.click_tower = nn::Mlp::make(nn::MlpSpec::tower(d_in, cfg.tower_dims, cfg.dropout), init);
    p.conv_tower = nn::Mlp::make(nn::MlpSpec::tower(d_in, cfg.tower_dims, cfg.dropout), init);
    p.info_layer = nn::Mlp::make(nn::MlpSpec::head(cfg.d_out, d_in, true), init);
    p.click_head = nn::Mlp::make(nn::MlpSpec::head(cfg.d_out, 1, true), init);
    p.conv_head = nn::Mlp::make(nn::MlpSpec::head(cfg.d_out, 1, true), init);

    if (cfg.enable_sm) {
        if (!users || !items)
            throw ConfigError("structure-enabled model requires user and item entity maps");
        p.ru = sm::assemble_reps(p.V, *users, layout);
        p.ri = sm::assemble_reps(p.V, *items, layout);
        p.ru.init_optimizer_state();
        p.ri.init_optimizer_state();
    }
    return p;
}

void forward_click(const CstwaParams& p, const feat::Dataset& data,
                   std::span<const std::size_t> rows, nn::Mode mode, Rng& rng, ForwardCache& cache) {
    cache.rows.assign(rows.begin(), rows.end());
    cache.e_t = feat::lookup_concat(p.T, data, rows, p.layout, true, true, true);
    cache.h_t = nn::mlp_forward(p.click_tower, cache.e_t, mode, rng, &cache.click_tower_c);
    const Matrix out = nn::mlp_forward(p.click_head, cache.h_t, mode, rng, &cache.click_head_c);
    cache.yhat = flatten(out);
}

void forward_conv(const CstwaParams& p, const feat::Dataset& data,
                  std::span<const std::size_t> rows, nn::Mode mode, Rng& rng, ForwardCache& cache) {
    cache.rows.assign(rows.begin(), rows.end());
    if (p.enable_sm) {
        const auto d_user = static_cast<Index>(p.layout.l_user) * p.d;
        const auto d_item = static_cast<Index>(p.layout.l_item) * p.d;
        const Matrix ctx = feat::lookup_concat(p.V, data, rows, p.layout, false, false, true);
        cache.e_v = Matrix(static_cast<Index>(rows.size()), p.input_dim());
        for (std::size_t b = 0; b < rows.size(); ++b) {
            double* dst = cache.e_v.row(static_cast<Index>(b));
            const auto u = data.user_index[rows[b]];
            const auto it = data.item_index[rows[b]];
            std::copy_n(p.ru.values.row(u), d_user, dst);
            std::copy_n(p.ri.values.row(it), d_item, dst + d_user);
            std::copy_n(ctx.row(static_cast<Index>(b)), ctx.cols, dst + d_user + d_item);
        }
    } else {
        cache.e_v = feat::lookup_concat(p.V, data, rows, p.layout, true, true, true);
    }

    if (p.enable_cp) {
        if (cache.h_t.rows != static_cast<Index>(rows.size()))
            throw ShapeError("forward_conv: gate requires the click pass on the same batch");
        cache.gate = nn::mlp_forward(p.info_layer, cache.h_t, mode, rng, &cache.info_c);
        cache.e_v_hat = Matrix(cache.e_v.rows, cache.e_v.cols);
        for (std::size_t i = 0; i < cache.e_v.size(); ++i)
            cache.e_v_hat.v[i] = cache.e_v.v[i] * (1.0 + 2.0 * cache.gate.v[i]);
    } else {
        cache.gate = Matrix();
        cache.e_v_hat = cache.e_v;
    }

    const Matrix h_v = nn::mlp_forward(p.conv_tower, cache.e_v_hat, mode, rng, &cache.conv_tower_c);
    const Matrix out = nn::mlp_forward(p.conv_head, h_v, mode, rng, &cache.conv_head_c);
    cache.zhat = flatten(out);
}

void GradSet::reset(const CstwaParams& p) {
    click_tower.init_like(p.click_tower);
    conv_tower.init_like(p.conv_tower);
    info_layer.init_like(p.info_layer);
    click_head.init_like(p.click_head);
    conv_head.init_like(p.conv_head);
    v_rows.reset(p.V.dim);
    t_rows.reset(p.T.dim);
    if (p.enable_sm) {
        ru_rows.reset(static_cast<int>(p.ru.dim()));
        ri_rows.reset(static_cast<int>(p.ri.dim()));
    }
}

void backward_click_head(const CstwaParams& p, const ForwardCache& cache,
                         std::span<const double> dyhat, GradSet& grads, Matrix& dh_t) {
    const Matrix dy = column(dyhat);
    const Matrix dh = nn::mlp_backward(p.click_head, cache.click_head_c, dy, grads.click_head);
    if (dh_t.rows == 0) dh_t = Matrix(dh.rows, dh.cols);
    for (std::size_t i = 0; i < dh.size(); ++i) dh_t.v[i] += dh.v[i];
}

void backward_conv(const CstwaParams& p, const feat::Dataset& data, const ForwardCache& cache,
                   std::span<const double> dzhat, bool stop_grad_click_gate, GradSet& grads,
                   Matrix& dh_t) {
    const Matrix dz = column(dzhat);
    const Matrix dh_v = nn::mlp_backward(p.conv_head, cache.conv_head_c, dz, grads.conv_head);
    Matrix de_v_hat = nn::mlp_backward(p.conv_tower, cache.conv_tower_c, dh_v, grads.conv_tower);

    Matrix de_v;
    if (p.enable_cp) {
        de_v = Matrix(de_v_hat.rows, de_v_hat.cols);
        Matrix dgate(de_v_hat.rows, de_v_hat.cols);
        for (std::size_t i = 0; i < de_v_hat.size(); ++i) {
            de_v.v[i] = de_v_hat.v[i] * (1.0 + 2.0 * cache.gate.v[i]);
            dgate.v[i] = 2.0 * de_v_hat.v[i] * cache.e_v.v[i];
        }
        const Matrix dh_from_gate = nn::mlp_backward(p.info_layer, cache.info_c, dgate, grads.info_layer);
        if (!stop_grad_click_gate) {
            if (dh_t.rows == 0) dh_t = Matrix(dh_from_gate.rows, dh_from_gate.cols);
            for (std::size_t i = 0; i < dh_from_gate.size(); ++i) dh_t.v[i] += dh_from_gate.v[i];
        }
    } else {
        de_v = std::move(de_v_hat);
    }

    if (p.enable_sm) {
        const auto d_user = static_cast<Index>(p.layout.l_user) * p.d;
        const auto d_item = static_cast<Index>(p.layout.l_item) * p.d;
        const auto d_ctx = static_cast<Index>(p.layout.l_ctx) * p.d;
        Matrix de_ctx(de_v.rows, d_ctx);
        for (Index b = 0; b < de_v.rows; ++b) {
            const double* src = de_v.row(b);
            const std::size_t row = cache.rows[static_cast<std::size_t>(b)];
            grads.ru_rows.add(data.user_index[row], {src, static_cast<std::size_t>(d_user)});
            grads.ri_rows.add(data.item_index[row], {src + d_user, static_cast<std::size_t>(d_item)});
            std::copy_n(src + d_user + d_item, d_ctx, de_ctx.row(b));
        }
        if (d_ctx > 0)
            feat::accumulate_lookup_grads(p.V, data, cache.rows, p.layout, false, false, true, de_ctx,
                                          grads.v_rows);
    } else {
        feat::accumulate_lookup_grads(p.V, data, cache.rows, p.layout, true, true, true, de_v,
                                      grads.v_rows);
    }
}

void backward_click_hidden(const CstwaParams& p, const feat::Dataset& data,
                           const ForwardCache& cache, const Matrix& dh_t, GradSet& grads) {
    const Matrix de_t = nn::mlp_backward(p.click_tower, cache.click_tower_c, dh_t, grads.click_tower);
    feat::accumulate_lookup_grads(p.T, data, cache.rows, p.layout, true, true, true, de_t, grads.t_rows);
}

void apply_grads(CstwaParams& p, const GradSet& grads, const nn::AdamConfig& adam) {
    nn::adam_step(p.click_tower, grads.click_tower, adam);
    nn::adam_step(p.click_head, grads.click_head, adam);
    nn::adam_step(p.conv_tower, grads.conv_tower, adam);
    nn::adam_step(p.conv_head, grads.conv_head, adam);
    if (p.enable_cp) nn::adam_step(p.info_layer, grads.info_layer, adam);
    feat::scatter_grad(p.T, grads.t_rows, adam);
    feat::scatter_grad(p.V, grads.v_rows, adam);
    if (p.enable_sm) {
        sm::scatter_grad(p.ru, grads.ru_rows, adam);
        sm::scatter_grad(p.ri, grads.ri_rows, adam);
    }
}

namespace {

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::int64_t batch, Rng& shuffle_rng) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = n; i > 1; --i)
        std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle_rng.below(i))]);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(batch))
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(std::min(
                                                 n, start + static_cast<std::size_t>(batch))));
    return batches;
}

struct EpochLossAccum {
    double l_ctr = 0, l_ce = 0, l_co = 0, total = 0, mean_a = 0, mean_b = 0, pos = 0, neg = 0;
    double weight = 0;
    void add(const obj::LossReport& r, double w) {
        l_ctr += r.l_ctr * w;
        l_ce += r.l_ce * w;
        l_co += r.l_co * w;
        total += r.total * w;
        mean_a += r.mean_a * w;
        mean_b += r.mean_b * w;
        pos += r.pos * w;
        neg += r.neg * w;
        weight += w;
    }
    obj::LossReport mean() const {
        obj::LossReport r;
        if (weight == 0) return r;
        r.l_ctr = l_ctr / weight;
        r.l_ce = l_ce / weight;
        r.l_co = l_co / weight;
        r.total = total / weight;
        r.mean_a = mean_a / weight;
        r.mean_b = mean_b / weight;
        r.pos = pos / weight;
        r.neg = neg / weight;
        return r;
    }
};

void write_loss_row(std::ostream* out, int epoch, const obj::LossReport& r) {
    if (!out) return;
    char buf[320];
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", epoch,
                  r.l_ctr, r.l_ce, r.l_co, r.total, r.mean_a, r.mean_b, r.pos, r.neg);
    *out << buf;
}

void write_metric_row(std::ostream* out, int epoch, const char* split, double click_auc,
                      double purchase_auc) {
    if (!out) return;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%d,%s,%.17g,%.17g\n", epoch, split, click_auc, purchase_auc);
    *out << buf;
}

} // namespace

feat::EmbeddingTable pretrain_ctr(const ModelConfig& cfg, const feat::Dataset& train,
                                  const feat::Dataset& val, const feat::FieldLayout& layout,
                                  const feat::Vocabulary& vocab, std::ostream* log,
                                  double* best_val_auc) {
    if (train.size() == 0) throw ConfigError("pretrain: empty training set");
    ModelConfig pre_cfg = cfg;
    pre_cfg.enable_sm = pre_cfg.enable_cp = pre_cfg.enable_ce = false;
    pre_cfg.baseline_mlp = false;
    Rng root = Rng(cfg.seed).child("pretrain");
    Rng init = root.child("init");
    CstwaParams p = build_params(pre_cfg, layout, vocab, nullptr, nullptr, init);
    const nn::AdamConfig adam = cfg.adam();

    feat::EmbeddingTable best = p.T;
    double best_auc = -1.0;
    int since_best = 0;
    Rng dropout_rng = root.child("dropout");
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        Rng shuffle_rng = root.child("shuffle/" + std::to_string(epoch));
        const auto batches = make_batches(train.size(), cfg.batch, shuffle_rng);
        GradSet grads;
        ForwardCache cache;
        for (std::size_t bi = 0; bi < batches.size(); ++bi) {
            const auto& rows = batches[bi];
            grads.reset(p);
            forward_click(p, train, rows, nn::Mode::Train, dropout_rng, cache);
            std::vector<std::uint8_t> ys(rows.size());
            for (std::size_t i = 0; i < rows.size(); ++i) ys[i] = train.y[rows[i]];
            const obj::LossGrad ctr = obj::bce_loss(cache.yhat, ys);
            if (!std::isfinite(ctr.value))
                throw NumericError("pretrain: non-finite loss at epoch " + std::to_string(epoch) +
                                   " batch " + std::to_string(bi));
            Matrix dh_t;
            backward_click_head(p, cache, ctr.dpred, grads, dh_t);
            backward_click_hidden(p, train, cache, dh_t, grads);
            nn::adam_step(p.click_tower, grads.click_tower, adam);
            nn::adam_step(p.click_head, grads.click_head, adam);
            feat::scatter_grad(p.T, grads.t_rows, adam);
        }
        // early stop on validation click AUC
        Rng eval_rng(0);
        ForwardCache vc;
        std::vector<double> yhat;
        yhat.reserve(val.size());
        std::vector<std::size_t> rows;
        for (std::size_t start = 0; start < val.size(); start += static_cast<std::size_t>(cfg.batch)) {
            rows.clear();
            for (std::size_t r = start; r < std::min(val.size(), start + static_cast<std::size_t>(cfg.batch)); ++r)
                rows.push_back(r);
            forward_click(p, val, rows, nn::Mode::Eval, eval_rng, vc);
            yhat.insert(yhat.end(), vc.yhat.begin(), vc.yhat.end());
        }
        const double auc = metrics::auc(yhat, val.y);
        if (log) *log << "pretrain epoch " << epoch << " val click auc " << auc << "\n";
        if (auc > best_auc) {
            best_auc = auc;
            best = p.T;
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            if (log) *log << "pretrain early stop at epoch " << epoch << "\n";
            break;
        }
    }
    if (best_val_auc) *best_val_auc = best_auc;
    return best;
}

TrainOutput train(const ModelConfig& cfg, const feat::Dataset& train_set, const feat::Dataset& val_set,
                  const sm::SparseGraph* gu, const sm::SparseGraph* gi,
                  const feat::FieldLayout& layout, const feat::Vocabulary& vocab,
                  std::ostream* metrics_csv, std::ostream* losses_csv, std::ostream* log) {
    cfg.validate();
    if (train_set.size() == 0) throw ConfigError("train: empty training set");
    if (cfg.enable_sm && (!gu || !gi)) throw ConfigError("train: structure enabled but graphs missing");

    if (metrics_csv) *metrics_csv << "epoch,split,click_auc,purchase_auc\n";
    if (losses_csv) *losses_csv << "epoch,l_ctr,l_ce,l_co,total,mean_a,mean_b,pos,neg\n";

    Rng root(cfg.seed);
    Rng init = root.child("init");
    std::optional<sm::EntityMap> users, items;
    if (cfg.enable_sm) {
        users = sm::build_entity_map(train_set, layout, vocab, feat::Side::User);
        items = sm::build_entity_map(train_set, layout, vocab, feat::Side::Item);
        if (gu->n != users->n || gi->n != items->n)
            throw ConfigError("train: graph node counts do not match the vocabulary");
    }
    CstwaParams p = build_params(cfg, layout, vocab, users ? &*users : nullptr,
                                 items ? &*items : nullptr, init);

    TrainOutput out{.params = p, .best_epoch = 0, .best_val_purchase_auc = -1.0, .epochs_run = 0};
    if (cfg.epochs == 0) return out;

    const nn::AdamConfig adam = cfg.adam();
    obj::ThresholdTracker tracker(cfg.tracker_window, cfg.tracker_warmup, cfg.pos_pct, cfg.neg_pct);
    obj::CurseConfig curse = cfg.curse;
    curse.enabled = cfg.enable_ce;

    Rng dropout_rng = root.child("dropout");
    GradSet grads;
    ForwardCache cache;
    std::vector<std::uint8_t> ys, zs;
    std::vector<double> a, b, dyhat, dzhat;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        if (cfg.enable_sm && epoch > 1) {
            sm::epoch_refresh(p.ru, *gu, cfg.structure);
            sm::epoch_refresh(p.ri, *gi, cfg.structure);
        }
        Rng shuffle_rng = root.child("shuffle/" + std::to_string(epoch));
        const auto batches = make_batches(train_set.size(), cfg.batch, shuffle_rng);
        EpochLossAccum accum;

        for (std::size_t bi = 0; bi < batches.size(); ++bi) {
            const auto& rows = batches[bi];
            const auto bn = static_cast<double>(rows.size());
            grads.reset(p);
            ys.resize(rows.size());
            zs.resize(rows.size());
            for (std::size_t i = 0; i < rows.size(); ++i) {
                ys[i] = train_set.y[rows[i]];
                zs[i] = train_set.z[rows[i]];
            }

            if (cfg.baseline_mlp) {
                // independent single-task paths: click on all rows,
                // conversion on clicked rows only, plain BCE for both
                forward_click(p, train_set, rows, nn::Mode::Train, dropout_rng, cache);
                const obj::LossGrad ctr = obj::bce_loss(cache.yhat, ys);
                Matrix dh_t;
                backward_click_head(p, cache, ctr.dpred, grads, dh_t);
                backward_click_hidden(p, train_set, cache, dh_t, grads);
                nn::adam_step(p.click_tower, grads.click_tower, adam);
                nn::adam_step(p.click_head, grads.click_head, adam);
                feat::scatter_grad(p.T, grads.t_rows, adam);

                std::vector<std::size_t> clicked;
                for (const auto r : rows)
                    if (train_set.y[r] == 1) clicked.push_back(r);
                obj::LossReport report;
                report.l_ctr = ctr.value;
                if (!clicked.empty()) {
                    ForwardCache cc;
                    forward_conv(p, train_set, clicked, nn::Mode::Train, dropout_rng, cc);
                    std::vector<std::uint8_t> cz(clicked.size());
                    for (std::size_t i = 0; i < clicked.size(); ++i) cz[i] = train_set.z[clicked[i]];
                    const obj::LossGrad ce = obj::bce_loss(cc.zhat, cz);
                    Matrix unused;
                    backward_conv(p, train_set, cc, ce.dpred, false, grads, unused);
                    nn::adam_step(p.conv_tower, grads.conv_tower, adam);
                    nn::adam_step(p.conv_head, grads.conv_head, adam);
                    feat::scatter_grad(p.V, grads.v_rows, adam);
                    report.l_ce = ce.value;
                }
                report.total = cfg.weights.w1 * report.l_ctr + cfg.weights.w2 * report.l_ce;
                if (!std::isfinite(report.total))
                    throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) +
                                       " batch " + std::to_string(bi));
                accum.add(report, bn);
                continue;
            }

            forward_click(p, train_set, rows, nn::Mode::Train, dropout_rng, cache);
            forward_conv(p, train_set, rows, nn::Mode::Train, dropout_rng, cache);

            // thresholds come from the window of previous predictions
            const auto th = tracker.thresholds();
            obj::curse_weights(cache.yhat, th.pos, th.neg, curse, th.active, a, b);

            const obj::LossGrad ctr = obj::bce_loss(cache.yhat, ys);
            const obj::LossGrad ce = obj::weighted_cvr_loss(cache.zhat, zs, a, b);
            const obj::CalibGrad co = obj::calib_loss(cache.zhat, cache.yhat);
            obj::LossReport report = obj::total_loss(ctr.value, ce.value, co.value, cfg.weights);
            report.pos = th.pos;
            report.neg = th.neg;
            report.mean_a = std::accumulate(a.begin(), a.end(), 0.0) / bn;
            report.mean_b = std::accumulate(b.begin(), b.end(), 0.0) / bn;
            if (!std::isfinite(report.total))
                throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) +
                                   " batch " + std::to_string(bi));

            dyhat.assign(rows.size(), 0.0);
            dzhat.assign(rows.size(), 0.0);
            for (std::size_t i = 0; i < rows.size(); ++i) {
                dyhat[i] = cfg.weights.w1 * ctr.dpred[i] + cfg.weights.w3 * co.dy[i];
                dzhat[i] = cfg.weights.w2 * ce.dpred[i] + cfg.weights.w3 * co.dz[i];
            }

            Matrix dh_t;
            backward_click_head(p, cache, dyhat, grads, dh_t);
            backward_conv(p, train_set, cache, dzhat, cfg.stop_grad_click_gate, grads, dh_t);
            backward_click_hidden(p, train_set, cache, dh_t, grads);
            apply_grads(p, grads, adam);

            tracker.push(cache.yhat);
            accum.add(report, bn);
        }

        write_loss_row(losses_csv, epoch, accum.mean());

        const auto [val_yhat, val_zhat] = predict(p, val_set, cfg.batch);
        const double val_click = metrics::auc(val_yhat, val_set.y);
        const double val_purchase = metrics::auc(val_zhat, val_set.z);
        write_metric_row(metrics_csv, epoch, "val", val_click, val_purchase);
        if (log)
            *log << "epoch " << epoch << " val click auc " << val_click << " purchase auc "
                 << val_purchase << "\n";

        if (val_purchase > out.best_val_purchase_auc) {
            out.best_val_purchase_auc = val_purchase;
            out.best_epoch = epoch;
            out.params = p;
        }
        out.epochs_run = epoch;
    }
    return out;
}

std::pair<std::vector<double>, std::vector<double>> predict(const CstwaParams& p,
                                                            const feat::Dataset& data,
                                                            std::int64_t batch) {
    Rng rng(0);  // unused in eval mode
    ForwardCache cache;
    std::vector<double> yhat, zhat;
    yhat.reserve(data.size());
    zhat.reserve(data.size());
    std::vector<std::size_t> rows;
    for (std::size_t start = 0; start < data.size(); start += static_cast<std::size_t>(batch)) {
        rows.clear();
        for (std::size_t r = start; r < std::min(data.size(), start + static_cast<std::size_t>(batch)); ++r)
            rows.push_back(r);
        forward_click(p, data, rows, nn::Mode::Eval, rng, cache);
        forward_conv(p, data, rows, nn::Mode::Eval, rng, cache);
        yhat.insert(yhat.end(), cache.yhat.begin(), cache.yhat.end());
        zhat.insert(zhat.end(), cache.zhat.begin(), cache.zhat.end());
    }
    return {std::move(yhat), std::move(zhat)};
}

void save_checkpoint(const CstwaParams& p, const std::string& config_text,
                     std::uint64_t config_hash, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint: " + path.string());
    const char magic[8] = {'C', 'S', 'T', 'W', 'A', 'C', 'K', '1'};
    out.write(magic, 8);
    out.write(reinterpret_cast<const char*>(&config_hash), 8);
    const std::uint8_t flags[4] = {p.enable_sm, p.enable_cp, p.enable_ce, p.baseline_mlp};
    out.write(reinterpret_cast<const char*>(flags), 4);
    write_string(out, config_text);

    std::string specs_text;
    for (const auto& f : p.layout.fields)
        specs_text += f.name + "," + feat::side_name(f.side) + "," + (f.is_entity_id ? "1" : "0") + "\n";
    write_string(out, specs_text);

    auto write_table = [&out](const feat::EmbeddingTable& t) {
        const std::int64_t nf = static_cast<std::int64_t>(t.field_offset.size());
        const std::int64_t d64 = t.dim;
        out.write(reinterpret_cast<const char*>(&d64), 8);
        out.write(reinterpret_cast<const char*>(&t.rows), 8);
        out.write(reinterpret_cast<const char*>(&nf), 8);
        out.write(reinterpret_cast<const char*>(t.field_offset.data()), nf * 8);
        out.write(reinterpret_cast<const char*>(t.values.data()),
                  static_cast<std::streamsize>(t.values.size() * sizeof(double)));
    };
    write_table(p.V);
    write_table(p.T);
    if (p.enable_sm) {
        write_matrix(out, p.ru.values);
        write_matrix(out, p.ri.values);
    }
    write_mlp(out, p.click_tower);
    write_mlp(out, p.conv_tower);
    write_mlp(out, p.info_layer);
    write_mlp(out, p.click_head);
    write_mlp(out, p.conv_head);
    if (!out) throw DataError("short write on checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path.string());
    char magic[8];
    in.read(magic, 8);
    if (!in || std::string_view(magic, 8) != "CSTWACK1")
        throw DataError("bad checkpoint header: " + path.string());
    Checkpoint ck;
    in.read(reinterpret_cast<char*>(&ck.config_hash), 8);
    std::uint8_t flags[4];
    in.read(reinterpret_cast<char*>(flags), 4);
    ck.config_text = read_string(in);

    const std::string specs_text = read_string(in);
    std::vector<feat::FieldSpec> specs;
    std::size_t pos = 0;
    while (pos < specs_text.size()) {
        const std::size_t eol = specs_text.find('\n', pos);
        const std::string line = specs_text.substr(pos, eol - pos);
        pos = eol + 1;
        const std::size_t c1 = line.find(',');
        const std::size_t c2 = line.find(',', c1 + 1);
        specs.push_back({line.substr(0, c1), feat::parse_side(line.substr(c1 + 1, c2 - c1 - 1)),
                         line.substr(c2 + 1) == "1"});
    }

    CstwaParams& p = ck.params;
    p.layout = feat::make_layout(specs);
    p.enable_sm = flags[0];
    p.enable_cp = flags[1];
    p.enable_ce = flags[2];
    p.baseline_mlp = flags[3];

    auto read_table = [&in, &path](const char* name) {
        feat::EmbeddingTable t;
        std::int64_t d64 = 0, nf = 0;
        in.read(reinterpret_cast<char*>(&d64), 8);
        in.read(reinterpret_cast<char*>(&t.rows), 8);
        in.read(reinterpret_cast<char*>(&nf), 8);
        t.dim = static_cast<int>(d64);
        t.name = name;
        t.field_offset.resize(static_cast<std::size_t>(nf));
        in.read(reinterpret_cast<char*>(t.field_offset.data()), nf * 8);
        t.values.resize(static_cast<std::size_t>(t.rows * t.dim));
        in.read(reinterpret_cast<char*>(t.values.data()),
                static_cast<std::streamsize>(t.values.size() * sizeof(double)));
        if (!in) throw DataError("truncated checkpoint: " + path.string());
        t.m.assign(t.values.size(), 0.0);
        t.v.assign(t.values.size(), 0.0);
        t.steps.assign(static_cast<std::size_t>(t.rows), 0);
        return t;
    };
    p.V = read_table("V");
    p.T = read_table("T");
    p.d = p.V.dim;
    if (p.enable_sm) {
        p.ru.values = read_matrix(in);
        p.ri.values = read_matrix(in);
        p.ru.init_optimizer_state();
        p.ri.init_optimizer_state();
    }

    // network shapes come from the stored config snapshot
    auto find_num = [&ck](const std::string& key, double fallback) {
        const std::string needle = key + " = ";
        const std::size_t at = ck.config_text.find(needle);
        if (at == std::string::npos) return fallback;
        return std::stod(ck.config_text.substr(at + needle.size()));
    };
    const auto d_out = static_cast<Index>(find_num("d_out", 32));
    std::vector<Index> tower_dims;
    {
        const std::string needle = "tower_dims = ";
        const std::size_t at = ck.config_text.find(needle);
        std::string list = at == std::string::npos
                               ? "128,64,32"
                               : ck.config_text.substr(at + needle.size(),
                                                       ck.config_text.find('\n', at) - at - needle.size());
        std::size_t start = 0;
        while (start < list.size()) {
            const std::size_t comma = list.find(',', start);
            tower_dims.push_back(static_cast<Index>(std::stol(list.substr(start, comma - start))));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
    }
    const Index d_in = p.input_dim();
    std::vector<double> dropout(tower_dims.size(), 0.0);
    Rng dummy(0);
    p.click_tower = nn::Mlp::make(nn::MlpSpec::tower(d_in, tower_dims, dropout), dummy);
    p.conv_tower = nn::Mlp::make(nn::MlpSpec::tower(d_in, tower_dims, dropout), dummy);
    p.info_layer = nn::Mlp::make(nn::MlpSpec::head(d_out, d_in, true), dummy);
    p.click_head = nn::Mlp::make(nn::MlpSpec::head(d_out, 1, true), dummy);
    p.conv_head = nn::Mlp::make(nn::MlpSpec::head(d_out, 1, true), dummy);
    read_mlp(in, p.click_tower);
    read_mlp(in, p.conv_tower);
    read_mlp(in, p.info_layer);
    read_mlp(in, p.click_head);
    read_mlp(in, p.conv_head);
    if (!in) throw DataError("truncated checkpoint: " + path.string());
    return ck;
}

} // namespace cstwa::model
