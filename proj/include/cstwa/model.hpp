#pragma once

#include <iosfwd>
#include <optional>

#include "cstwa/dataset.hpp"
#include "cstwa/embedding.hpp"
#include "cstwa/objective.hpp"
#include "cstwa/structure.hpp"

namespace cstwa::model {

struct ModelConfig {
    bool enable_sm = false;  // structure-injected entity representations
    bool enable_cp = false;  // click-bias gate on the conversion input
    bool enable_ce = false;  // contradiction-weighted conversion loss
    bool baseline_mlp = false;  // independent single-task paths; conversion sees clicked rows only
    bool stop_grad_click_gate = false;  // keep conversion-loss gradients out of the click tower

    int d = 5;
    std::vector<Index> tower_dims{128, 64, 32};
    std::vector<double> dropout{0.1, 0.3, 0.3};
    Index d_out = 32;
    double lr = 0.001;
    std::int64_t batch = 2000;
    int epochs = 10;
    double l2 = 1e-6;
    int patience = 2;  // pretrain early stop on validation click AUC

    sm::StructureConfig structure;
    obj::CurseConfig curse;
    int tracker_window = 10000;
    int tracker_warmup = 1000;
    int pos_pct = 99, neg_pct = 10;
    obj::LossWeights weights;
    std::uint64_t seed = 1;

    void validate() const;
    nn::AdamConfig adam() const { return {.lr = lr, .l2 = l2}; }
};

struct CstwaParams {
    feat::FieldLayout layout;
    bool enable_sm = false, enable_cp = false, enable_ce = false, baseline_mlp = false;
    int d = 5;

    feat::EmbeddingTable V, T;
    sm::RepMatrix ru, ri;  // empty unless enable_sm
    nn::Mlp click_tower, conv_tower, info_layer, click_head, conv_head;

    Index input_dim() const {
        return static_cast<Index>(layout.n_fields()) * d;
    }
};

// Fresh parameters; with enable_sm the representation matrices are assembled
// from V through the entity maps.
CstwaParams build_params(const ModelConfig& cfg, const feat::FieldLayout& layout,
                         const feat::Vocabulary& vocab, const sm::EntityMap* users,
                         const sm::EntityMap* items, Rng& rng);

struct ForwardCache {
    std::vector<std::size_t> rows;
    Matrix e_t;
    nn::MlpCache click_tower_c, click_head_c;
    Matrix h_t;
    std::vector<double> yhat;

    Matrix e_v;
    Matrix gate;  // sigmoid output of the info layer; empty when the gate is off
    Matrix e_v_hat;
    nn::MlpCache info_c, conv_tower_c, conv_head_c;
    std::vector<double> zhat;
};

void forward_click(const CstwaParams& p, const feat::Dataset& data,
                   std::span<const std::size_t> rows, nn::Mode mode, Rng& rng, ForwardCache& cache);

// Needs forward_click's H_T in the cache when the gate is enabled.
void forward_conv(const CstwaParams& p, const feat::Dataset& data,
                  std::span<const std::size_t> rows, nn::Mode mode, Rng& rng, ForwardCache& cache);

struct GradSet {
    nn::MlpGrads click_tower, conv_tower, info_layer, click_head, conv_head;
    feat::RowGrads v_rows, t_rows, ru_rows, ri_rows;
    void reset(const CstwaParams& p);
};

// Click-head gradients; the head's H_T gradient is accumulated into dh_t.
void backward_click_head(const CstwaParams& p, const ForwardCache& cache,
                         std::span<const double> dyhat, GradSet& grads, Matrix& dh_t);

// Conversion-path gradients down to E_V (hence V rows or representation
// rows). With the gate enabled its H_T gradient lands in dh_t unless
// stop_grad_click_gate is set; the info layer's own weights always train.
void backward_conv(const CstwaParams& p, const feat::Dataset& data, const ForwardCache& cache,
                   std::span<const double> dzhat, bool stop_grad_click_gate, GradSet& grads,
                   Matrix& dh_t);

// Propagates the accumulated H_T gradient through the click tower into T.
void backward_click_hidden(const CstwaParams& p, const feat::Dataset& data,
                           const ForwardCache& cache, const Matrix& dh_t, GradSet& grads);

void apply_grads(CstwaParams& p, const GradSet& grads, const nn::AdamConfig& adam);

// Trains the click path alone on all impressions and returns the embedding
// table of the best validation-click-AUC epoch.
feat::EmbeddingTable pretrain_ctr(const ModelConfig& cfg, const feat::Dataset& train,
                                  const feat::Dataset& val, const feat::FieldLayout& layout,
                                  const feat::Vocabulary& vocab, std::ostream* log,
                                  double* best_val_auc = nullptr);

struct TrainOutput {
    CstwaParams params;  // best validation purchase AUC
    int best_epoch = 0;
    double best_val_purchase_auc = 0.0;
    int epochs_run = 0;
};

// Joint run (or baseline when cfg.baseline_mlp): batches -> forward ->
// thresholds -> weights -> loss -> backward -> sparse/dense Adam ->
// tracker push. Metric and loss CSV rows are written per epoch.
TrainOutput train(const ModelConfig& cfg, const feat::Dataset& train_set, const feat::Dataset& val_set,
                  const sm::SparseGraph* gu, const sm::SparseGraph* gi,
                  const feat::FieldLayout& layout, const feat::Vocabulary& vocab,
                  std::ostream* metrics_csv, std::ostream* losses_csv, std::ostream* log);

std::pair<std::vector<double>, std::vector<double>> predict(const CstwaParams& p,
                                                            const feat::Dataset& data,
                                                            std::int64_t batch);

void save_checkpoint(const CstwaParams& p, const std::string& config_text,
                     std::uint64_t config_hash, const std::filesystem::path& path);

struct Checkpoint {
    CstwaParams params;
    std::string config_text;
    std::uint64_t config_hash = 0;
};
Checkpoint load_checkpoint(const std::filesystem::path& path);

} // namespace cstwa::model
