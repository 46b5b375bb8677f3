#pragma once

#include <filesystem>
#include <functional>

#include "cstwa/embedding.hpp"
#include "cstwa/graph.hpp"

namespace cstwa::sm {

struct StructureConfig {
    int k = 8;
    int layers = 1;
    double alpha = 0.3;

    void validate() const;
};

// Entity index -> its side's feature-index tuple (canonical within-side
// order). Index 0 is the out-of-vocabulary entity with an all-OOV tuple.
struct EntityMap {
    feat::Side side = feat::Side::User;
    std::int32_t n = 0;
    int l = 0;                       // fields on this side
    std::vector<std::int32_t> tuple; // n * l

    std::span<const std::int32_t> of(std::int32_t entity) const {
        return {tuple.data() + static_cast<std::size_t>(entity) * static_cast<std::size_t>(l),
                static_cast<std::size_t>(l)};
    }
    void save(const std::filesystem::path& path) const;
    static EntityMap load(const std::filesystem::path& path);
};

// First-seen feature tuple per entity from the training split.
EntityMap build_entity_map(const feat::Dataset& data, const feat::FieldLayout& layout,
                           const feat::Vocabulary& vocab, feat::Side side);

// Per-entity representation matrix (n x l*d). Carries per-row Adam state when
// trained as parameters after structure injection.
struct RepMatrix {
    Matrix values;
    Matrix m1, m2;  // per-row Adam moments
    std::vector<std::int64_t> steps;

    std::int64_t n() const { return values.rows; }
    Index dim() const { return values.cols; }
    void init_optimizer_state();
};

// Row e = concatenation of the entity's feature embedding rows.
RepMatrix assemble_reps(const feat::EmbeddingTable& table, const EntityMap& entities,
                        const feat::FieldLayout& layout);

// Exact top-K positive-cosine neighbors per row. Negative similarities are
// discarded; ties prefer the smaller column index; self edges are excluded.
// Zero-norm rows get no out-edges (reported through on_zero_row when set).
SparseGraph topk_similarity_graph(const Matrix& reps, int k,
                                  const std::function<void(std::int64_t)>& on_zero_row = {});

Matrix ema_blend(const Matrix& fresh, const Matrix& prev, double alpha);

// r <- alpha * (g^layers r) + (1-alpha) * r. Adam moments are left untouched.
void epoch_refresh(RepMatrix& r, const SparseGraph& g, const StructureConfig& cfg);

// Per-row Adam on the touched representation rows (coupled L2, like
// embedding rows).
void scatter_grad(RepMatrix& r, const feat::RowGrads& acc, const nn::AdamConfig& cfg);

} // namespace cstwa::sm
