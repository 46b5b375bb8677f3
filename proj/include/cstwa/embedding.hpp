#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "cstwa/features.hpp"
#include "cstwa/matrix.hpp"
#include "cstwa/nn.hpp"
#include "cstwa/rng.hpp"

namespace cstwa::feat {

// One flat embedding table over all fields; field f owns the contiguous row
// range [field_offset[f], field_offset[f] + cardinality[f]). Optimizer state
// is per row so untouched rows never move.
struct EmbeddingTable {
    std::string name;
    int dim = 0;
    std::vector<std::int64_t> field_offset;
    std::int64_t rows = 0;
    std::vector<double> values;
    std::vector<double> m, v;
    std::vector<std::int64_t> steps;

    static EmbeddingTable make(std::string name, int dim, const Vocabulary& vocab, Rng& rng,
                               double init_scale = 0.05);

    std::int64_t row_of(int field, std::int32_t index) const {
        return field_offset[static_cast<std::size_t>(field)] + index;
    }
    std::span<double> row(std::int64_t r) {
        return {values.data() + r * dim, static_cast<std::size_t>(dim)};
    }
    std::span<const double> row(std::int64_t r) const {
        return {values.data() + r * dim, static_cast<std::size_t>(dim)};
    }

    void save(const std::filesystem::path& path) const;
    static EmbeddingTable load(const std::filesystem::path& path);
};

// Batch lookup: out row b = concatenation of the d-dim embedding rows of the
// selected sides' fields, canonical field order. Returns B x (n_sel_fields*d).
Matrix lookup_concat(const EmbeddingTable& table, const Dataset& data,
                     std::span<const std::size_t> batch_rows, const FieldLayout& layout,
                     bool user, bool item, bool context);

// Sparse gradient buffer: accumulates per-row gradient segments, summing
// duplicates, in first-touch order.
struct RowGrads {
    int dim = 0;
    std::vector<std::int64_t> rows;
    std::vector<double> g;  // rows.size() * dim
    std::unordered_map<std::int64_t, std::size_t> slot;

    void reset(int d);
    void add(std::int64_t row, std::span<const double> grad);
    std::span<const double> grad_of(std::size_t slot_idx) const {
        return {g.data() + slot_idx * dim, static_cast<std::size_t>(dim)};
    }
};

// Splits the batch gradient of a lookup_concat output into per-row segments
// and accumulates them into `acc` (duplicates sum).
void accumulate_lookup_grads(const EmbeddingTable& table, const Dataset& data,
                             std::span<const std::size_t> batch_rows, const FieldLayout& layout,
                             bool user, bool item, bool context, const Matrix& dout, RowGrads& acc);

// One Adam step per touched row only (coupled L2 on the row values).
void scatter_grad(EmbeddingTable& table, const RowGrads& acc, const nn::AdamConfig& cfg);

} // namespace cstwa::feat
