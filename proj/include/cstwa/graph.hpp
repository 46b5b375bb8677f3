#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "cstwa/matrix.hpp"

namespace cstwa::sm {

// Nonnegative adjacency in CSR form. Column indices are strictly increasing
// within a row; no self-edges.
struct SparseGraph {
    std::int64_t n = 0;
    int k = 0;  // top-K used at construction time (informational)
    bool normalized = false;
    std::vector<std::int64_t> row_ptr;  // n+1
    std::vector<std::int32_t> col;
    std::vector<double> w;

    std::int64_t nnz() const { return static_cast<std::int64_t>(col.size()); }
    static SparseGraph empty(std::int64_t n);
};

// Symmetric degree scaling w_ij / sqrt(deg_i * deg_j) with deg = row sums of
// the unnormalized graph. Edges incident to a zero-degree endpoint are
// dropped (0/0 := 0). Normalizing twice is an error.
SparseGraph normalize_graph(const SparseGraph& g);

// feats <- g * feats, applied `layers` times. layers == 0 returns the input.
Matrix propagate(const SparseGraph& g, const Matrix& feats, int layers);

// Binary CSR dump; round-trips losslessly. vocab_checksum ties a cache to the
// vocabulary it was mined from.
void save_graph(const SparseGraph& g, std::uint64_t vocab_checksum,
                const std::filesystem::path& path);
SparseGraph load_graph(const std::filesystem::path& path, std::uint64_t* vocab_checksum = nullptr);

} // namespace cstwa::sm
