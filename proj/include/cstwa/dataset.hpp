#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>

#include "cstwa/features.hpp"

namespace cstwa::data {

feat::RawRecords read_csv(const std::filesystem::path& path);

// Maps the canonical layout onto a `click,conversion,<field...>` header.
// column_of[f] = header column of canonical field f.
struct HeaderMap {
    std::vector<int> column_of;
    int y_col = -1, z_col = -1;
};
HeaderMap map_header(const std::vector<std::string>& header, const feat::FieldLayout& layout);

struct LoadStats {
    std::size_t rows_read = 0;
    std::size_t rows_kept = 0;
    std::size_t funnel_violations = 0;  // conversion without click, rejected
    std::vector<feat::RowError> errors;
};

// Encodes a dataset file; collects row errors up to `max_errors` then throws.
feat::Dataset load_dataset(const std::filesystem::path& path, const feat::FieldLayout& layout,
                           const feat::Vocabulary& vocab, LoadStats* stats = nullptr,
                           std::size_t max_errors = 100);

// Seeded uniform split into (train, val); |val| = round(fraction * n).
std::pair<feat::Dataset, feat::Dataset> split_train_val(const feat::Dataset& all, double fraction,
                                                        std::uint64_t seed);

} // namespace cstwa::data
