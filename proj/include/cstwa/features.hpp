#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "cstwa/errors.hpp"

namespace cstwa::feat {

enum class Side { User, Item, Context };

std::string side_name(Side s);
Side parse_side(const std::string& s);

struct FieldSpec {
    std::string name;
    Side side = Side::Context;
    bool is_entity_id = false;
};

// Fields in canonical order: user fields first, then item, then context,
// with the declared order preserved inside each side. Every index-form
// structure (samples, embedding offsets, representation slices) uses this
// order so the user/item/context column ranges are contiguous.
struct FieldLayout {
    std::vector<FieldSpec> fields;
    int l_user = 0, l_item = 0, l_ctx = 0;
    int user_id_field = -1, item_id_field = -1;

    int n_fields() const { return static_cast<int>(fields.size()); }
    // canonical field indices for one side, as a [begin, end) range
    std::pair<int, int> side_range(Side s) const;
    const FieldSpec& field(int f) const { return fields[static_cast<std::size_t>(f)]; }
};

FieldLayout make_layout(std::vector<FieldSpec> declared);
std::vector<FieldSpec> load_field_specs(const std::filesystem::path& path);
void save_field_specs(std::span<const FieldSpec> specs, const std::filesystem::path& path);

// Per-field raw value -> dense index map. Index 0 is reserved for
// out-of-vocabulary values and is never assigned to a raw value.
struct Vocabulary {
    std::vector<std::unordered_map<std::string, std::int32_t>> maps;
    std::vector<std::vector<std::string>> values;  // index -> raw value ("" at 0)
    std::vector<std::int32_t> cardinality;

    std::int32_t encode(int field, const std::string& raw) const;
    const std::string& decode(int field, std::int32_t index) const;
    std::int64_t total_rows() const;
    std::uint64_t checksum() const;

    void save(const std::filesystem::path& path) const;
    static Vocabulary load(const std::filesystem::path& path);
};

struct Sample {
    std::vector<std::int32_t> x;  // per-field indices, canonical order
    std::uint8_t y = 0;
    std::uint8_t z = 0;
    std::int32_t user_index = 0;
    std::int32_t item_index = 0;
};

// Column-major dataset storage for batched training.
struct Dataset {
    int n_fields = 0;
    std::vector<std::int32_t> x;  // size() * n_fields
    std::vector<std::uint8_t> y, z;
    std::vector<std::int32_t> user_index, item_index;

    std::size_t size() const { return y.size(); }
    std::span<const std::int32_t> row(std::size_t i) const {
        return {x.data() + i * static_cast<std::size_t>(n_fields), static_cast<std::size_t>(n_fields)};
    }
    void push(const Sample& s);
};

// Raw string table: header + cells, as read from a delimited file.
struct RawRecords {
    std::vector<std::string> header;
    std::vector<std::string> cells;  // n_rows * header.size()
    std::size_t n_rows = 0;

    std::span<const std::string> row(std::size_t i) const {
        return {cells.data() + i * header.size(), header.size()};
    }
};

// Frequency-filtered vocabulary: raw values seen fewer than min_freq times
// map to index 0; the rest get indices >= 1 ordered by (count desc, value asc).
// column_of[f] maps canonical field f to its column in `records`.
Vocabulary build_vocab(const RawRecords& records, const FieldLayout& layout,
                       std::span<const int> column_of, int min_freq);

struct RowError {
    std::size_t line = 0;  // 1-based line in the source file
    std::string message;
};

// Encodes one raw row (canonical-field columns given by column_of; label
// columns by y_col/z_col). Returns nullopt and fills `err` on a bad row.
std::optional<Sample> encode_sample(std::span<const std::string> raw_row, const Vocabulary& vocab,
                                    const FieldLayout& layout, std::span<const int> column_of,
                                    int y_col, int z_col, std::string* err);

} // namespace cstwa::feat
