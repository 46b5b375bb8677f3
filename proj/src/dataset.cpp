#include "cstwa/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include "cstwa/rng.hpp"

namespace cstwa::data {

feat::RawRecords read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open dataset file: " + path.string());
    feat::RawRecords rec;
    std::string line;
    if (!std::getline(in, line)) throw DataError("dataset file has no header: " + path.string());
    std::stringstream hs(line);
    std::string cell;
    while (std::getline(hs, cell, ',')) rec.header.push_back(cell);
    const std::size_t ncols = rec.header.size();
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::size_t start = 0;
        std::size_t col = 0;
        while (col < ncols) {
            const std::size_t comma = line.find(',', start);
            if (comma == std::string::npos) {
                rec.cells.push_back(line.substr(start));
                start = line.size() + 1;
                ++col;
                break;
            }
            rec.cells.push_back(line.substr(start, comma - start));
            start = comma + 1;
            ++col;
        }
        while (col < ncols) {
            rec.cells.emplace_back();  // short row; caught during encoding
            ++col;
        }
        ++rec.n_rows;
    }
    return rec;
}

HeaderMap map_header(const std::vector<std::string>& header, const feat::FieldLayout& layout) {
    HeaderMap map;
    auto col_of = [&header](const std::string& name) {
        for (std::size_t c = 0; c < header.size(); ++c)
            if (header[c] == name) return static_cast<int>(c);
        return -1;
    };
    map.y_col = col_of("click");
    map.z_col = col_of("conversion");
    if (map.y_col < 0 || map.z_col < 0)
        throw DataError("dataset header must contain 'click' and 'conversion' columns");
    for (int f = 0; f < layout.n_fields(); ++f) {
        const int c = col_of(layout.field(f).name);
        if (c < 0) throw DataError("dataset header is missing field '" + layout.field(f).name + "'");
        map.column_of.push_back(c);
    }
    return map;
}

feat::Dataset load_dataset(const std::filesystem::path& path, const feat::FieldLayout& layout,
                           const feat::Vocabulary& vocab, LoadStats* stats, std::size_t max_errors) {
    const feat::RawRecords rec = read_csv(path);
    const HeaderMap hmap = map_header(rec.header, layout);
    feat::Dataset out;
    out.n_fields = layout.n_fields();
    LoadStats local;
    LoadStats& st = stats ? *stats : local;
    st.rows_read = rec.n_rows;
    for (std::size_t r = 0; r < rec.n_rows; ++r) {
        std::string err;
        const auto sample =
            feat::encode_sample(rec.row(r), vocab, layout, hmap.column_of, hmap.y_col, hmap.z_col, &err);
        if (!sample) {
            if (err == "conversion without click") {
                ++st.funnel_violations;
                continue;
            }
            st.errors.push_back({r + 2, err});  // +2: header line and 1-based numbering
            if (st.errors.size() > max_errors)
                throw DataError("too many malformed rows in " + path.string() + "; first: line " +
                                std::to_string(st.errors.front().line) + ": " + st.errors.front().message);
            continue;
        }
        out.push(*sample);
        ++st.rows_kept;
    }
    return out;
}

std::pair<feat::Dataset, feat::Dataset> split_train_val(const feat::Dataset& all, double fraction,
                                                        std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("validation fraction must be in (0,1)");
    const std::size_t n = all.size();
    const auto n_val = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng = Rng(seed).child("split_train_val");
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.below(i));
        std::swap(order[i - 1], order[j]);
    }
    std::vector<char> in_val(n, 0);
    for (std::size_t i = 0; i < n_val; ++i) in_val[order[i]] = 1;

    feat::Dataset train, val;
    train.n_fields = val.n_fields = all.n_fields;
    for (std::size_t i = 0; i < n; ++i) {
        feat::Dataset& dst = in_val[i] ? val : train;
        const auto xs = all.row(i);
        dst.x.insert(dst.x.end(), xs.begin(), xs.end());
        dst.y.push_back(all.y[i]);
        dst.z.push_back(all.z[i]);
        dst.user_index.push_back(all.user_index[i]);
        dst.item_index.push_back(all.item_index[i]);
    }
    return {std::move(train), std::move(val)};
}

} // namespace cstwa::data
