#include "cstwa/features.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace cstwa::feat {

std::string side_name(Side s) {
    switch (s) {
        case Side::User: return "user";
        case Side::Item: return "item";
        case Side::Context: return "context";
    }
    return "?";
}

Side parse_side(const std::string& s) {
    if (s == "user") return Side::User;
    if (s == "item") return Side::Item;
    if (s == "context") return Side::Context;
    throw ConfigError("unknown field side '" + s + "' (expected user|item|context)");
}

std::pair<int, int> FieldLayout::side_range(Side s) const {
    switch (s) {
        case Side::User: return {0, l_user};
        case Side::Item: return {l_user, l_user + l_item};
        case Side::Context: return {l_user + l_item, l_user + l_item + l_ctx};
    }
    return {0, 0};
}

FieldLayout make_layout(std::vector<FieldSpec> declared) {
    if (declared.empty()) throw ConfigError("field spec list is empty");
    FieldLayout layout;
    for (const Side s : {Side::User, Side::Item, Side::Context})
        for (const auto& f : declared)
            if (f.side == s) layout.fields.push_back(f);
    for (int i = 0; i < layout.n_fields(); ++i) {
        const auto& f = layout.fields[static_cast<std::size_t>(i)];
        switch (f.side) {
            case Side::User: ++layout.l_user; break;
            case Side::Item: ++layout.l_item; break;
            case Side::Context: ++layout.l_ctx; break;
        }
        if (f.is_entity_id) {
            if (f.side == Side::User) {
                if (layout.user_id_field >= 0) throw ConfigError("more than one user entity-id field");
                layout.user_id_field = i;
            } else if (f.side == Side::Item) {
                if (layout.item_id_field >= 0) throw ConfigError("more than one item entity-id field");
                layout.item_id_field = i;
            } else {
                throw ConfigError("context field '" + f.name + "' cannot be an entity id");
            }
        }
    }
    if (layout.user_id_field < 0) throw ConfigError("no user field marked as entity id");
    if (layout.item_id_field < 0) throw ConfigError("no item field marked as entity id");
    return layout;
}

std::vector<FieldSpec> load_field_specs(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open field spec file: " + path.string());
    std::vector<FieldSpec> specs;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::stringstream ss(line);
        std::string name, side, entity;
        if (!std::getline(ss, name, ',') || !std::getline(ss, side, ',') || !std::getline(ss, entity))
            throw DataError("field spec line " + std::to_string(lineno) + ": expected name,side,is_entity_id");
        if (entity != "0" && entity != "1")
            throw DataError("field spec line " + std::to_string(lineno) + ": is_entity_id must be 0 or 1");
        specs.push_back({name, parse_side(side), entity == "1"});
    }
    if (specs.empty()) throw DataError("field spec file has no fields: " + path.string());
    return specs;
}

void save_field_specs(std::span<const FieldSpec> specs, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write field spec file: " + path.string());
    for (const auto& f : specs)
        out << f.name << "," << side_name(f.side) << "," << (f.is_entity_id ? 1 : 0) << "\n";
}

std::int32_t Vocabulary::encode(int field, const std::string& raw) const {
    const auto& m = maps[static_cast<std::size_t>(field)];
    const auto it = m.find(raw);
    return it == m.end() ? 0 : it->second;
}

const std::string& Vocabulary::decode(int field, std::int32_t index) const {
    return values[static_cast<std::size_t>(field)][static_cast<std::size_t>(index)];
}

std::int64_t Vocabulary::total_rows() const {
    std::int64_t n = 0;
    for (const auto c : cardinality) n += c;
    return n;
}

std::uint64_t Vocabulary::checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](const std::string& s) {
        for (const char c : s) {
            h ^= static_cast<std::uint8_t>(c);
            h *= 0x100000001b3ULL;
        }
        h ^= 0xff;
        h *= 0x100000001b3ULL;
    };
    for (std::size_t f = 0; f < values.size(); ++f)
        for (const auto& v : values[f]) mix(v);
    return h;
}

void Vocabulary::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write vocabulary file: " + path.string());
    out << "fields " << values.size() << "\n";
    for (std::size_t f = 0; f < values.size(); ++f) {
        out << "field " << f << " " << cardinality[f] << "\n";
        // index 0 is implicit OOV
        for (std::size_t i = 1; i < values[f].size(); ++i) out << values[f][i] << "\n";
    }
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open vocabulary file: " + path.string());
    std::string tok;
    std::size_t n_fields = 0;
    if (!(in >> tok >> n_fields) || tok != "fields")
        throw DataError("bad vocabulary header in " + path.string());
    std::string line;
    std::getline(in, line);
    Vocabulary v;
    v.maps.resize(n_fields);
    v.values.resize(n_fields);
    v.cardinality.resize(n_fields);
    for (std::size_t f = 0; f < n_fields; ++f) {
        std::getline(in, line);
        std::stringstream ss(line);
        std::size_t idx = 0;
        std::int32_t card = 0;
        if (!(ss >> tok >> idx >> card) || tok != "field" || idx != f)
            throw DataError("bad vocabulary field header in " + path.string());
        v.cardinality[f] = card;
        v.values[f].resize(static_cast<std::size_t>(card));
        v.values[f][0] = "";
        for (std::int32_t i = 1; i < card; ++i) {
            if (!std::getline(in, line)) throw DataError("truncated vocabulary file: " + path.string());
            v.values[f][static_cast<std::size_t>(i)] = line;
            v.maps[f].emplace(line, i);
        }
    }
    return v;
}

void Dataset::push(const Sample& s) {
    if (n_fields == 0) n_fields = static_cast<int>(s.x.size());
    x.insert(x.end(), s.x.begin(), s.x.end());
    y.push_back(s.y);
    z.push_back(s.z);
    user_index.push_back(s.user_index);
    item_index.push_back(s.item_index);
}

Vocabulary build_vocab(const RawRecords& records, const FieldLayout& layout,
                       std::span<const int> column_of, int min_freq) {
    if (records.n_rows == 0) throw ConfigError("cannot build vocabulary from an empty record stream");
    const auto nf = static_cast<std::size_t>(layout.n_fields());
    std::vector<std::unordered_map<std::string, std::int64_t>> counts(nf);
    for (std::size_t r = 0; r < records.n_rows; ++r) {
        const auto row = records.row(r);
        for (std::size_t f = 0; f < nf; ++f) ++counts[f][row[static_cast<std::size_t>(column_of[f])]];
    }
    Vocabulary v;
    v.maps.resize(nf);
    v.values.resize(nf);
    v.cardinality.resize(nf);
    for (std::size_t f = 0; f < nf; ++f) {
        std::vector<std::pair<std::string, std::int64_t>> kept;
        kept.reserve(counts[f].size());
        for (const auto& [raw, c] : counts[f])
            if (c >= min_freq) kept.emplace_back(raw, c);
        std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });
        v.values[f].resize(kept.size() + 1);
        v.values[f][0] = "";
        std::int32_t next = 1;
        for (const auto& [raw, c] : kept) {
            v.maps[f].emplace(raw, next);
            v.values[f][static_cast<std::size_t>(next)] = raw;
            ++next;
        }
        v.cardinality[f] = next;
    }
    return v;
}

std::optional<Sample> encode_sample(std::span<const std::string> raw_row, const Vocabulary& vocab,
                                    const FieldLayout& layout, std::span<const int> column_of,
                                    int y_col, int z_col, std::string* err) {
    auto parse_label = [&](int col, const char* what) -> int {
        const std::string& s = raw_row[static_cast<std::size_t>(col)];
        if (s == "0") return 0;
        if (s == "1") return 1;
        if (err) *err = std::string(what) + " label '" + s + "' outside {0,1}";
        return -1;
    };
    const int y = parse_label(y_col, "click");
    if (y < 0) return std::nullopt;
    const int z = parse_label(z_col, "conversion");
    if (z < 0) return std::nullopt;
    if (z == 1 && y == 0) {
        if (err) *err = "conversion without click";
        return std::nullopt;
    }
    Sample s;
    s.y = static_cast<std::uint8_t>(y);
    s.z = static_cast<std::uint8_t>(z);
    s.x.resize(static_cast<std::size_t>(layout.n_fields()));
    for (int f = 0; f < layout.n_fields(); ++f)
        s.x[static_cast<std::size_t>(f)] =
            vocab.encode(f, raw_row[static_cast<std::size_t>(column_of[f])]);
    s.user_index = s.x[static_cast<std::size_t>(layout.user_id_field)];
    s.item_index = s.x[static_cast<std::size_t>(layout.item_id_field)];
    return s;
}

} // namespace cstwa::feat
