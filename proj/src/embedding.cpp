#include "cstwa/embedding.hpp"

#include <fstream>

namespace cstwa::feat {

namespace {

std::vector<int> selected_fields(const FieldLayout& layout, bool user, bool item, bool context) {
    std::vector<int> fields;
    for (int f = 0; f < layout.n_fields(); ++f) {
        const Side s = layout.field(f).side;
        if ((s == Side::User && user) || (s == Side::Item && item) || (s == Side::Context && context))
            fields.push_back(f);
    }
    return fields;
}

} // namespace

EmbeddingTable EmbeddingTable::make(std::string name, int dim, const Vocabulary& vocab, Rng& rng,
                                    double init_scale) {
    EmbeddingTable t;
    t.name = std::move(name);
    t.dim = dim;
    std::int64_t off = 0;
    for (const auto card : vocab.cardinality) {
        t.field_offset.push_back(off);
        off += card;
    }
    t.rows = off;
    t.values.resize(static_cast<std::size_t>(off * dim));
    t.m.assign(t.values.size(), 0.0);
    t.v.assign(t.values.size(), 0.0);
    t.steps.assign(static_cast<std::size_t>(off), 0);
    Rng stream = rng.child("embedding/" + t.name);
    for (double& x : t.values) x = stream.uniform(-init_scale, init_scale);
    return t;
}

void EmbeddingTable::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write embedding table: " + path.string());
    const char magic[8] = {'C', 'S', 'T', 'W', 'A', 'E', 'B', '1'};
    out.write(magic, 8);
    const auto nf = static_cast<std::int64_t>(field_offset.size());
    const auto d64 = static_cast<std::int64_t>(dim);
    out.write(reinterpret_cast<const char*>(&d64), 8);
    out.write(reinterpret_cast<const char*>(&rows), 8);
    out.write(reinterpret_cast<const char*>(&nf), 8);
    out.write(reinterpret_cast<const char*>(field_offset.data()), nf * 8);
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(double)));
    if (!out) throw DataError("short write on embedding table: " + path.string());
}

EmbeddingTable EmbeddingTable::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open embedding table: " + path.string());
    char magic[8];
    in.read(magic, 8);
    if (!in || std::string_view(magic, 8) != "CSTWAEB1")
        throw DataError("bad embedding table header: " + path.string());
    EmbeddingTable t;
    std::int64_t d64 = 0, nf = 0;
    in.read(reinterpret_cast<char*>(&d64), 8);
    in.read(reinterpret_cast<char*>(&t.rows), 8);
    in.read(reinterpret_cast<char*>(&nf), 8);
    t.dim = static_cast<int>(d64);
    t.field_offset.resize(static_cast<std::size_t>(nf));
    in.read(reinterpret_cast<char*>(t.field_offset.data()), nf * 8);
    t.values.resize(static_cast<std::size_t>(t.rows * t.dim));
    in.read(reinterpret_cast<char*>(t.values.data()),
            static_cast<std::streamsize>(t.values.size() * sizeof(double)));
    if (!in) throw DataError("truncated embedding table: " + path.string());
    t.m.assign(t.values.size(), 0.0);
    t.v.assign(t.values.size(), 0.0);
    t.steps.assign(static_cast<std::size_t>(t.rows), 0);
    return t;
}

Matrix lookup_concat(const EmbeddingTable& table, const Dataset& data,
                     std::span<const std::size_t> batch_rows, const FieldLayout& layout,
                     bool user, bool item, bool context) {
    const auto fields = selected_fields(layout, user, item, context);
    const int d = table.dim;
    Matrix out(static_cast<Index>(batch_rows.size()), static_cast<Index>(fields.size()) * d);
    for (std::size_t b = 0; b < batch_rows.size(); ++b) {
        const auto xs = data.row(batch_rows[b]);
        double* orow = out.row(static_cast<Index>(b));
        for (std::size_t fi = 0; fi < fields.size(); ++fi) {
            const int f = fields[fi];
            const std::int32_t idx = xs[static_cast<std::size_t>(f)];
            const std::int64_t r = table.row_of(f, idx);
            if (r < 0 || r >= table.rows)
                throw NumericError("embedding lookup out of bounds: field " + layout.field(f).name);
            const double* src = table.values.data() + r * d;
            for (int k = 0; k < d; ++k) orow[fi * static_cast<std::size_t>(d) + static_cast<std::size_t>(k)] = src[k];
        }
    }
    return out;
}

void RowGrads::reset(int d) {
    dim = d;
    rows.clear();
    g.clear();
    slot.clear();
}

void RowGrads::add(std::int64_t row, std::span<const double> grad) {
    auto [it, fresh] = slot.try_emplace(row, rows.size());
    if (fresh) {
        rows.push_back(row);
        g.resize(rows.size() * static_cast<std::size_t>(dim), 0.0);
    }
    double* dst = g.data() + it->second * static_cast<std::size_t>(dim);
    for (int k = 0; k < dim; ++k) dst[k] += grad[static_cast<std::size_t>(k)];
}

void accumulate_lookup_grads(const EmbeddingTable& table, const Dataset& data,
                             std::span<const std::size_t> batch_rows, const FieldLayout& layout,
                             bool user, bool item, bool context, const Matrix& dout, RowGrads& acc) {
    const auto fields = selected_fields(layout, user, item, context);
    const int d = table.dim;
    if (dout.cols != static_cast<Index>(fields.size()) * d ||
        dout.rows != static_cast<Index>(batch_rows.size()))
        throw ShapeError("accumulate_lookup_grads: gradient shape does not match lookup output");
    if (acc.dim == 0) acc.reset(d);
    for (std::size_t b = 0; b < batch_rows.size(); ++b) {
        const auto xs = data.row(batch_rows[b]);
        const double* drow = dout.row(static_cast<Index>(b));
        for (std::size_t fi = 0; fi < fields.size(); ++fi) {
            const int f = fields[fi];
            const std::int64_t r = table.row_of(f, xs[static_cast<std::size_t>(f)]);
            acc.add(r, {drow + fi * static_cast<std::size_t>(d), static_cast<std::size_t>(d)});
        }
    }
}

void scatter_grad(EmbeddingTable& table, const RowGrads& acc, const nn::AdamConfig& cfg) {
    for (std::size_t s = 0; s < acc.rows.size(); ++s) {
        const std::int64_t r = acc.rows[s];
        auto& step = table.steps[static_cast<std::size_t>(r)];
        ++step;
        const std::size_t off = static_cast<std::size_t>(r) * static_cast<std::size_t>(table.dim);
        nn::adam_update({table.values.data() + off, static_cast<std::size_t>(table.dim)},
                        acc.grad_of(s),
                        {table.m.data() + off, static_cast<std::size_t>(table.dim)},
                        {table.v.data() + off, static_cast<std::size_t>(table.dim)}, step, cfg, true);
    }
}

} // namespace cstwa::feat
