#include "cstwa/structure.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace cstwa::sm {

void StructureConfig::validate() const {
    if (k < 1) throw ConfigError("structure k must be >= 1");
    if (layers < 0) throw ConfigError("structure layers must be >= 0");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("structure alpha must be in [0,1]");
}

void EntityMap::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write entity map: " + path.string());
    out << feat::side_name(side) << "," << n << "," << l << "\n";
    for (std::int32_t e = 0; e < n; ++e) {
        out << e;
        for (const auto idx : of(e)) out << "," << idx;
        out << "\n";
    }
}

EntityMap EntityMap::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open entity map: " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty entity map: " + path.string());
    std::stringstream hs(line);
    std::string side_s, n_s, l_s;
    std::getline(hs, side_s, ',');
    std::getline(hs, n_s, ',');
    std::getline(hs, l_s);
    EntityMap map;
    map.side = feat::parse_side(side_s);
    map.n = static_cast<std::int32_t>(std::stol(n_s));
    map.l = static_cast<int>(std::stol(l_s));
    map.tuple.assign(static_cast<std::size_t>(map.n) * static_cast<std::size_t>(map.l), 0);
    for (std::int32_t e = 0; e < map.n; ++e) {
        if (!std::getline(in, line)) throw DataError("truncated entity map: " + path.string());
        std::stringstream ss(line);
        std::string cell;
        std::getline(ss, cell, ',');
        if (std::stol(cell) != e) throw DataError("entity map rows out of order: " + path.string());
        for (int f = 0; f < map.l; ++f) {
            if (!std::getline(ss, cell, ',')) throw DataError("short entity map row: " + path.string());
            map.tuple[static_cast<std::size_t>(e) * static_cast<std::size_t>(map.l) + static_cast<std::size_t>(f)] =
                static_cast<std::int32_t>(std::stol(cell));
        }
    }
    return map;
}

EntityMap build_entity_map(const feat::Dataset& data, const feat::FieldLayout& layout,
                           const feat::Vocabulary& vocab, feat::Side side) {
    const auto [begin, end] = layout.side_range(side);
    const int id_field = side == feat::Side::User ? layout.user_id_field : layout.item_id_field;
    EntityMap map;
    map.side = side;
    map.l = end - begin;
    map.n = vocab.cardinality[static_cast<std::size_t>(id_field)];
    map.tuple.assign(static_cast<std::size_t>(map.n) * static_cast<std::size_t>(map.l), 0);
    std::vector<char> seen(static_cast<std::size_t>(map.n), 0);
    seen[0] = 1;  // OOV entity keeps the all-OOV tuple
    for (std::size_t r = 0; r < data.size(); ++r) {
        const auto xs = data.row(r);
        const std::int32_t e = xs[static_cast<std::size_t>(id_field)];
        if (seen[static_cast<std::size_t>(e)]) continue;
        seen[static_cast<std::size_t>(e)] = 1;
        for (int f = begin; f < end; ++f)
            map.tuple[static_cast<std::size_t>(e) * static_cast<std::size_t>(map.l) +
                      static_cast<std::size_t>(f - begin)] = xs[static_cast<std::size_t>(f)];
    }
    return map;
}

void RepMatrix::init_optimizer_state() {
    m1 = Matrix(values.rows, values.cols);
    m2 = Matrix(values.rows, values.cols);
    steps.assign(static_cast<std::size_t>(values.rows), 0);
}

RepMatrix assemble_reps(const feat::EmbeddingTable& table, const EntityMap& entities,
                        const feat::FieldLayout& layout) {
    const auto [begin, end] = layout.side_range(entities.side);
    if (end - begin != entities.l)
        throw ShapeError("assemble_reps: entity map arity does not match layout side");
    const int d = table.dim;
    RepMatrix rep;
    rep.values = Matrix(entities.n, static_cast<Index>(entities.l) * d);
    for (std::int32_t e = 0; e < entities.n; ++e) {
        const auto tuple = entities.of(e);
        double* orow = rep.values.row(e);
        for (int f = 0; f < entities.l; ++f) {
            const std::int64_t row = table.row_of(begin + f, tuple[static_cast<std::size_t>(f)]);
            if (row < 0 || row >= table.rows)
                throw NumericError("assemble_reps: entity " + std::to_string(e) +
                                   " has out-of-range feature index");
            const double* src = table.values.data() + row * d;
            for (int k = 0; k < d; ++k) orow[f * d + k] = src[k];
        }
    }
    return rep;
}

SparseGraph topk_similarity_graph(const Matrix& reps, int k,
                                  const std::function<void(std::int64_t)>& on_zero_row) {
    if (k < 1) throw ConfigError("topk_similarity_graph: k must be >= 1");
    constexpr std::int64_t kBlock = 256;  // rows scored per dense block
    const std::int64_t n = reps.rows;

    Matrix unit(n, reps.cols);  // rows scaled to unit norm; zero rows stay zero
    std::vector<char> zero_row(static_cast<std::size_t>(n), 0);
    for (std::int64_t i = 0; i < n; ++i) {
        double s = 0.0;
        const double* row = reps.row(i);
        for (Index c = 0; c < reps.cols; ++c) s += row[c] * row[c];
        if (s == 0.0) {
            zero_row[static_cast<std::size_t>(i)] = 1;
            if (on_zero_row) on_zero_row(i);
            continue;
        }
        const double inv = 1.0 / std::sqrt(s);
        double* urow = unit.row(i);
        for (Index c = 0; c < reps.cols; ++c) urow[c] = row[c] * inv;
    }

    SparseGraph g;
    g.n = n;
    g.k = k;
    g.row_ptr.reserve(static_cast<std::size_t>(n) + 1);
    g.row_ptr.push_back(0);

    std::vector<std::int64_t> cand;
    cand.reserve(static_cast<std::size_t>(n));
    std::vector<std::pair<std::int32_t, double>> picked;
    for (std::int64_t lo = 0; lo < n; lo += kBlock) {
        const std::int64_t hi = std::min(lo + kBlock, n);
        Matrix block(hi - lo, reps.cols);
        for (std::int64_t i = lo; i < hi; ++i)
            std::copy_n(unit.row(i), reps.cols, block.row(i - lo));
        const Matrix scores = matmul_nt(block, unit);  // cosine similarities

        for (std::int64_t i = lo; i < hi; ++i) {
            if (zero_row[static_cast<std::size_t>(i)]) {
                g.row_ptr.push_back(static_cast<std::int64_t>(g.col.size()));
                continue;
            }
            const double* srow = scores.row(i - lo);
            cand.clear();
            for (std::int64_t j = 0; j < n; ++j)
                if (j != i && srow[j] > 0.0) cand.push_back(j);
            const auto keep = std::min<std::size_t>(static_cast<std::size_t>(k), cand.size());
            auto by_score = [srow](std::int64_t a, std::int64_t b) {
                if (srow[a] != srow[b]) return srow[a] > srow[b];
                return a < b;  // tie: smaller column index first
            };
            std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(keep), cand.end(),
                              by_score);
            picked.clear();
            for (std::size_t t = 0; t < keep; ++t)
                picked.emplace_back(static_cast<std::int32_t>(cand[t]), srow[cand[t]]);
            std::sort(picked.begin(), picked.end(),
                      [](const auto& a, const auto& b) { return a.first < b.first; });
            for (const auto& [j, s] : picked) {
                g.col.push_back(j);
                g.w.push_back(s);
            }
            g.row_ptr.push_back(static_cast<std::int64_t>(g.col.size()));
        }
    }
    return g;
}

Matrix ema_blend(const Matrix& fresh, const Matrix& prev, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("ema_blend alpha must be in [0,1]");
    return blend(alpha, fresh, 1.0 - alpha, prev);
}

void epoch_refresh(RepMatrix& r, const SparseGraph& g, const StructureConfig& cfg) {
    cfg.validate();
    Matrix fresh = propagate(g, r.values, cfg.layers);
    r.values = ema_blend(fresh, r.values, cfg.alpha);
}

void scatter_grad(RepMatrix& r, const feat::RowGrads& acc, const nn::AdamConfig& cfg) {
    if (r.steps.empty()) throw NumericError("scatter_grad: representation matrix is not trainable");
    const auto dim = static_cast<std::size_t>(r.dim());
    if (acc.dim != static_cast<int>(dim)) throw ShapeError("scatter_grad: row gradient width mismatch");
    for (std::size_t s = 0; s < acc.rows.size(); ++s) {
        const auto row = static_cast<std::size_t>(acc.rows[s]);
        ++r.steps[row];
        nn::adam_update({r.values.v.data() + row * dim, dim}, acc.grad_of(s),
                        {r.m1.v.data() + row * dim, dim}, {r.m2.v.data() + row * dim, dim},
                        r.steps[row], cfg, true);
    }
}

} // namespace cstwa::sm
