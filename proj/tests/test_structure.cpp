#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "cstwa/structure.hpp"

using namespace cstwa;
using namespace cstwa::sm;

namespace {

Matrix make(Index r, Index c, std::initializer_list<double> vals) {
    Matrix m(r, c);
    std::copy(vals.begin(), vals.end(), m.v.begin());
    return m;
}

SparseGraph graph_from_dense(const Matrix& dense, bool normalized = false) {
    SparseGraph g;
    g.n = dense.rows;
    g.normalized = normalized;
    g.row_ptr.push_back(0);
    for (Index i = 0; i < dense.rows; ++i) {
        for (Index j = 0; j < dense.cols; ++j)
            if (dense.at(i, j) != 0.0) {
                g.col.push_back(static_cast<std::int32_t>(j));
                g.w.push_back(dense.at(i, j));
            }
        g.row_ptr.push_back(static_cast<std::int64_t>(g.col.size()));
    }
    return g;
}

Matrix dense_of(const SparseGraph& g) {
    Matrix d(g.n, g.n);
    for (std::int64_t i = 0; i < g.n; ++i)
        for (auto e = g.row_ptr[static_cast<std::size_t>(i)]; e < g.row_ptr[static_cast<std::size_t>(i) + 1]; ++e)
            d.at(i, g.col[static_cast<std::size_t>(e)]) = g.w[static_cast<std::size_t>(e)];
    return d;
}

// brute-force all-pairs oracle: exact cosine, negatives zeroed, top-k by
// (score desc, j asc), no self edges
Matrix brute_force_topk(const Matrix& reps, int k) {
    const std::int64_t n = reps.rows;
    Matrix out(n, n);
    for (std::int64_t i = 0; i < n; ++i) {
        std::vector<std::pair<double, std::int64_t>> scored;
        double ni = 0;
        for (Index c = 0; c < reps.cols; ++c) ni += reps.at(i, c) * reps.at(i, c);
        if (ni == 0) continue;
        for (std::int64_t j = 0; j < n; ++j) {
            if (j == i) continue;
            double nj = 0, dot = 0;
            for (Index c = 0; c < reps.cols; ++c) {
                nj += reps.at(j, c) * reps.at(j, c);
                dot += reps.at(i, c) * reps.at(j, c);
            }
            if (nj == 0) continue;
            const double cos = dot / std::sqrt(ni * nj);
            if (cos > 0) scored.emplace_back(cos, j);
        }
        std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        for (std::size_t t = 0; t < std::min<std::size_t>(scored.size(), static_cast<std::size_t>(k)); ++t)
            out.at(i, scored[t].second) = scored[t].first;
    }
    return out;
}

// dense normalization oracle: D^{-1/2} G D^{-1/2} with 0/0 := 0
Matrix dense_normalize(const Matrix& g) {
    std::vector<double> deg(static_cast<std::size_t>(g.rows), 0.0);
    for (Index i = 0; i < g.rows; ++i)
        for (Index j = 0; j < g.cols; ++j) deg[static_cast<std::size_t>(i)] += g.at(i, j);
    Matrix out(g.rows, g.cols);
    for (Index i = 0; i < g.rows; ++i)
        for (Index j = 0; j < g.cols; ++j) {
            const double d = deg[static_cast<std::size_t>(i)] * deg[static_cast<std::size_t>(j)];
            out.at(i, j) = (g.at(i, j) != 0.0 && d > 0.0) ? g.at(i, j) / std::sqrt(d) : 0.0;
        }
    return out;
}

} // namespace

TEST_CASE("topk_similarity_graph: worked example, identical vectors, orthogonal reps") {
    const Matrix reps = make(3, 2, {1, 0, 1, 0, 0, 1});
    const SparseGraph g = topk_similarity_graph(reps, 1);
    const Matrix d = dense_of(g);
    CHECK(d.at(0, 1) == doctest::Approx(1.0));
    CHECK(d.at(1, 0) == doctest::Approx(1.0));
    for (Index j = 0; j < 3; ++j) CHECK(d.at(2, j) == 0.0);  // orthogonal: nothing strictly positive
    CHECK(d.at(0, 0) == 0.0);                                // no self edges

    const Matrix ortho = make(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    CHECK(topk_similarity_graph(ortho, 2).nnz() == 0);
}

TEST_CASE("topk_similarity_graph equals the brute-force oracle on random reps") {
    Rng rng(99);
    const std::int64_t n = 300;
    Matrix reps(n, 8);
    for (auto& v : reps.v) v = rng.normal();
    for (const int k : {1, 5, 8}) {
        const SparseGraph g = topk_similarity_graph(reps, k);
        const Matrix oracle = brute_force_topk(reps, k);
        const Matrix got = dense_of(g);
        for (std::int64_t i = 0; i < n; ++i) {
            std::int64_t row_edges = 0;
            for (std::int64_t j = 0; j < n; ++j) {
                const bool edge_o = oracle.at(i, j) != 0.0;
                const bool edge_g = got.at(i, j) != 0.0;
                CHECK(edge_o == edge_g);
                if (edge_g) {
                    CHECK(std::abs(got.at(i, j) - oracle.at(i, j)) < 1e-12);
                    CHECK(got.at(i, j) > 0.0);
                    CHECK(got.at(i, j) <= 1.0 + 1e-12);
                    ++row_edges;
                }
            }
            CHECK(row_edges <= k);
        }
    }
}

TEST_CASE("topk zero-norm rows get no out-edges and are reported") {
    Matrix reps = make(3, 2, {1, 0, 0, 0, 1, 1});
    std::int64_t zero_reports = 0;
    const SparseGraph g = topk_similarity_graph(reps, 2, [&zero_reports](std::int64_t) { ++zero_reports; });
    CHECK(zero_reports == 1);
    CHECK(g.row_ptr[1] == g.row_ptr[2]);  // row 1 empty
}

TEST_CASE("normalize_graph: worked examples and the dense oracle") {
    {
        const SparseGraph g = graph_from_dense(make(2, 2, {0, 2, 2, 0}));
        const Matrix norm = dense_of(normalize_graph(g));
        CHECK(norm.at(0, 1) == doctest::Approx(1.0));
        CHECK(norm.at(1, 0) == doctest::Approx(1.0));
    }
    {
        const SparseGraph empty = SparseGraph::empty(4);
        CHECK(normalize_graph(empty).nnz() == 0);
    }
    {
        // asymmetric: the only edge points at a zero-degree node and is dropped
        const SparseGraph g = graph_from_dense(make(2, 2, {0, 1, 0, 0}));
        CHECK(normalize_graph(g).nnz() == 0);
    }
    {
        Rng rng(5);
        for (int trial = 0; trial < 20; ++trial) {
            Matrix dense(12, 12);
            for (Index i = 0; i < 12; ++i)
                for (Index j = 0; j < 12; ++j)
                    if (i != j && rng.next_double() < 0.2) dense.at(i, j) = rng.next_double();
            const SparseGraph g = graph_from_dense(dense);
            const Matrix got = dense_of(normalize_graph(g));
            const Matrix expect = dense_normalize(dense);
            for (std::size_t i = 0; i < got.size(); ++i) CHECK(std::abs(got.v[i] - expect.v[i]) < 1e-12);
        }
    }
    {
        SparseGraph g = graph_from_dense(make(2, 2, {0, 2, 2, 0}));
        const SparseGraph once = normalize_graph(g);
        CHECK_THROWS_AS(static_cast<void>(normalize_graph(once)), NumericError);
    }
}

TEST_CASE("propagate: identity at L=0, 2-cycle swap, empty graph, dense oracle, linearity") {
    const SparseGraph cyc = graph_from_dense(make(2, 2, {0, 1, 1, 0}), true);
    const Matrix r = make(2, 2, {1, 2, 3, 4});
    CHECK(propagate(cyc, r, 0).v == r.v);

    const Matrix swapped = propagate(cyc, r, 1);
    CHECK(swapped.at(0, 0) == 3.0);
    CHECK(swapped.at(0, 1) == 4.0);
    CHECK(swapped.at(1, 0) == 1.0);
    CHECK(swapped.at(1, 1) == 2.0);

    const SparseGraph empty = SparseGraph::empty(2);
    const Matrix zeros = propagate(empty, r, 1);
    for (const double v : zeros.v) CHECK(v == 0.0);

    Rng rng(3);
    Matrix dense(10, 10);
    for (auto& v : dense.v) v = rng.next_double() < 0.3 ? rng.next_double() : 0.0;
    const SparseGraph g = graph_from_dense(dense, true);
    Matrix x(10, 4), y(10, 4);
    for (auto& v : x.v) v = rng.normal();
    for (auto& v : y.v) v = rng.normal();
    for (const int layers : {1, 2, 3}) {
        // dense matmul oracle
        Matrix expect = x;
        for (int l = 0; l < layers; ++l) expect = matmul(dense, expect);
        const Matrix got = propagate(g, x, layers);
        for (std::size_t i = 0; i < got.size(); ++i) CHECK(std::abs(got.v[i] - expect.v[i]) < 1e-12);

        // linearity: propagate(aX + bY) == a propagate(X) + b propagate(Y)
        const Matrix mix = blend(0.7, x, -1.3, y);
        const Matrix lhs = propagate(g, mix, layers);
        const Matrix rhs = blend(0.7, propagate(g, x, layers), -1.3, propagate(g, y, layers));
        for (std::size_t i = 0; i < lhs.size(); ++i) CHECK(std::abs(lhs.v[i] - rhs.v[i]) < 1e-10);
    }

    CHECK_THROWS_AS(static_cast<void>(propagate(cyc, Matrix(3, 2), 1)), ShapeError);
}

TEST_CASE("ema_blend: endpoints, worked value, convexity bounds") {
    const Matrix fresh = make(2, 2, {1, 1, 1, 1});
    const Matrix prev = make(2, 2, {0, 0.5, -1, 2});
    CHECK(ema_blend(fresh, prev, 1.0).v == fresh.v);
    CHECK(ema_blend(fresh, prev, 0.0).v == prev.v);
    CHECK(ema_blend(fresh, prev, 0.3).at(0, 0) == doctest::Approx(0.3));
    const Matrix mid = ema_blend(fresh, prev, 0.42);
    for (std::size_t i = 0; i < mid.size(); ++i) {
        CHECK(mid.v[i] >= std::min(fresh.v[i], prev.v[i]) - 1e-15);
        CHECK(mid.v[i] <= std::max(fresh.v[i], prev.v[i]) + 1e-15);
    }
    CHECK_THROWS_AS(static_cast<void>(ema_blend(fresh, Matrix(3, 3), 0.5)), ShapeError);
}

TEST_CASE("epoch_refresh: disabled at alpha 0, empty-graph shrink, duplicate-row fixed point") {
    StructureConfig cfg{.k = 8, .layers = 1, .alpha = 0.0};
    RepMatrix r;
    r.values = make(2, 2, {1, 2, 3, 4});
    r.init_optimizer_state();
    r.m1.at(0, 0) = 0.5;

    const SparseGraph cyc = graph_from_dense(make(2, 2, {0, 1, 1, 0}), true);
    epoch_refresh(r, cyc, cfg);
    CHECK(r.values.v == make(2, 2, {1, 2, 3, 4}).v);

    cfg.alpha = 0.3;
    const SparseGraph empty = SparseGraph::empty(2);
    epoch_refresh(r, empty, cfg);
    CHECK(r.values.at(0, 0) == doctest::Approx(0.7));
    CHECK(r.values.at(1, 1) == doctest::Approx(0.7 * 4));
    CHECK(r.m1.at(0, 0) == 0.5);  // Adam moments survive the refresh

    // two duplicate rows joined by a 2-cycle: propagation maps the matrix to
    // itself, so the blend is a fixed point
    RepMatrix dup;
    dup.values = make(2, 3, {1, 2, 3, 1, 2, 3});
    dup.init_optimizer_state();
    const Matrix before = dup.values;
    epoch_refresh(dup, cyc, cfg);
    for (std::size_t i = 0; i < before.size(); ++i)
        CHECK(dup.values.v[i] == doctest::Approx(before.v[i]));
}

TEST_CASE("graph cache round-trips losslessly") {
    Rng rng(13);
    Matrix reps(40, 6);
    for (auto& v : reps.v) v = rng.normal();
    const SparseGraph g = normalize_graph(topk_similarity_graph(reps, 4));
    const auto path = std::filesystem::temp_directory_path() / "cstwa_graph_test.bin";
    save_graph(g, 0xabcdef1234567890ULL, path);
    std::uint64_t checksum = 0;
    const SparseGraph loaded = load_graph(path, &checksum);
    CHECK(checksum == 0xabcdef1234567890ULL);
    CHECK(loaded.n == g.n);
    CHECK(loaded.k == g.k);
    CHECK(loaded.normalized == g.normalized);
    CHECK(loaded.row_ptr == g.row_ptr);
    CHECK(loaded.col == g.col);
    CHECK(loaded.w == g.w);
    std::filesystem::remove(path);
}

TEST_CASE("assemble_reps: concatenation, zero table, row independence") {
    // layout: two user fields (id + extra), one item id field
    std::vector<feat::FieldSpec> specs = {{"user_id", feat::Side::User, true},
                                          {"user_grp", feat::Side::User, false},
                                          {"item_id", feat::Side::Item, true}};
    const feat::FieldLayout layout = feat::make_layout(specs);
    feat::Vocabulary vocab;
    vocab.cardinality = {3, 2, 2};  // user ids {0,1,2}, groups {0,1}, items {0,1}
    vocab.maps.resize(3);
    vocab.values = {{"", "a", "b"}, {"", "g"}, {"", "x"}};

    Rng rng(7);
    feat::EmbeddingTable table = feat::EmbeddingTable::make("T", 2, vocab, rng);
    for (std::int64_t r = 0; r < table.rows; ++r) {
        table.row(r)[0] = static_cast<double>(r * 10 + 1);
        table.row(r)[1] = static_cast<double>(r * 10 + 2);
    }

    EntityMap users;
    users.side = feat::Side::User;
    users.n = 3;
    users.l = 2;
    users.tuple = {0, 0, 1, 1, 2, 0};  // entity e -> (user_id idx, user_grp idx)

    const RepMatrix rep = assemble_reps(table, users, layout);
    CHECK(rep.values.rows == 3);
    CHECK(rep.values.cols == 4);
    // entity 1: user_id row = offset0 + 1 = 1, user_grp row = offset1 + 1 = 4
    CHECK(rep.values.at(1, 0) == 11.0);
    CHECK(rep.values.at(1, 1) == 12.0);
    CHECK(rep.values.at(1, 2) == 41.0);
    CHECK(rep.values.at(1, 3) == 42.0);

    // rows depend only on their own entity tuple
    EntityMap shuffled = users;
    std::swap(shuffled.tuple[0 * 2 + 0], shuffled.tuple[2 * 2 + 0]);
    const RepMatrix rep2 = assemble_reps(table, shuffled, layout);
    CHECK(rep2.values.at(1, 0) == rep.values.at(1, 0));

    std::fill(table.values.begin(), table.values.end(), 0.0);
    const RepMatrix zero = assemble_reps(table, users, layout);
    for (const double v : zero.values.v) CHECK(v == 0.0);
}

TEST_CASE("entity map save/load round trip") {
    EntityMap users;
    users.side = feat::Side::User;
    users.n = 3;
    users.l = 2;
    users.tuple = {0, 0, 1, 1, 2, 0};
    const auto path = std::filesystem::temp_directory_path() / "cstwa_entities_test.csv";
    users.save(path);
    const EntityMap loaded = EntityMap::load(path);
    CHECK(loaded.side == users.side);
    CHECK(loaded.n == users.n);
    CHECK(loaded.l == users.l);
    CHECK(loaded.tuple == users.tuple);
    std::filesystem::remove(path);
}
