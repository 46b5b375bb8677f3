#include "cstwa/graph.hpp"

#include <cmath>
#include <fstream>
#include <string>

namespace cstwa::sm {

SparseGraph SparseGraph::empty(std::int64_t n) {
    SparseGraph g;
    g.n = n;
    g.row_ptr.assign(static_cast<std::size_t>(n) + 1, 0);
    return g;
}

SparseGraph normalize_graph(const SparseGraph& g) {
    if (g.normalized) throw NumericError("normalize_graph: graph is already normalized");
    std::vector<double> deg(static_cast<std::size_t>(g.n), 0.0);
    for (std::int64_t i = 0; i < g.n; ++i)
        for (auto e = g.row_ptr[static_cast<std::size_t>(i)]; e < g.row_ptr[static_cast<std::size_t>(i) + 1]; ++e)
            deg[static_cast<std::size_t>(i)] += g.w[static_cast<std::size_t>(e)];

    SparseGraph out;
    out.n = g.n;
    out.k = g.k;
    out.normalized = true;
    out.row_ptr.reserve(static_cast<std::size_t>(g.n) + 1);
    out.row_ptr.push_back(0);
    for (std::int64_t i = 0; i < g.n; ++i) {
        const double di = deg[static_cast<std::size_t>(i)];
        for (auto e = g.row_ptr[static_cast<std::size_t>(i)]; e < g.row_ptr[static_cast<std::size_t>(i) + 1]; ++e) {
            const auto j = g.col[static_cast<std::size_t>(e)];
            const double dj = deg[static_cast<std::size_t>(j)];
            if (di <= 0.0 || dj <= 0.0) continue;
            out.col.push_back(j);
            out.w.push_back(g.w[static_cast<std::size_t>(e)] / std::sqrt(di * dj));
        }
        out.row_ptr.push_back(static_cast<std::int64_t>(out.col.size()));
    }
    return out;
}

Matrix propagate(const SparseGraph& g, const Matrix& feats, int layers) {
    if (g.n != feats.rows)
        throw ShapeError("propagate: graph has " + std::to_string(g.n) + " nodes vs " +
                         std::to_string(feats.rows) + " feature rows");
    if (layers <= 0) return feats;
    Matrix cur = feats;
    for (int l = 0; l < layers; ++l) {
        Matrix next(cur.rows, cur.cols);
        for (std::int64_t i = 0; i < g.n; ++i) {
            double* orow = next.row(i);
            for (auto e = g.row_ptr[static_cast<std::size_t>(i)]; e < g.row_ptr[static_cast<std::size_t>(i) + 1]; ++e) {
                const double wij = g.w[static_cast<std::size_t>(e)];
                const double* jrow = cur.row(g.col[static_cast<std::size_t>(e)]);
                for (Index c = 0; c < cur.cols; ++c) orow[c] += wij * jrow[c];
            }
        }
        cur = std::move(next);
    }
    return cur;
}

void save_graph(const SparseGraph& g, std::uint64_t vocab_checksum,
                const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write graph cache: " + path.string());
    const char magic[8] = {'C', 'S', 'T', 'W', 'A', 'G', 'R', '1'};
    out.write(magic, 8);
    const std::int64_t k64 = g.k;
    const std::int64_t norm = g.normalized ? 1 : 0;
    const std::int64_t nnz = g.nnz();
    out.write(reinterpret_cast<const char*>(&g.n), 8);
    out.write(reinterpret_cast<const char*>(&k64), 8);
    out.write(reinterpret_cast<const char*>(&nnz), 8);
    out.write(reinterpret_cast<const char*>(&norm), 8);
    out.write(reinterpret_cast<const char*>(&vocab_checksum), 8);
    out.write(reinterpret_cast<const char*>(g.row_ptr.data()),
              static_cast<std::streamsize>(g.row_ptr.size() * 8));
    out.write(reinterpret_cast<const char*>(g.col.data()),
              static_cast<std::streamsize>(g.col.size() * 4));
    out.write(reinterpret_cast<const char*>(g.w.data()),
              static_cast<std::streamsize>(g.w.size() * 8));
    if (!out) throw DataError("short write on graph cache: " + path.string());
}

SparseGraph load_graph(const std::filesystem::path& path, std::uint64_t* vocab_checksum) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open graph cache: " + path.string());
    char magic[8];
    in.read(magic, 8);
    if (!in || std::string_view(magic, 8) != "CSTWAGR1")
        throw DataError("bad graph cache header: " + path.string());
    SparseGraph g;
    std::int64_t k64 = 0, nnz = 0, norm = 0;
    std::uint64_t checksum = 0;
    in.read(reinterpret_cast<char*>(&g.n), 8);
    in.read(reinterpret_cast<char*>(&k64), 8);
    in.read(reinterpret_cast<char*>(&nnz), 8);
    in.read(reinterpret_cast<char*>(&norm), 8);
    in.read(reinterpret_cast<char*>(&checksum), 8);
    g.k = static_cast<int>(k64);
    g.normalized = norm != 0;
    g.row_ptr.resize(static_cast<std::size_t>(g.n) + 1);
    g.col.resize(static_cast<std::size_t>(nnz));
    g.w.resize(static_cast<std::size_t>(nnz));
    in.read(reinterpret_cast<char*>(g.row_ptr.data()), static_cast<std::streamsize>(g.row_ptr.size() * 8));
    in.read(reinterpret_cast<char*>(g.col.data()), static_cast<std::streamsize>(g.col.size() * 4));
    in.read(reinterpret_cast<char*>(g.w.data()), static_cast<std::streamsize>(g.w.size() * 8));
    if (!in) throw DataError("truncated graph cache: " + path.string());
    if (vocab_checksum) *vocab_checksum = checksum;
    return g;
}

} // namespace cstwa::sm
