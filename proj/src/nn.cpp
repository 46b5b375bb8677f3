#include "cstwa/nn.hpp"

#include <cmath>

namespace cstwa::nn {

ParamBlock::ParamBlock(Index in, Index out)
    : w(in, out), b(static_cast<std::size_t>(out), 0.0), mw(in, out), vw(in, out),
      mb(static_cast<std::size_t>(out), 0.0), vb(static_cast<std::size_t>(out), 0.0) {}

void MlpSpec::validate() const {
    if (dims.size() < 2) throw ConfigError("mlp spec needs at least input and output dims");
    const auto layers = static_cast<std::size_t>(n_layers());
    if (dropout.size() != layers) throw ConfigError("mlp spec: dropout rate count must equal layer count");
    if (acts.size() != layers) throw ConfigError("mlp spec: activation count must equal layer count");
    for (const double r : dropout)
        if (!(r >= 0.0 && r < 1.0)) throw ConfigError("dropout rate must be in [0,1)");
}

MlpSpec MlpSpec::tower(Index in, std::span<const Index> hidden, std::span<const double> dropout) {
    MlpSpec s;
    s.dims.push_back(in);
    s.dims.insert(s.dims.end(), hidden.begin(), hidden.end());
    s.dropout.assign(dropout.begin(), dropout.end());
    s.acts.assign(hidden.size(), Act::Relu);
    s.sigmoid_output = false;
    s.validate();
    return s;
}

MlpSpec MlpSpec::head(Index in, Index out, bool sigmoid) {
    MlpSpec s;
    s.dims = {in, out};
    s.dropout = {0.0};
    s.acts = {Act::None};
    s.sigmoid_output = sigmoid;
    s.validate();
    return s;
}

double xavier_limit(Index fan_in, Index fan_out) {
    return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

Mlp Mlp::make(MlpSpec spec, Rng& rng) {
    spec.validate();
    Mlp net;
    net.spec = std::move(spec);
    for (Index l = 0; l < net.spec.n_layers(); ++l) {
        ParamBlock p(net.spec.dims[static_cast<std::size_t>(l)], net.spec.dims[static_cast<std::size_t>(l) + 1]);
        const double limit = xavier_limit(p.in_dim(), p.out_dim());
        for (double& x : p.w.v) x = rng.uniform(-limit, limit);
        net.layers.push_back(std::move(p));
    }
    return net;
}

std::size_t Mlp::param_count() const {
    std::size_t n = 0;
    for (const auto& p : layers) n += p.w.size() + p.b.size();
    return n;
}

void Mlp::fill(double w_value, double b_value) {
    for (auto& p : layers) {
        std::fill(p.w.v.begin(), p.w.v.end(), w_value);
        std::fill(p.b.begin(), p.b.end(), b_value);
    }
}

void MlpGrads::init_like(const Mlp& net) {
    gw.clear();
    gb.clear();
    for (const auto& p : net.layers) {
        gw.emplace_back(p.w.rows, p.w.cols);
        gb.emplace_back(p.b.size(), 0.0);
    }
}

void MlpGrads::zero() {
    for (auto& g : gw) g.zero();
    for (auto& g : gb) std::fill(g.begin(), g.end(), 0.0);
}

Matrix affine_forward(const Matrix& x, const ParamBlock& p) {
    if (x.cols != p.w.rows)
        throw ShapeError("affine_forward: input cols " + std::to_string(x.cols) + " vs weight rows " +
                         std::to_string(p.w.rows));
    Matrix out = matmul(x, p.w);
    add_rowwise_inplace(out, p.b);
    return out;
}

Matrix activation_forward(const Matrix& x, Act kind) {
    if (kind == Act::None) return x;
    Matrix out(x.rows, x.cols);
    for (std::size_t i = 0; i < x.size(); ++i) out.v[i] = x.v[i] > 0.0 ? x.v[i] : 0.0;
    return out;
}

Matrix sigmoid(const Matrix& x) {
    Matrix out(x.rows, x.cols);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double v = x.v[i];
        // stable branch: never exponentiates a large positive argument
        if (v >= 0.0) {
            out.v[i] = 1.0 / (1.0 + std::exp(-v));
        } else {
            const double e = std::exp(v);
            out.v[i] = e / (1.0 + e);
        }
    }
    return out;
}

std::pair<Matrix, Matrix> dropout_forward(const Matrix& x, double rate, Rng& rng, Mode mode) {
    if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must be in [0,1)");
    if (mode == Mode::Eval || rate == 0.0) {
        Matrix mask(x.rows, x.cols, 1.0);
        return {x, std::move(mask)};
    }
    const double scale = 1.0 / (1.0 - rate);
    Matrix mask(x.rows, x.cols);
    Matrix out(x.rows, x.cols);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = rng.next_double() >= rate ? scale : 0.0;
        mask.v[i] = keep;
        out.v[i] = x.v[i] * keep;
    }
    return {std::move(out), std::move(mask)};
}

Matrix mlp_forward(const Mlp& net, const Matrix& x, Mode mode, Rng& rng, MlpCache* cache) {
    if (cache) {
        cache->input = x;
        cache->x.clear();
        cache->pre.clear();
        cache->mask.clear();
    }
    Matrix cur = x;
    for (Index l = 0; l < net.spec.n_layers(); ++l) {
        const auto lu = static_cast<std::size_t>(l);
        if (cache) cache->x.push_back(cur);
        Matrix z = affine_forward(cur, net.layers[lu]);
        if (cache) cache->pre.push_back(z);
        Matrix h = activation_forward(z, net.spec.acts[lu]);
        const double rate = net.spec.dropout[lu];
        if (rate > 0.0 && mode == Mode::Train) {
            auto [dropped, mask] = dropout_forward(h, rate, rng, mode);
            if (cache) cache->mask.push_back(std::move(mask));
            cur = std::move(dropped);
        } else {
            if (cache) cache->mask.emplace_back();
            cur = std::move(h);
        }
    }
    if (net.spec.sigmoid_output) cur = sigmoid(cur);
    if (cache) cache->output = cur;
    return cur;
}

Matrix mlp_backward(const Mlp& net, const MlpCache& cache, const Matrix& dy, MlpGrads& grads) {
    if (grads.gw.size() != net.layers.size()) grads.init_like(net);
    const Index n = net.spec.n_layers();
    if (cache.pre.size() != static_cast<std::size_t>(n))
        throw ShapeError("mlp_backward: cache does not match network depth");
    require_same_shape(dy, cache.output, "mlp_backward dy");

    Matrix d = dy;
    if (net.spec.sigmoid_output) {
        // d/dz sigmoid(z) = p(1-p) with p the cached output
        Matrix dz(d.rows, d.cols);
        for (std::size_t i = 0; i < d.size(); ++i) {
            const double p = cache.output.v[i];
            dz.v[i] = d.v[i] * p * (1.0 - p);
        }
        d = std::move(dz);
    }

    for (Index l = n - 1; l >= 0; --l) {
        const auto lu = static_cast<std::size_t>(l);
        if (!cache.mask[lu].v.empty()) d = hadamard(d, cache.mask[lu]);
        if (net.spec.acts[lu] == Act::Relu) {
            const Matrix& z = cache.pre[lu];
            for (std::size_t i = 0; i < d.size(); ++i)
                if (z.v[i] <= 0.0) d.v[i] = 0.0;
        }
        const Matrix& x = cache.x[lu];
        Matrix gw = matmul_tn(x, d);
        for (std::size_t i = 0; i < gw.size(); ++i) grads.gw[lu].v[i] += gw.v[i];
        for (Index j = 0; j < d.cols; ++j) {
            double s = 0.0;
            for (Index i = 0; i < d.rows; ++i) s += d.at(i, j);
            grads.gb[lu][static_cast<std::size_t>(j)] += s;
        }
        d = matmul_nt(d, net.layers[lu].w);
    }
    return d;
}

void adam_update(std::span<double> w, std::span<const double> g, std::span<double> m,
                 std::span<double> v, std::int64_t step, const AdamConfig& cfg, bool weight_decay) {
    if (w.size() != g.size() || w.size() != m.size() || w.size() != v.size())
        throw ShapeError("adam_update: mismatched array lengths");
    if (!all_finite(g)) throw NumericError("adam_update: non-finite gradient");
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double grad = weight_decay ? g[i] + cfg.l2 * w[i] : g[i];
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad * grad;
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        w[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
}

void adam_step(ParamBlock& p, const Matrix& gw, std::span<const double> gb, const AdamConfig& cfg) {
    require_same_shape(p.w, gw, "adam_step weights");
    if (gb.size() != p.b.size()) throw ShapeError("adam_step: bias gradient length mismatch");
    ++p.step;
    adam_update(p.w.v, gw.v, p.mw.v, p.vw.v, p.step, cfg, true);
    adam_update(p.b, gb, p.mb, p.vb, p.step, cfg, false);
}

void adam_step(Mlp& net, const MlpGrads& grads, const AdamConfig& cfg) {
    for (std::size_t l = 0; l < net.layers.size(); ++l)
        adam_step(net.layers[l], grads.gw[l], grads.gb[l], cfg);
}

double grad_check(const std::function<double()>& loss, std::span<const ParamView> params, double eps) {
    double max_err = 0.0;
    for (const auto& pv : params) {
        for (std::size_t i = 0; i < pv.w.size(); ++i) {
            const double saved = pv.w[i];
            pv.w[i] = saved + eps;
            const double up = loss();
            pv.w[i] = saved - eps;
            const double down = loss();
            pv.w[i] = saved;
            const double numeric = (up - down) / (2.0 * eps);
            const double analytic = pv.g[i];
            const double denom = std::max(1e-8, std::abs(analytic) + std::abs(numeric));
            max_err = std::max(max_err, std::abs(analytic - numeric) / denom);
        }
    }
    return max_err;
}

} // namespace cstwa::nn
