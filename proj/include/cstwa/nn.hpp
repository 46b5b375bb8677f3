#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cstwa/matrix.hpp"
#include "cstwa/rng.hpp"

namespace cstwa::nn {

enum class Act { None, Relu };
enum class Mode { Train, Eval };

struct AdamConfig {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double l2 = 0.0;
};

// One affine layer's weights, gradients-to-apply and Adam state.
struct ParamBlock {
    Matrix w;               // in x out
    std::vector<double> b;  // out
    Matrix mw, vw;
    std::vector<double> mb, vb;
    std::int64_t step = 0;

    ParamBlock() = default;
    ParamBlock(Index in, Index out);
    Index in_dim() const { return w.rows; }
    Index out_dim() const { return w.cols; }
};

struct MlpSpec {
    std::vector<Index> dims;       // input .. output
    std::vector<double> dropout;   // one rate per layer, each in [0,1)
    std::vector<Act> acts;         // one activation per layer
    bool sigmoid_output = false;

    Index n_layers() const { return static_cast<Index>(dims.size()) - 1; }
    void validate() const;

    static MlpSpec tower(Index in, std::span<const Index> hidden, std::span<const double> dropout);
    static MlpSpec head(Index in, Index out, bool sigmoid);
};

struct Mlp {
    MlpSpec spec;
    std::vector<ParamBlock> layers;

    static Mlp make(MlpSpec spec, Rng& rng);  // Xavier-uniform weights, zero bias
    std::size_t param_count() const;
    void fill(double w_value, double b_value);  // tests
};

struct MlpGrads {
    std::vector<Matrix> gw;
    std::vector<std::vector<double>> gb;
    void init_like(const Mlp& net);
    void zero();
};

// Everything the backward pass needs; one entry per layer.
struct MlpCache {
    Matrix input;
    std::vector<Matrix> x;     // layer inputs (x[0] == input)
    std::vector<Matrix> pre;   // pre-activation z
    std::vector<Matrix> mask;  // dropout mask (scale baked in); empty when inactive
    Matrix output;             // after optional output sigmoid
};

Matrix affine_forward(const Matrix& x, const ParamBlock& p);
Matrix activation_forward(const Matrix& x, Act kind);
Matrix sigmoid(const Matrix& x);

// Inverted dropout: survivors scaled by 1/(1-rate) so eval is an identity.
// mask entries are 0 or 1/(1-rate).
std::pair<Matrix, Matrix> dropout_forward(const Matrix& x, double rate, Rng& rng, Mode mode);

Matrix mlp_forward(const Mlp& net, const Matrix& x, Mode mode, Rng& rng, MlpCache* cache);

// Returns dx; writes parameter gradients into grads (accumulating).
Matrix mlp_backward(const Mlp& net, const MlpCache& cache, const Matrix& dy, MlpGrads& grads);

// Coupled L2 on weights (not biases), then bias-corrected Adam. Aborts on
// non-finite gradient entries.
void adam_update(std::span<double> w, std::span<const double> g, std::span<double> m,
                 std::span<double> v, std::int64_t step, const AdamConfig& cfg, bool weight_decay);
void adam_step(ParamBlock& p, const Matrix& gw, std::span<const double> gb, const AdamConfig& cfg);
void adam_step(Mlp& net, const MlpGrads& grads, const AdamConfig& cfg);

// Central finite differences against analytic gradients already stored in
// `grads`; returns max over scalars of |a-n| / max(1e-8, |a|+|n|).
struct ParamView {
    std::string name;
    std::span<double> w;
    std::span<const double> g;
};
double grad_check(const std::function<double()>& loss, std::span<const ParamView> params, double eps);

double xavier_limit(Index fan_in, Index fan_out);

} // namespace cstwa::nn
