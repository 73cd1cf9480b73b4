#pragma once

#include <span>
#include <string>
#include <vector>

#include "matl/types.hpp"

namespace matl {

enum class Activation { Identity, Relu, LeakyRelu, Sigmoid };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

// Dense layer y = act(x W^T + b), followed by inverted dropout in train mode.
struct LayerSpec {
    int in_dim = 0;
    int out_dim = 0;
    Activation activation = Activation::Identity;
    double slope = 0.01;     // LeakyRelu negative slope
    double dropout_p = 0.0;  // in [0, 1)
};

enum class Mode { Train, Eval };

// Everything backward() needs from one forward() call.
struct ForwardCache {
    std::vector<Matrix> inputs;     // layer inputs
    std::vector<Matrix> activated;  // act(z) before dropout
    std::vector<Matrix> masks;      // dropout masks (already scaled), empty when inactive
    bool valid = false;
};

// Gradient buffers mirroring one network's parameters, plus the gradient
// w.r.t. the most recent backward() input.
struct GradTape {
    std::vector<Matrix> weights;
    std::vector<Vector> biases;
    Matrix input;

    void zero();
};

// A view of one parameter tensor and its gradient, flattened.
struct ParamView {
    std::span<double> value;
    std::span<double> grad;
    bool is_weight = true;
};

class Mlp {
public:
    Mlp() = default;

    // Uniform init in +-sqrt(6 / (in + out)); biases start at zero.
    Mlp(std::vector<LayerSpec> specs, Rng& rng);

    int in_dim() const;
    int out_dim() const;
    std::size_t num_layers() const noexcept { return specs_.size(); }
    const std::vector<LayerSpec>& specs() const noexcept { return specs_; }

    Matrix& weight(std::size_t layer) { return weights_.at(layer); }
    const Matrix& weight(std::size_t layer) const { return weights_.at(layer); }
    Vector& bias(std::size_t layer) { return biases_.at(layer); }
    const Vector& bias(std::size_t layer) const { return biases_.at(layer); }

    // `rng` is required only when some layer has dropout and mode is Train.
    Matrix forward(const Matrix& x, Mode mode, Rng* rng = nullptr, ForwardCache* cache = nullptr) const;

    // Accumulates parameter gradients into `tape` and returns dL/dx.
    Matrix backward(const ForwardCache& cache, const Matrix& upstream, GradTape& tape) const;

    GradTape make_tape() const;
    std::vector<ParamView> params(GradTape& tape);
    std::size_t parameter_count() const;

private:
    std::vector<LayerSpec> specs_;
    std::vector<Matrix> weights_;  // out x in
    std::vector<Vector> biases_;
};

// Gradient reversal: identity forward, -lambda * upstream backward.
Matrix grl_forward(const Matrix& x);
Matrix grl_backward(const Matrix& upstream, double lambda);

struct LossGrad {
    double loss = 0.0;
    Matrix grad;  // dL / d(input)
};

inline constexpr double kProbEps = 1e-7;

// Mean binary cross-entropy over batch x C independent targets. `probs` are
// clamped to [kProbEps, 1 - kProbEps]; clamped entries get zero gradient.
LossGrad bce(const Matrix& probs, const Matrix& targets);

Matrix one_hot(std::span<const int> labels, int classes);

struct SgdConfig {
    double learning_rate = 1e-3;
    double weight_decay = 0.0;
};

// p <- p - lr (g + wd p), then zero the tape.
void sgd_step(Mlp& net, GradTape& tape, const SgdConfig& cfg);
void sgd_step(Matrix& param, Matrix& grad, const SgdConfig& cfg);

}  // namespace matl
