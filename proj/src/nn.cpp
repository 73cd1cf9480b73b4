#include "matl/nn.hpp"

#include <algorithm>
#include <cmath>

#include "matl/errors.hpp"

namespace matl {

namespace {

void apply_activation(Matrix& z, const LayerSpec& spec) {
    switch (spec.activation) {
        case Activation::Identity:
            break;
        case Activation::Relu:
            z = z.cwiseMax(0.0);
            break;
        case Activation::LeakyRelu: {
            const double slope = spec.slope;
            z = z.unaryExpr([slope](double v) { return v > 0.0 ? v : slope * v; });
            break;
        }
        case Activation::Sigmoid:
            z = z.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
            break;
    }
}

// In-place g <- g * act'(.) given the activated output a.
void apply_activation_grad(Matrix& g, const Matrix& a, const LayerSpec& spec) {
    switch (spec.activation) {
        case Activation::Identity:
            break;
        case Activation::Relu:
            g = g.cwiseProduct((a.array() > 0.0).cast<double>().matrix());
            break;
        case Activation::LeakyRelu: {
            // sign(a) == sign(z) because slope > 0
            const double slope = spec.slope;
            g = g.cwiseProduct(a.unaryExpr([slope](double v) { return v > 0.0 ? 1.0 : slope; }));
            break;
        }
        case Activation::Sigmoid:
            g = g.cwiseProduct(a.cwiseProduct((1.0 - a.array()).matrix()));
            break;
    }
}

}  // namespace

std::string to_string(Activation a) {
    switch (a) {
        case Activation::Identity: return "identity";
        case Activation::Relu: return "relu";
        case Activation::LeakyRelu: return "leaky_relu";
        case Activation::Sigmoid: return "sigmoid";
    }
    return "identity";
}

Activation activation_from_string(const std::string& s) {
    if (s == "identity") return Activation::Identity;
    if (s == "relu") return Activation::Relu;
    if (s == "leaky_relu") return Activation::LeakyRelu;
    if (s == "sigmoid") return Activation::Sigmoid;
    throw ValidationError("unknown activation '" + s + "'");
}

void GradTape::zero() {
    for (auto& w : weights) w.setZero();
    for (auto& b : biases) b.setZero();
    input.resize(0, 0);
}

Mlp::Mlp(std::vector<LayerSpec> specs, Rng& rng) : specs_(std::move(specs)) {
    if (specs_.empty()) throw DimensionError("network needs at least one layer");
    for (std::size_t l = 0; l < specs_.size(); ++l) {
        const auto& s = specs_[l];
        if (s.in_dim <= 0 || s.out_dim <= 0) throw DimensionError("layer dims must be positive");
        if (l > 0 && s.in_dim != specs_[l - 1].out_dim) {
            throw DimensionError("layer " + std::to_string(l) + " input does not match previous output");
        }
        if (s.activation == Activation::LeakyRelu && !(s.slope > 0.0)) {
            throw ValidationError("LeakyRelu slope must be positive");
        }
        if (!(s.dropout_p >= 0.0 && s.dropout_p < 1.0)) throw ValidationError("dropout_p must lie in [0, 1)");
        const double limit = std::sqrt(6.0 / static_cast<double>(s.in_dim + s.out_dim));
        std::uniform_real_distribution<double> uni(-limit, limit);
        Matrix w(s.out_dim, s.in_dim);
        for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = uni(rng);
        weights_.push_back(std::move(w));
        biases_.push_back(Vector::Zero(s.out_dim));
    }
}

int Mlp::in_dim() const { return specs_.empty() ? 0 : specs_.front().in_dim; }
int Mlp::out_dim() const { return specs_.empty() ? 0 : specs_.back().out_dim; }

Matrix Mlp::forward(const Matrix& x, Mode mode, Rng* rng, ForwardCache* cache) const {
    if (x.cols() != in_dim()) {
        throw DimensionError("network expects " + std::to_string(in_dim()) + " inputs, got " +
                             std::to_string(x.cols()));
    }
    if (!x.allFinite()) throw ValidationError("non-finite network input");
    if (cache) {
        cache->inputs.clear();
        cache->activated.clear();
        cache->masks.clear();
        cache->valid = false;
    }
    Matrix h = x;
    for (std::size_t l = 0; l < specs_.size(); ++l) {
        const auto& spec = specs_[l];
        if (cache) cache->inputs.push_back(h);
        Matrix z = h * weights_[l].transpose();
        z.rowwise() += biases_[l].transpose();
        apply_activation(z, spec);
        if (cache) cache->activated.push_back(z);
        if (mode == Mode::Train && spec.dropout_p > 0.0) {
            if (!rng) throw StateError("train-mode dropout requires a generator");
            std::bernoulli_distribution keep(1.0 - spec.dropout_p);
            const double scale = 1.0 / (1.0 - spec.dropout_p);
            Matrix mask(z.rows(), z.cols());
            for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(*rng) ? scale : 0.0;
            z = z.cwiseProduct(mask);
            if (cache) cache->masks.push_back(std::move(mask));
        } else if (cache) {
            cache->masks.emplace_back();
        }
        h = std::move(z);
    }
    if (cache) cache->valid = true;
    return h;
}

Matrix Mlp::backward(const ForwardCache& cache, const Matrix& upstream, GradTape& tape) const {
    if (!cache.valid || cache.inputs.size() != specs_.size()) {
        throw StateError("backward called without a cached forward pass");
    }
    if (tape.weights.size() != specs_.size()) tape = make_tape();
    if (upstream.rows() != cache.inputs.front().rows() || upstream.cols() != out_dim()) {
        throw DimensionError("upstream gradient shape does not match network output");
    }
    Matrix g = upstream;
    for (std::size_t l = specs_.size(); l-- > 0;) {
        if (cache.masks[l].size() > 0) g = g.cwiseProduct(cache.masks[l]);
        apply_activation_grad(g, cache.activated[l], specs_[l]);
        tape.weights[l].noalias() += g.transpose() * cache.inputs[l];
        tape.biases[l] += g.colwise().sum().transpose();
        g = g * weights_[l];
    }
    tape.input = g;
    return g;
}

GradTape Mlp::make_tape() const {
    GradTape tape;
    for (std::size_t l = 0; l < specs_.size(); ++l) {
        tape.weights.push_back(Matrix::Zero(weights_[l].rows(), weights_[l].cols()));
        tape.biases.push_back(Vector::Zero(biases_[l].size()));
    }
    return tape;
}

std::vector<ParamView> Mlp::params(GradTape& tape) {
    if (tape.weights.size() != specs_.size()) tape = make_tape();
    std::vector<ParamView> out;
    for (std::size_t l = 0; l < specs_.size(); ++l) {
        out.push_back({std::span<double>(weights_[l].data(), static_cast<std::size_t>(weights_[l].size())),
                       std::span<double>(tape.weights[l].data(), static_cast<std::size_t>(tape.weights[l].size())),
                       true});
        out.push_back({std::span<double>(biases_[l].data(), static_cast<std::size_t>(biases_[l].size())),
                       std::span<double>(tape.biases[l].data(), static_cast<std::size_t>(tape.biases[l].size())),
                       false});
    }
    return out;
}

std::size_t Mlp::parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < specs_.size(); ++l) {
        n += static_cast<std::size_t>(weights_[l].size() + biases_[l].size());
    }
    return n;
}

Matrix grl_forward(const Matrix& x) { return x; }

Matrix grl_backward(const Matrix& upstream, double lambda) { return -lambda * upstream; }

LossGrad bce(const Matrix& probs, const Matrix& targets) {
    if (probs.rows() != targets.rows() || probs.cols() != targets.cols()) {
        throw DimensionError("bce: probability and target shapes differ");
    }
    if (probs.size() == 0) throw DimensionError("bce: empty batch");
    const double norm = 1.0 / static_cast<double>(probs.size());
    LossGrad out;
    out.grad.resize(probs.rows(), probs.cols());
    double total = 0.0;
    for (Eigen::Index i = 0; i < probs.size(); ++i) {
        const double raw = probs.data()[i];
        const double y = targets.data()[i];
        const double p = std::clamp(raw, kProbEps, 1.0 - kProbEps);
        total -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
        const bool clamped = raw < kProbEps || raw > 1.0 - kProbEps;
        out.grad.data()[i] = clamped ? 0.0 : norm * (p - y) / (p * (1.0 - p));
    }
    out.loss = total * norm;
    return out;
}

Matrix one_hot(std::span<const int> labels, int classes) {
    Matrix y = Matrix::Zero(static_cast<Eigen::Index>(labels.size()), classes);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= classes) throw DimensionError("one_hot: label out of range");
        y(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
    }
    return y;
}

void sgd_step(Mlp& net, GradTape& tape, const SgdConfig& cfg) {
    for (auto& p : net.params(tape)) {
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            p.value[i] -= cfg.learning_rate * (p.grad[i] + cfg.weight_decay * p.value[i]);
        }
    }
    tape.zero();
}

void sgd_step(Matrix& param, Matrix& grad, const SgdConfig& cfg) {
    if (param.rows() != grad.rows() || param.cols() != grad.cols()) {
        throw DimensionError("sgd_step: parameter and gradient shapes differ");
    }
    param -= cfg.learning_rate * (grad + cfg.weight_decay * param);
    grad.setZero();
}

}  // namespace matl
