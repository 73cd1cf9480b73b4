#include "matl/decouple.hpp"

#include "matl/errors.hpp"

namespace matl {

std::vector<LayerSpec> extractor_layers(const Architecture& a) {
    return {
        {a.input_dim, a.hidden, Activation::LeakyRelu, a.leaky_slope, 0.0},
        {a.hidden, a.hidden, Activation::LeakyRelu, a.leaky_slope, 0.0},
        {a.hidden, a.hidden, Activation::Identity, a.leaky_slope, 0.0},
    };
}

std::vector<LayerSpec> decoupler_layers(const Architecture& a) {
    return {
        {a.hidden, a.hidden, Activation::Relu, 0.0, 0.0},
        {a.hidden, a.hidden, Activation::Relu, 0.0, 0.0},
        {a.hidden, a.hidden, Activation::Identity, 0.0, 0.0},
    };
}

std::vector<LayerSpec> discriminator_layers(const Architecture& a, int outputs) {
    return {
        {a.hidden, a.hidden, Activation::Identity, 0.0, a.disc_dropout},
        {a.hidden, a.hidden, Activation::Sigmoid, 0.0, 0.0},
        {a.hidden, outputs, Activation::Sigmoid, 0.0, 0.0},
    };
}

Networks Networks::build(const Architecture& a, Rng& rng) {
    if (a.input_dim <= 0 || a.hidden <= 0) throw ConfigError("hidden", "network widths must be positive");
    if (a.num_subjects < 1 || a.num_classes < 1) throw ConfigError("", "label counts must be positive");
    Networks n;
    n.extractor = Mlp(extractor_layers(a), rng);
    n.domain_decoupler = Mlp(decoupler_layers(a), rng);
    n.class_decoupler = Mlp(decoupler_layers(a), rng);
    n.domain_disc = Mlp(discriminator_layers(a, a.num_subjects), rng);
    n.class_disc = Mlp(discriminator_layers(a, a.num_classes), rng);
    return n;
}

NetworkTapes NetworkTapes::for_networks(const Networks& nets) {
    return {nets.extractor.make_tape(), nets.domain_decoupler.make_tape(), nets.class_decoupler.make_tape(),
            nets.domain_disc.make_tape(), nets.class_disc.make_tape()};
}

void NetworkTapes::zero() {
    extractor.zero();
    domain_decoupler.zero();
    class_decoupler.zero();
    domain_disc.zero();
    class_disc.zero();
}

DecoupledBatch decouple_forward(const Networks& nets, const Matrix& x, std::span<const int> classes,
                                std::span<const int> subjects, Mode mode, Rng* rng, DecoupleCache* cache) {
    if (x.cols() != nets.extractor.in_dim()) {
        throw DimensionError("feature dimension " + std::to_string(x.cols()) + " does not match extractor input " +
                             std::to_string(nets.extractor.in_dim()));
    }
    if (static_cast<std::size_t>(x.rows()) != classes.size() ||
        static_cast<std::size_t>(x.rows()) != subjects.size()) {
        throw DimensionError("label vectors do not match batch size");
    }
    DecoupledBatch out;
    const Matrix shallow = nets.extractor.forward(x, mode, rng, cache ? &cache->extractor : nullptr);
    out.x_d = nets.domain_decoupler.forward(shallow, mode, rng, cache ? &cache->domain_decoupler : nullptr);
    out.x_c = nets.class_decoupler.forward(shallow, mode, rng, cache ? &cache->class_decoupler : nullptr);
    out.y_d = one_hot(subjects, nets.domain_disc.out_dim());
    out.y_c = one_hot(classes, nets.class_disc.out_dim());
    return out;
}

void decouple_backward(const Networks& nets, const DecoupleCache& cache, const Matrix& grad_x_d,
                       const Matrix& grad_x_c, NetworkTapes& tapes) {
    Matrix g = nets.domain_decoupler.backward(cache.domain_decoupler, grad_x_d, tapes.domain_decoupler);
    g += nets.class_decoupler.backward(cache.class_decoupler, grad_x_c, tapes.class_decoupler);
    nets.extractor.backward(cache.extractor, g, tapes.extractor);
}

DiscriminatorLoss discriminator_loss(const Mlp& disc, const Matrix& own, const Matrix& other,
                                     const Matrix& targets, double grl_lambda, Mode mode, Rng* rng,
                                     GradTape& disc_tape) {
    if (own.rows() != other.rows() || own.rows() != targets.rows()) {
        throw DimensionError("discriminator inputs disagree on batch size");
    }
    DiscriminatorLoss out;
    ForwardCache own_cache, other_cache;
    const Matrix p_own = disc.forward(own, mode, rng, &own_cache);
    const Matrix p_other = disc.forward(grl_forward(other), mode, rng, &other_cache);
    const LossGrad own_loss = bce(p_own, targets);
    const LossGrad other_loss = bce(p_other, targets);
    out.own_term = own_loss.loss;
    out.reversed_term = other_loss.loss;
    out.value = own_loss.loss + other_loss.loss;
    out.grad_own = disc.backward(own_cache, own_loss.grad, disc_tape);
    out.grad_other = grl_backward(disc.backward(other_cache, other_loss.grad, disc_tape), grl_lambda);
    return out;
}

}  // namespace matl
