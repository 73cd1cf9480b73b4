#pragma once

#include <span>

#include "matl/nn.hpp"

namespace matl {

// Shapes of the five networks. `hidden` is the width of every hidden and
// feature layer; discriminators end in one sigmoid unit per subject/class.
struct Architecture {
    int input_dim = 310;
    int hidden = 64;
    int num_subjects = 2;
    int num_classes = 3;
    double leaky_slope = 0.01;
    double disc_dropout = 0.25;
};

std::vector<LayerSpec> extractor_layers(const Architecture& a);
std::vector<LayerSpec> decoupler_layers(const Architecture& a);
std::vector<LayerSpec> discriminator_layers(const Architecture& a, int outputs);

struct Networks {
    Mlp extractor;         // shared shallow features
    Mlp domain_decoupler;  // -> x_d
    Mlp class_decoupler;   // -> x_c
    Mlp domain_disc;       // subject scores
    Mlp class_disc;        // class scores

    static Networks build(const Architecture& a, Rng& rng);
};

struct NetworkTapes {
    GradTape extractor;
    GradTape domain_decoupler;
    GradTape class_decoupler;
    GradTape domain_disc;
    GradTape class_disc;

    static NetworkTapes for_networks(const Networks& nets);
    void zero();
};

struct DecoupledBatch {
    Matrix x_d;  // batch x hidden domain features
    Matrix x_c;  // batch x hidden class features
    Matrix y_d;  // subject one-hot
    Matrix y_c;  // class one-hot
};

struct DecoupleCache {
    ForwardCache extractor;
    ForwardCache domain_decoupler;
    ForwardCache class_decoupler;
};

// x_d = f_d(f_g(x)), x_c = f_c(f_g(x)); f_g runs once.
DecoupledBatch decouple_forward(const Networks& nets, const Matrix& x, std::span<const int> classes,
                                std::span<const int> subjects, Mode mode, Rng* rng = nullptr,
                                DecoupleCache* cache = nullptr);

// Routes dL/dx_d and dL/dx_c back through both decouplers and the extractor.
void decouple_backward(const Networks& nets, const DecoupleCache& cache, const Matrix& grad_x_d,
                       const Matrix& grad_x_c, NetworkTapes& tapes);

// BCE(D(own), y) + BCE(D(GRL(other)), y). The discriminator's parameter
// gradients from both terms accumulate into `disc_tape`; grad_other already
// carries the GRL sign flip.
struct DiscriminatorLoss {
    double value = 0.0;
    double own_term = 0.0;
    double reversed_term = 0.0;
    Matrix grad_own;
    Matrix grad_other;
};

DiscriminatorLoss discriminator_loss(const Mlp& disc, const Matrix& own, const Matrix& other,
                                     const Matrix& targets, double grl_lambda, Mode mode, Rng* rng,
                                     GradTape& disc_tape);

// Class discriminator on x_c, and adversarially on x_d.
inline DiscriminatorLoss loss_cls(const Mlp& class_disc, const Matrix& x_c, const Matrix& x_d,
                                  const Matrix& y_c, double grl_lambda, Mode mode, Rng* rng,
                                  GradTape& tape) {
    return discriminator_loss(class_disc, x_c, x_d, y_c, grl_lambda, mode, rng, tape);
}

// Domain discriminator on x_d, and adversarially on x_c.
inline DiscriminatorLoss loss_dom(const Mlp& domain_disc, const Matrix& x_d, const Matrix& x_c,
                                  const Matrix& y_d, double grl_lambda, Mode mode, Rng* rng,
                                  GradTape& tape) {
    return discriminator_loss(domain_disc, x_d, x_c, y_d, grl_lambda, mode, rng, tape);
}

inline double loss_fd(double cls, double dom) { return cls + dom; }

}  // namespace matl
