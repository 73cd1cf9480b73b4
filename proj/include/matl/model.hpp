#pragma once

#include <vector>

#include "matl/decouple.hpp"

namespace matl {

// The five networks plus the bilinear superdomain matrix.
struct Model {
    Networks nets;
    Matrix theta;  // hidden x hidden, no structural constraint
    bool theta_trainable = true;

    static Model build(const Architecture& a, Rng& rng, bool identity_theta = false);
};

struct ModelGrads {
    NetworkTapes tapes;
    Matrix theta;

    static ModelGrads for_model(const Model& m);
    void zero();
};

// Every trainable tensor of the model, networks first, theta last (when trainable).
std::vector<ParamView> model_params(Model& m, ModelGrads& g);

void sgd_step(Model& m, ModelGrads& g, const SgdConfig& cfg);

// Rescales every gradient so their joint L2 norm is at most `max_norm`.
// Returns the norm before clipping. max_norm <= 0 leaves the gradients alone.
double clip_grad_norm(Model& m, ModelGrads& g, double max_norm);

}  // namespace matl
