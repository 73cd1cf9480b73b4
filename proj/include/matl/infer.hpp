#pragma once

#include <span>
#include <string>
#include <vector>

#include "matl/model.hpp"
#include "matl/nn.hpp"
#include "matl/proto.hpp"

namespace matl {

Vector softmax(const Vector& z);

// Cosine similarity; 0 when either norm is below 1e-12.
double cosine_similarity(const Vector& a, const Vector& b);

// h_k = x_d^T theta mu_d^k for every superdomain k.
Vector bilinear_scores(const Vector& x_d, const PrototypeBank& bank, const Matrix& theta);

// softmax(h). Every domain prototype must be initialized.
Vector domain_affinity(const Vector& x_d, const PrototypeBank& bank, const Matrix& theta);

// Class distribution over the initialized classes of one superdomain.
// Uninitialized classes carry probability 0 and active == 0.
struct ClassProbVector {
    Vector probs;
    std::vector<char> active;
};

ClassProbVector class_probs(const Vector& x_c, const PrototypeBank& bank, int superdomain);

struct Prediction {
    int label = -1;
    int superdomain = -1;
    Vector affinity;  // softmax over superdomains
    Vector probs;     // class distribution inside the chosen superdomain
};

// Two-stage rule: superdomain by argmax affinity, then class by argmax
// cosine-softmax inside it. Eval-mode forward only.
Prediction predict(const Vector& features, const Model& model, const PrototypeBank& bank);
std::vector<Prediction> predict_batch(const Matrix& features, const Model& model, const PrototypeBank& bank);
Prediction predict_from_features(const Vector& x_d, const Vector& x_c, const Matrix& theta,
                                 const PrototypeBank& bank);

// Cosine similarity of two class distributions (unclamped).
double pair_similarity(const Vector& p_i, const Vector& p_j);

enum class PairwiseForm {
    Standard,  // -(1/B^2) sum [r log G + (1 - r) log(1 - G)]
    Literal,   // (1/B^2) sum [r log G - (1 - r) log(1 - G)], as typeset in the method description
};

std::string to_string(PairwiseForm f);
PairwiseForm pairwise_form_from_string(const std::string& s);

// Loss over all B^2 ordered pairs (diagonal included) of the rows of `probs`.
// Gradient is w.r.t. `probs`.
LossGrad pairwise_loss(const Matrix& probs, std::span<const int> labels,
                       PairwiseForm form = PairwiseForm::Standard);

// Per-sample cross-entropy on the class distribution.
LossGrad pointwise_loss(const Matrix& probs, std::span<const int> labels);

// Batched class-distribution path used in training; each row is scored
// against the prototypes of its own superdomain.
struct ClassProbBatch {
    Matrix cos;    // B x M cosine similarities
    Matrix probs;  // B x M, zero on inactive classes
    Matrix active; // B x M in {0, 1}
};

ClassProbBatch class_probs_batch(const Matrix& x_c, std::span<const int> superdomain, const PrototypeBank& bank);
Matrix class_probs_backward(const ClassProbBatch& fwd, const Matrix& x_c, std::span<const int> superdomain,
                            const PrototypeBank& bank, const Matrix& grad_probs);

// Trains theta: one-vs-rest BCE of softmax(h(x_d, mu_d^k)) against the
// known superdomain of each source row.
struct SuperdomainLoss {
    double loss = 0.0;
    Matrix grad_x_d;
    Matrix grad_theta;
};

SuperdomainLoss superdomain_loss(const Matrix& x_d, std::span<const int> superdomain, const PrototypeBank& bank,
                                 const Matrix& theta);

enum class RegularizerKind {
    Weights,      // mean over weight tensors (networks and theta) of squared Frobenius norm
    Activations,  // mean(x_d^2) + mean(x_c^2)
};

std::string to_string(RegularizerKind k);
RegularizerKind regularizer_from_string(const std::string& s);

// Weight-norm regularizer; when `grads` is given, beta * dR/dw is added to it.
double weight_regularizer(const Model& m, ModelGrads* grads = nullptr, double beta = 1.0);

struct ActivationReg {
    double value = 0.0;
    Matrix grad_x_d;
    Matrix grad_x_c;
};

ActivationReg activation_regularizer(const Matrix& x_d, const Matrix& x_c);

inline double total_loss(double fd, double pair, double reg, double beta) { return fd + pair + beta * reg; }

}  // namespace matl
