#include "matl/infer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "matl/errors.hpp"

namespace matl {

namespace {

constexpr double kNormGuard = 1e-12;

// Softmax restricted to entries with mask != 0; masked entries get 0.
Vector masked_softmax(const Vector& z, const Vector& mask) {
    double top = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < z.size(); ++i) {
        if (mask(i) != 0.0) top = std::max(top, z(i));
    }
    Vector p = Vector::Zero(z.size());
    double sum = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
        if (mask(i) == 0.0) continue;
        p(i) = std::exp(z(i) - top);
        sum += p(i);
    }
    return p / sum;
}

Eigen::Index argmax(const Vector& v) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < v.size(); ++i) {
        if (v(i) > v(best)) best = i;
    }
    return best;
}

Matrix domain_prototypes(const PrototypeBank& bank) {
    if (!bank.all_domains_ready()) throw StateError("domain prototypes are not all initialized");
    return bank.domain_matrix();
}

}  // namespace

Vector softmax(const Vector& z) { return masked_softmax(z, Vector::Ones(z.size())); }

double cosine_similarity(const Vector& a, const Vector& b) {
    const double na = a.norm();
    const double nb = b.norm();
    if (na < kNormGuard || nb < kNormGuard) return 0.0;
    return a.dot(b) / (na * nb);
}

Vector bilinear_scores(const Vector& x_d, const PrototypeBank& bank, const Matrix& theta) {
    const Matrix mu = domain_prototypes(bank);
    if (theta.rows() != x_d.size() || theta.cols() != mu.cols()) throw DimensionError("bilinear: shape mismatch");
    return mu * (theta.transpose() * x_d);
}

Vector domain_affinity(const Vector& x_d, const PrototypeBank& bank, const Matrix& theta) {
    return softmax(bilinear_scores(x_d, bank, theta));
}

ClassProbVector class_probs(const Vector& x_c, const PrototypeBank& bank, int superdomain) {
    if (superdomain < 0 || superdomain >= bank.K()) throw InferenceError("superdomain index out of range");
    if (bank.ready_class_count(superdomain) < 2) {
        throw InferenceError("superdomain " + std::to_string(superdomain) + " has fewer than 2 class prototypes");
    }
    const int M = bank.M();
    Vector cos = Vector::Zero(M);
    Vector mask = Vector::Zero(M);
    ClassProbVector out;
    out.active.assign(static_cast<std::size_t>(M), 0);
    for (int m = 0; m < M; ++m) {
        if (!bank.class_ready(superdomain, m)) continue;
        cos(m) = cosine_similarity(x_c, bank.cls(superdomain, m));
        mask(m) = 1.0;
        out.active[static_cast<std::size_t>(m)] = 1;
    }
    out.probs = masked_softmax(cos, mask);
    return out;
}

Prediction predict_from_features(const Vector& x_d, const Vector& x_c, const Matrix& theta,
                                 const PrototypeBank& bank) {
    Prediction p;
    p.affinity = domain_affinity(x_d, bank, theta);
    p.superdomain = static_cast<int>(argmax(p.affinity));
    const auto cp = class_probs(x_c, bank, p.superdomain);
    p.probs = cp.probs;
    Eigen::Index best = -1;
    for (Eigen::Index m = 0; m < p.probs.size(); ++m) {
        if (!cp.active[static_cast<std::size_t>(m)]) continue;
        if (best < 0 || p.probs(m) > p.probs(best)) best = m;
    }
    p.label = static_cast<int>(best);
    return p;
}

std::vector<Prediction> predict_batch(const Matrix& features, const Model& model, const PrototypeBank& bank) {
    const Matrix shallow = model.nets.extractor.forward(features, Mode::Eval);
    const Matrix x_d = model.nets.domain_decoupler.forward(shallow, Mode::Eval);
    const Matrix x_c = model.nets.class_decoupler.forward(shallow, Mode::Eval);
    std::vector<Prediction> out;
    out.reserve(static_cast<std::size_t>(features.rows()));
    for (Eigen::Index i = 0; i < features.rows(); ++i) {
        out.push_back(predict_from_features(x_d.row(i).transpose(), x_c.row(i).transpose(), model.theta, bank));
    }
    return out;
}

Prediction predict(const Vector& features, const Model& model, const PrototypeBank& bank) {
    return predict_batch(features.transpose(), model, bank).front();
}

double pair_similarity(const Vector& p_i, const Vector& p_j) { return cosine_similarity(p_i, p_j); }

std::string to_string(PairwiseForm f) { return f == PairwiseForm::Standard ? "standard" : "literal"; }

PairwiseForm pairwise_form_from_string(const std::string& s) {
    if (s == "standard") return PairwiseForm::Standard;
    if (s == "literal") return PairwiseForm::Literal;
    throw ConfigError("pairwise_form", "expected 'standard' or 'literal', got '" + s + "'");
}

LossGrad pairwise_loss(const Matrix& probs, std::span<const int> labels, PairwiseForm form) {
    const Eigen::Index B = probs.rows();
    if (B < 2) throw ValidationError("pairwise loss needs a batch of at least 2");
    if (static_cast<std::size_t>(B) != labels.size()) throw DimensionError("pairwise loss: label count mismatch");

    Vector norms = probs.rowwise().norm();
    Matrix unit = probs;
    for (Eigen::Index i = 0; i < B; ++i) {
        if (norms(i) >= kNormGuard) unit.row(i) /= norms(i);
        else unit.row(i).setZero();
    }
    const Matrix G = unit * unit.transpose();
    const double scale = 1.0 / static_cast<double>(B * B);
    Matrix dG = Matrix::Zero(B, B);
    double total = 0.0;
    for (Eigen::Index i = 0; i < B; ++i) {
        for (Eigen::Index j = 0; j < B; ++j) {
            const double r = labels[static_cast<std::size_t>(i)] == labels[static_cast<std::size_t>(j)] ? 1.0 : 0.0;
            const double raw = G(i, j);
            const double g = std::clamp(raw, kProbEps, 1.0 - kProbEps);
            const bool clamped = raw < kProbEps || raw > 1.0 - kProbEps;
            if (form == PairwiseForm::Standard) {
                total -= r * std::log(g) + (1.0 - r) * std::log(1.0 - g);
                if (!clamped) dG(i, j) = -scale * (r / g - (1.0 - r) / (1.0 - g));
            } else {
                total += r * std::log(g) - (1.0 - r) * std::log(1.0 - g);
                if (!clamped) dG(i, j) = scale * (r / g + (1.0 - r) / (1.0 - g));
            }
        }
    }
    LossGrad out;
    out.loss = total * scale;
    const Matrix dU = (dG + dG.transpose()) * unit;
    out.grad = Matrix::Zero(B, probs.cols());
    for (Eigen::Index i = 0; i < B; ++i) {
        if (norms(i) < kNormGuard) continue;
        const RowVector u = unit.row(i);
        const RowVector du = dU.row(i);
        out.grad.row(i) = (du - du.dot(u) * u) / norms(i);
    }
    return out;
}

LossGrad pointwise_loss(const Matrix& probs, std::span<const int> labels) {
    const Eigen::Index B = probs.rows();
    if (B < 1 || static_cast<std::size_t>(B) != labels.size()) throw DimensionError("pointwise loss: bad batch");
    LossGrad out;
    out.grad = Matrix::Zero(B, probs.cols());
    double total = 0.0;
    for (Eigen::Index i = 0; i < B; ++i) {
        const int y = labels[static_cast<std::size_t>(i)];
        const double raw = probs(i, y);
        const double p = std::clamp(raw, kProbEps, 1.0 - kProbEps);
        total -= std::log(p);
        if (raw >= kProbEps && raw <= 1.0 - kProbEps) out.grad(i, y) = -1.0 / (p * static_cast<double>(B));
    }
    out.loss = total / static_cast<double>(B);
    return out;
}

ClassProbBatch class_probs_batch(const Matrix& x_c, std::span<const int> superdomain, const PrototypeBank& bank) {
    const Eigen::Index B = x_c.rows();
    if (static_cast<std::size_t>(B) != superdomain.size()) throw DimensionError("class probs: superdomain count mismatch");
    const int M = bank.M();
    ClassProbBatch out;
    out.cos = Matrix::Zero(B, M);
    out.probs = Matrix::Zero(B, M);
    out.active = Matrix::Zero(B, M);
    for (Eigen::Index i = 0; i < B; ++i) {
        const int k = superdomain[static_cast<std::size_t>(i)];
        if (k < 0 || k >= bank.K()) throw InferenceError("superdomain index out of range");
        const Vector x = x_c.row(i).transpose();
        for (int m = 0; m < M; ++m) {
            if (!bank.class_ready(k, m)) continue;
            out.active(i, m) = 1.0;
            out.cos(i, m) = cosine_similarity(x, bank.class_matrix(k).row(m).transpose());
        }
        out.probs.row(i) = masked_softmax(out.cos.row(i).transpose(), out.active.row(i).transpose()).transpose();
    }
    return out;
}

Matrix class_probs_backward(const ClassProbBatch& fwd, const Matrix& x_c, std::span<const int> superdomain,
                            const PrototypeBank& bank, const Matrix& grad_probs) {
    const Eigen::Index B = x_c.rows();
    Matrix grad = Matrix::Zero(B, x_c.cols());
    for (Eigen::Index i = 0; i < B; ++i) {
        const int k = superdomain[static_cast<std::size_t>(i)];
        const RowVector p = fwd.probs.row(i);
        const RowVector g = grad_probs.row(i);
        const double inner = p.dot(g);
        const Vector x = x_c.row(i).transpose();
        const double nx = x.norm();
        if (nx < kNormGuard) continue;
        for (int m = 0; m < bank.M(); ++m) {
            if (fwd.active(i, m) == 0.0) continue;
            const double dcos = p(m) * (g(m) - inner);
            if (dcos == 0.0) continue;
            const Vector mu = bank.class_matrix(k).row(m).transpose();
            const double nm = mu.norm();
            if (nm < kNormGuard) continue;
            // d cos / d x = mu / (|x||mu|) - cos x / |x|^2
            grad.row(i) += dcos * (mu / (nx * nm) - fwd.cos(i, m) * x / (nx * nx)).transpose();
        }
    }
    return grad;
}

SuperdomainLoss superdomain_loss(const Matrix& x_d, std::span<const int> superdomain, const PrototypeBank& bank,
                                 const Matrix& theta) {
    const Matrix mu = domain_prototypes(bank);  // K x D
    const Eigen::Index B = x_d.rows();
    const int K = bank.K();
    if (static_cast<std::size_t>(B) != superdomain.size()) throw DimensionError("superdomain loss: label count mismatch");
    const Matrix proj = mu * theta.transpose();  // K x D, row k = (theta mu_k)^T
    const Matrix h = x_d * proj.transpose();      // B x K
    const double norm = 1.0 / static_cast<double>(B * K);

    // Log-space throughout: log(1 - p_k) is the log-sum-exp over the other
    // logits, so saturated rows keep a finite loss and gradient.
    Matrix dh = Matrix::Zero(B, K);
    double total = 0.0;
    for (Eigen::Index i = 0; i < B; ++i) {
        const int y = superdomain[static_cast<std::size_t>(i)];
        if (y < 0 || y >= K) throw InferenceError("superdomain index out of range");
        const Vector z = h.row(i).transpose();
        const double top = z.maxCoeff();
        const double lse = top + std::log((z.array() - top).exp().sum());
        const Vector p = (z.array() - lse).exp().matrix();
        for (int k = 0; k < K; ++k) {
            if (k == y) {
                total -= z(k) - lse;
                dh.row(i) += norm * p.transpose();
                dh(i, k) -= norm;
                continue;
            }
            // others = softmax over every logit except k
            double top_o = -std::numeric_limits<double>::infinity();
            for (int j = 0; j < K; ++j) {
                if (j != k) top_o = std::max(top_o, z(j));
            }
            Vector others = Vector::Zero(K);
            for (int j = 0; j < K; ++j) {
                if (j != k) others(j) = std::exp(z(j) - top_o);
            }
            const double sum_o = others.sum();
            total -= top_o + std::log(sum_o) - lse;
            others /= sum_o;
            dh(i, k) += norm * p(k);
            dh.row(i) -= norm * p(k) * others.transpose();
        }
    }
    SuperdomainLoss out;
    out.loss = total * norm;
    out.grad_x_d = dh * proj;                    // B x D
    out.grad_theta = x_d.transpose() * dh * mu;  // D x D
    return out;
}

std::string to_string(RegularizerKind k) { return k == RegularizerKind::Weights ? "weights" : "activations"; }

RegularizerKind regularizer_from_string(const std::string& s) {
    if (s == "weights") return RegularizerKind::Weights;
    if (s == "activations") return RegularizerKind::Activations;
    throw ConfigError("regularizer", "expected 'weights' or 'activations', got '" + s + "'");
}

double weight_regularizer(const Model& m, ModelGrads* grads, double beta) {
    std::vector<std::pair<const Matrix*, Matrix*>> tensors;
    auto add_net = [&](const Mlp& net, GradTape* tape) {
        for (std::size_t l = 0; l < net.num_layers(); ++l) {
            tensors.emplace_back(&net.weight(l), tape ? &tape->weights[l] : nullptr);
        }
    };
    add_net(m.nets.extractor, grads ? &grads->tapes.extractor : nullptr);
    add_net(m.nets.domain_decoupler, grads ? &grads->tapes.domain_decoupler : nullptr);
    add_net(m.nets.class_decoupler, grads ? &grads->tapes.class_decoupler : nullptr);
    add_net(m.nets.domain_disc, grads ? &grads->tapes.domain_disc : nullptr);
    add_net(m.nets.class_disc, grads ? &grads->tapes.class_disc : nullptr);
    if (m.theta_trainable) tensors.emplace_back(&m.theta, grads ? &grads->theta : nullptr);

    const double inv = 1.0 / static_cast<double>(tensors.size());
    double total = 0.0;
    for (auto& [w, g] : tensors) {
        total += w->squaredNorm();
        if (g) *g += (2.0 * beta * inv) * *w;
    }
    return total * inv;
}

ActivationReg activation_regularizer(const Matrix& x_d, const Matrix& x_c) {
    ActivationReg r;
    r.value = x_d.squaredNorm() / static_cast<double>(x_d.size()) + x_c.squaredNorm() / static_cast<double>(x_c.size());
    r.grad_x_d = (2.0 / static_cast<double>(x_d.size())) * x_d;
    r.grad_x_c = (2.0 / static_cast<double>(x_c.size())) * x_c;
    return r;
}

}  // namespace matl
