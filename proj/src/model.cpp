#include "matl/model.hpp"

#include <cmath>

namespace matl {

Model Model::build(const Architecture& a, Rng& rng, bool identity_theta) {
    Model m;
    m.nets = Networks::build(a, rng);
    if (identity_theta) {
        m.theta = Matrix::Identity(a.hidden, a.hidden);
        m.theta_trainable = false;
    } else {
        const double limit = std::sqrt(6.0 / (2.0 * a.hidden));
        std::uniform_real_distribution<double> uni(-limit, limit);
        m.theta.resize(a.hidden, a.hidden);
        for (Eigen::Index i = 0; i < m.theta.size(); ++i) m.theta.data()[i] = uni(rng);
    }
    return m;
}

ModelGrads ModelGrads::for_model(const Model& m) {
    return {NetworkTapes::for_networks(m.nets), Matrix::Zero(m.theta.rows(), m.theta.cols())};
}

void ModelGrads::zero() {
    tapes.zero();
    theta.setZero();
}

std::vector<ParamView> model_params(Model& m, ModelGrads& g) {
    std::vector<ParamView> out;
    auto append = [&out](std::vector<ParamView> v) { out.insert(out.end(), v.begin(), v.end()); };
    append(m.nets.extractor.params(g.tapes.extractor));
    append(m.nets.domain_decoupler.params(g.tapes.domain_decoupler));
    append(m.nets.class_decoupler.params(g.tapes.class_decoupler));
    append(m.nets.domain_disc.params(g.tapes.domain_disc));
    append(m.nets.class_disc.params(g.tapes.class_disc));
    if (m.theta_trainable) {
        out.push_back({std::span<double>(m.theta.data(), static_cast<std::size_t>(m.theta.size())),
                       std::span<double>(g.theta.data(), static_cast<std::size_t>(g.theta.size())), true});
    }
    return out;
}

double clip_grad_norm(Model& m, ModelGrads& g, double max_norm) {
    const auto views = model_params(m, g);
    double sq = 0.0;
    for (const auto& pv : views) {
        for (double v : pv.grad) sq += v * v;
    }
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const double scale = max_norm / norm;
        for (const auto& pv : views) {
            for (double& v : pv.grad) v *= scale;
        }
    }
    return norm;
}

void sgd_step(Model& m, ModelGrads& g, const SgdConfig& cfg) {
    sgd_step(m.nets.extractor, g.tapes.extractor, cfg);
    sgd_step(m.nets.domain_decoupler, g.tapes.domain_decoupler, cfg);
    sgd_step(m.nets.class_decoupler, g.tapes.class_decoupler, cfg);
    sgd_step(m.nets.domain_disc, g.tapes.domain_disc, cfg);
    sgd_step(m.nets.class_disc, g.tapes.class_disc, cfg);
    if (m.theta_trainable) {
        sgd_step(m.theta, g.theta, cfg);
    } else {
        g.theta.setZero();
    }
}

}  // namespace matl
