#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "matl/errors.hpp"
#include "matl/infer.hpp"
#include "oracles.hpp"

using namespace matl;

namespace {

PrototypeBank random_bank(int K, int M, int D, std::mt19937_64& rng) {
    PrototypeBank bank(K, M, D);
    for (int k = 0; k < K; ++k) {
        bank.set_domain(k, oracle::random_matrix(D, 1, rng).col(0));
        for (int m = 0; m < M; ++m) bank.set_class(k, m, oracle::random_matrix(D, 1, rng).col(0));
    }
    return bank;
}

std::vector<Vector> class_list(const PrototypeBank& bank, int k) {
    std::vector<Vector> out;
    for (int m = 0; m < bank.M(); ++m) out.push_back(bank.cls(k, m));
    return out;
}

Matrix random_probs(int B, int M, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.05, 1.0);
    Matrix p(B, M);
    for (int i = 0; i < B; ++i) {
        for (int m = 0; m < M; ++m) p(i, m) = u(rng);
        p.row(i) /= p.row(i).sum();
    }
    return p;
}

// One-vs-rest BCE of softmax(h) against the known superdomain, plain loops.
double superdomain_oracle(const Matrix& x_d, const std::vector<int>& y, const PrototypeBank& bank, const Matrix& theta) {
    double total = 0.0;
    const int K = bank.K();
    for (int i = 0; i < x_d.rows(); ++i) {
        std::vector<double> h(static_cast<std::size_t>(K));
        for (int k = 0; k < K; ++k) h[static_cast<std::size_t>(k)] = oracle::bilinear(x_d.row(i).transpose(), theta, bank.domain(k));
        const double top = *std::max_element(h.begin(), h.end());
        double z = 0.0;
        for (double v : h) z += std::exp(v - top);
        for (int k = 0; k < K; ++k) {
            const double p = std::exp(h[static_cast<std::size_t>(k)] - top) / z;
            total -= k == y[static_cast<std::size_t>(i)] ? std::log(p) : std::log(1.0 - p);
        }
    }
    return total / static_cast<double>(x_d.rows() * K);
}

}  // namespace

TEST_CASE("bilinear scores") {
    std::mt19937_64 rng(81);
    const PrototypeBank bank = random_bank(3, 2, 6, rng);
    const Vector x = oracle::random_matrix(6, 1, rng).col(0);
    const Vector plain = bilinear_scores(x, bank, Matrix::Identity(6, 6));
    for (int k = 0; k < 3; ++k) CHECK(plain(k) == doctest::Approx(x.dot(bank.domain(k))).epsilon(1e-14));

    const Matrix theta = oracle::random_matrix(6, 6, rng);
    const Vector h = bilinear_scores(x, bank, theta);
    for (int k = 0; k < 3; ++k) CHECK(std::abs(h(k) - oracle::bilinear(x, theta, bank.domain(k))) < 1e-9);

    const Vector v = domain_affinity(x, bank, theta);
    Eigen::Index a = 0, b = 0;
    v.maxCoeff(&a);
    h.maxCoeff(&b);
    CHECK(a == b);
    CHECK(v.sum() == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("softmax of equal scores is uniform") {
    Vector h(2);
    h << 1.0, 1.0;
    const Vector v = softmax(h);
    CHECK(v(0) == 0.5);
    CHECK(v(1) == 0.5);
}

TEST_CASE("class probabilities") {
    PrototypeBank bank(1, 3, 3);
    bank.set_domain(0, Vector::Zero(3));
    bank.set_class(0, 0, Vector::Unit(3, 0));
    bank.set_class(0, 1, Vector::Unit(3, 1));
    bank.set_class(0, 2, Vector::Unit(3, 2));
    const ClassProbVector hit = class_probs(Vector::Unit(3, 1), bank, 0);
    Eigen::Index best = 0;
    hit.probs.maxCoeff(&best);
    CHECK(best == 1);

    PrototypeBank same(1, 3, 3);
    for (int m = 0; m < 3; ++m) same.set_class(0, m, Vector::Ones(3));
    const ClassProbVector flat = class_probs(Vector::Unit(3, 0), same, 0);
    for (int m = 0; m < 3; ++m) CHECK(flat.probs(m) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));

    std::mt19937_64 rng(83);
    const PrototypeBank rb = random_bank(2, 4, 5, rng);
    for (int trial = 0; trial < 10; ++trial) {
        const Vector x = oracle::random_matrix(5, 1, rng).col(0);
        const auto expect = oracle::cosine_softmax(x, class_list(rb, 1));
        const ClassProbVector got = class_probs(x, rb, 1);
        const ClassProbVector scaled = class_probs(3.7 * x, rb, 1);
        for (int m = 0; m < 4; ++m) {
            CHECK(std::abs(got.probs(m) - expect[static_cast<std::size_t>(m)]) < 1e-9);
            CHECK(std::abs(scaled.probs(m) - got.probs(m)) < 1e-12);
        }
    }

    PrototypeBank sparse(1, 3, 3);
    sparse.set_class(0, 2, Vector::Ones(3));
    CHECK_THROWS_AS(class_probs(Vector::Ones(3), sparse, 0), InferenceError);
    sparse.set_class(0, 0, Vector::Unit(3, 0));
    const ClassProbVector two = class_probs(Vector::Ones(3), sparse, 0);
    CHECK(two.probs(1) == 0.0);
    CHECK(two.active[1] == 0);
    CHECK(two.probs.sum() == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("cosine similarity zero-vector guard") {
    CHECK(cosine_similarity(Vector::Zero(3), Vector::Ones(3)) == 0.0);
    CHECK(cosine_similarity(Vector::Ones(3), Vector::Ones(3)) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("a sample on a stored prototype image predicts that class") {
    PrototypeBank bank(2, 3, 4);
    bank.set_domain(0, Vector::Unit(4, 0) * 2.0);
    bank.set_domain(1, Vector::Unit(4, 1) * 2.0);
    for (int k = 0; k < 2; ++k)
        for (int m = 0; m < 3; ++m) bank.set_class(k, m, Vector::Unit(4, (m + k) % 4));
    const Prediction p = predict_from_features(bank.domain(1), bank.cls(1, 2), Matrix::Identity(4, 4), bank);
    CHECK(p.superdomain == 1);
    CHECK(p.label == 2);
}

TEST_CASE("permuting superdomains leaves the label unchanged") {
    std::mt19937_64 rng(89);
    const PrototypeBank bank = random_bank(3, 3, 5, rng);
    PrototypeBank perm(3, 3, 5);
    const int order[3] = {2, 0, 1};
    for (int k = 0; k < 3; ++k) {
        perm.set_domain(order[k], bank.domain(k));
        for (int m = 0; m < 3; ++m) perm.set_class(order[k], m, bank.cls(k, m));
    }
    const Matrix theta = oracle::random_matrix(5, 5, rng);
    for (int trial = 0; trial < 20; ++trial) {
        const Vector xd = oracle::random_matrix(5, 1, rng).col(0), xc = oracle::random_matrix(5, 1, rng).col(0);
        const Prediction a = predict_from_features(xd, xc, theta, bank);
        const Prediction b = predict_from_features(xd, xc, theta, perm);
        CHECK(a.label == b.label);
        CHECK(b.superdomain == order[a.superdomain]);
        CHECK(std::abs(a.affinity(a.superdomain) - b.affinity(b.superdomain)) < 1e-12);
    }
}

TEST_CASE("pair similarity") {
    Vector a(2), b(2);
    a << 1, 0;
    b << 0, 1;
    CHECK(pair_similarity(a, a) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(pair_similarity(a, b) == 0.0);
    std::mt19937_64 rng(97);
    const Matrix p = random_probs(2, 5, rng);
    const Vector x = p.row(0).transpose(), y = p.row(1).transpose();
    const double expect = x.dot(y) / std::sqrt(x.squaredNorm() * y.squaredNorm());
    CHECK(std::abs(pair_similarity(x, y) - expect) < 1e-12);
}

TEST_CASE("pairwise loss values") {
    // Self-pairs always have G = 1, so G = 0.5 is reachable off the diagonal only.
    Matrix p(2, 2);
    const double s = std::sin(M_PI / 12.0), c = std::cos(M_PI / 12.0);
    p << c, s, s, c;  // cos(angle) = 2cs = sin(pi/6) = 0.5
    const std::vector<int> diff{0, 1};
    CHECK(pair_similarity(p.row(0).transpose(), p.row(1).transpose()) == doctest::Approx(0.5).epsilon(1e-12));
    const double expect = -(2.0 * std::log(1.0 - 1e-7) + 2.0 * std::log(0.5)) / 4.0;
    CHECK(pairwise_loss(p, diff).loss == doctest::Approx(expect).epsilon(1e-12));
    CHECK(oracle::pairwise(p, diff) == doctest::Approx(expect).epsilon(1e-12));

    Matrix perfect(4, 3);
    perfect << 1, 0, 0, 0, 1, 0, 1, 0, 0, 0, 0, 1;
    CHECK(pairwise_loss(perfect, std::vector<int>{0, 1, 0, 2}).loss <= 1e-5);

    std::mt19937_64 rng(101);
    const Matrix r = random_probs(5, 3, rng);
    const std::vector<int> labels{0, 2, 1, 0, 2};
    CHECK(std::abs(pairwise_loss(r, labels).loss - oracle::pairwise(r, labels)) < 1e-9);

    CHECK_THROWS_AS(pairwise_loss(r.topRows(1), std::vector<int>{0}), ValidationError);
}

TEST_CASE("pairwise loss gradient and symmetry") {
    std::mt19937_64 rng(103);
    Matrix p = random_probs(5, 3, rng);
    const std::vector<int> labels{0, 2, 1, 0, 2};
    const LossGrad lg = pairwise_loss(p, labels);
    const auto fd = oracle::central_difference(std::span<double>(p.data(), static_cast<std::size_t>(p.size())),
                                               [&] { return pairwise_loss(p, labels).loss; });
    for (Eigen::Index i = 0; i < p.size(); ++i) CHECK(oracle::close(lg.grad.data()[i], fd[static_cast<std::size_t>(i)]));

    std::vector<int> idx(5);
    std::iota(idx.begin(), idx.end(), 0);
    std::reverse(idx.begin(), idx.end());
    Matrix q(5, 3);
    std::vector<int> ql(5);
    for (int i = 0; i < 5; ++i) {
        q.row(i) = p.row(idx[static_cast<std::size_t>(i)]);
        ql[static_cast<std::size_t>(i)] = labels[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])];
    }
    CHECK(std::abs(pairwise_loss(q, ql).loss - lg.loss) < 1e-12);

    const LossGrad lit = pairwise_loss(p, labels, PairwiseForm::Literal);
    CHECK(std::isfinite(lit.loss));
}

TEST_CASE("pointwise loss") {
    std::mt19937_64 rng(107);
    Matrix p = random_probs(4, 3, rng);
    const std::vector<int> labels{0, 1, 2, 1};
    double expect = 0.0;
    for (int i = 0; i < 4; ++i) expect -= std::log(p(i, labels[static_cast<std::size_t>(i)]));
    const LossGrad lg = pointwise_loss(p, labels);
    CHECK(lg.loss == doctest::Approx(expect / 4.0).epsilon(1e-12));
    const auto fd = oracle::central_difference(std::span<double>(p.data(), 12), [&] { return pointwise_loss(p, labels).loss; });
    for (int i = 0; i < 12; ++i) CHECK(oracle::close(lg.grad.data()[i], fd[static_cast<std::size_t>(i)]));
}

TEST_CASE("class probability backward matches finite differences") {
    std::mt19937_64 rng(109);
    PrototypeBank bank = random_bank(2, 3, 4, rng);
    Matrix x = oracle::random_matrix(5, 4, rng);
    const std::vector<int> sd{0, 1, 1, 0, 1};
    const Matrix up = oracle::random_matrix(5, 3, rng);
    const ClassProbBatch fwd = class_probs_batch(x, sd, bank);
    const Matrix g = class_probs_backward(fwd, x, sd, bank, up);
    const auto fd = oracle::central_difference(std::span<double>(x.data(), 20), [&] {
        return class_probs_batch(x, sd, bank).probs.cwiseProduct(up).sum();
    });
    for (int i = 0; i < 20; ++i) CHECK(oracle::close(g.data()[i], fd[static_cast<std::size_t>(i)]));
}

TEST_CASE("superdomain loss against the oracle and finite differences") {
    std::mt19937_64 rng(113);
    const PrototypeBank bank = random_bank(3, 2, 4, rng);
    Matrix x = oracle::random_matrix(6, 4, rng);
    Matrix theta = oracle::random_matrix(4, 4, rng);
    const std::vector<int> sd{0, 1, 2, 2, 0, 1};
    const SuperdomainLoss l = superdomain_loss(x, sd, bank, theta);
    CHECK(std::abs(l.loss - superdomain_oracle(x, sd, bank, theta)) < 1e-9);

    const auto fx = oracle::central_difference(std::span<double>(x.data(), 24), [&] { return superdomain_loss(x, sd, bank, theta).loss; });
    for (int i = 0; i < 24; ++i) CHECK(oracle::close(l.grad_x_d.data()[i], fx[static_cast<std::size_t>(i)]));
    const auto ft = oracle::central_difference(std::span<double>(theta.data(), 16), [&] { return superdomain_loss(x, sd, bank, theta).loss; });
    for (int i = 0; i < 16; ++i) CHECK(oracle::close(l.grad_theta.data()[i], ft[static_cast<std::size_t>(i)]));
}

TEST_CASE("superdomain loss stays finite when saturated") {
    PrototypeBank bank(2, 2, 2);
    bank.set_domain(0, Vector::Unit(2, 0));
    bank.set_domain(1, Vector::Unit(2, 1));
    Matrix x(1, 2);
    x << 500.0, -500.0;
    const SuperdomainLoss wrong = superdomain_loss(x, std::vector<int>{1}, bank, Matrix::Identity(2, 2));
    CHECK(std::isfinite(wrong.loss));
    CHECK(wrong.loss > 100.0);
    CHECK(wrong.grad_x_d.allFinite());
    CHECK(wrong.grad_x_d.norm() > 0.1);
}

TEST_CASE("weight regularizer and total loss") {
    Architecture a;
    a.input_dim = 4;
    a.hidden = 4;
    Rng rng(5);
    Model m = Model::build(a, rng);
    ModelGrads g = ModelGrads::for_model(m);

    double sq = 0.0;
    int tensors = 0;
    for (const Mlp* net : {&m.nets.extractor, &m.nets.domain_decoupler, &m.nets.class_decoupler, &m.nets.domain_disc,
                           &m.nets.class_disc}) {
        for (std::size_t l = 0; l < net->num_layers(); ++l, ++tensors) sq += net->weight(l).squaredNorm();
    }
    sq += m.theta.squaredNorm();
    ++tensors;
    CHECK(weight_regularizer(m) == doctest::Approx(sq / tensors).epsilon(1e-12));

    const double beta = 0.01;
    weight_regularizer(m, &g, beta);
    for (const auto& pv : model_params(m, g)) {
        if (!pv.is_weight) continue;
        const auto fd = oracle::central_difference(pv.value, [&] { return beta * weight_regularizer(m); });
        for (std::size_t i = 0; i < fd.size(); ++i) CHECK(oracle::close(pv.grad[i], fd[i]));
    }

    Model zero = m;
    for (Mlp* net : {&zero.nets.extractor, &zero.nets.domain_decoupler, &zero.nets.class_decoupler,
                     &zero.nets.domain_disc, &zero.nets.class_disc})
        for (std::size_t l = 0; l < net->num_layers(); ++l) net->weight(l).setZero();
    zero.theta.setZero();
    CHECK(weight_regularizer(zero) == 0.0);

    CHECK(total_loss(0.7, 0.2, 5.0, 0.0) == 0.7 + 0.2);
    const double reg = weight_regularizer(m);
    CHECK(std::abs(total_loss(0.7, 0.2, reg, 0.01) - (0.7 + 0.2 + 0.01 * reg)) < 1e-12);
}

TEST_CASE("gradient clipping rescales the joint norm") {
    Architecture a;
    a.input_dim = 4;
    a.hidden = 4;
    Rng rng(6);
    Model m = Model::build(a, rng);
    ModelGrads g = ModelGrads::for_model(m);
    weight_regularizer(m, &g, 1.0);
    auto norm = [&] {
        double sq = 0.0;
        for (const auto& pv : model_params(m, g))
            for (double v : pv.grad) sq += v * v;
        return std::sqrt(sq);
    };
    const double before = norm();
    REQUIRE(before > 0.0);

    CHECK(clip_grad_norm(m, g, 0.0) == doctest::Approx(before).epsilon(1e-12));
    CHECK(norm() == doctest::Approx(before).epsilon(1e-12));
    CHECK(clip_grad_norm(m, g, 10.0 * before) == doctest::Approx(before).epsilon(1e-12));
    CHECK(norm() == doctest::Approx(before).epsilon(1e-12));

    const std::vector<double> first(model_params(m, g)[0].grad.begin(), model_params(m, g)[0].grad.end());
    CHECK(clip_grad_norm(m, g, 0.25 * before) == doctest::Approx(before).epsilon(1e-12));
    CHECK(norm() == doctest::Approx(0.25 * before).epsilon(1e-12));
    const auto after = model_params(m, g)[0].grad;
    for (std::size_t i = 0; i < first.size(); ++i) CHECK(after[i] == doctest::Approx(0.25 * first[i]).epsilon(1e-12));
}
