#include <doctest.h>

#include <cmath>

#include "matl/errors.hpp"
#include "matl/nn.hpp"
#include "oracles.hpp"

using namespace matl;

namespace {

Mlp single_layer(int in, int out, Activation act, double slope = 0.01) {
    Rng rng(1);
    return Mlp({{in, out, act, slope, 0.0}}, rng);
}

// Sum of a fixed random projection of the output, so every output entry matters.
double probe_loss(const Mlp& net, const Matrix& x, const Matrix& proj) {
    return net.forward(x, Mode::Eval).cwiseProduct(proj).sum();
}

}  // namespace

TEST_CASE("identity layer passes input through") {
    Mlp net = single_layer(2, 2, Activation::Identity);
    net.weight(0) = Matrix::Identity(2, 2);
    Matrix x(1, 2);
    x << 1, 2;
    const Matrix y = net.forward(x, Mode::Eval);
    CHECK(y(0, 0) == 1.0);
    CHECK(y(0, 1) == 2.0);
}

TEST_CASE("zero weights return the bias on every row") {
    Mlp net = single_layer(3, 2, Activation::Identity);
    net.weight(0).setZero();
    net.bias(0) << 0.5, -1.5;
    std::mt19937_64 rng(3);
    const Matrix y = net.forward(oracle::random_matrix(4, 3, rng), Mode::Eval);
    for (int i = 0; i < 4; ++i) {
        CHECK(y(i, 0) == 0.5);
        CHECK(y(i, 1) == -1.5);
    }
}

TEST_CASE("LeakyRelu with slope 0.01") {
    Mlp net = single_layer(2, 2, Activation::LeakyRelu, 0.01);
    net.weight(0) = Matrix::Identity(2, 2);
    Matrix x(1, 2);
    x << -1, 2;
    const Matrix y = net.forward(x, Mode::Eval);
    CHECK(y(0, 0) == doctest::Approx(-0.01).epsilon(1e-15));
    CHECK(y(0, 1) == 2.0);
}

TEST_CASE("forward rejects bad shapes and non-finite input") {
    Mlp net = single_layer(3, 2, Activation::Relu);
    CHECK_THROWS_AS(net.forward(Matrix::Zero(2, 4), Mode::Eval), DimensionError);
    Matrix x = Matrix::Zero(1, 3);
    x(0, 1) = std::nan("");
    CHECK_THROWS_AS(net.forward(x, Mode::Eval), ValidationError);
}

TEST_CASE("backward without a cached forward is a state error") {
    Mlp net = single_layer(3, 2, Activation::Relu);
    GradTape tape = net.make_tape();
    ForwardCache empty;
    CHECK_THROWS_AS(net.backward(empty, Matrix::Zero(1, 2), tape), StateError);
}

TEST_CASE("linear layer gradient is g x^T and W^T g") {
    Mlp net = single_layer(3, 2, Activation::Identity);
    std::mt19937_64 rng(5);
    const Matrix x = oracle::random_matrix(1, 3, rng);
    const Matrix g = oracle::random_matrix(1, 2, rng);
    ForwardCache cache;
    net.forward(x, Mode::Train, nullptr, &cache);
    GradTape tape = net.make_tape();
    const Matrix dx = net.backward(cache, g, tape);
    CHECK((tape.weights[0] - g.transpose() * x).norm() < 1e-14);
    CHECK((dx - g * net.weight(0)).norm() < 1e-14);
}

TEST_CASE("zero upstream gives zero parameter gradients") {
    Rng init(2);
    Mlp net({{4, 5, Activation::Relu, 0.0, 0.0}, {5, 3, Activation::Sigmoid, 0.0, 0.0}}, init);
    std::mt19937_64 rng(7);
    ForwardCache cache;
    net.forward(oracle::random_matrix(6, 4, rng), Mode::Train, nullptr, &cache);
    GradTape tape = net.make_tape();
    net.backward(cache, Matrix::Zero(6, 3), tape);
    for (const auto& w : tape.weights) CHECK(w.norm() == 0.0);
    for (const auto& b : tape.biases) CHECK(b.norm() == 0.0);
}

TEST_CASE("three-layer net matches central differences") {
    Rng init(11);
    Mlp net({{8, 7, Activation::LeakyRelu, 0.01, 0.0},
             {7, 6, Activation::Sigmoid, 0.0, 0.0},
             {6, 4, Activation::Relu, 0.0, 0.0}},
            init);
    std::mt19937_64 rng(13);
    const Matrix x = oracle::random_matrix(5, 8, rng);
    const Matrix proj = oracle::random_matrix(5, 4, rng);
    ForwardCache cache;
    net.forward(x, Mode::Train, nullptr, &cache);
    GradTape tape = net.make_tape();
    net.backward(cache, proj, tape);
    int checked = 0;
    for (const auto& pv : net.params(tape)) {
        const auto fd = oracle::central_difference(pv.value, [&] { return probe_loss(net, x, proj); }, 1e-4);
        for (std::size_t i = 0; i < fd.size(); ++i, ++checked) {
            INFO("entry " << i);
            CHECK(oracle::close(pv.grad[i], fd[i]));
        }
    }
    CHECK(checked == static_cast<int>(net.parameter_count()));
}

TEST_CASE("GRL forward is identity and backward is -lambda") {
    Matrix x(1, 2);
    x << 3.5, -1;
    CHECK(grl_forward(x) == x);
    Matrix g(1, 2);
    g << 2, -4;
    const Matrix r = grl_backward(g, 1.0);
    CHECK(r(0, 0) == -2.0);
    CHECK(r(0, 1) == 4.0);
    CHECK(grl_backward(g, 0.3) == -0.3 * g);
}

TEST_CASE("dropout is a no-op in eval mode and drops about p in train mode") {
    Rng init(1);
    Mlp net({{4, 4, Activation::Identity, 0.0, 0.25}}, init);
    std::mt19937_64 rng(3);
    const Matrix x = oracle::random_matrix(3, 4, rng);
    CHECK(net.forward(x, Mode::Eval) == net.forward(x, Mode::Eval));
    CHECK_THROWS_AS(net.forward(x, Mode::Train), StateError);

    net.weight(0) = Matrix::Identity(4, 4);
    Rng drop(17);
    const Matrix ones = Matrix::Ones(25000, 4);
    const Matrix y = net.forward(ones, Mode::Train, &drop);
    const double zero_fraction = static_cast<double>((y.array() == 0.0).count()) / static_cast<double>(y.size());
    CHECK(std::abs(zero_fraction - 0.25) < 0.02);
}

TEST_CASE("bce analytic values and oracle") {
    const Matrix half = Matrix::Constant(3, 2, 0.5);
    Matrix y = Matrix::Zero(3, 2);
    y(0, 0) = y(1, 1) = y(2, 0) = 1.0;
    CHECK(bce(half, y).loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    Matrix perfect = y;
    CHECK(bce(perfect, y).loss <= 1e-6);

    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(0.01, 0.99);
    Matrix p(6, 4);
    for (int i = 0; i < p.size(); ++i) p.data()[i] = u(rng);
    const Matrix t = one_hot(std::vector<int>{0, 1, 2, 3, 1, 0}, 4);
    CHECK(std::abs(bce(p, t).loss - oracle::bce(p, t)) < 1e-9);
    CHECK_THROWS_AS(bce(p, Matrix::Zero(6, 3)), DimensionError);
}

TEST_CASE("bce is non-negative and its gradient matches finite differences") {
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> u(0.05, 0.95);
    Matrix p(4, 3);
    for (int i = 0; i < p.size(); ++i) p.data()[i] = u(rng);
    const Matrix t = one_hot(std::vector<int>{0, 2, 1, 1}, 3);
    const LossGrad lg = bce(p, t);
    CHECK(lg.loss >= 0.0);
    const auto fd = oracle::central_difference(std::span<double>(p.data(), 12), [&] { return bce(p, t).loss; });
    for (int i = 0; i < 12; ++i) CHECK(oracle::close(lg.grad.data()[i], fd[static_cast<std::size_t>(i)]));
}

TEST_CASE("sgd step") {
    Matrix w = Matrix::Constant(1, 1, 1.0);
    Matrix g = 2.0 * w;  // d(w^2)/dw
    sgd_step(w, g, {0.1, 0.0});
    CHECK(w(0, 0) == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(g(0, 0) == 0.0);

    Mlp net = single_layer(3, 2, Activation::Relu);
    const Matrix before = net.weight(0);
    GradTape tape = net.make_tape();
    tape.weights[0].setOnes();
    sgd_step(net, tape, {0.0, 0.0});
    CHECK(net.weight(0) == before);
    CHECK(tape.weights[0].norm() == 0.0);

    tape.weights[0].setZero();
    sgd_step(net, tape, {0.5, 0.1});
    CHECK((net.weight(0) - before * (1.0 - 0.05)).norm() < 1e-14);
}
