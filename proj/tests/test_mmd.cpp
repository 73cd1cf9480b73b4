#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "matl/errors.hpp"
#include "matl/mmd.hpp"
#include "oracles.hpp"

using namespace matl;

namespace {

// Domains drawn around three well-separated group means.
std::vector<Matrix> planted_domains(int n_domains, int rows, int dim, double gap, std::uint64_t seed,
                                    std::vector<int>* groups = nullptr) {
    std::mt19937_64 rng(seed);
    const Matrix centers = oracle::random_matrix(3, dim, rng, gap);
    std::vector<Matrix> out;
    if (groups) groups->clear();
    for (int d = 0; d < n_domains; ++d) {
        const int g = d % 3;
        if (groups) groups->push_back(g);
        Matrix x = oracle::random_matrix(rows, dim, rng);
        x.rowwise() += centers.row(g);
        out.push_back(x);
    }
    return out;
}

bool non_increasing(const std::vector<double>& xs) {
    for (std::size_t i = 1; i < xs.size(); ++i)
        if (xs[i] > xs[i - 1] + 1e-12) return false;
    return true;
}

}  // namespace

TEST_CASE("gaussian kernel") {
    const std::vector<double> a{1.0, 2.0}, b{1.0, 2.0};
    CHECK(gaussian_kernel(a, b, 0.7) == 1.0);
    const std::vector<double> c{1.0 + std::sqrt(2.0) * 0.5, 2.0};
    CHECK(gaussian_kernel(a, c, 0.5) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
    double prev = 1.0;
    for (double step : {0.5, 1.0, 2.0, 4.0, 8.0}) {
        const std::vector<double> d{1.0 + step, 2.0};
        const double k = gaussian_kernel(a, d, 1.0);
        CHECK(k < prev);
        prev = k;
    }
    CHECK(prev < 1e-12);
}

TEST_CASE("mmd2_unbiased equals the double-sum oracle") {
    std::mt19937_64 rng(41);
    std::uniform_int_distribution<int> size(2, 10), dims(1, 8);
    for (int c = 0; c < 50; ++c) {
        const int d = dims(rng);
        const Matrix x = oracle::random_matrix(size(rng), d, rng);
        const Matrix y = oracle::random_matrix(size(rng), d, rng, 1.5, 0.5);
        const double sigma = 0.5 + 0.1 * c;
        CHECK(std::abs(mmd2_unbiased(x, y, sigma) - oracle::mmd2(x, y, sigma)) < 1e-12);
        CHECK(std::abs(mmd2_unbiased(x, y, sigma) - mmd2_unbiased(y, x, sigma)) < 1e-12);
    }
    const Matrix x = oracle::random_matrix(3, 4, rng), y = oracle::random_matrix(3, 4, rng);
    CHECK(std::abs(mmd2_unbiased(x, y, 1.3) - oracle::mmd2(x, y, 1.3)) < 1e-12);
}

TEST_CASE("mmd2_unbiased needs two rows per side") {
    std::mt19937_64 rng(1);
    CHECK_THROWS_AS(mmd2_unbiased(oracle::random_matrix(1, 3, rng), oracle::random_matrix(4, 3, rng), 1.0),
                    SampleSizeError);
    CHECK_THROWS_AS(mmd2_unbiased(oracle::random_matrix(4, 3, rng), oracle::random_matrix(1, 3, rng), 1.0),
                    SampleSizeError);
}

TEST_CASE("same rows give an estimate near zero") {
    // With Y = X the estimator's expectation is -2(1 - mean kernel)/n, so the
    // +-0.02 band is only guaranteed once n reaches 100.
    std::mt19937_64 rng(43);
    for (int n : {100, 200}) {
        const Matrix x = oracle::random_matrix(n, 8, rng);
        const double v = mmd2_unbiased(x, x, KernelConfig::median());
        CHECK(std::abs(v) <= 0.02);
    }
}

TEST_CASE("identical distributions stay within 0.02 and a 3-unit mean gap is large") {
    std::mt19937_64 rng(47);
    const Matrix a = oracle::random_matrix(200, 64, rng);
    const Matrix b = oracle::random_matrix(200, 64, rng);
    const Matrix far = oracle::random_matrix(200, 64, rng, 1.0, 3.0);
    const double same = mmd2_unbiased(a, b, KernelConfig::median());
    const double apart = mmd2_unbiased(a, far, KernelConfig::median());
    CHECK(std::abs(same) <= 0.02);
    CHECK(apart > 0.5);
    CHECK(apart >= 10.0 * std::abs(same));
}

TEST_CASE("mmd2 increases with the mean gap") {
    const std::vector<double> gaps{0.0, 1.0, 2.0, 4.0};
    std::vector<double> avg(gaps.size(), 0.0);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        std::mt19937_64 rng(100 + seed);
        const Matrix x = oracle::random_matrix(200, 4, rng);
        for (std::size_t g = 0; g < gaps.size(); ++g) {
            Matrix y = oracle::random_matrix(200, 4, rng);
            y.col(0).array() += gaps[g];
            avg[g] += mmd2_unbiased(x, y, KernelConfig::median()) / 5.0;
        }
    }
    for (std::size_t g = 1; g < gaps.size(); ++g) CHECK(avg[g] > avg[g - 1]);
}

TEST_CASE("median heuristic") {
    Matrix x(3, 1);
    x << 0, 1, 3;
    // squared distances 1, 9, 4 -> median 4 -> sigma^2 = 2
    CHECK(median_heuristic_sigma({&x}) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
    CHECK(resolve_bandwidth(KernelConfig::fixed(0.3), {&x}) == 0.3);
}

TEST_CASE("mmd matrix geometry") {
    std::mt19937_64 rng(53);
    std::vector<Matrix> same;
    for (int i = 0; i < 4; ++i) same.push_back(oracle::random_matrix(150, 6, rng));
    const MmdMatrix flat = mmd_matrix(same, KernelConfig::median());
    for (int i = 0; i < 4; ++i) {
        CHECK(flat.values(i, i) == 0.0);
        for (int j = 0; j < 4; ++j) {
            CHECK(flat.values(i, j) < 0.05);
            CHECK(flat.values(i, j) >= 0.0);
            CHECK(flat.values(i, j) == flat.values(j, i));
        }
    }

    std::vector<Matrix> three{oracle::random_matrix(150, 6, rng), oracle::random_matrix(150, 6, rng),
                              oracle::random_matrix(150, 6, rng, 1.0, 2.0)};
    const MmdMatrix m = mmd_matrix(three, KernelConfig::median());
    CHECK(m.values(0, 2) >= 5.0 * m.values(0, 1));
    CHECK(m.values(1, 2) >= 5.0 * m.values(0, 1));
    CHECK(m.values(0, 2) > 0.0);

    three.push_back(oracle::random_matrix(1, 6, rng));
    CHECK_THROWS_AS(mmd_matrix(three, KernelConfig::median()), SampleSizeError);
}

TEST_CASE("aggregate trivial K") {
    std::vector<int> groups;
    const MmdMatrix m = mmd_matrix(planted_domains(6, 60, 4, 3.0, 7, &groups), KernelConfig::median());
    Rng rng(1);

    const SuperdomainAssignment all = aggregate(m, 6, rng);
    CHECK(std::set<int>(all.assign.begin(), all.assign.end()).size() == 6);
    CHECK(all.objective == 0.0);

    const SuperdomainAssignment one = aggregate(m, 1, rng);
    for (int s : one.assign) CHECK(s == 0);
    const Vector sums = m.values.rowwise().sum();
    Eigen::Index argmin = 0;
    sums.minCoeff(&argmin);
    CHECK(one.medoids == std::vector<int>{static_cast<int>(argmin)});

    CHECK_THROWS_AS(aggregate(m, 7, rng), ConfigError);
    CHECK_THROWS_AS(aggregate(m, 0, rng), ConfigError);
}

TEST_CASE("aggregate recovers planted groups and the exhaustive minimum") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        std::vector<int> groups;
        const MmdMatrix m = mmd_matrix(planted_domains(6, 60, 4, 3.0, 200 + seed, &groups), KernelConfig::median());
        Rng rng(seed);
        const SuperdomainAssignment a = aggregate(m, 3, rng);
        CHECK(oracle::same_partition(a.assign, groups));
        CHECK(std::abs(a.objective - oracle::best_partition(m.values, 3)) < 1e-12);
        CHECK(std::abs(a.objective - oracle::partition_objective(m.values, a.assign)) < 1e-12);
        CHECK(non_increasing(a.objective_trace));
        CHECK(non_increasing(a.medoid_cost_trace));
    }
}

TEST_CASE("aggregate on random dissimilarities") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        std::mt19937_64 gen(300 + seed);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        const int n = 4 + static_cast<int>(seed % 5);
        MmdMatrix m;
        m.values = Matrix::Zero(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) m.values(i, j) = m.values(j, i) = u(gen);
        for (int K = 1; K <= n; ++K) {
            Rng rng(seed);
            const SuperdomainAssignment a = aggregate(m, K, rng);
            CHECK(std::set<int>(a.assign.begin(), a.assign.end()).size() == static_cast<std::size_t>(K));
            CHECK(non_increasing(a.medoid_cost_trace));
            CHECK(a.objective >= oracle::best_partition(m.values, K) - 1e-12);
        }
    }
}

TEST_CASE("vector aggregation also recovers planted groups") {
    std::vector<int> groups;
    const MmdMatrix m = mmd_matrix(planted_domains(6, 60, 4, 3.0, 11, &groups), KernelConfig::median());
    Rng rng(2);
    AggregateOptions opts;
    opts.on = AggregateOn::Vectors;
    CHECK(oracle::same_partition(aggregate(m, 3, rng, opts).assign, groups));
}

TEST_CASE("aggregate is deterministic for a fixed generator") {
    const MmdMatrix m = mmd_matrix(planted_domains(8, 40, 4, 1.0, 13), KernelConfig::median());
    Rng a(5), b(5);
    CHECK(aggregate(m, 3, a).assign == aggregate(m, 3, b).assign);
}
