#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "matl/types.hpp"

namespace matl {

// Gaussian kernel bandwidth: an explicit sigma, or the median heuristic
// (sigma^2 = median pairwise squared distance / 2).
struct KernelConfig {
    std::optional<double> bandwidth;
    std::size_t median_max_rows = 2000;

    static KernelConfig median() { return {}; }
    static KernelConfig fixed(double sigma) { return {sigma, 2000}; }
    bool is_median() const noexcept { return !bandwidth.has_value(); }
};

double gaussian_kernel(std::span<const double> x, std::span<const double> y, double sigma);

// Median heuristic over the rows of all blocks; at most `max_rows` rows are
// used, taken at an even stride so the result is deterministic.
double median_heuristic_sigma(const std::vector<const Matrix*>& blocks, std::size_t max_rows = 2000);

double resolve_bandwidth(const KernelConfig& cfg, const std::vector<const Matrix*>& blocks);

// Unbiased squared MMD; self-pairs are excluded from the within-set sums.
double mmd2_unbiased(const Matrix& x, const Matrix& y, double sigma);
double mmd2_unbiased(const Matrix& x, const Matrix& y, const KernelConfig& cfg);

struct MmdMatrix {
    Matrix values;  // N x N squared MMD, zero diagonal, symmetric, non-negative
    double sigma = 0.0;

    int size() const noexcept { return static_cast<int>(values.rows()); }
};

// One shared bandwidth for all pairs. Negative estimates are clamped to 0.
MmdMatrix mmd_matrix(const std::vector<Matrix>& domains, const KernelConfig& cfg);

enum class AggregateOn {
    Mmd,      // k-medoids over raw MMD^2 dissimilarities
    Vectors,  // Euclidean k-means++ over the rows of the MMD matrix
};

std::string to_string(AggregateOn a);
AggregateOn aggregate_on_from_string(const std::string& s);

struct SuperdomainAssignment {
    int K = 1;
    std::vector<int> assign;   // domain -> superdomain in [0, K)
    std::vector<int> medoids;  // K domain ids
    double objective = 0.0;    // within-cluster pairwise MMD^2 sum
    std::vector<double> medoid_cost_trace;  // per assign/update round
    std::vector<double> objective_trace;    // within-cluster pairwise sum per round

    std::vector<int> members(int k) const;
};

struct AggregateOptions {
    AggregateOn on = AggregateOn::Mmd;
    int restarts = 10;
    int max_rounds = 100;
};

// Sum over superdomains of the MMD^2 of every unordered pair of member domains.
double aggregation_objective(const MmdMatrix& m, std::span<const int> assign, int K);

// k-medoids with k-means++ seeding over the MMD^2 matrix.
SuperdomainAssignment aggregate(const MmdMatrix& m, int K, Rng& rng, const AggregateOptions& opts = {});

// Every domain in one superdomain.
SuperdomainAssignment single_superdomain(int n);
// Every domain its own superdomain.
SuperdomainAssignment identity_superdomains(int n);

}  // namespace matl
