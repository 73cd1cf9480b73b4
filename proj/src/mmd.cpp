#include "matl/mmd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "matl/errors.hpp"

namespace matl {

namespace {

// Pairwise squared distances between the rows of a and b.
Matrix squared_distances(const Matrix& a, const Matrix& b) {
    const Vector an = a.rowwise().squaredNorm();
    const Vector bn = b.rowwise().squaredNorm();
    Matrix d = -2.0 * (a * b.transpose());
    d.colwise() += an;
    d.rowwise() += bn.transpose();
    return d.cwiseMax(0.0);
}

double kernel_sum(const Matrix& a, const Matrix& b, double sigma, bool exclude_diagonal) {
    const double scale = -1.0 / (2.0 * sigma * sigma);
    Matrix k = (squared_distances(a, b) * scale).array().exp().matrix();
    double total = k.sum();
    if (exclude_diagonal) total -= k.diagonal().sum();
    return total;
}

void check_sigma(double sigma) {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ConfigError("bandwidth", "sigma must be positive");
}

}  // namespace

double gaussian_kernel(std::span<const double> x, std::span<const double> y, double sigma) {
    check_sigma(sigma);
    if (x.size() != y.size()) throw DimensionError("kernel arguments differ in length");
    double d2 = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - y[i];
        d2 += d * d;
    }
    return std::exp(-d2 / (2.0 * sigma * sigma));
}

double median_heuristic_sigma(const std::vector<const Matrix*>& blocks, std::size_t max_rows) {
    std::size_t total = 0;
    Eigen::Index cols = -1;
    for (const auto* b : blocks) {
        total += static_cast<std::size_t>(b->rows());
        if (cols >= 0 && b->cols() != cols) throw DimensionError("median heuristic: blocks differ in width");
        cols = b->cols();
    }
    if (total < 2) throw SampleSizeError("median heuristic needs at least 2 rows");
    const std::size_t take = std::min(total, std::max<std::size_t>(max_rows, 2));
    Matrix pooled(static_cast<Eigen::Index>(take), cols);
    // row r of the subsample is global row floor(r * total / take)
    std::size_t block = 0, offset = 0;
    for (std::size_t r = 0; r < take; ++r) {
        const std::size_t global = r * total / take;
        while (global >= offset + static_cast<std::size_t>(blocks[block]->rows())) {
            offset += static_cast<std::size_t>(blocks[block]->rows());
            ++block;
        }
        pooled.row(static_cast<Eigen::Index>(r)) = blocks[block]->row(static_cast<Eigen::Index>(global - offset));
    }
    const Matrix d = squared_distances(pooled, pooled);
    std::vector<double> upper;
    upper.reserve(take * (take - 1) / 2);
    for (Eigen::Index j = 1; j < d.cols(); ++j) {
        for (Eigen::Index i = 0; i < j; ++i) upper.push_back(d(i, j));
    }
    auto mid = upper.begin() + static_cast<std::ptrdiff_t>(upper.size() / 2);
    std::nth_element(upper.begin(), mid, upper.end());
    double median = *mid;
    if (upper.size() % 2 == 0) {
        const double below = *std::max_element(upper.begin(), mid);
        median = 0.5 * (median + below);
    }
    if (!(median > 0.0)) median = 1.0;  // all rows coincide
    return std::sqrt(median / 2.0);
}

double resolve_bandwidth(const KernelConfig& cfg, const std::vector<const Matrix*>& blocks) {
    if (cfg.bandwidth) {
        check_sigma(*cfg.bandwidth);
        return *cfg.bandwidth;
    }
    return median_heuristic_sigma(blocks, cfg.median_max_rows);
}

double mmd2_unbiased(const Matrix& x, const Matrix& y, double sigma) {
    check_sigma(sigma);
    if (x.rows() < 2 || y.rows() < 2) throw SampleSizeError("unbiased MMD needs at least 2 rows per set");
    if (x.cols() != y.cols()) throw DimensionError("MMD sets differ in dimension");
    const double n = static_cast<double>(x.rows());
    const double m = static_cast<double>(y.rows());
    return kernel_sum(x, x, sigma, true) / (n * (n - 1.0)) + kernel_sum(y, y, sigma, true) / (m * (m - 1.0)) -
           2.0 * kernel_sum(x, y, sigma, false) / (n * m);
}

double mmd2_unbiased(const Matrix& x, const Matrix& y, const KernelConfig& cfg) {
    return mmd2_unbiased(x, y, resolve_bandwidth(cfg, {&x, &y}));
}

MmdMatrix mmd_matrix(const std::vector<Matrix>& domains, const KernelConfig& cfg) {
    const auto n = domains.size();
    std::vector<const Matrix*> blocks;
    for (std::size_t i = 0; i < n; ++i) {
        if (domains[i].rows() < 2) {
            throw SampleSizeError("domain " + std::to_string(i) + " has fewer than 2 feature rows");
        }
        blocks.push_back(&domains[i]);
    }
    MmdMatrix out;
    out.values = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    if (n == 0) return out;
    out.sigma = resolve_bandwidth(cfg, blocks);

    std::vector<double> within(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double r = static_cast<double>(domains[i].rows());
        within[i] = kernel_sum(domains[i], domains[i], out.sigma, true) / (r * (r - 1.0));
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double cross = kernel_sum(domains[i], domains[j], out.sigma, false) /
                                 (static_cast<double>(domains[i].rows()) * static_cast<double>(domains[j].rows()));
            const double v = std::max(0.0, within[i] + within[j] - 2.0 * cross);
            out.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
            out.values(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = v;
        }
    }
    return out;
}

std::string to_string(AggregateOn a) { return a == AggregateOn::Mmd ? "mmd" : "vectors"; }

AggregateOn aggregate_on_from_string(const std::string& s) {
    if (s == "mmd") return AggregateOn::Mmd;
    if (s == "vectors") return AggregateOn::Vectors;
    throw ConfigError("aggregate_on", "expected 'mmd' or 'vectors', got '" + s + "'");
}

std::vector<int> SuperdomainAssignment::members(int k) const {
    std::vector<int> out;
    for (std::size_t i = 0; i < assign.size(); ++i) {
        if (assign[i] == k) out.push_back(static_cast<int>(i));
    }
    return out;
}

double aggregation_objective(const MmdMatrix& m, std::span<const int> assign, int /*K*/) {
    double total = 0.0;
    for (std::size_t i = 0; i < assign.size(); ++i) {
        for (std::size_t j = i + 1; j < assign.size(); ++j) {
            if (assign[i] == assign[j]) total += m.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        }
    }
    return total;
}

SuperdomainAssignment single_superdomain(int n) {
    SuperdomainAssignment a;
    a.K = 1;
    a.assign.assign(static_cast<std::size_t>(n), 0);
    a.medoids = {0};
    return a;
}

SuperdomainAssignment identity_superdomains(int n) {
    SuperdomainAssignment a;
    a.K = n;
    a.assign.resize(static_cast<std::size_t>(n));
    std::iota(a.assign.begin(), a.assign.end(), 0);
    a.medoids = a.assign;
    return a;
}

namespace {

// k-means++ seeding: first pick uniform, then proportional to weight(i, nearest).
template <typename Dist>
std::vector<int> plusplus_seed(int n, int K, Rng& rng, Dist dist) {
    std::vector<int> chosen;
    std::uniform_int_distribution<int> first(0, n - 1);
    chosen.push_back(first(rng));
    std::vector<double> nearest(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
    while (static_cast<int>(chosen.size()) < K) {
        const int last = chosen.back();
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
            nearest[static_cast<std::size_t>(i)] = std::min(nearest[static_cast<std::size_t>(i)], dist(i, last));
            total += nearest[static_cast<std::size_t>(i)];
        }
        int pick = -1;
        if (total > 0.0) {
            std::uniform_real_distribution<double> u(0.0, total);
            double r = u(rng);
            for (int i = 0; i < n; ++i) {
                const double w = nearest[static_cast<std::size_t>(i)];
                if (w <= 0.0) continue;
                pick = i;
                if (r < w) break;
                r -= w;
            }
        }
        if (pick < 0 || std::find(chosen.begin(), chosen.end(), pick) != chosen.end()) {
            // all remaining weight is zero: lowest unchosen id
            for (int i = 0; i < n; ++i) {
                if (std::find(chosen.begin(), chosen.end(), i) == chosen.end()) {
                    pick = i;
                    break;
                }
            }
        }
        chosen.push_back(pick);
    }
    return chosen;
}

// Renumber superdomains in order of their lowest member id.
void canonicalize(SuperdomainAssignment& a) {
    std::vector<int> remap(static_cast<std::size_t>(a.K), -1);
    int next = 0;
    for (int s : a.assign) {
        if (remap[static_cast<std::size_t>(s)] < 0) remap[static_cast<std::size_t>(s)] = next++;
    }
    std::vector<int> medoids(static_cast<std::size_t>(a.K));
    for (int k = 0; k < a.K; ++k) medoids[static_cast<std::size_t>(remap[static_cast<std::size_t>(k)])] = a.medoids[static_cast<std::size_t>(k)];
    for (int& s : a.assign) s = remap[static_cast<std::size_t>(s)];
    a.medoids = std::move(medoids);
}

struct KMedoidsRun {
    std::vector<int> assign;
    std::vector<int> medoids;
    std::vector<double> cost_trace;
    std::vector<double> objective_trace;
};

KMedoidsRun kmedoids(const MmdMatrix& m, int K, Rng& rng, int max_rounds) {
    const int n = m.size();
    const auto& v = m.values;
    KMedoidsRun run;
    run.medoids = plusplus_seed(n, K, rng, [&](int i, int j) { return v(i, j); });
    run.assign.assign(static_cast<std::size_t>(n), 0);

    for (int round = 0; round < max_rounds; ++round) {
        // assignment: nearest medoid, ties toward the lowest medoid id; a
        // medoid always stays in its own cluster
        double cost = 0.0;
        for (int i = 0; i < n; ++i) {
            int best = -1;
            for (int k = 0; k < K; ++k) {
                const int med = run.medoids[static_cast<std::size_t>(k)];
                if (med == i) {
                    best = k;
                    break;
                }
                if (best < 0 || v(i, med) < v(i, run.medoids[static_cast<std::size_t>(best)]) ||
                    (v(i, med) == v(i, run.medoids[static_cast<std::size_t>(best)]) &&
                     med < run.medoids[static_cast<std::size_t>(best)])) {
                    best = k;
                }
            }
            run.assign[static_cast<std::size_t>(i)] = best;
            cost += v(i, run.medoids[static_cast<std::size_t>(best)]);
        }
        run.cost_trace.push_back(cost);
        run.objective_trace.push_back(aggregation_objective(m, run.assign, K));

        // medoid update: member minimizing within-cluster MMD^2 sum
        std::vector<int> next(run.medoids);
        for (int k = 0; k < K; ++k) {
            double best_sum = std::numeric_limits<double>::infinity();
            for (int i = 0; i < n; ++i) {
                if (run.assign[static_cast<std::size_t>(i)] != k) continue;
                double s = 0.0;
                for (int j = 0; j < n; ++j) {
                    if (run.assign[static_cast<std::size_t>(j)] == k) s += v(i, j);
                }
                // strict improvement keeps the current medoid on ties, so the
                // cost never increases; among equal challengers the lowest id wins
                const int cur = run.medoids[static_cast<std::size_t>(k)];
                if (s < best_sum || (s == best_sum && i == cur)) {
                    best_sum = s;
                    next[static_cast<std::size_t>(k)] = i;
                }
            }
        }
        if (next == run.medoids) break;
        run.medoids = std::move(next);
    }
    return run;
}

KMedoidsRun kmeans_vectors(const MmdMatrix& m, int K, Rng& rng, int max_rounds) {
    const int n = m.size();
    const Matrix& pts = m.values;  // row i is the distance vector of domain i
    auto sq = [&](int i, int j) { return (pts.row(i) - pts.row(j)).squaredNorm(); };
    KMedoidsRun run;
    const auto seeds = plusplus_seed(n, K, rng, sq);
    Matrix centroids(K, n);
    for (int k = 0; k < K; ++k) centroids.row(k) = pts.row(seeds[static_cast<std::size_t>(k)]);
    run.assign.assign(static_cast<std::size_t>(n), -1);
    for (int round = 0; round < max_rounds; ++round) {
        std::vector<int> next(static_cast<std::size_t>(n));
        double cost = 0.0;
        for (int i = 0; i < n; ++i) {
            int best = 0;
            double bd = std::numeric_limits<double>::infinity();
            for (int k = 0; k < K; ++k) {
                const double d = (pts.row(i) - centroids.row(k)).squaredNorm();
                if (d < bd) {
                    bd = d;
                    best = k;
                }
            }
            next[static_cast<std::size_t>(i)] = best;
            cost += bd;
        }
        // empty cluster: take the point farthest from its centroid
        for (int k = 0; k < K; ++k) {
            if (std::find(next.begin(), next.end(), k) != next.end()) continue;
            int far = 0;
            double fd = -1.0;
            for (int i = 0; i < n; ++i) {
                const int c = next[static_cast<std::size_t>(i)];
                if (std::count(next.begin(), next.end(), c) < 2) continue;
                const double d = (pts.row(i) - centroids.row(c)).squaredNorm();
                if (d > fd) {
                    fd = d;
                    far = i;
                }
            }
            next[static_cast<std::size_t>(far)] = k;
        }
        run.cost_trace.push_back(cost);
        run.objective_trace.push_back(aggregation_objective(m, next, K));
        const bool settled = next == run.assign;
        run.assign = std::move(next);
        if (settled) break;
        centroids.setZero();
        std::vector<int> counts(static_cast<std::size_t>(K), 0);
        for (int i = 0; i < n; ++i) {
            centroids.row(run.assign[static_cast<std::size_t>(i)]) += pts.row(i);
            ++counts[static_cast<std::size_t>(run.assign[static_cast<std::size_t>(i)])];
        }
        for (int k = 0; k < K; ++k) centroids.row(k) /= static_cast<double>(counts[static_cast<std::size_t>(k)]);
    }
    run.medoids.assign(static_cast<std::size_t>(K), -1);
    for (int k = 0; k < K; ++k) {
        double bd = std::numeric_limits<double>::infinity();
        for (int i = 0; i < n; ++i) {
            if (run.assign[static_cast<std::size_t>(i)] != k) continue;
            const double d = (pts.row(i) - centroids.row(k)).squaredNorm();
            if (d < bd) {
                bd = d;
                run.medoids[static_cast<std::size_t>(k)] = i;
            }
        }
    }
    return run;
}

// Ensures every superdomain is non-empty by moving the domain farthest from
// its medoid (within a cluster of size > 1) into each empty one.
void repair_empty(const MmdMatrix& m, KMedoidsRun& run, int K) {
    const int n = m.size();
    for (int k = 0; k < K; ++k) {
        if (std::find(run.assign.begin(), run.assign.end(), k) != run.assign.end()) continue;
        int far = -1;
        double fd = -1.0;
        for (int i = 0; i < n; ++i) {
            const int c = run.assign[static_cast<std::size_t>(i)];
            if (std::count(run.assign.begin(), run.assign.end(), c) < 2) continue;
            if (run.medoids[static_cast<std::size_t>(c)] == i) continue;
            const double d = m.values(i, run.medoids[static_cast<std::size_t>(c)]);
            if (d > fd) {
                fd = d;
                far = i;
            }
        }
        if (far < 0) throw Error("aggregation left an empty superdomain");
        run.assign[static_cast<std::size_t>(far)] = k;
        run.medoids[static_cast<std::size_t>(k)] = far;
    }
}

}  // namespace

SuperdomainAssignment aggregate(const MmdMatrix& m, int K, Rng& rng, const AggregateOptions& opts) {
    const int n = m.size();
    if (K < 1) throw ConfigError("K", "must be at least 1");
    if (K > n) {
        throw ConfigError("K", "cannot form " + std::to_string(K) + " superdomains from " + std::to_string(n) +
                                   " domains");
    }
    if (opts.restarts < 1 || opts.max_rounds < 1) throw ConfigError("restarts", "must be positive");
    if (K == 1) {
        SuperdomainAssignment a = single_superdomain(n);
        const Vector sums = m.values.rowwise().sum();
        Eigen::Index best = 0;
        for (Eigen::Index i = 1; i < sums.size(); ++i) {
            if (sums(i) < sums(best)) best = i;
        }
        a.medoids = {static_cast<int>(best)};
        a.objective = aggregation_objective(m, a.assign, 1);
        a.medoid_cost_trace = {sums(best)};
        a.objective_trace = {a.objective};
        return a;
    }

    SuperdomainAssignment best;
    bool have = false;
    for (int r = 0; r < opts.restarts; ++r) {
        KMedoidsRun run = opts.on == AggregateOn::Mmd ? kmedoids(m, K, rng, opts.max_rounds)
                                                      : kmeans_vectors(m, K, rng, opts.max_rounds);
        repair_empty(m, run, K);
        const double obj = aggregation_objective(m, run.assign, K);
        if (!have || obj < best.objective) {
            best.K = K;
            best.assign = std::move(run.assign);
            best.medoids = std::move(run.medoids);
            best.objective = obj;
            best.medoid_cost_trace = std::move(run.cost_trace);
            best.objective_trace = std::move(run.objective_trace);
            have = true;
        }
    }
    canonicalize(best);
    return best;
}

}  // namespace matl
