#include "matl/proto.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include "matl/errors.hpp"

namespace matl {

void AlphaSchedule::validate() const {
    if (!(alpha_low > 0.0 && alpha_low <= 1.0)) throw ConfigError("alpha_l", "must lie in (0, 1]");
    if (!(alpha_high > 0.0 && alpha_high <= 1.0)) throw ConfigError("alpha_h", "must lie in (0, 1]");
    if (alpha_high < alpha_low) throw ConfigError("alpha_h", "must be >= alpha_l");
    if (!(power > 0.0)) throw ConfigError("p", "must be positive");
    if (max_epoch < 1) throw ConfigError("max_epoch", "must be positive");
}

double alpha_at(int t, const AlphaSchedule& sched) {
    if (t < 0 || t > sched.max_epoch) {
        throw ConfigError("t", "epoch " + std::to_string(t) + " outside [0, " + std::to_string(sched.max_epoch) + "]");
    }
    const double frac = 1.0 - static_cast<double>(t) / static_cast<double>(sched.max_epoch);
    return sched.alpha_low + (sched.alpha_high - sched.alpha_low) * std::pow(frac, sched.power);
}

Vector compute_domain_prototype(const Matrix& rows) {
    if (rows.rows() == 0) throw StateError("empty superdomain has no domain prototype");
    return rows.colwise().mean().transpose();
}

std::optional<Vector> compute_class_prototype(const Matrix& rows, std::span<const int> labels, int cls) {
    if (static_cast<std::size_t>(rows.rows()) != labels.size()) {
        throw DimensionError("class prototype: label count does not match rows");
    }
    Vector sum = Vector::Zero(rows.cols());
    std::size_t count = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != cls) continue;
        sum += rows.row(static_cast<Eigen::Index>(i)).transpose();
        ++count;
    }
    if (count == 0) return std::nullopt;
    return Vector(sum / static_cast<double>(count));
}

FreshPrototypes compute_fresh_prototypes(const Matrix& x_d, const Matrix& x_c, std::span<const int> superdomain,
                                         std::span<const int> labels, int K, int M) {
    const auto n = static_cast<std::size_t>(x_d.rows());
    if (static_cast<std::size_t>(x_c.rows()) != n || superdomain.size() != n || labels.size() != n) {
        throw DimensionError("fresh prototypes: inputs disagree on row count");
    }
    FreshPrototypes f;
    f.domain = Matrix::Zero(K, x_d.cols());
    f.has_domain.assign(static_cast<std::size_t>(K), 0);
    f.cls.assign(static_cast<std::size_t>(K), Matrix::Zero(M, x_c.cols()));
    f.has_class.assign(static_cast<std::size_t>(K * M), 0);
    std::vector<double> dcount(static_cast<std::size_t>(K), 0.0);
    std::vector<double> ccount(static_cast<std::size_t>(K * M), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const int k = superdomain[i];
        const int m = labels[i];
        if (k < 0 || k >= K || m < 0 || m >= M) throw DimensionError("fresh prototypes: index out of range");
        f.domain.row(k) += x_d.row(static_cast<Eigen::Index>(i));
        dcount[static_cast<std::size_t>(k)] += 1.0;
        f.cls[static_cast<std::size_t>(k)].row(m) += x_c.row(static_cast<Eigen::Index>(i));
        ccount[static_cast<std::size_t>(k * M + m)] += 1.0;
    }
    for (int k = 0; k < K; ++k) {
        if (dcount[static_cast<std::size_t>(k)] > 0) {
            f.domain.row(k) /= dcount[static_cast<std::size_t>(k)];
            f.has_domain[static_cast<std::size_t>(k)] = 1;
        }
        for (int m = 0; m < M; ++m) {
            const auto s = static_cast<std::size_t>(k * M + m);
            if (ccount[s] > 0) {
                f.cls[static_cast<std::size_t>(k)].row(m) /= ccount[s];
                f.has_class[s] = 1;
            }
        }
    }
    return f;
}

PrototypeBank::PrototypeBank(int K, int M, int dim)
    : M_(M),
      domain_(Matrix::Zero(K, dim)),
      class_(static_cast<std::size_t>(K), Matrix::Zero(M, dim)),
      domain_init_(static_cast<std::size_t>(K), 0),
      class_init_(static_cast<std::size_t>(K) * static_cast<std::size_t>(M), 0) {
    if (K < 1 || M < 1 || dim < 1) throw DimensionError("prototype bank dimensions must be positive");
}

bool PrototypeBank::all_domains_ready() const {
    return std::all_of(domain_init_.begin(), domain_init_.end(), [](char c) { return c != 0; });
}

int PrototypeBank::ready_class_count(int k) const {
    int n = 0;
    for (int m = 0; m < M_; ++m) n += class_ready(k, m) ? 1 : 0;
    return n;
}

const Vector PrototypeBank::domain(int k) const {
    if (!domain_ready(k)) throw StateError("domain prototype " + std::to_string(k) + " is uninitialized");
    return domain_.row(k).transpose();
}

const Vector PrototypeBank::cls(int k, int m) const {
    if (!class_ready(k, m)) {
        throw StateError("class prototype (" + std::to_string(k) + ", " + std::to_string(m) + ") is uninitialized");
    }
    return class_[static_cast<std::size_t>(k)].row(m).transpose();
}

void PrototypeBank::set_domain(int k, const Vector& v) {
    if (v.size() != domain_.cols()) throw DimensionError("domain prototype width mismatch");
    domain_.row(k) = v.transpose();
    domain_init_.at(static_cast<std::size_t>(k)) = 1;
}

void PrototypeBank::set_class(int k, int m, const Vector& v) {
    if (v.size() != domain_.cols()) throw DimensionError("class prototype width mismatch");
    class_.at(static_cast<std::size_t>(k)).row(m) = v.transpose();
    class_init_.at(slot(k, m)) = 1;
}

PrototypeBank adaptive_update(const PrototypeBank& bank, const FreshPrototypes& fresh, double alpha) {
    if (fresh.K() != bank.K()) throw DimensionError("fresh prototypes and bank differ in K");
    PrototypeBank out = bank;
    for (int k = 0; k < bank.K(); ++k) {
        if (fresh.has_domain[static_cast<std::size_t>(k)]) {
            const Vector f = fresh.domain.row(k).transpose();
            out.set_domain(k, bank.domain_ready(k) ? Vector((1.0 - alpha) * bank.domain(k) + alpha * f) : f);
        }
        for (int m = 0; m < bank.M(); ++m) {
            if (!fresh.has_class[static_cast<std::size_t>(k * bank.M() + m)]) continue;
            const Vector f = fresh.cls[static_cast<std::size_t>(k)].row(m).transpose();
            out.set_class(k, m, bank.class_ready(k, m) ? Vector((1.0 - alpha) * bank.cls(k, m) + alpha * f) : f);
        }
    }
    return out;
}

PrototypeBank adaptive_update(const PrototypeBank& bank, const FreshPrototypes& fresh, int t,
                              const AlphaSchedule& sched) {
    PrototypeBank out = adaptive_update(bank, fresh, alpha_at(t, sched));
    out.set_epoch(t);
    return out;
}

PrototypeBank rekey(const PrototypeBank& old, const FreshPrototypes& fresh, std::vector<int>* matching) {
    const int K = fresh.K();
    PrototypeBank out(K, old.M(), old.dim());
    out.set_epoch(old.epoch());
    std::vector<std::tuple<double, int, int>> pairs;  // distance, new, old
    for (int j = 0; j < K; ++j) {
        if (!fresh.has_domain[static_cast<std::size_t>(j)]) continue;
        for (int k = 0; k < old.K(); ++k) {
            if (!old.domain_ready(k)) continue;
            pairs.emplace_back((fresh.domain.row(j) - old.domain_matrix().row(k)).norm(), j, k);
        }
    }
    std::sort(pairs.begin(), pairs.end());
    std::vector<int> match(static_cast<std::size_t>(K), -1);
    std::vector<char> used(static_cast<std::size_t>(old.K()), 0);
    for (const auto& [d, j, k] : pairs) {
        if (match[static_cast<std::size_t>(j)] >= 0 || used[static_cast<std::size_t>(k)]) continue;
        match[static_cast<std::size_t>(j)] = k;
        used[static_cast<std::size_t>(k)] = 1;
    }
    for (int j = 0; j < K; ++j) {
        const int k = match[static_cast<std::size_t>(j)];
        if (k < 0) continue;
        out.set_domain(j, old.domain(k));
        for (int m = 0; m < old.M(); ++m) {
            if (old.class_ready(k, m)) out.set_class(j, m, old.cls(k, m));
        }
    }
    if (matching) *matching = std::move(match);
    return out;
}

}  // namespace matl
