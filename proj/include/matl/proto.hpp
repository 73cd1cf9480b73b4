#pragma once

#include <optional>
#include <span>
#include <vector>

#include "matl/types.hpp"

namespace matl {

// alpha(t) = alpha_low + (alpha_high - alpha_low) * (1 - t / max_epoch)^power
struct AlphaSchedule {
    double alpha_high = 0.8;
    double alpha_low = 0.2;
    double power = 2.0;
    int max_epoch = 100;

    void validate() const;
};

double alpha_at(int t, const AlphaSchedule& sched);

// Mean of the rows. Throws on an empty set.
Vector compute_domain_prototype(const Matrix& rows);

// Mean of the rows labelled `cls`; nullopt when the class is absent.
std::optional<Vector> compute_class_prototype(const Matrix& rows, std::span<const int> labels, int cls);

// Prototypes computed from one epoch's features. Slots without data are
// flagged off and leave the bank untouched.
struct FreshPrototypes {
    Matrix domain;                    // K x D
    std::vector<char> has_domain;     // K
    std::vector<Matrix> cls;          // K entries of M x D
    std::vector<char> has_class;      // K * M, row-major by superdomain

    int K() const noexcept { return static_cast<int>(domain.rows()); }
};

// `superdomain[i]` is the superdomain of row i.
FreshPrototypes compute_fresh_prototypes(const Matrix& x_d, const Matrix& x_c, std::span<const int> superdomain,
                                         std::span<const int> labels, int K, int M);

class PrototypeBank {
public:
    PrototypeBank() = default;
    PrototypeBank(int K, int M, int dim);

    int K() const noexcept { return static_cast<int>(domain_.rows()); }
    int M() const noexcept { return M_; }
    int dim() const noexcept { return static_cast<int>(domain_.cols()); }
    int epoch() const noexcept { return epoch_; }
    void set_epoch(int t) noexcept { epoch_ = t; }

    bool domain_ready(int k) const { return domain_init_.at(static_cast<std::size_t>(k)) != 0; }
    bool class_ready(int k, int m) const { return class_init_.at(slot(k, m)) != 0; }
    bool all_domains_ready() const;
    int ready_class_count(int k) const;

    // Reading an uninitialized slot is a StateError.
    const Vector domain(int k) const;
    const Vector cls(int k, int m) const;

    const Matrix& domain_matrix() const noexcept { return domain_; }
    const Matrix& class_matrix(int k) const { return class_.at(static_cast<std::size_t>(k)); }

    void set_domain(int k, const Vector& v);
    void set_class(int k, int m, const Vector& v);

private:
    std::size_t slot(int k, int m) const { return static_cast<std::size_t>(k) * static_cast<std::size_t>(M_) + static_cast<std::size_t>(m); }

    int M_ = 0;
    int epoch_ = 0;
    Matrix domain_;
    std::vector<Matrix> class_;
    std::vector<char> domain_init_;
    std::vector<char> class_init_;
};

// mu <- (1 - alpha) mu + alpha fresh per slot with fresh data; uninitialized
// slots take the fresh value directly.
PrototypeBank adaptive_update(const PrototypeBank& bank, const FreshPrototypes& fresh, double alpha);
PrototypeBank adaptive_update(const PrototypeBank& bank, const FreshPrototypes& fresh, int t,
                              const AlphaSchedule& sched);

// Carries EMA history across a re-clustering. New superdomain j is greedily
// matched to the closest unclaimed old slot by distance between its fresh
// domain prototype and the stored one; the returned bank has fresh.K() slots
// and unmatched slots start uninitialized. `matching[j]` receives the old slot
// (or -1).
PrototypeBank rekey(const PrototypeBank& old, const FreshPrototypes& fresh, std::vector<int>* matching = nullptr);

}  // namespace matl
