#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "matl/config.hpp"
#include "matl/dataio.hpp"
#include "matl/infer.hpp"
#include "matl/mmd.hpp"
#include "matl/model.hpp"
#include "matl/proto.hpp"

namespace matl {

struct EpochLog {
    int epoch = 0;  // 1-based
    double loss_total = 0.0;
    double loss_cls = 0.0;
    double loss_dom = 0.0;
    double loss_pair = 0.0;    // pairwise or pointwise, whichever is active
    double loss_domain = 0.0;  // superdomain BCE that trains theta
    double reg = 0.0;
    double alpha = 0.0;
    int K = 1;
    std::vector<int> assignment;  // source subject -> superdomain after this epoch
    double sigma = 0.0;           // kernel bandwidth, 0 when no MMD matrix was built
    double objective = 0.0;
    std::vector<double> domain_prototype_norms;
    std::optional<Matrix> mmd;    // kept only with diagnostics on
};

// Distinct operation names in first-execution order.
class OpTrace {
public:
    void hit(const char* op);
    const std::vector<std::string>& ops() const noexcept { return ops_; }
    std::vector<std::string> take() { return std::move(ops_); }

private:
    std::vector<std::string> ops_;
};

struct BatchInput {
    Matrix x;
    std::vector<int> labels;
    std::vector<int> subjects;
    std::vector<int> superdomains;  // known superdomain of each row
};

// Selects which objective terms send gradients; values are always computed.
struct LossTerms {
    bool fd = true;    // L_cls + L_dom
    bool pair = true;  // class-distribution loss plus the superdomain BCE on theta
    bool reg = true;
};

struct BatchResult {
    double cls = 0.0;
    double dom = 0.0;
    double pair = 0.0;    // pairwise, or pointwise under the ablation
    double domain = 0.0;  // superdomain BCE, 0 with a single superdomain
    double reg = 0.0;
    double beta = 0.0;    // 0 when the regularizer is disabled
    Matrix x_d;
    Matrix x_c;

    double fd() const { return loss_fd(cls, dom); }
    double pair_total() const { return pair + domain; }
    double total() const { return total_loss(fd(), pair_total(), reg, beta); }
};

// One minibatch objective; gradients of the selected terms accumulate into
// `grads`. This is exactly what a training step differentiates.
BatchResult batch_gradients(const Model& model, const PrototypeBank& bank, const BatchInput& in,
                            const TrainConfig& cfg, Mode mode, Rng* rng, ModelGrads& grads,
                            const LossTerms& terms = {}, OpTrace* trace = nullptr);

struct TrainOptions {
    bool diagnostics = false;
};

struct TrainedState {
    Model model;
    PrototypeBank bank;
    SuperdomainAssignment assignment;
    TrainConfig config;
    int input_dim = 0;
    int num_classes = 0;
    std::vector<std::string> source_subjects;  // names, index = dense source id
    std::vector<EpochLog> history;
    std::vector<std::string> op_trace;  // distinct operations in first-execution order
};

// Source-only training. Throws TrainingError when the source misses a class.
TrainedState train_fold(const Dataset& source, const TrainConfig& cfg, const TrainOptions& opts = {});

// Counts every access to the wrapped samples.
class GuardedDataset {
public:
    explicit GuardedDataset(Dataset ds) : ds_(std::move(ds)) {}

    const Dataset& read() const {
        ++reads_;
        return ds_;
    }
    std::size_t reads() const noexcept { return reads_; }

private:
    Dataset ds_;
    mutable std::size_t reads_ = 0;
};

struct ConfusionMatrix {
    std::vector<std::vector<long>> counts;  // [true][predicted]

    explicit ConfusionMatrix(int M = 0);
    int size() const noexcept { return static_cast<int>(counts.size()); }
    void add(int truth, int predicted);
    void merge(const ConfusionMatrix& other);
    long total() const;
    long correct() const;
    double accuracy() const;
    std::vector<double> recalls() const;  // NaN for classes without samples
};

struct Evaluation {
    double accuracy = 0.0;
    ConfusionMatrix confusion;
    std::vector<int> truth;
    std::vector<Prediction> predictions;
};

Evaluation evaluate(const TrainedState& state, const GuardedDataset& target);
Evaluation evaluate(const TrainedState& state, const Dataset& target);

struct FoldReport {
    int fold = 0;
    std::string target_subject;
    std::vector<std::string> source_subjects;
    std::uint64_t seed = 0;
    double accuracy = 0.0;
    ConfusionMatrix confusion;
    std::size_t target_reads_before_eval = 0;
    std::size_t target_rows_in_source = 0;
    std::size_t target_size = 0;
    std::vector<EpochLog> history;
    SuperdomainAssignment assignment;
    std::vector<std::string> op_trace;
    Evaluation evaluation;
};

struct RunReport {
    Protocol protocol = Protocol::SingleSession;
    TrainConfig config;
    std::vector<FoldReport> folds;
    double mean = 0.0;
    double std = 0.0;  // population standard deviation over folds
    ConfusionMatrix confusion;

    std::vector<double> accuracies() const;
};

struct RunOptions {
    int jobs = 1;
    bool diagnostics = false;
    std::filesystem::path checkpoint_dir;  // empty: no per-fold checkpoints
};

// Fold f trains with seed derive_seed(cfg.seed, f); results do not depend on jobs.
RunReport run_protocol(const Dataset& ds, Protocol protocol, const TrainConfig& cfg, const RunOptions& opts = {});

// mean and population std
std::pair<double, double> mean_std(const std::vector<double>& xs);

struct NoiseRow {
    double eta = 0.0;
    double pointwise_mean = 0.0;
    double pointwise_std = 0.0;
    double pairwise_mean = 0.0;
    double pairwise_std = 0.0;
};

// Both learning modes per eta, same seeds. Noise hits source labels only.
std::vector<NoiseRow> noise_sweep(const Dataset& ds, Protocol protocol, const std::vector<double>& etas,
                                  const TrainConfig& cfg, const RunOptions& opts = {});

struct KRow {
    int K = 1;
    double mean = 0.0;
    double std = 0.0;
};

std::vector<KRow> k_sweep(const Dataset& ds, Protocol protocol, const std::vector<int>& Ks, const TrainConfig& cfg,
                          const RunOptions& opts = {});

nlohmann::json to_json(const ConfusionMatrix& cm);
nlohmann::json to_json(const EpochLog& log);
nlohmann::json to_json(const RunReport& r, bool diagnostics = false);

std::string fold_table_csv(const RunReport& r);
std::string epoch_table_csv(const RunReport& r);
std::string predictions_csv(const Evaluation& e);
std::string noise_table_csv(const std::vector<NoiseRow>& rows);
std::string k_table_csv(const std::vector<KRow>& rows);

// "# "-prefixed lines carrying the version tag and the normalized config.
std::vector<std::string> artifact_header(const TrainConfig& cfg);
std::string with_header(const std::vector<std::string>& header, const std::string& body);

}  // namespace matl
