#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "matl/types.hpp"

namespace matl {

// One feature vector with its class, subject and session.
struct Sample {
    std::vector<double> features;
    int class_label = 0;
    int subject_id = 0;
    int session_id = 0;
};

// Column-oriented sample store. Ids are dense and 0-based; the *_names vectors
// remember what the ids were called in the source file so that a dataset can
// be written back with its original tokens.
class Dataset {
public:
    Dataset() = default;

    // Validates every invariant (finite features, ids in range, every subject
    // present). Names default to the decimal id when empty.
    Dataset(Matrix features, std::vector<int> labels, std::vector<int> subjects,
            std::vector<int> sessions, int num_classes, int num_subjects, int num_sessions,
            std::vector<std::string> class_names = {},
            std::vector<std::string> subject_names = {},
            std::vector<std::string> session_names = {});

    static Dataset from_samples(const std::vector<Sample>& samples, int num_classes,
                                int num_subjects, int num_sessions);

    std::size_t size() const noexcept { return labels_.size(); }
    int num_features() const noexcept { return static_cast<int>(features_.cols()); }
    int num_classes() const noexcept { return num_classes_; }
    int num_subjects() const noexcept { return num_subjects_; }
    int num_sessions() const noexcept { return num_sessions_; }

    const Matrix& features() const noexcept { return features_; }
    const std::vector<int>& labels() const noexcept { return labels_; }
    const std::vector<int>& subjects() const noexcept { return subjects_; }
    const std::vector<int>& sessions() const noexcept { return sessions_; }

    const std::vector<std::string>& class_names() const noexcept { return class_names_; }
    const std::vector<std::string>& subject_names() const noexcept { return subject_names_; }
    const std::vector<std::string>& session_names() const noexcept { return session_names_; }

    Sample sample(std::size_t i) const;

    // Rows whose subject is in `subjects` (and whose session matches, when
    // given). Subject ids are re-densified in ascending order of the original
    // ids; subject_names carry over so provenance is kept. Class and session
    // dimensions are unchanged.
    Dataset select(const std::vector<int>& subjects, std::optional<int> session = std::nullopt) const;

    // Same data with a different label vector (same length, same M).
    Dataset with_labels(std::vector<int> labels) const;

    std::vector<std::size_t> rows_of_subject(int subject) const;

private:
    Matrix features_;
    std::vector<int> labels_;
    std::vector<int> subjects_;
    std::vector<int> sessions_;
    int num_classes_ = 0;
    int num_subjects_ = 0;
    int num_sessions_ = 0;
    std::vector<std::string> class_names_;
    std::vector<std::string> subject_names_;
    std::vector<std::string> session_names_;
};

// Which header columns hold what. Feature columns are every column named
// `<feature_prefix><digits>`, in header order.
struct CsvSchema {
    std::string feature_prefix = "f";
    std::string label_column = "label";
    std::string subject_column = "subject";
    // Empty, or absent from the header, means every row is session 0.
    std::string session_column = "session";
};

// Lines starting with '#' are skipped (artifact headers). Ids are remapped to
// dense 0-based integers: numeric tokens sort numerically, otherwise
// lexicographically.
Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema = {});
Dataset parse_csv(const std::string& text, const CsvSchema& schema = {});

// Writes `f0..f{F-1},label,subject,session` using the original id tokens.
// `header_comments` lines are emitted first, each prefixed with "# ".
void write_csv(const Dataset& ds, const std::filesystem::path& path,
               const std::vector<std::string>& header_comments = {});
std::string format_csv(const Dataset& ds, const std::vector<std::string>& header_comments = {});

// Additive generator: sample = class_centroid(m) + subject_offset(n) + noise.
// With domain_groups > 0 subjects are split round-robin into that many groups
// sharing a group offset; each subject adds its own jitter on top.
struct SynthConfig {
    int num_subjects = 3;
    int num_classes = 2;
    int num_features = 8;
    int per_class_count = 50;      // per subject, class and session
    int num_sessions = 1;
    double domain_shift_scale = 1.0;
    double class_separation = 1.0;
    double noise_scale = 1.0;
    int domain_groups = 0;         // 0: every subject draws an independent offset
    double group_jitter = 0.25;    // subject jitter std, relative to domain_shift_scale
    double session_shift_scale = 0.0;
    double group_class_shift = 0.0;  // std of a per (group, class) centroid shift; 0 disables
    std::uint64_t seed = 0;
};

Dataset synth_generate(const SynthConfig& cfg);

// Group index of every subject under SynthConfig's round-robin rule.
std::vector<int> synth_domain_groups(const SynthConfig& cfg);

// Replaces exactly round(eta * size) labels with a label drawn uniformly from
// the other M-1 classes.
Dataset inject_label_noise(const Dataset& ds, double eta, std::uint64_t seed);

enum class Protocol { SingleSession, CrossSession };

std::string to_string(Protocol p);
Protocol protocol_from_string(const std::string& s);

struct Fold {
    std::vector<int> source_subjects;
    int target_subject = 0;
    std::optional<int> session_filter;
};

struct SplitPlan {
    Protocol protocol = Protocol::SingleSession;
    std::vector<Fold> folds;
};

SplitPlan make_splits(const Dataset& ds, Protocol protocol);

struct FoldData {
    Dataset source;
    Dataset target;
};

FoldData materialize(const Dataset& ds, const Fold& fold);

}  // namespace matl
