#include "matl/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "matl/errors.hpp"

namespace matl {

namespace {

std::vector<std::string> default_names(int count) {
    std::vector<std::string> names(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) names[static_cast<std::size_t>(i)] = std::to_string(i);
    return names;
}

void check_ids(const std::vector<int>& ids, int bound, const char* what) {
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= bound) {
            throw ValidationError(std::string(what) + " id " + std::to_string(ids[i]) +
                                  " out of range at sample " + std::to_string(i));
        }
    }
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) {
        auto b = field.find_first_not_of(" \t\r");
        auto e = field.find_last_not_of(" \t\r");
        out.push_back(b == std::string::npos ? std::string() : field.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (*first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last;
}

// Dense remap of id tokens; numeric tokens order numerically.
std::pair<std::vector<int>, std::vector<std::string>> densify(const std::vector<std::string>& tokens) {
    std::set<std::string> unique(tokens.begin(), tokens.end());
    std::vector<std::string> names(unique.begin(), unique.end());
    bool numeric = std::all_of(names.begin(), names.end(), [](const std::string& t) {
        double v;
        return parse_double(t, v);
    });
    if (numeric) {
        std::stable_sort(names.begin(), names.end(), [](const std::string& a, const std::string& b) {
            double va = 0, vb = 0;
            parse_double(a, va);
            parse_double(b, vb);
            return va < vb;
        });
    }
    std::map<std::string, int> index;
    for (std::size_t i = 0; i < names.size(); ++i) index[names[i]] = static_cast<int>(i);
    std::vector<int> ids(tokens.size());
    for (std::size_t i = 0; i < tokens.size(); ++i) ids[i] = index.at(tokens[i]);
    return {ids, names};
}

bool is_feature_column(const std::string& name, const std::string& prefix) {
    if (name.size() <= prefix.size() || name.compare(0, prefix.size(), prefix) != 0) return false;
    return std::all_of(name.begin() + static_cast<std::ptrdiff_t>(prefix.size()), name.end(),
                       [](char c) { return c >= '0' && c <= '9'; });
}

}  // namespace

Dataset::Dataset(Matrix features, std::vector<int> labels, std::vector<int> subjects,
                 std::vector<int> sessions, int num_classes, int num_subjects, int num_sessions,
                 std::vector<std::string> class_names, std::vector<std::string> subject_names,
                 std::vector<std::string> session_names)
    : features_(std::move(features)),
      labels_(std::move(labels)),
      subjects_(std::move(subjects)),
      sessions_(std::move(sessions)),
      num_classes_(num_classes),
      num_subjects_(num_subjects),
      num_sessions_(num_sessions),
      class_names_(std::move(class_names)),
      subject_names_(std::move(subject_names)),
      session_names_(std::move(session_names)) {
    const auto n = static_cast<std::size_t>(features_.rows());
    if (labels_.size() != n || subjects_.size() != n || sessions_.size() != n) {
        throw DimensionError("dataset columns disagree on sample count");
    }
    if (num_classes_ <= 0 || num_subjects_ <= 0 || num_sessions_ <= 0) {
        throw ValidationError("dataset dimensions must be positive");
    }
    if (!features_.allFinite()) throw ValidationError("non-finite feature value");
    check_ids(labels_, num_classes_, "class");
    check_ids(subjects_, num_subjects_, "subject");
    check_ids(sessions_, num_sessions_, "session");
    std::vector<char> seen(static_cast<std::size_t>(num_subjects_), 0);
    for (int s : subjects_) seen[static_cast<std::size_t>(s)] = 1;
    for (int s = 0; s < num_subjects_; ++s) {
        if (!seen[static_cast<std::size_t>(s)]) {
            throw ValidationError("subject " + std::to_string(s) + " has no samples");
        }
    }
    if (class_names_.empty()) class_names_ = default_names(num_classes_);
    if (subject_names_.empty()) subject_names_ = default_names(num_subjects_);
    if (session_names_.empty()) session_names_ = default_names(num_sessions_);
    if (class_names_.size() != static_cast<std::size_t>(num_classes_) ||
        subject_names_.size() != static_cast<std::size_t>(num_subjects_) ||
        session_names_.size() != static_cast<std::size_t>(num_sessions_)) {
        throw DimensionError("id name table does not match dimension");
    }
}

Dataset Dataset::from_samples(const std::vector<Sample>& samples, int num_classes, int num_subjects,
                              int num_sessions) {
    if (samples.empty()) throw ValidationError("no samples");
    const auto f = samples.front().features.size();
    Matrix x(static_cast<Eigen::Index>(samples.size()), static_cast<Eigen::Index>(f));
    std::vector<int> labels, subjects, sessions;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        if (s.features.size() != f) {
            throw DimensionError("sample " + std::to_string(i) + " has " +
                                 std::to_string(s.features.size()) + " features, expected " +
                                 std::to_string(f));
        }
        for (std::size_t j = 0; j < f; ++j) {
            x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = s.features[j];
        }
        labels.push_back(s.class_label);
        subjects.push_back(s.subject_id);
        sessions.push_back(s.session_id);
    }
    return Dataset(std::move(x), std::move(labels), std::move(subjects), std::move(sessions),
                   num_classes, num_subjects, num_sessions);
}

Sample Dataset::sample(std::size_t i) const {
    Sample s;
    const auto row = features_.row(static_cast<Eigen::Index>(i));
    s.features.assign(row.begin(), row.end());
    s.class_label = labels_[i];
    s.subject_id = subjects_[i];
    s.session_id = sessions_[i];
    return s;
}

Dataset Dataset::select(const std::vector<int>& subjects, std::optional<int> session) const {
    std::vector<int> keep(subjects);
    std::sort(keep.begin(), keep.end());
    keep.erase(std::unique(keep.begin(), keep.end()), keep.end());
    std::vector<int> remap(static_cast<std::size_t>(num_subjects_), -1);
    std::vector<std::string> names;
    for (std::size_t i = 0; i < keep.size(); ++i) {
        if (keep[i] < 0 || keep[i] >= num_subjects_) throw ValidationError("unknown subject in selection");
        remap[static_cast<std::size_t>(keep[i])] = static_cast<int>(i);
        names.push_back(subject_names_[static_cast<std::size_t>(keep[i])]);
    }
    std::vector<Eigen::Index> rows;
    std::vector<int> labels, subj, sess;
    for (std::size_t i = 0; i < size(); ++i) {
        const int s = remap[static_cast<std::size_t>(subjects_[i])];
        if (s < 0) continue;
        if (session && sessions_[i] != *session) continue;
        rows.push_back(static_cast<Eigen::Index>(i));
        labels.push_back(labels_[i]);
        subj.push_back(s);
        sess.push_back(sessions_[i]);
    }
    Matrix x(static_cast<Eigen::Index>(rows.size()), features_.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) x.row(static_cast<Eigen::Index>(r)) = features_.row(rows[r]);
    return Dataset(std::move(x), std::move(labels), std::move(subj), std::move(sess), num_classes_,
                   static_cast<int>(keep.size()), num_sessions_, class_names_, std::move(names),
                   session_names_);
}

Dataset Dataset::with_labels(std::vector<int> labels) const {
    return Dataset(features_, std::move(labels), subjects_, sessions_, num_classes_, num_subjects_,
                   num_sessions_, class_names_, subject_names_, session_names_);
}

std::vector<std::size_t> Dataset::rows_of_subject(int subject) const {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < size(); ++i) {
        if (subjects_[i] == subject) rows.push_back(i);
    }
    return rows;
}

Dataset parse_csv(const std::string& text, const CsvSchema& schema) {
    std::istringstream in(text);
    std::string line;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        header = split_line(line);
        break;
    }
    if (header.empty()) throw ParseError(0, "missing header");

    std::vector<std::size_t> feature_cols;
    std::optional<std::size_t> label_col, subject_col, session_col;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (header[c] == schema.label_column) label_col = c;
        else if (header[c] == schema.subject_column) subject_col = c;
        else if (!schema.session_column.empty() && header[c] == schema.session_column) session_col = c;
        else if (is_feature_column(header[c], schema.feature_prefix)) feature_cols.push_back(c);
    }
    if (!label_col) throw ParseError(0, "header lacks label column '" + schema.label_column + "'");
    if (!subject_col) throw ParseError(0, "header lacks subject column '" + schema.subject_column + "'");
    if (feature_cols.empty()) throw ParseError(0, "header has no feature columns");

    std::vector<std::vector<double>> rows;
    std::vector<std::string> label_tok, subject_tok, session_tok;
    std::size_t row_no = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        ++row_no;
        auto fields = split_line(line);
        if (fields.size() != header.size()) {
            throw DimensionError("row " + std::to_string(row_no) + ": expected " +
                                 std::to_string(header.size()) + " columns (" +
                                 std::to_string(feature_cols.size()) + " features), got " +
                                 std::to_string(fields.size()));
        }
        std::vector<double> f(feature_cols.size());
        for (std::size_t k = 0; k < feature_cols.size(); ++k) {
            const auto& tok = fields[feature_cols[k]];
            if (!parse_double(tok, f[k])) {
                throw ParseError(row_no, "column '" + header[feature_cols[k]] + "' is not a number: '" + tok + "'");
            }
            if (!std::isfinite(f[k])) {
                throw ValidationError("row " + std::to_string(row_no) + ": non-finite value in column '" +
                                      header[feature_cols[k]] + "'");
            }
        }
        const auto& lab = fields[*label_col];
        const auto& sub = fields[*subject_col];
        if (lab.empty()) throw ParseError(row_no, "empty label");
        if (sub.empty()) throw ParseError(row_no, "empty subject");
        rows.push_back(std::move(f));
        label_tok.push_back(lab);
        subject_tok.push_back(sub);
        session_tok.push_back(session_col ? fields[*session_col] : std::string("0"));
        if (session_tok.back().empty()) throw ParseError(row_no, "empty session");
    }
    if (rows.empty()) throw ParseError(0, "no data rows");

    Matrix x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(feature_cols.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < feature_cols.size(); ++j) {
            x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
        }
    }
    auto [labels, class_names] = densify(label_tok);
    auto [subjects, subject_names] = densify(subject_tok);
    auto [sessions, session_names] = densify(session_tok);
    const int m = static_cast<int>(class_names.size());
    const int n = static_cast<int>(subject_names.size());
    const int s = static_cast<int>(session_names.size());
    return Dataset(std::move(x), std::move(labels), std::move(subjects), std::move(sessions), m, n, s,
                   std::move(class_names), std::move(subject_names), std::move(session_names));
}

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_csv(buf.str(), schema);
}

std::string format_csv(const Dataset& ds, const std::vector<std::string>& header_comments) {
    std::ostringstream out;
    for (const auto& c : header_comments) out << "# " << c << '\n';
    for (int j = 0; j < ds.num_features(); ++j) out << 'f' << j << ',';
    out << "label,subject,session\n";
    char buf[64];
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (int j = 0; j < ds.num_features(); ++j) {
            auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), ds.features()(static_cast<Eigen::Index>(i), j));
            out.write(buf, ptr - buf);
            out << ',';
        }
        out << ds.class_names()[static_cast<std::size_t>(ds.labels()[i])] << ','
            << ds.subject_names()[static_cast<std::size_t>(ds.subjects()[i])] << ','
            << ds.session_names()[static_cast<std::size_t>(ds.sessions()[i])] << '\n';
    }
    return out.str();
}

void write_csv(const Dataset& ds, const std::filesystem::path& path,
               const std::vector<std::string>& header_comments) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << format_csv(ds, header_comments);
    if (!out) throw IoError("write failed for " + path.string());
}

std::vector<int> synth_domain_groups(const SynthConfig& cfg) {
    std::vector<int> groups(static_cast<std::size_t>(std::max(cfg.num_subjects, 0)));
    for (int n = 0; n < cfg.num_subjects; ++n) {
        groups[static_cast<std::size_t>(n)] = cfg.domain_groups > 0 ? n % cfg.domain_groups : n;
    }
    return groups;
}

Dataset synth_generate(const SynthConfig& cfg) {
    if (cfg.num_subjects <= 0) throw ConfigError("num_subjects", "must be positive");
    if (cfg.num_classes <= 0) throw ConfigError("num_classes", "must be positive");
    if (cfg.per_class_count <= 0) throw ConfigError("per_class_count", "must be positive");
    if (cfg.num_sessions <= 0) throw ConfigError("num_sessions", "must be positive");
    if (cfg.num_features < 2) throw ConfigError("num_features", "must be at least 2");
    if (cfg.domain_groups < 0) throw ConfigError("domain_groups", "must be non-negative");
    if (cfg.domain_shift_scale < 0 || cfg.class_separation < 0 || cfg.noise_scale < 0 ||
        cfg.group_jitter < 0 || cfg.session_shift_scale < 0 || cfg.group_class_shift < 0) {
        throw ConfigError("scale", "scales must be non-negative");
    }

    Rng rng(cfg.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const Eigen::Index f = cfg.num_features;
    auto gaussian = [&](double scale) {
        Vector v(f);
        for (Eigen::Index j = 0; j < f; ++j) v(j) = scale * normal(rng);
        return v;
    };

    std::vector<Vector> centroids;
    for (int m = 0; m < cfg.num_classes; ++m) centroids.push_back(gaussian(cfg.class_separation));

    const auto groups = synth_domain_groups(cfg);
    const int group_count = cfg.domain_groups > 0 ? cfg.domain_groups : cfg.num_subjects;
    std::vector<Vector> group_offsets;
    for (int g = 0; g < group_count; ++g) group_offsets.push_back(gaussian(cfg.domain_shift_scale));
    std::vector<Vector> offsets;
    for (int n = 0; n < cfg.num_subjects; ++n) {
        Vector o = group_offsets[static_cast<std::size_t>(groups[static_cast<std::size_t>(n)])];
        if (cfg.domain_groups > 0) o += gaussian(cfg.domain_shift_scale * cfg.group_jitter);
        offsets.push_back(std::move(o));
    }
    std::vector<Vector> session_offsets;
    for (int s = 0; s < cfg.num_sessions; ++s) session_offsets.push_back(gaussian(cfg.session_shift_scale));
    // group x class, drawn only when enabled so older configs keep their stream
    std::vector<Vector> class_shifts;
    if (cfg.group_class_shift > 0.0) {
        for (int g = 0; g < group_count * cfg.num_classes; ++g) class_shifts.push_back(gaussian(cfg.group_class_shift));
    }

    const std::size_t total = static_cast<std::size_t>(cfg.num_subjects) * cfg.num_sessions *
                              cfg.num_classes * cfg.per_class_count;
    Matrix x(static_cast<Eigen::Index>(total), f);
    std::vector<int> labels, subjects, sessions;
    labels.reserve(total);
    Eigen::Index row = 0;
    for (int n = 0; n < cfg.num_subjects; ++n) {
        for (int s = 0; s < cfg.num_sessions; ++s) {
            for (int m = 0; m < cfg.num_classes; ++m) {
                Vector base = centroids[static_cast<std::size_t>(m)] + offsets[static_cast<std::size_t>(n)] +
                              session_offsets[static_cast<std::size_t>(s)];
                if (!class_shifts.empty()) {
                    base += class_shifts[static_cast<std::size_t>(groups[static_cast<std::size_t>(n)] * cfg.num_classes + m)];
                }
                for (int i = 0; i < cfg.per_class_count; ++i, ++row) {
                    x.row(row) = (base + gaussian(cfg.noise_scale)).transpose();
                    labels.push_back(m);
                    subjects.push_back(n);
                    sessions.push_back(s);
                }
            }
        }
    }
    return Dataset(std::move(x), std::move(labels), std::move(subjects), std::move(sessions),
                   cfg.num_classes, cfg.num_subjects, cfg.num_sessions);
}

Dataset inject_label_noise(const Dataset& ds, double eta, std::uint64_t seed) {
    if (!(eta >= 0.0 && eta <= 1.0)) throw ConfigError("eta", "must lie in [0, 1]");
    const auto count = static_cast<std::size_t>(std::llround(eta * static_cast<double>(ds.size())));
    if (count == 0) return ds;
    if (ds.num_classes() < 2) throw ConfigError("eta", "label noise needs at least 2 classes");

    Rng rng(seed);
    std::vector<std::size_t> order(ds.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    std::uniform_int_distribution<int> other(0, ds.num_classes() - 2);
    auto labels = ds.labels();
    for (std::size_t k = 0; k < count; ++k) {
        auto& y = labels[order[k]];
        const int draw = other(rng);
        y = draw >= y ? draw + 1 : draw;
    }
    return ds.with_labels(std::move(labels));
}

std::string to_string(Protocol p) {
    return p == Protocol::SingleSession ? "single_session" : "cross_session";
}

Protocol protocol_from_string(const std::string& s) {
    if (s == "single_session" || s == "single") return Protocol::SingleSession;
    if (s == "cross_session" || s == "cross") return Protocol::CrossSession;
    throw ConfigError("protocol", "unknown protocol '" + s + "'");
}

SplitPlan make_splits(const Dataset& ds, Protocol protocol) {
    if (ds.num_subjects() < 2) throw ProtocolError("leave-one-subject-out needs at least 2 subjects");
    SplitPlan plan;
    plan.protocol = protocol;
    for (int t = 0; t < ds.num_subjects(); ++t) {
        Fold fold;
        fold.target_subject = t;
        for (int s = 0; s < ds.num_subjects(); ++s) {
            if (s != t) fold.source_subjects.push_back(s);
        }
        if (protocol == Protocol::SingleSession) fold.session_filter = 0;
        plan.folds.push_back(std::move(fold));
    }
    return plan;
}

FoldData materialize(const Dataset& ds, const Fold& fold) {
    if (std::find(fold.source_subjects.begin(), fold.source_subjects.end(), fold.target_subject) !=
        fold.source_subjects.end()) {
        throw ProtocolError("target subject appears in the source set");
    }
    return FoldData{ds.select(fold.source_subjects, fold.session_filter),
                    ds.select({fold.target_subject}, fold.session_filter)};
}

}  // namespace matl
