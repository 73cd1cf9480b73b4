#include "matl/config.hpp"

#include <algorithm>
#include <set>

#include "matl/errors.hpp"

namespace matl {

using nlohmann::json;

namespace {

const std::vector<std::pair<std::string, bool Ablations::*>>& ablation_fields() {
    static const std::vector<std::pair<std::string, bool Ablations::*>> fields = {
        {"domain-prototype", &Ablations::domain_prototype},
        {"cls-disc-loss", &Ablations::cls_disc_loss},
        {"dom-disc-loss", &Ablations::dom_disc_loss},
        {"aggregation", &Ablations::aggregation},
        {"adaptive-alpha", &Ablations::adaptive_alpha},
        {"pairwise", &Ablations::pairwise},
        {"bilinear-theta", &Ablations::bilinear_theta},
        {"soft-reg", &Ablations::soft_reg},
    };
    return fields;
}

template <typename T>
T get_as(const json& j, const std::string& key) {
    try {
        return j.get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(key, std::string("wrong type: ") + e.what());
    }
}

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where, "expected an object");
    for (const auto& [key, value] : j.items()) {
        if (!known.count(key)) {
            throw ConfigError(key, "unknown key" + (where.empty() ? std::string() : " in '" + where + "'"));
        }
    }
}

}  // namespace

const std::vector<std::string>& Ablations::all_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> out;
        for (const auto& f : ablation_fields()) out.push_back(f.first);
        return out;
    }();
    return names;
}

std::vector<std::string> Ablations::names() const {
    std::vector<std::string> out;
    for (const auto& [name, field] : ablation_fields()) {
        if (this->*field) out.push_back(name);
    }
    return out;
}

void Ablations::set(const std::string& name) {
    for (const auto& [n, field] : ablation_fields()) {
        if (n == name) {
            this->*field = true;
            return;
        }
    }
    throw ConfigError("disable", "unknown ablation switch '" + name + "'");
}

void TrainConfig::validate() const {
    if (K < 1) throw ConfigError("K", "must be at least 1");
    alpha_schedule().validate();
    if (!(fixed_alpha > 0.0 && fixed_alpha <= 1.0)) throw ConfigError("fixed_alpha", "must lie in (0, 1]");
    if (!(beta >= 0.0)) throw ConfigError("beta", "must be non-negative");
    if (!(lr >= 0.0)) throw ConfigError("lr", "must be non-negative");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay", "must be non-negative");
    if (!(grad_clip >= 0.0)) throw ConfigError("grad_clip", "must be non-negative");
    if (batch_size < 2) throw ConfigError("batch_size", "must be at least 2");
    if (!(grl_lambda > 0.0)) throw ConfigError("grl_lambda", "must be positive");
    if (hidden < 1) throw ConfigError("hidden", "must be positive");
    if (!(leaky_slope > 0.0)) throw ConfigError("leaky_slope", "must be positive");
    if (!(disc_dropout >= 0.0 && disc_dropout < 1.0)) throw ConfigError("disc_dropout", "must lie in [0, 1)");
    if (kernel.bandwidth && !(*kernel.bandwidth > 0.0)) throw ConfigError("bandwidth", "must be positive");
    if (kernel.median_max_rows < 2) throw ConfigError("median_max_rows", "must be at least 2");
    if (mmd_max_rows < 0 || mmd_max_rows == 1) throw ConfigError("mmd_max_rows", "must be 0 or at least 2");
    if (aggregate_restarts < 1) throw ConfigError("aggregate_restarts", "must be positive");
    if (aggregate_every < 1) throw ConfigError("aggregate_every", "must be positive");
    if (!(eta >= 0.0 && eta <= 1.0)) throw ConfigError("eta", "must lie in [0, 1]");
}

const std::vector<ConfigKeyInfo>& train_config_keys() {
    static const std::vector<ConfigKeyInfo> keys = {
        {"K", true, "number of superdomains the source subjects are aggregated into (4)"},
        {"alpha_h", true, "upper prototype update weight (0.8)"},
        {"alpha_l", true, "lower prototype update weight (0.2)"},
        {"p", true, "decay exponent of the prototype update weight (2)"},
        {"beta", true, "weight of the soft regularizer in the total loss (0.01)"},
        {"hidden", true, "width of every hidden/feature layer (64)"},
        {"leaky_slope", true, "LeakyRelu negative slope in the extractor (0.01)"},
        {"disc_dropout", true, "dropout after the first discriminator layer (0.25)"},
        {"fixed_alpha", false, "constant update weight used when adaptive-alpha is disabled (0.5)"},
        {"regularizer", false, "'weights' (mean squared Frobenius norm of weights and theta) or 'activations'"},
        {"lr", false, "SGD learning rate (1e-3)"},
        {"weight_decay", false, "SGD weight decay (0)"},
        {"grad_clip", false, "cap on the global gradient L2 norm per step, 0 disables (5)"},
        {"batch_size", false, "minibatch size (256)"},
        {"max_epoch", false, "number of training epochs (100)"},
        {"grl_lambda", false, "gradient reversal coefficient (1.0)"},
        {"seed", false, "run seed; folds derive their own streams from it (0)"},
        {"bandwidth", false, "Gaussian kernel sigma, or \"median\" for the median heuristic (\"median\")"},
        {"median_max_rows", false, "rows subsampled for the median heuristic (2000)"},
        {"mmd_max_rows", false, "per-subject cap on rows entering the MMD matrix, 0 = all (0)"},
        {"aggregate_on", false, "'mmd' (k-medoids on MMD^2) or 'vectors' (k-means on MMD rows)"},
        {"aggregate_restarts", false, "k-means++ seedings tried per aggregation (10)"},
        {"aggregate_every", false, "epochs between re-aggregations (1)"},
        {"balanced_domains", false, "stratify minibatches by subject (false)"},
        {"pairwise_form", false, "'standard' pairwise BCE or the 'literal' typeset sign pattern"},
        {"eta", false, "fraction of source labels replaced by noise (0)"},
        {"disable", false, "list of ablation switches: domain-prototype, cls-disc-loss, dom-disc-loss, "
                           "aggregation, adaptive-alpha, pairwise, bilinear-theta, soft-reg"},
    };
    return keys;
}

json to_json(const TrainConfig& c) {
    json j;
    j["K"] = c.K;
    j["alpha_h"] = c.alpha_h;
    j["alpha_l"] = c.alpha_l;
    j["p"] = c.p;
    j["fixed_alpha"] = c.fixed_alpha;
    j["beta"] = c.beta;
    j["regularizer"] = to_string(c.regularizer);
    j["lr"] = c.lr;
    j["weight_decay"] = c.weight_decay;
    j["grad_clip"] = c.grad_clip;
    j["batch_size"] = c.batch_size;
    j["max_epoch"] = c.max_epoch;
    j["grl_lambda"] = c.grl_lambda;
    j["hidden"] = c.hidden;
    j["leaky_slope"] = c.leaky_slope;
    j["disc_dropout"] = c.disc_dropout;
    j["seed"] = c.seed;
    if (c.kernel.bandwidth) j["bandwidth"] = *c.kernel.bandwidth;
    else j["bandwidth"] = "median";
    j["median_max_rows"] = c.kernel.median_max_rows;
    j["mmd_max_rows"] = c.mmd_max_rows;
    j["aggregate_on"] = to_string(c.aggregate_on);
    j["aggregate_restarts"] = c.aggregate_restarts;
    j["aggregate_every"] = c.aggregate_every;
    j["balanced_domains"] = c.balanced_domains;
    j["pairwise_form"] = to_string(c.pairwise_form);
    j["eta"] = c.eta;
    j["disable"] = c.disable.names();
    return j;
}

TrainConfig train_config_from_json(const json& j) {
    std::set<std::string> known;
    for (const auto& k : train_config_keys()) known.insert(k.key);
    reject_unknown(j, known, "train");
    TrainConfig c;
    for (const auto& [key, v] : j.items()) {
        if (key == "K") c.K = get_as<int>(v, key);
        else if (key == "alpha_h") c.alpha_h = get_as<double>(v, key);
        else if (key == "alpha_l") c.alpha_l = get_as<double>(v, key);
        else if (key == "p") c.p = get_as<double>(v, key);
        else if (key == "fixed_alpha") c.fixed_alpha = get_as<double>(v, key);
        else if (key == "beta") c.beta = get_as<double>(v, key);
        else if (key == "regularizer") c.regularizer = regularizer_from_string(get_as<std::string>(v, key));
        else if (key == "lr") c.lr = get_as<double>(v, key);
        else if (key == "weight_decay") c.weight_decay = get_as<double>(v, key);
        else if (key == "grad_clip") c.grad_clip = get_as<double>(v, key);
        else if (key == "batch_size") c.batch_size = get_as<int>(v, key);
        else if (key == "max_epoch") c.max_epoch = get_as<int>(v, key);
        else if (key == "grl_lambda") c.grl_lambda = get_as<double>(v, key);
        else if (key == "hidden") c.hidden = get_as<int>(v, key);
        else if (key == "leaky_slope") c.leaky_slope = get_as<double>(v, key);
        else if (key == "disc_dropout") c.disc_dropout = get_as<double>(v, key);
        else if (key == "seed") c.seed = get_as<std::uint64_t>(v, key);
        else if (key == "bandwidth") {
            if (v.is_string()) {
                if (v.get<std::string>() != "median") throw ConfigError(key, "expected a number or \"median\"");
                c.kernel.bandwidth.reset();
            } else {
                c.kernel.bandwidth = get_as<double>(v, key);
            }
        } else if (key == "median_max_rows") c.kernel.median_max_rows = get_as<std::size_t>(v, key);
        else if (key == "mmd_max_rows") c.mmd_max_rows = get_as<int>(v, key);
        else if (key == "aggregate_on") c.aggregate_on = aggregate_on_from_string(get_as<std::string>(v, key));
        else if (key == "aggregate_restarts") c.aggregate_restarts = get_as<int>(v, key);
        else if (key == "aggregate_every") c.aggregate_every = get_as<int>(v, key);
        else if (key == "balanced_domains") c.balanced_domains = get_as<bool>(v, key);
        else if (key == "pairwise_form") c.pairwise_form = pairwise_form_from_string(get_as<std::string>(v, key));
        else if (key == "eta") c.eta = get_as<double>(v, key);
        else if (key == "disable") {
            for (const auto& name : get_as<std::vector<std::string>>(v, key)) c.disable.set(name);
        }
    }
    c.validate();
    return c;
}

json to_json(const SynthConfig& c) {
    return json{{"num_subjects", c.num_subjects},
                {"num_classes", c.num_classes},
                {"num_features", c.num_features},
                {"per_class_count", c.per_class_count},
                {"num_sessions", c.num_sessions},
                {"domain_shift_scale", c.domain_shift_scale},
                {"class_separation", c.class_separation},
                {"noise_scale", c.noise_scale},
                {"domain_groups", c.domain_groups},
                {"group_jitter", c.group_jitter},
                {"session_shift_scale", c.session_shift_scale},
                {"group_class_shift", c.group_class_shift},
                {"seed", c.seed}};
}

SynthConfig synth_config_from_json(const json& j) {
    reject_unknown(j,
                   {"num_subjects", "num_classes", "num_features", "per_class_count", "num_sessions",
                    "domain_shift_scale", "class_separation", "noise_scale", "domain_groups", "group_jitter",
                    "session_shift_scale", "group_class_shift", "seed"},
                   "synth");
    SynthConfig c;
    for (const auto& [key, v] : j.items()) {
        if (key == "num_subjects") c.num_subjects = get_as<int>(v, key);
        else if (key == "num_classes") c.num_classes = get_as<int>(v, key);
        else if (key == "num_features") c.num_features = get_as<int>(v, key);
        else if (key == "per_class_count") c.per_class_count = get_as<int>(v, key);
        else if (key == "num_sessions") c.num_sessions = get_as<int>(v, key);
        else if (key == "domain_shift_scale") c.domain_shift_scale = get_as<double>(v, key);
        else if (key == "class_separation") c.class_separation = get_as<double>(v, key);
        else if (key == "noise_scale") c.noise_scale = get_as<double>(v, key);
        else if (key == "domain_groups") c.domain_groups = get_as<int>(v, key);
        else if (key == "group_jitter") c.group_jitter = get_as<double>(v, key);
        else if (key == "session_shift_scale") c.session_shift_scale = get_as<double>(v, key);
        else if (key == "group_class_shift") c.group_class_shift = get_as<double>(v, key);
        else if (key == "seed") c.seed = get_as<std::uint64_t>(v, key);
    }
    return c;
}

json to_json(const CsvSchema& s) {
    return json{{"feature_prefix", s.feature_prefix},
                {"label_column", s.label_column},
                {"subject_column", s.subject_column},
                {"session_column", s.session_column}};
}

CsvSchema csv_schema_from_json(const json& j) {
    reject_unknown(j, {"feature_prefix", "label_column", "subject_column", "session_column"}, "schema");
    CsvSchema s;
    if (j.contains("feature_prefix")) s.feature_prefix = get_as<std::string>(j["feature_prefix"], "feature_prefix");
    if (j.contains("label_column")) s.label_column = get_as<std::string>(j["label_column"], "label_column");
    if (j.contains("subject_column")) s.subject_column = get_as<std::string>(j["subject_column"], "subject_column");
    if (j.contains("session_column")) s.session_column = get_as<std::string>(j["session_column"], "session_column");
    return s;
}

const char* version_tag() { return "matl " MATL_VERSION; }

}  // namespace matl
