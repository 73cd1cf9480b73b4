// matl: command-line front end for training, evaluation, protocol runs,
// sweeps and synthetic data generation.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "matl/checkpoint.hpp"
#include "matl/config.hpp"
#include "matl/dataio.hpp"
#include "matl/errors.hpp"
#include "matl/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNoInput = 66;

// Whole run description after defaults and overrides are applied.
struct RunFile {
    matl::TrainConfig train;
    std::optional<std::string> csv;
    matl::CsvSchema schema;
    matl::SynthConfig synth;
    matl::Protocol protocol = matl::Protocol::SingleSession;
    std::string output = "out";
    std::vector<double> etas{0.0, 0.05, 0.1, 0.2, 0.3};
    std::vector<int> ks;  // empty: 1..N
    std::optional<std::string> checkpoint;
    std::optional<std::string> holdout;
};

json normalized(const RunFile& r) {
    json data;
    if (r.csv) {
        data["csv"] = *r.csv;
        data["schema"] = matl::to_json(r.schema);
    } else {
        data["synth"] = matl::to_json(r.synth);
    }
    json j{{"train", matl::to_json(r.train)},
           {"data", data},
           {"protocol", matl::to_string(r.protocol)},
           {"output", r.output},
           {"noise_sweep", {{"etas", r.etas}}},
           {"k_sweep", {{"Ks", r.ks}}}};
    if (r.checkpoint) j["eval"]["checkpoint"] = *r.checkpoint;
    if (r.holdout) j["holdout"] = *r.holdout;
    return j;
}

void check_keys(const json& j, std::initializer_list<const char*> known, const std::string& where) {
    if (!j.is_object()) throw matl::ConfigError(where, "expected an object");
    for (const auto& [key, v] : j.items()) {
        bool ok = false;
        for (const char* k : known) ok = ok || key == k;
        if (!ok) throw matl::ConfigError(key, "unknown key in '" + where + "'");
    }
}

template <typename T>
T field(const json& j, const char* key) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw matl::ConfigError(key, e.what());
    }
}

RunFile parse_run_file(const json& j) {
    check_keys(j, {"train", "data", "protocol", "output", "noise_sweep", "k_sweep", "eval", "holdout"}, "config");
    RunFile r;
    if (j.contains("train")) r.train = matl::train_config_from_json(j["train"]);
    if (j.contains("data")) {
        const json& d = j["data"];
        check_keys(d, {"csv", "schema", "synth"}, "data");
        if (d.contains("csv") && d.contains("synth")) throw matl::ConfigError("data", "give either csv or synth");
        if (d.contains("csv")) r.csv = field<std::string>(d, "csv");
        if (d.contains("schema")) r.schema = matl::csv_schema_from_json(d["schema"]);
        if (d.contains("synth")) r.synth = matl::synth_config_from_json(d["synth"]);
    }
    if (j.contains("protocol")) {
        try {
            r.protocol = matl::protocol_from_string(field<std::string>(j, "protocol"));
        } catch (const matl::ConfigError&) {
            throw;
        } catch (const matl::Error& e) {
            throw matl::ConfigError("protocol", e.what());
        }
    }
    if (j.contains("output")) r.output = field<std::string>(j, "output");
    if (j.contains("noise_sweep")) {
        check_keys(j["noise_sweep"], {"etas"}, "noise_sweep");
        if (j["noise_sweep"].contains("etas")) r.etas = field<std::vector<double>>(j["noise_sweep"], "etas");
    }
    if (j.contains("k_sweep")) {
        check_keys(j["k_sweep"], {"Ks"}, "k_sweep");
        if (j["k_sweep"].contains("Ks")) r.ks = field<std::vector<int>>(j["k_sweep"], "Ks");
    }
    if (j.contains("eval")) {
        check_keys(j["eval"], {"checkpoint"}, "eval");
        if (j["eval"].contains("checkpoint")) r.checkpoint = field<std::string>(j["eval"], "checkpoint");
    }
    if (j.contains("holdout")) r.holdout = field<std::string>(j, "holdout");
    return r;
}

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw matl::IoError("cannot open config " + path);
    try {
        return json::parse(in, nullptr, true, true);
    } catch (const json::exception& e) {
        throw matl::ConfigError("config", std::string("not valid JSON: ") + e.what());
    }
}

// `key=value`; value is parsed as JSON when possible, else taken as a string.
void apply_override(json& train, const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw matl::ConfigError(kv, "override must look like key=value");
    const std::string key = kv.substr(0, eq);
    const std::string value = kv.substr(eq + 1);
    json v = json::parse(value, nullptr, false);
    if (v.is_discarded()) v = value;
    train[key] = v;
}

matl::Dataset load_data(const RunFile& r) {
    if (r.csv) return matl::load_csv(*r.csv, r.schema);
    return matl::synth_generate(r.synth);
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw matl::IoError("cannot write " + path.string());
    out << text;
}

std::vector<std::string> header_for(const RunFile& r) {
    return {std::string("version: ") + matl::version_tag(), "config: " + normalized(r).dump()};
}

json stamped(const RunFile& r, json body) {
    body["version"] = matl::version_tag();
    body["run_config"] = normalized(r);
    return body;
}

std::string matrix_csv(const matl::Matrix& m) {
    std::ostringstream os;
    os.precision(12);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) os << (c ? "," : "") << m(i, c);
        os << '\n';
    }
    return os.str();
}

void dump_diagnostics(const RunFile& r, const matl::RunReport& rep, const fs::path& dir) {
    fs::create_directories(dir);
    std::ostringstream assign, norms;
    assign << "fold,epoch,K,sigma,objective,assignment\n";
    norms << "fold,epoch,superdomain,norm\n";
    for (const auto& f : rep.folds) {
        for (const auto& e : f.history) {
            assign << f.fold << ',' << e.epoch << ',' << e.K << ',' << e.sigma << ',' << e.objective << ',';
            for (std::size_t i = 0; i < e.assignment.size(); ++i) assign << (i ? " " : "") << e.assignment[i];
            assign << '\n';
            for (std::size_t k = 0; k < e.domain_prototype_norms.size(); ++k) {
                norms << f.fold << ',' << e.epoch << ',' << k << ',' << e.domain_prototype_norms[k] << '\n';
            }
            if (e.mmd) {
                write_text(dir / ("mmd_fold" + std::to_string(f.fold) + "_epoch" + std::to_string(e.epoch) + ".csv"),
                           matl::with_header(header_for(r), matrix_csv(*e.mmd)));
            }
        }
    }
    write_text(dir / "assignments.csv", matl::with_header(header_for(r), assign.str()));
    write_text(dir / "prototype_norms.csv", matl::with_header(header_for(r), norms.str()));
}

int cmd_synth(const RunFile& r, const fs::path& out) {
    const matl::Dataset ds = matl::synth_generate(r.synth);
    const auto groups = matl::synth_domain_groups(r.synth);
    std::string g;
    for (std::size_t i = 0; i < groups.size(); ++i) g += (i ? " " : "") + std::to_string(groups[i]);
    auto header = header_for(r);
    header.push_back("domain_groups: " + g);
    matl::write_csv(ds, out / "synth.csv", header);
    std::cout << "wrote " << (out / "synth.csv").string() << " (" << ds.size() << " rows)\n";
    return 0;
}

int cmd_train(const RunFile& r, const fs::path& out, bool diagnostics) {
    const matl::Dataset ds = load_data(r);
    std::vector<int> keep;
    for (int s = 0; s < ds.num_subjects(); ++s) {
        if (!r.holdout || ds.subject_names()[static_cast<std::size_t>(s)] != *r.holdout) keep.push_back(s);
    }
    if (r.holdout && static_cast<int>(keep.size()) == ds.num_subjects()) {
        throw matl::ConfigError("holdout", "no subject named '" + *r.holdout + "'");
    }
    const std::optional<int> session =
        r.protocol == matl::Protocol::SingleSession ? std::optional<int>(0) : std::nullopt;
    const matl::Dataset source = ds.select(keep, session);
    const matl::TrainedState st = matl::train_fold(source, r.train, {diagnostics});
    matl::save_checkpoint(st, out / "checkpoint.json");
    matl::RunReport rep;
    rep.config = r.train;
    matl::FoldReport f;
    f.history = st.history;
    rep.folds.push_back(f);
    write_text(out / "epochs.csv", matl::with_header(header_for(r), matl::epoch_table_csv(rep)));
    json summary{{"source_subjects", st.source_subjects}, {"superdomains", st.assignment.assign},
                 {"epochs", st.history.size()}, {"op_trace", st.op_trace}};
    write_text(out / "train.json", stamped(r, summary).dump(2) + "\n");
    std::cout << "trained on " << source.size() << " rows from " << source.num_subjects() << " subjects; K = "
              << st.assignment.K << "\n";
    return 0;
}

int cmd_eval(const RunFile& r, const fs::path& out, const std::string& checkpoint) {
    const std::string path = !checkpoint.empty() ? checkpoint : r.checkpoint.value_or((out / "checkpoint.json").string());
    if (!fs::exists(path)) throw matl::IoError("checkpoint not found: " + path);
    const matl::TrainedState st = matl::load_checkpoint(path);
    matl::Dataset ds = load_data(r);
    if (r.holdout) {
        int id = -1;
        for (int s = 0; s < ds.num_subjects(); ++s) {
            if (ds.subject_names()[static_cast<std::size_t>(s)] == *r.holdout) id = s;
        }
        if (id < 0) throw matl::ConfigError("holdout", "no subject named '" + *r.holdout + "'");
        ds = ds.select({id});
    }
    const matl::Evaluation e = matl::evaluate(st, ds);
    write_text(out / "predictions.csv", matl::with_header(header_for(r), matl::predictions_csv(e)));
    json body{{"accuracy", e.accuracy}, {"samples", e.truth.size()}, {"confusion", matl::to_json(e.confusion)},
              {"checkpoint", path}};
    write_text(out / "eval.json", stamped(r, body).dump(2) + "\n");
    std::printf("accuracy %.2f%% on %zu samples\n", 100.0 * e.accuracy, e.truth.size());
    return 0;
}

matl::RunOptions run_options(int jobs, bool diagnostics) {
    matl::RunOptions o;
    o.jobs = jobs;
    o.diagnostics = diagnostics;
    return o;
}

int cmd_protocol(const RunFile& r, const fs::path& out, int jobs, bool diagnostics, bool checkpoints) {
    const matl::Dataset ds = load_data(r);
    matl::RunOptions opts = run_options(jobs, diagnostics);
    if (checkpoints) {
        opts.checkpoint_dir = out / "checkpoints";
        fs::create_directories(opts.checkpoint_dir);
    }
    const matl::RunReport rep = matl::run_protocol(ds, r.protocol, r.train, opts);
    json body = matl::to_json(rep, diagnostics);
    write_text(out / "report.json", stamped(r, body).dump(2) + "\n");
    write_text(out / "folds.csv", matl::with_header(header_for(r), matl::fold_table_csv(rep)));
    write_text(out / "epochs.csv", matl::with_header(header_for(r), matl::epoch_table_csv(rep)));
    if (diagnostics) dump_diagnostics(r, rep, out / "diagnostics");
    std::printf("%s: %.2f%% +- %.2f%% over %zu folds\n", matl::to_string(r.protocol).c_str(), 100.0 * rep.mean,
                100.0 * rep.std, rep.folds.size());
    return 0;
}

int cmd_noise(const RunFile& r, const fs::path& out, int jobs) {
    const matl::Dataset ds = load_data(r);
    const auto rows = matl::noise_sweep(ds, r.protocol, r.etas, r.train, run_options(jobs, false));
    write_text(out / "noise_sweep.csv", matl::with_header(header_for(r), matl::noise_table_csv(rows)));
    for (const auto& row : rows) {
        std::printf("eta %.2f  pointwise %.2f%%  pairwise %.2f%%\n", row.eta, 100.0 * row.pointwise_mean,
                    100.0 * row.pairwise_mean);
    }
    return 0;
}

int cmd_ksweep(const RunFile& r, const fs::path& out, int jobs) {
    const matl::Dataset ds = load_data(r);
    std::vector<int> ks = r.ks;
    if (ks.empty()) {
        for (int k = 1; k <= ds.num_subjects(); ++k) ks.push_back(k);
    }
    const auto rows = matl::k_sweep(ds, r.protocol, ks, r.train, run_options(jobs, false));
    write_text(out / "k_sweep.csv", matl::with_header(header_for(r), matl::k_table_csv(rows)));
    for (const auto& row : rows) std::printf("K %d  %.2f%% +- %.2f%%\n", row.K, 100.0 * row.mean, 100.0 * row.std);
    return 0;
}

std::string config_key_help() {
    std::ostringstream os;
    os << "\nTrain config keys ([reference] values come from the method definition, [artifact] values are\n"
          "choices of this implementation):\n";
    for (const auto& k : matl::train_config_keys()) {
        os << "  " << k.key << std::string(k.key.size() < 20 ? 20 - k.key.size() : 1, ' ')
           << (k.reference ? "[reference] " : "[artifact]  ") << k.description << "\n";
    }
    os << "\nExit codes: 0 ok, 1 runtime failure, 2 configuration error, 66 missing input file.\n";
    return os.str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-source domain adaptation with decoupled features and adaptive prototypes", "matl"};
    app.set_version_flag("--version", matl::version_tag());
    app.footer(config_key_help());
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    int jobs = 1;
    bool diagnostics = false;
    bool checkpoints = false;
    std::vector<std::string> overrides;
    std::string checkpoint;

    app.add_option("-c,--config", config_path, "run config JSON");
    app.add_option("--seed", seed, "override the seed (train.seed, and data.synth.seed for synth)");
    app.add_option("-o,--out", out_dir, "output directory (default: config 'output', else ./out)");
    app.add_option("-j,--jobs", jobs, "folds trained in parallel")->check(CLI::PositiveNumber);
    app.add_flag("--dump-diagnostics", diagnostics, "write MMD matrices, assignments and prototype norms");
    app.add_option("--set", overrides, "override a train key, e.g. --set K=3 (repeatable)");

    auto* synth = app.add_subcommand("synth", "write a synthetic dataset CSV");
    auto* train = app.add_subcommand("train", "train on the source subjects and save a checkpoint");
    auto* eval = app.add_subcommand("eval", "score a checkpoint on a dataset, write predictions.csv");
    eval->add_option("--checkpoint", checkpoint, "checkpoint path (default: config eval.checkpoint)");
    auto* protocol = app.add_subcommand("protocol", "leave-one-subject-out run, write report.json");
    protocol->add_flag("--save-checkpoints", checkpoints, "save one checkpoint per fold");
    auto* noise = app.add_subcommand("noise-sweep", "pointwise vs pairwise accuracy under label noise");
    auto* ksweep = app.add_subcommand("k-sweep", "accuracy as a function of the superdomain count");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        json doc = config_path.empty() ? json::object() : read_json_file(config_path);
        if (!doc.is_object()) throw matl::ConfigError("config", "top level must be an object");
        if (!overrides.empty() || seed) {
            json& t = doc["train"];
            if (t.is_null()) t = json::object();
            for (const auto& kv : overrides) apply_override(t, kv);
            if (seed) t["seed"] = *seed;
        }
        if (seed && command == "synth") doc["data"]["synth"]["seed"] = *seed;
        RunFile run = parse_run_file(doc);
        if (!out_dir.empty()) run.output = out_dir;
        const fs::path out = run.output;
        fs::create_directories(out);
        write_text(out / "config.json", normalized(run).dump(2) + "\n");

        if (*synth) return cmd_synth(run, out);
        if (*train) return cmd_train(run, out, diagnostics);
        if (*eval) return cmd_eval(run, out, checkpoint);
        if (*protocol) return cmd_protocol(run, out, jobs, diagnostics, checkpoints);
        if (*noise) return cmd_noise(run, out, jobs);
        if (*ksweep) return cmd_ksweep(run, out, jobs);
        return 1;
    } catch (const matl::ConfigError& e) {
        std::cerr << "matl " << command << ": config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const matl::IoError& e) {
        std::cerr << "matl " << command << ": " << e.what() << "\n";
        return kExitNoInput;
    } catch (const std::exception& e) {
        std::cerr << "matl " << command << ": error: " << e.what() << "\n";
        return 1;
    }
}
