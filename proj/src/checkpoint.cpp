#include "matl/checkpoint.hpp"

#include <fstream>

#include "matl/errors.hpp"

namespace matl {

using nlohmann::json;

namespace {

json matrix_json(const Matrix& m) {
    std::vector<double> data(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) data[static_cast<std::size_t>(r * m.cols() + c)] = m(r, c);
    }
    return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

Matrix matrix_from(const json& j) {
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const auto data = j.at("data").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw ValidationError("checkpoint matrix size mismatch");
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[static_cast<std::size_t>(r * cols + c)];
    }
    return m;
}

json mlp_json(const Mlp& net) {
    json layers = json::array();
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
        const LayerSpec& s = net.specs()[l];
        layers.push_back({{"in", s.in_dim},
                          {"out", s.out_dim},
                          {"activation", to_string(s.activation)},
                          {"slope", s.slope},
                          {"dropout", s.dropout_p},
                          {"weight", matrix_json(net.weight(l))},
                          {"bias", matrix_json(net.bias(l))}});
    }
    return layers;
}

Mlp mlp_from(const json& j) {
    std::vector<LayerSpec> specs;
    for (const auto& l : j) {
        specs.push_back({l.at("in").get<int>(), l.at("out").get<int>(),
                         activation_from_string(l.at("activation").get<std::string>()), l.at("slope").get<double>(),
                         l.at("dropout").get<double>()});
    }
    Rng unused(0);
    Mlp net(specs, unused);
    for (std::size_t l = 0; l < specs.size(); ++l) {
        const Matrix w = matrix_from(j[l].at("weight"));
        const Matrix b = matrix_from(j[l].at("bias"));
        if (w.rows() != net.weight(l).rows() || w.cols() != net.weight(l).cols() || b.size() != net.bias(l).size()) {
            throw DimensionError("checkpoint layer shape does not match its spec");
        }
        net.weight(l) = w;
        net.bias(l) = b.reshaped();
    }
    return net;
}

}  // namespace

json checkpoint_to_json(const TrainedState& st) {
    json bank;
    bank["K"] = st.bank.K();
    bank["M"] = st.bank.M();
    bank["dim"] = st.bank.dim();
    bank["epoch"] = st.bank.epoch();
    json domains = json::array();
    json classes = json::array();
    for (int k = 0; k < st.bank.K(); ++k) {
        if (st.bank.domain_ready(k)) {
            const Vector v = st.bank.domain(k);
            domains.push_back(std::vector<double>(v.begin(), v.end()));
        } else {
            domains.push_back(nullptr);
        }
        json row = json::array();
        for (int m = 0; m < st.bank.M(); ++m) {
            if (st.bank.class_ready(k, m)) {
                const Vector v = st.bank.cls(k, m);
                row.push_back(std::vector<double>(v.begin(), v.end()));
            } else {
                row.push_back(nullptr);
            }
        }
        classes.push_back(row);
    }
    bank["domain"] = domains;
    bank["class"] = classes;

    return json{{"format", kCheckpointFormat},
                {"version", version_tag()},
                {"config", to_json(st.config)},
                {"input_dim", st.input_dim},
                {"num_classes", st.num_classes},
                {"source_subjects", st.source_subjects},
                {"networks", {{"extractor", mlp_json(st.model.nets.extractor)},
                              {"domain_decoupler", mlp_json(st.model.nets.domain_decoupler)},
                              {"class_decoupler", mlp_json(st.model.nets.class_decoupler)},
                              {"domain_disc", mlp_json(st.model.nets.domain_disc)},
                              {"class_disc", mlp_json(st.model.nets.class_disc)}}},
                {"theta", matrix_json(st.model.theta)},
                {"theta_trainable", st.model.theta_trainable},
                {"bank", bank},
                {"assignment", {{"K", st.assignment.K},
                                {"assign", st.assignment.assign},
                                {"medoids", st.assignment.medoids},
                                {"objective", st.assignment.objective}}}};
}

TrainedState checkpoint_from_json(const json& j) {
    try {
        if (j.at("format").get<std::string>() != kCheckpointFormat) {
            throw ValidationError("not a " + std::string(kCheckpointFormat) + " document");
        }
        TrainedState st;
        st.config = train_config_from_json(j.at("config"));
        st.input_dim = j.at("input_dim").get<int>();
        st.num_classes = j.at("num_classes").get<int>();
        st.source_subjects = j.at("source_subjects").get<std::vector<std::string>>();
        const json& n = j.at("networks");
        st.model.nets.extractor = mlp_from(n.at("extractor"));
        st.model.nets.domain_decoupler = mlp_from(n.at("domain_decoupler"));
        st.model.nets.class_decoupler = mlp_from(n.at("class_decoupler"));
        st.model.nets.domain_disc = mlp_from(n.at("domain_disc"));
        st.model.nets.class_disc = mlp_from(n.at("class_disc"));
        st.model.theta = matrix_from(j.at("theta"));
        st.model.theta_trainable = j.at("theta_trainable").get<bool>();

        const json& b = j.at("bank");
        const int K = b.at("K").get<int>();
        const int M = b.at("M").get<int>();
        const int dim = b.at("dim").get<int>();
        st.bank = PrototypeBank(K, M, dim);
        st.bank.set_epoch(b.at("epoch").get<int>());
        for (int k = 0; k < K; ++k) {
            const json& d = b.at("domain").at(static_cast<std::size_t>(k));
            if (!d.is_null()) {
                const auto v = d.get<std::vector<double>>();
                st.bank.set_domain(k, Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())));
            }
            for (int m = 0; m < M; ++m) {
                const json& c = b.at("class").at(static_cast<std::size_t>(k)).at(static_cast<std::size_t>(m));
                if (c.is_null()) continue;
                const auto v = c.get<std::vector<double>>();
                st.bank.set_class(k, m, Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())));
            }
        }

        const json& a = j.at("assignment");
        st.assignment.K = a.at("K").get<int>();
        st.assignment.assign = a.at("assign").get<std::vector<int>>();
        st.assignment.medoids = a.at("medoids").get<std::vector<int>>();
        st.assignment.objective = a.at("objective").get<double>();
        return st;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed checkpoint: ") + e.what());
    }
}

void save_checkpoint(const TrainedState& st, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << checkpoint_to_json(st).dump() << '\n';
}

TrainedState load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("checkpoint is not JSON: ") + e.what());
    }
    return checkpoint_from_json(j);
}

}  // namespace matl
