#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "matl/dataio.hpp"
#include "matl/infer.hpp"
#include "matl/mmd.hpp"
#include "matl/proto.hpp"

namespace matl {

// Components that can be switched off for ablation runs.
struct Ablations {
    bool domain_prototype = false;  // one pooled superdomain, no domain inference
    bool cls_disc_loss = false;
    bool dom_disc_loss = false;
    bool aggregation = false;       // every source subject is its own superdomain
    bool adaptive_alpha = false;    // constant fixed_alpha instead of the decay schedule
    bool pairwise = false;          // pointwise cross-entropy on the class distribution
    bool bilinear_theta = false;    // theta fixed to identity
    bool soft_reg = false;

    std::vector<std::string> names() const;
    void set(const std::string& name);
    static const std::vector<std::string>& all_names();
};

struct TrainConfig {
    int K = 4;
    double alpha_h = 0.8;
    double alpha_l = 0.2;
    double p = 2.0;
    double fixed_alpha = 0.5;
    double beta = 0.01;
    RegularizerKind regularizer = RegularizerKind::Weights;
    double lr = 1e-3;
    double weight_decay = 0.0;
    double grad_clip = 5.0;  // global gradient L2 norm cap, 0 = off
    int batch_size = 256;
    int max_epoch = 100;
    double grl_lambda = 1.0;
    int hidden = 64;
    double leaky_slope = 0.01;
    double disc_dropout = 0.25;
    std::uint64_t seed = 0;
    KernelConfig kernel;
    int mmd_max_rows = 0;  // per-domain cap on rows fed to the MMD matrix, 0 = all
    AggregateOn aggregate_on = AggregateOn::Mmd;
    int aggregate_restarts = 10;
    int aggregate_every = 1;
    bool balanced_domains = false;
    PairwiseForm pairwise_form = PairwiseForm::Standard;
    double eta = 0.0;  // source label-noise ratio
    Ablations disable;

    AlphaSchedule alpha_schedule() const { return {alpha_h, alpha_l, p, max_epoch}; }
    void validate() const;
};

// Documentation row for one config key; `reference` marks values fixed by
// the original method description, everything else is chosen here.
struct ConfigKeyInfo {
    std::string key;
    bool reference;
    std::string description;
};

const std::vector<ConfigKeyInfo>& train_config_keys();

nlohmann::json to_json(const TrainConfig& cfg);
// Unknown keys raise ConfigError naming the key. Missing keys keep defaults.
TrainConfig train_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const SynthConfig& cfg);
SynthConfig synth_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const CsvSchema& s);
CsvSchema csv_schema_from_json(const nlohmann::json& j);

const char* version_tag();

}  // namespace matl
