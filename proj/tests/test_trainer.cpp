#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "matl/errors.hpp"
#include "matl/trainer.hpp"

using namespace matl;

namespace {

Dataset small_data(int subjects = 3, std::uint64_t seed = 4) {
    SynthConfig s;
    s.num_subjects = subjects;
    s.num_classes = 3;
    s.num_features = 8;
    s.per_class_count = 30;
    s.domain_shift_scale = 1.0;
    s.class_separation = 2.0;
    s.seed = seed;
    return synth_generate(s);
}

TrainConfig small_config() {
    TrainConfig c;
    c.K = 2;
    c.hidden = 16;
    c.batch_size = 32;
    c.max_epoch = 5;
    c.lr = 0.01;
    c.aggregate_restarts = 3;
    c.seed = 1;
    return c;
}

}  // namespace

TEST_CASE("confusion matrix arithmetic") {
    ConfusionMatrix all(3);
    for (int m = 0; m < 3; ++m)
        for (int i = 0; i < 10; ++i) all.add(m, m);
    CHECK(all.accuracy() == 1.0);
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) CHECK(all.counts[a][b] == (a == b ? 10 : 0));

    ConfusionMatrix mixed(3);
    for (int i = 0; i < 30; ++i) {
        mixed.add(0, 0);
        mixed.add(1, 1);
        mixed.add(2, 1);
    }
    CHECK(mixed.total() == 90);
    CHECK(mixed.accuracy() == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(mixed.counts[2][1] == 30);
    CHECK(mixed.counts[2][2] == 0);

    auto mean_recall = [](const ConfusionMatrix& c) {
        const auto r = c.recalls();
        double s = 0.0;
        for (double v : r) s += v;
        return s / static_cast<double>(r.size());
    };
    CHECK(mean_recall(mixed) == doctest::Approx(mixed.accuracy()).epsilon(1e-15));

    ConfusionMatrix skewed(2);
    for (int i = 0; i < 90; ++i) skewed.add(0, 0);
    for (int i = 0; i < 10; ++i) skewed.add(1, 0);
    CHECK(skewed.accuracy() == doctest::Approx(0.9).epsilon(1e-15));
    CHECK(mean_recall(skewed) == doctest::Approx(0.5).epsilon(1e-15));

    ConfusionMatrix merged(3);
    merged.merge(all);
    merged.merge(mixed);
    CHECK(merged.total() == 120);
    CHECK(std::isnan(ConfusionMatrix(2).recalls()[0]));
    CHECK_THROWS(merged.merge(ConfusionMatrix(2)));
}

TEST_CASE("mean and population std") {
    const auto [m, s] = mean_std({1.0, 3.0});
    CHECK(m == 2.0);
    CHECK(s == 1.0);
}

TEST_CASE("train_fold input checks") {
    const Dataset ds = small_data();
    CHECK(train_fold(ds.select({0}), small_config()).bank.K() == 1);

    std::vector<int> labels = ds.labels();
    for (auto& l : labels)
        if (l == 2) l = 0;
    CHECK_THROWS_AS(train_fold(ds.with_labels(labels), small_config()), TrainingError);

    TrainConfig bad = small_config();
    bad.K = 0;
    CHECK_THROWS_AS(train_fold(ds, bad), ConfigError);
}

TEST_CASE("training is deterministic and jobs do not change the report") {
    const Dataset ds = small_data();
    TrainConfig cfg = small_config();
    const RunReport a = run_protocol(ds, Protocol::SingleSession, cfg);
    const RunReport b = run_protocol(ds, Protocol::SingleSession, cfg, {2});
    CHECK(a.folds.size() == 3);
    CHECK(to_json(a, true).dump() == to_json(b, true).dump());
    cfg.seed = 2;
    CHECK(to_json(run_protocol(ds, Protocol::SingleSession, cfg), false).dump() != to_json(a, false).dump());
}

TEST_CASE("two-subject smoke run") {
    const Dataset ds = small_data(2);
    TrainConfig cfg = small_config();
    const RunReport r = run_protocol(ds, Protocol::SingleSession, cfg);
    REQUIRE(r.folds.size() == 2);
    const auto [m, s] = mean_std(r.accuracies());
    CHECK(r.mean == m);
    CHECK(r.std == s);
    CHECK(r.confusion.total() == static_cast<long>(ds.size()));
    for (const auto& f : r.folds) {
        CHECK(f.history.size() == 5);
        CHECK(f.source_subjects.size() == 1);
    }
}

TEST_CASE("the target is never read before evaluation") {
    const Dataset ds = small_data(4);
    const RunReport r = run_protocol(ds, Protocol::SingleSession, small_config());
    for (const auto& f : r.folds) {
        CHECK(f.target_reads_before_eval == 0);
        CHECK(f.target_rows_in_source == 0);
        CHECK(f.target_size == ds.rows_of_subject(f.fold).size());
        CHECK(std::find(f.source_subjects.begin(), f.source_subjects.end(), f.target_subject) == f.source_subjects.end());
    }

    const Dataset source = ds.select({1, 2, 3});
    const GuardedDataset target(ds.select({0}));
    const TrainedState st = train_fold(source, small_config());
    CHECK(target.reads() == 0);
    evaluate(st, target);
    CHECK(target.reads() == 1);
}

TEST_CASE("pointwise ablation swaps exactly one operation") {
    const Dataset ds = small_data();
    TrainConfig cfg = small_config();
    cfg.max_epoch = 2;
    const TrainedState pair = train_fold(ds, cfg);
    cfg.disable.pairwise = true;
    const TrainedState point = train_fold(ds, cfg);
    REQUIRE(pair.op_trace.size() == point.op_trace.size());
    int differing = 0;
    for (std::size_t i = 0; i < pair.op_trace.size(); ++i) {
        if (pair.op_trace[i] == point.op_trace[i]) continue;
        ++differing;
        CHECK(pair.op_trace[i] == "pairwise_loss");
        CHECK(point.op_trace[i] == "pointwise_loss");
    }
    CHECK(differing == 1);
}

TEST_CASE("total loss falls from the first to the last epoch") {
    const Dataset ds = small_data(3, 9);
    TrainConfig cfg = small_config();
    cfg.max_epoch = 20;
    int falls = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        cfg.seed = seed;
        const TrainedState st = train_fold(ds, cfg);
        falls += st.history.back().loss_total < st.history.front().loss_total;
    }
    CHECK(falls >= 3);
}

TEST_CASE("training history is well formed") {
    const Dataset ds = small_data(4);
    TrainConfig cfg = small_config();
    const TrainedState st = train_fold(ds, cfg);
    REQUIRE(st.history.size() == 5);
    for (std::size_t e = 0; e < st.history.size(); ++e) {
        const EpochLog& log = st.history[e];
        CHECK(log.epoch == static_cast<int>(e) + 1);
        CHECK(std::isfinite(log.loss_total));
        CHECK(log.K == 2);
        CHECK(log.assignment.size() == 4);
        CHECK(log.alpha == doctest::Approx(alpha_at(log.epoch, cfg.alpha_schedule())));
    }
    CHECK(st.bank.K() == 2);
    CHECK(st.bank.all_domains_ready());
}

TEST_CASE("ablation switches reach the trained state") {
    const Dataset ds = small_data(4);
    TrainConfig cfg = small_config();
    cfg.max_epoch = 2;

    TrainConfig one = cfg;
    one.disable.domain_prototype = true;
    CHECK(train_fold(ds, one).bank.K() == 1);

    TrainConfig ident = cfg;
    ident.disable.aggregation = true;
    const TrainedState id = train_fold(ds, ident);
    CHECK(id.bank.K() == 4);
    CHECK(id.assignment.assign == std::vector<int>{0, 1, 2, 3});

    TrainConfig theta = cfg;
    theta.disable.bilinear_theta = true;
    const TrainedState th = train_fold(ds, theta);
    CHECK(th.model.theta == Matrix::Identity(16, 16));

    TrainConfig big = cfg;
    big.K = 9;
    CHECK(train_fold(ds, big).bank.K() == 4);
}

TEST_CASE("noise sweep zero row reproduces the base runs") {
    const Dataset ds = small_data();
    TrainConfig cfg = small_config();
    cfg.max_epoch = 2;
    const auto rows = noise_sweep(ds, Protocol::SingleSession, {0.0, 0.3}, cfg);
    REQUIRE(rows.size() == 2);
    const RunReport pair = run_protocol(ds, Protocol::SingleSession, cfg);
    TrainConfig point_cfg = cfg;
    point_cfg.disable.pairwise = true;
    const RunReport point = run_protocol(ds, Protocol::SingleSession, point_cfg);
    CHECK(rows[0].pairwise_mean == pair.mean);
    CHECK(rows[0].pointwise_mean == point.mean);
    CHECK(rows[1].eta == 0.3);
}

TEST_CASE("k sweep rows") {
    const Dataset ds = small_data(4);
    TrainConfig cfg = small_config();
    cfg.max_epoch = 2;
    const auto rows = k_sweep(ds, Protocol::SingleSession, {1, 2}, cfg);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].K == 1);
    CHECK(rows[1].K == 2);
}

TEST_CASE("artifact tables") {
    const Dataset ds = small_data(2);
    TrainConfig cfg = small_config();
    cfg.max_epoch = 2;
    const RunReport r = run_protocol(ds, Protocol::SingleSession, cfg);
    const std::string folds = fold_table_csv(r);
    CHECK(std::count(folds.begin(), folds.end(), '\n') == 5);
    const auto j = to_json(r, false);
    CHECK(j.at("folds").size() == 2);
    CHECK(j.at("mean_accuracy").get<double>() == r.mean);
}
