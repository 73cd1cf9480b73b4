#include "matl/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

#include "matl/checkpoint.hpp"
#include "matl/errors.hpp"

namespace matl {

using nlohmann::json;

namespace {

Architecture architecture_for(const TrainConfig& cfg, int input_dim, int subjects, int classes) {
    Architecture a;
    a.input_dim = input_dim;
    a.hidden = cfg.hidden;
    a.num_subjects = subjects;
    a.num_classes = classes;
    a.leaky_slope = cfg.leaky_slope;
    a.disc_dropout = cfg.disc_dropout;
    return a;
}

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
    return out;
}

// Even-stride subsample of at most `cap` rows (cap == 0 keeps all).
Matrix cap_rows(const Matrix& m, int cap) {
    if (cap <= 0 || m.rows() <= cap) return m;
    Matrix out(cap, m.cols());
    for (Eigen::Index r = 0; r < cap; ++r) out.row(r) = m.row(r * m.rows() / cap);
    return out;
}

std::vector<std::vector<std::size_t>> make_batches(const Dataset& ds, int batch_size, bool balanced, Rng& rng) {
    std::vector<std::size_t> order;
    order.reserve(ds.size());
    if (balanced) {
        std::vector<std::vector<std::size_t>> per(static_cast<std::size_t>(ds.num_subjects()));
        for (int s = 0; s < ds.num_subjects(); ++s) {
            per[static_cast<std::size_t>(s)] = ds.rows_of_subject(s);
            std::shuffle(per[static_cast<std::size_t>(s)].begin(), per[static_cast<std::size_t>(s)].end(), rng);
        }
        for (std::size_t i = 0; order.size() < ds.size(); ++i) {
            for (auto& rows : per) {
                if (i < rows.size()) order.push_back(rows[i]);
            }
        }
    } else {
        order.resize(ds.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);
    }
    std::vector<std::vector<std::size_t>> batches;
    const auto bs = static_cast<std::size_t>(batch_size);
    for (std::size_t start = 0; start < order.size(); start += bs) {
        const std::size_t end = std::min(order.size(), start + bs);
        if (end - start < 2 && !batches.empty()) {
            batches.back().insert(batches.back().end(), order.begin() + static_cast<std::ptrdiff_t>(start),
                                  order.begin() + static_cast<std::ptrdiff_t>(end));
        } else {
            batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                                 order.begin() + static_cast<std::ptrdiff_t>(end));
        }
    }
    return batches;
}

std::vector<int> row_superdomains(const Dataset& ds, const SuperdomainAssignment& a) {
    std::vector<int> out(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) out[i] = a.assign[static_cast<std::size_t>(ds.subjects()[i])];
    return out;
}

PrototypeBank refresh_bank(const PrototypeBank& bank, const Matrix& x_d, const Matrix& x_c,
                           std::span<const int> superdomain, std::span<const int> labels, int K, int M,
                           double alpha, OpTrace& trace) {
    const FreshPrototypes fresh = compute_fresh_prototypes(x_d, x_c, superdomain, labels, K, M);
    trace.hit("compute_fresh_prototypes");
    const PrototypeBank keyed = rekey(bank, fresh);
    trace.hit("rekey");
    trace.hit("adaptive_update");
    return adaptive_update(keyed, fresh, alpha);
}

}  // namespace

void OpTrace::hit(const char* op) {
    if (std::find(ops_.begin(), ops_.end(), op) == ops_.end()) ops_.emplace_back(op);
}

BatchResult batch_gradients(const Model& model, const PrototypeBank& bank, const BatchInput& in,
                            const TrainConfig& cfg, Mode mode, Rng* rng, ModelGrads& grads, const LossTerms& terms,
                            OpTrace* trace) {
    auto hit = [trace](const char* op) {
        if (trace) trace->hit(op);
    };
    const Eigen::Index D = model.theta.rows();
    DecoupleCache cache;
    const DecoupledBatch fb = decouple_forward(model.nets, in.x, in.labels, in.subjects, mode, rng, &cache);
    hit("decouple_forward");
    Matrix g_d = Matrix::Zero(fb.x_d.rows(), D);
    Matrix g_c = Matrix::Zero(fb.x_c.rows(), D);
    BatchResult r;

    if (!cfg.disable.cls_disc_loss) {
        GradTape scratch = model.nets.class_disc.make_tape();
        const DiscriminatorLoss lc = loss_cls(model.nets.class_disc, fb.x_c, fb.x_d, fb.y_c, cfg.grl_lambda, mode, rng,
                                              terms.fd ? grads.tapes.class_disc : scratch);
        hit("loss_cls");
        r.cls = lc.value;
        if (terms.fd) {
            g_c += lc.grad_own;
            g_d += lc.grad_other;
        }
    }
    if (!cfg.disable.dom_disc_loss) {
        GradTape scratch = model.nets.domain_disc.make_tape();
        const DiscriminatorLoss ld = loss_dom(model.nets.domain_disc, fb.x_d, fb.x_c, fb.y_d, cfg.grl_lambda, mode,
                                              rng, terms.fd ? grads.tapes.domain_disc : scratch);
        hit("loss_dom");
        r.dom = ld.value;
        if (terms.fd) {
            g_d += ld.grad_own;
            g_c += ld.grad_other;
        }
    }

    const ClassProbBatch cp = class_probs_batch(fb.x_c, in.superdomains, bank);
    hit("class_probs");
    LossGrad lp;
    if (cfg.disable.pairwise) {
        lp = pointwise_loss(cp.probs, in.labels);
        hit("pointwise_loss");
    } else {
        lp = pairwise_loss(cp.probs, in.labels, cfg.pairwise_form);
        hit("pairwise_loss");
    }
    r.pair = lp.loss;
    if (terms.pair) g_c += class_probs_backward(cp, fb.x_c, in.superdomains, bank, lp.grad);

    if (bank.K() > 1) {
        const SuperdomainLoss sl = superdomain_loss(fb.x_d, in.superdomains, bank, model.theta);
        hit("superdomain_loss");
        r.domain = sl.loss;
        if (terms.pair) {
            g_d += sl.grad_x_d;
            if (model.theta_trainable) grads.theta += sl.grad_theta;
        }
    }

    if (!cfg.disable.soft_reg) {
        if (cfg.regularizer == RegularizerKind::Weights) {
            r.reg = weight_regularizer(model, terms.reg ? &grads : nullptr, cfg.beta);
            hit("weight_regularizer");
        } else {
            const ActivationReg ar = activation_regularizer(fb.x_d, fb.x_c);
            hit("activation_regularizer");
            r.reg = ar.value;
            if (terms.reg) {
                g_d += cfg.beta * ar.grad_x_d;
                g_c += cfg.beta * ar.grad_x_c;
            }
        }
    }
    r.beta = cfg.disable.soft_reg ? 0.0 : cfg.beta;

    decouple_backward(model.nets, cache, g_d, g_c, grads.tapes);
    hit("decouple_backward");
    r.x_d = fb.x_d;
    r.x_c = fb.x_c;
    return r;
}

TrainedState train_fold(const Dataset& source_in, const TrainConfig& cfg, const TrainOptions& opts) {
    cfg.validate();
    if (source_in.num_subjects() < 1) throw TrainingError("source holds no subjects");
    {
        std::vector<char> seen(static_cast<std::size_t>(source_in.num_classes()), 0);
        for (int l : source_in.labels()) seen[static_cast<std::size_t>(l)] = 1;
        for (int m = 0; m < source_in.num_classes(); ++m) {
            if (!seen[static_cast<std::size_t>(m)]) {
                throw TrainingError("class " + std::to_string(m) + " is missing from the source");
            }
        }
    }
    for (int s = 0; s < source_in.num_subjects(); ++s) {
        if (source_in.rows_of_subject(s).size() < 2) {
            throw TrainingError("subject " + std::to_string(s) + " has fewer than 2 source rows");
        }
    }

    Rng rng(derive_seed(cfg.seed, 0x7472));
    const Dataset source = cfg.eta > 0.0 ? inject_label_noise(source_in, cfg.eta, derive_seed(cfg.seed, 0x6e6f))
                                         : source_in;
    const int N = source.num_subjects();
    const int M = source.num_classes();
    const int D = cfg.hidden;
    const int K_target = cfg.disable.domain_prototype ? 1 : cfg.disable.aggregation ? N : std::min(cfg.K, N);

    OpTrace trace;
    TrainedState st;
    st.config = cfg;
    st.input_dim = source.num_features();
    st.num_classes = M;
    st.source_subjects = source.subject_names();
    st.model = Model::build(architecture_for(cfg, source.num_features(), N, M), rng, cfg.disable.bilinear_theta);
    ModelGrads grads = ModelGrads::for_model(st.model);
    const SgdConfig sgd{cfg.lr, cfg.weight_decay};
    const AlphaSchedule sched = cfg.alpha_schedule();

    const Matrix& X = source.features();
    const std::vector<int>& labels = source.labels();
    const std::vector<int>& subjects = source.subjects();

    // Epoch 0: one pooled superdomain seeded from the untrained features.
    st.assignment = single_superdomain(N);
    {
        const DecoupledBatch init = decouple_forward(st.model.nets, X, labels, subjects, Mode::Eval);
        trace.hit("decouple_forward");
        const std::vector<int> sd = row_superdomains(source, st.assignment);
        st.bank = refresh_bank(PrototypeBank(1, M, D), init.x_d, init.x_c, sd, labels, 1, M, 1.0, trace);
        st.bank.set_epoch(0);
    }

    Matrix epoch_x_d(X.rows(), D);
    Matrix epoch_x_c(X.rows(), D);
    for (int t = 1; t <= cfg.max_epoch; ++t) {
        EpochLog log;
        log.epoch = t;
        const std::vector<int> sd_rows = row_superdomains(source, st.assignment);
        const auto batches = make_batches(source, cfg.batch_size, cfg.balanced_domains, rng);
        for (const auto& rows : batches) {
            const Matrix xb = gather_rows(X, rows);
            std::vector<int> lb(rows.size()), subj(rows.size()), sdb(rows.size());
            for (std::size_t i = 0; i < rows.size(); ++i) {
                lb[i] = labels[rows[i]];
                subj[i] = subjects[rows[i]];
                sdb[i] = sd_rows[rows[i]];
            }
            grads.zero();
            const BatchInput in{xb, lb, subj, sdb};
            const BatchResult br = batch_gradients(st.model, st.bank, in, cfg, Mode::Train, &rng, grads, {}, &trace);
            clip_grad_norm(st.model, grads, cfg.grad_clip);
            sgd_step(st.model, grads, sgd);
            trace.hit("sgd_step");

            for (std::size_t i = 0; i < rows.size(); ++i) {
                epoch_x_d.row(static_cast<Eigen::Index>(rows[i])) = br.x_d.row(static_cast<Eigen::Index>(i));
                epoch_x_c.row(static_cast<Eigen::Index>(rows[i])) = br.x_c.row(static_cast<Eigen::Index>(i));
            }
            const double w = static_cast<double>(rows.size()) / static_cast<double>(source.size());
            log.loss_cls += w * br.cls;
            log.loss_dom += w * br.dom;
            log.loss_pair += w * br.pair;
            log.loss_domain += w * br.domain;
            log.reg += w * br.reg;
        }
        log.loss_total = total_loss(loss_fd(log.loss_cls, log.loss_dom), log.loss_pair + log.loss_domain, log.reg,
                                    cfg.disable.soft_reg ? 0.0 : cfg.beta);

        if (t % cfg.aggregate_every == 0) {
            if (K_target == 1) {
                st.assignment = single_superdomain(N);
            } else if (cfg.disable.aggregation) {
                st.assignment = identity_superdomains(N);
            } else {
                std::vector<Matrix> blocks;
                blocks.reserve(static_cast<std::size_t>(N));
                for (int s = 0; s < N; ++s) {
                    const auto rows = source.rows_of_subject(s);
                    blocks.push_back(cap_rows(gather_rows(epoch_x_d, rows), cfg.mmd_max_rows));
                }
                const MmdMatrix mm = mmd_matrix(blocks, cfg.kernel);
                trace.hit("mmd_matrix");
                AggregateOptions ao;
                ao.on = cfg.aggregate_on;
                ao.restarts = cfg.aggregate_restarts;
                st.assignment = aggregate(mm, K_target, rng, ao);
                trace.hit("aggregate");
                log.sigma = mm.sigma;
                if (opts.diagnostics) log.mmd = mm.values;
            }
        }

        const double alpha = cfg.disable.adaptive_alpha ? cfg.fixed_alpha : alpha_at(t, sched);
        trace.hit(cfg.disable.adaptive_alpha ? "fixed_alpha" : "alpha_at");
        const std::vector<int> sd_new = row_superdomains(source, st.assignment);
        st.bank = refresh_bank(st.bank, epoch_x_d, epoch_x_c, sd_new, labels, st.assignment.K, M, alpha, trace);
        st.bank.set_epoch(t);

        log.alpha = alpha;
        log.K = st.assignment.K;
        log.assignment = st.assignment.assign;
        log.objective = st.assignment.objective;
        for (int k = 0; k < st.bank.K(); ++k) {
            log.domain_prototype_norms.push_back(st.bank.domain_ready(k) ? st.bank.domain(k).norm() : 0.0);
        }
        st.history.push_back(std::move(log));
    }
    st.op_trace = trace.take();
    return st;
}

ConfusionMatrix::ConfusionMatrix(int M)
    : counts(static_cast<std::size_t>(M), std::vector<long>(static_cast<std::size_t>(M), 0)) {}

void ConfusionMatrix::add(int truth, int predicted) {
    if (truth < 0 || truth >= size() || predicted < 0 || predicted >= size()) {
        throw DimensionError("confusion matrix index out of range");
    }
    ++counts[static_cast<std::size_t>(truth)][static_cast<std::size_t>(predicted)];
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
    if (other.size() != size()) throw DimensionError("confusion matrices differ in size");
    for (int i = 0; i < size(); ++i) {
        for (int j = 0; j < size(); ++j) {
            counts[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] +=
                other.counts[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        }
    }
}

long ConfusionMatrix::total() const {
    long n = 0;
    for (const auto& row : counts) n = std::accumulate(row.begin(), row.end(), n);
    return n;
}

long ConfusionMatrix::correct() const {
    long n = 0;
    for (int i = 0; i < size(); ++i) n += counts[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)];
    return n;
}

double ConfusionMatrix::accuracy() const {
    const long n = total();
    return n == 0 ? 0.0 : static_cast<double>(correct()) / static_cast<double>(n);
}

std::vector<double> ConfusionMatrix::recalls() const {
    std::vector<double> out;
    for (int i = 0; i < size(); ++i) {
        const auto& row = counts[static_cast<std::size_t>(i)];
        const long n = std::accumulate(row.begin(), row.end(), 0L);
        out.push_back(n == 0 ? std::numeric_limits<double>::quiet_NaN()
                             : static_cast<double>(row[static_cast<std::size_t>(i)]) / static_cast<double>(n));
    }
    return out;
}

Evaluation evaluate(const TrainedState& state, const Dataset& target) {
    if (target.num_features() != state.input_dim) throw DimensionError("target feature width differs from training");
    if (target.num_classes() != state.num_classes) throw DimensionError("target class count differs from training");
    Evaluation e;
    e.confusion = ConfusionMatrix(state.num_classes);
    e.truth = target.labels();
    e.predictions = predict_batch(target.features(), state.model, state.bank);
    for (std::size_t i = 0; i < e.truth.size(); ++i) e.confusion.add(e.truth[i], e.predictions[i].label);
    e.accuracy = e.confusion.accuracy();
    return e;
}

Evaluation evaluate(const TrainedState& state, const GuardedDataset& target) { return evaluate(state, target.read()); }

std::vector<double> RunReport::accuracies() const {
    std::vector<double> out;
    for (const auto& f : folds) out.push_back(f.accuracy);
    return out;
}

std::pair<double, double> mean_std(const std::vector<double>& xs) {
    if (xs.empty()) return {0.0, 0.0};
    const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / static_cast<double>(xs.size()))};
}

namespace {

FoldReport run_fold(const Dataset& ds, const Fold& fold, int index, const TrainConfig& base, const RunOptions& opts) {
    FoldData data = materialize(ds, fold);
    const GuardedDataset target(std::move(data.target));
    TrainConfig cfg = base;
    cfg.seed = derive_seed(base.seed, static_cast<std::uint64_t>(index));

    FoldReport r;
    r.fold = index;
    r.seed = cfg.seed;
    r.target_subject = ds.subject_names()[static_cast<std::size_t>(fold.target_subject)];
    r.source_subjects = data.source.subject_names();
    r.target_rows_in_source = static_cast<std::size_t>(
        std::count(r.source_subjects.begin(), r.source_subjects.end(), r.target_subject));

    TrainedState st = train_fold(data.source, cfg, {opts.diagnostics});
    r.target_reads_before_eval = target.reads();
    if (!opts.checkpoint_dir.empty()) {
        save_checkpoint(st, opts.checkpoint_dir / ("fold" + std::to_string(index) + ".json"));
    }
    r.evaluation = evaluate(st, target);
    r.target_size = r.evaluation.truth.size();
    r.accuracy = r.evaluation.accuracy;
    r.confusion = r.evaluation.confusion;
    r.history = std::move(st.history);
    r.assignment = std::move(st.assignment);
    r.op_trace = std::move(st.op_trace);
    return r;
}

}  // namespace

RunReport run_protocol(const Dataset& ds, Protocol protocol, const TrainConfig& cfg, const RunOptions& opts) {
    cfg.validate();
    const SplitPlan plan = make_splits(ds, protocol);
    RunReport rep;
    rep.protocol = protocol;
    rep.config = cfg;
    rep.folds.resize(plan.folds.size());

    const int jobs = std::max(1, std::min<int>(opts.jobs, static_cast<int>(plan.folds.size())));
    std::vector<std::exception_ptr> errors(plan.folds.size());
    auto work = [&](std::size_t f) {
        try {
            rep.folds[f] = run_fold(ds, plan.folds[f], static_cast<int>(f), cfg, opts);
        } catch (...) {
            errors[f] = std::current_exception();
        }
    };
    if (jobs == 1) {
        for (std::size_t f = 0; f < plan.folds.size(); ++f) work(f);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (int j = 0; j < jobs; ++j) {
            pool.emplace_back([&] {
                for (std::size_t f = next++; f < plan.folds.size(); f = next++) work(f);
            });
        }
        for (auto& th : pool) th.join();
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }

    rep.confusion = ConfusionMatrix(ds.num_classes());
    for (const auto& f : rep.folds) rep.confusion.merge(f.confusion);
    std::tie(rep.mean, rep.std) = mean_std(rep.accuracies());
    return rep;
}

std::vector<NoiseRow> noise_sweep(const Dataset& ds, Protocol protocol, const std::vector<double>& etas,
                                  const TrainConfig& cfg, const RunOptions& opts) {
    std::vector<NoiseRow> out;
    for (double eta : etas) {
        TrainConfig pair = cfg;
        pair.eta = eta;
        pair.disable.pairwise = false;
        TrainConfig point = pair;
        point.disable.pairwise = true;
        const RunReport rp = run_protocol(ds, protocol, pair, opts);
        const RunReport rq = run_protocol(ds, protocol, point, opts);
        out.push_back({eta, rq.mean, rq.std, rp.mean, rp.std});
    }
    return out;
}

std::vector<KRow> k_sweep(const Dataset& ds, Protocol protocol, const std::vector<int>& Ks, const TrainConfig& cfg,
                          const RunOptions& opts) {
    std::vector<KRow> out;
    for (int K : Ks) {
        TrainConfig c = cfg;
        c.K = K;
        const RunReport r = run_protocol(ds, protocol, c, opts);
        out.push_back({K, r.mean, r.std});
    }
    return out;
}

json to_json(const ConfusionMatrix& cm) { return json(cm.counts); }

json to_json(const EpochLog& l) {
    json j{{"epoch", l.epoch},
           {"loss_total", l.loss_total},
           {"loss_cls", l.loss_cls},
           {"loss_dom", l.loss_dom},
           {"loss_pair", l.loss_pair},
           {"loss_domain", l.loss_domain},
           {"reg", l.reg},
           {"alpha", l.alpha},
           {"K", l.K},
           {"assignment", l.assignment},
           {"sigma", l.sigma},
           {"objective", l.objective},
           {"domain_prototype_norms", l.domain_prototype_norms}};
    if (l.mmd) {
        json rows = json::array();
        for (Eigen::Index i = 0; i < l.mmd->rows(); ++i) {
            std::vector<double> row(static_cast<std::size_t>(l.mmd->cols()));
            for (Eigen::Index c = 0; c < l.mmd->cols(); ++c) row[static_cast<std::size_t>(c)] = (*l.mmd)(i, c);
            rows.push_back(row);
        }
        j["mmd"] = rows;
    }
    return j;
}

json to_json(const RunReport& r, bool diagnostics) {
    json folds = json::array();
    for (const auto& f : r.folds) {
        json jf{{"fold", f.fold},
                {"target_subject", f.target_subject},
                {"source_subjects", f.source_subjects},
                {"seed", f.seed},
                {"accuracy", f.accuracy},
                {"target_size", f.target_size},
                {"confusion", to_json(f.confusion)},
                {"audit", {{"target_reads_before_eval", f.target_reads_before_eval},
                           {"target_rows_in_source", f.target_rows_in_source}}},
                {"superdomains", {{"K", f.assignment.K}, {"assign", f.assignment.assign},
                                  {"medoids", f.assignment.medoids}, {"objective", f.assignment.objective}}}};
        json epochs = json::array();
        for (const auto& e : f.history) {
            json je = to_json(e);
            if (!diagnostics) {
                je.erase("mmd");
                je.erase("domain_prototype_norms");
            }
            epochs.push_back(je);
        }
        jf["epochs"] = epochs;
        if (diagnostics) jf["op_trace"] = f.op_trace;
        folds.push_back(jf);
    }
    return json{{"version", version_tag()},
                {"protocol", to_string(r.protocol)},
                {"config", to_json(r.config)},
                {"mean_accuracy", r.mean},
                {"std_accuracy", r.std},
                {"accuracies", r.accuracies()},
                {"confusion", to_json(r.confusion)},
                {"folds", folds}};
}

namespace {

std::string num(double v) {
    std::ostringstream os;
    os.precision(10);
    os << v;
    return os.str();
}

}  // namespace

std::string fold_table_csv(const RunReport& r) {
    std::ostringstream os;
    os << "fold,target_subject,accuracy,target_size,target_reads_before_eval\n";
    for (const auto& f : r.folds) {
        os << f.fold << ',' << f.target_subject << ',' << num(f.accuracy) << ',' << f.target_size << ','
           << f.target_reads_before_eval << '\n';
    }
    os << "mean,," << num(r.mean) << ",,\n";
    os << "std,," << num(r.std) << ",,\n";
    return os.str();
}

std::string epoch_table_csv(const RunReport& r) {
    std::ostringstream os;
    os << "fold,epoch,loss_total,loss_cls,loss_dom,loss_pair,loss_domain,reg,alpha,K,sigma,objective\n";
    for (const auto& f : r.folds) {
        for (const auto& e : f.history) {
            os << f.fold << ',' << e.epoch << ',' << num(e.loss_total) << ',' << num(e.loss_cls) << ','
               << num(e.loss_dom) << ',' << num(e.loss_pair) << ',' << num(e.loss_domain) << ',' << num(e.reg) << ','
               << num(e.alpha) << ',' << e.K << ',' << num(e.sigma) << ',' << num(e.objective) << '\n';
        }
    }
    return os.str();
}

std::string predictions_csv(const Evaluation& e) {
    std::ostringstream os;
    os << "index,true_label,predicted_label,superdomain,max_affinity,max_prob\n";
    for (std::size_t i = 0; i < e.predictions.size(); ++i) {
        const Prediction& p = e.predictions[i];
        os << i << ',' << e.truth[i] << ',' << p.label << ',' << p.superdomain << ',' << num(p.affinity.maxCoeff())
           << ',' << num(p.probs.maxCoeff()) << '\n';
    }
    return os.str();
}

std::string noise_table_csv(const std::vector<NoiseRow>& rows) {
    std::ostringstream os;
    os << "eta,pointwise_mean,pointwise_std,pointwise_drop,pairwise_mean,pairwise_std,pairwise_drop\n";
    const double p0 = rows.empty() ? 0.0 : rows.front().pointwise_mean;
    const double q0 = rows.empty() ? 0.0 : rows.front().pairwise_mean;
    for (const auto& r : rows) {
        os << num(r.eta) << ',' << num(r.pointwise_mean) << ',' << num(r.pointwise_std) << ','
           << num(p0 - r.pointwise_mean) << ',' << num(r.pairwise_mean) << ',' << num(r.pairwise_std) << ','
           << num(q0 - r.pairwise_mean) << '\n';
    }
    return os.str();
}

std::string k_table_csv(const std::vector<KRow>& rows) {
    std::ostringstream os;
    os << "K,mean,std\n";
    for (const auto& r : rows) os << r.K << ',' << num(r.mean) << ',' << num(r.std) << '\n';
    return os.str();
}

std::vector<std::string> artifact_header(const TrainConfig& cfg) {
    return {std::string("version: ") + version_tag(), "config: " + to_json(cfg).dump()};
}

std::string with_header(const std::vector<std::string>& header, const std::string& body) {
    std::string out;
    for (const auto& h : header) out += "# " + h + "\n";
    return out + body;
}

}  // namespace matl
