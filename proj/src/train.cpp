#include "ihan/train.hpp"

#include <atomic>
#include <chrono>
#include <cstring>
#include <cmath>
#include <numeric>
#include <thread>

#include "ihan/adamw.hpp"
#include "ihan/data.hpp"
#include "ihan/errors.hpp"
#include "ihan/rng.hpp"
#include "ihan/tape.hpp"

namespace ihan {

void TrainConfig::validate() const {
    if (embedding_dim < 1 || hidden_dim < 1) throw ConfigError("train config: dims must be positive");
    if (learning_rate <= 0.0) throw ConfigError("train config: learning rate must be positive");
    if (batch_size < 1) throw ConfigError("train config: batch size must be positive");
    if (max_epochs < 1) throw ConfigError("train config: max_epochs must be positive");
    if (patience < 1) throw ConfigError("train config: patience must be positive");
    if (patience >= max_epochs) throw ConfigError("train config: patience must be below max_epochs");
    if (vocab_min_count < 1) throw ConfigError("train config: vocab_min_count must be positive");
    if (active_types.empty()) throw ConfigError("train config: no active code types");
    if (mode == FusionMode::single_type && active_types.size() != 1) {
        throw ConfigError("train config: single_type mode takes exactly one code type");
    }
}

namespace {

bool scorable(const PatientRecord& p, const std::vector<CodeType>& types) {
    for (CodeType t : types) {
        if (p.has_code_of(t)) return true;
    }
    return false;
}

std::vector<const PatientRecord*> scorable_subset(const std::vector<PatientRecord>& patients,
                                                  const std::vector<CodeType>& types,
                                                  std::size_t* skipped) {
    std::vector<const PatientRecord*> out;
    out.reserve(patients.size());
    for (const PatientRecord& p : patients) {
        if (scorable(p, types)) out.push_back(&p);
        else ++*skipped;
    }
    return out;
}

double mean_valid_loss(const IhanParams& params, const VocabSet& vocabs,
                       const std::vector<const PatientRecord*>& patients) {
    double total = 0.0;
    for (const PatientRecord* p : patients) {
        Tape tape;
        IhanVars vars = bind_params(tape, params);
        ForwardVars fv = forward_on_tape(tape, params, vars, vocabs, *p);
        total += tape.scalar_value(tape.bce(fv.y_hat, static_cast<double>(p->label)));
    }
    return total / static_cast<double>(patients.size());
}

} // namespace

TrainedModel train(const TrainConfig& config, const std::vector<PatientRecord>& train_set,
                   const std::vector<PatientRecord>& valid_set) {
    config.validate();
    if (train_set.empty() || valid_set.empty()) {
        throw DegenerateInputError("train: empty training or validation set");
    }

    TrainedModel model;
    model.config = config;
    model.vocabs = VocabSet::build(config.mode, config.active_types, train_set,
                                   config.vocab_min_count);

    std::vector<const PatientRecord*> train_pts =
        scorable_subset(train_set, model.vocabs.active_types, &model.history.skipped_train);
    std::vector<const PatientRecord*> valid_pts =
        scorable_subset(valid_set, model.vocabs.active_types, &model.history.skipped_valid);
    if (train_pts.empty() || valid_pts.empty()) {
        throw DegenerateInputError("train: no patient has a code of any active type");
    }
    bool has_pos = false, has_neg = false;
    for (const PatientRecord* p : train_pts) (p->label ? has_pos : has_neg) = true;
    if (!has_pos || !has_neg) {
        throw DegenerateLabelError("train: training labels are all " +
                                   std::to_string(train_pts.front()->label));
    }

    Rng root(config.seed);
    Rng init_rng = root.child("init");
    Rng shuffle_rng = root.child("shuffle");
    model.params = IhanParams::init(config.mode, model.vocabs.active_types, config.embedding_dim,
                                    config.hidden_dim, model.vocabs, init_rng);

    AdamWConfig opt_cfg;
    opt_cfg.learning_rate = config.learning_rate;
    opt_cfg.weight_decay = config.weight_decay;
    AdamW optimizer(opt_cfg);
    AdamWConfig emb_cfg = opt_cfg;
    emb_cfg.weight_decay = config.embedding_weight_decay;
    AdamW emb_optimizer(emb_cfg);
    AdamWConfig bias_cfg = opt_cfg;
    bias_cfg.weight_decay = 0.0; // biases are never decayed
    AdamW bias_optimizer(bias_cfg);

    IhanParams best_params = model.params;
    EarlyStopper stopper(config.patience);
    std::vector<std::size_t> order(train_pts.size());
    std::iota(order.begin(), order.end(), 0);

    // three decay groups: embeddings, other weight matrices, biases
    auto ends_with = [](const std::string& s, const char* suffix) {
        const std::size_t n = std::strlen(suffix);
        return s.size() >= n && s.compare(s.size() - n, n, suffix) == 0;
    };
    std::vector<Tensor*> param_ptrs;
    std::vector<int> decay_group; // 0 = embedding, 1 = matrix, 2 = bias
    visit_params(model.params, [&](const std::string& name, Tensor& t) {
        param_ptrs.push_back(&t);
        if (ends_with(name, ".emb")) {
            decay_group.push_back(0);
        } else if (ends_with(name, "_b") || ends_with(name, ".b") || ends_with(name, ".br") ||
                   ends_with(name, ".bz") || ends_with(name, ".bn")) {
            decay_group.push_back(2);
        } else {
            decay_group.push_back(1);
        }
    });
    std::vector<Tensor> grad_accum;
    for (Tensor* t : param_ptrs) grad_accum.emplace_back(t->rows(), t->cols());
    std::vector<Tensor*> groups[3];
    for (std::size_t i = 0; i < param_ptrs.size(); ++i) {
        groups[decay_group[i]].push_back(param_ptrs[i]);
    }

    for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double epoch_loss = 0.0;
        for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
            const std::size_t end = std::min(order.size(), begin + config.batch_size);
            const double inv_batch = 1.0 / static_cast<double>(end - begin);
            for (Tensor& g : grad_accum) g.fill(0.0);
            for (std::size_t i = begin; i < end; ++i) {
                const PatientRecord& patient = *train_pts[order[i]];
                Tape tape;
                IhanVars vars = bind_params(tape, model.params);
                ForwardVars fv = forward_on_tape(tape, model.params, vars, model.vocabs, patient);
                Var loss = tape.bce(fv.y_hat, static_cast<double>(patient.label));
                epoch_loss += tape.scalar_value(loss);
                tape.backward(loss);
                std::vector<Tensor> grads = collect_grads(tape, model.params, vars);
                for (std::size_t g = 0; g < grads.size(); ++g) {
                    grad_accum[g].add_scaled(grads[g], inv_batch);
                }
            }
            if (config.clip_norm > 0.0) {
                double sq = 0.0;
                for (const Tensor& g : grad_accum) sq += g.squared_norm();
                const double norm = std::sqrt(sq);
                if (norm > config.clip_norm) {
                    const double s = config.clip_norm / norm;
                    for (Tensor& g : grad_accum) g.scale_inplace(s);
                }
            }
            std::vector<const Tensor*> group_grads[3];
            for (std::size_t g = 0; g < grad_accum.size(); ++g) {
                group_grads[decay_group[g]].push_back(&grad_accum[g]);
            }
            emb_optimizer.step(groups[0], group_grads[0]);
            optimizer.step(groups[1], group_grads[1]);
            bias_optimizer.step(groups[2], group_grads[2]);
        }

        EpochStats stats;
        stats.train_loss = epoch_loss / static_cast<double>(train_pts.size());
        stats.valid_loss = mean_valid_loss(model.params, model.vocabs, valid_pts);
        model.history.epochs.push_back(stats);
        model.history.stopped_epoch = epoch;

        const bool keep_going = stopper.observe(epoch, stats.valid_loss);
        if (stopper.improved_last()) best_params = model.params;
        if (!keep_going) break;
    }

    model.params = std::move(best_params);
    model.history.best_epoch = stopper.best_epoch();
    model.history.best_valid_loss = stopper.best_loss();
    return model;
}

ScoredCohort score_cohort(const IhanParams& params, const VocabSet& vocabs,
                          const std::vector<PatientRecord>& patients) {
    ScoredCohort out;
    for (const PatientRecord& p : patients) {
        if (!scorable(p, vocabs.active_types)) {
            ++out.skipped;
            continue;
        }
        out.patient_ids.push_back(p.patient_id);
        out.scores.push_back(forward(params, vocabs, p).y_hat);
        out.labels.push_back(p.label);
    }
    return out;
}

double evaluate_auc(const TrainedModel& model, const std::vector<PatientRecord>& test_set) {
    ScoredCohort scored = score_cohort(model.params, model.vocabs, test_set);
    return auc(scored.scores, scored.labels);
}

ExperimentResult run_experiment(const TrainConfig& config,
                                const std::vector<PatientRecord>& cohort, int n_runs,
                                const std::array<double, 3>& split_fractions, bool stratified,
                                int jobs, const std::string& label) {
    if (n_runs < 2) {
        throw ConfigError("run_experiment: need at least 2 runs, got " + std::to_string(n_runs));
    }
    ExperimentResult result;
    result.label = label.empty() ? std::string(to_string(config.mode)) : label;
    result.runs.resize(n_runs);

    std::atomic<int> next{0};
    auto worker = [&]() {
        for (;;) {
            const int r = next.fetch_add(1);
            if (r >= n_runs) return;
            const std::uint64_t run_seed = config.seed + static_cast<std::uint64_t>(r);
            const auto t0 = std::chrono::steady_clock::now();
            SplitResult split = split_cohort(cohort, split_fractions, run_seed, stratified);
            TrainConfig run_cfg = config;
            run_cfg.seed = run_seed;
            TrainedModel model = train(run_cfg, split.train, split.valid);
            RunResult& rr = result.runs[r];
            rr.seed = run_seed;
            rr.test_auc = evaluate_auc(model, split.test);
            rr.best_epoch = model.history.best_epoch;
            rr.curve = model.history.epochs;
            rr.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        }
    };
    const int n_threads = std::max(1, std::min(jobs, n_runs));
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
        for (std::thread& t : pool) t.join();
    }

    std::vector<double> aucs = result.aucs();
    result.mean_auc = mean(aucs);
    result.std_auc = aucs.size() > 1 ? sample_stddev(aucs) : 0.0;
    return result;
}

WelchResult compare_experiments(const ExperimentResult& a, const ExperimentResult& b) {
    return welch_t_test(a.aucs(), b.aucs());
}

// --- logistic baseline ------------------------------------------------------

namespace {

Tensor count_features(const LogisticModel& model, const PatientRecord& patient) {
    Tensor x(model.features.size(), 1);
    for (const Encounter& e : patient.encounters) {
        for (const CodedEvent& c : e.codes) {
            x(model.features.lookup(namespaced_code(c.type, c.code)), 0) += 1.0;
        }
    }
    return x;
}

} // namespace

LogisticModel train_logistic_baseline(const std::vector<PatientRecord>& train_set,
                                      const std::vector<PatientRecord>& valid_set,
                                      const LogisticConfig& config) {
    if (train_set.empty() || valid_set.empty()) {
        throw DegenerateInputError("logistic baseline: empty training or validation set");
    }
    bool has_pos = false, has_neg = false;
    for (const PatientRecord& p : train_set) (p.label ? has_pos : has_neg) = true;
    if (!has_pos || !has_neg) {
        throw DegenerateLabelError("logistic baseline: training labels are all " +
                                   std::to_string(train_set.front().label));
    }

    LogisticModel model;
    {
        std::vector<std::pair<CodeType, std::string>> stream;
        for (const PatientRecord& p : train_set) {
            for (const Encounter& e : p.encounters) {
                for (const CodedEvent& c : e.codes) stream.emplace_back(c.type, c.code);
            }
        }
        model.features = Vocabulary::build_shared(stream, 1);
    }
    model.weights = Tensor(1, model.features.size());
    model.bias = 0.0;
    if (config.max_epochs == 0) return model;

    std::vector<Tensor> train_x, valid_x;
    for (const PatientRecord& p : train_set) train_x.push_back(count_features(model, p));
    for (const PatientRecord& p : valid_set) valid_x.push_back(count_features(model, p));

    AdamWConfig wcfg;
    wcfg.learning_rate = config.learning_rate;
    wcfg.weight_decay = config.l2;
    AdamW w_opt(wcfg);
    AdamWConfig bcfg = wcfg;
    bcfg.weight_decay = 0.0;
    AdamW b_opt(bcfg);

    Rng shuffle_rng = Rng(config.seed).child("shuffle");
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);

    Tensor best_w = model.weights;
    double best_b = model.bias;
    EarlyStopper stopper(config.patience);

    for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
            const std::size_t end = std::min(order.size(), begin + config.batch_size);
            const double inv_batch = 1.0 / static_cast<double>(end - begin);
            Tensor gw(1, model.features.size());
            Tensor gb(1, 1);
            for (std::size_t i = begin; i < end; ++i) {
                const PatientRecord& patient = train_set[order[i]];
                Tape tape;
                Var w = tape.leaf(model.weights);
                Var b = tape.leaf(Tensor::scalar(model.bias));
                Var y = tape.sigmoid(tape.add(tape.matmul(w, tape.constant(train_x[order[i]])), b));
                Var loss = tape.bce(y, static_cast<double>(patient.label));
                tape.backward(loss);
                gw.add_scaled(tape.grad(w), inv_batch);
                gb.add_scaled(tape.grad(b), inv_batch);
            }
            Tensor bias_t = Tensor::scalar(model.bias);
            w_opt.step({&model.weights}, {&gw});
            b_opt.step({&bias_t}, {&gb});
            model.bias = bias_t(0, 0);
        }
        double valid_loss = 0.0;
        for (std::size_t i = 0; i < valid_set.size(); ++i) {
            Tape tape;
            Var w = tape.constant(model.weights);
            Var b = tape.constant(Tensor::scalar(model.bias));
            Var y = tape.sigmoid(tape.add(tape.matmul(w, tape.constant(valid_x[i])), b));
            valid_loss += tape.scalar_value(tape.bce(y, static_cast<double>(valid_set[i].label)));
        }
        valid_loss /= static_cast<double>(valid_set.size());
        const bool keep_going = stopper.observe(epoch, valid_loss);
        if (stopper.improved_last()) {
            best_w = model.weights;
            best_b = model.bias;
        }
        if (!keep_going) break;
    }
    model.weights = std::move(best_w);
    model.bias = best_b;
    return model;
}

double logistic_score(const LogisticModel& model, const PatientRecord& patient) {
    Tensor x = count_features(model, patient);
    double z = model.bias;
    for (int i = 0; i < x.size(); ++i) z += model.weights[i] * x[i];
    return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

double evaluate_logistic_auc(const LogisticModel& model,
                             const std::vector<PatientRecord>& test_set) {
    std::vector<double> scores;
    std::vector<int> labels;
    for (const PatientRecord& p : test_set) {
        scores.push_back(logistic_score(model, p));
        labels.push_back(p.label);
    }
    return auc(scores, labels);
}

} // namespace ihan
