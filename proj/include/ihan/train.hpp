#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "ihan/model.hpp"
#include "ihan/record.hpp"
#include "ihan/stats.hpp"

namespace ihan {

struct TrainConfig {
    FusionMode mode = FusionMode::algorithm_comb;
    std::vector<CodeType> active_types{CodeType::diag, CodeType::proc, CodeType::lab, CodeType::rx};
    int embedding_dim = 128;
    int hidden_dim = 128;
    double learning_rate = 5e-4;
    // strong decoupled decay on all weight matrices; desk-scale cohorts need
    // it to stop rare-code memorization. Biases are never decayed, which is
    // what lets the recurrent drift that visit attention reads survive.
    double weight_decay = 10.0;
    double embedding_weight_decay = 10.0;
    int batch_size = 64;
    int max_epochs = 50;
    int patience = 5;
    double clip_norm = 5.0; // global-norm gradient clip; <= 0 disables
    int vocab_min_count = 1;
    std::uint64_t seed = 0;

    void validate() const; // throws ConfigError
};

struct EpochStats {
    double train_loss = 0.0;
    double valid_loss = 0.0;
};

struct TrainHistory {
    std::vector<EpochStats> epochs;
    int best_epoch = 0;    // 1-based epoch whose params were kept
    double best_valid_loss = 0.0;
    int stopped_epoch = 0; // last epoch that ran
    std::size_t skipped_train = 0; // patients without any active-type code
    std::size_t skipped_valid = 0;
};

// Stop when the validation loss has not improved for `patience` consecutive
// epochs; strictly smaller counts as improvement.
class EarlyStopper {
public:
    explicit EarlyStopper(int patience) : patience_(patience) {}

    // returns true if training should continue past this epoch
    bool observe(int epoch, double valid_loss) {
        if (valid_loss < best_loss_) {
            best_loss_ = valid_loss;
            best_epoch_ = epoch;
            stale_ = 0;
            return true;
        }
        ++stale_;
        return stale_ < patience_;
    }

    bool improved_last() const { return stale_ == 0; }
    int best_epoch() const { return best_epoch_; }
    double best_loss() const { return best_loss_; }

private:
    int patience_;
    double best_loss_ = std::numeric_limits<double>::infinity();
    int best_epoch_ = 0;
    int stale_ = 0;
};

struct TrainedModel {
    IhanParams params;
    VocabSet vocabs;
    TrainConfig config;
    TrainHistory history;
};

// Mini-batch BCE/AdamW training with epoch-level early stopping on the
// validation loss; vocabularies are built from the training set only, and the
// parameters of the best validation epoch are returned. Deterministic given
// config.seed.
TrainedModel train(const TrainConfig& config, const std::vector<PatientRecord>& train_set,
                   const std::vector<PatientRecord>& valid_set);

struct ScoredCohort {
    std::vector<std::string> patient_ids;
    std::vector<double> scores;
    std::vector<int> labels;
    std::size_t skipped = 0; // patients with no active-type code
};

ScoredCohort score_cohort(const IhanParams& params, const VocabSet& vocabs,
                          const std::vector<PatientRecord>& patients);

double evaluate_auc(const TrainedModel& model, const std::vector<PatientRecord>& test_set);

// --- repeated-run experiments ----------------------------------------------

struct RunResult {
    std::uint64_t seed = 0;
    double test_auc = 0.0;
    int best_epoch = 0;
    double wall_seconds = 0.0;
    std::vector<EpochStats> curve;
};

struct ExperimentResult {
    std::string label;
    double mean_auc = 0.0;
    double std_auc = 0.0;
    std::vector<RunResult> runs;

    std::vector<double> aucs() const {
        std::vector<double> v;
        for (const RunResult& r : runs) v.push_back(r.test_auc);
        return v;
    }
};

// n_runs independent split+train+evaluate executions with seeds
// config.seed, config.seed + 1, ... Runs may execute on `jobs` threads; the
// result order is by seed either way.
ExperimentResult run_experiment(const TrainConfig& config,
                                const std::vector<PatientRecord>& cohort, int n_runs,
                                const std::array<double, 3>& split_fractions, bool stratified,
                                int jobs = 1, const std::string& label = "");

// Welch t-test over two experiments' per-run test AUCs.
WelchResult compare_experiments(const ExperimentResult& a, const ExperimentResult& b);

// --- bag-of-codes logistic baseline ----------------------------------------

struct LogisticConfig {
    double learning_rate = 0.05;
    double l2 = 1e-4; // decoupled weight decay on the code weights
    int batch_size = 64;
    int max_epochs = 200;
    int patience = 10;
    std::uint64_t seed = 0;
};

// Logistic regression over per-code occurrence counts of the full history
// (codes namespaced by type), trained with the same tape/optimizer machinery.
struct LogisticModel {
    Vocabulary features; // shared namespaced vocabulary, built from train
    Tensor weights;      // 1 x V
    double bias = 0.0;
};

LogisticModel train_logistic_baseline(const std::vector<PatientRecord>& train_set,
                                      const std::vector<PatientRecord>& valid_set,
                                      const LogisticConfig& config = {});

double logistic_score(const LogisticModel& model, const PatientRecord& patient);

double evaluate_logistic_auc(const LogisticModel& model,
                             const std::vector<PatientRecord>& test_set);

} // namespace ihan
