#pragma once

#include <array>
#include <vector>

#include "ihan/record.hpp"
#include "ihan/train.hpp"

namespace ihan {

// End-to-end training protocol behind the train command: balance 1:ratio,
// split, build vocabularies from the training split only, train, evaluate on
// the held-out test split. All randomness flows from config.seed via named
// sub-streams (balance, split, init, shuffle).
struct PipelineOptions {
    TrainConfig config;
    int balance_ratio = 3;
    std::array<double, 3> split_fractions{0.6, 0.2, 0.2};
    bool stratified = true;
};

struct PipelineResult {
    TrainedModel model;
    double test_auc = 0.0;
    std::size_t balanced_size = 0;
    std::size_t n_train = 0;
    std::size_t n_valid = 0;
    std::size_t n_test = 0;
};

PipelineResult run_train_pipeline(const std::vector<PatientRecord>& cohort,
                                  const PipelineOptions& options);

} // namespace ihan
