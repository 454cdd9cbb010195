#include "ihan/pipeline.hpp"

#include <iostream>

#include "ihan/data.hpp"
#include "ihan/errors.hpp"
#include "ihan/rng.hpp"

namespace ihan {

PipelineResult run_train_pipeline(const std::vector<PatientRecord>& cohort,
                                  const PipelineOptions& options) {
    PipelineOptions opts = options;
    // one active type always reduces to the single-type path
    if (opts.config.active_types.size() == 1 && opts.config.mode != FusionMode::single_type) {
        std::cerr << "note: one active code type, using single_type mode\n";
        opts.config.mode = FusionMode::single_type;
    }
    opts.config.validate();

    Rng root(opts.config.seed);
    std::vector<PatientRecord> balanced =
        balance_cohort(cohort, opts.balance_ratio, root.child("balance").root_seed());
    SplitResult split = split_cohort(balanced, opts.split_fractions,
                                     root.child("split").root_seed(), opts.stratified);

    PipelineResult result;
    result.balanced_size = balanced.size();
    result.n_train = split.train.size();
    result.n_valid = split.valid.size();
    result.n_test = split.test.size();
    result.model = train(opts.config, split.train, split.valid);
    result.test_auc = evaluate_auc(result.model, split.test);
    return result;
}

} // namespace ihan
