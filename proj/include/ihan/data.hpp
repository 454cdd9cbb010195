#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "ihan/record.hpp"
#include "ihan/rng.hpp"

namespace ihan {

struct LoadOptions {
    // mirror of the population filter: keep only patients with at least
    // min_encounters encounters (after same-date merging)
    bool apply_min_encounters = true;
    int min_encounters = 2;
};

// Read a JSONL cohort ({"patient_id", "label", "encounters": [...]} per line;
// ".jsonl.gz" accepted). Encounters are merged by date of service and sorted
// ascending. Malformed lines raise ParseError with the line number.
std::vector<PatientRecord> load_cohort(const std::string& path, const LoadOptions& opts = {});

void write_cohort(const std::string& path, const std::vector<PatientRecord>& cohort);

// "88294-4" + "L" -> "88294-4_L"; an empty abnormality leaves the code alone.
std::string fuse_lab_code(const std::string& loinc, const std::string& abnormality);

// Keep every case (label 1) and sample exactly ratio * n_cases non-cases
// without replacement. If there are not enough non-cases, keeps all of them
// and warns on stderr.
std::vector<PatientRecord> balance_cohort(const std::vector<PatientRecord>& cohort, int ratio,
                                          std::uint64_t seed);

struct SplitResult {
    std::vector<PatientRecord> train;
    std::vector<PatientRecord> valid;
    std::vector<PatientRecord> test;
};

// Disjoint, exhaustive, seeded split. Stratified keeps the label ratio within
// one patient per stratum.
SplitResult split_cohort(const std::vector<PatientRecord>& cohort,
                         const std::array<double, 3>& fractions, std::uint64_t seed,
                         bool stratified);

// Synthetic cohort with planted recency-weighted risk codes. A patient's
// label probability is
//   sigmoid(beta0 + risk_weight * sum over risk-code occurrences of
//           2^(-age_days / recency_half_life_days))
// with beta0 calibrated so the marginal positive rate is ~ base_rate. A
// fraction of patients carries risk codes at an elevated rate, which is what
// makes the planted codes recoverable from contributions.
struct SyntheticSpec {
    int n_patients = 2000;
    int vocab_size_per_type = 500;
    int risk_codes_per_type = 8;
    double base_rate = 0.25;
    double risk_weight = 12.0;
    double recency_half_life_days = 90.0;
    int min_encounters = 4;
    int max_encounters = 16;
    int min_codes_per_encounter = 1;
    int max_codes_per_encounter = 5;
    // encounters are laid out backward from the window end at jittered
    // quasi-regular gaps, the usual visit cadence; clipped at the window start
    int last_encounter_max_age_days = 60;
    int encounter_gap_min_days = 45;
    int encounter_gap_max_days = 120;
    // a carrier fraction of patients receives exactly planted_risk_occurrences
    // risk-code slots at random encounters; on top of that, risk codes appear
    // as background draws at the per-affinity rates below. Keeping the planted
    // count fixed makes the carriers' labels a question of *when* the risk
    // codes occurred, which bag-of-codes counts cannot see.
    double high_affinity_fraction = 0.5;
    int planted_risk_occurrences = 5;
    double risk_code_prob_high = 0.02;
    double risk_code_prob_low = 0.02;
    int window_days = 1095; // three years
    std::string window_start = "2017-01-01";
    std::uint64_t seed = 42;

    static SyntheticSpec from_json_file(const std::string& path);
    std::string to_json() const;
    void validate() const; // throws ConfigError
};

struct GroundTruth {
    std::map<CodeType, std::set<std::string>> risk_codes;
    double beta0 = 0.0;
    double risk_weight = 0.0;
    double recency_half_life_days = 0.0;
    // probability actually used to draw each patient's label, by cohort index
    std::vector<double> label_probs;
};

struct SyntheticCohort {
    std::vector<PatientRecord> patients;
    GroundTruth truth;
};

SyntheticCohort generate_synthetic(const SyntheticSpec& spec);

// The generator's probability formula, recomputable from any record: walks
// encounters and codes in order and matches the generator's own value exactly.
double synthetic_label_prob(const PatientRecord& patient, const GroundTruth& truth,
                            Date window_end);

std::string ground_truth_to_json(const GroundTruth& truth);

} // namespace ihan
