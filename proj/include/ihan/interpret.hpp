#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "ihan/model.hpp"
#include "ihan/record.hpp"

namespace ihan {

// One code occurrence's exact additive share of the prediction logit.
struct ContributionEntry {
    Date date;
    CodeType type;
    std::string code;
    std::string description;
    double contribution = 0.0; // w = a^(t) * a^(v) * a^(c) * (head_w . embedding)
};

// Per-patient decomposition satisfying
//   sigmoid(sum of contributions + bias) == prediction
// up to float tolerance.
struct ContributionReport {
    std::string patient_id;
    double prediction = 0.0;
    double logit = 0.0;
    double bias = 0.0;
    std::vector<ContributionEntry> entries;
};

// Decompose a forward pass into per-(type, encounter, code) coefficients.
// The trace must come from forward() on the same params and patient; counts
// that disagree raise ConsistencyError.
ContributionReport contributions(const IhanParams& params, const PatientRecord& patient,
                                 const AttentionTrace& trace);

// Cumulative contribution of each (type, code) across a patient's encounters.
struct PatientCodeRow {
    CodeType type;
    std::string code;
    std::string description;
    double contribution = 0.0;
};
std::vector<PatientCodeRow> aggregate_patient_code(const ContributionReport& report);

// Mean per-patient cumulative contribution of each (type, code) across a
// cohort; rows seen in fewer than min_patients patients are dropped, rest
// sorted by mean descending (ties: more patients first, then code).
struct CodeLevelRow {
    CodeType type;
    std::string code;
    std::string description;
    int n_patients = 0;
    double mean_contribution = 0.0;
};
std::vector<CodeLevelRow> aggregate_code_level(const std::vector<ContributionReport>& reports,
                                               int min_patients = 50);

// CSV emitters. Unless include_all is set, rows with |contribution| <= 0.01
// are hidden (full data is always retained in the structs).
void write_report_csv(std::ostream& os, const ContributionReport& report, bool include_all = false);
void write_patient_code_csv(std::ostream& os, const std::vector<PatientCodeRow>& rows,
                            bool include_all = false);
void write_code_level_csv(std::ostream& os, const std::vector<CodeLevelRow>& rows,
                          bool include_all = false);

std::string report_to_json(const ContributionReport& report, bool include_all = false);
std::string patient_code_to_json(const std::vector<PatientCodeRow>& rows, bool include_all = false);
std::string code_level_to_json(const std::vector<CodeLevelRow>& rows, bool include_all = false);

} // namespace ihan
