#include "ihan/interpret.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <set>

#include <json.hpp>

#include "ihan/errors.hpp"

namespace ihan {

ContributionReport contributions(const IhanParams& params, const PatientRecord& patient,
                                 const AttentionTrace& trace) {
    if (trace.mode != params.mode) {
        throw ConsistencyError("contributions: trace mode " + std::string(to_string(trace.mode)) +
                               " vs params mode " + to_string(params.mode));
    }
    ContributionReport report;
    report.patient_id = patient.patient_id;
    report.prediction = trace.y_hat;
    report.logit = trace.logit;
    report.bias = params.head_b(0, 0);

    std::size_t traced_codes = 0;
    for (const TypeTrace& tt : trace.types) {
        for (const EncounterTrace& et : tt.encounters) {
            if (et.encounter_index < 0 ||
                et.encounter_index >= static_cast<int>(patient.encounters.size())) {
                throw ConsistencyError("contributions: encounter index " +
                                       std::to_string(et.encounter_index) + " outside patient " +
                                       patient.patient_id);
            }
            const Encounter& enc = patient.encounters[et.encounter_index];
            for (const CodeTraceEntry& ct : et.codes) {
                if (ct.code_index < 0 || ct.code_index >= static_cast<int>(enc.codes.size())) {
                    throw ConsistencyError("contributions: code index " +
                                           std::to_string(ct.code_index) +
                                           " outside encounter on " + enc.date.to_string());
                }
                const CodedEvent& ev = enc.codes[ct.code_index];
                if (tt.type && ev.type != *tt.type) {
                    throw ConsistencyError("contributions: trace expects type " +
                                           std::string(to_string(*tt.type)) + " but code '" +
                                           ev.code + "' is " + to_string(ev.type));
                }
                ++traced_codes;
                report.entries.push_back(ContributionEntry{
                    enc.date, ev.type, ev.code, ev.description,
                    tt.type_attn * et.visit_attn * ct.attn * ct.head_dot_emb});
            }
        }
    }

    std::size_t active_codes = 0;
    for (const Encounter& enc : patient.encounters) {
        for (const CodedEvent& ev : enc.codes) {
            if (std::find(params.active_types.begin(), params.active_types.end(), ev.type) !=
                params.active_types.end()) {
                ++active_codes;
            }
        }
    }
    if (traced_codes != active_codes) {
        throw ConsistencyError("contributions: trace covers " + std::to_string(traced_codes) +
                               " codes but patient " + patient.patient_id + " has " +
                               std::to_string(active_codes) + " active-type codes");
    }
    return report;
}

std::vector<PatientCodeRow> aggregate_patient_code(const ContributionReport& report) {
    std::map<std::pair<CodeType, std::string>, PatientCodeRow> groups;
    for (const ContributionEntry& e : report.entries) {
        auto key = std::make_pair(e.type, e.code);
        auto it = groups.find(key);
        if (it == groups.end()) {
            groups.emplace(key, PatientCodeRow{e.type, e.code, e.description, e.contribution});
        } else {
            it->second.contribution += e.contribution;
            if (it->second.description.empty()) it->second.description = e.description;
        }
    }
    std::vector<PatientCodeRow> rows;
    rows.reserve(groups.size());
    for (auto& [key, row] : groups) rows.push_back(std::move(row));
    return rows;
}

std::vector<CodeLevelRow> aggregate_code_level(const std::vector<ContributionReport>& reports,
                                               int min_patients) {
    struct Acc {
        std::set<std::string> patients;
        double total = 0.0;
        std::string description;
    };
    std::map<std::pair<CodeType, std::string>, Acc> groups;
    for (const ContributionReport& report : reports) {
        for (const PatientCodeRow& row : aggregate_patient_code(report)) {
            Acc& acc = groups[{row.type, row.code}];
            acc.patients.insert(report.patient_id);
            acc.total += row.contribution;
            if (acc.description.empty()) acc.description = row.description;
        }
    }
    std::vector<CodeLevelRow> rows;
    for (auto& [key, acc] : groups) {
        const int n = static_cast<int>(acc.patients.size());
        if (n < min_patients) continue;
        rows.push_back(CodeLevelRow{key.first, key.second, acc.description, n, acc.total / n});
    }
    std::sort(rows.begin(), rows.end(), [](const CodeLevelRow& a, const CodeLevelRow& b) {
        if (a.mean_contribution != b.mean_contribution) {
            return a.mean_contribution > b.mean_contribution;
        }
        if (a.n_patients != b.n_patients) return a.n_patients > b.n_patients;
        return a.code < b.code;
    });
    return rows;
}

namespace {

constexpr double kDisplayFloor = 0.01;

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

} // namespace

void write_report_csv(std::ostream& os, const ContributionReport& report, bool include_all) {
    std::vector<ContributionEntry> rows = report.entries;
    std::stable_sort(rows.begin(), rows.end(), [](const ContributionEntry& a, const ContributionEntry& b) {
        if (a.date != b.date) return a.date < b.date;
        return std::fabs(a.contribution) > std::fabs(b.contribution);
    });
    os << "patient_id,date,code_type,code,description,contribution\n";
    for (const ContributionEntry& e : rows) {
        if (!include_all && std::fabs(e.contribution) <= kDisplayFloor) continue;
        os << csv_escape(report.patient_id) << ',' << e.date.to_string() << ',' << to_string(e.type)
           << ',' << csv_escape(e.code) << ',' << csv_escape(e.description) << ','
           << fmt(e.contribution) << '\n';
    }
}

void write_patient_code_csv(std::ostream& os, const std::vector<PatientCodeRow>& rows,
                            bool include_all) {
    os << "code_type,code,contribution\n";
    for (const PatientCodeRow& r : rows) {
        if (!include_all && std::fabs(r.contribution) <= kDisplayFloor) continue;
        os << to_string(r.type) << ',' << csv_escape(r.code) << ',' << fmt(r.contribution) << '\n';
    }
}

void write_code_level_csv(std::ostream& os, const std::vector<CodeLevelRow>& rows,
                          bool include_all) {
    os << "code_type,code,n_patients,mean_contribution\n";
    for (const CodeLevelRow& r : rows) {
        if (!include_all && std::fabs(r.mean_contribution) <= kDisplayFloor) continue;
        os << to_string(r.type) << ',' << csv_escape(r.code) << ',' << r.n_patients << ','
           << fmt(r.mean_contribution) << '\n';
    }
}

std::string report_to_json(const ContributionReport& report, bool include_all) {
    nlohmann::json entries = nlohmann::json::array();
    for (const ContributionEntry& e : report.entries) {
        if (!include_all && std::fabs(e.contribution) <= kDisplayFloor) continue;
        nlohmann::json row{{"patient_id", report.patient_id},
                           {"date", e.date.to_string()},
                           {"code_type", to_string(e.type)},
                           {"code", e.code},
                           {"contribution", e.contribution}};
        if (!e.description.empty()) row["description"] = e.description;
        entries.push_back(std::move(row));
    }
    nlohmann::json out{{"patient_id", report.patient_id},
                       {"prediction", report.prediction},
                       {"bias", report.bias},
                       {"entries", std::move(entries)}};
    return out.dump(2);
}

std::string patient_code_to_json(const std::vector<PatientCodeRow>& rows, bool include_all) {
    nlohmann::json out = nlohmann::json::array();
    for (const PatientCodeRow& r : rows) {
        if (!include_all && std::fabs(r.contribution) <= kDisplayFloor) continue;
        out.push_back(nlohmann::json{{"code_type", to_string(r.type)},
                                     {"code", r.code},
                                     {"contribution", r.contribution}});
    }
    return out.dump(2);
}

std::string code_level_to_json(const std::vector<CodeLevelRow>& rows, bool include_all) {
    nlohmann::json out = nlohmann::json::array();
    for (const CodeLevelRow& r : rows) {
        if (!include_all && std::fabs(r.mean_contribution) <= kDisplayFloor) continue;
        out.push_back(nlohmann::json{{"code_type", to_string(r.type)},
                                     {"code", r.code},
                                     {"n_patients", r.n_patients},
                                     {"mean_contribution", r.mean_contribution}});
    }
    return out.dump(2);
}

} // namespace ihan
