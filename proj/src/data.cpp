#include "ihan/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include <json.hpp>
#include <zlib.h>

#include "ihan/errors.hpp"

namespace ihan {

namespace {

bool has_suffix(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::string read_whole_file(const std::string& path) {
    if (has_suffix(path, ".gz")) {
        gzFile f = gzopen(path.c_str(), "rb");
        if (!f) throw IoError("cannot open '" + path + "'");
        std::string out;
        char buf[1 << 16];
        int n;
        while ((n = gzread(f, buf, sizeof buf)) > 0) out.append(buf, static_cast<std::size_t>(n));
        const bool ok = n == 0;
        gzclose(f);
        if (!ok) throw IoError("gzip read failed for '" + path + "'");
        return out;
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_whole_file(const std::string& path, const std::string& content) {
    if (has_suffix(path, ".gz")) {
        gzFile f = gzopen(path.c_str(), "wb");
        if (!f) throw IoError("cannot open '" + path + "' for writing");
        const int n = gzwrite(f, content.data(), static_cast<unsigned>(content.size()));
        gzclose(f);
        if (n != static_cast<int>(content.size())) throw IoError("gzip write failed for '" + path + "'");
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << content;
    if (!out) throw IoError("write failed for '" + path + "'");
}

PatientRecord parse_patient_line(const std::string& line, std::size_t line_no) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
    }
    auto fail = [&](const std::string& msg) {
        return ParseError("line " + std::to_string(line_no) + ": " + msg);
    };
    if (!j.is_object() || !j.contains("patient_id") || !j.contains("label") ||
        !j.contains("encounters")) {
        throw fail("expected object with patient_id, label, encounters");
    }
    PatientRecord p;
    if (!j["patient_id"].is_string()) throw fail("patient_id must be a string");
    p.patient_id = j["patient_id"].get<std::string>();
    if (!j["label"].is_number_integer()) throw fail("label must be 0 or 1");
    p.label = j["label"].get<int>();
    if (p.label != 0 && p.label != 1) throw fail("label must be 0 or 1");
    if (!j["encounters"].is_array()) throw fail("encounters must be an array");

    for (const auto& je : j["encounters"]) {
        if (!je.is_object() || !je.contains("date") || !je.contains("codes")) {
            throw fail("encounter needs date and codes");
        }
        Encounter enc;
        try {
            enc.date = Date::parse(je["date"].get<std::string>());
        } catch (const ParseError& e) {
            throw fail(e.what());
        }
        if (!je["codes"].is_array()) throw fail("codes must be an array");
        for (const auto& jc : je["codes"]) {
            if (!jc.is_object() || !jc.contains("type") || !jc.contains("code")) {
                throw fail("code entry needs type and code");
            }
            auto type = code_type_from_string(jc["type"].get<std::string>());
            if (!type) {
                throw fail("unknown code type '" + jc["type"].get<std::string>() + "'");
            }
            CodedEvent ev;
            ev.type = *type;
            ev.code = jc["code"].get<std::string>();
            if (jc.contains("description") && jc["description"].is_string()) {
                ev.description = jc["description"].get<std::string>();
            }
            enc.codes.push_back(std::move(ev));
        }
        p.encounters.push_back(std::move(enc));
    }

    // events on one date of service form one encounter
    std::stable_sort(p.encounters.begin(), p.encounters.end(),
                     [](const Encounter& a, const Encounter& b) { return a.date < b.date; });
    std::vector<Encounter> merged;
    for (Encounter& e : p.encounters) {
        if (!merged.empty() && merged.back().date == e.date) {
            for (CodedEvent& c : e.codes) merged.back().codes.push_back(std::move(c));
        } else {
            merged.push_back(std::move(e));
        }
    }
    p.encounters = std::move(merged);
    return p;
}

} // namespace

std::vector<PatientRecord> load_cohort(const std::string& path, const LoadOptions& opts) {
    const std::string content = read_whole_file(path);
    std::vector<PatientRecord> cohort;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start < content.size()) {
        std::size_t end = content.find('\n', start);
        if (end == std::string::npos) end = content.size();
        ++line_no;
        std::string line = content.substr(start, end - start);
        start = end + 1;
        if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
        PatientRecord p = parse_patient_line(line, line_no);
        if (opts.apply_min_encounters &&
            static_cast<int>(p.encounters.size()) < opts.min_encounters) {
            continue;
        }
        cohort.push_back(std::move(p));
    }
    if (cohort.empty()) {
        std::cerr << "warning: cohort '" << path << "' is empty\n";
    }
    return cohort;
}

void write_cohort(const std::string& path, const std::vector<PatientRecord>& cohort) {
    std::string out;
    for (const PatientRecord& p : cohort) {
        nlohmann::json encounters = nlohmann::json::array();
        for (const Encounter& e : p.encounters) {
            nlohmann::json codes = nlohmann::json::array();
            for (const CodedEvent& c : e.codes) {
                nlohmann::json jc{{"type", to_string(c.type)}, {"code", c.code}};
                if (!c.description.empty()) jc["description"] = c.description;
                codes.push_back(std::move(jc));
            }
            encounters.push_back(nlohmann::json{{"date", e.date.to_string()}, {"codes", std::move(codes)}});
        }
        nlohmann::json j{{"patient_id", p.patient_id}, {"label", p.label},
                         {"encounters", std::move(encounters)}};
        out += j.dump();
        out += '\n';
    }
    write_whole_file(path, out);
}

std::string fuse_lab_code(const std::string& loinc, const std::string& abnormality) {
    if (loinc.empty()) {
        throw DegenerateInputError("fuse_lab_code: empty lab code");
    }
    if (abnormality.empty()) return loinc;
    return loinc + "_" + abnormality;
}

std::vector<PatientRecord> balance_cohort(const std::vector<PatientRecord>& cohort, int ratio,
                                          std::uint64_t seed) {
    if (ratio < 1) {
        throw ConfigError("balance_cohort: ratio must be >= 1, got " + std::to_string(ratio));
    }
    std::vector<std::size_t> non_cases;
    std::size_t n_cases = 0;
    for (std::size_t i = 0; i < cohort.size(); ++i) {
        if (cohort[i].label == 1) ++n_cases;
        else non_cases.push_back(i);
    }
    const std::size_t want = n_cases * static_cast<std::size_t>(ratio);
    std::vector<bool> keep_non(cohort.size(), false);
    if (non_cases.size() <= want) {
        if (non_cases.size() < want) {
            std::cerr << "warning: balance_cohort wanted " << want << " non-cases but only "
                      << non_cases.size() << " exist; keeping all\n";
        }
        for (std::size_t i : non_cases) keep_non[i] = true;
    } else {
        Rng rng = Rng(seed).child("balance_sample");
        // partial Fisher-Yates: the first `want` slots are the sample
        for (std::size_t k = 0; k < want; ++k) {
            std::size_t j = k + static_cast<std::size_t>(rng.below(non_cases.size() - k));
            std::swap(non_cases[k], non_cases[j]);
            keep_non[non_cases[k]] = true;
        }
    }
    std::vector<PatientRecord> out;
    out.reserve(n_cases + std::min(want, non_cases.size()));
    for (std::size_t i = 0; i < cohort.size(); ++i) {
        if (cohort[i].label == 1 || keep_non[i]) out.push_back(cohort[i]);
    }
    return out;
}

namespace {

void split_indices(std::vector<std::size_t>& idx, const std::array<double, 3>& fractions,
                   Rng& rng, std::vector<std::size_t>* out) {
    rng.shuffle(idx);
    const std::size_t n = idx.size();
    const std::size_t n_train = static_cast<std::size_t>(std::floor(fractions[0] * n));
    const std::size_t n_valid = static_cast<std::size_t>(std::floor(fractions[1] * n));
    for (std::size_t i = 0; i < n; ++i) {
        const int bucket = i < n_train ? 0 : (i < n_train + n_valid ? 1 : 2);
        out[bucket].push_back(idx[i]);
    }
}

} // namespace

SplitResult split_cohort(const std::vector<PatientRecord>& cohort,
                         const std::array<double, 3>& fractions, std::uint64_t seed,
                         bool stratified) {
    double sum = 0.0;
    for (double f : fractions) {
        if (f <= 0.0) {
            throw ConfigError("split_cohort: fractions must be positive");
        }
        sum += f;
    }
    if (std::fabs(sum - 1.0) > 1e-9) {
        throw ConfigError("split_cohort: fractions must sum to 1");
    }
    Rng rng = Rng(seed).child("split_shuffle");
    std::vector<std::size_t> buckets[3];
    if (stratified) {
        std::vector<std::size_t> strata[2];
        for (std::size_t i = 0; i < cohort.size(); ++i) {
            strata[cohort[i].label == 1 ? 1 : 0].push_back(i);
        }
        for (auto& stratum : strata) split_indices(stratum, fractions, rng, buckets);
    } else {
        std::vector<std::size_t> idx(cohort.size());
        std::iota(idx.begin(), idx.end(), 0);
        split_indices(idx, fractions, rng, buckets);
    }
    SplitResult result;
    std::vector<PatientRecord>* outs[3] = {&result.train, &result.valid, &result.test};
    for (int b = 0; b < 3; ++b) {
        std::sort(buckets[b].begin(), buckets[b].end());
        outs[b]->reserve(buckets[b].size());
        for (std::size_t i : buckets[b]) outs[b]->push_back(cohort[i]);
    }
    return result;
}

// --- synthetic cohort -------------------------------------------------------

void SyntheticSpec::validate() const {
    if (n_patients < 1) throw ConfigError("synthetic spec: n_patients must be positive");
    if (vocab_size_per_type < 1 || risk_codes_per_type < 0 ||
        risk_codes_per_type > vocab_size_per_type) {
        throw ConfigError("synthetic spec: need 0 <= risk codes <= vocab size");
    }
    if (!(base_rate > 0.0 && base_rate < 1.0)) {
        throw ConfigError("synthetic spec: base_rate must be in (0,1)");
    }
    if (recency_half_life_days <= 0.0) {
        throw ConfigError("synthetic spec: recency_half_life_days must be positive");
    }
    if (min_encounters < 1 || max_encounters < min_encounters) {
        throw ConfigError("synthetic spec: bad encounter count range");
    }
    if (min_codes_per_encounter < 1 || max_codes_per_encounter < min_codes_per_encounter) {
        throw ConfigError("synthetic spec: bad codes-per-encounter range");
    }
    if (window_days < max_encounters) {
        throw ConfigError("synthetic spec: window too short for encounter count");
    }
    if (last_encounter_max_age_days < 0 || encounter_gap_min_days < 1 ||
        encounter_gap_max_days < encounter_gap_min_days) {
        throw ConfigError("synthetic spec: bad encounter spacing");
    }
    if (last_encounter_max_age_days + (min_encounters - 1) * encounter_gap_max_days >=
        window_days) {
        throw ConfigError("synthetic spec: window too short for min_encounters at max gap");
    }
    if (planted_risk_occurrences < 0) {
        throw ConfigError("synthetic spec: planted_risk_occurrences must be >= 0");
    }
    if (high_affinity_fraction < 0.0 || high_affinity_fraction > 1.0 ||
        risk_code_prob_high < 0.0 || risk_code_prob_high > 1.0 || risk_code_prob_low < 0.0 ||
        risk_code_prob_low > 1.0) {
        throw ConfigError("synthetic spec: probabilities must be in [0,1]");
    }
    Date::parse(window_start);
}

SyntheticSpec SyntheticSpec::from_json_file(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_whole_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("synthetic spec '" + path + "': " + e.what());
    }
    SyntheticSpec s;
    auto get = [&j](const char* key, auto& field) {
        if (j.contains(key)) field = j[key].get<std::decay_t<decltype(field)>>();
    };
    get("n_patients", s.n_patients);
    get("vocab_size_per_type", s.vocab_size_per_type);
    get("risk_codes_per_type", s.risk_codes_per_type);
    get("base_rate", s.base_rate);
    get("risk_weight", s.risk_weight);
    get("recency_half_life_days", s.recency_half_life_days);
    get("min_encounters", s.min_encounters);
    get("max_encounters", s.max_encounters);
    get("min_codes_per_encounter", s.min_codes_per_encounter);
    get("max_codes_per_encounter", s.max_codes_per_encounter);
    get("last_encounter_max_age_days", s.last_encounter_max_age_days);
    get("encounter_gap_min_days", s.encounter_gap_min_days);
    get("encounter_gap_max_days", s.encounter_gap_max_days);
    get("high_affinity_fraction", s.high_affinity_fraction);
    get("planted_risk_occurrences", s.planted_risk_occurrences);
    get("risk_code_prob_high", s.risk_code_prob_high);
    get("risk_code_prob_low", s.risk_code_prob_low);
    get("window_days", s.window_days);
    get("window_start", s.window_start);
    get("seed", s.seed);
    s.validate();
    return s;
}

std::string SyntheticSpec::to_json() const {
    nlohmann::json j{{"n_patients", n_patients},
                     {"vocab_size_per_type", vocab_size_per_type},
                     {"risk_codes_per_type", risk_codes_per_type},
                     {"base_rate", base_rate},
                     {"risk_weight", risk_weight},
                     {"recency_half_life_days", recency_half_life_days},
                     {"min_encounters", min_encounters},
                     {"max_encounters", max_encounters},
                     {"min_codes_per_encounter", min_codes_per_encounter},
                     {"max_codes_per_encounter", max_codes_per_encounter},
                     {"last_encounter_max_age_days", last_encounter_max_age_days},
                     {"encounter_gap_min_days", encounter_gap_min_days},
                     {"encounter_gap_max_days", encounter_gap_max_days},
                     {"high_affinity_fraction", high_affinity_fraction},
                     {"planted_risk_occurrences", planted_risk_occurrences},
                     {"risk_code_prob_high", risk_code_prob_high},
                     {"risk_code_prob_low", risk_code_prob_low},
                     {"window_days", window_days},
                     {"window_start", window_start},
                     {"seed", seed}};
    return j.dump(2);
}

namespace {

std::string synthetic_code_name(CodeType t, int index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s_%04d", to_string(t), index);
    return buf;
}

double sigmoid(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

} // namespace

namespace {

double recency_decay_sum(const PatientRecord& patient, const GroundTruth& truth, Date window_end) {
    double decay_sum = 0.0;
    for (const Encounter& e : patient.encounters) {
        const double age_days = static_cast<double>(window_end.days - e.date.days);
        for (const CodedEvent& c : e.codes) {
            auto it = truth.risk_codes.find(c.type);
            if (it == truth.risk_codes.end() || !it->second.count(c.code)) continue;
            decay_sum += std::pow(2.0, -age_days / truth.recency_half_life_days);
        }
    }
    return decay_sum;
}

} // namespace

double synthetic_label_prob(const PatientRecord& patient, const GroundTruth& truth,
                            Date window_end) {
    return sigmoid(truth.beta0 + truth.risk_weight * recency_decay_sum(patient, truth, window_end));
}

SyntheticCohort generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    Rng root(spec.seed);
    Rng risk_rng = root.child("risk_codes");
    Rng structure_rng = root.child("structure");
    Rng label_rng = root.child("labels");

    SyntheticCohort out;
    out.truth.risk_weight = spec.risk_weight;
    out.truth.recency_half_life_days = spec.recency_half_life_days;

    // plant the risk codes and keep per-type lists for sampling
    std::map<CodeType, std::vector<std::string>> risk_list, safe_list;
    for (CodeType t : kAllCodeTypes) {
        std::vector<int> ids(spec.vocab_size_per_type);
        std::iota(ids.begin(), ids.end(), 0);
        risk_rng.shuffle(ids);
        for (int k = 0; k < spec.vocab_size_per_type; ++k) {
            const std::string name = synthetic_code_name(t, ids[k]);
            if (k < spec.risk_codes_per_type) {
                risk_list[t].push_back(name);
                out.truth.risk_codes[t].insert(name);
            } else {
                safe_list[t].push_back(name);
            }
        }
    }

    const Date start = Date::parse(spec.window_start);
    const Date window_end = start.plus_days(spec.window_days - 1);

    out.patients.reserve(spec.n_patients);
    for (int i = 0; i < spec.n_patients; ++i) {
        PatientRecord p;
        char id[16];
        std::snprintf(id, sizeof id, "p%06d", i);
        p.patient_id = id;

        const bool high = structure_rng.bernoulli(spec.high_affinity_fraction);
        const double risk_prob = high ? spec.risk_code_prob_high : spec.risk_code_prob_low;

        const int n_enc = structure_rng.uniform_int(spec.min_encounters, spec.max_encounters);
        std::vector<int> days_desc;
        int next_day = spec.window_days - 1 -
                       structure_rng.uniform_int(0, spec.last_encounter_max_age_days);
        while (static_cast<int>(days_desc.size()) < n_enc && next_day >= 0) {
            days_desc.push_back(next_day);
            next_day -= structure_rng.uniform_int(spec.encounter_gap_min_days,
                                                  spec.encounter_gap_max_days);
        }
        std::vector<int> days(days_desc.rbegin(), days_desc.rend());
        for (int day : days) {
            Encounter enc;
            enc.date = start.plus_days(day);
            const int n_codes = structure_rng.uniform_int(spec.min_codes_per_encounter,
                                                          spec.max_codes_per_encounter);
            for (int c = 0; c < n_codes; ++c) {
                const CodeType t = kAllCodeTypes[structure_rng.uniform_int(0, 3)];
                const bool pick_risk = !risk_list[t].empty() && structure_rng.bernoulli(risk_prob);
                const auto& pool = pick_risk ? risk_list[t] : safe_list[t];
                const std::string& code = pool[structure_rng.below(pool.size())];
                enc.codes.push_back(CodedEvent{t, code, ""});
            }
            p.encounters.push_back(std::move(enc));
        }

        // carriers get a fixed number of planted risk slots at random positions
        if (high && spec.risk_codes_per_type > 0) {
            std::vector<std::pair<int, int>> slots;
            for (std::size_t j = 0; j < p.encounters.size(); ++j) {
                for (std::size_t k = 0; k < p.encounters[j].codes.size(); ++k) {
                    slots.emplace_back(static_cast<int>(j), static_cast<int>(k));
                }
            }
            structure_rng.shuffle(slots);
            const int n_plant =
                std::min<int>(spec.planted_risk_occurrences, static_cast<int>(slots.size()));
            for (int s = 0; s < n_plant; ++s) {
                const CodeType t = kAllCodeTypes[structure_rng.uniform_int(0, 3)];
                const auto& pool = risk_list[t];
                p.encounters[slots[s].first].codes[slots[s].second] =
                    CodedEvent{t, pool[structure_rng.below(pool.size())], ""};
            }
        }
        out.patients.push_back(std::move(p));
    }

    // calibrate beta0 by bisection so the marginal positive rate hits base_rate
    std::vector<double> weighted_sums(out.patients.size());
    for (std::size_t i = 0; i < out.patients.size(); ++i) {
        weighted_sums[i] = spec.risk_weight * recency_decay_sum(out.patients[i], out.truth, window_end);
    }
    double lo = -30.0, hi = 30.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        double rate = 0.0;
        for (double s : weighted_sums) rate += sigmoid(mid + s);
        rate /= static_cast<double>(weighted_sums.size());
        (rate < spec.base_rate ? lo : hi) = mid;
    }
    out.truth.beta0 = 0.5 * (lo + hi);

    out.truth.label_probs.resize(out.patients.size());
    for (std::size_t i = 0; i < out.patients.size(); ++i) {
        const double prob = synthetic_label_prob(out.patients[i], out.truth, window_end);
        out.truth.label_probs[i] = prob;
        out.patients[i].label = label_rng.bernoulli(prob) ? 1 : 0;
    }
    return out;
}

std::string ground_truth_to_json(const GroundTruth& truth) {
    nlohmann::json risk = nlohmann::json::object();
    for (const auto& [type, codes] : truth.risk_codes) {
        risk[to_string(type)] = std::vector<std::string>(codes.begin(), codes.end());
    }
    nlohmann::json j{{"risk_codes", std::move(risk)},
                     {"beta0", truth.beta0},
                     {"risk_weight", truth.risk_weight},
                     {"recency_half_life_days", truth.recency_half_life_days},
                     {"label_probs", truth.label_probs}};
    return j.dump(2);
}

} // namespace ihan
