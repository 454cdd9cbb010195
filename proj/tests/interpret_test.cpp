#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <sstream>

#include "ihan/errors.hpp"
#include "ihan/interpret.hpp"
#include "ihan/model.hpp"
#include "ihan/rng.hpp"

using namespace ihan;

namespace {

CodedEvent ev(CodeType t, const char* code, const char* desc = "") {
    return CodedEvent{t, code, desc};
}

std::vector<PatientRecord> seed_corpus(const std::vector<CodeType>& types, int pool_size) {
    PatientRecord p;
    p.patient_id = "corpus";
    int day = 0;
    for (CodeType t : types) {
        for (int i = 0; i < pool_size; ++i) {
            Encounter e;
            e.date = Date::parse("2017-01-01").plus_days(day++);
            e.codes.push_back(ev(t, (std::string(to_string(t)) + std::to_string(i)).c_str()));
            p.encounters.push_back(std::move(e));
        }
    }
    return {p};
}

PatientRecord random_patient(Rng& rng, const std::vector<CodeType>& types, int pool_size) {
    PatientRecord p;
    p.patient_id = "r" + std::to_string(rng.below(1u << 30));
    const int n_enc = rng.uniform_int(1, 5);
    int day = rng.uniform_int(0, 30);
    for (int j = 0; j < n_enc; ++j) {
        Encounter e;
        e.date = Date::parse("2018-01-01").plus_days(day);
        day += rng.uniform_int(1, 30);
        const int n_codes = rng.uniform_int(1, 4);
        for (int k = 0; k < n_codes; ++k) {
            CodeType t = types[rng.below(types.size())];
            e.codes.push_back(
                ev(t, (std::string(to_string(t)) + std::to_string(rng.uniform_int(0, pool_size - 1))).c_str()));
        }
        p.encounters.push_back(std::move(e));
    }
    return p;
}

double logit_of(double y) { return std::log(y / (1.0 - y)); }

} // namespace

TEST_CASE("single encounter, single code collapses to w = head.embedding") {
    auto corpus = seed_corpus({CodeType::lab}, 3);
    VocabSet vocabs = VocabSet::build(FusionMode::single_type, {CodeType::lab}, corpus, 1);
    Rng rng(1);
    IhanParams params = IhanParams::init(FusionMode::single_type, {CodeType::lab}, 4, 3, vocabs, rng);

    PatientRecord p;
    p.patient_id = "one";
    Encounter e;
    e.date = Date::parse("2019-01-01");
    e.codes.push_back(ev(CodeType::lab, "lab1"));
    p.encounters.push_back(e);

    ForwardOutput out = forward(params, vocabs, p);
    ContributionReport report = contributions(params, p, out.trace);
    REQUIRE(report.entries.size() == 1);

    const int idx = vocabs.vocabs[0].lookup("lab1");
    double expected = 0.0;
    for (int i = 0; i < 4; ++i) expected += params.head_w(0, i) * params.encoders[0].emb.weights(i, idx);
    CHECK(report.entries[0].contribution == doctest::Approx(expected).epsilon(1e-12));
    const double z = report.entries[0].contribution + report.bias;
    CHECK(1.0 / (1.0 + std::exp(-z)) == doctest::Approx(out.y_hat).epsilon(1e-12));
}

TEST_CASE("the decomposition identity holds across modes on random toys") {
    const std::vector<CodeType> types{CodeType::diag, CodeType::proc, CodeType::lab, CodeType::rx};
    auto corpus = seed_corpus(types, 5);
    Rng rng(7);
    for (FusionMode mode : {FusionMode::single_type, FusionMode::algorithm_comb, FusionMode::data_comb}) {
        const std::vector<CodeType> active =
            mode == FusionMode::single_type ? std::vector<CodeType>{CodeType::diag} : types;
        VocabSet vocabs = VocabSet::build(mode, active, corpus, 1);
        Rng init(11 + static_cast<int>(mode));
        IhanParams params = IhanParams::init(mode, active, 4, 3, vocabs, init);
        for (int rep = 0; rep < 60; ++rep) {
            PatientRecord p = random_patient(rng, active, 5);
            ForwardOutput out = forward(params, vocabs, p);
            ContributionReport report = contributions(params, p, out.trace);
            double sum = report.bias;
            for (const ContributionEntry& e : report.entries) sum += e.contribution;
            CHECK(std::fabs(out.logit - sum) < 1e-10);
            CHECK(std::fabs(logit_of(out.y_hat) - sum) < 1e-8);
        }
    }
}

TEST_CASE("contribution scales linearly with its code attention, other factors fixed") {
    auto corpus = seed_corpus({CodeType::diag}, 4);
    VocabSet vocabs = VocabSet::build(FusionMode::single_type, {CodeType::diag}, corpus, 1);
    Rng rng(13);
    IhanParams params = IhanParams::init(FusionMode::single_type, {CodeType::diag}, 4, 3, vocabs, rng);
    PatientRecord p = random_patient(rng, {CodeType::diag}, 4);
    ForwardOutput out = forward(params, vocabs, p);
    ContributionReport base = contributions(params, p, out.trace);

    AttentionTrace doubled = out.trace;
    doubled.types[0].encounters[0].codes[0].attn *= 2.0;
    ContributionReport scaled = contributions(params, p, doubled);
    CHECK(scaled.entries[0].contribution == doctest::Approx(2.0 * base.entries[0].contribution).epsilon(1e-12));
    for (std::size_t i = 1; i < base.entries.size(); ++i) {
        CHECK(scaled.entries[i].contribution == base.entries[i].contribution);
    }
}

TEST_CASE("contributions rejects a trace from a different patient") {
    auto corpus = seed_corpus({CodeType::diag}, 4);
    VocabSet vocabs = VocabSet::build(FusionMode::single_type, {CodeType::diag}, corpus, 1);
    Rng rng(17);
    IhanParams params = IhanParams::init(FusionMode::single_type, {CodeType::diag}, 4, 3, vocabs, rng);
    PatientRecord p = random_patient(rng, {CodeType::diag}, 4);
    while (p.encounters.size() < 2) p = random_patient(rng, {CodeType::diag}, 4);
    ForwardOutput out = forward(params, vocabs, p);
    PatientRecord truncated = p;
    truncated.encounters.pop_back();
    CHECK_THROWS_AS(contributions(params, truncated, out.trace), ConsistencyError);
}

TEST_CASE("patient-code aggregation sums duplicate codes") {
    ContributionReport report;
    report.patient_id = "a";
    report.entries = {
        {Date::parse("2019-01-01"), CodeType::lab, "2160-0_H", "", 0.1},
        {Date::parse("2019-02-01"), CodeType::lab, "2160-0_H", "", 0.2},
    };
    auto rows = aggregate_patient_code(report);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].contribution == doctest::Approx(0.3).epsilon(1e-15));
}

TEST_CASE("repeated abnormal-lab contributions accumulate like the worked example") {
    // four dated entries for the same high-creatinine lab code
    ContributionReport report;
    report.patient_id = "patient-a";
    report.entries = {
        {Date::parse("2019-02-18"), CodeType::lab, "2160-0_H", "High creatinine in blood", 0.070},
        {Date::parse("2019-06-10"), CodeType::lab, "2160-0_H", "High creatinine in blood", 0.099},
        {Date::parse("2019-09-15"), CodeType::lab, "2160-0_H", "High creatinine in blood", 0.159},
        {Date::parse("2019-12-29"), CodeType::lab, "2160-0_H", "High creatinine in blood", 0.330},
        {Date::parse("2019-03-19"), CodeType::rx, "AMLOD", "Amlodipine drug", -0.082},
        {Date::parse("2019-07-21"), CodeType::rx, "AMLOD", "Amlodipine drug", -0.064},
    };
    auto rows = aggregate_patient_code(report);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].type == CodeType::lab);
    CHECK(rows[0].contribution == doctest::Approx(0.658).epsilon(1e-12));
    CHECK(rows[1].type == CodeType::rx);
    CHECK(rows[1].contribution == doctest::Approx(-0.146).epsilon(1e-12));
}

TEST_CASE("aggregating an empty report yields an empty list") {
    ContributionReport report;
    CHECK(aggregate_patient_code(report).empty());
    CHECK(aggregate_code_level({report}, 1).empty());
}

TEST_CASE("aggregation conserves the total contribution mass") {
    auto corpus = seed_corpus({CodeType::diag, CodeType::lab}, 5);
    VocabSet vocabs =
        VocabSet::build(FusionMode::data_comb, {CodeType::diag, CodeType::lab}, corpus, 1);
    Rng rng(23);
    IhanParams params =
        IhanParams::init(FusionMode::data_comb, {CodeType::diag, CodeType::lab}, 4, 3, vocabs, rng);
    for (int rep = 0; rep < 20; ++rep) {
        PatientRecord p = random_patient(rng, {CodeType::diag, CodeType::lab}, 5);
        ForwardOutput out = forward(params, vocabs, p);
        ContributionReport report = contributions(params, p, out.trace);
        double raw = 0.0;
        for (const ContributionEntry& e : report.entries) raw += e.contribution;
        double grouped = 0.0;
        for (const PatientCodeRow& r : aggregate_patient_code(report)) grouped += r.contribution;
        CHECK(std::fabs(raw - grouped) < 1e-12);
    }
}

TEST_CASE("code-level aggregation averages per-patient cumulative contributions") {
    ContributionReport a;
    a.patient_id = "a";
    a.entries = {{Date::parse("2019-01-01"), CodeType::diag, "N18.2", "", 0.2}};
    ContributionReport b;
    b.patient_id = "b";
    b.entries = {{Date::parse("2019-03-01"), CodeType::diag, "N18.2", "", 0.3},
                 {Date::parse("2019-05-01"), CodeType::diag, "N18.2", "", 0.1}};
    auto rows = aggregate_code_level({a, b}, 1);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].n_patients == 2);
    CHECK(rows[0].mean_contribution == doctest::Approx(0.3).epsilon(1e-12)); // (0.2 + 0.4)/2
}

TEST_CASE("code-level rows below min_patients are dropped and sorting is stable") {
    std::vector<ContributionReport> reports;
    for (int i = 0; i < 3; ++i) {
        ContributionReport r;
        r.patient_id = "p" + std::to_string(i);
        r.entries = {{Date::parse("2019-01-01"), CodeType::diag, "common", "", 0.5}};
        if (i == 0) {
            r.entries.push_back({Date::parse("2019-01-02"), CodeType::diag, "rare", "", 9.0});
        }
        // same mean as `common`, fewer patients -> ranks later on the tie
        if (i < 2) {
            r.entries.push_back({Date::parse("2019-01-03"), CodeType::rx, "tie", "", 0.5});
        }
        reports.push_back(std::move(r));
    }
    auto rows = aggregate_code_level(reports, 2);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].code == "common");
    CHECK(rows[0].n_patients == 3);
    CHECK(rows[1].code == "tie");
    CHECK(rows[1].n_patients == 2);
}

TEST_CASE("csv emitters use the pinned columns and the 0.01 display floor") {
    ContributionReport report;
    report.patient_id = "a";
    report.prediction = 0.4;
    report.bias = -0.1;
    report.entries = {
        {Date::parse("2019-02-18"), CodeType::lab, "2160-0_H", "High, \"creatinine\"", 0.07},
        {Date::parse("2019-02-18"), CodeType::diag, "Z00.0", "", 0.002},
    };
    std::ostringstream os;
    write_report_csv(os, report);
    const std::string csv = os.str();
    CHECK(csv.find("patient_id,date,code_type,code,description,contribution") == 0);
    CHECK(csv.find("2160-0_H") != std::string::npos);
    CHECK(csv.find("Z00.0") == std::string::npos); // filtered at 0.01
    CHECK(csv.find("\"High, \"\"creatinine\"\"\"") != std::string::npos);

    std::ostringstream os_all;
    write_report_csv(os_all, report, true);
    CHECK(os_all.str().find("Z00.0") != std::string::npos);

    std::ostringstream os_pc;
    write_patient_code_csv(os_pc, aggregate_patient_code(report), true);
    CHECK(os_pc.str().find("code_type,code,contribution") == 0);

    std::ostringstream os_cl;
    write_code_level_csv(os_cl, aggregate_code_level({report}, 1), true);
    CHECK(os_cl.str().find("code_type,code,n_patients,mean_contribution") == 0);
}

TEST_CASE("encounter csv rows come out by date, then by |contribution| descending") {
    ContributionReport report;
    report.patient_id = "a";
    report.entries = {
        {Date::parse("2019-06-10"), CodeType::lab, "late-small", "", 0.05},
        {Date::parse("2019-02-18"), CodeType::lab, "early-small", "", -0.06},
        {Date::parse("2019-06-10"), CodeType::rx, "late-big", "", -0.40},
        {Date::parse("2019-02-18"), CodeType::diag, "early-big", "", 0.30},
    };
    std::ostringstream os;
    write_report_csv(os, report, true);
    const std::string csv = os.str();
    const auto pos = [&csv](const char* code) { return csv.find(code); };
    CHECK(pos("early-big") < pos("early-small"));
    CHECK(pos("early-small") < pos("late-big"));
    CHECK(pos("late-big") < pos("late-small"));
}

TEST_CASE("json emitters carry the same fields and respect the display floor") {
    ContributionReport report;
    report.patient_id = "a";
    report.prediction = 0.4;
    report.bias = -0.1;
    report.entries = {
        {Date::parse("2019-02-18"), CodeType::lab, "2160-0_H", "High creatinine in blood", 0.07},
        {Date::parse("2019-02-18"), CodeType::diag, "Z00.0", "", 0.002},
    };
    const std::string filtered = report_to_json(report);
    CHECK(filtered.find("2160-0_H") != std::string::npos);
    CHECK(filtered.find("Z00.0") == std::string::npos);
    CHECK(filtered.find("\"prediction\"") != std::string::npos);
    const std::string full = report_to_json(report, true);
    CHECK(full.find("Z00.0") != std::string::npos);

    const std::string pc = patient_code_to_json(aggregate_patient_code(report), true);
    CHECK(pc.find("\"code_type\"") != std::string::npos);
    CHECK(pc.find("\"contribution\"") != std::string::npos);
    const std::string cl = code_level_to_json(aggregate_code_level({report}, 1), true);
    CHECK(cl.find("\"n_patients\"") != std::string::npos);
    CHECK(cl.find("\"mean_contribution\"") != std::string::npos);
}
