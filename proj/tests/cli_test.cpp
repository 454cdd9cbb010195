#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include <map>

#include "ihan/checkpoint.hpp"
#include "ihan/data.hpp"
#include "ihan/model.hpp"

using namespace ihan;

namespace {

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("ihan_cli_test_" + std::to_string(::getpid()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

int run_cli(const std::string& args) {
    const std::string cmd = std::string(IHAN_CLI_PATH) + " " + args + " >/dev/null 2>/dev/null";
    return std::system(cmd.c_str());
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

// split a csv line; good enough for the unquoted outputs checked here
std::vector<std::string> fields(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream in(line);
    std::string f;
    while (std::getline(in, f, ',')) out.push_back(f);
    return out;
}

} // namespace

TEST_CASE("cli pipeline: generate, train, predict, explain, experiment") {
    TempDir tmp;
    const std::string spec = tmp.file("spec.json");
    {
        std::ofstream out(spec);
        out << R"({"n_patients": 260, "vocab_size_per_type": 40, "risk_codes_per_type": 4, "seed": 31})";
    }
    const std::string cohort = tmp.file("cohort.jsonl");
    const std::string truth = tmp.file("truth.json");

    SUBCASE("generate is byte-deterministic in its seed") {
        REQUIRE(run_cli("generate --spec " + spec + " --out " + cohort + " --truth-out " + truth) == 0);
        const std::string bytes = read_file(cohort);
        CHECK(!bytes.empty());
        const std::string cohort2 = tmp.file("cohort2.jsonl");
        REQUIRE(run_cli("generate --spec " + spec + " --out " + cohort2 + " --truth-out " +
                        tmp.file("truth2.json")) == 0);
        CHECK(read_file(cohort2) == bytes);
        const std::string cohort3 = tmp.file("cohort3.jsonl");
        REQUIRE(run_cli("generate --spec " + spec + " --seed 77 --out " + cohort3 +
                        " --truth-out " + tmp.file("truth3.json")) == 0);
        CHECK(read_file(cohort3) != bytes);
    }

    SUBCASE("train, predict and explain work end to end") {
        REQUIRE(run_cli("generate --spec " + spec + " --out " + cohort + " --truth-out " + truth) == 0);
        const std::string ckpt = tmp.file("model.ckpt");
        REQUIRE(run_cli("train --data " + cohort + " --mode data_comb --out " + ckpt +
                        " --emb-dim 8 --hidden-dim 8 --batch 32 --max-epochs 3 --patience 2 "
                        "--seed 5") == 0);

        const std::string scores = tmp.file("scores.csv");
        REQUIRE(run_cli("predict --ckpt " + ckpt + " --data " + cohort + " --out " + scores) == 0);
        auto lines = read_lines(scores);
        REQUIRE(lines.size() > 1);
        CHECK(lines[0] == "patient_id,score");
        for (std::size_t i = 1; i < lines.size(); ++i) {
            const double s = std::stod(fields(lines[i])[1]);
            CHECK(s > 0.0);
            CHECK(s < 1.0);
        }
        // re-running produces the identical file
        const std::string scores2 = tmp.file("scores2.csv");
        REQUIRE(run_cli("predict --ckpt " + ckpt + " --data " + cohort + " --out " + scores2) == 0);
        CHECK(read_file(scores2) == read_file(scores));

        // scores in the csv equal the in-process forward pass exactly
        {
            Checkpoint loaded = load_checkpoint(ckpt);
            auto patients = load_cohort(cohort);
            std::map<std::string, const PatientRecord*> by_id;
            for (const PatientRecord& p : patients) by_id[p.patient_id] = &p;
            for (std::size_t i = 1; i < lines.size(); ++i) {
                auto f = fields(lines[i]);
                const PatientRecord* p = by_id.at(f[0]);
                const double expected = forward(loaded.model.params, loaded.model.vocabs, *p).y_hat;
                CHECK(std::stod(f[1]) == expected);
            }
        }

        // pick a patient from the score file and explain it at both levels
        const std::string pid = fields(lines[1])[0];
        const std::string enc_csv = tmp.file("enc.csv");
        const std::string pat_csv = tmp.file("pat.csv");
        REQUIRE(run_cli("explain --ckpt " + ckpt + " --data " + cohort + " --patient " + pid +
                        " --level encounter --out " + enc_csv + " --all") == 0);
        REQUIRE(run_cli("explain --ckpt " + ckpt + " --data " + cohort + " --patient " + pid +
                        " --level patient --out " + pat_csv + " --all") == 0);
        auto enc_lines = read_lines(enc_csv);
        auto pat_lines = read_lines(pat_csv);
        REQUIRE(enc_lines.size() > 1);
        REQUIRE(pat_lines.size() > 1);
        CHECK(enc_lines[0] == "patient_id,date,code_type,code,description,contribution");
        CHECK(pat_lines[0] == "code_type,code,contribution");
        // patient-level sums equal encounter-level group sums
        double enc_total = 0.0, pat_total = 0.0;
        for (std::size_t i = 1; i < enc_lines.size(); ++i) enc_total += std::stod(fields(enc_lines[i])[5]);
        for (std::size_t i = 1; i < pat_lines.size(); ++i) pat_total += std::stod(fields(pat_lines[i])[2]);
        CHECK(enc_total == doctest::Approx(pat_total).epsilon(1e-9));

        // unknown patients exit nonzero
        CHECK(run_cli("explain --ckpt " + ckpt + " --data " + cohort +
                      " --patient nobody --level patient --out " + tmp.file("x.csv")) != 0);

        // cohort level ignores --patient
        const std::string coh_csv = tmp.file("cohort_level.csv");
        REQUIRE(run_cli("explain --ckpt " + ckpt + " --data " + cohort +
                        " --level cohort --min-patients 5 --out " + coh_csv + " --all") == 0);
        CHECK(read_lines(coh_csv)[0] == "code_type,code,n_patients,mean_contribution");
    }

    SUBCASE("experiment writes summary, runs and t-test tables") {
        REQUIRE(run_cli("generate --spec " + spec + " --out " + cohort + " --truth-out " + truth) == 0);
        const std::string grid = tmp.file("grid.json");
        {
            std::ofstream out(grid);
            out << R"({"cells": [{"mode": "data_comb", "types": ["diag", "lab"]},)"
                << R"({"mode": "algorithm_comb", "types": ["diag", "lab"]}],)"
                << R"("pairs": [[0, 1]]})";
        }
        const std::string out_dir = tmp.file("results");
        REQUIRE(run_cli("experiment --data " + cohort + " --grid " + grid + " --runs 2 --out " +
                        out_dir + " --jobs 2 --emb-dim 6 --hidden-dim 6 --batch 32 "
                        "--max-epochs 2 --patience 1 --seed 3") == 0);
        auto summary = read_lines(out_dir + "/summary.csv");
        REQUIRE(summary.size() == 3); // header + one row per cell
        CHECK(summary[0] == "config,mean_auc,std_auc,n_runs");
        CHECK(fields(summary[1])[3] == "2");
        auto runs = read_lines(out_dir + "/runs.csv");
        CHECK(runs.size() == 5); // header + 2 cells x 2 runs
        auto ttests = read_lines(out_dir + "/ttests.csv");
        REQUIRE(ttests.size() == 2); // header + one requested pair
        CHECK(ttests[0] == "config_1,config_2,mean_1,mean_2,p_value");
        const double p = std::stod(fields(ttests[1])[4]);
        CHECK(p >= 0.0);
        CHECK(p <= 1.0);
    }

    SUBCASE("bad inputs exit nonzero") {
        CHECK(run_cli("train --data /nonexistent.jsonl --out " + tmp.file("x.ckpt")) != 0);
        CHECK(run_cli("predict --ckpt /nonexistent.ckpt --data /nonexistent.jsonl --out " +
                      tmp.file("y.csv")) != 0);
        CHECK(run_cli("train --data " + cohort + " --out " + tmp.file("z.ckpt") +
                      " --mode bogus") != 0);
    }
}
