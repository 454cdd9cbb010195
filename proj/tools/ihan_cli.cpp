// ihan: train, evaluate and explain hierarchical-attention risk models over
// coded event sequences. Subcommands: generate, train, predict, explain,
// experiment.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "ihan/checkpoint.hpp"
#include "ihan/data.hpp"
#include "ihan/errors.hpp"
#include "ihan/interpret.hpp"
#include "ihan/pipeline.hpp"
#include "ihan/train.hpp"

namespace {

using namespace ihan;

constexpr const char* kVersion = "1.0.0";

std::vector<CodeType> parse_types(const std::string& csv) {
    std::vector<CodeType> out;
    std::size_t start = 0;
    while (start <= csv.size()) {
        std::size_t end = csv.find(',', start);
        if (end == std::string::npos) end = csv.size();
        const std::string token = csv.substr(start, end - start);
        if (!token.empty()) {
            auto t = code_type_from_string(token);
            if (!t) throw ConfigError("unknown code type '" + token + "' in --types");
            out.push_back(*t);
        }
        start = end + 1;
    }
    if (out.empty()) throw ConfigError("--types must name at least one of diag,proc,lab,rx");
    return out;
}

std::array<double, 3> parse_split(const std::string& csv) {
    std::array<double, 3> out{};
    int n = 0;
    std::size_t start = 0;
    while (start <= csv.size() && n < 3) {
        std::size_t end = csv.find(',', start);
        if (end == std::string::npos) end = csv.size();
        try {
            out[n++] = std::stod(csv.substr(start, end - start));
        } catch (const std::exception&) {
            throw ConfigError("bad --split value '" + csv + "'");
        }
        start = end + 1;
    }
    if (n != 3) throw ConfigError("--split needs three comma-separated fractions");
    return out;
}

std::string types_label(const std::vector<CodeType>& types) {
    std::string out;
    for (CodeType t : types) {
        if (!out.empty()) out += '+';
        out += to_string(t);
    }
    return out;
}

struct TrainFlags {
    std::string mode = "algorithm_comb";
    std::string types = "diag,proc,lab,rx";
    double lr = 5e-4;
    int emb_dim = 128;
    int hidden_dim = 128;
    int batch = 64;
    int patience = 5;
    int max_epochs = 50;
    std::uint64_t seed = 0;
    int balance_ratio = 3;
    std::string split = "0.6,0.2,0.2";
    int min_count = 1;
    double clip_norm = 5.0;
    double weight_decay = 10.0;
    double emb_weight_decay = 10.0;
    int min_encounters = 2;
};

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
    cmd->add_option("--mode", f.mode, "single_type | algorithm_comb | data_comb")
        ->default_val(f.mode);
    cmd->add_option("--types", f.types, "comma list of diag,proc,lab,rx")->default_val(f.types);
    cmd->add_option("--lr", f.lr, "initial learning rate")->default_val(f.lr);
    cmd->add_option("--emb-dim", f.emb_dim, "medical code embedding size")->default_val(f.emb_dim);
    cmd->add_option("--hidden-dim", f.hidden_dim, "GRU hidden size")->default_val(f.hidden_dim);
    cmd->add_option("--batch", f.batch, "mini-batch size")->default_val(f.batch);
    cmd->add_option("--patience", f.patience, "early-stopping patience, epochs")
        ->default_val(f.patience);
    cmd->add_option("--max-epochs", f.max_epochs)->default_val(f.max_epochs);
    cmd->add_option("--seed", f.seed, "root seed; all randomness derives from it")
        ->envname("IHAN_SEED");
    cmd->add_option("--balance-ratio", f.balance_ratio, "non-cases kept per case")
        ->default_val(f.balance_ratio);
    cmd->add_option("--split", f.split, "train,valid,test fractions")->default_val(f.split);
    cmd->add_option("--min-count", f.min_count, "vocabulary frequency floor")
        ->default_val(f.min_count);
    cmd->add_option("--clip-norm", f.clip_norm, "global gradient-norm clip, <=0 disables")
        ->default_val(f.clip_norm);
    cmd->add_option("--weight-decay", f.weight_decay)->default_val(f.weight_decay);
    cmd->add_option("--emb-weight-decay", f.emb_weight_decay,
                    "decoupled decay for the embedding matrices")
        ->default_val(f.emb_weight_decay);
    cmd->add_option("--min-encounters", f.min_encounters,
                    "drop patients with fewer encounters (0 keeps all)")
        ->default_val(f.min_encounters);
}

TrainConfig config_from_flags(const TrainFlags& f) {
    TrainConfig cfg;
    auto mode = fusion_mode_from_string(f.mode);
    if (!mode) throw ConfigError("unknown --mode '" + f.mode + "'");
    cfg.mode = *mode;
    cfg.active_types = parse_types(f.types);
    cfg.embedding_dim = f.emb_dim;
    cfg.hidden_dim = f.hidden_dim;
    cfg.learning_rate = f.lr;
    cfg.weight_decay = f.weight_decay;
    cfg.embedding_weight_decay = f.emb_weight_decay;
    cfg.batch_size = f.batch;
    cfg.max_epochs = f.max_epochs;
    cfg.patience = f.patience;
    cfg.clip_norm = f.clip_norm;
    cfg.vocab_min_count = f.min_count;
    cfg.seed = f.seed;
    return cfg;
}

std::vector<PatientRecord> load_for_cli(const std::string& path, int min_encounters) {
    LoadOptions opts;
    opts.apply_min_encounters = min_encounters > 0;
    opts.min_encounters = min_encounters;
    return load_cohort(path, opts);
}

// --- generate ---------------------------------------------------------------

int cmd_generate(const std::string& spec_path, const std::string& out_path,
                 const std::string& truth_path, std::uint64_t seed, bool seed_given) {
    SyntheticSpec spec;
    if (!spec_path.empty()) spec = SyntheticSpec::from_json_file(spec_path);
    if (seed_given) spec.seed = seed;
    SyntheticCohort cohort = generate_synthetic(spec);
    write_cohort(out_path, cohort.patients);
    {
        std::ofstream out(truth_path);
        if (!out) throw IoError("cannot open '" + truth_path + "' for writing");
        out << ground_truth_to_json(cohort.truth) << "\n";
    }
    double rate = 0.0;
    for (const PatientRecord& p : cohort.patients) rate += p.label;
    rate /= static_cast<double>(cohort.patients.size());
    std::printf("wrote %zu patients to %s (positive rate %.4f), ground truth to %s\n",
                cohort.patients.size(), out_path.c_str(), rate, truth_path.c_str());
    return 0;
}

// --- train -------------------------------------------------------------------

int cmd_train(const std::string& data_path, const std::string& out_path, const TrainFlags& flags) {
    PipelineOptions opts;
    opts.config = config_from_flags(flags);
    opts.balance_ratio = flags.balance_ratio;
    opts.split_fractions = parse_split(flags.split);

    std::vector<PatientRecord> cohort = load_for_cli(data_path, flags.min_encounters);
    PipelineResult result = run_train_pipeline(cohort, opts);

    CheckpointMetrics metrics;
    metrics.test_auc = result.test_auc;
    metrics.best_epoch = result.model.history.best_epoch;
    metrics.best_valid_loss = result.model.history.best_valid_loss;
    save_checkpoint(out_path, result.model, metrics);

    std::printf("cohort %zu -> balanced %zu -> train/valid/test %zu/%zu/%zu\n", cohort.size(),
                result.balanced_size, result.n_train, result.n_valid, result.n_test);
    std::printf("best epoch %d (valid loss %.6f) over %d epochs\n",
                result.model.history.best_epoch, result.model.history.best_valid_loss,
                result.model.history.stopped_epoch);
    std::printf("test AUC %.4f\n", result.test_auc);
    std::printf("checkpoint written to %s\n", out_path.c_str());
    return 0;
}

// --- predict ------------------------------------------------------------------

int cmd_predict(const std::string& ckpt_path, const std::string& data_path,
                const std::string& out_path, int min_encounters) {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    std::vector<PatientRecord> cohort = load_for_cli(data_path, min_encounters);
    std::ofstream out(out_path);
    if (!out) throw IoError("cannot open '" + out_path + "' for writing");
    out << "patient_id,score\n";
    std::size_t skipped = 0;
    char buf[64];
    for (const PatientRecord& p : cohort) {
        bool any = false;
        for (CodeType t : ckpt.model.vocabs.active_types) any = any || p.has_code_of(t);
        if (!any) {
            ++skipped;
            continue;
        }
        const double score = forward(ckpt.model.params, ckpt.model.vocabs, p).y_hat;
        std::snprintf(buf, sizeof buf, "%.17g", score);
        out << p.patient_id << ',' << buf << '\n';
    }
    if (skipped > 0) {
        std::cerr << "warning: skipped " << skipped << " patients with no code of any active type\n";
    }
    std::printf("wrote %zu scores to %s\n", cohort.size() - skipped, out_path.c_str());
    return 0;
}

// --- explain ------------------------------------------------------------------

int cmd_explain(const std::string& ckpt_path, const std::string& data_path,
                const std::string& patient_id, const std::string& level,
                const std::string& out_path, bool include_all, int min_patients,
                int min_encounters) {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    std::vector<PatientRecord> cohort = load_for_cli(data_path, min_encounters);
    const IhanParams& params = ckpt.model.params;
    const VocabSet& vocabs = ckpt.model.vocabs;

    std::ofstream out(out_path);
    if (!out) throw IoError("cannot open '" + out_path + "' for writing");

    if (level == "cohort") {
        std::vector<ContributionReport> reports;
        for (const PatientRecord& p : cohort) {
            bool any = false;
            for (CodeType t : vocabs.active_types) any = any || p.has_code_of(t);
            if (!any) continue;
            ForwardOutput fwd = forward(params, vocabs, p);
            reports.push_back(contributions(params, p, fwd.trace));
        }
        write_code_level_csv(out, aggregate_code_level(reports, min_patients), include_all);
        std::printf("wrote cohort-level contributions over %zu patients to %s\n", reports.size(),
                    out_path.c_str());
        return 0;
    }

    const PatientRecord* patient = nullptr;
    for (const PatientRecord& p : cohort) {
        if (p.patient_id == patient_id) {
            patient = &p;
            break;
        }
    }
    if (!patient) throw ConfigError("patient '" + patient_id + "' not found in " + data_path);
    ForwardOutput fwd = forward(params, vocabs, *patient);
    ContributionReport report = contributions(params, *patient, fwd.trace);
    if (level == "encounter") {
        write_report_csv(out, report, include_all);
    } else if (level == "patient") {
        write_patient_code_csv(out, aggregate_patient_code(report), include_all);
    } else {
        throw ConfigError("--level must be encounter, patient or cohort, got '" + level + "'");
    }
    std::printf("patient %s predicted risk %.4f; wrote %s-level contributions to %s\n",
                patient_id.c_str(), report.prediction, level.c_str(), out_path.c_str());
    return 0;
}

// --- experiment -----------------------------------------------------------------

struct GridCell {
    std::string label;
    FusionMode mode;
    std::vector<CodeType> types;
};

int cmd_experiment(const std::string& data_path, const std::string& grid_path, int runs,
                   const std::string& out_dir, int jobs, const TrainFlags& flags) {
    nlohmann::json grid;
    {
        std::ifstream in(grid_path);
        if (!in) throw IoError("cannot open grid '" + grid_path + "'");
        try {
            in >> grid;
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("grid '" + grid_path + "': " + e.what());
        }
    }
    if (!grid.contains("cells") || !grid["cells"].is_array() || grid["cells"].empty()) {
        throw ConfigError("grid needs a non-empty 'cells' array");
    }
    std::vector<GridCell> cells;
    for (const auto& jc : grid["cells"]) {
        GridCell cell;
        auto mode = fusion_mode_from_string(jc.value("mode", "algorithm_comb"));
        if (!mode) throw ConfigError("grid cell has unknown mode");
        cell.mode = *mode;
        if (!jc.contains("types")) throw ConfigError("grid cell needs 'types'");
        for (const auto& t : jc["types"]) {
            auto ct = code_type_from_string(t.get<std::string>());
            if (!ct) throw ConfigError("grid cell has unknown type '" + t.get<std::string>() + "'");
            cell.types.push_back(*ct);
        }
        if (cell.types.size() == 1) cell.mode = FusionMode::single_type;
        cell.label = std::string(to_string(cell.mode)) + ":" + types_label(cell.types);
        cells.push_back(std::move(cell));
    }
    std::vector<std::pair<int, int>> pairs;
    if (grid.contains("pairs")) {
        for (const auto& jp : grid["pairs"]) {
            if (!jp.is_array() || jp.size() != 2) throw ConfigError("grid pairs must be index pairs");
            pairs.emplace_back(jp[0].get<int>(), jp[1].get<int>());
        }
    } else {
        for (std::size_t i = 0; i + 1 < cells.size(); ++i) {
            pairs.emplace_back(static_cast<int>(i), static_cast<int>(i + 1));
        }
    }
    for (const auto& [a, b] : pairs) {
        if (a < 0 || b < 0 || a >= static_cast<int>(cells.size()) ||
            b >= static_cast<int>(cells.size())) {
            throw ConfigError("grid pair index out of range");
        }
    }

    std::vector<PatientRecord> cohort = load_for_cli(data_path, flags.min_encounters);
    Rng root(flags.seed);
    std::vector<PatientRecord> balanced =
        balance_cohort(cohort, flags.balance_ratio, root.child("balance").root_seed());
    const std::array<double, 3> fractions = parse_split(flags.split);

    std::filesystem::create_directories(out_dir);
    std::vector<ExperimentResult> results;
    for (const GridCell& cell : cells) {
        TrainConfig cfg = config_from_flags(flags);
        cfg.mode = cell.mode;
        cfg.active_types = cell.types;
        std::printf("running %s (%d runs)...\n", cell.label.c_str(), runs);
        std::fflush(stdout);
        results.push_back(run_experiment(cfg, balanced, runs, fractions, true, jobs, cell.label));
        const ExperimentResult& r = results.back();
        std::printf("  mean AUC %.4f +- %.4f\n", r.mean_auc, r.std_auc);
    }

    const std::string summary_path = out_dir + "/summary.csv";
    {
        std::ofstream out(summary_path);
        out << "config,mean_auc,std_auc,n_runs\n";
        char buf[64];
        for (const ExperimentResult& r : results) {
            std::snprintf(buf, sizeof buf, "%.6f,%.6f", r.mean_auc, r.std_auc);
            out << r.label << ',' << buf << ',' << r.runs.size() << '\n';
        }
    }
    {
        std::ofstream out(out_dir + "/runs.csv");
        out << "config,seed,test_auc,best_epoch,wall_seconds\n";
        char buf[96];
        for (const ExperimentResult& r : results) {
            for (const RunResult& run : r.runs) {
                std::snprintf(buf, sizeof buf, "%.6f,%d,%.2f", run.test_auc, run.best_epoch,
                              run.wall_seconds);
                out << r.label << ',' << run.seed << ',' << buf << '\n';
            }
        }
    }
    {
        std::ofstream out(out_dir + "/ttests.csv");
        out << "config_1,config_2,mean_1,mean_2,p_value\n";
        char buf[96];
        for (const auto& [a, b] : pairs) {
            WelchResult w = compare_experiments(results[a], results[b]);
            std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6g", results[a].mean_auc,
                          results[b].mean_auc, w.p);
            out << results[a].label << ',' << results[b].label << ',' << buf << '\n';
        }
    }
    std::printf("wrote %s, runs.csv and ttests.csv under %s\n", summary_path.c_str(),
                out_dir.c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"hierarchical attention risk model over coded event sequences"};
    app.set_version_flag("--version", std::string("ihan ") + kVersion + " (checkpoint format " +
                                          std::to_string(ihan::kCheckpointFormatVersion) + ")");
    app.require_subcommand(1);

    // generate
    auto* gen = app.add_subcommand("generate", "write a synthetic cohort with planted risk codes");
    std::string gen_spec, gen_out, gen_truth;
    std::uint64_t gen_seed = 0;
    gen->add_option("--spec", gen_spec, "synthetic spec JSON (defaults apply if omitted)");
    gen->add_option("--out", gen_out, "cohort JSONL path (.jsonl or .jsonl.gz)")->required();
    gen->add_option("--truth-out", gen_truth, "ground-truth JSON path")->required();
    auto* gen_seed_opt = gen->add_option("--seed", gen_seed, "override the spec seed")
                             ->envname("IHAN_SEED");

    // train
    auto* tr = app.add_subcommand("train", "balance, split, train and checkpoint a model");
    std::string tr_data, tr_out;
    TrainFlags tr_flags;
    tr->add_option("--data", tr_data, "cohort JSONL")->required();
    tr->add_option("--out", tr_out, "checkpoint output path")->required();
    add_train_flags(tr, tr_flags);

    // predict
    auto* pr = app.add_subcommand("predict", "score a cohort with a checkpoint");
    std::string pr_ckpt, pr_data, pr_out;
    int pr_min_enc = 2;
    pr->add_option("--ckpt", pr_ckpt)->required();
    pr->add_option("--data", pr_data)->required();
    pr->add_option("--out", pr_out, "CSV output: patient_id,score")->required();
    pr->add_option("--min-encounters", pr_min_enc)->default_val(pr_min_enc);

    // explain
    auto* ex = app.add_subcommand("explain", "per-code contribution reports at three levels");
    std::string ex_ckpt, ex_data, ex_patient, ex_level = "encounter", ex_out;
    bool ex_all = false;
    int ex_min_patients = 50;
    int ex_min_enc = 2;
    ex->add_option("--ckpt", ex_ckpt)->required();
    ex->add_option("--data", ex_data)->required();
    ex->add_option("--patient", ex_patient, "patient id (ignored for --level cohort)");
    ex->add_option("--level", ex_level, "encounter | patient | cohort")->default_val(ex_level);
    ex->add_option("--out", ex_out, "CSV output path")->required();
    ex->add_flag("--all", ex_all, "keep rows with |contribution| <= 0.01");
    ex->add_option("--min-patients", ex_min_patients, "cohort level: drop rarer codes")
        ->default_val(ex_min_patients);
    ex->add_option("--min-encounters", ex_min_enc)->default_val(ex_min_enc);

    // experiment
    auto* xp = app.add_subcommand("experiment", "repeated runs over a mode x type-set grid");
    std::string xp_data, xp_grid, xp_out;
    int xp_runs = 10;
    int xp_jobs = static_cast<int>(std::thread::hardware_concurrency());
    TrainFlags xp_flags;
    xp->add_option("--data", xp_data)->required();
    xp->add_option("--grid", xp_grid, "JSON: {\"cells\":[{\"mode\":...,\"types\":[...]}], \"pairs\":[[0,1]]}")
        ->required();
    xp->add_option("--runs", xp_runs, "trainings per grid cell")->default_val(xp_runs);
    xp->add_option("--out", xp_out, "output directory")->required();
    xp->add_option("--jobs", xp_jobs, "parallel runs")->default_val(xp_jobs);
    add_train_flags(xp, xp_flags);

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            return cmd_generate(gen_spec, gen_out, gen_truth, gen_seed, gen_seed_opt->count() > 0 ||
                                                                            std::getenv("IHAN_SEED"));
        }
        if (tr->parsed()) return cmd_train(tr_data, tr_out, tr_flags);
        if (pr->parsed()) return cmd_predict(pr_ckpt, pr_data, pr_out, pr_min_enc);
        if (ex->parsed()) {
            return cmd_explain(ex_ckpt, ex_data, ex_patient, ex_level, ex_out, ex_all,
                               ex_min_patients, ex_min_enc);
        }
        if (xp->parsed()) return cmd_experiment(xp_data, xp_grid, xp_runs, xp_out, xp_jobs, xp_flags);
    } catch (const ihan::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
