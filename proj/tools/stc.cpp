// stc: contrastive pre-training and evaluation for skeleton sign recognition.
//
// Subcommands: pretrain, finetune, linear-probe, eval, fuse, synth,
// export-embeddings. Every run prints a metrics JSON object to stdout; with
// --run-dir the same JSON plus step losses and test scores land on disk.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "stc/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---- configuration assembly ---------------------------------------------------------

struct ConfigCli {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string seed;  // textual so "unset" stays distinguishable
};

void add_config_options(CLI::App* cmd, ConfigCli& cc) {
    cmd->add_option("--config", cc.config_path, "flat key = value config file")
        ->check(CLI::ExistingFile);
    cmd->add_option("--set", cc.overrides,
                    "override one config entry as key=value (repeatable)");
    cmd->add_option("--seed", cc.seed, "run seed, wins over --config and --set");
}

stc::RunConfig resolve_config(const ConfigCli& cc) {
    stc::RunConfig cfg;
    if (!cc.config_path.empty())
        stc::parse_config(stc::detail::read_file(cc.config_path), cfg);
    for (const auto& kv : cc.overrides) {
        auto eq = kv.find('=');
        stc::check(eq != std::string::npos && eq > 0,
                   "--set expects key=value, got '" + kv + "'");
        stc::apply_config_entry(cfg, stc::detail::trim(kv.substr(0, eq)),
                                stc::detail::trim(kv.substr(eq + 1)));
    }
    if (!cc.seed.empty()) cfg.seed = stc::detail::parse_u64(cc.seed, "seed");
    stc::validate_config(cfg);
    return cfg;
}

// ---- JSON rendering -------------------------------------------------------------------

json report_json(const stc::EvalReport& r, const stc::Dataset& data) {
    json per_class = json::array();
    for (int c = 0; c < r.classes; ++c) {
        per_class.push_back({{"class", c},
                             {"gloss", data.vocabulary[static_cast<size_t>(c)]},
                             {"total", r.class_total[static_cast<size_t>(c)]},
                             {"top1", r.class_top1[static_cast<size_t>(c)]},
                             {"top5", r.class_top5[static_cast<size_t>(c)]}});
    }
    return {{"total", r.total},       {"classes", r.classes},
            {"pi_top1", r.pi_top1},   {"pi_top5", r.pi_top5},
            {"pc_top1", r.pc_top1},   {"pc_top5", r.pc_top5},
            {"per_class", per_class}, {"confusion", r.confusion}};
}

json config_json(const stc::RunConfig& c) {
    return {{"t_prime", c.t_prime},
            {"model_dim", c.model_dim},
            {"embed_dim", c.embed_dim},
            {"proj_dim", c.proj_dim},
            {"bank_size", c.bank_size},
            {"top_k", c.top_k},
            {"batch", c.batch},
            {"lambda_joint", c.lambda_joint},
            {"lambda_motion", c.lambda_motion},
            {"kt_enabled", c.kt_enabled},
            {"consistency_enabled", c.consistency_enabled},
            {"seed", c.seed}};
}

// stdout plus optional run-dir copy, always newline-terminated
void emit_metrics(const json& j, const std::string& run_dir) {
    std::cout << j.dump(2) << "\n";
    if (run_dir.empty()) return;
    fs::create_directories(run_dir);
    std::ofstream f(fs::path(run_dir) / "metrics.json", std::ios::binary);
    stc::check(f.good(), "cannot write metrics.json under " + run_dir);
    f << j.dump(2) << "\n";
    stc::check(f.good(), "short write to metrics.json under " + run_dir);
}

void write_run_scores(const std::string& run_dir, const stc::EvalOutputs& ev) {
    if (run_dir.empty()) return;
    fs::create_directories(run_dir);
    stc::write_scores((fs::path(run_dir) / "scores.csv").string(), ev.ids, ev.scores);
}

// output files may point into directories that do not exist yet
void ensure_parent(const std::string& path) {
    if (path.empty()) return;
    auto dir = fs::path(path).parent_path();
    if (!dir.empty()) fs::create_directories(dir);
}

json supervised_json(const char* command, const stc::RunConfig& cfg,
                     const stc::SupervisedResult& run, const stc::Dataset& data) {
    json j = {{"command", command},
              {"config", config_json(cfg)},
              {"steps", run.steps.size()},
              {"report", report_json(run.eval.report, data)}};
    if (!run.steps.empty()) j["final_loss"] = run.steps.back().loss;
    return j;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"spatial-temporal consistency pre-training for sign recognition"};
    app.require_subcommand(1);

    // shared state filled by whichever subcommand runs
    ConfigCli cc;
    std::string data_path, run_dir, out_path, ckpt_path, model_path;
    std::string modality = "all", a_path, b_path;
    double percent = 100.0;

    auto add_common = [&](CLI::App* cmd, bool needs_data = true) {
        add_config_options(cmd, cc);
        if (needs_data)
            cmd->add_option("--data", data_path, "dataset manifest JSON")
                ->required()
                ->check(CLI::ExistingFile);
        cmd->add_option("--run-dir", run_dir,
                        "directory for metrics.json, losses.csv, scores.csv");
    };

    auto* pre = app.add_subcommand("pretrain", "train both modality encoders");
    add_common(pre);
    pre->add_option("--out", out_path, "checkpoint file to write")->required();

    auto* fit = app.add_subcommand("finetune", "supervised training from a checkpoint");
    add_common(fit);
    fit->add_option("--ckpt", ckpt_path, "pre-trained encoder checkpoint (omit for random init)");
    fit->add_option("--percent", percent, "labelled share of the train split, (0,100]")
        ->check(CLI::Range(1e-9, 100.0));
    fit->add_option("--modality", modality, "branches to train: all, joint or motion")
        ->check(CLI::IsMember({"all", "joint", "motion"}));
    fit->add_option("--model-out", model_path, "save the fine-tuned model here");

    auto* probe = app.add_subcommand("linear-probe",
                                     "frozen-encoder linear evaluation");
    add_common(probe);
    probe->add_option("--ckpt", ckpt_path,
                      "encoder checkpoint (omit for the random-init baseline)");

    auto* ev = app.add_subcommand("eval", "evaluate a fine-tuned model");
    add_common(ev);
    ev->add_option("--model", model_path, "fine-tuned model file")->required();

    auto* fuse = app.add_subcommand("fuse", "sum two score files by sample id");
    fuse->add_option("--a", a_path, "first score CSV")->required()->check(CLI::ExistingFile);
    fuse->add_option("--b", b_path, "second score CSV")->required()->check(CLI::ExistingFile);
    fuse->add_option("--out", out_path, "write the fused score CSV here");
    fuse->add_option("--data", data_path, "manifest for labels, enables metrics")
        ->check(CLI::ExistingFile);
    fuse->add_option("--run-dir", run_dir,
                     "directory for metrics.json and the fused scores.csv");

    stc::SynthSpec synth;
    auto* sy = app.add_subcommand("synth", "generate a synthetic keypoint corpus");
    sy->add_option("--classes", synth.classes, "number of sign classes");
    sy->add_option("--per-class", synth.per_class, "clips per class");
    sy->add_option("--frames", synth.frames, "frames per clip");
    sy->add_option("--seed", synth.seed, "generator seed");
    sy->add_option("--signers", synth.signers, "distinct signer styles");
    sy->add_option("--noise", synth.noise_scale, "style and jitter strength");
    sy->add_option("--train-fraction", synth.train_fraction, "train share per class");
    sy->add_option("--out", out_path, "output directory")->required();

    auto* ex = app.add_subcommand("export-embeddings",
                                  "dump per-sample encoder features as CSV");
    add_common(ex);
    ex->add_option("--ckpt", ckpt_path, "encoder checkpoint")->required();
    ex->add_option("--out", out_path, "output CSV path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (pre->parsed()) {
            auto cfg = resolve_config(cc);
            auto data = stc::load_dataset(data_path);
            ensure_parent(out_path);
            auto run = stc::pretrain(cfg, data, out_path);
            if (!run_dir.empty()) {
                fs::create_directories(run_dir);
                stc::write_pretrain_losses((fs::path(run_dir) / "losses.csv").string(),
                                           run.steps);
            }
            json j = {{"command", "pretrain"},
                      {"config", config_json(cfg)},
                      {"checkpoint", out_path},
                      {"epochs", cfg.pretrain_epochs},
                      {"steps_per_epoch", run.steps_per_epoch},
                      {"steps", run.steps.size()}};
            if (!run.steps.empty()) {
                const auto& s = run.steps.back();
                j["final"] = {{"total", s.total},         {"cl_joint", s.cl_joint},
                              {"con_joint", s.con_joint}, {"cl_motion", s.cl_motion},
                              {"con_motion", s.con_motion}, {"kt", s.kt}};
            }
            emit_metrics(j, run_dir);
        } else if (fit->parsed()) {
            auto cfg = resolve_config(cc);
            auto data = stc::load_dataset(data_path);
            auto filter = modality == "joint"   ? stc::ModalityFilter::JointOnly
                          : modality == "motion" ? stc::ModalityFilter::MotionOnly
                                                 : stc::ModalityFilter::All;
            std::string warning;
            ensure_parent(model_path);
            auto run = stc::finetune(cfg, data, ckpt_path, percent / 100.0, filter,
                                     model_path, &warning);
            if (!warning.empty()) std::cerr << "warning: " << warning << "\n";
            if (!run_dir.empty()) {
                fs::create_directories(run_dir);
                stc::write_supervised_losses((fs::path(run_dir) / "losses.csv").string(),
                                             run.steps);
                write_run_scores(run_dir, run.eval);
            }
            auto j = supervised_json("finetune", cfg, run, data);
            j["percent"] = percent;
            j["modality"] = modality;
            if (!model_path.empty()) j["model"] = model_path;
            emit_metrics(j, run_dir);
        } else if (probe->parsed()) {
            auto cfg = resolve_config(cc);
            auto data = stc::load_dataset(data_path);
            auto run = stc::linear_probe(cfg, data, ckpt_path);
            if (!run_dir.empty()) {
                fs::create_directories(run_dir);
                stc::write_supervised_losses((fs::path(run_dir) / "losses.csv").string(),
                                             run.steps);
                write_run_scores(run_dir, run.eval);
            }
            auto j = supervised_json("linear-probe", cfg, run, data);
            j["checkpoint"] = ckpt_path;
            emit_metrics(j, run_dir);
        } else if (ev->parsed()) {
            auto cfg = resolve_config(cc);
            auto data = stc::load_dataset(data_path);
            auto out = stc::eval_checkpoint(cfg, data, model_path);
            write_run_scores(run_dir, out);
            emit_metrics({{"command", "eval"},
                          {"config", config_json(cfg)},
                          {"model", model_path},
                          {"report", report_json(out.report, data)}},
                         run_dir);
        } else if (fuse->parsed()) {
            auto fused = stc::fuse_score_files(stc::read_scores(a_path),
                                               stc::read_scores(b_path));
            if (!out_path.empty()) {
                ensure_parent(out_path);
                stc::write_scores(out_path, fused.ids, fused.scores);
            }
            if (!run_dir.empty()) {
                fs::create_directories(run_dir);
                stc::write_scores((fs::path(run_dir) / "scores.csv").string(),
                                  fused.ids, fused.scores);
            }
            json j = {{"command", "fuse"},
                      {"a", a_path},
                      {"b", b_path},
                      {"rows", fused.ids.size()},
                      {"classes", fused.classes}};
            if (!data_path.empty()) {
                auto data = stc::load_dataset(data_path);
                auto labels = stc::labels_for_ids(data, fused.ids);
                j["report"] = report_json(
                    stc::evaluate_scores(fused.scores, labels, data.num_classes()),
                    data);
            }
            emit_metrics(j, run_dir);
        } else if (sy->parsed()) {
            auto data = stc::synth_generate(synth, out_path);
            emit_metrics({{"command", "synth"},
                          {"out", out_path},
                          {"classes", data.num_classes()},
                          {"samples", data.samples.size()},
                          {"train", data.indices(stc::Split::Train).size()},
                          {"test", data.indices(stc::Split::Test).size()}},
                         "");
        } else if (ex->parsed()) {
            auto cfg = resolve_config(cc);
            auto data = stc::load_dataset(data_path);
            ensure_parent(out_path);
            stc::export_embeddings(cfg, data, ckpt_path, out_path);
            emit_metrics({{"command", "export-embeddings"},
                          {"checkpoint", ckpt_path},
                          {"out", out_path},
                          {"rows", data.samples.size()}},
                         "");
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
