#include <cstdlib>
#include <iostream>

#include "CLI11.hpp"
#include "cstwa/commands.hpp"

namespace {

using cstwa::cli::RunConfig;

RunConfig resolve_config(const std::string& config_file, const std::vector<std::string>& sets) {
    RunConfig cfg = config_file.empty() ? RunConfig::defaults() : RunConfig::from_file(config_file);
    for (const auto& kv : sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw cstwa::ConfigError("--set expects key=value, got '" + kv + "'");
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    return cfg;
}

std::string default_out_root() {
    const char* env = std::getenv("CSTWA_OUT_ROOT");
    return env ? env : "runs";
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"cstwa: conversion-rate trainer with similarity-graph structure transfer,"
                 " click-bias gating and contradiction-weighted loss"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_file;
    std::vector<std::string> sets;
    bool overwrite = false;
    app.add_option("--config", config_file, "key = value config file (defaults used when absent)");
    app.add_option("--set", sets, "override a config key, e.g. --set seed=7");
    app.add_flag("--overwrite", overwrite, "allow clobbering existing outputs");

    std::string out_dir;
    std::string data_dir, pretrain_dir, graph_dir, ablation;
    std::vector<std::string> model_specs;
    const std::string out_help = "output directory (default: $CSTWA_OUT_ROOT/<command>)";

    auto* gen = app.add_subcommand("gen-synth", "generate a synthetic impression/click/conversion funnel");
    gen->add_option("--out", out_dir, out_help);

    auto* pre = app.add_subcommand("pretrain", "train the click path alone and keep its embedding table");
    pre->add_option("--data", data_dir, "dataset directory (field_specs.txt, train.csv[, val.csv])")->required();
    pre->add_option("--out", out_dir, out_help);

    auto* mine = app.add_subcommand("mine", "build top-K cosine similarity graphs from a pretrained table");
    mine->add_option("--pretrain", pretrain_dir, "pretrain output directory")->required();
    mine->add_option("--out", out_dir, out_help);

    auto* train = app.add_subcommand("train", "train a model variant");
    train->add_option("--data", data_dir, "dataset directory")->required();
    train->add_option("--graphs", graph_dir, "mined graph directory (required for sm variants)");
    train->add_option("--out", out_dir, out_help);
    train->add_option("--ablation", ablation,
                      "variant: mlp|sm|cp|ce|sm_cp|sm_ce|cp_ce|full (default from config)");

    auto* eval = app.add_subcommand("eval", "evaluate checkpoints on the test split");
    eval->add_option("--data", data_dir, "dataset directory with test.csv")->required();
    eval->add_option("--out", out_dir, out_help);
    eval->add_option("--model", model_specs,
                     "label=run_dir[,run_dir...]; repeat per model; gains vs the 'mlp' label")
        ->required();

    CLI11_PARSE(app, argc, argv);

    try {
        const RunConfig cfg = resolve_config(config_file, sets);
        if (out_dir.empty())
            out_dir = default_out_root() + "/" + app.get_subcommands().front()->get_name();
        if (gen->parsed()) {
            cstwa::cli::cmd_gen_synth(cfg, out_dir, overwrite, &std::cerr);
        } else if (pre->parsed()) {
            cstwa::cli::cmd_pretrain(cfg, data_dir, out_dir, overwrite, &std::cerr);
        } else if (mine->parsed()) {
            cstwa::cli::cmd_mine(cfg, pretrain_dir, out_dir, overwrite, &std::cerr);
        } else if (train->parsed()) {
            cstwa::cli::cmd_train(cfg, data_dir,
                                  graph_dir.empty() ? std::nullopt
                                                    : std::optional<std::filesystem::path>(graph_dir),
                                  out_dir, ablation, overwrite, &std::cerr);
        } else if (eval->parsed()) {
            std::vector<cstwa::cli::EvalModelRuns> models;
            for (const auto& spec : model_specs) {
                const auto eq = spec.find('=');
                if (eq == std::string::npos)
                    throw cstwa::ConfigError("--model expects label=dir[,dir...], got '" + spec + "'");
                cstwa::cli::EvalModelRuns m;
                m.label = spec.substr(0, eq);
                std::string rest = spec.substr(eq + 1);
                std::size_t start = 0;
                while (start <= rest.size()) {
                    const auto comma = rest.find(',', start);
                    m.run_dirs.emplace_back(rest.substr(start, comma - start));
                    if (comma == std::string::npos) break;
                    start = comma + 1;
                }
                models.push_back(std::move(m));
            }
            cstwa::cli::cmd_eval(cfg, data_dir, out_dir, models, overwrite, &std::cerr);
        }
    } catch (const cstwa::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const cstwa::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const cstwa::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
