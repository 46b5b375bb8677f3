#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>

#include "cstwa/config.hpp"
#include "cstwa/metrics.hpp"

namespace cstwa::cli {

namespace fs = std::filesystem;

// Refuses to overwrite `artifact` unless allowed; creates the parent run dir.
void prepare_output(const fs::path& out_dir, const fs::path& artifact, bool overwrite);

void cmd_gen_synth(const RunConfig& cfg, const fs::path& out_dir, bool overwrite,
                   std::ostream* log = nullptr);

void cmd_pretrain(const RunConfig& cfg, const fs::path& data_dir, const fs::path& out_dir,
                  bool overwrite, std::ostream* log = nullptr);

void cmd_mine(const RunConfig& cfg, const fs::path& pretrain_dir, const fs::path& out_dir,
              bool overwrite, std::ostream* log = nullptr);

// `ablation` overrides the config's ablation key; graphs are required iff the
// resolved flags include sm.
void cmd_train(RunConfig cfg, const fs::path& data_dir, const std::optional<fs::path>& graph_dir,
               const fs::path& out_dir, const std::string& ablation, bool overwrite,
               std::ostream* log = nullptr);

struct EvalModelRuns {
    std::string label;
    std::vector<fs::path> run_dirs;  // each holds checkpoint.bin + vocab.txt
};

// Test-set AUCs per run, aggregated per label; gains vs the "mlp" label when
// present (first label otherwise). Writes report.csv and report.txt.
std::vector<metrics::EvalReport> cmd_eval(const RunConfig& cfg, const fs::path& data_dir,
                                          const fs::path& out_dir,
                                          const std::vector<EvalModelRuns>& models, bool overwrite,
                                          std::ostream* log = nullptr);

} // namespace cstwa::cli
