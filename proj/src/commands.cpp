#include "cstwa/commands.hpp"

#include <fstream>
#include <ostream>
#include <sstream>

#include "cstwa/dataset.hpp"
#include "cstwa/graph.hpp"
#include "cstwa/model.hpp"
#include "cstwa/structure.hpp"
#include "cstwa/synth.hpp"

namespace cstwa::cli {

namespace {

constexpr std::int64_t kMaxExactSearchEntities = 100000;

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
}

struct LoadedData {
    feat::FieldLayout layout;
    feat::Vocabulary vocab;
    feat::Dataset train, val;
};

// Vocabulary comes from the training split only; the validation file (or the
// held-out fraction when absent) never feeds the frequency filter.
LoadedData load_training_data(const RunConfig& cfg, const fs::path& data_dir, std::ostream* log) {
    LoadedData d;
    d.layout = feat::make_layout(feat::load_field_specs(data_dir / "field_specs.txt"));
    const feat::RawRecords raw = data::read_csv(data_dir / "train.csv");
    const data::HeaderMap hmap = data::map_header(raw.header, d.layout);
    d.vocab = feat::build_vocab(raw, d.layout, hmap.column_of, cfg.get_int("min_freq"));

    data::LoadStats stats;
    feat::Dataset all = data::load_dataset(data_dir / "train.csv", d.layout, d.vocab, &stats);
    if (log && stats.funnel_violations > 0)
        *log << "warning: rejected " << stats.funnel_violations << " conversion-without-click rows\n";
    if (std::filesystem::exists(data_dir / "val.csv")) {
        d.train = std::move(all);
        d.val = data::load_dataset(data_dir / "val.csv", d.layout, d.vocab);
    } else {
        auto [tr, va] = data::split_train_val(all, cfg.get_double("val_fraction"), cfg.get_u64("seed"));
        d.train = std::move(tr);
        d.val = std::move(va);
    }
    if (d.train.size() == 0) throw DataError("training split is empty");
    return d;
}

} // namespace

void prepare_output(const fs::path& out_dir, const fs::path& artifact, bool overwrite) {
    std::filesystem::create_directories(out_dir);
    if (!overwrite && std::filesystem::exists(artifact))
        throw ConfigError("output " + artifact.string() + " already exists (use --overwrite)");
}

void cmd_gen_synth(const RunConfig& cfg, const fs::path& out_dir, bool overwrite, std::ostream* log) {
    prepare_output(out_dir, out_dir / "train.csv", overwrite);
    const data::SynthStats stats = data::gen_synthetic(cfg.to_synth_config(), out_dir);
    write_text(out_dir / "gen_config.txt", cfg.serialize());
    if (log)
        *log << "generated synthetic funnel: click rate " << stats.click_rate
             << ", conversion rate given click " << stats.conv_rate_given_click << "\n";
}

void cmd_pretrain(const RunConfig& cfg, const fs::path& data_dir, const fs::path& out_dir,
                  bool overwrite, std::ostream* log) {
    prepare_output(out_dir, out_dir / "t_pre.bin", overwrite);
    const LoadedData d = load_training_data(cfg, data_dir, log);
    const model::ModelConfig mcfg = cfg.to_model_config();

    const feat::EmbeddingTable t_pre = model::pretrain_ctr(mcfg, d.train, d.val, d.layout, d.vocab, log);

    d.vocab.save(out_dir / "vocab.txt");
    t_pre.save(out_dir / "t_pre.bin");
    sm::build_entity_map(d.train, d.layout, d.vocab, feat::Side::User).save(out_dir / "entity_users.csv");
    sm::build_entity_map(d.train, d.layout, d.vocab, feat::Side::Item).save(out_dir / "entity_items.csv");
    feat::save_field_specs(d.layout.fields, out_dir / "field_specs.txt");
    write_text(out_dir / "pretrain_config.txt", cfg.serialize());
}

void cmd_mine(const RunConfig& cfg, const fs::path& pretrain_dir, const fs::path& out_dir,
              bool overwrite, std::ostream* log) {
    prepare_output(out_dir, out_dir / "graph_user.bin", overwrite);
    const feat::Vocabulary vocab = feat::Vocabulary::load(pretrain_dir / "vocab.txt");
    const feat::FieldLayout layout =
        feat::make_layout(feat::load_field_specs(pretrain_dir / "field_specs.txt"));
    const feat::EmbeddingTable t_pre = feat::EmbeddingTable::load(pretrain_dir / "t_pre.bin");
    const sm::EntityMap users = sm::EntityMap::load(pretrain_dir / "entity_users.csv");
    const sm::EntityMap items = sm::EntityMap::load(pretrain_dir / "entity_items.csv");

    if (users.n > kMaxExactSearchEntities || items.n > kMaxExactSearchEntities)
        throw ConfigError("mine: entity count exceeds the exact-search budget of " +
                          std::to_string(kMaxExactSearchEntities) +
                          " nodes; shrink the dataset or shard it upstream");

    const int k = cfg.get_int("k");
    std::string stats;
    auto mine_side = [&](const char* name, const sm::EntityMap& entities) {
        const sm::RepMatrix reps = sm::assemble_reps(t_pre, entities, layout);
        std::int64_t zero_rows = 0;
        const sm::SparseGraph raw =
            sm::topk_similarity_graph(reps.values, k, [&zero_rows](std::int64_t) { ++zero_rows; });
        const sm::SparseGraph norm = sm::normalize_graph(raw);
        sm::save_graph(norm, vocab.checksum(), out_dir / (std::string("graph_") + name + ".bin"));
        const double mean_deg = static_cast<double>(norm.nnz()) / static_cast<double>(norm.n);
        stats += std::string(name) + " nodes " + std::to_string(norm.n) + " nnz " +
                 std::to_string(norm.nnz()) + " mean_degree " + std::to_string(mean_deg) + "\n";
        if (zero_rows > 0)
            stats += std::string("warning: ") + std::to_string(zero_rows) + " zero-norm " + name +
                     " rows (no out-edges)\n";
        if (log) *log << "mined " << name << " graph: nnz " << norm.nnz() << "\n";
    };
    mine_side("user", users);
    mine_side("item", items);
    write_text(out_dir / "mine_stats.txt", stats);
    write_text(out_dir / "mine_config.txt", cfg.serialize());
}

void cmd_train(RunConfig cfg, const fs::path& data_dir, const std::optional<fs::path>& graph_dir,
               const fs::path& out_dir, const std::string& ablation, bool overwrite,
               std::ostream* log) {
    if (!ablation.empty()) cfg.set("ablation", ablation);
    const AblationFlags flags = parse_ablation(cfg.get("ablation"));
    if (flags.sm && !graph_dir)
        throw ConfigError("ablation '" + cfg.get("ablation") + "' needs mined graphs (--graphs)");

    prepare_output(out_dir, out_dir / "checkpoint.bin", overwrite);
    const LoadedData d = load_training_data(cfg, data_dir, log);
    const model::ModelConfig mcfg = cfg.to_model_config();

    sm::SparseGraph gu, gi;
    if (flags.sm) {
        std::uint64_t cksum_u = 0, cksum_i = 0;
        gu = sm::load_graph(*graph_dir / "graph_user.bin", &cksum_u);
        gi = sm::load_graph(*graph_dir / "graph_item.bin", &cksum_i);
        if (cksum_u != d.vocab.checksum() || cksum_i != d.vocab.checksum())
            throw ConfigError("graph cache was mined from a different vocabulary than " +
                              (data_dir / "train.csv").string());
    }

    std::ofstream metrics_csv(out_dir / "metrics.csv");
    std::ofstream losses_csv(out_dir / "losses.csv");
    if (!metrics_csv || !losses_csv) throw DataError("cannot write metrics logs in " + out_dir.string());

    const model::TrainOutput result =
        model::train(mcfg, d.train, d.val, flags.sm ? &gu : nullptr, flags.sm ? &gi : nullptr,
                     d.layout, d.vocab, &metrics_csv, &losses_csv, log);

    model::save_checkpoint(result.params, cfg.serialize(), cfg.hash(), out_dir / "checkpoint.bin");
    d.vocab.save(out_dir / "vocab.txt");
    write_text(out_dir / "train_config.txt", cfg.serialize());
    if (log)
        *log << "best epoch " << result.best_epoch << " val purchase auc "
             << result.best_val_purchase_auc << "\n";
}

std::vector<metrics::EvalReport> cmd_eval(const RunConfig& cfg, const fs::path& data_dir,
                                          const fs::path& out_dir,
                                          const std::vector<EvalModelRuns>& models, bool overwrite,
                                          std::ostream* log) {
    if (models.empty()) throw ConfigError("eval: no model runs given");
    prepare_output(out_dir, out_dir / "report.csv", overwrite);
    const feat::FieldLayout layout =
        feat::make_layout(feat::load_field_specs(data_dir / "field_specs.txt"));

    // runs under one label may differ only in their seed
    auto seedless_hash = [](const std::string& config_text) {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        std::stringstream ss(config_text);
        std::string line;
        while (std::getline(ss, line)) {
            if (line.rfind("seed ", 0) == 0 || line.rfind("seed=", 0) == 0) continue;
            for (const char c : line) {
                h ^= static_cast<std::uint8_t>(c);
                h *= 0x100000001b3ULL;
            }
            h ^= '\n';
            h *= 0x100000001b3ULL;
        }
        return h;
    };

    std::vector<metrics::EvalReport> reports;
    for (const auto& m : models) {
        std::vector<metrics::SeedMetrics> per_seed;
        std::uint64_t config_hash = 0;
        std::uint64_t shared_hash = 0;
        bool first_run = true;
        for (const auto& run_dir : m.run_dirs) {
            const model::Checkpoint ck = model::load_checkpoint(run_dir / "checkpoint.bin");
            const feat::Vocabulary vocab = feat::Vocabulary::load(run_dir / "vocab.txt");
            if (!first_run && seedless_hash(ck.config_text) != shared_hash)
                throw ConfigError("eval: run " + run_dir.string() + " was trained with a different "
                                  "config than earlier '" + m.label + "' runs");
            first_run = false;
            shared_hash = seedless_hash(ck.config_text);
            config_hash = ck.config_hash;
            const feat::Dataset test = data::load_dataset(data_dir / "test.csv", layout, vocab);
            const auto [yhat, zhat] = model::predict(ck.params, test, cfg.get_i64("batch"));
            metrics::SeedMetrics sm_row;
            sm_row.click_auc = metrics::auc(yhat, test.y);
            sm_row.purchase_auc = metrics::auc(zhat, test.z);
            per_seed.push_back(sm_row);
            if (log)
                *log << m.label << " " << run_dir.string() << " click " << sm_row.click_auc
                     << " purchase " << sm_row.purchase_auc << "\n";
        }
        reports.push_back(metrics::aggregate_seeds(m.label, config_hash, std::move(per_seed)));
    }

    const metrics::EvalReport* baseline = &reports.front();
    for (const auto& r : reports)
        if (r.model == "mlp") baseline = &r;

    write_text(out_dir / "report.csv", metrics::format_csv(reports, *baseline));
    const std::string table = metrics::format_table(reports, *baseline);
    write_text(out_dir / "report.txt", table);
    if (log) *log << table;
    return reports;
}

} // namespace cstwa::cli
