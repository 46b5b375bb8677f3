#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "cstwa/model.hpp"
#include "cstwa/synth.hpp"

namespace cstwa::cli {

// Flat `key = value` run configuration. Every key has a default; files and
// overrides may only touch known keys. The canonical serialization (sorted
// keys) is hashed into run artifacts.
class RunConfig {
public:
    static RunConfig defaults();
    static RunConfig from_file(const std::filesystem::path& path);
    static RunConfig from_text(const std::string& text);

    void set(const std::string& key, const std::string& value);
    const std::string& get(const std::string& key) const;

    std::int64_t get_i64(const std::string& key) const;
    int get_int(const std::string& key) const;
    double get_double(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    std::uint64_t get_u64(const std::string& key) const;
    std::vector<Index> get_index_list(const std::string& key) const;
    std::vector<double> get_double_list(const std::string& key) const;

    std::string serialize() const;
    std::uint64_t hash() const;

    model::ModelConfig to_model_config() const;
    data::SynthConfig to_synth_config() const;

private:
    std::map<std::string, std::string> kv_;
};

struct AblationFlags {
    bool sm = false, cp = false, ce = false, baseline = false;
};

// Tokens: mlp | sm | cp | ce | sm_cp | sm_ce | cp_ce | full.
AblationFlags parse_ablation(const std::string& token);

} // namespace cstwa::cli
