#include "cstwa/config.hpp"

#include <fstream>
#include <sstream>

namespace cstwa::cli {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

} // namespace

RunConfig RunConfig::defaults() {
    RunConfig c;
    auto& kv = c.kv_;
    // model
    kv["d"] = "5";
    kv["lr"] = "0.001";
    kv["batch"] = "2000";
    kv["epochs"] = "10";
    kv["l2"] = "1e-6";
    kv["tower_dims"] = "128,64,32";
    kv["dropout"] = "0.1,0.3,0.3";
    kv["d_out"] = "32";
    kv["patience"] = "2";
    kv["seed"] = "1";
    kv["ablation"] = "full";
    kv["stop_grad_click_gate"] = "0";
    // structure miner
    kv["k"] = "8";
    kv["layers"] = "1";
    kv["alpha"] = "0.3";
    // curse escaper
    kv["gamma"] = "3";
    kv["cap"] = "4";
    kv["pos_pct"] = "99";
    kv["neg_pct"] = "10";
    kv["window"] = "10000";
    kv["warmup_min"] = "1000";
    // loss weights
    kv["w1"] = "1";
    kv["w2"] = "1";
    kv["w3"] = "0.6";
    // data handling
    kv["min_freq"] = "10";
    kv["val_fraction"] = "0.1";
    // synthetic generator
    kv["n_users"] = "2000";
    kv["n_items"] = "1000";
    kv["n_user_clusters"] = "20";
    kv["n_item_clusters"] = "20";
    kv["latent_dim"] = "8";
    kv["latent_overlap"] = "0.4";
    kv["cluster_spread"] = "1.0";
    kv["entity_noise"] = "0.35";
    kv["interaction_scale"] = "3.0";
    kv["popularity_scale"] = "1.2";
    kv["n_ctx_values"] = "50";
    kv["base_click_rate"] = "0.05";
    kv["base_conv_rate_given_click"] = "0.06";
    kv["contradictory_fraction"] = "0.25";
    kv["contradiction_strength"] = "2.0";
    kv["n_train"] = "200000";
    kv["n_val"] = "20000";
    kv["n_test"] = "50000";
    return c;
}

RunConfig RunConfig::from_text(const std::string& text) {
    RunConfig c = defaults();
    std::stringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash_at = line.find('#');
        if (hash_at != std::string::npos) line = line.substr(0, hash_at);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return c;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return from_text(ss.str());
}

void RunConfig::set(const std::string& key, const std::string& value) {
    const auto it = kv_.find(key);
    if (it == kv_.end()) throw ConfigError("unknown config key '" + key + "'");
    if (value.empty()) throw ConfigError("config key '" + key + "' has an empty value");
    it->second = value;
}

const std::string& RunConfig::get(const std::string& key) const {
    const auto it = kv_.find(key);
    if (it == kv_.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second;
}

std::int64_t RunConfig::get_i64(const std::string& key) const {
    try {
        return std::stoll(get(key));
    } catch (const std::logic_error&) {
        throw ConfigError("config key '" + key + "' is not an integer: " + get(key));
    }
}

int RunConfig::get_int(const std::string& key) const { return static_cast<int>(get_i64(key)); }

double RunConfig::get_double(const std::string& key) const {
    try {
        return std::stod(get(key));
    } catch (const std::logic_error&) {
        throw ConfigError("config key '" + key + "' is not a number: " + get(key));
    }
}

bool RunConfig::get_bool(const std::string& key) const {
    const std::string& v = get(key);
    if (v == "0" || v == "false") return false;
    if (v == "1" || v == "true") return true;
    throw ConfigError("config key '" + key + "' is not a boolean: " + v);
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
    try {
        return std::stoull(get(key));
    } catch (const std::logic_error&) {
        throw ConfigError("config key '" + key + "' is not an unsigned integer: " + get(key));
    }
}

std::vector<Index> RunConfig::get_index_list(const std::string& key) const {
    std::vector<Index> out;
    std::stringstream ss(get(key));
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        try {
            out.push_back(std::stoll(trim(cell)));
        } catch (const std::logic_error&) {
            throw ConfigError("config key '" + key + "' has a non-integer element: " + cell);
        }
    }
    return out;
}

std::vector<double> RunConfig::get_double_list(const std::string& key) const {
    std::vector<double> out;
    std::stringstream ss(get(key));
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        try {
            out.push_back(std::stod(trim(cell)));
        } catch (const std::logic_error&) {
            throw ConfigError("config key '" + key + "' has a non-numeric element: " + cell);
        }
    }
    return out;
}

std::string RunConfig::serialize() const {
    std::string out;
    for (const auto& [k, v] : kv_) {
        out += k;
        out += " = ";
        out += v;
        out += "\n";
    }
    return out;
}

std::uint64_t RunConfig::hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const char c : serialize()) {
        h ^= static_cast<std::uint8_t>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

model::ModelConfig RunConfig::to_model_config() const {
    model::ModelConfig m;
    const AblationFlags flags = parse_ablation(get("ablation"));
    m.enable_sm = flags.sm;
    m.enable_cp = flags.cp;
    m.enable_ce = flags.ce;
    m.baseline_mlp = flags.baseline;
    m.stop_grad_click_gate = get_bool("stop_grad_click_gate");
    m.d = get_int("d");
    m.tower_dims = get_index_list("tower_dims");
    m.dropout = get_double_list("dropout");
    m.d_out = get_i64("d_out");
    m.lr = get_double("lr");
    m.batch = get_i64("batch");
    m.epochs = get_int("epochs");
    m.l2 = get_double("l2");
    m.patience = get_int("patience");
    m.structure.k = get_int("k");
    m.structure.layers = get_int("layers");
    m.structure.alpha = get_double("alpha");
    m.curse.gamma = get_double("gamma");
    m.curse.cap = get_double("cap");
    m.tracker_window = get_int("window");
    m.tracker_warmup = get_int("warmup_min");
    m.pos_pct = get_int("pos_pct");
    m.neg_pct = get_int("neg_pct");
    m.weights.w1 = get_double("w1");
    m.weights.w2 = get_double("w2");
    m.weights.w3 = get_double("w3");
    m.seed = get_u64("seed");
    m.validate();
    return m;
}

data::SynthConfig RunConfig::to_synth_config() const {
    data::SynthConfig s;
    s.n_users = get_i64("n_users");
    s.n_items = get_i64("n_items");
    s.n_user_clusters = get_int("n_user_clusters");
    s.n_item_clusters = get_int("n_item_clusters");
    s.latent_dim = get_int("latent_dim");
    s.latent_overlap = get_double("latent_overlap");
    s.cluster_spread = get_double("cluster_spread");
    s.entity_noise = get_double("entity_noise");
    s.interaction_scale = get_double("interaction_scale");
    s.popularity_scale = get_double("popularity_scale");
    s.n_ctx_values = get_int("n_ctx_values");
    s.base_click_rate = get_double("base_click_rate");
    s.base_conv_rate_given_click = get_double("base_conv_rate_given_click");
    s.contradictory_fraction = get_double("contradictory_fraction");
    s.contradiction_strength = get_double("contradiction_strength");
    s.n_train = get_i64("n_train");
    s.n_val = get_i64("n_val");
    s.n_test = get_i64("n_test");
    s.seed = get_u64("seed");
    s.validate();
    return s;
}

AblationFlags parse_ablation(const std::string& token) {
    if (token == "mlp") return {.sm = false, .cp = false, .ce = false, .baseline = true};
    if (token == "sm") return {.sm = true};
    if (token == "cp") return {.cp = true};
    if (token == "ce") return {.ce = true};
    if (token == "sm_cp") return {.sm = true, .cp = true};
    if (token == "sm_ce") return {.sm = true, .ce = true};
    if (token == "cp_ce") return {.cp = true, .ce = true};
    if (token == "full") return {.sm = true, .cp = true, .ce = true};
    throw ConfigError("unknown ablation token '" + token +
                      "' (expected mlp|sm|cp|ce|sm_cp|sm_ce|cp_ce|full)");
}

} // namespace cstwa::cli
