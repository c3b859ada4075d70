#pragma once

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "maq/agents.hpp"
#include "maq/digest.hpp"
#include "maq/similarity.hpp"

namespace maq {

inline constexpr const char* kToolVersion = "maq-lab 1.0";

// Layered run configuration: desk-scale defaults, overridden by an optional
// preset, then a key=value config file, then command-line flags. Agent knobs
// are optionals so each agent kind can keep its own tuned defaults.
struct RunConfig {
    int horizon_h = 8;
    int codebook_k = 16;
    int latent_d = 32;
    double beta = 0.25;
    double vq_lr = 3e-4;
    int vq_batch = 32;
    int vq_epochs = 100;
    int vq_hidden = 256;

    std::string agent = "maq_dsac";
    std::vector<long> seeds = {1, 10, 100};

    std::optional<double> actor_lr, critic_lr, alpha_lr, alpha_init, gamma, symmetric_ratio;
    std::optional<long> batch_size, replay_capacity, warmup_decisions, total_decisions, warmup_action_repeat,
        eval_interval, eval_episodes;

    int bc_epochs = 100;
    int bc_batch = 64;
    double bc_lr = 3e-4;
    int bc_hidden = 128;

    int demo_count = 25;
    long split_seed = 1;
    int random_count = 25;

    LatchDoorEnv env;  // task constants, overridable via env.* keys

    std::string out_root;  // empty -> $MAQ_LAB_OUT -> "runs"
};

inline const std::vector<std::string>& agent_kinds() {
    static const std::vector<std::string> kinds = {"maq_dsac", "maq_symmetric", "grid_dsac", "bc"};
    return kinds;
}

inline bool is_maq_agent(const std::string& kind) { return kind == "maq_dsac" || kind == "maq_symmetric"; }

inline void validate(const RunConfig& cfg) {
    if (cfg.horizon_h < 1 || cfg.horizon_h > 9) throw ConfigError("config: h must be in [1, 9]");
    if (cfg.codebook_k < 2) throw ConfigError("config: k must be >= 2");
    if (cfg.latent_d < 1) throw ConfigError("config: d must be >= 1");
    if (cfg.seeds.empty()) throw ConfigError("config: seeds must be non-empty");
    if (cfg.demo_count < 2) throw ConfigError("config: demo_count must be >= 2");
    if (cfg.random_count < 1) throw ConfigError("config: random_count must be >= 1");
    bool known = false;
    for (const auto& kind : agent_kinds()) known = known || kind == cfg.agent;
    if (!known) throw ConfigError("config: unknown agent kind '" + cfg.agent + "'");
}

// Per-kind tuned defaults; explicit config values win.
inline SACConfig resolve_sac(const RunConfig& cfg, long seed) {
    SACConfig sac;
    sac.seed = seed;
    if (cfg.agent == "grid_dsac") {
        sac.total_decisions = 100000;
        sac.warmup_decisions = 30000;
        sac.warmup_action_repeat = 8;
        sac.replay_capacity = 30000;
        sac.critic_lr = 1e-3;
        sac.alpha_init = 0.5;
        sac.gamma = 0.95;
        sac.batch_size = 128;
    } else {
        sac.total_decisions = 20000;
        sac.warmup_decisions = 1000;
        sac.warmup_action_repeat = 1;
        // A small buffer evicts warm-up lingering data and a low, near-frozen
        // temperature keeps the policy from probing the delay-reward loop
        // while the success ridge is still the best-known value.
        sac.replay_capacity = 2000;
        sac.critic_lr = 3e-4;
        sac.alpha_lr = 1e-5;
        sac.alpha_init = 0.1;
        sac.gamma = 0.99;
        sac.batch_size = 64;
        if (cfg.agent == "maq_symmetric") sac.symmetric_ratio = 0.5;
    }
    if (cfg.actor_lr) sac.actor_lr = *cfg.actor_lr;
    if (cfg.critic_lr) sac.critic_lr = *cfg.critic_lr;
    if (cfg.alpha_lr) sac.alpha_lr = *cfg.alpha_lr;
    if (cfg.alpha_init) sac.alpha_init = *cfg.alpha_init;
    if (cfg.gamma) sac.gamma = *cfg.gamma;
    if (cfg.symmetric_ratio) sac.symmetric_ratio = *cfg.symmetric_ratio;
    if (cfg.batch_size) sac.batch_size = static_cast<int>(*cfg.batch_size);
    if (cfg.replay_capacity) sac.replay_capacity = static_cast<std::size_t>(*cfg.replay_capacity);
    if (cfg.warmup_decisions) sac.warmup_decisions = *cfg.warmup_decisions;
    if (cfg.total_decisions) sac.total_decisions = *cfg.total_decisions;
    if (cfg.warmup_action_repeat) sac.warmup_action_repeat = static_cast<int>(*cfg.warmup_action_repeat);
    if (cfg.eval_interval) sac.eval_interval = *cfg.eval_interval;
    if (cfg.eval_episodes) sac.eval_episodes = static_cast<int>(*cfg.eval_episodes);
    sac.validate();
    return sac;
}

inline VQConfig resolve_vq(const RunConfig& cfg, long seed) {
    VQConfig vq;
    vq.horizon_h = cfg.horizon_h;
    vq.codebook_k = cfg.codebook_k;
    vq.latent_d = cfg.latent_d;
    vq.beta = cfg.beta;
    vq.learning_rate = cfg.vq_lr;
    vq.batch_size = cfg.vq_batch;
    vq.epochs = cfg.vq_epochs;
    vq.hidden = cfg.vq_hidden;
    vq.seed = seed;
    return vq;
}

namespace detail {

inline double parse_double_kv(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' expects a number, got '" + value + "'");
    }
}

inline long parse_long_kv(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const long v = std::stol(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' expects an integer, got '" + value + "'");
    }
}

inline std::vector<long> parse_seed_list(const std::string& value) {
    std::vector<long> seeds;
    std::string token;
    std::istringstream is(value);
    while (std::getline(is, token, ',')) {
        const std::string t(trim(token));
        if (t.empty()) continue;
        seeds.push_back(parse_long_kv("seeds", t));
    }
    if (seeds.empty()) throw ConfigError("config: seeds list is empty");
    return seeds;
}

}  // namespace detail

inline void apply_kv(RunConfig& cfg, const std::string& key, const std::string& value) {
    using detail::parse_double_kv;
    using detail::parse_long_kv;
    static const std::map<std::string, double LatchDoorEnv::*> env_real_keys = {
        {"env.hand_speed", &LatchDoorEnv::hand_speed},   {"env.grip_speed", &LatchDoorEnv::grip_speed},
        {"env.latch_x", &LatchDoorEnv::latch_x},         {"env.latch_y", &LatchDoorEnv::latch_y},
        {"env.grasp_radius", &LatchDoorEnv::grasp_radius}, {"env.grip_threshold", &LatchDoorEnv::grip_threshold},
        {"env.open_rate", &LatchDoorEnv::open_rate},     {"env.relax_rate", &LatchDoorEnv::relax_rate},
        {"env.goal_angle", &LatchDoorEnv::goal_angle},   {"env.door_max", &LatchDoorEnv::door_max},
        {"env.reset_range", &LatchDoorEnv::reset_range}};

    if (key == "h") cfg.horizon_h = static_cast<int>(parse_long_kv(key, value));
    else if (key == "k") cfg.codebook_k = static_cast<int>(parse_long_kv(key, value));
    else if (key == "d") cfg.latent_d = static_cast<int>(parse_long_kv(key, value));
    else if (key == "beta") cfg.beta = parse_double_kv(key, value);
    else if (key == "vq_lr") cfg.vq_lr = parse_double_kv(key, value);
    else if (key == "vq_batch") cfg.vq_batch = static_cast<int>(parse_long_kv(key, value));
    else if (key == "vq_epochs") cfg.vq_epochs = static_cast<int>(parse_long_kv(key, value));
    else if (key == "vq_hidden") cfg.vq_hidden = static_cast<int>(parse_long_kv(key, value));
    else if (key == "agent") cfg.agent = value;
    else if (key == "seeds") cfg.seeds = detail::parse_seed_list(value);
    else if (key == "actor_lr") cfg.actor_lr = parse_double_kv(key, value);
    else if (key == "critic_lr") cfg.critic_lr = parse_double_kv(key, value);
    else if (key == "alpha_lr") cfg.alpha_lr = parse_double_kv(key, value);
    else if (key == "alpha_init") cfg.alpha_init = parse_double_kv(key, value);
    else if (key == "gamma") cfg.gamma = parse_double_kv(key, value);
    else if (key == "symmetric_ratio") cfg.symmetric_ratio = parse_double_kv(key, value);
    else if (key == "batch_size") cfg.batch_size = parse_long_kv(key, value);
    else if (key == "replay_capacity") cfg.replay_capacity = parse_long_kv(key, value);
    else if (key == "warmup_decisions") cfg.warmup_decisions = parse_long_kv(key, value);
    else if (key == "total_decisions") cfg.total_decisions = parse_long_kv(key, value);
    else if (key == "warmup_action_repeat") cfg.warmup_action_repeat = parse_long_kv(key, value);
    else if (key == "eval_interval") cfg.eval_interval = parse_long_kv(key, value);
    else if (key == "eval_episodes") cfg.eval_episodes = parse_long_kv(key, value);
    else if (key == "bc_epochs") cfg.bc_epochs = static_cast<int>(parse_long_kv(key, value));
    else if (key == "bc_batch") cfg.bc_batch = static_cast<int>(parse_long_kv(key, value));
    else if (key == "bc_lr") cfg.bc_lr = parse_double_kv(key, value);
    else if (key == "bc_hidden") cfg.bc_hidden = static_cast<int>(parse_long_kv(key, value));
    else if (key == "demo_count") cfg.demo_count = static_cast<int>(parse_long_kv(key, value));
    else if (key == "split_seed") cfg.split_seed = parse_long_kv(key, value);
    else if (key == "random_count") cfg.random_count = static_cast<int>(parse_long_kv(key, value));
    else if (key == "out") cfg.out_root = value;
    else if (key == "env.horizon") cfg.env.horizon = static_cast<int>(parse_long_kv(key, value));
    else if (auto it = env_real_keys.find(key); it != env_real_keys.end()) cfg.env.*(it->second) = parse_double_kv(key, value);
    else throw ConfigError("config: unknown key '" + key + "'");
}

inline void apply_config_file(RunConfig& cfg, const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("config: cannot open '" + path.string() + "'");
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        const std::string stripped(trim(line));
        if (stripped.empty()) continue;
        const auto eq = stripped.find('=');
        if (eq == std::string::npos)
            throw ParseError("config: '" + path.string() + "' line " + std::to_string(line_no) +
                             " is not 'key = value'");
        const std::string key(trim(stripped.substr(0, eq)));
        const std::string value(trim(stripped.substr(eq + 1)));
        if (key.empty()) throw ParseError("config: '" + path.string() + "' line " + std::to_string(line_no) + " has an empty key");
        apply_kv(cfg, key, value);
    }
}

// Reference values from the original study, kept runnable for comparison even
// though desk-scale defaults differ.
inline void apply_preset(RunConfig& cfg, const std::string& name) {
    if (name != "paper") throw ConfigError("config: unknown preset '" + name + "'");
    cfg.horizon_h = 8;
    cfg.codebook_k = 8;
    cfg.latent_d = 32;
    cfg.beta = 0.25;
    cfg.vq_lr = 3e-4;
    cfg.vq_batch = 32;
    cfg.vq_epochs = 100;
    cfg.vq_hidden = 256;
    cfg.seeds = {1, 10, 100};
    cfg.actor_lr = 3e-4;
    cfg.critic_lr = 3e-4;
    cfg.alpha_lr = 3e-4;
    cfg.alpha_init = 1.0;
    cfg.gamma = 0.99;
    cfg.batch_size = 128;
    cfg.replay_capacity = 1000000;
    cfg.warmup_decisions = 8000;
    cfg.total_decisions = 1000000;
    cfg.symmetric_ratio = 0.5;
}

inline std::filesystem::path effective_out_root(const RunConfig& cfg) {
    if (!cfg.out_root.empty()) return cfg.out_root;
    if (const char* env = std::getenv("MAQ_LAB_OUT"); env && *env) return env;
    return "runs";
}

// Geometry slot in the run path: MAQ kinds carry the codebook shape, the
// baselines their own action-space shape.
inline std::string geometry_tag(const RunConfig& cfg) {
    if (cfg.agent == "grid_dsac") return "1x27";
    if (cfg.agent == "bc") return "1x3";
    return std::to_string(cfg.horizon_h) + "x" + std::to_string(cfg.codebook_k);
}

inline std::filesystem::path run_dir(const RunConfig& cfg, const std::string& command, const std::string& agent_slot,
                                     long seed) {
    return effective_out_root(cfg) / std::filesystem::path(command) / agent_slot / geometry_tag(cfg) /
           ("seed" + std::to_string(seed));
}

inline std::vector<std::pair<std::string, std::string>> echo_config(const RunConfig& cfg, long seed) {
    const SACConfig sac = resolve_sac(cfg, seed);
    std::vector<std::pair<std::string, std::string>> kv;
    auto put_l = [&](const char* k, long v) { kv.emplace_back(k, std::to_string(v)); };
    auto put_d = [&](const char* k, double v) { kv.emplace_back(k, fmt_real(v)); };
    kv.emplace_back("agent", cfg.agent);
    put_l("h", cfg.horizon_h);
    put_l("k", cfg.codebook_k);
    put_l("d", cfg.latent_d);
    put_d("beta", cfg.beta);
    put_d("vq_lr", cfg.vq_lr);
    put_l("vq_batch", cfg.vq_batch);
    put_l("vq_epochs", cfg.vq_epochs);
    put_l("vq_hidden", cfg.vq_hidden);
    put_l("seed", seed);
    put_d("actor_lr", sac.actor_lr);
    put_d("critic_lr", sac.critic_lr);
    put_d("alpha_lr", sac.alpha_lr);
    put_d("alpha_init", sac.alpha_init);
    put_d("gamma", sac.gamma);
    put_d("symmetric_ratio", sac.symmetric_ratio);
    put_l("batch_size", sac.batch_size);
    put_l("replay_capacity", static_cast<long>(sac.replay_capacity));
    put_l("warmup_decisions", sac.warmup_decisions);
    put_l("total_decisions", sac.total_decisions);
    put_l("warmup_action_repeat", sac.warmup_action_repeat);
    put_l("eval_interval", sac.eval_interval);
    put_l("eval_episodes", sac.eval_episodes);
    put_l("bc_epochs", cfg.bc_epochs);
    put_l("bc_batch", cfg.bc_batch);
    put_d("bc_lr", cfg.bc_lr);
    put_l("bc_hidden", cfg.bc_hidden);
    put_l("demo_count", cfg.demo_count);
    put_l("split_seed", cfg.split_seed);
    put_l("random_count", cfg.random_count);
    put_d("env.hand_speed", cfg.env.hand_speed);
    put_d("env.grip_speed", cfg.env.grip_speed);
    put_d("env.latch_x", cfg.env.latch_x);
    put_d("env.latch_y", cfg.env.latch_y);
    put_d("env.grasp_radius", cfg.env.grasp_radius);
    put_d("env.grip_threshold", cfg.env.grip_threshold);
    put_d("env.open_rate", cfg.env.open_rate);
    put_d("env.relax_rate", cfg.env.relax_rate);
    put_d("env.goal_angle", cfg.env.goal_angle);
    put_d("env.door_max", cfg.env.door_max);
    put_l("env.horizon", cfg.env.horizon);
    put_d("env.reset_range", cfg.env.reset_range);
    return kv;
}

inline void atomic_write(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os) throw TrainError("atomic_write: cannot open '" + tmp.string() + "'");
        os << content;
        if (!os) throw TrainError("atomic_write: short write to '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, path);
}

struct RunManifest {
    std::string tool = kToolVersion;
    std::string command;
    std::string created_utc;
    std::vector<std::pair<std::string, std::string>> config;     // echoed key=value pairs
    std::vector<std::pair<std::string, std::string>> artifacts;  // relative path -> sha256
};

inline std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// Manifest for one run directory: every artifact the command emitted there,
// digested. Written last and atomically, so a verified manifest marks the
// directory complete.
inline void write_manifest(const std::filesystem::path& dir, const std::string& command,
                           const std::vector<std::pair<std::string, std::string>>& config,
                           const std::vector<std::string>& artifact_names) {
    RunManifest manifest;
    manifest.command = command;
    manifest.created_utc = utc_timestamp();
    manifest.config = config;
    for (const std::string& name : artifact_names) manifest.artifacts.emplace_back(name, sha256_file(dir / name));

    nlohmann::ordered_json j;
    j["tool"] = manifest.tool;
    j["command"] = manifest.command;
    j["created_utc"] = manifest.created_utc;
    nlohmann::ordered_json cfg_j = nlohmann::ordered_json::object();
    for (const auto& [k, v] : manifest.config) cfg_j[k] = v;
    j["config"] = cfg_j;
    nlohmann::ordered_json arts = nlohmann::ordered_json::array();
    for (const auto& [path, digest] : manifest.artifacts) arts.push_back({{"path", path}, {"sha256", digest}});
    j["artifacts"] = arts;
    atomic_write(dir / "manifest.json", j.dump(2) + "\n");
}

inline bool manifest_verifies(const std::filesystem::path& dir) {
    const std::filesystem::path path = dir / "manifest.json";
    std::ifstream in(path);
    if (!in) return false;
    nlohmann::json j;
    try {
        in >> j;
        for (const auto& art : j.at("artifacts")) {
            const std::filesystem::path file = dir / art.at("path").get<std::string>();
            if (!std::filesystem::exists(file)) return false;
            if (sha256_file(file) != art.at("sha256").get<std::string>()) return false;
        }
    } catch (const std::exception&) {
        return false;
    }
    return true;
}

// ---- Commands ---------------------------------------------------------------

inline std::filesystem::path cmd_gen_demos(const RunConfig& cfg, const std::filesystem::path& out_dir) {
    validate(cfg);
    std::filesystem::create_directories(out_dir);
    std::vector<Trajectory> demos;
    demos.reserve(static_cast<std::size_t>(cfg.demo_count));
    for (long s = 1; s <= cfg.demo_count; ++s) {
        Trajectory t = cfg.env.scripted_demo(s);
        if (!t.success) throw TrainError("gen-demos: scripted demo for seed " + std::to_string(s) + " failed");
        demos.push_back(std::move(t));
    }
    const std::filesystem::path file = out_dir / "demos.maqtraj";
    save_dataset(demos, file);
    write_manifest(out_dir, "gen-demos", echo_config(cfg, cfg.seeds.front()), {"demos.maqtraj"});
    return file;
}

inline std::vector<std::filesystem::path> cmd_train_vqvae(const RunConfig& cfg, const std::filesystem::path& demos_path) {
    validate(cfg);
    const std::vector<Trajectory> demos = load_dataset(demos_path);
    const DataSplit split = split_dataset(demos, cfg.split_seed);

    std::vector<std::filesystem::path> model_files;
    for (const long seed : cfg.seeds) {
        const std::filesystem::path dir = run_dir(cfg, "train-vqvae", "vqvae", seed);
        std::filesystem::create_directories(dir);
        const auto [model, report] = train_vqvae(split.train, resolve_vq(cfg, seed));
        save_model(model, dir / "model.maqvq");

        nlohmann::ordered_json j;
        j["final_mse"] = fmt_real(report.final_mse);
        j["utilization"] = fmt_real(report.utilization);
        j["revived_codes"] = report.revived_codes;
        j["sample_count"] = report.sample_count;
        nlohmann::ordered_json losses = nlohmann::ordered_json::array();
        for (const auto& parts : report.epoch_losses) losses.push_back(fmt_real(parts.total));
        j["epoch_total_loss"] = losses;
        atomic_write(dir / "report.json", j.dump(2) + "\n");

        write_manifest(dir, "train-vqvae", echo_config(cfg, seed), {"model.maqvq", "report.json"});
        model_files.push_back(dir / "model.maqvq");
    }
    return model_files;
}

// A --vqvae argument may be one checkpoint file (shared by every seed) or a
// <H>x<K> directory holding seed<k>/model.maqvq per agent seed.
inline std::filesystem::path vqvae_path_for_seed(const std::filesystem::path& vqvae_arg, long seed) {
    if (std::filesystem::is_directory(vqvae_arg)) {
        const std::filesystem::path candidate = vqvae_arg / ("seed" + std::to_string(seed)) / "model.maqvq";
        if (!std::filesystem::exists(candidate))
            throw ParseError("train-agent: no checkpoint '" + candidate.string() + "' for seed " +
                             std::to_string(seed));
        return candidate;
    }
    if (!std::filesystem::exists(vqvae_arg))
        throw ParseError("train-agent: VQVAE checkpoint '" + vqvae_arg.string() + "' does not exist");
    return vqvae_arg;
}

inline constexpr std::uint64_t kEvalSeedTag = 0xE7A1;

inline std::vector<std::filesystem::path> cmd_train_agent(const RunConfig& cfg, const std::filesystem::path& vqvae_arg,
                                                          const std::filesystem::path& demos_path) {
    validate(cfg);
    std::vector<std::filesystem::path> policy_files;

    for (const long seed : cfg.seeds) {
        const std::filesystem::path dir = run_dir(cfg, "train-agent", cfg.agent, seed);
        std::filesystem::create_directories(dir);
        std::vector<std::string> artifacts;

        if (is_maq_agent(cfg.agent)) {
            if (vqvae_arg.empty())
                throw ConfigError("train-agent: agent '" + cfg.agent + "' requires --vqvae");
            const CodebookModel model = load_model(vqvae_path_for_seed(vqvae_arg, seed));
            if (model.horizon_h != cfg.horizon_h || model.codebook_k != cfg.codebook_k)
                throw ConfigError("train-agent: checkpoint geometry " + std::to_string(model.horizon_h) + "x" +
                                  std::to_string(model.codebook_k) + " disagrees with configured " + geometry_tag(cfg));
            const SACConfig sac = resolve_sac(cfg, seed);

            std::vector<MacroTransition> offline;
            if (sac.symmetric_ratio > 0.0) {
                if (demos_path.empty())
                    throw ConfigError("train-agent: agent 'maq_symmetric' requires --demos for offline transitions");
                const DataSplit split = split_dataset(load_dataset(demos_path), cfg.split_seed);
                for (const Trajectory& demo : split.train) {
                    const auto trs = demo_to_macro_transitions(cfg.env, demo, model, sac.gamma);
                    offline.insert(offline.end(), trs.begin(), trs.end());
                }
            }

            const auto [policy, curve] = train_maq_agent(cfg.env, model, offline, sac);
            save_policy(policy.net, cfg.agent, model.codebook_k, seed, dir / "policy.maqpol");
            write_curve_csv(curve, dir / "curve.csv");
            artifacts = {"policy.maqpol", "curve.csv"};
        } else if (cfg.agent == "grid_dsac") {
            const auto [policy, curve] = train_grid_baseline(cfg.env, resolve_sac(cfg, seed));
            save_policy(policy.net, cfg.agent, 27, seed, dir / "policy.maqpol");
            write_curve_csv(curve, dir / "curve.csv");
            artifacts = {"policy.maqpol", "curve.csv"};
        } else {  // bc
            if (demos_path.empty()) throw ConfigError("train-agent: agent 'bc' requires --demos");
            const DataSplit split = split_dataset(load_dataset(demos_path), cfg.split_seed);
            BCConfig bc;
            bc.epochs = cfg.bc_epochs;
            bc.batch_size = cfg.bc_batch;
            bc.learning_rate = cfg.bc_lr;
            bc.hidden = cfg.bc_hidden;
            bc.seed = seed;
            const BCPolicy policy = train_bc(split.train, bc);
            save_policy(policy.net, cfg.agent, kActionDim, seed, dir / "policy.maqpol");
            artifacts = {"policy.maqpol"};
        }

        write_manifest(dir, "train-agent", echo_config(cfg, seed), artifacts);
        policy_files.push_back(dir / "policy.maqpol");
    }
    return policy_files;
}

// Rolls the policy, then scores its trajectories against the held-out humans
// with random rollouts as the floor reference.
inline SimilarityReport evaluate_policy(const RunConfig& cfg, const PolicyCheckpoint& ckpt,
                                        const CodebookModel* model, const DataSplit& split,
                                        const std::vector<Trajectory>& randoms, const NormStats& stats) {
    const SACConfig sac = resolve_sac(cfg, ckpt.seed);
    const long eval_seed = static_cast<long>(mix_seed(static_cast<std::uint64_t>(ckpt.seed), kEvalSeedTag));

    EvalReport eval;
    if (is_maq_agent(ckpt.kind)) {
        if (!model) throw ConfigError("evaluate: policy kind '" + ckpt.kind + "' requires --vqvae");
        if (model->codebook_k != ckpt.actions)
            throw ConfigError("evaluate: policy has " + std::to_string(ckpt.actions) + " actions but codebook has " +
                              std::to_string(model->codebook_k) + " codes");
        DiscretePolicy policy;
        policy.net = ckpt.net;
        policy.action_count = ckpt.actions;
        eval = evaluate_maq(cfg.env, policy, *model, sac.eval_episodes, eval_seed, sac.gamma);
    } else if (ckpt.kind == "grid_dsac") {
        DiscretePolicy policy;
        policy.net = ckpt.net;
        policy.action_count = ckpt.actions;
        eval = evaluate_grid(cfg.env, policy, sac.eval_episodes, eval_seed);
    } else if (ckpt.kind == "bc") {
        BCPolicy policy;
        policy.net = ckpt.net;
        eval = evaluate_bc(cfg.env, policy, sac.eval_episodes, eval_seed);
    } else {
        throw ParseError("evaluate: unknown policy kind '" + ckpt.kind + "'");
    }

    return build_report(eval.trajectories, split.test, randoms, stats, eval.success_rate, ckpt.kind, ckpt.seed);
}

inline std::vector<Trajectory> reference_randoms(const RunConfig& cfg) {
    std::vector<Trajectory> randoms;
    randoms.reserve(static_cast<std::size_t>(cfg.random_count));
    for (long s = 1; s <= cfg.random_count; ++s) randoms.push_back(cfg.env.random_rollout(900000 + s));
    return randoms;
}

inline std::filesystem::path cmd_evaluate(const RunConfig& cfg, const std::vector<std::filesystem::path>& policies,
                                          const std::filesystem::path& demos_path,
                                          const std::filesystem::path& vqvae_arg) {
    validate(cfg);
    if (policies.empty()) throw ConfigError("evaluate: at least one --policy is required");
    const DataSplit split = split_dataset(load_dataset(demos_path), cfg.split_seed);
    const NormStats stats = compute_norm_stats(split.train);
    const std::vector<Trajectory> randoms = reference_randoms(cfg);

    const std::filesystem::path base =
        effective_out_root(cfg) / std::filesystem::path("evaluate") / cfg.agent / geometry_tag(cfg);
    std::filesystem::create_directories(base);

    std::string csv = std::string(kReportCsvHeader) + "\n";
    std::vector<std::string> artifacts;
    for (const std::filesystem::path& policy_path : policies) {
        const PolicyCheckpoint ckpt = load_policy(policy_path);
        std::optional<CodebookModel> model;
        if (is_maq_agent(ckpt.kind)) {
            if (vqvae_arg.empty()) throw ConfigError("evaluate: policy kind '" + ckpt.kind + "' requires --vqvae");
            model = load_model(vqvae_path_for_seed(vqvae_arg, ckpt.seed));
        }
        const SimilarityReport report =
            evaluate_policy(cfg, ckpt, model ? &*model : nullptr, split, randoms, stats);
        csv += report_csv_row(report) + "\n";

        const std::filesystem::path seed_dir = base / ("seed" + std::to_string(ckpt.seed));
        std::filesystem::create_directories(seed_dir);
        std::ostringstream os;
        report_json(os, report);
        atomic_write(seed_dir / "report.json", os.str());
        artifacts.push_back("seed" + std::to_string(ckpt.seed) + "/report.json");
    }
    atomic_write(base / "report.csv", csv);
    artifacts.push_back("report.csv");
    write_manifest(base, "evaluate", echo_config(cfg, cfg.seeds.front()), artifacts);
    return base / "report.csv";
}

struct AblateCell {
    int horizon_h = 0;
    int codebook_k = 0;
    long seed = 0;
    bool reused = false;
    std::string error;  // empty on success
    SimilarityReport report;
};

inline SimilarityReport read_cell_report(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw ParseError("ablate: cannot open '" + file.string() + "'");
    nlohmann::json j;
    in >> j;
    SimilarityReport r;
    r.agent = j.at("agent").get<std::string>();
    r.seed = j.at("seed").get<long>();
    r.success_rate = j.at("success_rate").get<double>();
    auto quad = [&](const char* name, MetricQuad& q) {
        const auto& src = j.at(name);
        q.dtw_s = src.at("dtw_s").get<double>();
        q.dtw_a = src.at("dtw_a").get<double>();
        q.wd_s = src.at("wd_s").get<double>();
        q.wd_a = src.at("wd_a").get<double>();
    };
    quad("raw", r.raw);
    quad("human_ref", r.human_ref);
    quad("random_ref", r.random_ref);
    quad("normalized", r.normalized);
    return r;
}

// One factorial cell: codebook, agent, similarity report, all under the cell
// directory. A verified manifest marks the cell done and lets reruns skip it.
inline AblateCell run_ablate_cell(RunConfig cfg, const DataSplit& split, const std::vector<Trajectory>& randoms,
                                  const NormStats& stats, int h, int k, long seed) {
    cfg.horizon_h = h;
    cfg.codebook_k = k;
    cfg.seeds = {seed};

    AblateCell cell;
    cell.horizon_h = h;
    cell.codebook_k = k;
    cell.seed = seed;

    const std::filesystem::path dir = run_dir(cfg, "ablate", cfg.agent, seed);
    try {
        if (manifest_verifies(dir)) {
            cell.report = read_cell_report(dir / "report.json");
            cell.reused = true;
            std::filesystem::remove(dir / "error.txt");
            return cell;
        }
        std::filesystem::create_directories(dir);

        const auto [model, vq_report] = train_vqvae(split.train, resolve_vq(cfg, seed));
        save_model(model, dir / "model.maqvq");

        const SACConfig sac = resolve_sac(cfg, seed);
        std::vector<MacroTransition> offline;
        if (sac.symmetric_ratio > 0.0)
            for (const Trajectory& demo : split.train) {
                const auto trs = demo_to_macro_transitions(cfg.env, demo, model, sac.gamma);
                offline.insert(offline.end(), trs.begin(), trs.end());
            }
        const auto [policy, curve] = train_maq_agent(cfg.env, model, offline, sac);
        save_policy(policy.net, cfg.agent, model.codebook_k, seed, dir / "policy.maqpol");
        write_curve_csv(curve, dir / "curve.csv");

        const long eval_seed = static_cast<long>(mix_seed(static_cast<std::uint64_t>(seed), kEvalSeedTag));
        const EvalReport eval = evaluate_maq(cfg.env, policy, model, sac.eval_episodes, eval_seed, sac.gamma);
        cell.report = build_report(eval.trajectories, split.test, randoms, stats, eval.success_rate, cfg.agent, seed);

        std::ostringstream os;
        report_json(os, cell.report);
        atomic_write(dir / "report.json", os.str());
        write_manifest(dir, "ablate", echo_config(cfg, seed),
                       {"model.maqvq", "policy.maqpol", "curve.csv", "report.json"});
        std::filesystem::remove(dir / "error.txt");
    } catch (const std::exception& e) {
        cell.error = e.what();
        std::filesystem::create_directories(dir);
        atomic_write(dir / "error.txt", std::string(e.what()) + "\n");
    }
    return cell;
}

struct AblateResult {
    std::vector<AblateCell> cells;
    std::filesystem::path heatmap;
    long failures = 0;
};

inline AblateResult cmd_ablate(const RunConfig& cfg, std::vector<int> h_list, std::vector<int> k_list,
                               const std::filesystem::path& demos_path) {
    validate(cfg);
    if (!is_maq_agent(cfg.agent)) throw ConfigError("ablate: agent must be maq_dsac or maq_symmetric");
    if (h_list.empty() || k_list.empty()) throw ConfigError("ablate: H and K lists must be non-empty");
    std::sort(h_list.begin(), h_list.end());
    std::sort(k_list.begin(), k_list.end());
    std::vector<long> seeds = cfg.seeds;
    std::sort(seeds.begin(), seeds.end());

    const DataSplit split = split_dataset(load_dataset(demos_path), cfg.split_seed);
    const NormStats stats = compute_norm_stats(split.train);
    const std::vector<Trajectory> randoms = reference_randoms(cfg);

    AblateResult result;
    for (const int h : h_list)
        for (const int k : k_list)
            for (const long seed : seeds) result.cells.push_back(run_ablate_cell(cfg, split, randoms, stats, h, k, seed));

    std::string heatmap = "H,K,seed,metric,raw,normalized\n";
    std::string failures = "H,K,seed,error\n";
    for (const AblateCell& cell : result.cells) {
        if (!cell.error.empty()) {
            ++result.failures;
            std::string one_line = cell.error;
            for (char& c : one_line)
                if (c == '\n' || c == ',') c = ' ';
            failures += std::to_string(cell.horizon_h) + "," + std::to_string(cell.codebook_k) + "," +
                        std::to_string(cell.seed) + "," + one_line + "\n";
            continue;
        }
        const auto row = [&](const char* metric, double raw, double normalized) {
            heatmap += std::to_string(cell.horizon_h) + "," + std::to_string(cell.codebook_k) + "," +
                       std::to_string(cell.seed) + "," + metric + "," + fmt_real(raw) + "," + fmt_real(normalized) +
                       "\n";
        };
        row("dtw_a", cell.report.raw.dtw_a, cell.report.normalized.dtw_a);
        row("dtw_s", cell.report.raw.dtw_s, cell.report.normalized.dtw_s);
        row("success", cell.report.success_rate, cell.report.success_rate);
        row("wd_a", cell.report.raw.wd_a, cell.report.normalized.wd_a);
        row("wd_s", cell.report.raw.wd_s, cell.report.normalized.wd_s);
    }

    const std::filesystem::path base = effective_out_root(cfg) / std::filesystem::path("ablate") / cfg.agent;
    std::filesystem::create_directories(base);
    result.heatmap = base / "heatmap.csv";
    atomic_write(result.heatmap, heatmap);
    std::vector<std::string> artifacts = {"heatmap.csv"};
    if (result.failures > 0) {
        atomic_write(base / "failures.csv", failures);
        artifacts.push_back("failures.csv");
    }
    write_manifest(base, "ablate", echo_config(cfg, seeds.front()), artifacts);
    return result;
}

}  // namespace maq
