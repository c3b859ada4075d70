#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "maq/pipeline.hpp"

namespace {

struct CommonArgs {
    std::string config_file;
    std::string preset;
    std::string out;
    std::vector<std::string> overrides;  // key=value pairs from --set
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_file, "key = value config file");
    cmd->add_option("--preset", args.preset, "named preset (paper)");
    cmd->add_option("--out", args.out, "output root (default $MAQ_LAB_OUT or runs/)");
    cmd->add_option("--set", args.overrides, "extra key=value override, repeatable");
}

maq::RunConfig layered_config(const CommonArgs& args) {
    maq::RunConfig cfg;
    if (!args.preset.empty()) maq::apply_preset(cfg, args.preset);
    if (!args.config_file.empty()) maq::apply_config_file(cfg, args.config_file);
    for (const std::string& kv : args.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw maq::ConfigError("--set expects key=value, got '" + kv + "'");
        maq::apply_kv(cfg, std::string(maq::trim(kv.substr(0, eq))), std::string(maq::trim(kv.substr(eq + 1))));
    }
    if (!args.out.empty()) cfg.out_root = args.out;
    return cfg;
}

std::vector<int> parse_int_list(const std::string& raw, const char* what) {
    std::vector<int> out;
    std::string token;
    std::istringstream is(raw);
    while (std::getline(is, token, ',')) {
        const std::string t(maq::trim(token));
        if (t.empty()) continue;
        out.push_back(static_cast<int>(maq::parse_int(t)));
    }
    if (out.empty()) throw maq::ConfigError(std::string(what) + " list is empty");
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"macro-action quantization lab"};
    app.require_subcommand(1);

    CommonArgs gen_args, vq_args, agent_args, eval_args, ablate_args;

    auto* gen = app.add_subcommand("gen-demos", "generate scripted demonstrations");
    int gen_count = 25;
    gen->add_option("--count", gen_count, "number of demos (seeds 1..count)");
    add_common(gen, gen_args);

    auto* vq = app.add_subcommand("train-vqvae", "train the macro codebook on the demo train split");
    std::string vq_demos;
    vq->add_option("--demos", vq_demos, "MAQTRAJ dataset file")->required();
    int vq_h = 0, vq_k = 0;
    long vq_seed = 0;
    vq->add_option("--H", vq_h, "macro length override");
    vq->add_option("--K", vq_k, "codebook size override");
    vq->add_option("--seed", vq_seed, "single training seed override");
    add_common(vq, vq_args);

    auto* agent = app.add_subcommand("train-agent", "train an agent (maq_dsac, maq_symmetric, grid_dsac, bc)");
    std::string agent_kind, agent_vqvae, agent_demos;
    long agent_seed = 0;
    agent->add_option("--agent", agent_kind, "agent kind");
    agent->add_option("--vqvae", agent_vqvae, "VQVAE checkpoint file, or <H>x<K> directory with seed<k>/model.maqvq");
    agent->add_option("--demos", agent_demos, "MAQTRAJ dataset (bc and maq_symmetric)");
    agent->add_option("--seed", agent_seed, "single training seed override");
    add_common(agent, agent_args);

    auto* eval = app.add_subcommand("evaluate", "roll policies and score against held-out humans");
    std::vector<std::string> eval_policies;
    std::string eval_demos, eval_vqvae;
    eval->add_option("--policy", eval_policies, "MAQPOL checkpoint(s)")->required()->expected(-1);
    eval->add_option("--demos", eval_demos, "MAQTRAJ dataset file")->required();
    eval->add_option("--vqvae", eval_vqvae, "VQVAE checkpoint file or directory (MAQ policies)");
    add_common(eval, eval_args);

    auto* ablate = app.add_subcommand("ablate", "factorial H x K x seed sweep with heatmap CSV");
    std::string ablate_h = "1,2,4,8", ablate_k = "8,16,32", ablate_seeds, ablate_demos;
    ablate->add_option("--H-list", ablate_h, "comma-separated macro lengths");
    ablate->add_option("--K-list", ablate_k, "comma-separated codebook sizes");
    ablate->add_option("--seeds", ablate_seeds, "comma-separated seeds override");
    ablate->add_option("--demos", ablate_demos, "MAQTRAJ dataset file")->required();
    add_common(ablate, ablate_args);

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            maq::RunConfig cfg = layered_config(gen_args);
            cfg.demo_count = gen_count;
            const auto file = maq::cmd_gen_demos(cfg, maq::effective_out_root(cfg) / "gen-demos");
            std::printf("wrote %s (%d demos)\n", file.string().c_str(), cfg.demo_count);
        } else if (vq->parsed()) {
            maq::RunConfig cfg = layered_config(vq_args);
            if (vq_h > 0) cfg.horizon_h = vq_h;
            if (vq_k > 0) cfg.codebook_k = vq_k;
            if (vq_seed != 0) cfg.seeds = {vq_seed};
            const auto files = maq::cmd_train_vqvae(cfg, vq_demos);
            for (const auto& f : files) std::printf("wrote %s\n", f.string().c_str());
        } else if (agent->parsed()) {
            maq::RunConfig cfg = layered_config(agent_args);
            if (!agent_kind.empty()) cfg.agent = agent_kind;
            if (agent_seed != 0) cfg.seeds = {agent_seed};
            const auto files = maq::cmd_train_agent(cfg, agent_vqvae, agent_demos);
            for (const auto& f : files) std::printf("wrote %s\n", f.string().c_str());
        } else if (eval->parsed()) {
            maq::RunConfig cfg = layered_config(eval_args);
            std::vector<std::filesystem::path> paths(eval_policies.begin(), eval_policies.end());
            const auto csv = maq::cmd_evaluate(cfg, paths, eval_demos, eval_vqvae);
            std::printf("wrote %s\n", csv.string().c_str());
        } else if (ablate->parsed()) {
            maq::RunConfig cfg = layered_config(ablate_args);
            if (!ablate_seeds.empty()) cfg.seeds = maq::detail::parse_seed_list(ablate_seeds);
            const auto result =
                maq::cmd_ablate(cfg, parse_int_list(ablate_h, "H"), parse_int_list(ablate_k, "K"), ablate_demos);
            long reused = 0;
            for (const auto& cell : result.cells) reused += cell.reused ? 1 : 0;
            std::printf("wrote %s (%zu cells, %ld reused, %ld failed)\n", result.heatmap.string().c_str(),
                        result.cells.size(), reused, result.failures);
            if (result.failures > 0) {
                std::fprintf(stderr, "ablate: %ld cell(s) failed; see failures.csv\n", result.failures);
                return 1;
            }
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
