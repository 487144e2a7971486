#include "zsugr/pipeline.hpp"
#include "zsugr/version.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

namespace {

struct CommonArgs {
    std::optional<std::string> config_file;
    std::vector<std::string> sets;
    std::optional<std::string> outdir;
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
    std::optional<int> n_seen, n_unseen;
    std::optional<std::string> gate_activation;
    std::vector<std::string> ablate;
    int split_index = -1; // -1: all splits
    bool force = false;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool with_split_index) {
    cmd->add_option("--config", args.config_file, "Run configuration JSON file");
    cmd->add_option("--set", args.sets, "Override a config field (section.key=value)")
        ->take_all();
    cmd->add_option("--outdir", args.outdir, "Output directory (overrides run.outdir)");
    cmd->add_option("--seed", args.seed, "Master seed (overrides run.seed)");
    cmd->add_option("--workers", args.workers, "Worker threads for extraction");
    cmd->add_option("--n-seen", args.n_seen, "Number of seen classes per split");
    cmd->add_option("--n-unseen", args.n_unseen, "Number of unseen classes per split");
    cmd->add_option("--gate-activation", args.gate_activation,
                    "Gate activation: gelu|elu|relu|sigmoid|silu");
    cmd->add_option("--ablate", args.ablate,
                    "Ablation switch: decoder=off (encoder only) or gcat=off (raw backbone)")
        ->take_all();
    if (with_split_index)
        cmd->add_option("--split-index", args.split_index, "Operate on one split (default: all)");
}

zsugr::config::RunConfig resolve_config(const CommonArgs& args) {
    std::vector<std::string> sets = args.sets;
    if (args.outdir) sets.push_back("run.outdir=" + *args.outdir);
    if (args.seed) sets.push_back("run.seed=" + std::to_string(*args.seed));
    if (args.workers) sets.push_back("run.workers=" + std::to_string(*args.workers));
    if (args.n_seen) sets.push_back("split.n_seen=" + std::to_string(*args.n_seen));
    if (args.n_unseen) sets.push_back("split.n_unseen=" + std::to_string(*args.n_unseen));
    if (args.gate_activation) sets.push_back("gcat.gate_activation=" + *args.gate_activation);
    for (const auto& a : args.ablate) {
        if (a == "decoder=off") {
            sets.push_back("gcat.variant=encoder_only");
        } else if (a == "gcat=off") {
            sets.push_back("gcat.variant=backbone_only");
        } else if (a == "fusion=ungated") {
            sets.push_back("gcat.gated_fusion=false");
        } else {
            throw zsugr::ConfigError("unknown --ablate switch: " + a +
                                     " (expected decoder=off, gcat=off or fusion=ungated)");
        }
    }
    std::optional<std::filesystem::path> file;
    if (args.config_file) file = *args.config_file;
    return zsugr::config::load_run_config(file, sets);
}

std::vector<int> split_indices(const zsugr::config::RunConfig& cfg, const CommonArgs& args) {
    if (args.split_index >= 0) {
        if (args.split_index >= cfg.split.n_splits)
            throw zsugr::ConfigError("split-index " + std::to_string(args.split_index) +
                                     " out of range (n_splits = " +
                                     std::to_string(cfg.split.n_splits) + ")");
        return {args.split_index};
    }
    std::vector<int> all(static_cast<std::size_t>(cfg.split.n_splits));
    for (int i = 0; i < cfg.split.n_splits; ++i) all[static_cast<std::size_t>(i)] = i;
    return all;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Zero-shot underwater gesture recognition pipeline"};
    app.set_version_flag("--version", zsugr::kLibraryVersion);
    app.require_subcommand(1);

    struct Cmd {
        CLI::App* sub;
        CommonArgs args;
    };
    std::map<std::string, Cmd> cmds;
    auto make_cmd = [&](const std::string& name, const std::string& desc, bool with_index) {
        auto* sub = app.add_subcommand(name, desc);
        cmds[name].sub = sub;
        add_common(sub, cmds[name].args, with_index);
        return sub;
    };

    make_cmd("split", "Generate seen/unseen splits and the dataset manifest", false);
    make_cmd("train-gcat", "Stage 1: train the gated cross-attention transformer", true);
    make_cmd("extract", "Extract gesture features for all rosters", true);
    make_cmd("train-gan", "Stage 2: train the conditional WGAN on seen features", true);
    make_cmd("synthesize", "Generate unseen-class features from the trained GAN", true);
    make_cmd("train-classifier", "Train the final softmax classifier", true);
    auto* eval_cmd = make_cmd("eval", "Score CZSL/GZSL metrics and export reports", true);
    eval_cmd->add_flag("--force", cmds["eval"].args.force,
                       "Accept inputs built under a different config hash");
    auto* vis_cmd = make_cmd("visualize", "Export decoder attention maps", true);
    int vis_samples = 6;
    vis_cmd->add_option("--samples", vis_samples, "Number of samples to visualize");
    auto* runall_cmd = make_cmd("run-all", "Run the full pipeline over every split", false);
    runall_cmd->add_flag("--force", cmds["run-all"].args.force,
                         "Accept inputs built under a different config hash");

    CLI11_PARSE(app, argc, argv);

    const std::string name = app.get_subcommands().front()->get_name();
    const CommonArgs& args = cmds[name].args;
    try {
        auto cfg = resolve_config(args);
        if (name == "split") {
            zsugr::pipeline::run_split(cfg);
            std::printf("wrote %d split files under %s\n", cfg.split.n_splits,
                        cfg.outdir.string().c_str());
        } else if (name == "run-all") {
            auto result = zsugr::pipeline::run_all(cfg, args.force);
            std::printf("%s", zsugr::eval::render_table(result.reports, result.aggregate).c_str());
        } else {
            for (int i : split_indices(cfg, args)) {
                if (name == "train-gcat") {
                    zsugr::pipeline::run_train_gcat(cfg, i);
                } else if (name == "extract") {
                    zsugr::pipeline::run_extract(cfg, i);
                } else if (name == "train-gan") {
                    zsugr::pipeline::run_train_gan(cfg, i);
                } else if (name == "synthesize") {
                    zsugr::pipeline::run_synthesize(cfg, i);
                } else if (name == "train-classifier") {
                    zsugr::pipeline::run_train_classifier(cfg, i);
                } else if (name == "eval") {
                    auto report = zsugr::pipeline::run_eval(cfg, i, args.force);
                    std::printf("split %d: U_czsl=%.2f S_gzsl=%.2f U_gzsl=%.2f H=%.2f\n", i,
                                report.u_czsl, report.s_gzsl, report.u_gzsl, report.h);
                } else if (name == "visualize") {
                    zsugr::pipeline::run_visualize(cfg, i, vis_samples);
                }
            }
        }
    } catch (const zsugr::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const zsugr::MissingArtifactError& e) {
        std::fprintf(stderr, "missing artifact: %s\n", e.what());
        return 3;
    } catch (const zsugr::NumericalError& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
