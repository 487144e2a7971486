#include "zsugr/pipeline.hpp"

#include "zsugr/image_io.hpp"
#include "zsugr/rng.hpp"
#include "zsugr/tensor_io.hpp"
#include "zsugr/version.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace zsugr::pipeline {

using json = nlohmann::json;

namespace {

std::string file_hash(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw MissingArtifactError("missing artifact: " + path.string());
    std::ostringstream buf;
    buf << is.rdbuf();
    std::ostringstream os;
    os << std::hex << fnv1a64(buf.str());
    return os.str();
}

void write_stage_manifest(const std::filesystem::path& dir, const std::string& stage,
                          const RunConfig& cfg, const std::map<std::string, std::string>& inputs) {
    json j;
    j["stage"] = stage;
    j["library_version"] = kLibraryVersion;
    j["config_hash"] = cfg.hash;
    j["inputs"] = inputs;
    std::filesystem::create_directories(dir);
    std::ofstream os(dir / "stage.json", std::ios::trunc);
    os << j.dump(2) << "\n";
}

// A stage may be skipped when its manifest matches the current config and
// input hashes; that is what lets ablation sweeps share cached artifacts.
bool stage_is_current(const std::filesystem::path& dir, const std::string& stage,
                      const RunConfig& cfg, const std::map<std::string, std::string>& inputs,
                      const std::vector<std::filesystem::path>& outputs) {
    std::ifstream is(dir / "stage.json");
    if (!is) return false;
    json j = json::parse(is, nullptr, false);
    if (j.is_discarded()) return false;
    if (j.value("stage", "") != stage) return false;
    if (j.value("config_hash", "") != cfg.hash) return false;
    if (j.value("inputs", json::object()) != json(inputs)) return false;
    for (const auto& out : outputs)
        if (!std::filesystem::exists(out)) return false;
    return true;
}

json read_stage_manifest(const std::filesystem::path& dir, const std::string& needed_by) {
    std::ifstream is(dir / "stage.json");
    if (!is)
        throw MissingArtifactError("missing artifact " + (dir / "stage.json").string() +
                                   "; run `" + needed_by + "` first");
    return json::parse(is);
}

struct SampleIndex {
    std::map<std::string, const dataset::SampleRecord*> by_id;
    explicit SampleIndex(const dataset::Manifest& m) {
        for (const auto& r : m.records) by_id[r.sample_id] = &r;
    }
    std::vector<dataset::SampleRecord> roster(const std::vector<std::string>& ids) const {
        std::vector<dataset::SampleRecord> out;
        out.reserve(ids.size());
        for (const auto& id : ids) {
            auto it = by_id.find(id);
            if (it == by_id.end())
                throw MissingArtifactError("split references unknown sample id " + id);
            out.push_back(*it->second);
        }
        return out;
    }
};

dataset::SplitSpec load_split_artifact(const RunConfig& cfg, int i) {
    auto path = stage_dir(cfg, i, "split") / "split.json";
    if (!std::filesystem::exists(path))
        throw MissingArtifactError("missing artifact " + path.string() + "; run `split` first");
    return dataset::load_split(path);
}

std::map<int, RowVec> semantics_for(const providers::Provider& provider,
                                    const dataset::Manifest& manifest,
                                    const std::vector<int>& class_ids) {
    std::map<int, RowVec> out;
    for (int c : class_ids) {
        const auto& name = manifest.classes.at(static_cast<std::size_t>(c)).name;
        out[c] = provider.class_semantics(name).data;
    }
    return out;
}

} // namespace

std::filesystem::path stage_dir(const RunConfig& cfg, int split_index, const std::string& stage) {
    return cfg.outdir / std::to_string(split_index) / stage;
}

std::filesystem::path manifest_path(const RunConfig& cfg) {
    return cfg.manifest_path.empty() ? cfg.outdir / "manifest.csv"
                                     : std::filesystem::path(cfg.manifest_path);
}

dataset::Manifest load_manifest_artifact(const RunConfig& cfg) {
    auto path = manifest_path(cfg);
    if (!std::filesystem::exists(path))
        throw MissingArtifactError("missing artifact " + path.string() + "; run `split` first");
    return dataset::load_manifest(path);
}

void run_split(const RunConfig& cfg) {
    if (cfg.manifest_path.empty()) {
        // Synthetic manifest: uniform class sizes at the configured scale.
        std::vector<int> counts(dataset::caddy_class_names().size(), cfg.samples_per_class);
        auto manifest = dataset::make_synthetic_manifest(counts);
        dataset::write_manifest(manifest_path(cfg), manifest);
    }
    auto manifest = load_manifest_artifact(cfg);
    auto outcome = dataset::generate_splits(manifest, cfg.split);
    for (const auto& w : outcome.warnings) std::fprintf(stderr, "[split] warning: %s\n", w.c_str());
    const auto input_hash = file_hash(manifest_path(cfg));
    for (const auto& split : outcome.splits) {
        auto violations = dataset::validate_split(split, manifest);
        if (!violations.empty())
            throw std::logic_error("generated split failed validation: " + violations.front());
        auto dir = stage_dir(cfg, split.split_index, "split");
        dataset::save_split(dir / "split.json", split);
        write_stage_manifest(dir, "split", cfg, {{"manifest", input_hash}});
    }
}

void run_train_gcat(const RunConfig& cfg, int i) {
    auto manifest = load_manifest_artifact(cfg);
    auto split = load_split_artifact(cfg, i);
    auto dir = stage_dir(cfg, i, "gcat");
    std::map<std::string, std::string> inputs{
        {"manifest", file_hash(manifest_path(cfg))},
        {"split", file_hash(stage_dir(cfg, i, "split") / "split.json")}};
    if (stage_is_current(dir, "train-gcat", cfg, inputs, {dir / "checkpoint.zt"})) return;

    auto provider = providers::make_provider(cfg.provider);
    gcat::GcatConfig mcfg = cfg.gcat_cfg;
    mcfg.seed = cfg.gcat_seed(i);
    gcat::Gcat model(mcfg);

    json log;
    if (mcfg.variant != gcat::Variant::BackboneOnly) {
        std::vector<providers::SemanticVector> sems;
        for (int c : split.seen_classes)
            sems.push_back(provider->class_semantics(
                manifest.classes.at(static_cast<std::size_t>(c)).name));
        auto head = gcat::make_stage1_head(sems, split.seen_classes, model.feature_dim());
        gcat::Stage1Config scfg = cfg.stage1;
        scfg.seed = cfg.stage1_seed(i);
        gcat::Stage1Result result;
        try {
            result = gcat::stage1_train(model, head, split, manifest, *provider, scfg);
        } catch (const std::runtime_error& e) {
            throw NumericalError(e.what());
        }
        log["epoch_losses"] = result.epoch_losses;
        log["final_epoch_loss"] = result.final_epoch_loss;
        log["train_top1"] = result.train_top1;
    } else {
        log["note"] = "backbone_only variant has no trainable stage-1 parameters";
    }
    model.save(dir / "checkpoint.zt", log.dump());
    {
        std::ofstream os(dir / "train_log.json", std::ios::trunc);
        os << log.dump(2) << "\n";
    }
    write_stage_manifest(dir, "train-gcat", cfg, inputs);
}

void run_extract(const RunConfig& cfg, int i) {
    auto manifest = load_manifest_artifact(cfg);
    auto split = load_split_artifact(cfg, i);
    auto gcat_dir = stage_dir(cfg, i, "gcat");
    if (!std::filesystem::exists(gcat_dir / "checkpoint.zt"))
        throw MissingArtifactError("missing artifact " + (gcat_dir / "checkpoint.zt").string() +
                                   "; run `train-gcat` first");
    auto dir = stage_dir(cfg, i, "features");
    std::map<std::string, std::string> inputs{
        {"split", file_hash(stage_dir(cfg, i, "split") / "split.json")},
        {"gcat", file_hash(gcat_dir / "checkpoint.zt")}};
    const std::vector<std::pair<const char*, const std::vector<std::string>*>> rosters = {
        {"seen_train", &split.seen_train_ids},
        {"seen_test", &split.seen_test_ids},
        {"unseen_test", &split.unseen_test_ids}};
    std::vector<std::filesystem::path> outputs;
    for (const auto& [name, ids] : rosters) outputs.push_back(dir / name / "features.zt");
    if (stage_is_current(dir, "extract", cfg, inputs, outputs)) return;

    auto model = gcat::Gcat::load(gcat_dir / "checkpoint.zt");
    auto provider = providers::make_provider(cfg.provider);
    SampleIndex index(manifest);
    for (const auto& [name, ids] : rosters) {
        auto records = index.roster(*ids);
        auto features = gcat::extract_features(model, records, *provider, cfg.workers);
        providers::FeatureStoreMeta meta;
        meta.dim = model.feature_dim();
        meta.provider_fingerprint = provider->fingerprint();
        meta.extractor_fingerprint = model.fingerprint();
        meta.synthetic = false;
        providers::write_feature_store(dir / name, features, meta);
    }
    write_stage_manifest(dir, "extract", cfg, inputs);
}

void run_train_gan(const RunConfig& cfg, int i) {
    auto manifest = load_manifest_artifact(cfg);
    auto split = load_split_artifact(cfg, i);
    auto feat_dir = stage_dir(cfg, i, "features");
    if (!providers::feature_store_exists(feat_dir / "seen_train"))
        throw MissingArtifactError("missing artifact " +
                                   (feat_dir / "seen_train/features.zt").string() +
                                   "; run `extract` first");
    auto dir = stage_dir(cfg, i, "gan");
    std::map<std::string, std::string> inputs{
        {"seen_train_features", file_hash(feat_dir / "seen_train" / "features.zt")}};
    if (stage_is_current(dir, "train-gan", cfg, inputs, {dir / "checkpoint.zt"})) return;

    auto [features, meta] = providers::read_feature_store(feat_dir / "seen_train");
    auto provider = providers::make_provider(cfg.provider);
    auto semantics = semantics_for(*provider, manifest, split.seen_classes);

    featgen::GanConfig gcfg = cfg.gan;
    gcfg.seed = cfg.gan_seed(i);
    auto bundle = featgen::make_gan(gcfg, meta.dim, cfg.provider.d_sem);
    featgen::GanTrainLog log;
    try {
        log = featgen::train_gan(bundle, features, semantics);
    } catch (const std::runtime_error& e) {
        throw NumericalError(e.what());
    }
    json extra;
    extra["critic_losses"] = log.critic_losses;
    extra["generator_losses"] = log.generator_losses;
    bundle.save(dir / "checkpoint.zt", "{}");
    {
        std::ofstream os(dir / "train_log.json", std::ios::trunc);
        os << extra.dump(2) << "\n";
    }
    write_stage_manifest(dir, "train-gan", cfg, inputs);
}

void run_synthesize(const RunConfig& cfg, int i) {
    auto manifest = load_manifest_artifact(cfg);
    auto split = load_split_artifact(cfg, i);
    auto gan_path = stage_dir(cfg, i, "gan") / "checkpoint.zt";
    if (!std::filesystem::exists(gan_path))
        throw MissingArtifactError("missing artifact " + gan_path.string() +
                                   "; run `train-gan` first");
    auto dir = stage_dir(cfg, i, "synthetic");
    std::map<std::string, std::string> inputs{{"gan", file_hash(gan_path)}};
    if (stage_is_current(dir, "synthesize", cfg, inputs, {dir / "features.zt"})) return;

    auto bundle = featgen::GanBundle::load(gan_path);
    auto provider = providers::make_provider(cfg.provider);
    auto semantics = semantics_for(*provider, manifest, split.unseen_classes);
    auto features = featgen::synthesize(bundle, semantics, split.unseen_classes,
                                        cfg.gan.n_syn_per_class, cfg.synth_seed(i));
    providers::FeatureStoreMeta meta;
    meta.dim = bundle.feature_dim;
    meta.provider_fingerprint = provider->fingerprint();
    meta.extractor_fingerprint = "gan:" + std::to_string(cfg.gan_seed(i));
    meta.synthetic = true;
    providers::write_feature_store(dir, features, meta);
    write_stage_manifest(dir, "synthesize", cfg, inputs);
}

void run_train_classifier(const RunConfig& cfg, int i) {
    auto split = load_split_artifact(cfg, i);
    auto feat_dir = stage_dir(cfg, i, "features");
    auto syn_dir = stage_dir(cfg, i, "synthetic");
    if (!providers::feature_store_exists(feat_dir / "seen_train"))
        throw MissingArtifactError("missing artifact " +
                                   (feat_dir / "seen_train/features.zt").string() +
                                   "; run `extract` first");
    if (!providers::feature_store_exists(syn_dir))
        throw MissingArtifactError("missing artifact " + (syn_dir / "features.zt").string() +
                                   "; run `synthesize` first");
    auto dir = stage_dir(cfg, i, "classifier");
    std::map<std::string, std::string> inputs{
        {"seen_train_features", file_hash(feat_dir / "seen_train" / "features.zt")},
        {"synthetic_features", file_hash(syn_dir / "features.zt")}};
    std::vector<std::filesystem::path> outputs{dir / "gzsl.zt"};
    if (cfg.czsl_head == "dedicated") outputs.push_back(dir / "czsl.zt");
    if (stage_is_current(dir, "train-classifier", cfg, inputs, outputs)) return;

    auto [real_seen, real_meta] = providers::read_feature_store(feat_dir / "seen_train");
    auto [synthetic, syn_meta] = providers::read_feature_store(syn_dir);

    zsl::ClassifierConfig ccfg = cfg.classifier;
    ccfg.seed = cfg.classifier_seed(i);
    auto gzsl_set = zsl::build_training_set(real_seen, synthetic, zsl::Mode::Gzsl,
                                            split.seen_classes, split.unseen_classes);
    zsl::train_classifier(gzsl_set, ccfg).save(dir / "gzsl.zt");
    if (cfg.czsl_head == "dedicated") {
        auto czsl_set = zsl::build_training_set(real_seen, synthetic, zsl::Mode::Czsl,
                                                split.seen_classes, split.unseen_classes);
        zsl::train_classifier(czsl_set, ccfg).save(dir / "czsl.zt");
    }
    write_stage_manifest(dir, "train-classifier", cfg, inputs);
}

eval::EvalReport run_eval(const RunConfig& cfg, int i, bool force) {
    auto manifest = load_manifest_artifact(cfg);
    auto split = load_split_artifact(cfg, i);
    auto feat_dir = stage_dir(cfg, i, "features");
    auto cls_dir = stage_dir(cfg, i, "classifier");
    for (const char* roster : {"seen_test", "unseen_test"})
        if (!providers::feature_store_exists(feat_dir / roster))
            throw MissingArtifactError("missing artifact " +
                                       (feat_dir / roster / "features.zt").string() +
                                       "; run `extract` first");
    if (!std::filesystem::exists(cls_dir / "gzsl.zt"))
        throw MissingArtifactError("missing artifact " + (cls_dir / "gzsl.zt").string() +
                                   "; run `train-classifier` first");

    // Refuse mixed-provenance inputs: every upstream stage must have been
    // produced under this exact configuration.
    if (!force) {
        for (const char* stage : {"features", "synthetic", "classifier", "gcat", "gan"}) {
            auto m = read_stage_manifest(stage_dir(cfg, i, stage), "run-all");
            if (m.value("config_hash", "") != cfg.hash)
                throw ConfigError("stage '" + std::string(stage) +
                                  "' was built under config hash " +
                                  m.value("config_hash", "?") + ", current is " + cfg.hash +
                                  "; rerun upstream stages or pass --force");
        }
    }

    auto [seen_test, sm] = providers::read_feature_store(feat_dir / "seen_test");
    auto [unseen_test, um] = providers::read_feature_store(feat_dir / "unseen_test");
    auto gzsl_weights = zsl::ClassifierWeights::load(cls_dir / "gzsl.zt");

    std::vector<int> all_classes = split.seen_classes;
    all_classes.insert(all_classes.end(), split.unseen_classes.begin(),
                       split.unseen_classes.end());
    std::sort(all_classes.begin(), all_classes.end());

    std::vector<zsl::PredictionResult> czsl_pred;
    if (cfg.czsl_head == "dedicated") {
        auto czsl_weights = zsl::ClassifierWeights::load(cls_dir / "czsl.zt");
        czsl_pred = zsl::predict(czsl_weights, unseen_test, split.unseen_classes);
    } else {
        czsl_pred = zsl::predict(gzsl_weights, unseen_test, split.unseen_classes);
    }
    auto gzsl_seen_pred = zsl::predict(gzsl_weights, seen_test, all_classes);
    auto gzsl_unseen_pred = zsl::predict(gzsl_weights, unseen_test, all_classes);

    auto report = eval::score_split(i, czsl_pred, gzsl_seen_pred, gzsl_unseen_pred,
                                    split.seen_classes, split.unseen_classes);

    auto dir = stage_dir(cfg, i, "eval");
    std::filesystem::create_directories(dir);
    zsl::write_predictions_csv(dir / "predictions_czsl.csv", czsl_pred);
    zsl::write_predictions_csv(dir / "predictions_gzsl_seen.csv", gzsl_seen_pred);
    zsl::write_predictions_csv(dir / "predictions_gzsl_unseen.csv", gzsl_unseen_pred);
    {
        std::ofstream os(dir / "report.json", std::ios::trunc);
        os << eval::report_to_json(report) << "\n";
    }
    std::vector<zsl::PredictionResult> gzsl_all = gzsl_seen_pred;
    gzsl_all.insert(gzsl_all.end(), gzsl_unseen_pred.begin(), gzsl_unseen_pred.end());
    auto cm = eval::confusion(gzsl_all, all_classes);
    {
        std::ofstream os(dir / "confusion_gzsl.csv", std::ios::trunc);
        os << eval::confusion_to_csv(cm);
    }
    write_heatmap_ppm(dir / "confusion_gzsl.ppm", cm.counts.cast<double>());
    {
        auto agg = eval::aggregate_splits({report});
        std::ofstream os(dir / "table.txt", std::ios::trunc);
        os << eval::render_table({report}, agg);
    }

    // Supervised-baseline probe: nearest semantic by cosine, when the feature
    // space is dimension-compatible with the semantics.
    if (sm.dim == cfg.provider.d_sem) {
        auto provider = providers::make_provider(cfg.provider);
        auto semantics = semantics_for(*provider, manifest, all_classes);
        auto base_czsl = eval::baseline_cosine_predict(unseen_test, semantics,
                                                       split.unseen_classes);
        auto base_seen = eval::baseline_cosine_predict(seen_test, semantics, all_classes);
        auto base_unseen = eval::baseline_cosine_predict(unseen_test, semantics, all_classes);
        auto base_report = eval::score_split(i, base_czsl, base_seen, base_unseen,
                                             split.seen_classes, split.unseen_classes);
        std::ofstream os(dir / "baseline_cosine.json", std::ios::trunc);
        os << eval::report_to_json(base_report) << "\n";
    }

    write_stage_manifest(dir, "eval", cfg,
                         {{"seen_test_features", file_hash(feat_dir / "seen_test" / "features.zt")},
                          {"unseen_test_features",
                           file_hash(feat_dir / "unseen_test" / "features.zt")},
                          {"classifier", file_hash(cls_dir / "gzsl.zt")}});
    return report;
}

void run_visualize(const RunConfig& cfg, int i, int n_samples) {
    auto manifest = load_manifest_artifact(cfg);
    auto split = load_split_artifact(cfg, i);
    auto gcat_path = stage_dir(cfg, i, "gcat") / "checkpoint.zt";
    if (!std::filesystem::exists(gcat_path))
        throw MissingArtifactError("missing artifact " + gcat_path.string() +
                                   "; run `train-gcat` first");
    auto model = gcat::Gcat::load(gcat_path);
    auto provider = providers::make_provider(cfg.provider);
    SampleIndex index(manifest);

    // One sample per unseen class, in class order, up to the budget.
    std::vector<dataset::SampleRecord> picks;
    for (int c : split.unseen_classes) {
        for (const auto& id : split.unseen_test_ids) {
            const auto* r = index.by_id.at(id);
            if (r->class_id == c) {
                picks.push_back(*r);
                break;
            }
        }
        if (static_cast<int>(picks.size()) >= n_samples) break;
    }

    auto dir = stage_dir(cfg, i, "attention");
    for (const auto& record : picks) {
        auto maps = gcat::attention_maps(model, record, *provider);
        TensorArchive raw;
        raw.kind = "attention";
        json meta;
        meta["version"] = 1;
        meta["sample_id"] = record.sample_id;
        meta["blocks"] = maps.per_block.size();
        raw.meta_json = meta.dump();
        for (std::size_t b = 0; b < maps.per_block.size(); ++b) {
            write_pgm(dir / record.sample_id / ("block" + std::to_string(b) + ".pgm"),
                      maps.per_block[b]);
            raw.tensors.push_back({"block" + std::to_string(b) + ".map", maps.per_block[b]});
            for (std::size_t h = 0; h < maps.raw[b].size(); ++h)
                raw.tensors.push_back({"block" + std::to_string(b) + ".head" + std::to_string(h),
                                       maps.raw[b][h]});
        }
        write_archive(dir / record.sample_id / "attention.zt", raw);
    }
    write_stage_manifest(dir, "visualize", cfg, {{"gcat", file_hash(gcat_path)}});
}

RunAllResult run_all(const RunConfig& cfg, bool force) {
    run_split(cfg);
    RunAllResult result;
    for (int i = 0; i < cfg.split.n_splits; ++i) {
        run_train_gcat(cfg, i);
        run_extract(cfg, i);
        run_train_gan(cfg, i);
        run_synthesize(cfg, i);
        run_train_classifier(cfg, i);
        result.reports.push_back(run_eval(cfg, i, force));
    }
    result.aggregate = eval::aggregate_splits(result.reports);
    auto dir = cfg.outdir / "aggregate";
    std::filesystem::create_directories(dir);
    {
        std::ofstream os(dir / "report.json", std::ios::trunc);
        os << eval::aggregate_to_json(result.aggregate) << "\n";
    }
    {
        std::ofstream os(dir / "table.txt", std::ios::trunc);
        os << eval::render_table(result.reports, result.aggregate);
    }
    return result;
}

} // namespace zsugr::pipeline
