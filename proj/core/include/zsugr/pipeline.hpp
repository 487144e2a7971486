#pragma once

#include "zsugr/config.hpp"
#include "zsugr/eval.hpp"

#include <filesystem>
#include <utility>
#include <vector>

namespace zsugr::pipeline {

using config::RunConfig;

std::filesystem::path stage_dir(const RunConfig& cfg, int split_index, const std::string& stage);
std::filesystem::path manifest_path(const RunConfig& cfg);

// Loads the dataset manifest a previous `split` stage produced (or the
// user-supplied one); throws MissingArtifactError with the required command.
dataset::Manifest load_manifest_artifact(const RunConfig& cfg);

void run_split(const RunConfig& cfg);
void run_train_gcat(const RunConfig& cfg, int split_index);
void run_extract(const RunConfig& cfg, int split_index);
void run_train_gan(const RunConfig& cfg, int split_index);
void run_synthesize(const RunConfig& cfg, int split_index);
void run_train_classifier(const RunConfig& cfg, int split_index);
eval::EvalReport run_eval(const RunConfig& cfg, int split_index, bool force = false);
void run_visualize(const RunConfig& cfg, int split_index, int n_samples = 6);

struct RunAllResult {
    std::vector<eval::EvalReport> reports;
    eval::AggregateReport aggregate;
};

RunAllResult run_all(const RunConfig& cfg, bool force = false);

} // namespace zsugr::pipeline
