#pragma once

#include "persona/analysis.hpp"
#include "persona/corpus.hpp"
#include "persona/fusion.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace persona::pipeline {

// Fully resolved run configuration; the on-disk format is a versioned JSON
// document (see README). Every run writes its expanded form back next to its
// outputs so reruns are reproducible from the snapshot alone.
struct RunConfig {
    // paths
    std::string corpus_path;
    std::string catalog_path;
    std::string lexicon_dir;
    std::string out_dir = "out";
    // Directory holding extract/select artifacts when it differs from
    // out_dir (ablation and sweep sub-runs share the parent's extraction).
    std::string stage_in_dir;

    corpus::TraitScheme scheme = corpus::TraitScheme::big_five();

    double selection_threshold = 0.2;
    psyenc::PsyEncoderConfig psy;       // feature_count resolved at align time
    textalign::TextEncoderConfig text;

    int phase1_epochs = 30;
    int phase2_epochs = 30;
    double lr = 1e-3;
    int batch_size = 32;
    std::uint64_t seed = 0;
    bool seed_set = false;              // seed is mandatory
    double train_frac = 0.7, val_frac = 0.2, test_frac = 0.1;
    std::string stratify_by;
    int classifier_hidden = 32;
    // Train one shared backbone with all trait heads (default) or one full
    // model copy per trait.
    bool per_trait_models = false;

    std::string gate_activation = "sigmoid"; // "sigmoid" | "linear"
    std::string gate_form = "vector";        // "vector" | "scalar"

    fusion::AblationConfig ablation;

    std::size_t synth_n_docs = 500;
    double synth_signal = 0.9;

    std::vector<int> sweep_layers = {2, 4, 6, 8, 10, 12};
    int threads = 1;

    static RunConfig from_file(const std::string& path);
    static RunConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;

    std::string out_path(const std::string& name) const;
    std::string input_path(const std::string& name) const; // stage_in_dir fallback
};

// Stage bodies; they throw DataError/ConfigError on failure.
void stage_synth(const RunConfig& cfg);
void stage_extract(const RunConfig& cfg);
void stage_select(const RunConfig& cfg);
void stage_align(const RunConfig& cfg);
void stage_train(const RunConfig& cfg);
fusion::EvalResult stage_eval(const RunConfig& cfg);
analysis::ImportanceReport stage_importance(const RunConfig& cfg,
                                            const std::string& cross_with = "");
void stage_ablate(const RunConfig& cfg);
void stage_sweep(const RunConfig& cfg);

// Writes the resolved-config snapshot, dispatches the subcommand, and maps
// exceptions to exit codes: 0 ok, 1 usage/config, 2 data/missing artifact.
int run_command(const std::string& command, const RunConfig& cfg,
                const std::string& cross_with = "");

// Deterministic catalog + lexicons for a synthetic corpus: one signal-ratio
// feature per trait plus generic lexical statistics.
textfeat::FeatureCatalog synthetic_catalog(const corpus::TraitScheme& scheme);
void write_synthetic_lexicons(const corpus::TraitScheme& scheme, const std::string& dir);

} // namespace persona::pipeline
