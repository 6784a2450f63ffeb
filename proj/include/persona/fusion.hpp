#pragma once

#include "persona/corpus.hpp"
#include "persona/featselect.hpp"
#include "persona/nn.hpp"
#include "persona/psyencoder.hpp"
#include "persona/textalign.hpp"

#include <optional>
#include <string>
#include <vector>

namespace persona::fusion {

struct AblationConfig {
    bool no_psyencoder = false;
    bool no_text = false;
    bool no_gate = false;
    bool no_alignment = false;
    bool no_selection = false;

    void validate() const; // at least one of the psy/text paths must stay on
};

// Elementwise dense+sigmoid gates, one per modality.
struct FusionParams {
    nn::Parameter gate_psy_w, gate_psy_b;
    nn::Parameter gate_text_w, gate_text_b;
};

// Two-layer binary classifier head for one trait.
struct TraitHead {
    std::string trait;
    nn::Parameter w1, b1, w2, b2;
};

struct ModelConfig {
    psyenc::PsyEncoderConfig psy;
    textalign::TextEncoderConfig text;
    int classifier_hidden = 32;
    // "sigmoid" bounds each gate to (0,1); "linear" leaves the dense output
    // unbounded. "vector" gates elementwise; "scalar" weighs a whole modality
    // with a single learned value.
    std::string gate_activation = "sigmoid";
    std::string gate_form = "vector";
    AblationConfig ablation;

    void validate() const;
};

// The deployable bundle: encoders, gates, per-trait heads, plus the feature
// bookkeeping (selected columns and their training-split statistics).
struct Model {
    corpus::TraitScheme scheme;
    ModelConfig config;
    psyenc::PsyEncoderModel psy;
    textalign::TextEncoder text;
    textalign::AlignmentHead align_head;
    FusionParams fusion;
    std::vector<TraitHead> heads;
    featselect::Standardizer standardizer;
    std::vector<std::string> feature_names; // encoder input columns, in order

    static Model init(const corpus::TraitScheme& scheme, const ModelConfig& config,
                      const corpus::LabeledCorpus& corpus,
                      const std::vector<std::size_t>& train_idx,
                      std::vector<std::string> feature_names,
                      featselect::Standardizer standardizer, Rng& rng);

    // Everything phase 2 updates: psy encoder, gates, trait heads.
    std::vector<nn::Parameter*> phase2_parameters();
    int fused_dim() const;
    std::vector<double> standardized_features(const std::vector<double>& selected_row) const {
        return standardizer.apply(selected_row);
    }
};

// Per-tape binding over the full model. The text path is always bound frozen;
// phase 1 is the only place text parameters train, via textalign directly.
struct ModelBinding {
    const Model* model = nullptr;
    std::optional<psyenc::PsyBinding> psy;
    textalign::TextBinding text;
    nn::Var gate_psy_w, gate_psy_b, gate_text_w, gate_text_b;
    struct HeadVars {
        nn::Var w1, b1, w2, b2;
    };
    std::vector<HeadVars> heads;

    // trainable=true binds psy/fusion/heads as parameters (phase 2);
    // trainable=false binds everything as constants (inference).
    static ModelBinding bind(nn::Tape& tape, Model& model, bool trainable);
    static ModelBinding bind_inference(nn::Tape& tape, const Model& model);

    // Gated fusion of the enabled halves for one document.
    nn::Var fused(nn::Tape& tape, const corpus::Document& doc, const std::vector<double>& w_std,
                  std::vector<nn::Var>* attention = nullptr) const;
    std::vector<nn::Var> trait_logits(nn::Tape& tape, nn::Var fused_vec) const;
};

// Per-trait (p0, p1) softmax pairs.
std::vector<std::pair<double, double>> classify(const Model& model, const corpus::Document& doc,
                                                const std::vector<double>& selected_row);

struct Phase2Config {
    int epochs = 30;
    double lr = 1e-3;
    int batch_size = 32;
    std::uint64_t seed = 0;
    // >= 0 restricts the loss and model selection to one trait so a copy of
    // the model can be trained per trait instead of jointly.
    int only_trait = -1;
};

struct EpochRow {
    int epoch = 0;
    double train_loss = 0.0;
    std::vector<double> val_accuracy; // per trait
    double val_mean = 0.0;
};

struct TrainingLog {
    std::vector<std::string> traits;
    std::vector<EpochRow> rows;
    int best_epoch = -1;
};

struct EvalResult {
    std::vector<std::string> traits;
    std::vector<double> accuracy;
    double mean = 0.0;
};

// Phase 2: joint cross-entropy training of psy encoder, gates, and heads with
// the text path frozen. Restores the epoch with the best mean validation
// accuracy. selected_matrix rows must align with corpus.docs.
TrainingLog train_phase2(Model& model, const corpus::LabeledCorpus& corpus,
                         const corpus::SplitIndices& split,
                         const textfeat::FeatureMatrix& selected_matrix, const Phase2Config& cfg);

EvalResult evaluate(const Model& model, const corpus::LabeledCorpus& corpus,
                    const std::vector<std::size_t>& idx,
                    const textfeat::FeatureMatrix& selected_matrix);

// Checkpoint container: config header, feature bookkeeping, vocabulary, and
// every named parameter tensor.
void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

} // namespace persona::fusion
