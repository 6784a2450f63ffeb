#pragma once

#include "persona/nn.hpp"
#include "persona/rng.hpp"

#include <vector>

namespace persona::psyenc {

struct PsyEncoderConfig {
    int n_layers = 8;
    int n_heads = 4;
    int d_model = 64;
    int d_ff = 256;
    int feature_count = 0; // set from the selection report
    // "mean" pools token rows uniformly; "query" pools with softmax weights
    // from a learned query vector. Both are permutation invariant.
    std::string pooling = "mean";

    void validate() const;
};

struct EncoderLayerParams {
    nn::MhaParams mha;
    nn::Parameter ln1_gain, ln1_bias, ln2_gain, ln2_bias;
    nn::Parameter ff_w1, ff_b1, ff_w2, ff_b2;
};

// Position-free attention encoder over feature tokens. Feature order carries
// no positional signal: token_i = w_i * value_proj + feature_embed[i], and the
// stack is permutation-equivariant with mean pooling on top.
struct PsyEncoderModel {
    PsyEncoderConfig config;
    nn::Parameter value_proj;   // 1 x d_model, shared across features
    nn::Parameter feature_embed; // F x d_model identity embeddings
    nn::Parameter pool_query;    // 1 x d_model, query pooling only
    std::vector<EncoderLayerParams> layers;

    static PsyEncoderModel init(const PsyEncoderConfig& config, Rng& rng);
    std::vector<nn::Parameter*> parameters();
};

// Per-tape parameter binding; bind once per minibatch, encode many documents.
struct PsyBinding {
    struct LayerVars {
        nn::MhaVars mha;
        nn::Var ln1_gain, ln1_bias, ln2_gain, ln2_bias;
        nn::Var ff_w1, ff_b1, ff_w2, ff_b2;
    };
    nn::Var value_proj, feature_embed, pool_query;
    std::vector<LayerVars> layers;
    int n_heads = 0;
    std::string pooling = "mean";

    static PsyBinding bind(nn::Tape& tape, PsyEncoderModel& model);
    static PsyBinding bind_frozen(nn::Tape& tape, const PsyEncoderModel& model);

    // w: standardized selected features as a 1xF leaf.
    nn::Var tokenize_features(nn::Tape& tape, nn::Var w) const;
    // Returns pooled 1 x d_model vector; appends one FxF map per layer*head
    // (layer-major) to *attention when provided.
    nn::Var encode(nn::Tape& tape, nn::Var w, std::vector<nn::Var>* attention = nullptr) const;
};

struct PsyEncoding {
    std::vector<double> f_psy;               // length d_model
    std::vector<nn::Tensor> attention_maps;  // n_layers * n_heads maps, each FxF
};

// Inference convenience over a const model.
PsyEncoding encode_inference(const PsyEncoderModel& model, const std::vector<double>& w_std,
                             bool keep_attention = true);

// One CSV per (layer, head) named attention_L<l>_H<h>.csv: a feature x
// feature grid with a shared header of feature names.
void save_attention_csv(const std::vector<nn::Tensor>& maps, int n_heads,
                        const std::vector<std::string>& feature_names, const std::string& dir);

} // namespace persona::psyenc
