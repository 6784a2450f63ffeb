#pragma once

#include "persona/corpus.hpp"
#include "persona/nn.hpp"
#include "persona/rng.hpp"

#include <map>
#include <string>
#include <vector>

namespace persona::textalign {

struct TextEncoderConfig {
    std::string variant = "bag"; // "bag" | "precomputed"
    int vocab_size = 1000;       // bag: cap on learned vocabulary
    int d_text = 128;
    int max_tokens = 510;
    std::string embedding_file;  // precomputed only

    void validate() const;
};

// Token -> embedding row; tokens outside the vocabulary share the UNK row.
struct Vocabulary {
    std::map<std::string, int> index;

    int unk_id() const { return static_cast<int>(index.size()); }
    int table_rows() const { return static_cast<int>(index.size()) + 1; }
    // Most frequent tokens of the training split, ties broken lexicographically.
    static Vocabulary build(const corpus::LabeledCorpus& corpus,
                            const std::vector<std::size_t>& train_idx, int max_size);
    // Cleaned text -> embedding rows, truncated to max_tokens; empty/all-OOV
    // documents collapse to a single UNK id.
    std::vector<int> ids_for(const std::string& cleaned_text, int max_tokens) const;
};

// The text the encoder actually consumes (cleaned, as opposed to the raw text
// feature extraction reads).
std::string encoder_input_text(const corpus::Document& doc);

// Pluggable document encoder. The bag variant is a trainable mean of word
// embeddings followed by a two-layer MLP; the precomputed variant looks up
// fixed vectors by doc id.
struct TextEncoder {
    TextEncoderConfig config;
    Vocabulary vocab;                               // bag
    nn::Parameter embeddings;                       // (V+1) x d_text
    nn::Parameter mlp_w1, mlp_b1, mlp_w2, mlp_b2;   // d_text -> d_text -> d_text
    std::map<std::string, std::vector<double>> precomputed;
    bool frozen = false;

    static TextEncoder init(const TextEncoderConfig& config, const corpus::LabeledCorpus& corpus,
                            const std::vector<std::size_t>& train_idx, Rng& rng);
    std::vector<nn::Parameter*> parameters();
    bool trainable() const { return config.variant == "bag"; }
};

// Header line `d_text count`, then `doc_id v1 .. v_d` per record.
std::map<std::string, std::vector<double>> load_precomputed_embeddings(const std::string& path,
                                                                       int expect_d_text);

// Dense projection from the text embedding onto the selected feature space.
struct AlignmentHead {
    nn::Parameter w; // d_text x l
    nn::Parameter b; // 1 x l
    bool frozen = false;

    static AlignmentHead init(int d_text, int l, Rng& rng);
    std::vector<nn::Parameter*> parameters() { return {&w, &b}; }
};

struct TextBinding {
    nn::Var embeddings, w1, b1, w2, b2;
    const TextEncoder* encoder = nullptr;

    static TextBinding bind(nn::Tape& tape, TextEncoder& enc);          // phase 1
    static TextBinding bind_frozen(nn::Tape& tape, const TextEncoder& enc);
    nn::Var encode(nn::Tape& tape, const corpus::Document& doc) const;
};

struct HeadBinding {
    nn::Var w, b;
    static HeadBinding bind(nn::Tape& tape, AlignmentHead& head);
    static HeadBinding bind_frozen(nn::Tape& tape, const AlignmentHead& head);
    nn::Var project(nn::Tape& tape, nn::Var h) const;
};

// loss = 1 - cos(Dense(H), p), in [0, 2].
nn::Var alignment_loss(nn::Tape& tape, nn::Var projected, nn::Var target);

struct AlignmentTrainConfig {
    int epochs = 30;
    double lr = 1e-3;
    int batch_size = 32;
    std::uint64_t seed = 0;
};

struct AlignmentResult {
    std::vector<double> epoch_mean_loss;
    double val_cosine_before = 0.0;
    double val_cosine_after = 0.0;
};

// Phase 1: trains encoder (when trainable) and head to pull the projected
// text embedding toward the standardized selected feature vector, then
// freezes both. Phase 2 must not touch them afterwards.
AlignmentResult train_alignment(TextEncoder& encoder, AlignmentHead& head,
                                const corpus::LabeledCorpus& corpus,
                                const std::vector<std::size_t>& train_idx,
                                const std::vector<std::size_t>& val_idx,
                                const std::vector<std::vector<double>>& targets_by_doc,
                                const AlignmentTrainConfig& cfg);

// Mean cosine between projected embeddings and targets over the given docs.
double eval_alignment(const TextEncoder& encoder, const AlignmentHead& head,
                      const corpus::LabeledCorpus& corpus, const std::vector<std::size_t>& idx,
                      const std::vector<std::vector<double>>& targets_by_doc);

} // namespace persona::textalign
