#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace persona::corpus {

// Ordered set of binary trait dimensions (e.g. the five-factor traits or the
// four MBTI dichotomies). Trait order is the canonical reporting order.
struct TraitScheme {
    std::string name;
    std::vector<std::string> traits;

    bool has_trait(const std::string& t) const;
    static TraitScheme big_five();
    static TraitScheme mbti();
    // "big_five" | "mbti" | custom name with explicit traits.
    static TraitScheme by_name(const std::string& name);
};

struct Document {
    std::string id;
    std::string text;                    // raw, never pre-cleaned
    std::map<std::string, int> labels;   // trait -> {0,1}
};

struct LabeledCorpus {
    TraitScheme scheme;
    std::vector<Document> docs;

    std::size_t size() const { return docs.size(); }
    const Document& by_id(const std::string& id) const;
};

struct SplitSpec {
    double train_frac = 0.7;
    double val_frac = 0.2;
    double test_frac = 0.1;
    std::uint64_t seed = 0;
    // Optional trait name; when set, shuffling happens within label strata.
    std::string stratify_by;
};

struct SplitIndices {
    std::vector<std::size_t> train, val, test;
};

// JSON-lines corpus: one object per line with fields id, text, labels.
LabeledCorpus load_corpus(const std::string& path, const TraitScheme& scheme);
void save_corpus(const LabeledCorpus& corpus, const std::string& path);

// Normalizes text for the text encoder: maps curly quotes/dashes/ellipses and
// fullwidth punctuation to ASCII, deletes control characters, collapses
// whitespace runs and trims. Idempotent. Feature extraction must NOT use this;
// it consumes the raw document text.
std::string clean_for_text_encoder(const std::string& text);

// Deterministic shuffle + allocation. Sizes are floor(frac * n) per split with
// the remainder assigned to train.
SplitIndices split(const LabeledCorpus& corpus, const SplitSpec& spec);

// Split manifest: {"train": [ids...], "val": [...], "test": [...]}.
void save_split(const LabeledCorpus& corpus, const SplitIndices& idx, const std::string& path);
SplitIndices load_split(const LabeledCorpus& corpus, const std::string& path);

// Maps a 4-letter MBTI code (e.g. "INTP") to binary labels under the mbti
// scheme. Label 1 = first letter of the dichotomy (I, N, T, P).
std::map<std::string, int> labels_from_mbti_code(const std::string& code);

// Planted-signal generator. Labels are sampled uniformly; text mixes words
// from per-trait signal lexicons (probability proportional to signal_strength
// when the trait label is 1) into a fixed base vocabulary. Pure function of
// its arguments.
LabeledCorpus generate_synthetic(std::size_t n_docs, const TraitScheme& scheme,
                                 double signal_strength, std::uint64_t seed);

// The signal lexicon generate_synthetic uses for a trait; derivable without a
// corpus so feature catalogs can reference it.
std::vector<std::string> synthetic_signal_lexicon(const std::string& trait);
std::string synthetic_lexicon_name(const std::string& trait);
const std::vector<std::string>& synthetic_base_vocabulary();

} // namespace persona::corpus
