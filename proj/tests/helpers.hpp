#pragma once

#include "persona/corpus.hpp"
#include "persona/featselect.hpp"
#include "persona/fusion.hpp"
#include "persona/pipeline.hpp"
#include "persona/textfeat.hpp"

#include <string>
#include <vector>

namespace helpers {

using namespace persona;

inline textfeat::LexiconSet synth_lexicons(const corpus::TraitScheme& scheme) {
    textfeat::LexiconSet set;
    for (const auto& t : scheme.traits)
        set.add(textfeat::make_lexicon(corpus::synthetic_lexicon_name(t),
                                       corpus::synthetic_signal_lexicon(t)));
    std::vector<std::string> fn(corpus::synthetic_base_vocabulary().begin(),
                                corpus::synthetic_base_vocabulary().begin() + 40);
    set.add(textfeat::make_lexicon("function_words_synth", fn));
    return set;
}

struct Setup {
    corpus::LabeledCorpus docs;
    textfeat::FeatureMatrix features;   // full synthetic catalog
    corpus::SplitIndices split;
    featselect::Standardizer standardizer;
};

// Synthetic corpus with extracted features and a seeded 7:2:1 split; no
// selection applied (the synthetic catalog is already low-redundancy).
inline Setup make_setup(std::size_t n_docs, const corpus::TraitScheme& scheme, double signal,
                        std::uint64_t seed) {
    Setup s;
    s.docs = corpus::generate_synthetic(n_docs, scheme, signal, seed);
    auto lex = synth_lexicons(scheme);
    auto cat = pipeline::synthetic_catalog(scheme);
    s.features = textfeat::extract_corpus(s.docs, cat, lex);
    s.split = corpus::split(s.docs, {0.7, 0.2, 0.1, seed, ""});
    s.standardizer = featselect::Standardizer::fit(s.features, s.split.train);
    return s;
}

inline fusion::ModelConfig tiny_model_config(int d_model = 16, int d_text = 8) {
    fusion::ModelConfig mc;
    mc.psy.n_layers = 2;
    mc.psy.n_heads = 2;
    mc.psy.d_model = d_model;
    mc.psy.d_ff = 2 * d_model;
    mc.text.variant = "bag";
    mc.text.vocab_size = 300;
    mc.text.d_text = d_text;
    mc.text.max_tokens = 510;
    mc.classifier_hidden = 16;
    return mc;
}

inline fusion::Model make_model(const Setup& s, const fusion::ModelConfig& mc, std::uint64_t seed) {
    Rng rng(seed);
    return fusion::Model::init(s.docs.scheme, mc, s.docs, s.split.train, s.features.feature_names,
                               s.standardizer, rng);
}

inline std::vector<std::vector<double>> standardized_targets(const Setup& s,
                                                             const fusion::Model& model) {
    std::vector<std::vector<double>> out(s.features.n_docs());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = model.standardizer.apply(s.features.rows[i]);
    return out;
}

} // namespace helpers
