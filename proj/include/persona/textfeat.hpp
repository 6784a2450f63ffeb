#pragma once

#include "persona/corpus.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace persona::textfeat {

// Lowercased maximal runs of alphanumeric bytes (plus internal apostrophes);
// bytes >= 0x80 count as word characters so UTF-8 text stays intact.
std::vector<std::string> tokenize(const std::string& text);

// Split on . ! ? and newline; fragments with no tokens are dropped.
std::vector<std::string> sentence_split(const std::string& text);

struct Lexicon {
    std::string name;
    // term -> optional weight; terms lowercase.
    std::map<std::string, std::optional<double>> entries;

    bool contains(const std::string& term) const { return entries.count(term) != 0; }
    bool weighted() const;
};

// One entry per line: `term` or `term<TAB>weight`; `#` starts a comment.
Lexicon load_lexicon(const std::string& name, const std::string& path);
Lexicon make_lexicon(const std::string& name, const std::vector<std::string>& terms);

class LexiconSet {
public:
    void add(Lexicon lex);
    // Loads every *.txt in the directory; lexicon name = file stem.
    void load_directory(const std::string& dir);
    const Lexicon& get(const std::string& name) const;
    bool has(const std::string& name) const;

private:
    std::map<std::string, Lexicon> lexicons_;
};

enum class FeatureKind {
    LexiconRatio,
    LexiconWeightMean,
    AwlNormed,
    Ttr,
    Mattr,
    LexicalDensityTypes,
    AdjacentOverlapSent,
    MeanLogFreq,
    WordCount,
    MeanWordLength,
};

FeatureKind feature_kind_from_string(const std::string& s);
std::string to_string(FeatureKind kind);

struct FeatureDef {
    std::string name;
    FeatureKind kind = FeatureKind::WordCount;
    std::string lexicon;   // referenced lexicon / frequency table, if any
    int window = 50;       // mattr only
};

struct FeatureCatalog {
    std::string version;
    std::vector<FeatureDef> features;

    std::size_t size() const { return features.size(); }
    std::vector<std::string> names() const;
    int index_of(const std::string& name) const; // -1 when absent
};

// Catalog manifest: {"version": ..., "features": [{name, kind, lexicon?, window?}]}.
FeatureCatalog load_catalog(const std::string& path);
void save_catalog(const FeatureCatalog& catalog, const std::string& path);
// Validates name uniqueness and that referenced lexicons exist (weighted where
// the kind needs weights).
void validate_catalog(const FeatureCatalog& catalog, const LexiconSet& lexicons);

struct FeatureVector {
    std::string doc_id;
    std::vector<double> values;
};

struct FeatureMatrix {
    std::vector<std::string> feature_names;
    std::vector<std::string> doc_ids;
    std::vector<std::vector<double>> rows; // docs x features

    std::size_t n_docs() const { return rows.size(); }
    std::size_t n_features() const { return feature_names.size(); }
    int column_of(const std::string& name) const;
    std::vector<double> column(std::size_t j) const;
};

double eval_feature(const FeatureDef& def, const std::string& raw_text, const LexiconSet& lexicons);

// Feature extraction always runs on the raw document text.
FeatureVector extract(const corpus::Document& doc, const FeatureCatalog& catalog,
                      const LexiconSet& lexicons);

struct ExtractionLog {
    std::vector<std::string> empty_docs;
};

FeatureMatrix extract_corpus(const corpus::LabeledCorpus& corpus, const FeatureCatalog& catalog,
                             const LexiconSet& lexicons, int threads = 1,
                             ExtractionLog* log = nullptr);

// CSV: header `doc_id,<feature...>`, one row per document.
void save_matrix_csv(const FeatureMatrix& m, const std::string& path);
FeatureMatrix load_matrix_csv(const std::string& path);

} // namespace persona::textfeat
