#pragma once

#include "persona/fusion.hpp"

#include <string>
#include <vector>

namespace persona::analysis {

struct ImportanceEntry {
    std::string feature;
    double raw = 0.0;
    double normalized = 0.0;
    int rank = 0; // 1 = most attended
};

struct ImportanceReport {
    std::vector<ImportanceEntry> entries; // catalog order
    bool degenerate = false;              // all raw scores equal

    std::vector<std::string> ranking() const; // feature names, best first
};

// Attention received per feature: column means of every layer/head map,
// summed over all layers, heads, and test documents, then min-max normalized
// to [0,1]. A flat profile (max == min) normalizes to 0.5 and sets the
// degenerate flag. When mean_maps is given it receives the per-(layer,head)
// attention maps averaged over the documents.
ImportanceReport attention_importance(const fusion::Model& model,
                                      const corpus::LabeledCorpus& corpus,
                                      const std::vector<std::size_t>& idx,
                                      const textfeat::FeatureMatrix& selected_matrix,
                                      std::vector<nn::Tensor>* mean_maps = nullptr);

// CSV: feature_name,raw_score,normalized_score,rank
void save_importance_csv(const ImportanceReport& report, const std::string& path);
ImportanceReport load_importance_csv(const std::string& path);

// Paired scores for features present in both reports, ordered by descending
// mean. CSV: feature_name,score_a,score_b,avg. Disjoint reports produce a
// header-only file.
struct CrossRow {
    std::string feature;
    double score_a = 0.0;
    double score_b = 0.0;
    double avg = 0.0;
};
std::vector<CrossRow> cross_report(const ImportanceReport& a, const ImportanceReport& b);
void save_cross_csv(const std::vector<CrossRow>& rows, const std::string& path);

// Atomic write of a named artifact set plus a manifest listing what exists.
struct RunArtifacts {
    std::string metrics_json;      // serialized content, empty = absent
    std::string importance_csv;
    std::string sweep_csv;
    std::string heatmap_svg;
    std::string training_log_csv;
};
std::vector<std::string> emit_reports(const RunArtifacts& artifacts, const std::string& out_dir);

} // namespace persona::analysis
