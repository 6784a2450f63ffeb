#pragma once

#include "persona/textfeat.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace persona::featselect {

struct CorrelationMatrix {
    std::vector<std::string> feature_names;
    std::vector<std::vector<double>> values;   // m x m, symmetric, diag 1
    std::vector<std::uint8_t> degenerate;      // zero-variance flags

    std::size_t size() const { return feature_names.size(); }
    double at(std::size_t i, std::size_t j) const { return values[i][j]; }
};

struct FeatureGroup {
    std::vector<std::string> members;  // catalog order
    std::string representative;
};

struct SelectionReport {
    double threshold = 0.2;
    std::vector<FeatureGroup> groups;       // multi-member components only
    std::vector<std::string> kept;          // catalog order
    std::vector<std::string> dropped;
    std::vector<std::string> degenerate;    // subset of dropped
    // Representative pairs still correlated above threshold in the reduced
    // data; populated by verify_selection, logged rather than re-collapsed.
    std::vector<std::array<std::string, 2>> representative_overlaps;
};

// Sample Pearson r for every feature pair, single pass over rows. Zero
// variance columns get r = 0 off-diagonal, r = 1 on the diagonal, and a
// degenerate flag. Requires >= 2 rows.
CorrelationMatrix pearson(const textfeat::FeatureMatrix& matrix);

// Threshold grouping: edge iff |r| > threshold, connected components, and
// one representative per multi-member component (highest degree, ties to the
// earliest catalog index). Singletons are kept; degenerate features dropped.
SelectionReport select(const CorrelationMatrix& corr, double threshold = 0.2);

// Column projection onto report.kept, preserving kept order.
textfeat::FeatureMatrix apply_selection(const textfeat::FeatureMatrix& matrix,
                                        const SelectionReport& report);

// Flags representative pairs whose correlation in the reduced matrix still
// exceeds the threshold; appends to report.representative_overlaps.
void verify_selection(const CorrelationMatrix& reduced_corr, SelectionReport& report);

// Grid heatmap of |r|; cell (i,j) and (j,i) render identically.
void emit_heatmap(const CorrelationMatrix& corr, const std::string& path);

void save_report(const SelectionReport& report, const std::string& path);
SelectionReport load_report(const std::string& path);
void save_kept_list(const SelectionReport& report, const std::string& path);

void save_correlation_csv(const CorrelationMatrix& corr, const std::string& path);

// Per-feature z-scoring with statistics taken from the training split.
// Zero-variance features standardize with std = 1.
struct Standardizer {
    std::vector<double> mean;
    std::vector<double> stddev;

    static Standardizer fit(const textfeat::FeatureMatrix& matrix,
                            const std::vector<std::size_t>& row_indices);
    std::vector<double> apply(const std::vector<double>& row) const;
};

} // namespace persona::featselect
