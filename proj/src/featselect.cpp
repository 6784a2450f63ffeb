#include "persona/featselect.hpp"

#include "persona/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>

using json = nlohmann::json;

namespace persona::featselect {

namespace {

std::string fmt_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

} // namespace

CorrelationMatrix pearson(const textfeat::FeatureMatrix& matrix) {
    const std::size_t n = matrix.n_docs();
    const std::size_t m = matrix.n_features();
    if (n < 2) throw DataError("pearson needs at least 2 documents, got " + std::to_string(n));

    // Single-pass running means and co-moments (Welford style).
    std::vector<double> mu(m, 0.0);
    std::vector<std::vector<double>> com(m, std::vector<double>(m, 0.0));
    std::vector<double> d_pre(m), d_post(m);

    for (std::size_t k = 0; k < n; ++k) {
        const auto& row = matrix.rows[k];
        const double inv = 1.0 / static_cast<double>(k + 1);
        for (std::size_t i = 0; i < m; ++i) {
            d_pre[i] = row[i] - mu[i];
            mu[i] += d_pre[i] * inv;
            d_post[i] = row[i] - mu[i];
        }
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = i; j < m; ++j) com[i][j] += d_pre[i] * d_post[j];
        }
    }

    CorrelationMatrix corr;
    corr.feature_names = matrix.feature_names;
    corr.degenerate.assign(m, 0);
    for (std::size_t i = 0; i < m; ++i)
        if (!(com[i][i] > 0.0)) corr.degenerate[i] = 1;

    corr.values.assign(m, std::vector<double>(m, 0.0));
    for (std::size_t i = 0; i < m; ++i) {
        corr.values[i][i] = 1.0;
        for (std::size_t j = i + 1; j < m; ++j) {
            double r = 0.0;
            if (!corr.degenerate[i] && !corr.degenerate[j]) {
                r = com[i][j] / std::sqrt(com[i][i] * com[j][j]);
                r = std::clamp(r, -1.0, 1.0);
            }
            corr.values[i][j] = r;
            corr.values[j][i] = r;
        }
    }
    return corr;
}

SelectionReport select(const CorrelationMatrix& corr, double threshold) {
    const std::size_t m = corr.size();
    SelectionReport report;
    report.threshold = threshold;

    std::vector<std::uint8_t> degenerate =
        corr.degenerate.empty() ? std::vector<std::uint8_t>(m, 0) : corr.degenerate;

    // Union by repeated BFS; graphs here are small.
    std::vector<int> component(m, -1);
    std::vector<int> degree(m, 0);
    auto connected = [&](std::size_t i, std::size_t j) {
        return i != j && !degenerate[i] && !degenerate[j] &&
               std::abs(corr.at(i, j)) > threshold;
    };
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = i + 1; j < m; ++j)
            if (connected(i, j)) {
                ++degree[i];
                ++degree[j];
            }

    int n_components = 0;
    for (std::size_t s = 0; s < m; ++s) {
        if (component[s] >= 0 || degenerate[s]) continue;
        const int id = n_components++;
        std::vector<std::size_t> frontier{s};
        component[s] = id;
        while (!frontier.empty()) {
            const std::size_t u = frontier.back();
            frontier.pop_back();
            for (std::size_t v = 0; v < m; ++v)
                if (component[v] < 0 && connected(u, v)) {
                    component[v] = id;
                    frontier.push_back(v);
                }
        }
    }

    std::vector<std::vector<std::size_t>> members(n_components);
    for (std::size_t i = 0; i < m; ++i)
        if (component[i] >= 0) members[static_cast<std::size_t>(component[i])].push_back(i);

    std::vector<std::uint8_t> keep(m, 0);
    for (auto& comp : members) {
        std::sort(comp.begin(), comp.end());
        if (comp.size() == 1) {
            keep[comp[0]] = 1;
            continue;
        }
        std::size_t rep = comp[0];
        for (std::size_t i : comp)
            if (degree[i] > degree[rep]) rep = i; // ties resolve to earliest index
        keep[rep] = 1;

        FeatureGroup group;
        for (std::size_t i : comp) group.members.push_back(corr.feature_names[i]);
        group.representative = corr.feature_names[rep];
        report.groups.push_back(std::move(group));
    }

    for (std::size_t i = 0; i < m; ++i) {
        if (keep[i])
            report.kept.push_back(corr.feature_names[i]);
        else
            report.dropped.push_back(corr.feature_names[i]);
        if (degenerate[i]) report.degenerate.push_back(corr.feature_names[i]);
    }
    return report;
}

textfeat::FeatureMatrix apply_selection(const textfeat::FeatureMatrix& matrix,
                                        const SelectionReport& report) {
    textfeat::FeatureMatrix out;
    out.doc_ids = matrix.doc_ids;
    std::vector<std::size_t> cols;
    for (const auto& name : report.kept) {
        int j = matrix.column_of(name);
        if (j < 0) throw DataError("kept feature not present in matrix: " + name);
        cols.push_back(static_cast<std::size_t>(j));
        out.feature_names.push_back(name);
    }
    out.rows.reserve(matrix.rows.size());
    for (const auto& row : matrix.rows) {
        std::vector<double> r;
        r.reserve(cols.size());
        for (auto j : cols) r.push_back(row[j]);
        out.rows.push_back(std::move(r));
    }
    return out;
}

void verify_selection(const CorrelationMatrix& reduced_corr, SelectionReport& report) {
    const std::size_t m = reduced_corr.size();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = i + 1; j < m; ++j)
            if (std::abs(reduced_corr.at(i, j)) > report.threshold)
                report.representative_overlaps.push_back(
                    {reduced_corr.feature_names[i], reduced_corr.feature_names[j]});
}

void emit_heatmap(const CorrelationMatrix& corr, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write heatmap: " + path);
    const std::size_t m = corr.size();
    const int cell = 12;
    const int size = static_cast<int>(m) * cell;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size
        << "\">\n";
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            const double a = std::min(1.0, std::abs(corr.at(i, j)));
            const int level = static_cast<int>(std::lround(255.0 * (1.0 - a)));
            out << "<rect x=\"" << j * cell << "\" y=\"" << i * cell << "\" width=\"" << cell
                << "\" height=\"" << cell << "\" fill=\"rgb(" << level << ',' << level
                << ",255)\"><title>" << corr.feature_names[i] << " / " << corr.feature_names[j]
                << " r=" << fmt_double(corr.at(i, j)) << "</title></rect>\n";
        }
    }
    out << "</svg>\n";
}

void save_report(const SelectionReport& report, const std::string& path) {
    json groups = json::array();
    for (const auto& g : report.groups)
        groups.push_back({{"members", g.members}, {"representative", g.representative}});
    json overlaps = json::array();
    for (const auto& p : report.representative_overlaps) overlaps.push_back({p[0], p[1]});
    json j = {{"threshold", report.threshold}, {"groups", groups},       {"kept", report.kept},
              {"dropped", report.dropped},     {"degenerate", report.degenerate},
              {"representative_overlaps", overlaps}};
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write selection report: " + path);
    out << j.dump(2) << '\n';
}

SelectionReport load_report(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open selection report: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw DataError("selection report " + path + ": " + e.what());
    }
    SelectionReport report;
    report.threshold = j.at("threshold").get<double>();
    for (const auto& g : j.at("groups"))
        report.groups.push_back({g.at("members").get<std::vector<std::string>>(),
                                 g.at("representative").get<std::string>()});
    report.kept = j.at("kept").get<std::vector<std::string>>();
    report.dropped = j.at("dropped").get<std::vector<std::string>>();
    report.degenerate = j.at("degenerate").get<std::vector<std::string>>();
    for (const auto& p : j.value("representative_overlaps", json::array()))
        report.representative_overlaps.push_back({p.at(0).get<std::string>(), p.at(1).get<std::string>()});
    return report;
}

void save_kept_list(const SelectionReport& report, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write kept-feature list: " + path);
    for (const auto& name : report.kept) out << name << '\n';
}

void save_correlation_csv(const CorrelationMatrix& corr, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write correlation matrix: " + path);
    out << "feature";
    for (const auto& n : corr.feature_names) out << ',' << n;
    out << '\n';
    for (std::size_t i = 0; i < corr.size(); ++i) {
        out << corr.feature_names[i];
        for (std::size_t j = 0; j < corr.size(); ++j) out << ',' << fmt_double(corr.at(i, j));
        out << '\n';
    }
}

Standardizer Standardizer::fit(const textfeat::FeatureMatrix& matrix,
                               const std::vector<std::size_t>& row_indices) {
    if (row_indices.empty()) throw DataError("standardizer needs at least one row");
    const std::size_t m = matrix.n_features();
    Standardizer s;
    s.mean.assign(m, 0.0);
    s.stddev.assign(m, 1.0);
    const double n = static_cast<double>(row_indices.size());
    for (auto i : row_indices)
        for (std::size_t j = 0; j < m; ++j) s.mean[j] += matrix.rows[i][j];
    for (std::size_t j = 0; j < m; ++j) s.mean[j] /= n;
    std::vector<double> var(m, 0.0);
    for (auto i : row_indices)
        for (std::size_t j = 0; j < m; ++j) {
            const double d = matrix.rows[i][j] - s.mean[j];
            var[j] += d * d;
        }
    for (std::size_t j = 0; j < m; ++j) {
        const double sd = std::sqrt(var[j] / n);
        s.stddev[j] = sd > 0.0 ? sd : 1.0;
    }
    return s;
}

std::vector<double> Standardizer::apply(const std::vector<double>& row) const {
    if (row.size() != mean.size()) throw ConfigError("standardizer dimension mismatch");
    std::vector<double> out(row.size());
    for (std::size_t j = 0; j < row.size(); ++j) out[j] = (row[j] - mean[j]) / stddev[j];
    return out;
}

} // namespace persona::featselect
