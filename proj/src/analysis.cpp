#include "persona/analysis.hpp"

#include "persona/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace persona::analysis {

namespace {

std::string fmt_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

} // namespace

std::vector<std::string> ImportanceReport::ranking() const {
    std::vector<const ImportanceEntry*> sorted;
    for (const auto& e : entries) sorted.push_back(&e);
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const auto* a, const auto* b) { return a->raw > b->raw; });
    std::vector<std::string> out;
    for (const auto* e : sorted) out.push_back(e->feature);
    return out;
}

ImportanceReport attention_importance(const fusion::Model& model,
                                      const corpus::LabeledCorpus& corpus,
                                      const std::vector<std::size_t>& idx,
                                      const textfeat::FeatureMatrix& selected_matrix,
                                      std::vector<nn::Tensor>* mean_maps) {
    if (idx.empty()) throw DataError("attention_importance: empty document set");
    if (model.config.ablation.no_psyencoder)
        throw ConfigError("attention_importance: psy encoder is disabled in this model");
    if (selected_matrix.n_docs() != corpus.size())
        throw DataError("attention_importance: feature matrix does not match the corpus");
    for (auto i : idx)
        if (selected_matrix.doc_ids[i] != corpus.docs[i].id)
            throw DataError("attention_importance: feature matrix row order does not match corpus");

    const std::size_t f = model.feature_names.size();
    std::vector<double> raw(f, 0.0);
    if (mean_maps) mean_maps->clear();

    for (auto i : idx) {
        const auto w_std = model.standardized_features(selected_matrix.rows[i]);
        const auto enc = psyenc::encode_inference(model.psy, w_std, true);
        if (mean_maps && mean_maps->empty())
            mean_maps->assign(enc.attention_maps.size(),
                              nn::Tensor(static_cast<int>(f), static_cast<int>(f)));
        for (std::size_t m = 0; m < enc.attention_maps.size(); ++m) {
            const auto& map = enc.attention_maps[m];
            if (mean_maps)
                for (std::size_t k = 0; k < map.size(); ++k)
                    (*mean_maps)[m].data[k] += map.data[k] / static_cast<double>(idx.size());
            // column mean = attention received by feature j in this map
            for (std::size_t j = 0; j < f; ++j) {
                double col = 0.0;
                for (std::size_t r = 0; r < f; ++r) col += map.at(static_cast<int>(r), static_cast<int>(j));
                raw[j] += col / static_cast<double>(f);
            }
        }
    }

    double lo = raw[0], hi = raw[0];
    for (double v : raw) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }

    ImportanceReport report;
    report.degenerate = !(hi > lo);
    for (std::size_t j = 0; j < f; ++j) {
        ImportanceEntry e;
        e.feature = model.feature_names[j];
        e.raw = raw[j];
        e.normalized = report.degenerate ? 0.5 : (raw[j] - lo) / (hi - lo);
        report.entries.push_back(std::move(e));
    }

    // Ranks from raw scores, catalog order breaking ties.
    std::vector<std::size_t> order(f);
    for (std::size_t j = 0; j < f; ++j) order[j] = j;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return raw[a] > raw[b]; });
    for (std::size_t r = 0; r < f; ++r) report.entries[order[r]].rank = static_cast<int>(r) + 1;
    return report;
}

void save_importance_csv(const ImportanceReport& report, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write importance report: " + path);
    out << "feature_name,raw_score,normalized_score,rank\n";
    for (const auto& e : report.entries)
        out << e.feature << ',' << fmt_double(e.raw) << ',' << fmt_double(e.normalized) << ','
            << e.rank << '\n';
}

ImportanceReport load_importance_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open importance report: " + path);
    ImportanceReport report;
    std::string line;
    if (!std::getline(in, line) || line != "feature_name,raw_score,normalized_score,rank")
        throw DataError("importance report " + path + ": bad header");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        ImportanceEntry e;
        std::string cell;
        std::getline(ss, e.feature, ',');
        std::getline(ss, cell, ',');
        e.raw = std::stod(cell);
        std::getline(ss, cell, ',');
        e.normalized = std::stod(cell);
        std::getline(ss, cell, ',');
        e.rank = std::stoi(cell);
        report.entries.push_back(std::move(e));
    }
    return report;
}

std::vector<CrossRow> cross_report(const ImportanceReport& a, const ImportanceReport& b) {
    std::vector<CrossRow> rows;
    for (const auto& ea : a.entries) {
        for (const auto& eb : b.entries) {
            if (ea.feature == eb.feature) {
                rows.push_back({ea.feature, ea.normalized, eb.normalized,
                                (ea.normalized + eb.normalized) / 2.0});
                break;
            }
        }
    }
    std::stable_sort(rows.begin(), rows.end(), [](const CrossRow& x, const CrossRow& y) {
        if (x.avg != y.avg) return x.avg > y.avg;
        return x.feature < y.feature;
    });
    return rows;
}

void save_cross_csv(const std::vector<CrossRow>& rows, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write cross report: " + path);
    out << "feature_name,score_a,score_b,avg\n";
    for (const auto& r : rows)
        out << r.feature << ',' << fmt_double(r.score_a) << ',' << fmt_double(r.score_b) << ','
            << fmt_double(r.avg) << '\n';
}

namespace {

void write_atomic(const fs::path& target, const std::string& content) {
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw DataError("cannot write " + target.string());
        out << content;
    }
    fs::rename(tmp, target);
}

} // namespace

std::vector<std::string> emit_reports(const RunArtifacts& artifacts, const std::string& out_dir) {
    fs::path dir(out_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (!fs::is_directory(dir)) throw DataError("cannot create output directory: " + out_dir);

    std::vector<std::string> written;
    auto emit = [&](const std::string& content, const char* name) {
        if (content.empty()) return;
        write_atomic(dir / name, content);
        written.push_back(name);
    };
    emit(artifacts.metrics_json, "metrics.json");
    emit(artifacts.importance_csv, "importance.csv");
    emit(artifacts.sweep_csv, "sweep.csv");
    emit(artifacts.heatmap_svg, "heatmap.svg");
    emit(artifacts.training_log_csv, "training_log.csv");

    json manifest = {{"files", written}};
    write_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
    written.push_back("manifest.json");
    return written;
}

} // namespace persona::analysis
