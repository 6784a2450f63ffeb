#include "persona/textfeat.hpp"

#include "persona/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace persona::textfeat {

namespace {

bool is_token_byte(unsigned char c) {
    return std::isalnum(c) || c >= 0x80;
}

// Doubles in CSV and text artifacts go through to_chars: shortest
// round-trip representation, deterministic across reruns.
std::string fmt_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

} // namespace

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> tokens;
    std::string cur;
    auto flush = [&]() {
        if (!cur.empty()) {
            tokens.push_back(cur);
            cur.clear();
        }
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        unsigned char c = static_cast<unsigned char>(text[i]);
        if (is_token_byte(c)) {
            cur += static_cast<char>(std::tolower(c));
        } else if (c == '\'' && !cur.empty() && i + 1 < text.size() &&
                   is_token_byte(static_cast<unsigned char>(text[i + 1]))) {
            cur += '\'';
        } else {
            flush();
        }
    }
    flush();
    return tokens;
}

std::vector<std::string> sentence_split(const std::string& text) {
    std::vector<std::string> sentences;
    std::string cur;
    auto flush = [&]() {
        if (!tokenize(cur).empty()) {
            // trim outer whitespace for readability; token content decides emptiness
            std::size_t b = cur.find_first_not_of(" \t\r");
            std::size_t e = cur.find_last_not_of(" \t\r");
            sentences.push_back(cur.substr(b, e - b + 1));
        }
        cur.clear();
    };
    for (char ch : text) {
        if (ch == '.' || ch == '!' || ch == '?' || ch == '\n') {
            flush();
        } else {
            cur += ch;
        }
    }
    flush();
    return sentences;
}

bool Lexicon::weighted() const {
    for (const auto& [_, w] : entries)
        if (!w.has_value()) return false;
    return !entries.empty();
}

Lexicon load_lexicon(const std::string& name, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open lexicon file: " + path);
    Lexicon lex;
    lex.name = name;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t'))
            line.pop_back();
        if (line.empty()) continue;

        auto tab = line.find('\t');
        std::string term = line.substr(0, tab);
        std::transform(term.begin(), term.end(), term.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        std::optional<double> weight;
        if (tab != std::string::npos) {
            try {
                weight = std::stod(line.substr(tab + 1));
            } catch (...) {
                throw DataError(path + " line " + std::to_string(line_no) + ": bad weight");
            }
            if (!std::isfinite(*weight))
                throw DataError(path + " line " + std::to_string(line_no) + ": non-finite weight");
        }
        lex.entries[term] = weight;
    }
    if (lex.entries.empty()) throw DataError("lexicon is empty: " + path);
    return lex;
}

Lexicon make_lexicon(const std::string& name, const std::vector<std::string>& terms) {
    Lexicon lex;
    lex.name = name;
    for (auto t : terms) {
        std::transform(t.begin(), t.end(), t.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        lex.entries[t] = std::nullopt;
    }
    if (lex.entries.empty()) throw DataError("lexicon is empty: " + name);
    return lex;
}

void LexiconSet::add(Lexicon lex) {
    lexicons_[lex.name] = std::move(lex);
}

void LexiconSet::load_directory(const std::string& dir) {
    if (!fs::is_directory(dir)) throw DataError("lexicon directory not found: " + dir);
    std::vector<fs::path> paths;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.path().extension() == ".txt") paths.push_back(entry.path());
    std::sort(paths.begin(), paths.end());
    for (const auto& p : paths) add(load_lexicon(p.stem().string(), p.string()));
}

const Lexicon& LexiconSet::get(const std::string& name) const {
    auto it = lexicons_.find(name);
    if (it == lexicons_.end()) throw DataError("unknown lexicon: " + name);
    return it->second;
}

bool LexiconSet::has(const std::string& name) const { return lexicons_.count(name) != 0; }

FeatureKind feature_kind_from_string(const std::string& s) {
    if (s == "lexicon_ratio") return FeatureKind::LexiconRatio;
    if (s == "lexicon_weight_mean") return FeatureKind::LexiconWeightMean;
    if (s == "awl_normed") return FeatureKind::AwlNormed;
    if (s == "ttr") return FeatureKind::Ttr;
    if (s == "mattr") return FeatureKind::Mattr;
    if (s == "lexical_density_types") return FeatureKind::LexicalDensityTypes;
    if (s == "adjacent_overlap_sent") return FeatureKind::AdjacentOverlapSent;
    if (s == "mean_log_freq") return FeatureKind::MeanLogFreq;
    if (s == "word_count") return FeatureKind::WordCount;
    if (s == "mean_word_length") return FeatureKind::MeanWordLength;
    throw DataError("unknown feature kind: " + s);
}

std::string to_string(FeatureKind kind) {
    switch (kind) {
        case FeatureKind::LexiconRatio: return "lexicon_ratio";
        case FeatureKind::LexiconWeightMean: return "lexicon_weight_mean";
        case FeatureKind::AwlNormed: return "awl_normed";
        case FeatureKind::Ttr: return "ttr";
        case FeatureKind::Mattr: return "mattr";
        case FeatureKind::LexicalDensityTypes: return "lexical_density_types";
        case FeatureKind::AdjacentOverlapSent: return "adjacent_overlap_sent";
        case FeatureKind::MeanLogFreq: return "mean_log_freq";
        case FeatureKind::WordCount: return "word_count";
        case FeatureKind::MeanWordLength: return "mean_word_length";
    }
    return "?";
}

static bool kind_needs_lexicon(FeatureKind kind) {
    switch (kind) {
        case FeatureKind::LexiconRatio:
        case FeatureKind::LexiconWeightMean:
        case FeatureKind::AwlNormed:
        case FeatureKind::LexicalDensityTypes:
        case FeatureKind::MeanLogFreq:
            return true;
        default:
            return false;
    }
}

std::vector<std::string> FeatureCatalog::names() const {
    std::vector<std::string> out;
    out.reserve(features.size());
    for (const auto& f : features) out.push_back(f.name);
    return out;
}

int FeatureCatalog::index_of(const std::string& name) const {
    for (std::size_t i = 0; i < features.size(); ++i)
        if (features[i].name == name) return static_cast<int>(i);
    return -1;
}

FeatureCatalog load_catalog(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open catalog manifest: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw DataError("catalog manifest " + path + ": " + e.what());
    }
    FeatureCatalog cat;
    cat.version = j.value("version", "1");
    for (const auto& f : j.at("features")) {
        FeatureDef def;
        def.name = f.at("name").get<std::string>();
        def.kind = feature_kind_from_string(f.at("kind").get<std::string>());
        def.lexicon = f.value("lexicon", "");
        def.window = f.value("window", 50);
        cat.features.push_back(std::move(def));
    }
    return cat;
}

void save_catalog(const FeatureCatalog& catalog, const std::string& path) {
    json features = json::array();
    for (const auto& f : catalog.features) {
        json jf = {{"name", f.name}, {"kind", to_string(f.kind)}};
        if (kind_needs_lexicon(f.kind)) jf["lexicon"] = f.lexicon;
        if (f.kind == FeatureKind::Mattr) jf["window"] = f.window;
        features.push_back(jf);
    }
    json j = {{"version", catalog.version}, {"features", features}};
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write catalog manifest: " + path);
    out << j.dump(2) << '\n';
}

void validate_catalog(const FeatureCatalog& catalog, const LexiconSet& lexicons) {
    std::set<std::string> seen;
    for (const auto& f : catalog.features) {
        if (!seen.insert(f.name).second)
            throw DataError("duplicate feature name in catalog: " + f.name);
        if (kind_needs_lexicon(f.kind)) {
            if (f.lexicon.empty())
                throw DataError("feature " + f.name + " needs a lexicon parameter");
            if (!lexicons.has(f.lexicon))
                throw DataError("feature " + f.name + " references unknown lexicon " + f.lexicon);
            const auto& lex = lexicons.get(f.lexicon);
            if ((f.kind == FeatureKind::LexiconWeightMean || f.kind == FeatureKind::MeanLogFreq) &&
                !lex.weighted())
                throw DataError("feature " + f.name + " needs a weighted lexicon, " + f.lexicon +
                                " has unweighted entries");
        }
        if (f.kind == FeatureKind::Mattr && f.window < 1)
            throw DataError("feature " + f.name + ": mattr window must be >= 1");
    }
}

namespace {

double type_token_ratio(const std::vector<std::string>& tokens) {
    if (tokens.empty()) return 0.0;
    std::set<std::string> types(tokens.begin(), tokens.end());
    return static_cast<double>(types.size()) / static_cast<double>(tokens.size());
}

double moving_ttr(const std::vector<std::string>& tokens, std::size_t window) {
    const std::size_t n = tokens.size();
    if (n == 0) return 0.0;
    if (n < window) return type_token_ratio(tokens);
    // Sliding multiset of the window keeps this O(n log n).
    std::map<std::string, int> counts;
    double sum = 0.0;
    std::size_t n_windows = 0;
    for (std::size_t i = 0; i < n; ++i) {
        counts[tokens[i]]++;
        if (i + 1 >= window) {
            sum += static_cast<double>(counts.size()) / static_cast<double>(window);
            ++n_windows;
            auto it = counts.find(tokens[i + 1 - window]);
            if (--it->second == 0) counts.erase(it);
        }
    }
    return sum / static_cast<double>(n_windows);
}

std::set<std::string> types_of(const std::vector<std::string>& tokens) {
    return {tokens.begin(), tokens.end()};
}

} // namespace

double eval_feature(const FeatureDef& def, const std::string& raw_text, const LexiconSet& lexicons) {
    const std::vector<std::string> tokens = tokenize(raw_text);
    const double n = static_cast<double>(tokens.size());

    switch (def.kind) {
        case FeatureKind::WordCount:
            return n;
        case FeatureKind::MeanWordLength: {
            if (tokens.empty()) return 0.0;
            double total = 0.0;
            for (const auto& t : tokens) {
                std::size_t cps = 0;
                for (char c : t)
                    if ((static_cast<unsigned char>(c) & 0xC0) != 0x80) ++cps; // skip UTF-8 continuations
                total += static_cast<double>(cps);
            }
            return total / n;
        }
        case FeatureKind::Ttr:
            return type_token_ratio(tokens);
        case FeatureKind::Mattr:
            return moving_ttr(tokens, static_cast<std::size_t>(def.window));
        case FeatureKind::LexiconRatio:
        case FeatureKind::AwlNormed: {
            if (tokens.empty()) return 0.0;
            const auto& lex = lexicons.get(def.lexicon);
            std::size_t hits = 0;
            for (const auto& t : tokens)
                if (lex.contains(t)) ++hits;
            return static_cast<double>(hits) / n;
        }
        case FeatureKind::LexiconWeightMean: {
            const auto& lex = lexicons.get(def.lexicon);
            double sum = 0.0;
            std::size_t hits = 0;
            for (const auto& t : tokens) {
                auto it = lex.entries.find(t);
                if (it != lex.entries.end() && it->second.has_value()) {
                    sum += *it->second;
                    ++hits;
                }
            }
            return hits ? sum / static_cast<double>(hits) : 0.0;
        }
        case FeatureKind::MeanLogFreq: {
            const auto& lex = lexicons.get(def.lexicon);
            double sum = 0.0;
            std::size_t hits = 0;
            for (const auto& t : tokens) {
                auto it = lex.entries.find(t);
                if (it != lex.entries.end() && it->second.has_value() && *it->second > 0.0) {
                    sum += std::log10(*it->second);
                    ++hits;
                }
            }
            return hits ? sum / static_cast<double>(hits) : 0.0;
        }
        case FeatureKind::LexicalDensityTypes: {
            const auto types = types_of(tokens);
            if (types.empty()) return 0.0;
            const auto& function_words = lexicons.get(def.lexicon);
            std::size_t content = 0;
            for (const auto& t : types)
                if (!function_words.contains(t)) ++content;
            return static_cast<double>(content) / static_cast<double>(types.size());
        }
        case FeatureKind::AdjacentOverlapSent: {
            const auto sentences = sentence_split(raw_text);
            if (sentences.size() < 2) return 0.0;
            double sum = 0.0;
            std::size_t pairs = 0;
            auto prev = types_of(tokenize(sentences[0]));
            for (std::size_t i = 1; i < sentences.size(); ++i) {
                auto cur = types_of(tokenize(sentences[i]));
                std::size_t inter = 0;
                for (const auto& t : cur)
                    if (prev.count(t)) ++inter;
                sum += cur.empty() ? 0.0
                                   : static_cast<double>(inter) / static_cast<double>(cur.size());
                ++pairs;
                prev = std::move(cur);
            }
            return sum / static_cast<double>(pairs);
        }
    }
    return 0.0;
}

FeatureVector extract(const corpus::Document& doc, const FeatureCatalog& catalog,
                      const LexiconSet& lexicons) {
    FeatureVector v;
    v.doc_id = doc.id;
    v.values.reserve(catalog.size());
    for (const auto& def : catalog.features)
        v.values.push_back(eval_feature(def, doc.text, lexicons));
    return v;
}

FeatureMatrix extract_corpus(const corpus::LabeledCorpus& corpus, const FeatureCatalog& catalog,
                             const LexiconSet& lexicons, int threads, ExtractionLog* log) {
    FeatureMatrix m;
    m.feature_names = catalog.names();
    m.doc_ids.reserve(corpus.size());
    for (const auto& d : corpus.docs) m.doc_ids.push_back(d.id);
    m.rows.assign(corpus.size(), {});

    auto work = [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i)
            m.rows[i] = extract(corpus.docs[i], catalog, lexicons).values;
    };

    const std::size_t n = corpus.size();
    if (threads <= 1 || n < 2) {
        work(0, n);
    } else {
        const std::size_t t = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
        std::vector<std::thread> pool;
        const std::size_t chunk = (n + t - 1) / t;
        for (std::size_t k = 0; k < t; ++k)
            pool.emplace_back(work, k * chunk, std::min(n, (k + 1) * chunk));
        for (auto& th : pool) th.join();
    }

    if (log) {
        for (std::size_t i = 0; i < n; ++i)
            if (tokenize(corpus.docs[i].text).empty()) log->empty_docs.push_back(m.doc_ids[i]);
    }
    return m;
}

int FeatureMatrix::column_of(const std::string& name) const {
    for (std::size_t j = 0; j < feature_names.size(); ++j)
        if (feature_names[j] == name) return static_cast<int>(j);
    return -1;
}

std::vector<double> FeatureMatrix::column(std::size_t j) const {
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(r[j]);
    return out;
}

void save_matrix_csv(const FeatureMatrix& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write feature matrix: " + path);
    out << "doc_id";
    for (const auto& name : m.feature_names) out << ',' << name;
    out << '\n';
    for (std::size_t i = 0; i < m.rows.size(); ++i) {
        out << m.doc_ids[i];
        for (double v : m.rows[i]) out << ',' << fmt_double(v);
        out << '\n';
    }
}

FeatureMatrix load_matrix_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open feature matrix: " + path);
    FeatureMatrix m;
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty feature matrix file: " + path);
    {
        std::stringstream ss(line);
        std::string cell;
        bool first = true;
        while (std::getline(ss, cell, ',')) {
            if (first) {
                if (cell != "doc_id") throw DataError(path + ": first column must be doc_id");
                first = false;
            } else {
                m.feature_names.push_back(cell);
            }
        }
    }
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> row;
        bool first = true;
        while (std::getline(ss, cell, ',')) {
            if (first) {
                m.doc_ids.push_back(cell);
                first = false;
            } else {
                try {
                    row.push_back(std::stod(cell));
                } catch (...) {
                    throw DataError(path + " line " + std::to_string(line_no) + ": bad number " + cell);
                }
            }
        }
        if (row.size() != m.feature_names.size())
            throw DataError(path + " line " + std::to_string(line_no) + ": wrong column count");
        m.rows.push_back(std::move(row));
    }
    return m;
}

} // namespace persona::textfeat
