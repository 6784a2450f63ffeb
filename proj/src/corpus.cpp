#include "persona/corpus.hpp"

#include "persona/errors.hpp"
#include "persona/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

using json = nlohmann::json;

namespace persona::corpus {

bool TraitScheme::has_trait(const std::string& t) const {
    return std::find(traits.begin(), traits.end(), t) != traits.end();
}

TraitScheme TraitScheme::big_five() {
    return {"big_five", {"OPN", "CON", "EXT", "AGR", "NEU"}};
}

TraitScheme TraitScheme::mbti() {
    return {"mbti", {"I/E", "N/S", "T/F", "P/J"}};
}

TraitScheme TraitScheme::by_name(const std::string& name) {
    if (name == "big_five") return big_five();
    if (name == "mbti") return mbti();
    throw ConfigError("unknown trait scheme: " + name);
}

const Document& LabeledCorpus::by_id(const std::string& id) const {
    for (const auto& d : docs)
        if (d.id == id) return d;
    throw DataError("no document with id " + id);
}

static void validate_scheme(const TraitScheme& scheme) {
    if (scheme.traits.empty()) throw DataError("trait scheme has no traits");
    std::set<std::string> seen(scheme.traits.begin(), scheme.traits.end());
    if (seen.size() != scheme.traits.size())
        throw DataError("trait scheme has duplicate trait names");
}

static Document parse_record(const json& rec, const TraitScheme& scheme, std::size_t line_no) {
    const std::string where = "line " + std::to_string(line_no);
    if (!rec.is_object() || !rec.contains("id") || !rec.contains("text") || !rec.contains("labels"))
        throw DataError(where + ": record must have fields id, text, labels");

    Document doc;
    doc.id = rec.at("id").get<std::string>();
    doc.text = rec.at("text").get<std::string>();
    if (doc.text.empty()) throw DataError(where + ": empty text for id " + doc.id);

    const json& labels = rec.at("labels");
    for (const auto& trait : scheme.traits) {
        if (!labels.contains(trait))
            throw DataError(where + ": document " + doc.id + " missing label for trait " + trait);
        int v = labels.at(trait).get<int>();
        if (v != 0 && v != 1)
            throw DataError(where + ": label for trait " + trait + " must be 0 or 1");
        doc.labels[trait] = v;
    }
    return doc;
}

LabeledCorpus load_corpus(const std::string& path, const TraitScheme& scheme) {
    validate_scheme(scheme);
    std::ifstream in(path);
    if (!in) throw DataError("cannot open corpus file: " + path);

    LabeledCorpus corpus;
    corpus.scheme = scheme;
    std::set<std::string> ids;

    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::parse_error& e) {
            throw DataError("line " + std::to_string(line_no) + ": malformed JSON: " + e.what());
        }
        Document doc = parse_record(rec, scheme, line_no);
        if (!ids.insert(doc.id).second)
            throw DataError("line " + std::to_string(line_no) + ": duplicate document id " + doc.id);
        corpus.docs.push_back(std::move(doc));
    }
    return corpus;
}

void save_corpus(const LabeledCorpus& corpus, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write corpus file: " + path);
    for (const auto& doc : corpus.docs) {
        json labels = json::object();
        for (const auto& [k, v] : doc.labels) labels[k] = v;
        json rec = {{"id", doc.id}, {"text", doc.text}, {"labels", labels}};
        out << rec.dump() << '\n';
    }
}

namespace {

// Multi-byte punctuation variants mapped to ASCII. Applied before whitespace
// collapsing so fullwidth spaces and NBSP fold into runs.
struct PunctMap {
    const char* from;
    const char* to;
};

constexpr PunctMap kPunctMaps[] = {
    {"‘", "'"},  {"’", "'"},  {"‚", "'"},  {"‛", "'"},
    {"“", "\""}, {"”", "\""}, {"„", "\""}, {"«", "\""},
    {"»", "\""}, {"–", "-"},  {"—", "-"},  {"―", "-"},
    {"…", "..."},
    {" ", " "},  {"　", " "},
    {"！", "!"},  {"？", "?"},  {"，", ","},  {"．", "."},
    {"：", ":"},  {"；", ";"},  {"（", "("},  {"）", ")"},
    {"。", "."},  {"､", ","},  {"、", ","},
};

bool is_space_byte(unsigned char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

bool is_control_byte(unsigned char c) {
    return (c < 0x20 && !is_space_byte(c)) || c == 0x7F;
}

} // namespace

std::string clean_for_text_encoder(const std::string& text) {
    std::string mapped;
    mapped.reserve(text.size());
    for (std::size_t i = 0; i < text.size();) {
        bool replaced = false;
        for (const auto& m : kPunctMaps) {
            const std::size_t len = std::char_traits<char>::length(m.from);
            if (text.compare(i, len, m.from) == 0) {
                mapped += m.to;
                i += len;
                replaced = true;
                break;
            }
        }
        if (replaced) continue;
        unsigned char c = static_cast<unsigned char>(text[i]);
        if (!is_control_byte(c)) mapped += text[i];
        ++i;
    }

    std::string out;
    out.reserve(mapped.size());
    bool in_space = false;
    for (char ch : mapped) {
        if (is_space_byte(static_cast<unsigned char>(ch))) {
            in_space = true;
            continue;
        }
        if (in_space && !out.empty()) out += ' ';
        in_space = false;
        out += ch;
    }
    return out;
}

SplitIndices split(const LabeledCorpus& corpus, const SplitSpec& spec) {
    const std::size_t n = corpus.size();
    if (n < 10) throw DataError("corpus too small to split: " + std::to_string(n) + " docs (need >= 10)");
    if (std::abs(spec.train_frac + spec.val_frac + spec.test_frac - 1.0) > 1e-9)
        throw ConfigError("split fractions must sum to 1");
    if (!spec.stratify_by.empty() && !corpus.scheme.has_trait(spec.stratify_by))
        throw ConfigError("stratify_by names unknown trait: " + spec.stratify_by);

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(spec.seed);
    rng.shuffle(order);

    if (!spec.stratify_by.empty()) {
        // Stable partition of the shuffled order by label keeps per-stratum
        // order random while the interleave below balances both strata.
        std::vector<std::size_t> ones, zeros, merged;
        for (auto i : order)
            (corpus.docs[i].labels.at(spec.stratify_by) ? ones : zeros).push_back(i);
        merged.reserve(n);
        std::size_t a = 0, b = 0;
        while (a < ones.size() || b < zeros.size()) {
            // Largest-remaining-first interleave; deterministic.
            if (a < ones.size() && (b >= zeros.size() || (ones.size() - a) * (zeros.size()) >= (zeros.size() - b) * (ones.size())))
                merged.push_back(ones[a++]);
            else
                merged.push_back(zeros[b++]);
        }
        order = std::move(merged);
    }

    const auto n_val = static_cast<std::size_t>(std::floor(spec.val_frac * static_cast<double>(n)));
    const auto n_test = static_cast<std::size_t>(std::floor(spec.test_frac * static_cast<double>(n)));
    const std::size_t n_train = n - n_val - n_test; // floor share plus remainder

    if (n_train == 0 || n_val == 0 || n_test == 0)
        throw DataError("split produced an empty partition");

    SplitIndices idx;
    idx.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    idx.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                   order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    idx.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
    return idx;
}

static json ids_of(const LabeledCorpus& corpus, const std::vector<std::size_t>& idx) {
    json arr = json::array();
    for (auto i : idx) arr.push_back(corpus.docs[i].id);
    return arr;
}

void save_split(const LabeledCorpus& corpus, const SplitIndices& idx, const std::string& path) {
    json j = {{"train", ids_of(corpus, idx.train)},
              {"val", ids_of(corpus, idx.val)},
              {"test", ids_of(corpus, idx.test)}};
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write split manifest: " + path);
    out << j.dump(2) << '\n';
}

SplitIndices load_split(const LabeledCorpus& corpus, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open split manifest: " + path);
    json j;
    in >> j;

    std::map<std::string, std::size_t> pos;
    for (std::size_t i = 0; i < corpus.docs.size(); ++i) pos[corpus.docs[i].id] = i;

    auto lookup = [&](const json& arr) {
        std::vector<std::size_t> out;
        for (const auto& id : arr) {
            auto it = pos.find(id.get<std::string>());
            if (it == pos.end()) throw DataError("split manifest references unknown doc id " + id.get<std::string>());
            out.push_back(it->second);
        }
        return out;
    };
    return {lookup(j.at("train")), lookup(j.at("val")), lookup(j.at("test"))};
}

std::map<std::string, int> labels_from_mbti_code(const std::string& code) {
    if (code.size() != 4) throw DataError("MBTI code must have 4 letters: " + code);
    auto pick = [&](std::size_t i, char one, char zero) {
        char c = static_cast<char>(std::toupper(static_cast<unsigned char>(code[i])));
        if (c == one) return 1;
        if (c == zero) return 0;
        throw DataError(std::string("MBTI code letter ") + code[i] + " invalid at position " + std::to_string(i));
    };
    return {{"I/E", pick(0, 'I', 'E')},
            {"N/S", pick(1, 'N', 'S')},
            {"T/F", pick(2, 'T', 'F')},
            {"P/J", pick(3, 'P', 'J')}};
}

namespace {

// 200 high-frequency words; none collide with synthetic signal tokens.
const std::vector<std::string> kBaseVocabulary = {
    "the", "of", "and", "to", "in", "that", "was", "his", "he", "it",
    "with", "is", "for", "as", "had", "you", "not", "be", "her", "on",
    "at", "by", "which", "have", "or", "from", "this", "him", "but", "all",
    "she", "they", "were", "my", "are", "me", "one", "their", "so", "an",
    "said", "them", "we", "who", "would", "been", "will", "no", "when", "there",
    "if", "more", "out", "up", "into", "do", "any", "your", "what", "has",
    "man", "could", "other", "than", "our", "some", "very", "time", "upon", "about",
    "may", "its", "only", "now", "like", "little", "then", "can", "made", "should",
    "did", "us", "such", "a", "great", "before", "must", "two", "these", "see",
    "know", "over", "much", "down", "after", "first", "mister", "good", "men", "own",
    "never", "most", "old", "shall", "day", "where", "those", "came", "come", "himself",
    "way", "work", "life", "without", "go", "make", "well", "through", "being", "long",
    "say", "might", "how", "am", "too", "even", "given", "again", "many", "back",
    "here", "think", "every", "people", "went", "same", "last", "thought", "house", "world",
    "still", "place", "found", "while", "because", "put", "under", "once", "take", "morning",
    "thing", "right", "new", "part", "off", "away", "yet", "let", "three", "street",
    "against", "eyes", "hand", "young", "few", "just", "name", "room", "got", "left",
    "another", "always", "year", "night", "head", "something", "nothing", "both", "between", "end",
    "each", "face", "small", "water", "though", "light", "told", "sound", "set", "home",
    "word", "look", "cold", "paper", "point", "done", "side", "felt", "along", "turn",
};

std::string sanitize_trait(const std::string& trait) {
    std::string out;
    for (char c : trait) {
        unsigned char u = static_cast<unsigned char>(c);
        if (std::isalnum(u)) out += static_cast<char>(std::tolower(u));
    }
    if (out.empty()) out = "trait";
    return out;
}

} // namespace

std::vector<std::string> synthetic_signal_lexicon(const std::string& trait) {
    const std::string stem = sanitize_trait(trait);
    std::vector<std::string> words;
    words.reserve(40);
    for (int i = 0; i < 40; ++i) {
        char buf[8];
        std::snprintf(buf, sizeof(buf), "%02d", i);
        words.push_back(stem + "sig" + buf);
    }
    return words;
}

std::string synthetic_lexicon_name(const std::string& trait) {
    return sanitize_trait(trait) + "_signal";
}

const std::vector<std::string>& synthetic_base_vocabulary() { return kBaseVocabulary; }

LabeledCorpus generate_synthetic(std::size_t n_docs, const TraitScheme& scheme,
                                 double signal_strength, std::uint64_t seed) {
    validate_scheme(scheme);
    if (n_docs < 10) throw ConfigError("generate_synthetic needs n_docs >= 10");
    if (signal_strength < 0.0 || signal_strength > 1.0)
        throw ConfigError("signal_strength must be in [0,1]");

    std::vector<std::vector<std::string>> signal;
    for (const auto& t : scheme.traits) signal.push_back(synthetic_signal_lexicon(t));
    const auto& base = synthetic_base_vocabulary();
    const std::size_t n_traits = scheme.traits.size();

    Rng rng(seed);
    LabeledCorpus corpus;
    corpus.scheme = scheme;
    corpus.docs.reserve(n_docs);

    for (std::size_t d = 0; d < n_docs; ++d) {
        Document doc;
        char idbuf[32];
        std::snprintf(idbuf, sizeof(idbuf), "doc%05zu", d);
        doc.id = idbuf;

        for (const auto& t : scheme.traits) doc.labels[t] = rng.coin();

        const std::size_t n_words = 80 + rng.below(81); // 80..160
        std::size_t sentence_len = 0;
        std::size_t next_break = 6 + rng.below(8);
        std::string text;
        for (std::size_t w = 0; w < n_words; ++w) {
            const std::size_t t = static_cast<std::size_t>(rng.below(n_traits));
            std::string word;
            if (doc.labels.at(scheme.traits[t]) == 1 && rng.uniform() < signal_strength) {
                word = signal[t][rng.below(signal[t].size())];
            } else {
                word = base[rng.below(base.size())];
            }
            if (!text.empty()) text += ' ';
            text += word;
            if (++sentence_len >= next_break && w + 1 < n_words) {
                text += '.';
                sentence_len = 0;
                next_break = 6 + rng.below(8);
            }
        }
        text += '.';
        doc.text = std::move(text);
        corpus.docs.push_back(std::move(doc));
    }
    return corpus;
}

} // namespace persona::corpus
