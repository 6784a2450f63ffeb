#include "persona/textalign.hpp"

#include "persona/errors.hpp"
#include "persona/textfeat.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

namespace persona::textalign {

void TextEncoderConfig::validate() const {
    if (variant != "bag" && variant != "precomputed")
        throw ConfigError("text encoder variant must be bag or precomputed, got " + variant);
    if (max_tokens < 1) throw ConfigError("text encoder max_tokens must be >= 1");
    if (d_text < 1) throw ConfigError("text encoder d_text must be >= 1");
    if (variant == "bag" && vocab_size < 1) throw ConfigError("bag encoder vocab_size must be >= 1");
    if (variant == "precomputed" && embedding_file.empty())
        throw ConfigError("precomputed text encoder needs embedding_file");
}

Vocabulary Vocabulary::build(const corpus::LabeledCorpus& corpus,
                             const std::vector<std::size_t>& train_idx, int max_size) {
    std::map<std::string, std::size_t> counts;
    for (auto i : train_idx)
        for (const auto& tok : textfeat::tokenize(corpus::clean_for_text_encoder(corpus.docs[i].text)))
            ++counts[tok];

    std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (ranked.size() > static_cast<std::size_t>(max_size)) ranked.resize(static_cast<std::size_t>(max_size));

    Vocabulary v;
    int next = 0;
    // Rows in lexicographic order so the table layout is independent of count
    // ties beyond the cut.
    std::sort(ranked.begin(), ranked.end());
    for (const auto& [tok, _] : ranked) v.index[tok] = next++;
    return v;
}

std::vector<int> Vocabulary::ids_for(const std::string& cleaned_text, int max_tokens) const {
    std::vector<int> ids;
    const auto tokens = textfeat::tokenize(cleaned_text);
    const std::size_t n = std::min<std::size_t>(tokens.size(), static_cast<std::size_t>(max_tokens));
    ids.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto it = index.find(tokens[i]);
        ids.push_back(it != index.end() ? it->second : unk_id());
    }
    if (ids.empty()) ids.push_back(unk_id());
    return ids;
}

std::string encoder_input_text(const corpus::Document& doc) {
    return corpus::clean_for_text_encoder(doc.text);
}

TextEncoder TextEncoder::init(const TextEncoderConfig& config, const corpus::LabeledCorpus& corpus,
                              const std::vector<std::size_t>& train_idx, Rng& rng) {
    config.validate();
    TextEncoder enc;
    enc.config = config;
    if (config.variant == "bag") {
        enc.vocab = Vocabulary::build(corpus, train_idx, config.vocab_size);
        const int rows = enc.vocab.table_rows();
        const int d = config.d_text;
        enc.embeddings = nn::Parameter("text.embeddings", nn::glorot_uniform(rows, d, rng));
        enc.mlp_w1 = nn::Parameter("text.mlp_w1", nn::glorot_uniform(d, d, rng));
        enc.mlp_b1 = nn::Parameter("text.mlp_b1", nn::Tensor(1, d));
        enc.mlp_w2 = nn::Parameter("text.mlp_w2", nn::glorot_uniform(d, d, rng));
        enc.mlp_b2 = nn::Parameter("text.mlp_b2", nn::Tensor(1, d));
    } else {
        enc.precomputed = load_precomputed_embeddings(config.embedding_file, config.d_text);
        for (const auto& doc : corpus.docs)
            if (!enc.precomputed.count(doc.id))
                throw DataError("precomputed embeddings missing doc id " + doc.id);
    }
    return enc;
}

std::vector<nn::Parameter*> TextEncoder::parameters() {
    if (config.variant != "bag") return {};
    return {&embeddings, &mlp_w1, &mlp_b1, &mlp_w2, &mlp_b2};
}

std::map<std::string, std::vector<double>> load_precomputed_embeddings(const std::string& path,
                                                                       int expect_d_text) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open embedding file: " + path);
    std::string header;
    if (!std::getline(in, header)) throw DataError("embedding file is empty: " + path);
    std::istringstream hs(header);
    int d = 0;
    std::size_t count = 0;
    if (!(hs >> d >> count)) throw DataError("embedding file header must be `d_text count`: " + path);
    if (d != expect_d_text)
        throw DataError("embedding file d_text " + std::to_string(d) + " != configured " +
                        std::to_string(expect_d_text));

    std::map<std::string, std::vector<double>> table;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string id;
        ls >> id;
        std::vector<double> vec(static_cast<std::size_t>(d));
        for (auto& v : vec)
            if (!(ls >> v)) throw DataError("embedding record for " + id + " is too short");
        table[id] = std::move(vec);
    }
    if (table.size() != count)
        throw DataError("embedding file declares " + std::to_string(count) + " records, found " +
                        std::to_string(table.size()));
    return table;
}

AlignmentHead AlignmentHead::init(int d_text, int l, Rng& rng) {
    AlignmentHead h;
    h.w = nn::Parameter("align.w", nn::glorot_uniform(d_text, l, rng));
    h.b = nn::Parameter("align.b", nn::Tensor(1, l));
    return h;
}

TextBinding TextBinding::bind(nn::Tape& tape, TextEncoder& enc) {
    TextBinding b;
    b.encoder = &enc;
    if (enc.trainable()) {
        b.embeddings = tape.param(enc.embeddings);
        b.w1 = tape.param(enc.mlp_w1);
        b.b1 = tape.param(enc.mlp_b1);
        b.w2 = tape.param(enc.mlp_w2);
        b.b2 = tape.param(enc.mlp_b2);
    }
    return b;
}

TextBinding TextBinding::bind_frozen(nn::Tape& tape, const TextEncoder& enc) {
    TextBinding b;
    b.encoder = &enc;
    if (enc.trainable()) {
        b.embeddings = tape.frozen(enc.embeddings);
        b.w1 = tape.frozen(enc.mlp_w1);
        b.b1 = tape.frozen(enc.mlp_b1);
        b.w2 = tape.frozen(enc.mlp_w2);
        b.b2 = tape.frozen(enc.mlp_b2);
    }
    return b;
}

nn::Var TextBinding::encode(nn::Tape& tape, const corpus::Document& doc) const {
    const TextEncoder& enc = *encoder;
    if (enc.config.variant == "precomputed") {
        auto it = enc.precomputed.find(doc.id);
        if (it == enc.precomputed.end())
            throw DataError("no precomputed embedding for doc id " + doc.id);
        nn::Tensor t(1, enc.config.d_text);
        t.data = it->second;
        return tape.leaf(std::move(t));
    }
    const auto ids = enc.vocab.ids_for(encoder_input_text(doc), enc.config.max_tokens);
    nn::Var mean = tape.embedding_mean(embeddings, ids);
    nn::Var h = tape.relu(tape.dense(mean, w1, b1));
    return tape.dense(h, w2, b2);
}

HeadBinding HeadBinding::bind(nn::Tape& tape, AlignmentHead& head) {
    return {tape.param(head.w), tape.param(head.b)};
}

HeadBinding HeadBinding::bind_frozen(nn::Tape& tape, const AlignmentHead& head) {
    return {tape.frozen(head.w), tape.frozen(head.b)};
}

nn::Var HeadBinding::project(nn::Tape& tape, nn::Var h) const {
    return tape.dense(h, w, b);
}

nn::Var alignment_loss(nn::Tape& tape, nn::Var projected, nn::Var target) {
    return tape.affine(tape.cosine_similarity(projected, target), -1.0, 1.0);
}

namespace {

nn::Tensor row_tensor(const std::vector<double>& v) {
    nn::Tensor t(1, static_cast<int>(v.size()));
    t.data = v;
    return t;
}

} // namespace

double eval_alignment(const TextEncoder& encoder, const AlignmentHead& head,
                      const corpus::LabeledCorpus& corpus, const std::vector<std::size_t>& idx,
                      const std::vector<std::vector<double>>& targets_by_doc) {
    if (idx.empty()) throw DataError("eval_alignment: empty document set");
    double sum = 0.0;
    bool warned = false;
    for (auto i : idx) {
        nn::Tape tape;
        TextBinding text = TextBinding::bind_frozen(tape, encoder);
        HeadBinding hb = HeadBinding::bind_frozen(tape, head);
        nn::Var projected = hb.project(tape, text.encode(tape, corpus.docs[i]));
        nn::Var target = tape.leaf(row_tensor(targets_by_doc[i]));
        sum += tape.value(tape.cosine_similarity(projected, target)).data[0];
        if (tape.saw_zero_cosine() && !warned) {
            std::cerr << "warning: zero vector in cosine similarity (doc " << corpus.docs[i].id
                      << "), similarity taken as 0\n";
            warned = true;
        }
    }
    return sum / static_cast<double>(idx.size());
}

AlignmentResult train_alignment(TextEncoder& encoder, AlignmentHead& head,
                                const corpus::LabeledCorpus& corpus,
                                const std::vector<std::size_t>& train_idx,
                                const std::vector<std::size_t>& val_idx,
                                const std::vector<std::vector<double>>& targets_by_doc,
                                const AlignmentTrainConfig& cfg) {
    if (encoder.frozen || head.frozen)
        throw ConfigError("train_alignment: encoder or head is already frozen");
    if (train_idx.empty()) throw DataError("train_alignment: empty training set");

    AlignmentResult result;
    result.val_cosine_before = eval_alignment(encoder, head, corpus, val_idx, targets_by_doc);

    std::vector<nn::Parameter*> params = encoder.parameters();
    for (auto* p : head.parameters()) params.push_back(p);

    nn::Adam adam({cfg.lr});
    Rng rng(cfg.seed);
    std::vector<std::size_t> order = train_idx;
    bool warned_zero = false;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            nn::Tape tape;
            TextBinding text = TextBinding::bind(tape, encoder);
            HeadBinding hb = HeadBinding::bind(tape, head);
            nn::Var total;
            for (std::size_t k = start; k < end; ++k) {
                const auto& doc = corpus.docs[order[k]];
                nn::Var projected = hb.project(tape, text.encode(tape, doc));
                nn::Var target = tape.leaf(row_tensor(targets_by_doc[order[k]]));
                nn::Var loss = alignment_loss(tape, projected, target);
                total = total.valid() ? tape.add(total, loss) : loss;
            }
            nn::Var mean = tape.affine(total, 1.0 / static_cast<double>(end - start), 0.0);
            epoch_loss += tape.value(mean).data[0] * static_cast<double>(end - start);
            for (auto* p : params) p->zero_grad();
            tape.backward(mean);
            adam.step(params);
            if (tape.saw_zero_cosine() && !warned_zero) {
                std::cerr << "warning: zero vector in cosine similarity during alignment, "
                             "loss taken as 1\n";
                warned_zero = true;
            }
        }
        result.epoch_mean_loss.push_back(epoch_loss / static_cast<double>(order.size()));
    }

    encoder.frozen = true;
    head.frozen = true;
    result.val_cosine_after = eval_alignment(encoder, head, corpus, val_idx, targets_by_doc);
    return result;
}

} // namespace persona::textalign
