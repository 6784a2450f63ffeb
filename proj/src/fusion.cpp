#include "persona/fusion.hpp"

#include "persona/errors.hpp"

#include <algorithm>
#include <cmath>

namespace persona::fusion {

void AblationConfig::validate() const {
    if (no_psyencoder && no_text)
        throw ConfigError("ablation disables both the psy and text paths; nothing left to fuse");
}

void ModelConfig::validate() const {
    ablation.validate();
    if (gate_activation != "sigmoid" && gate_activation != "linear")
        throw ConfigError("gate_activation must be sigmoid or linear, got " + gate_activation);
    if (gate_form != "vector" && gate_form != "scalar")
        throw ConfigError("gate_form must be vector or scalar, got " + gate_form);
}

Model Model::init(const corpus::TraitScheme& scheme, const ModelConfig& config,
                  const corpus::LabeledCorpus& corpus, const std::vector<std::size_t>& train_idx,
                  std::vector<std::string> feature_names, featselect::Standardizer standardizer,
                  Rng& rng) {
    config.validate();
    Model m;
    m.scheme = scheme;
    m.config = config;
    m.config.psy.feature_count = static_cast<int>(feature_names.size());
    m.feature_names = std::move(feature_names);
    m.standardizer = std::move(standardizer);

    m.psy = psyenc::PsyEncoderModel::init(m.config.psy, rng);
    m.text = textalign::TextEncoder::init(m.config.text, corpus, train_idx, rng);
    m.align_head = textalign::AlignmentHead::init(m.config.text.d_text,
                                                  static_cast<int>(m.feature_names.size()), rng);

    const int dm = m.config.psy.d_model;
    const int dt = m.config.text.d_text;
    const int gout_psy = config.gate_form == "scalar" ? 1 : dm;
    const int gout_text = config.gate_form == "scalar" ? 1 : dt;
    m.fusion.gate_psy_w = nn::Parameter("fusion.gate_psy_w", nn::glorot_uniform(dm, gout_psy, rng));
    m.fusion.gate_psy_b = nn::Parameter("fusion.gate_psy_b", nn::Tensor(1, gout_psy));
    m.fusion.gate_text_w =
        nn::Parameter("fusion.gate_text_w", nn::glorot_uniform(dt, gout_text, rng));
    m.fusion.gate_text_b = nn::Parameter("fusion.gate_text_b", nn::Tensor(1, gout_text));

    const int fd = m.fused_dim();
    for (const auto& trait : scheme.traits) {
        TraitHead head;
        head.trait = trait;
        const std::string p = "head." + trait + ".";
        head.w1 = nn::Parameter(p + "w1", nn::glorot_uniform(fd, config.classifier_hidden, rng));
        head.b1 = nn::Parameter(p + "b1", nn::Tensor(1, config.classifier_hidden));
        head.w2 = nn::Parameter(p + "w2", nn::glorot_uniform(config.classifier_hidden, 2, rng));
        head.b2 = nn::Parameter(p + "b2", nn::Tensor(1, 2));
        m.heads.push_back(std::move(head));
    }
    return m;
}

int Model::fused_dim() const {
    int d = 0;
    if (!config.ablation.no_psyencoder) d += config.psy.d_model;
    if (!config.ablation.no_text) d += config.text.d_text;
    return d;
}

std::vector<nn::Parameter*> Model::phase2_parameters() {
    std::vector<nn::Parameter*> out;
    if (!config.ablation.no_psyencoder)
        for (auto* p : psy.parameters()) out.push_back(p);
    if (!config.ablation.no_gate) {
        if (!config.ablation.no_psyencoder) {
            out.push_back(&fusion.gate_psy_w);
            out.push_back(&fusion.gate_psy_b);
        }
        if (!config.ablation.no_text) {
            out.push_back(&fusion.gate_text_w);
            out.push_back(&fusion.gate_text_b);
        }
    }
    for (auto& h : heads) {
        out.push_back(&h.w1);
        out.push_back(&h.b1);
        out.push_back(&h.w2);
        out.push_back(&h.b2);
    }
    return out;
}

ModelBinding ModelBinding::bind(nn::Tape& tape, Model& model, bool trainable) {
    ModelBinding b;
    b.model = &model;
    const auto& ab = model.config.ablation;
    if (!ab.no_psyencoder)
        b.psy = trainable ? psyenc::PsyBinding::bind(tape, model.psy)
                          : psyenc::PsyBinding::bind_frozen(tape, model.psy);
    if (!ab.no_text) b.text = textalign::TextBinding::bind_frozen(tape, model.text);
    if (!ab.no_gate) {
        if (!ab.no_psyencoder) {
            b.gate_psy_w = trainable ? tape.param(model.fusion.gate_psy_w)
                                     : tape.frozen(model.fusion.gate_psy_w);
            b.gate_psy_b = trainable ? tape.param(model.fusion.gate_psy_b)
                                     : tape.frozen(model.fusion.gate_psy_b);
        }
        if (!ab.no_text) {
            b.gate_text_w = trainable ? tape.param(model.fusion.gate_text_w)
                                      : tape.frozen(model.fusion.gate_text_w);
            b.gate_text_b = trainable ? tape.param(model.fusion.gate_text_b)
                                      : tape.frozen(model.fusion.gate_text_b);
        }
    }
    for (auto& h : model.heads) {
        HeadVars hv;
        hv.w1 = trainable ? tape.param(h.w1) : tape.frozen(h.w1);
        hv.b1 = trainable ? tape.param(h.b1) : tape.frozen(h.b1);
        hv.w2 = trainable ? tape.param(h.w2) : tape.frozen(h.w2);
        hv.b2 = trainable ? tape.param(h.b2) : tape.frozen(h.b2);
        b.heads.push_back(hv);
    }
    return b;
}

ModelBinding ModelBinding::bind_inference(nn::Tape& tape, const Model& model) {
    // Inference never writes gradients, so the const_cast never bites.
    return bind(tape, const_cast<Model&>(model), false);
}

nn::Var ModelBinding::fused(nn::Tape& tape, const corpus::Document& doc,
                            const std::vector<double>& w_std,
                            std::vector<nn::Var>* attention) const {
    const auto& ab = model->config.ablation;
    nn::Var psy_half, text_half;

    auto gated = [&](nn::Var half, nn::Var w, nn::Var b) {
        nn::Var gate = tape.dense(half, w, b);
        if (model->config.gate_activation == "sigmoid") gate = tape.sigmoid(gate);
        return model->config.gate_form == "scalar" ? tape.mul_scalar(half, gate)
                                                   : tape.mul(half, gate);
    };

    if (!ab.no_psyencoder) {
        nn::Tensor w(1, static_cast<int>(w_std.size()));
        w.data = w_std;
        nn::Var wv = tape.leaf(std::move(w));
        psy_half = psy->encode(tape, wv, attention);
        if (!ab.no_gate) psy_half = gated(psy_half, gate_psy_w, gate_psy_b);
    }
    if (!ab.no_text) {
        text_half = text.encode(tape, doc);
        if (!ab.no_gate) text_half = gated(text_half, gate_text_w, gate_text_b);
    }

    nn::Var out;
    if (psy_half.valid() && text_half.valid())
        out = tape.concat_cols(psy_half, text_half);
    else
        out = psy_half.valid() ? psy_half : text_half;
    if (tape.value(out).cols() != model->fused_dim())
        throw ConfigError("fused vector has wrong length");
    return out;
}

std::vector<nn::Var> ModelBinding::trait_logits(nn::Tape& tape, nn::Var fused_vec) const {
    std::vector<nn::Var> out;
    out.reserve(heads.size());
    for (const auto& h : heads) {
        nn::Var hidden = tape.relu(tape.dense(fused_vec, h.w1, h.b1));
        out.push_back(tape.dense(hidden, h.w2, h.b2));
    }
    return out;
}

std::vector<std::pair<double, double>> classify(const Model& model, const corpus::Document& doc,
                                                const std::vector<double>& selected_row) {
    nn::Tape tape;
    ModelBinding b = ModelBinding::bind_inference(tape, model);
    nn::Var f = b.fused(tape, doc, model.standardized_features(selected_row));
    std::vector<std::pair<double, double>> out;
    for (nn::Var logits : b.trait_logits(tape, f)) {
        nn::Var probs = tape.softmax_rows(logits);
        out.emplace_back(tape.value(probs).at(0, 0), tape.value(probs).at(0, 1));
    }
    return out;
}

namespace {

std::vector<std::size_t> matrix_row_lookup(const corpus::LabeledCorpus& corpus,
                                           const textfeat::FeatureMatrix& matrix) {
    if (matrix.n_docs() != corpus.size())
        throw DataError("feature matrix has " + std::to_string(matrix.n_docs()) +
                        " rows for a corpus of " + std::to_string(corpus.size()));
    std::vector<std::size_t> rows(corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        if (matrix.doc_ids[i] != corpus.docs[i].id)
            throw DataError("feature matrix row order does not match corpus (row " +
                            std::to_string(i) + ")");
        rows[i] = i;
    }
    return rows;
}

struct Predictions {
    std::vector<std::vector<int>> by_trait; // [trait][doc in idx order]
};

Predictions predict(const Model& model, const corpus::LabeledCorpus& corpus,
                    const std::vector<std::size_t>& idx,
                    const std::vector<std::vector<double>>& std_rows) {
    Predictions preds;
    preds.by_trait.assign(model.scheme.traits.size(), {});
    for (auto i : idx) {
        nn::Tape tape;
        ModelBinding b = ModelBinding::bind_inference(tape, model);
        nn::Var f = b.fused(tape, corpus.docs[i], std_rows[i]);
        auto logits = b.trait_logits(tape, f);
        for (std::size_t t = 0; t < logits.size(); ++t) {
            const auto& lv = tape.value(logits[t]);
            preds.by_trait[t].push_back(lv.at(0, 1) > lv.at(0, 0) ? 1 : 0);
        }
    }
    return preds;
}

EvalResult accuracy_of(const Model& model, const corpus::LabeledCorpus& corpus,
                       const std::vector<std::size_t>& idx,
                       const std::vector<std::vector<double>>& std_rows) {
    if (idx.empty()) throw DataError("evaluate: empty document set");
    Predictions preds = predict(model, corpus, idx, std_rows);
    EvalResult res;
    res.traits = model.scheme.traits;
    double sum = 0.0;
    for (std::size_t t = 0; t < res.traits.size(); ++t) {
        std::size_t correct = 0;
        for (std::size_t k = 0; k < idx.size(); ++k)
            if (preds.by_trait[t][k] == corpus.docs[idx[k]].labels.at(res.traits[t])) ++correct;
        const double acc = static_cast<double>(correct) / static_cast<double>(idx.size());
        res.accuracy.push_back(acc);
        sum += acc;
    }
    res.mean = sum / static_cast<double>(res.traits.size());
    return res;
}

} // namespace

TrainingLog train_phase2(Model& model, const corpus::LabeledCorpus& corpus,
                         const corpus::SplitIndices& split,
                         const textfeat::FeatureMatrix& selected_matrix, const Phase2Config& cfg) {
    const auto& ab = model.config.ablation;
    if (!ab.no_text && !model.text.frozen)
        throw ConfigError("train_phase2: text encoder must be frozen before phase 2");
    if (!ab.no_text && !ab.no_alignment && !model.align_head.frozen)
        throw ConfigError("train_phase2: alignment head must be frozen before phase 2");
    if (cfg.only_trait >= static_cast<int>(model.scheme.traits.size()))
        throw ConfigError("train_phase2: only_trait index out of range");
    matrix_row_lookup(corpus, selected_matrix);

    std::vector<std::vector<double>> std_rows(corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i)
        std_rows[i] = model.standardized_features(selected_matrix.rows[i]);

    std::vector<nn::Parameter*> params = model.phase2_parameters();
    nn::Adam adam({cfg.lr});
    Rng rng(cfg.seed);
    std::vector<std::size_t> order = split.train;

    TrainingLog log;
    log.traits = model.scheme.traits;

    double best_val = -1.0;
    std::vector<nn::Tensor> best_values;

    auto snapshot = [&]() {
        best_values.clear();
        for (auto* p : params) best_values.push_back(p->value);
    };

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            nn::Tape tape;
            ModelBinding b = ModelBinding::bind(tape, model, true);
            nn::Var total;
            for (std::size_t k = start; k < end; ++k) {
                const std::size_t i = order[k];
                nn::Var f = b.fused(tape, corpus.docs[i], std_rows[i]);
                auto logits = b.trait_logits(tape, f);
                for (std::size_t t = 0; t < logits.size(); ++t) {
                    if (cfg.only_trait >= 0 && static_cast<int>(t) != cfg.only_trait) continue;
                    const int label = corpus.docs[i].labels.at(model.scheme.traits[t]);
                    nn::Var loss = tape.cross_entropy(logits[t], label);
                    total = total.valid() ? tape.add(total, loss) : loss;
                }
            }
            nn::Var mean = tape.affine(total, 1.0 / static_cast<double>(end - start), 0.0);
            epoch_loss += tape.value(mean).data[0] * static_cast<double>(end - start);
            for (auto* p : params) p->zero_grad();
            tape.backward(mean);
            adam.step(params);
        }

        EvalResult val = accuracy_of(model, corpus, split.val, std_rows);
        EpochRow row;
        row.epoch = epoch;
        row.train_loss = epoch_loss / static_cast<double>(order.size());
        row.val_accuracy = val.accuracy;
        row.val_mean = val.mean;
        log.rows.push_back(row);

        const double selection_metric =
            cfg.only_trait >= 0 ? val.accuracy[static_cast<std::size_t>(cfg.only_trait)]
                                : val.mean;
        if (selection_metric > best_val) {
            best_val = selection_metric;
            log.best_epoch = epoch;
            snapshot();
        }
    }

    if (!best_values.empty())
        for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best_values[i];
    return log;
}

EvalResult evaluate(const Model& model, const corpus::LabeledCorpus& corpus,
                    const std::vector<std::size_t>& idx,
                    const textfeat::FeatureMatrix& selected_matrix) {
    matrix_row_lookup(corpus, selected_matrix);
    std::vector<std::vector<double>> std_rows(corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i)
        std_rows[i] = model.standardized_features(selected_matrix.rows[i]);
    return accuracy_of(model, corpus, idx, std_rows);
}

} // namespace persona::fusion
