#include "persona/psyencoder.hpp"

#include "persona/errors.hpp"
#include "persona/io.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

namespace persona::psyenc {

void PsyEncoderConfig::validate() const {
    if (n_layers < 1) throw ConfigError("psy encoder needs n_layers >= 1");
    if (n_heads < 1) throw ConfigError("psy encoder needs n_heads >= 1");
    if (d_model % n_heads != 0)
        throw ConfigError("psy encoder d_model " + std::to_string(d_model) +
                          " not divisible by n_heads " + std::to_string(n_heads));
    if (d_ff < 1) throw ConfigError("psy encoder needs d_ff >= 1");
    if (feature_count < 1) throw ConfigError("psy encoder needs feature_count >= 1");
    if (pooling != "mean" && pooling != "query")
        throw ConfigError("psy encoder pooling must be mean or query, got " + pooling);
}

PsyEncoderModel PsyEncoderModel::init(const PsyEncoderConfig& config, Rng& rng) {
    config.validate();
    PsyEncoderModel m;
    m.config = config;
    const int d = config.d_model;
    m.value_proj = nn::Parameter("psy.value_proj", nn::glorot_uniform(1, d, rng));
    m.feature_embed =
        nn::Parameter("psy.feature_embed", nn::glorot_uniform(config.feature_count, d, rng));
    if (config.pooling == "query")
        m.pool_query = nn::Parameter("psy.pool_query", nn::glorot_uniform(1, d, rng));
    for (int l = 0; l < config.n_layers; ++l) {
        const std::string p = "psy.layer" + std::to_string(l) + ".";
        EncoderLayerParams layer;
        layer.mha.w_q = nn::Parameter(p + "w_q", nn::glorot_uniform(d, d, rng));
        layer.mha.w_k = nn::Parameter(p + "w_k", nn::glorot_uniform(d, d, rng));
        layer.mha.w_v = nn::Parameter(p + "w_v", nn::glorot_uniform(d, d, rng));
        layer.mha.w_o = nn::Parameter(p + "w_o", nn::glorot_uniform(d, d, rng));
        layer.mha.b_q = nn::Parameter(p + "b_q", nn::Tensor(1, d));
        layer.mha.b_k = nn::Parameter(p + "b_k", nn::Tensor(1, d));
        layer.mha.b_v = nn::Parameter(p + "b_v", nn::Tensor(1, d));
        layer.mha.b_o = nn::Parameter(p + "b_o", nn::Tensor(1, d));
        layer.ln1_gain = nn::Parameter(p + "ln1_gain", nn::Tensor(1, d, 1.0));
        layer.ln1_bias = nn::Parameter(p + "ln1_bias", nn::Tensor(1, d));
        layer.ln2_gain = nn::Parameter(p + "ln2_gain", nn::Tensor(1, d, 1.0));
        layer.ln2_bias = nn::Parameter(p + "ln2_bias", nn::Tensor(1, d));
        layer.ff_w1 = nn::Parameter(p + "ff_w1", nn::glorot_uniform(d, config.d_ff, rng));
        layer.ff_b1 = nn::Parameter(p + "ff_b1", nn::Tensor(1, config.d_ff));
        layer.ff_w2 = nn::Parameter(p + "ff_w2", nn::glorot_uniform(config.d_ff, d, rng));
        layer.ff_b2 = nn::Parameter(p + "ff_b2", nn::Tensor(1, d));
        m.layers.push_back(std::move(layer));
    }
    return m;
}

std::vector<nn::Parameter*> PsyEncoderModel::parameters() {
    std::vector<nn::Parameter*> out{&value_proj, &feature_embed};
    if (config.pooling == "query") out.push_back(&pool_query);
    for (auto& l : layers) {
        out.push_back(&l.mha.w_q);
        out.push_back(&l.mha.w_k);
        out.push_back(&l.mha.w_v);
        out.push_back(&l.mha.w_o);
        out.push_back(&l.mha.b_q);
        out.push_back(&l.mha.b_k);
        out.push_back(&l.mha.b_v);
        out.push_back(&l.mha.b_o);
        out.push_back(&l.ln1_gain);
        out.push_back(&l.ln1_bias);
        out.push_back(&l.ln2_gain);
        out.push_back(&l.ln2_bias);
        out.push_back(&l.ff_w1);
        out.push_back(&l.ff_b1);
        out.push_back(&l.ff_w2);
        out.push_back(&l.ff_b2);
    }
    return out;
}

PsyBinding PsyBinding::bind(nn::Tape& tape, PsyEncoderModel& model) {
    PsyBinding b;
    b.n_heads = model.config.n_heads;
    b.pooling = model.config.pooling;
    b.value_proj = tape.param(model.value_proj);
    b.feature_embed = tape.param(model.feature_embed);
    if (b.pooling == "query") b.pool_query = tape.param(model.pool_query);
    for (auto& l : model.layers) {
        LayerVars lv;
        lv.mha = nn::MhaVars::bind(tape, l.mha);
        lv.ln1_gain = tape.param(l.ln1_gain);
        lv.ln1_bias = tape.param(l.ln1_bias);
        lv.ln2_gain = tape.param(l.ln2_gain);
        lv.ln2_bias = tape.param(l.ln2_bias);
        lv.ff_w1 = tape.param(l.ff_w1);
        lv.ff_b1 = tape.param(l.ff_b1);
        lv.ff_w2 = tape.param(l.ff_w2);
        lv.ff_b2 = tape.param(l.ff_b2);
        b.layers.push_back(lv);
    }
    return b;
}

PsyBinding PsyBinding::bind_frozen(nn::Tape& tape, const PsyEncoderModel& model) {
    PsyBinding b;
    b.n_heads = model.config.n_heads;
    b.pooling = model.config.pooling;
    b.value_proj = tape.frozen(model.value_proj);
    b.feature_embed = tape.frozen(model.feature_embed);
    if (b.pooling == "query") b.pool_query = tape.frozen(model.pool_query);
    for (const auto& l : model.layers) {
        LayerVars lv;
        lv.mha = nn::MhaVars::bind_frozen(tape, l.mha);
        lv.ln1_gain = tape.frozen(l.ln1_gain);
        lv.ln1_bias = tape.frozen(l.ln1_bias);
        lv.ln2_gain = tape.frozen(l.ln2_gain);
        lv.ln2_bias = tape.frozen(l.ln2_bias);
        lv.ff_w1 = tape.frozen(l.ff_w1);
        lv.ff_b1 = tape.frozen(l.ff_b1);
        lv.ff_w2 = tape.frozen(l.ff_w2);
        lv.ff_b2 = tape.frozen(l.ff_b2);
        b.layers.push_back(lv);
    }
    return b;
}

nn::Var PsyBinding::tokenize_features(nn::Tape& tape, nn::Var w) const {
    const auto& wv = tape.value(w);
    const auto& ev = tape.value(feature_embed);
    if (wv.rows() != 1 || wv.cols() != ev.rows())
        throw ConfigError("tokenize_features: feature vector " + wv.shape_str() +
                          " does not match embedding table " + ev.shape_str());
    return tape.outer_add(w, value_proj, feature_embed);
}

nn::Var PsyBinding::encode(nn::Tape& tape, nn::Var w, std::vector<nn::Var>* attention) const {
    nn::Var x = tokenize_features(tape, w);
    for (const auto& l : layers) {
        nn::Var attended = nn::multi_head_attention(tape, x, l.mha, n_heads, attention);
        x = tape.layer_norm_rows(tape.add(attended, x), l.ln1_gain, l.ln1_bias);
        nn::Var h = tape.relu(tape.dense(x, l.ff_w1, l.ff_b1));
        nn::Var ff = tape.dense(h, l.ff_w2, l.ff_b2);
        x = tape.layer_norm_rows(tape.add(ff, x), l.ln2_gain, l.ln2_bias);
    }
    if (pooling == "query") {
        const double scale = 1.0 / std::sqrt(static_cast<double>(tape.value(x).cols()));
        nn::Var scores = tape.affine(tape.matmul_nt(pool_query, x), scale, 0.0); // 1 x F
        nn::Var weights = tape.softmax_rows(scores);
        return tape.matmul(weights, x); // 1 x d_model
    }
    return tape.mean_rows(x);
}

void save_attention_csv(const std::vector<nn::Tensor>& maps, int n_heads,
                        const std::vector<std::string>& feature_names, const std::string& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (!fs::is_directory(dir)) throw DataError("cannot create attention directory: " + dir);
    for (std::size_t m = 0; m < maps.size(); ++m) {
        const std::size_t layer = m / static_cast<std::size_t>(n_heads);
        const std::size_t head = m % static_cast<std::size_t>(n_heads);
        const std::string name =
            "attention_L" + std::to_string(layer) + "_H" + std::to_string(head) + ".csv";
        std::ofstream out(fs::path(dir) / name, std::ios::binary);
        if (!out) throw DataError("cannot write attention map: " + name);
        out << "feature";
        for (const auto& f : feature_names) out << ',' << f;
        out << '\n';
        const auto& map = maps[m];
        for (int i = 0; i < map.rows(); ++i) {
            out << feature_names[static_cast<std::size_t>(i)];
            for (int j = 0; j < map.cols(); ++j) out << ',' << io::fmt_double(map.at(i, j));
            out << '\n';
        }
    }
}

PsyEncoding encode_inference(const PsyEncoderModel& model, const std::vector<double>& w_std,
                             bool keep_attention) {
    nn::Tape tape;
    nn::Tensor w(1, static_cast<int>(w_std.size()));
    w.data = w_std;
    nn::Var wv = tape.leaf(std::move(w));
    PsyBinding binding = PsyBinding::bind_frozen(tape, model);
    std::vector<nn::Var> attn;
    nn::Var pooled = binding.encode(tape, wv, keep_attention ? &attn : nullptr);

    PsyEncoding out;
    out.f_psy = tape.value(pooled).data;
    for (nn::Var a : attn) out.attention_maps.push_back(tape.value(a));
    return out;
}

} // namespace persona::psyenc
