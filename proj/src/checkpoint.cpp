#include "persona/errors.hpp"
#include "persona/fusion.hpp"

#include <json.hpp>

#include <fstream>

using json = nlohmann::json;

namespace persona::fusion {

namespace {

json tensor_to_json(const nn::Tensor& t) {
    return {{"shape", t.shape}, {"data", t.data}};
}

nn::Tensor tensor_from_json(const json& j) {
    nn::Tensor t;
    t.shape = j.at("shape").get<std::vector<int>>();
    t.data = j.at("data").get<std::vector<double>>();
    if (t.data.size() != static_cast<std::size_t>(t.rows()) * static_cast<std::size_t>(t.cols()))
        throw DataError("checkpoint tensor data does not match its shape");
    return t;
}

void collect_params(Model& m, std::vector<nn::Parameter*>& out) {
    for (auto* p : m.psy.parameters()) out.push_back(p);
    for (auto* p : m.text.parameters()) out.push_back(p);
    for (auto* p : m.align_head.parameters()) out.push_back(p);
    out.push_back(&m.fusion.gate_psy_w);
    out.push_back(&m.fusion.gate_psy_b);
    out.push_back(&m.fusion.gate_text_w);
    out.push_back(&m.fusion.gate_text_b);
    for (auto& h : m.heads) {
        out.push_back(&h.w1);
        out.push_back(&h.b1);
        out.push_back(&h.w2);
        out.push_back(&h.b2);
    }
}

json ablation_to_json(const AblationConfig& a) {
    return {{"no_psyencoder", a.no_psyencoder}, {"no_text", a.no_text},
            {"no_gate", a.no_gate},             {"no_alignment", a.no_alignment},
            {"no_selection", a.no_selection}};
}

AblationConfig ablation_from_json(const json& j) {
    AblationConfig a;
    a.no_psyencoder = j.at("no_psyencoder").get<bool>();
    a.no_text = j.at("no_text").get<bool>();
    a.no_gate = j.at("no_gate").get<bool>();
    a.no_alignment = j.at("no_alignment").get<bool>();
    a.no_selection = j.at("no_selection").get<bool>();
    return a;
}

} // namespace

void save_model(const Model& model, const std::string& path) {
    json params = json::object();
    std::vector<nn::Parameter*> all;
    collect_params(const_cast<Model&>(model), all);
    for (const auto* p : all) params[p->name] = tensor_to_json(p->value);

    json vocab = json::object();
    for (const auto& [tok, id] : model.text.vocab.index) vocab[tok] = id;

    json j = {
        {"format_version", 1},
        {"scheme", {{"name", model.scheme.name}, {"traits", model.scheme.traits}}},
        {"config",
         {{"psy",
           {{"n_layers", model.config.psy.n_layers},
            {"n_heads", model.config.psy.n_heads},
            {"d_model", model.config.psy.d_model},
            {"d_ff", model.config.psy.d_ff},
            {"feature_count", model.config.psy.feature_count},
            {"pooling", model.config.psy.pooling}}},
          {"text",
           {{"variant", model.config.text.variant},
            {"vocab_size", model.config.text.vocab_size},
            {"d_text", model.config.text.d_text},
            {"max_tokens", model.config.text.max_tokens},
            {"embedding_file", model.config.text.embedding_file}}},
          {"classifier_hidden", model.config.classifier_hidden},
          {"gate_activation", model.config.gate_activation},
          {"gate_form", model.config.gate_form},
          {"ablation", ablation_to_json(model.config.ablation)}}},
        {"feature_names", model.feature_names},
        {"standardizer", {{"mean", model.standardizer.mean}, {"stddev", model.standardizer.stddev}}},
        {"vocab", vocab},
        {"frozen", {{"text", model.text.frozen}, {"align_head", model.align_head.frozen}}},
        {"params", params},
    };
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint: " + path);
    out << j.dump() << '\n';
}

Model load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw DataError("checkpoint " + path + ": " + e.what());
    }
    if (j.value("format_version", 0) != 1)
        throw DataError("checkpoint " + path + ": unsupported format version");

    Model m;
    m.scheme.name = j.at("scheme").at("name").get<std::string>();
    m.scheme.traits = j.at("scheme").at("traits").get<std::vector<std::string>>();

    const json& cfg = j.at("config");
    m.config.psy.n_layers = cfg.at("psy").at("n_layers").get<int>();
    m.config.psy.n_heads = cfg.at("psy").at("n_heads").get<int>();
    m.config.psy.d_model = cfg.at("psy").at("d_model").get<int>();
    m.config.psy.d_ff = cfg.at("psy").at("d_ff").get<int>();
    m.config.psy.feature_count = cfg.at("psy").at("feature_count").get<int>();
    m.config.psy.pooling = cfg.at("psy").value("pooling", "mean");
    m.config.text.variant = cfg.at("text").at("variant").get<std::string>();
    m.config.text.vocab_size = cfg.at("text").at("vocab_size").get<int>();
    m.config.text.d_text = cfg.at("text").at("d_text").get<int>();
    m.config.text.max_tokens = cfg.at("text").at("max_tokens").get<int>();
    m.config.text.embedding_file = cfg.at("text").at("embedding_file").get<std::string>();
    m.config.classifier_hidden = cfg.at("classifier_hidden").get<int>();
    m.config.gate_activation = cfg.value("gate_activation", "sigmoid");
    m.config.gate_form = cfg.value("gate_form", "vector");
    m.config.ablation = ablation_from_json(cfg.at("ablation"));

    m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    m.standardizer.mean = j.at("standardizer").at("mean").get<std::vector<double>>();
    m.standardizer.stddev = j.at("standardizer").at("stddev").get<std::vector<double>>();

    // Rebuild skeleton tensors with a throwaway seed, then overwrite values.
    Rng rng(0);
    m.psy = psyenc::PsyEncoderModel::init(m.config.psy, rng);

    m.text.config = m.config.text;
    for (const auto& [tok, id] : j.at("vocab").items())
        m.text.vocab.index[tok] = id.get<int>();
    if (m.config.text.variant == "bag") {
        const int rows = m.text.vocab.table_rows();
        const int d = m.config.text.d_text;
        m.text.embeddings = nn::Parameter("text.embeddings", nn::Tensor(rows, d));
        m.text.mlp_w1 = nn::Parameter("text.mlp_w1", nn::Tensor(d, d));
        m.text.mlp_b1 = nn::Parameter("text.mlp_b1", nn::Tensor(1, d));
        m.text.mlp_w2 = nn::Parameter("text.mlp_w2", nn::Tensor(d, d));
        m.text.mlp_b2 = nn::Parameter("text.mlp_b2", nn::Tensor(1, d));
    } else {
        m.text.precomputed =
            textalign::load_precomputed_embeddings(m.config.text.embedding_file, m.config.text.d_text);
    }
    m.align_head = textalign::AlignmentHead::init(m.config.text.d_text,
                                                  static_cast<int>(m.feature_names.size()), rng);

    const int dm = m.config.psy.d_model;
    const int dt = m.config.text.d_text;
    const int gout_psy = m.config.gate_form == "scalar" ? 1 : dm;
    const int gout_text = m.config.gate_form == "scalar" ? 1 : dt;
    m.fusion.gate_psy_w = nn::Parameter("fusion.gate_psy_w", nn::Tensor(dm, gout_psy));
    m.fusion.gate_psy_b = nn::Parameter("fusion.gate_psy_b", nn::Tensor(1, gout_psy));
    m.fusion.gate_text_w = nn::Parameter("fusion.gate_text_w", nn::Tensor(dt, gout_text));
    m.fusion.gate_text_b = nn::Parameter("fusion.gate_text_b", nn::Tensor(1, gout_text));

    const int fd = m.fused_dim();
    for (const auto& trait : m.scheme.traits) {
        TraitHead head;
        head.trait = trait;
        const std::string p = "head." + trait + ".";
        head.w1 = nn::Parameter(p + "w1", nn::Tensor(fd, m.config.classifier_hidden));
        head.b1 = nn::Parameter(p + "b1", nn::Tensor(1, m.config.classifier_hidden));
        head.w2 = nn::Parameter(p + "w2", nn::Tensor(m.config.classifier_hidden, 2));
        head.b2 = nn::Parameter(p + "b2", nn::Tensor(1, 2));
        m.heads.push_back(std::move(head));
    }

    const json& params = j.at("params");
    std::vector<nn::Parameter*> all;
    collect_params(m, all);
    for (auto* p : all) {
        if (!params.contains(p->name)) throw DataError("checkpoint missing parameter " + p->name);
        nn::Tensor t = tensor_from_json(params.at(p->name));
        if (!t.same_shape(p->value))
            throw DataError("checkpoint parameter " + p->name + " has shape " + t.shape_str() +
                            ", expected " + p->value.shape_str());
        p->value = std::move(t);
        p->grad = nn::Tensor(p->value.rows(), p->value.cols());
    }

    m.text.frozen = j.at("frozen").at("text").get<bool>();
    m.align_head.frozen = j.at("frozen").at("align_head").get<bool>();
    return m;
}

} // namespace persona::fusion
