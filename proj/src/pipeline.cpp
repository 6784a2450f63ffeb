#include "persona/pipeline.hpp"

#include "persona/errors.hpp"
#include "persona/io.hpp"
#include "persona/rng.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <sstream>

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace persona::pipeline {

namespace {

void require_artifact(const std::string& path, const std::string& produced_by) {
    if (!io::file_exists(path))
        throw DataError("missing artifact " + path + "; run `" + produced_by + "` first");
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (!fs::is_directory(dir)) throw DataError("cannot create directory: " + dir);
}

corpus::TraitScheme scheme_from_json(const json& j) {
    if (j.is_string()) return corpus::TraitScheme::by_name(j.get<std::string>());
    corpus::TraitScheme s;
    s.name = j.at("name").get<std::string>();
    s.traits = j.at("traits").get<std::vector<std::string>>();
    if (s.traits.empty()) throw ConfigError("scheme has no traits");
    return s;
}

json scheme_to_json(const corpus::TraitScheme& s) {
    if (s.name == "big_five" || s.name == "mbti") return s.name;
    return {{"name", s.name}, {"traits", s.traits}};
}

} // namespace

std::string RunConfig::out_path(const std::string& name) const {
    return (fs::path(out_dir) / name).string();
}

std::string RunConfig::input_path(const std::string& name) const {
    const std::string& dir = stage_in_dir.empty() ? out_dir : stage_in_dir;
    return (fs::path(dir) / name).string();
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw ConfigError("config " + path + ": " + e.what());
    }
    return from_json(j);
}

RunConfig RunConfig::from_json(const json& j) {
    if (j.value("version", 0) != 1) throw ConfigError("config version must be 1");
    RunConfig c;
    if (j.contains("paths")) {
        const json& p = j.at("paths");
        c.corpus_path = p.value("corpus", "");
        c.catalog_path = p.value("catalog", "");
        c.lexicon_dir = p.value("lexicon_dir", "");
        c.out_dir = p.value("out_dir", "out");
        c.stage_in_dir = p.value("stage_in_dir", "");
    }
    if (j.contains("scheme")) c.scheme = scheme_from_json(j.at("scheme"));
    if (j.contains("selection")) c.selection_threshold = j.at("selection").value("threshold", 0.2);
    if (j.contains("psyencoder")) {
        const json& p = j.at("psyencoder");
        c.psy.n_layers = p.value("n_layers", 8);
        c.psy.n_heads = p.value("n_heads", 4);
        c.psy.d_model = p.value("d_model", 64);
        c.psy.d_ff = p.value("d_ff", 256);
        c.psy.pooling = p.value("pooling", "mean");
    }
    if (j.contains("fusion")) {
        c.gate_activation = j.at("fusion").value("gate_activation", "sigmoid");
        c.gate_form = j.at("fusion").value("gate_form", "vector");
    }
    if (j.contains("textencoder")) {
        const json& t = j.at("textencoder");
        c.text.variant = t.value("variant", "bag");
        c.text.vocab_size = t.value("vocab_size", 1000);
        c.text.d_text = t.value("d_text", 128);
        c.text.max_tokens = t.value("max_tokens", 510);
        c.text.embedding_file = t.value("embedding_file", "");
    }
    if (j.contains("training")) {
        const json& t = j.at("training");
        c.phase1_epochs = t.value("phase1_epochs", 30);
        c.phase2_epochs = t.value("phase2_epochs", 30);
        c.lr = t.value("lr", 1e-3);
        c.batch_size = t.value("batch_size", 32);
        if (t.contains("seed")) {
            c.seed = t.at("seed").get<std::uint64_t>();
            c.seed_set = true;
        }
        if (t.contains("split")) {
            c.train_frac = t.at("split").value("train_frac", 0.7);
            c.val_frac = t.at("split").value("val_frac", 0.2);
            c.test_frac = t.at("split").value("test_frac", 0.1);
        }
        c.stratify_by = t.value("stratify_by", "");
        c.classifier_hidden = t.value("classifier_hidden", 32);
        c.per_trait_models = t.value("per_trait_models", false);
    }
    if (j.contains("ablation")) {
        const json& a = j.at("ablation");
        c.ablation.no_psyencoder = a.value("no_psyencoder", false);
        c.ablation.no_text = a.value("no_text", false);
        c.ablation.no_gate = a.value("no_gate", false);
        c.ablation.no_alignment = a.value("no_alignment", false);
        c.ablation.no_selection = a.value("no_selection", false);
    }
    if (j.contains("synth")) {
        c.synth_n_docs = j.at("synth").value("n_docs", std::size_t{500});
        c.synth_signal = j.at("synth").value("signal", 0.9);
    }
    if (j.contains("sweep_layers")) c.sweep_layers = j.at("sweep_layers").get<std::vector<int>>();
    c.threads = j.value("threads", 1);
    return c;
}

json RunConfig::to_json() const {
    json j = {
        {"version", 1},
        {"paths",
         {{"corpus", corpus_path},
          {"catalog", catalog_path},
          {"lexicon_dir", lexicon_dir},
          {"out_dir", out_dir},
          {"stage_in_dir", stage_in_dir}}},
        {"scheme", scheme_to_json(scheme)},
        {"selection", {{"threshold", selection_threshold}}},
        {"psyencoder",
         {{"n_layers", psy.n_layers},
          {"n_heads", psy.n_heads},
          {"d_model", psy.d_model},
          {"d_ff", psy.d_ff},
          {"pooling", psy.pooling}}},
        {"fusion", {{"gate_activation", gate_activation}, {"gate_form", gate_form}}},
        {"textencoder",
         {{"variant", text.variant},
          {"vocab_size", text.vocab_size},
          {"d_text", text.d_text},
          {"max_tokens", text.max_tokens},
          {"embedding_file", text.embedding_file}}},
        {"training",
         {{"phase1_epochs", phase1_epochs},
          {"phase2_epochs", phase2_epochs},
          {"lr", lr},
          {"batch_size", batch_size},
          {"seed", seed},
          {"split", {{"train_frac", train_frac}, {"val_frac", val_frac}, {"test_frac", test_frac}}},
          {"stratify_by", stratify_by},
          {"classifier_hidden", classifier_hidden},
          {"per_trait_models", per_trait_models}}},
        {"ablation",
         {{"no_psyencoder", ablation.no_psyencoder},
          {"no_text", ablation.no_text},
          {"no_gate", ablation.no_gate},
          {"no_alignment", ablation.no_alignment},
          {"no_selection", ablation.no_selection}}},
        {"synth", {{"n_docs", synth_n_docs}, {"signal", synth_signal}}},
        {"sweep_layers", sweep_layers},
        {"threads", threads},
    };
    return j;
}

textfeat::FeatureCatalog synthetic_catalog(const corpus::TraitScheme& scheme) {
    textfeat::FeatureCatalog cat;
    cat.version = "synth-1";
    for (const auto& trait : scheme.traits) {
        textfeat::FeatureDef def;
        def.name = corpus::synthetic_lexicon_name(trait) + "_ratio";
        def.kind = textfeat::FeatureKind::LexiconRatio;
        def.lexicon = corpus::synthetic_lexicon_name(trait);
        cat.features.push_back(def);
    }
    auto plain = [&](const char* name, textfeat::FeatureKind kind) {
        textfeat::FeatureDef def;
        def.name = name;
        def.kind = kind;
        cat.features.push_back(def);
    };
    plain("ttr", textfeat::FeatureKind::Ttr);
    {
        textfeat::FeatureDef def;
        def.name = "mattr_20";
        def.kind = textfeat::FeatureKind::Mattr;
        def.window = 20;
        cat.features.push_back(def);
    }
    {
        textfeat::FeatureDef def;
        def.name = "lexical_density_types";
        def.kind = textfeat::FeatureKind::LexicalDensityTypes;
        def.lexicon = "function_words_synth";
        cat.features.push_back(def);
    }
    plain("adjacent_overlap_sent", textfeat::FeatureKind::AdjacentOverlapSent);
    plain("word_count", textfeat::FeatureKind::WordCount);
    plain("mean_word_length", textfeat::FeatureKind::MeanWordLength);
    return cat;
}

void write_synthetic_lexicons(const corpus::TraitScheme& scheme, const std::string& dir) {
    ensure_dir(dir);
    for (const auto& trait : scheme.traits) {
        const std::string name = corpus::synthetic_lexicon_name(trait);
        std::ofstream out(fs::path(dir) / (name + ".txt"), std::ios::binary);
        if (!out) throw DataError("cannot write lexicon " + name);
        for (const auto& w : corpus::synthetic_signal_lexicon(trait)) out << w << '\n';
    }
    std::ofstream out(fs::path(dir) / "function_words_synth.txt", std::ios::binary);
    if (!out) throw DataError("cannot write function_words_synth lexicon");
    const auto& base = corpus::synthetic_base_vocabulary();
    for (std::size_t i = 0; i < 40 && i < base.size(); ++i) out << base[i] << '\n';
}

void stage_synth(const RunConfig& cfg) {
    ensure_dir(cfg.out_dir);
    auto synth = corpus::generate_synthetic(cfg.synth_n_docs, cfg.scheme, cfg.synth_signal, cfg.seed);
    corpus::save_corpus(synth, cfg.out_path("corpus.jsonl"));
    textfeat::save_catalog(synthetic_catalog(cfg.scheme), cfg.out_path("catalog.json"));
    write_synthetic_lexicons(cfg.scheme, cfg.out_path("lexicons"));
}

namespace {

corpus::LabeledCorpus load_corpus_checked(const RunConfig& cfg) {
    if (cfg.corpus_path.empty()) throw ConfigError("config has no corpus path");
    if (!io::file_exists(cfg.corpus_path)) throw DataError("corpus file not found: " + cfg.corpus_path);
    return corpus::load_corpus(cfg.corpus_path, cfg.scheme);
}

textfeat::LexiconSet load_lexicons_checked(const RunConfig& cfg) {
    if (cfg.lexicon_dir.empty()) throw ConfigError("config has no lexicon_dir");
    textfeat::LexiconSet lex;
    lex.load_directory(cfg.lexicon_dir);
    return lex;
}

textfeat::FeatureMatrix load_features(const RunConfig& cfg) {
    const std::string path = cfg.input_path("features.csv");
    require_artifact(path, "extract");
    return textfeat::load_matrix_csv(path);
}

textfeat::FeatureMatrix selected_features(const RunConfig& cfg, const textfeat::FeatureMatrix& full) {
    if (cfg.ablation.no_selection) return full;
    const std::string path = cfg.input_path("selection.json");
    require_artifact(path, "select");
    auto report = featselect::load_report(path);
    return featselect::apply_selection(full, report);
}

corpus::SplitSpec split_spec(const RunConfig& cfg) {
    corpus::SplitSpec spec;
    spec.train_frac = cfg.train_frac;
    spec.val_frac = cfg.val_frac;
    spec.test_frac = cfg.test_frac;
    spec.seed = cfg.seed;
    spec.stratify_by = cfg.stratify_by;
    return spec;
}

std::string safe_name(const std::string& trait) {
    std::string out;
    for (char c : trait)
        out += std::isalnum(static_cast<unsigned char>(c)) ? static_cast<char>(std::tolower(
                                                                 static_cast<unsigned char>(c)))
                                                           : '_';
    return out;
}

std::string trait_model_file(const corpus::TraitScheme& scheme, std::size_t t) {
    return "model_trait_" + safe_name(scheme.traits[t]) + ".json";
}

std::string training_log_csv(const fusion::TrainingLog& log) {
    std::ostringstream csv;
    csv << "epoch,train_loss";
    for (const auto& t : log.traits) csv << ",val_acc_" << t;
    csv << ",val_mean\n";
    for (const auto& row : log.rows) {
        csv << row.epoch << ',' << io::fmt_double(row.train_loss);
        for (double a : row.val_accuracy) csv << ',' << io::fmt_double(a);
        csv << ',' << io::fmt_double(row.val_mean) << '\n';
    }
    return csv.str();
}

void check_seed(const RunConfig& cfg) {
    if (!cfg.seed_set) throw ConfigError("training.seed is mandatory (or pass --seed)");
}

std::vector<std::vector<double>> standardized_rows(const fusion::Model& model,
                                                   const textfeat::FeatureMatrix& selected) {
    std::vector<std::vector<double>> rows(selected.n_docs());
    for (std::size_t i = 0; i < selected.n_docs(); ++i)
        rows[i] = model.standardized_features(selected.rows[i]);
    return rows;
}

} // namespace

void stage_extract(const RunConfig& cfg) {
    ensure_dir(cfg.out_dir);
    auto docs = load_corpus_checked(cfg);
    if (cfg.catalog_path.empty()) throw ConfigError("config has no catalog path");
    if (!io::file_exists(cfg.catalog_path))
        throw DataError("catalog manifest not found: " + cfg.catalog_path);
    auto catalog = textfeat::load_catalog(cfg.catalog_path);
    auto lexicons = load_lexicons_checked(cfg);
    textfeat::validate_catalog(catalog, lexicons);

    textfeat::ExtractionLog log;
    auto matrix = textfeat::extract_corpus(docs, catalog, lexicons, cfg.threads, &log);
    textfeat::save_matrix_csv(matrix, cfg.out_path("features.csv"));

    json jl = {{"n_docs", matrix.n_docs()},
               {"n_features", matrix.n_features()},
               {"empty_docs", log.empty_docs}};
    std::ofstream out(cfg.out_path("extract_log.json"), std::ios::binary);
    out << jl.dump(2) << '\n';
}

void stage_select(const RunConfig& cfg) {
    ensure_dir(cfg.out_dir);
    auto matrix = load_features(cfg);
    auto corr = featselect::pearson(matrix);
    auto report = featselect::select(corr, cfg.selection_threshold);

    // Cross-check the representatives against the reduced data.
    auto reduced = featselect::apply_selection(matrix, report);
    if (reduced.n_features() >= 2) {
        auto reduced_corr = featselect::pearson(reduced);
        featselect::verify_selection(reduced_corr, report);
    }

    featselect::save_correlation_csv(corr, cfg.out_path("correlation.csv"));
    featselect::save_report(report, cfg.out_path("selection.json"));
    featselect::save_kept_list(report, cfg.out_path("kept.txt"));
    featselect::emit_heatmap(corr, cfg.out_path("heatmap.svg"));
}

void stage_align(const RunConfig& cfg) {
    check_seed(cfg);
    ensure_dir(cfg.out_dir);
    auto docs = load_corpus_checked(cfg);
    auto full = load_features(cfg);
    auto selected = selected_features(cfg, full);

    auto split = corpus::split(docs, split_spec(cfg));
    corpus::save_split(docs, split, cfg.out_path("split.json"));

    auto standardizer = featselect::Standardizer::fit(selected, split.train);

    fusion::ModelConfig mc;
    mc.psy = cfg.psy;
    mc.text = cfg.text;
    mc.classifier_hidden = cfg.classifier_hidden;
    mc.gate_activation = cfg.gate_activation;
    mc.gate_form = cfg.gate_form;
    mc.ablation = cfg.ablation;

    Rng rng(cfg.seed);
    auto model = fusion::Model::init(cfg.scheme, mc, docs, split.train, selected.feature_names,
                                     standardizer, rng);

    json metrics = {{"phase1_epochs", 0},
                    {"val_cosine_before", nullptr},
                    {"val_cosine_after", nullptr},
                    {"trained", false}};

    if (!cfg.ablation.no_text && !cfg.ablation.no_alignment) {
        auto std_rows = standardized_rows(model, selected);
        textalign::AlignmentTrainConfig acfg;
        acfg.epochs = cfg.phase1_epochs;
        acfg.lr = cfg.lr;
        acfg.batch_size = cfg.batch_size;
        acfg.seed = cfg.seed + 1;
        auto result = textalign::train_alignment(model.text, model.align_head, docs, split.train,
                                                 split.val, std_rows, acfg);
        metrics["phase1_epochs"] = cfg.phase1_epochs;
        metrics["val_cosine_before"] = result.val_cosine_before;
        metrics["val_cosine_after"] = result.val_cosine_after;
        metrics["trained"] = true;
    } else {
        model.text.frozen = true;
        model.align_head.frozen = true;
    }

    fusion::save_model(model, cfg.out_path("model_phase1.json"));
    std::ofstream out(cfg.out_path("alignment_metrics.json"), std::ios::binary);
    out << metrics.dump(2) << '\n';
}

void stage_train(const RunConfig& cfg) {
    check_seed(cfg);
    ensure_dir(cfg.out_dir);
    auto docs = load_corpus_checked(cfg);
    auto full = load_features(cfg);
    auto selected = selected_features(cfg, full);

    require_artifact(cfg.out_path("model_phase1.json"), "align");
    require_artifact(cfg.out_path("split.json"), "align");
    auto split = corpus::load_split(docs, cfg.out_path("split.json"));

    fusion::Phase2Config pcfg;
    pcfg.epochs = cfg.phase2_epochs;
    pcfg.lr = cfg.lr;
    pcfg.batch_size = cfg.batch_size;
    pcfg.seed = cfg.seed + 2;

    if (cfg.per_trait_models) {
        // One full model copy per trait, each starting from the shared
        // phase-1 checkpoint and trained on its own trait loss.
        for (std::size_t t = 0; t < cfg.scheme.traits.size(); ++t) {
            auto model = fusion::load_model(cfg.out_path("model_phase1.json"));
            if (model.feature_names != selected.feature_names)
                throw DataError("model_phase1.json feature set does not match the selected features");
            auto trait_cfg = pcfg;
            trait_cfg.only_trait = static_cast<int>(t);
            auto log = fusion::train_phase2(model, docs, split, selected, trait_cfg);
            fusion::save_model(model, cfg.out_path(trait_model_file(cfg.scheme, t)));
            std::ofstream out(
                cfg.out_path("training_log_" + safe_name(cfg.scheme.traits[t]) + ".csv"),
                std::ios::binary);
            out << training_log_csv(log);
        }
        return;
    }

    auto model = fusion::load_model(cfg.out_path("model_phase1.json"));
    if (model.feature_names != selected.feature_names)
        throw DataError("model_phase1.json feature set does not match the selected features");
    auto log = fusion::train_phase2(model, docs, split, selected, pcfg);
    fusion::save_model(model, cfg.out_path("model.json"));
    std::ofstream out(cfg.out_path("training_log.csv"), std::ios::binary);
    out << training_log_csv(log);
}

fusion::EvalResult stage_eval(const RunConfig& cfg) {
    ensure_dir(cfg.out_dir);
    auto docs = load_corpus_checked(cfg);
    auto full = load_features(cfg);
    auto selected = selected_features(cfg, full);

    require_artifact(cfg.out_path("split.json"), "align");
    auto split = corpus::load_split(docs, cfg.out_path("split.json"));

    fusion::EvalResult result;
    if (cfg.per_trait_models) {
        result.traits = cfg.scheme.traits;
        double sum = 0.0;
        for (std::size_t t = 0; t < cfg.scheme.traits.size(); ++t) {
            const std::string file = cfg.out_path(trait_model_file(cfg.scheme, t));
            require_artifact(file, "train");
            auto model = fusion::load_model(file);
            auto one = fusion::evaluate(model, docs, split.test, selected);
            result.accuracy.push_back(one.accuracy[t]);
            sum += one.accuracy[t];
        }
        result.mean = sum / static_cast<double>(result.traits.size());
    } else {
        require_artifact(cfg.out_path("model.json"), "train");
        auto model = fusion::load_model(cfg.out_path("model.json"));
        result = fusion::evaluate(model, docs, split.test, selected);
    }

    json per_trait = json::object();
    for (std::size_t t = 0; t < result.traits.size(); ++t)
        per_trait[result.traits[t]] = result.accuracy[t];
    json metrics = {{"scheme", cfg.scheme.name},
                    {"per_trait", per_trait},
                    {"mean", result.mean},
                    {"n_test", split.test.size()}};
    std::ofstream out(cfg.out_path("metrics.json"), std::ios::binary);
    out << metrics.dump(2) << '\n';
    return result;
}

analysis::ImportanceReport stage_importance(const RunConfig& cfg, const std::string& cross_with) {
    ensure_dir(cfg.out_dir);
    auto docs = load_corpus_checked(cfg);
    auto full = load_features(cfg);
    auto selected = selected_features(cfg, full);

    require_artifact(cfg.out_path("split.json"), "align");
    auto split = corpus::load_split(docs, cfg.out_path("split.json"));

    if (cfg.per_trait_models) {
        // One report per trait-specialized model; the last one is returned.
        analysis::ImportanceReport report;
        for (std::size_t t = 0; t < cfg.scheme.traits.size(); ++t) {
            const std::string file = cfg.out_path(trait_model_file(cfg.scheme, t));
            require_artifact(file, "train");
            auto model = fusion::load_model(file);
            report = analysis::attention_importance(model, docs, split.test, selected);
            analysis::save_importance_csv(
                report, cfg.out_path("importance_" + safe_name(cfg.scheme.traits[t]) + ".csv"));
        }
        return report;
    }

    require_artifact(cfg.out_path("model.json"), "train");
    auto model = fusion::load_model(cfg.out_path("model.json"));

    std::vector<nn::Tensor> mean_maps;
    auto report = analysis::attention_importance(model, docs, split.test, selected, &mean_maps);
    analysis::save_importance_csv(report, cfg.out_path("importance.csv"));
    psyenc::save_attention_csv(mean_maps, model.config.psy.n_heads, model.feature_names,
                               cfg.out_path("attention"));

    if (!cross_with.empty()) {
        require_artifact(cross_with, "importance");
        auto other = analysis::load_importance_csv(cross_with);
        auto rows = analysis::cross_report(report, other);
        if (rows.empty())
            std::cerr << "warning: no common features between importance reports\n";
        analysis::save_cross_csv(rows, cfg.out_path("cross_importance.csv"));
    }
    return report;
}

namespace {

// Shared by ablate and sweep: run align+train+eval in a sub-directory that
// reuses the parent's extraction artifacts.
fusion::EvalResult run_variant(RunConfig cfg, const std::string& subdir) {
    cfg.stage_in_dir = cfg.stage_in_dir.empty() ? cfg.out_dir : cfg.stage_in_dir;
    cfg.out_dir = (fs::path(cfg.out_dir) / subdir).string();
    ensure_dir(cfg.out_dir);
    stage_align(cfg);
    stage_train(cfg);
    return stage_eval(cfg);
}

} // namespace

void stage_ablate(const RunConfig& cfg) {
    check_seed(cfg);
    ensure_dir(cfg.out_dir);

    struct Row {
        std::string name;
        fusion::AblationConfig ablation;
    };
    std::vector<Row> rows = {{"full", {}},
                             {"no_psyencoder", {.no_psyencoder = true}},
                             {"no_text", {.no_text = true}},
                             {"no_gate", {.no_gate = true}},
                             {"no_alignment", {.no_alignment = true}},
                             {"no_selection", {.no_selection = true}}};

    std::vector<fusion::EvalResult> results(rows.size());
    auto run_one = [&](std::size_t i) {
        RunConfig sub = cfg;
        sub.ablation = rows[i].ablation;
        results[i] = run_variant(sub, "runs/" + rows[i].name);
    };

    if (cfg.threads > 1) {
        std::vector<std::future<void>> futs;
        for (std::size_t i = 0; i < rows.size(); ++i)
            futs.push_back(std::async(std::launch::async, run_one, i));
        for (auto& f : futs) f.get();
    } else {
        for (std::size_t i = 0; i < rows.size(); ++i) run_one(i);
    }

    std::ostringstream csv;
    csv << "config";
    for (const auto& t : cfg.scheme.traits) csv << ",acc_" << t;
    csv << ",mean\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
        csv << rows[i].name;
        for (double a : results[i].accuracy) csv << ',' << io::fmt_double(a);
        csv << ',' << io::fmt_double(results[i].mean) << '\n';
    }
    std::ofstream out(cfg.out_path("ablation.csv"), std::ios::binary);
    out << csv.str();
}

void stage_sweep(const RunConfig& cfg) {
    check_seed(cfg);
    ensure_dir(cfg.out_dir);

    std::vector<fusion::EvalResult> results(cfg.sweep_layers.size());
    auto run_one = [&](std::size_t i) {
        RunConfig sub = cfg;
        sub.psy.n_layers = cfg.sweep_layers[i];
        results[i] = run_variant(sub, "runs/layers_" + std::to_string(cfg.sweep_layers[i]));
    };

    if (cfg.threads > 1) {
        std::vector<std::future<void>> futs;
        for (std::size_t i = 0; i < cfg.sweep_layers.size(); ++i)
            futs.push_back(std::async(std::launch::async, run_one, i));
        for (auto& f : futs) f.get();
    } else {
        for (std::size_t i = 0; i < cfg.sweep_layers.size(); ++i) run_one(i);
    }

    std::ostringstream csv;
    csv << "layers";
    for (const auto& t : cfg.scheme.traits) csv << ",acc_" << t;
    csv << ",mean\n";
    for (std::size_t i = 0; i < cfg.sweep_layers.size(); ++i) {
        csv << cfg.sweep_layers[i];
        for (double a : results[i].accuracy) csv << ',' << io::fmt_double(a);
        csv << ',' << io::fmt_double(results[i].mean) << '\n';
    }
    std::ofstream out(cfg.out_path("sweep.csv"), std::ios::binary);
    out << csv.str();
}

int run_command(const std::string& command, const RunConfig& cfg, const std::string& cross_with) {
    try {
        ensure_dir(cfg.out_dir);
        {
            json snapshot = cfg.to_json();
            snapshot["command"] = command;
            std::ofstream out(cfg.out_path("resolved_config." + command + ".json"),
                              std::ios::binary);
            out << snapshot.dump(2) << '\n';
        }

        if (command == "synth") {
            if (!cfg.seed_set) throw ConfigError("training.seed is mandatory (or pass --seed)");
            stage_synth(cfg);
        } else if (command == "extract") {
            stage_extract(cfg);
        } else if (command == "select") {
            stage_select(cfg);
        } else if (command == "align") {
            stage_align(cfg);
        } else if (command == "train") {
            stage_train(cfg);
        } else if (command == "eval") {
            stage_eval(cfg);
        } else if (command == "importance") {
            stage_importance(cfg, cross_with);
        } else if (command == "ablate") {
            stage_ablate(cfg);
        } else if (command == "sweep") {
            stage_sweep(cfg);
        } else {
            throw ConfigError("unknown subcommand: " + command);
        }
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}

} // namespace persona::pipeline
