#include "persona/errors.hpp"
#include "persona/fusion.hpp"
#include "persona/textalign.hpp"

#include "helpers.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>

using namespace persona;
using namespace persona::fusion;

namespace {

void zero_params(std::vector<nn::Parameter*> params) {
    for (auto* p : params)
        std::fill(p->value.data.begin(), p->value.data.end(), 0.0);
}

} // namespace

TEST_SUITE_BEGIN("fusion");

TEST_CASE("fused vector length and gate behavior") {
    auto scheme = corpus::TraitScheme{"solo", {"X"}};
    auto s = helpers::make_setup(20, scheme, 0.5, 3);
    auto mc = helpers::tiny_model_config(4, 6);

    SUBCASE("concatenation arithmetic: 4 + 6 = 10") {
        auto model = helpers::make_model(s, mc, 5);
        nn::Tape tape;
        auto b = ModelBinding::bind_inference(tape, model);
        auto w = model.standardized_features(s.features.rows[0]);
        nn::Var f = b.fused(tape, s.docs.docs[0], w);
        CHECK(tape.value(f).cols() == 10);
        CHECK(model.fused_dim() == 10);
    }

    SUBCASE("zero gate denses scale both halves by sigmoid(0) = 0.5") {
        auto model = helpers::make_model(s, mc, 5);
        zero_params({&model.fusion.gate_psy_w, &model.fusion.gate_psy_b,
                     &model.fusion.gate_text_w, &model.fusion.gate_text_b});

        auto no_gate_model = model;
        no_gate_model.config.ablation.no_gate = true;

        auto w = model.standardized_features(s.features.rows[0]);
        nn::Tape t1, t2;
        auto gated = t1.value(
            ModelBinding::bind_inference(t1, model).fused(t1, s.docs.docs[0], w));
        auto plain = t2.value(
            ModelBinding::bind_inference(t2, no_gate_model).fused(t2, s.docs.docs[0], w));
        REQUIRE(gated.size() == plain.size());
        for (std::size_t i = 0; i < gated.size(); ++i)
            CHECK(gated.data[i] == doctest::Approx(0.5 * plain.data[i]));
    }

    SUBCASE("gate outputs stay in (0,1): gated magnitude never exceeds plain") {
        auto model = helpers::make_model(s, mc, 6);
        auto no_gate_model = model;
        no_gate_model.config.ablation.no_gate = true;
        auto w = model.standardized_features(s.features.rows[1]);
        nn::Tape t1, t2;
        auto gated = t1.value(
            ModelBinding::bind_inference(t1, model).fused(t1, s.docs.docs[1], w));
        auto plain = t2.value(
            ModelBinding::bind_inference(t2, no_gate_model).fused(t2, s.docs.docs[1], w));
        for (std::size_t i = 0; i < gated.size(); ++i) {
            CHECK(std::abs(gated.data[i]) < std::abs(plain.data[i]) + 1e-12);
            if (plain.data[i] != 0.0)
                CHECK(gated.data[i] / plain.data[i] > 0.0); // same sign, gate in (0,1)
        }
    }

    SUBCASE("linear gate variant removes the sigmoid bound") {
        auto linear_mc = mc;
        linear_mc.gate_activation = "linear";
        auto model = helpers::make_model(s, linear_mc, 5);
        zero_params({&model.fusion.gate_psy_w, &model.fusion.gate_text_w});
        // zero weights, zero bias: linear gate is 0 everywhere -> fused is 0
        auto w = model.standardized_features(s.features.rows[0]);
        nn::Tape tape;
        auto fused = tape.value(
            ModelBinding::bind_inference(tape, model).fused(tape, s.docs.docs[0], w));
        for (double v : fused.data) CHECK(v == 0.0);
    }

    SUBCASE("scalar gate scales each half uniformly") {
        auto scalar_mc = mc;
        scalar_mc.gate_form = "scalar";
        auto model = helpers::make_model(s, scalar_mc, 5);
        CHECK(model.fusion.gate_psy_w.value.cols() == 1);

        auto no_gate_model = model;
        no_gate_model.config.ablation.no_gate = true;
        auto w = model.standardized_features(s.features.rows[0]);
        nn::Tape t1, t2;
        auto gated = t1.value(
            ModelBinding::bind_inference(t1, model).fused(t1, s.docs.docs[0], w));
        auto plain = t2.value(
            ModelBinding::bind_inference(t2, no_gate_model).fused(t2, s.docs.docs[0], w));
        // within one modality every component shares the same gate value
        const double r0 = gated.data[0] / plain.data[0];
        for (int j = 1; j < 4; ++j) CHECK(gated.data[j] / plain.data[j] == doctest::Approx(r0));
        CHECK(r0 > 0.0);
        CHECK(r0 < 1.0);
    }

    SUBCASE("invalid gate options rejected") {
        auto bad = mc;
        bad.gate_activation = "tanh";
        CHECK_THROWS_AS(helpers::make_model(s, bad, 5), ConfigError);
        bad = mc;
        bad.gate_form = "matrix";
        CHECK_THROWS_AS(helpers::make_model(s, bad, 5), ConfigError);
    }

    SUBCASE("single-path ablations produce that half only") {
        auto psy_only = mc;
        psy_only.ablation.no_text = true;
        auto m1 = helpers::make_model(s, psy_only, 5);
        CHECK(m1.fused_dim() == 4);

        auto text_only = mc;
        text_only.ablation.no_psyencoder = true;
        auto m2 = helpers::make_model(s, text_only, 5);
        CHECK(m2.fused_dim() == 6);
    }

    SUBCASE("disabling both paths is a configuration error") {
        AblationConfig both;
        both.no_psyencoder = true;
        both.no_text = true;
        CHECK_THROWS_AS(both.validate(), ConfigError);
    }
}

TEST_CASE("classify returns one probability pair per trait, each summing to 1") {
    auto scheme = corpus::TraitScheme::big_five();
    auto s = helpers::make_setup(20, scheme, 0.5, 4);
    auto model = helpers::make_model(s, helpers::tiny_model_config(), 7);

    auto probs = classify(model, s.docs.docs[0], s.features.rows[0]);
    REQUIRE(probs.size() == 5);
    for (auto [p0, p1] : probs) {
        CHECK(std::abs(p0 + p1 - 1.0) < 1e-9);
        CHECK(p0 > 0.0);
        CHECK(p1 > 0.0);
    }

    SUBCASE("zeroed head gives (0.5, 0.5)") {
        auto zeroed = model;
        for (auto& h : zeroed.heads) zero_params({&h.w1, &h.b1, &h.w2, &h.b2});
        auto p = classify(zeroed, s.docs.docs[0], s.features.rows[0]);
        CHECK(p[0].first == doctest::Approx(0.5));
        CHECK(p[0].second == doctest::Approx(0.5));
    }
}

TEST_CASE("phase 2 training") {
    auto scheme = corpus::TraitScheme{"solo", {"X"}};
    auto s = helpers::make_setup(120, scheme, 0.9, 11);
    auto mc = helpers::tiny_model_config();
    auto model = helpers::make_model(s, mc, 13);

    // Phase 1 first, as the protocol requires.
    auto targets = helpers::standardized_targets(s, model);
    textalign::AlignmentTrainConfig acfg;
    acfg.epochs = 4;
    acfg.lr = 5e-3;
    acfg.seed = 14;
    textalign::train_alignment(model.text, model.align_head, s.docs, s.split.train, s.split.val,
                               targets, acfg);

    SUBCASE("unfrozen text encoder is rejected") {
        auto fresh = helpers::make_model(s, mc, 13);
        REQUIRE_FALSE(fresh.text.frozen);
        Phase2Config pcfg;
        CHECK_THROWS_AS(train_phase2(fresh, s.docs, s.split, s.features, pcfg), ConfigError);
    }

    SUBCASE("training learns the planted signal and freezes text params") {
        const auto text_before = model.text.embeddings.value.data;
        const auto head_before = model.align_head.w.value.data;

        Phase2Config pcfg;
        pcfg.epochs = 10;
        pcfg.lr = 3e-3;
        pcfg.seed = 15;
        auto log = train_phase2(model, s.docs, s.split, s.features, pcfg);
        REQUIRE(log.rows.size() == 10);
        CHECK(log.best_epoch >= 0);

        // frozen parameters bit-identical through ten epochs
        CHECK(model.text.embeddings.value.data == text_before);
        CHECK(model.align_head.w.value.data == head_before);

        auto result = evaluate(model, s.docs, s.split.test, s.features);
        CHECK(result.mean > 0.7);

        // evaluation is pure
        auto again = evaluate(model, s.docs, s.split.test, s.features);
        CHECK(result.accuracy == again.accuracy);
    }

    SUBCASE("same seed gives identical loss curves") {
        auto run = [&](std::uint64_t seed) {
            auto m = helpers::make_model(s, mc, 13);
            auto t = helpers::standardized_targets(s, m);
            textalign::AlignmentTrainConfig ac;
            ac.epochs = 2;
            ac.seed = 14;
            textalign::train_alignment(m.text, m.align_head, s.docs, s.split.train, s.split.val, t,
                                       ac);
            Phase2Config pc;
            pc.epochs = 4;
            pc.seed = seed;
            auto log = train_phase2(m, s.docs, s.split, s.features, pc);
            std::vector<double> losses;
            for (const auto& r : log.rows) losses.push_back(r.train_loss);
            return losses;
        };
        CHECK(run(77) == run(77));
    }
}

TEST_CASE("evaluate edge cases") {
    auto scheme = corpus::TraitScheme{"solo", {"X"}};
    auto s = helpers::make_setup(20, scheme, 0.5, 21);
    auto model = helpers::make_model(s, helpers::tiny_model_config(), 22);

    SUBCASE("empty test set errors") {
        CHECK_THROWS_AS(evaluate(model, s.docs, {}, s.features), DataError);
    }

    SUBCASE("constant predictor scores the label base rate") {
        auto zeroed = model;
        for (auto& h : zeroed.heads) zero_params({&h.w1, &h.b1, &h.w2, &h.b2});
        // logits (0,0) everywhere -> always predicts class 0
        std::vector<std::size_t> idx;
        std::size_t zeros = 0;
        for (std::size_t i = 0; i < s.docs.size() && idx.size() < 10; ++i) {
            const int y = s.docs.docs[i].labels.at("X");
            if (y == 0 && zeros >= 5) continue;
            zeros += y == 0;
            idx.push_back(i);
        }
        REQUIRE(idx.size() == 10);
        auto result = evaluate(zeroed, s.docs, idx, s.features);
        CHECK(result.accuracy[0] == doctest::Approx(0.5));
    }
}

TEST_CASE("checkpoint round-trip preserves behavior") {
    auto scheme = corpus::TraitScheme{"solo", {"X"}};
    auto s = helpers::make_setup(30, scheme, 0.7, 31);
    auto model = helpers::make_model(s, helpers::tiny_model_config(), 32);
    model.text.frozen = true;
    model.align_head.frozen = true;

    auto path = (std::filesystem::temp_directory_path() / "ckpt_rt.json").string();
    save_model(model, path);
    auto back = load_model(path);

    CHECK(back.scheme.traits == model.scheme.traits);
    CHECK(back.feature_names == model.feature_names);
    CHECK(back.text.frozen);
    CHECK(back.align_head.frozen);
    CHECK(back.text.vocab.index == model.text.vocab.index);

    for (std::size_t i = 0; i < s.docs.size(); ++i) {
        auto a = classify(model, s.docs.docs[i], s.features.rows[i]);
        auto b = classify(back, s.docs.docs[i], s.features.rows[i]);
        REQUIRE(a.size() == b.size());
        for (std::size_t t = 0; t < a.size(); ++t) {
            CHECK(a[t].first == b[t].first);
            CHECK(a[t].second == b[t].second);
        }
    }
}

TEST_SUITE_END();
